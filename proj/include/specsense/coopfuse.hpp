#pragma once

// Cooperative sensing: k nodes observe one transmitter through independent
// Rayleigh channels, each runs a local detector, and a fusion center combines
// either hard decisions or the nodes' softmax pairs (SoftCombinationNet).

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "specsense/detectnet.hpp"
#include "specsense/sigmod.hpp"
#include "specsense/types.hpp"

namespace specsense::coopfuse {

enum class FusionRule : std::uint8_t { LogicalOr, LogicalAnd, Majority, Scn };

[[nodiscard]] std::string_view to_string(FusionRule rule);
/// Accepts "or"/"and"/"majority"/"scn" in any case, and the LOGICAL_OR style names.
[[nodiscard]] FusionRule rule_from_string(std::string_view name);

struct CoopExample {
  std::vector<ProbPair> node_probs;
  Hypothesis label = Hypothesis::H0;
  double snr_db = 0.0;

  [[nodiscard]] std::size_t k() const noexcept { return node_probs.size(); }
};

struct CoopDataset {
  std::vector<CoopExample> train;
  std::vector<CoopExample> val;
  std::vector<CoopExample> test;
};

/// The raw per-node observations behind one cooperative example.
struct CoopFrames {
  std::vector<sigmod::IQFrame> nodes;  // energy-normalized, f32-rounded
  std::vector<sigmod::Complex> gains;  // h_k, empty under H0
  Hypothesis label = Hypothesis::H0;
  double snr_db = 0.0;
};

/// Node frames for one split. Labels, schemes and SNRs follow plan_split of
/// `base`; randomness comes from a stream disjoint from the single-node
/// dataset's. Under H1 all nodes share one transmitted frame s and node j sees
/// h_j s + w_j, h_j ~ CN(0, 1), with noise variance set by the nominal
/// (pre-fading) SNR. Under H0 node j sees unit-variance noise.
[[nodiscard]] std::vector<CoopFrames> synth_coop_frames(const sigmod::DatasetSpec& base, std::size_t k,
                                                        sigmod::Split split, unsigned threads = 1);

/// Runs node j's detector on node j's frames. `models` holds either one
/// shared detector or exactly one per node.
template <typename T>
[[nodiscard]] std::vector<CoopExample> node_probabilities(std::span<const detectnet::DetectNet<T>> models,
                                                          const std::vector<CoopFrames>& frames);

template <typename T>
[[nodiscard]] CoopDataset synth_coop_dataset(const sigmod::DatasetSpec& base, std::size_t k,
                                             std::span<const detectnet::DetectNet<T>> models, unsigned threads = 1);

/// Hard-decision fusion. MAJORITY needs strictly more than k/2 votes.
/// Throws ValidationError for FusionRule::Scn or an empty vote.
[[nodiscard]] Hypothesis fuse_hard(FusionRule rule, std::span<const Hypothesis> decisions);

// --- SoftCombinationNet --------------------------------------------------------

struct SCNConfig {
  std::size_t k = 2;
  std::size_t hidden1 = 32;
  std::size_t hidden2 = 8;
  std::size_t out_units = 2;
  double dropout = 0.2;
  double learning_rate = 3e-4;
  std::size_t batch_size = 200;

  [[nodiscard]] std::size_t input_width() const noexcept { return 2 * k; }
  void validate() const;
};

[[nodiscard]] nlohmann::json to_json(const SCNConfig& c);
[[nodiscard]] SCNConfig scn_config_from_json(const nlohmann::json& j);

/// DENSE(hidden1)+ReLU+Dropout, DENSE(hidden2)+ReLU+Dropout, DENSE(2)+SOFTMAX.
[[nodiscard]] std::vector<nn::LayerSpec> scn_layers(const SCNConfig& config);

template <typename T>
struct ScnModel {
  SCNConfig config;
  std::uint64_t seed = 0;
  nn::Network<T> network;
};

template <typename T>
[[nodiscard]] ScnModel<T> scn_build(const SCNConfig& config, std::uint64_t seed);

/// Flattens node pairs as [p0_1, p1_1, p0_2, p1_2, ...].
template <typename T>
[[nodiscard]] detectnet::ExampleSet<T> coop_to_examples(const std::vector<CoopExample>& examples);

template <typename T>
struct ScnTrainResult {
  ScnModel<T> model;
  std::size_t epoch = 0;
  detectnet::EpochMetrics metrics;
  bool out_of_interval = false;
  std::vector<detectnet::EpochMetrics> history;  // stage 1 then stage 2
};

/// Builds an SCN and trains it with the two-stage policy.
template <typename T>
[[nodiscard]] ScnTrainResult<T> scn_build_train(const SCNConfig& config, const std::vector<CoopExample>& train,
                                                const std::vector<CoopExample>& val,
                                                const detectnet::StopPolicy& policy, std::uint64_t seed,
                                                const detectnet::EpochCallback& on_epoch = {});

template <typename T>
[[nodiscard]] ProbPair scn_infer(const ScnModel<T>& model, const CoopExample& example);

/// Fused curve for a hard rule.
[[nodiscard]] DetectionCurve coop_curve(FusionRule rule, const std::vector<CoopExample>& test);
/// Fused curve for any rule; `scn` is required for FusionRule::Scn.
template <typename T>
[[nodiscard]] DetectionCurve coop_curve(FusionRule rule, const std::vector<CoopExample>& test,
                                        const ScnModel<T>* scn);

template <typename T>
void save_scn(const std::filesystem::path& path, const ScnModel<T>& model, const nlohmann::json& extra = {});
template <typename T>
[[nodiscard]] ScnModel<T> load_scn(const std::filesystem::path& path);

// --- SPCE files ------------------------------------------------------------------

inline constexpr std::uint16_t kCoopFormatVersion = 1;

void write_coop_examples(std::ostream& out, const std::vector<CoopExample>& examples,
                         const nlohmann::json& extra = nlohmann::json::object());
void write_coop_examples(const std::filesystem::path& path, const std::vector<CoopExample>& examples,
                         const nlohmann::json& extra = nlohmann::json::object());

struct CoopFile {
  nlohmann::json header;
  std::vector<CoopExample> examples;
};
[[nodiscard]] CoopFile read_coop_examples(std::istream& in);
[[nodiscard]] CoopFile read_coop_examples(const std::filesystem::path& path);

}  // namespace specsense::coopfuse
