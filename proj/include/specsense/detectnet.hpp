#pragma once

// The CLDNN detector: architecture, inference and the two-stage training
// strategy (early stopping on validation loss, then continued training until
// validation Pf falls into a preset interval).

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "specsense/sigmod.hpp"
#include "specsense/tensornet/adam.hpp"
#include "specsense/tensornet/network.hpp"
#include "specsense/types.hpp"

namespace specsense::detectnet {

struct DetectNetConfig {
  std::size_t sample_length = 128;
  std::size_t conv_filters = 60;
  std::size_t kernel = 10;
  std::size_t lstm_cells = 128;
  std::size_t fc1_units = 128;
  std::size_t out_units = 2;
  double dropout = 0.2;
  double learning_rate = 3e-4;
  std::size_t batch_size = 200;

  /// Width of the first dense layer after the LSTM stack; tied to the sample length.
  [[nodiscard]] std::size_t fc2_units() const noexcept { return sample_length; }
  void validate() const;
};

[[nodiscard]] nlohmann::json to_json(const DetectNetConfig& c);
[[nodiscard]] DetectNetConfig detectnet_config_from_json(const nlohmann::json& j);

struct StopPolicy {
  std::size_t stage1_patience = 6;
  std::size_t stage1_max_epochs = 100;
  double pf_low = 0.07;
  double pf_high = 0.09;
  std::size_t stage2_max_epochs = 50;

  void validate() const;
  [[nodiscard]] bool pf_in_interval(double pf) const noexcept { return pf >= pf_low && pf <= pf_high; }
  [[nodiscard]] double distance_to_interval(double pf) const noexcept;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  double pf = 0.0;
  std::map<double, double> pd_by_snr;
};

[[nodiscard]] nlohmann::json to_json(const EpochMetrics& m);

/// Inputs flattened per example plus labels and nominal SNRs. DetectNet
/// examples are [N, 2] (time-major I/Q); fusion examples are [2k].
template <typename T>
struct ExampleSet {
  nn::Shape example_shape;
  std::vector<T> inputs;
  std::vector<int> labels;
  std::vector<double> snr_db;

  [[nodiscard]] std::size_t size() const noexcept { return labels.size(); }
  [[nodiscard]] std::size_t example_size() const noexcept { return nn::element_count(example_shape); }
  [[nodiscard]] nn::Tensor<T> batch(std::span<const std::size_t> indices) const;
  [[nodiscard]] nn::Tensor<T> batch_range(std::size_t begin, std::size_t end) const;
  void push_back(std::span<const T> input, Hypothesis label, double snr);
};

/// [1, N, 2] tensor of a frame's I/Q samples.
template <typename T>
[[nodiscard]] nn::Tensor<T> frame_tensor(const sigmod::IQFrame& frame);

template <typename T>
[[nodiscard]] ExampleSet<T> frames_to_examples(const std::vector<sigmod::LabeledFrame>& frames);

/// conv, conv, time-distributed dense, LSTM (sequence), LSTM (final state),
/// dense(N), dense(2) + softmax; ReLU on conv/dense layers, dropout after every layer.
[[nodiscard]] std::vector<nn::LayerSpec> detectnet_layers(const DetectNetConfig& config);

template <typename T>
struct DetectNet {
  DetectNetConfig config;
  std::uint64_t seed = 0;
  nn::Network<T> network;
};

template <typename T>
[[nodiscard]] DetectNet<T> build(const DetectNetConfig& config, std::uint64_t seed);

/// Eval-mode softmax pair for an energy-normalized frame.
template <typename T>
[[nodiscard]] ProbPair infer(const DetectNet<T>& model, const sigmod::IQFrame& frame);

/// Normalizes the frame first, so any positive scaling of the input gives the same result.
template <typename T>
[[nodiscard]] ProbPair detect(const DetectNet<T>& model, const sigmod::IQFrame& raw_frame);

/// Eval-mode probability pairs for every example, in batches.
template <typename T>
[[nodiscard]] std::vector<ProbPair> predict_pairs(const nn::Network<T>& network, const ExampleSet<T>& examples,
                                                  std::size_t batch_size = 500);

/// Validation loss, accuracy, aggregate Pf and Pd per SNR.
template <typename T>
[[nodiscard]] EpochMetrics epoch_metrics(const nn::Network<T>& network, const ExampleSet<T>& validation,
                                         std::size_t epoch = 0);

/// Same tally as epoch_metrics, packaged as a curve.
template <typename T>
[[nodiscard]] DetectionCurve dl_curve(const nn::Network<T>& network, const ExampleSet<T>& test,
                                      std::string detector_id = "detectnet");

// --- training ----------------------------------------------------------------

struct TrainingOptions {
  nn::AdamConfig adam{};
  std::size_t batch_size = 200;
  std::uint64_t seed = 0;  // drives shuffling and dropout masks
};

template <typename T>
struct Checkpoint {
  nn::Network<T> network;
  nn::AdamState<T> optimizer;
  std::size_t epoch = 0;  // training epochs applied since initialization
  EpochMetrics metrics;
};

template <typename T>
struct Stage1Result {
  Checkpoint<T> best;
  Checkpoint<T> last;
  std::vector<EpochMetrics> history;
};

template <typename T>
struct Stage2Result {
  Checkpoint<T> checkpoint;
  bool out_of_interval = false;
  std::vector<EpochMetrics> history;
};

using EpochCallback = std::function<void(std::string_view stage, const EpochMetrics&)>;

/// Patience bookkeeping: stop once `patience` consecutive epochs fail to improve on the best loss.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience, double initial_best) : patience_(patience), best_(initial_best) {}
  /// Records one epoch's loss; returns true when training should stop.
  bool update(double loss);
  [[nodiscard]] double best() const noexcept { return best_; }
  [[nodiscard]] std::size_t epochs_without_improvement() const noexcept { return stale_; }

 private:
  std::size_t patience_;
  double best_;
  std::size_t stale_ = 0;
};

/// One pass over the shuffled training set; returns the mean training loss.
/// Throws RuntimeFailure on a non-finite loss.
template <typename T>
double train_epoch(nn::Network<T>& network, nn::AdamState<T>& optimizer, const ExampleSet<T>& train,
                   const TrainingOptions& options, std::size_t epoch);

/// Minibatch Adam with early stopping on validation loss. Epoch 0 (the
/// untrained model) is evaluated and competes for best.
template <typename T>
[[nodiscard]] Stage1Result<T> train_stage1(const nn::Network<T>& initial, const ExampleSet<T>& train,
                                           const ExampleSet<T>& validation, const StopPolicy& policy,
                                           const TrainingOptions& options, const EpochCallback& on_epoch = {});

/// Continues from `start` until validation Pf lies in [pf_low, pf_high]; on
/// exhaustion returns the epoch closest to the interval with the flag set.
template <typename T>
[[nodiscard]] Stage2Result<T> train_stage2(const Checkpoint<T>& start, const ExampleSet<T>& train,
                                           const ExampleSet<T>& validation, const StopPolicy& policy,
                                           const TrainingOptions& options, const EpochCallback& on_epoch = {});

// --- persistence ---------------------------------------------------------------

template <typename T>
void save_model(const std::filesystem::path& path, const DetectNet<T>& model, const nlohmann::json& extra = {});
template <typename T>
[[nodiscard]] DetectNet<T> load_model(const std::filesystem::path& path);

}  // namespace specsense::detectnet
