#include "specsense/coopfuse.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>
#include <thread>

#include "specsense/binary_io.hpp"
#include "specsense/tensornet/checkpoint.hpp"

namespace specsense::coopfuse {

namespace {

constexpr std::uint64_t kCoopStreamTag = 0xC0C0'0000'0000'0000ULL;

double round_to_f32(double x) { return static_cast<double>(static_cast<float>(x)); }

sigmod::IQFrame finish_frame(const sigmod::IQFrame& received) {
  auto f = sigmod::energy_normalize(received);
  for (auto& s : f.samples) s = {round_to_f32(s.real()), round_to_f32(s.imag())};
  return f;
}

CoopFrames synth_one(const sigmod::DatasetSpec& spec, const sigmod::FramePlan& plan, std::size_t k,
                     std::size_t global_index) {
  const RngStream base = RngStream(spec.seed).substream(kCoopStreamTag).substream(global_index);
  RngStream signal = base.substream(1);
  const RngStream channels = base.substream(2);
  const RngStream noises = base.substream(3);

  CoopFrames out;
  out.label = plan.label;
  out.snr_db = plan.snr_db;
  if (plan.label == Hypothesis::H1) {
    if (!plan.mod) throw ValidationError("H1 frame plan without modulation");
    const auto clean =
        sigmod::modulated_frame(*plan.mod, spec.sample_length, spec.samples_per_symbol, spec.pulse, spec.fsk, signal);
    const double noise_var = clean.power() / std::pow(10.0, plan.snr_db / 10.0);
    for (std::size_t j = 0; j < k; ++j) {
      RngStream ch = channels.substream(j);
      RngStream nz = noises.substream(j);
      const auto h = ch.complex_normal(1.0);
      auto y = sigmod::cscg_noise(spec.sample_length, noise_var, nz);
      for (std::size_t n = 0; n < y.size(); ++n) y.samples[n] += h * clean.samples[n];
      out.gains.push_back(h);
      out.nodes.push_back(finish_frame(y));
    }
  } else {
    for (std::size_t j = 0; j < k; ++j) {
      RngStream nz = noises.substream(j);
      out.nodes.push_back(finish_frame(sigmod::cscg_noise(spec.sample_length, 1.0, nz)));
    }
  }
  return out;
}

}  // namespace

std::string_view to_string(FusionRule rule) {
  switch (rule) {
    case FusionRule::LogicalOr: return "LOGICAL_OR";
    case FusionRule::LogicalAnd: return "LOGICAL_AND";
    case FusionRule::Majority: return "MAJORITY";
    case FusionRule::Scn: return "SCN";
  }
  return "?";
}

FusionRule rule_from_string(std::string_view name) {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
  if (s == "OR" || s == "LOGICAL_OR" || s == "LO") return FusionRule::LogicalOr;
  if (s == "AND" || s == "LOGICAL_AND") return FusionRule::LogicalAnd;
  if (s == "MAJORITY") return FusionRule::Majority;
  if (s == "SCN") return FusionRule::Scn;
  throw ValidationError("unknown fusion rule '" + std::string(name) + "'");
}

std::vector<CoopFrames> synth_coop_frames(const sigmod::DatasetSpec& base, std::size_t k, sigmod::Split split,
                                          unsigned threads) {
  require(k >= 1, "cooperative setup needs at least one node");
  const auto plan = sigmod::plan_split(base, split);
  const std::size_t offset = sigmod::split_offset(base, split);
  std::vector<CoopFrames> out(plan.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) out[i] = synth_one(base, plan[i], k, offset + i);
  };
  threads = std::max(1u, threads);
  if (threads == 1) {
    work(0, plan.size());
    return out;
  }
  {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (plan.size() + threads - 1) / threads;
    for (std::size_t begin = 0; begin < plan.size(); begin += chunk)
      pool.emplace_back(work, begin, std::min(plan.size(), begin + chunk));
  }
  return out;
}

template <typename T>
std::vector<CoopExample> node_probabilities(std::span<const detectnet::DetectNet<T>> models,
                                            const std::vector<CoopFrames>& frames) {
  require(!models.empty(), "no node models given");
  std::vector<CoopExample> out(frames.size());
  if (frames.empty()) return out;
  const std::size_t k = frames.front().nodes.size();
  require(models.size() == 1 || models.size() == k, "need one shared node model or exactly one per node");
  for (std::size_t i = 0; i < frames.size(); ++i) {
    require(frames[i].nodes.size() == k, "examples with differing node counts");
    out[i].label = frames[i].label;
    out[i].snr_db = frames[i].snr_db;
    out[i].node_probs.resize(k);
  }
  for (std::size_t j = 0; j < k; ++j) {
    const auto& model = models[models.size() == 1 ? 0 : j];
    detectnet::ExampleSet<T> set;
    set.example_shape = {model.config.sample_length, 2};
    set.inputs.reserve(frames.size() * model.config.sample_length * 2);
    for (const auto& f : frames) {
      if (f.nodes[j].size() != model.config.sample_length)
        throw ValidationError("node frame length does not match the node model's sample length");
      const auto t = detectnet::frame_tensor<T>(f.nodes[j]);
      set.push_back(t.values(), f.label, f.snr_db);
    }
    const auto pairs = detectnet::predict_pairs(model.network, set);
    for (std::size_t i = 0; i < frames.size(); ++i) out[i].node_probs[j] = pairs[i];
  }
  return out;
}

template <typename T>
CoopDataset synth_coop_dataset(const sigmod::DatasetSpec& base, std::size_t k,
                               std::span<const detectnet::DetectNet<T>> models, unsigned threads) {
  for (const auto& m : models)
    require(m.config.sample_length == base.sample_length, "node model sample length differs from the dataset's");
  CoopDataset d;
  d.train = node_probabilities(models, synth_coop_frames(base, k, sigmod::Split::Train, threads));
  d.val = node_probabilities(models, synth_coop_frames(base, k, sigmod::Split::Validation, threads));
  d.test = node_probabilities(models, synth_coop_frames(base, k, sigmod::Split::Test, threads));
  return d;
}

Hypothesis fuse_hard(FusionRule rule, std::span<const Hypothesis> decisions) {
  require(!decisions.empty(), "fusion needs at least one node decision");
  const auto votes =
      static_cast<std::size_t>(std::count(decisions.begin(), decisions.end(), Hypothesis::H1));
  switch (rule) {
    case FusionRule::LogicalOr: return votes > 0 ? Hypothesis::H1 : Hypothesis::H0;
    case FusionRule::LogicalAnd: return votes == decisions.size() ? Hypothesis::H1 : Hypothesis::H0;
    case FusionRule::Majority: return 2 * votes > decisions.size() ? Hypothesis::H1 : Hypothesis::H0;
    case FusionRule::Scn: break;
  }
  throw ValidationError("SCN is not a hard-decision rule");
}

// --- SCN ---------------------------------------------------------------------------

void SCNConfig::validate() const {
  require(k >= 1, "SCN needs at least one node");
  require(hidden1 > 0 && hidden2 > 0, "SCN layer widths must be positive");
  require(out_units == 2, "SCN has exactly two output units");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
  require(learning_rate > 0.0 && batch_size > 0, "learning rate and batch size must be positive");
}

nlohmann::json to_json(const SCNConfig& c) {
  return {{"k", c.k},
          {"hidden1", c.hidden1},
          {"hidden2", c.hidden2},
          {"out_units", c.out_units},
          {"dropout", c.dropout},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size}};
}

SCNConfig scn_config_from_json(const nlohmann::json& j) {
  SCNConfig c;
  c.k = j.at("k").get<std::size_t>();
  c.hidden1 = j.value("hidden1", c.hidden1);
  c.hidden2 = j.value("hidden2", c.hidden2);
  c.out_units = j.value("out_units", c.out_units);
  c.dropout = j.value("dropout", c.dropout);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.validate();
  return c;
}

std::vector<nn::LayerSpec> scn_layers(const SCNConfig& c) {
  c.validate();
  using nn::LayerSpec;
  return {
      LayerSpec::dense("fc1", c.input_width(), c.hidden1), LayerSpec::relu("fc1_relu"),
      LayerSpec::dropout("fc1_dropout", c.dropout),        LayerSpec::dense("fc2", c.hidden1, c.hidden2),
      LayerSpec::relu("fc2_relu"),                         LayerSpec::dropout("fc2_dropout", c.dropout),
      LayerSpec::dense("fc3", c.hidden2, c.out_units),     LayerSpec::softmax("fc3_softmax"),
  };
}

template <typename T>
ScnModel<T> scn_build(const SCNConfig& config, std::uint64_t seed) {
  return {config, seed, nn::Network<T>::initialize(scn_layers(config), seed)};
}

template <typename T>
detectnet::ExampleSet<T> coop_to_examples(const std::vector<CoopExample>& examples) {
  detectnet::ExampleSet<T> set;
  require(!examples.empty(), "no cooperative examples");
  const std::size_t k = examples.front().k();
  set.example_shape = {2 * k};
  std::vector<T> row(2 * k);
  for (const auto& e : examples) {
    require(e.k() == k, "examples with differing node counts");
    for (std::size_t j = 0; j < k; ++j) {
      row[2 * j] = static_cast<T>(e.node_probs[j].p0);
      row[2 * j + 1] = static_cast<T>(e.node_probs[j].p1);
    }
    set.push_back(row, e.label, e.snr_db);
  }
  return set;
}

template <typename T>
ScnTrainResult<T> scn_build_train(const SCNConfig& config, const std::vector<CoopExample>& train,
                                  const std::vector<CoopExample>& val, const detectnet::StopPolicy& policy,
                                  std::uint64_t seed, const detectnet::EpochCallback& on_epoch) {
  auto model = scn_build<T>(config, seed);
  const auto tr = coop_to_examples<T>(train);
  const auto va = coop_to_examples<T>(val);
  require(tr.example_size() == config.input_width() && va.example_size() == config.input_width(),
          "cooperative examples do not match the SCN node count");
  detectnet::TrainingOptions opt;
  opt.adam.learning_rate = config.learning_rate;
  opt.batch_size = config.batch_size;
  opt.seed = seed;
  auto s1 = detectnet::train_stage1(model.network, tr, va, policy, opt, on_epoch);
  auto s2 = detectnet::train_stage2(s1.best, tr, va, policy, opt, on_epoch);
  ScnTrainResult<T> r;
  r.history = std::move(s1.history);
  r.history.insert(r.history.end(), s2.history.begin(), s2.history.end());
  model.network = std::move(s2.checkpoint.network);
  r.model = std::move(model);
  r.epoch = s2.checkpoint.epoch;
  r.metrics = s2.checkpoint.metrics;
  r.out_of_interval = s2.out_of_interval;
  return r;
}

template <typename T>
ProbPair scn_infer(const ScnModel<T>& model, const CoopExample& example) {
  if (example.k() != model.config.k) {
    throw ValidationError("example has " + std::to_string(example.k()) + " nodes; SCN expects " +
                          std::to_string(model.config.k));
  }
  nn::Tensor<T> x({1, 2 * example.k()});
  for (std::size_t j = 0; j < example.k(); ++j) {
    x[2 * j] = static_cast<T>(example.node_probs[j].p0);
    x[2 * j + 1] = static_cast<T>(example.node_probs[j].p1);
  }
  const auto out = model.network.predict(x);
  return {static_cast<double>(out[0]), static_cast<double>(out[1])};
}

DetectionCurve coop_curve(FusionRule rule, const std::vector<CoopExample>& test) {
  std::vector<Hypothesis> labels, decisions;
  std::vector<double> snr;
  std::vector<Hypothesis> votes;
  for (const auto& e : test) {
    votes.clear();
    for (const auto& p : e.node_probs) votes.push_back(decide(p));
    decisions.push_back(fuse_hard(rule, votes));
    labels.push_back(e.label);
    snr.push_back(e.snr_db);
  }
  return tally_curve(std::string(to_string(rule)), labels, snr, decisions);
}

template <typename T>
DetectionCurve coop_curve(FusionRule rule, const std::vector<CoopExample>& test, const ScnModel<T>* scn) {
  if (rule != FusionRule::Scn) return coop_curve(rule, test);
  require(scn != nullptr, "SCN fusion needs a trained SCN model");
  std::vector<Hypothesis> labels, decisions;
  std::vector<double> snr;
  if (!test.empty()) {
    require(test.front().k() == scn->config.k, "example node count does not match the SCN");
    const auto pairs = detectnet::predict_pairs(scn->network, coop_to_examples<T>(test));
    for (std::size_t i = 0; i < test.size(); ++i) {
      decisions.push_back(decide(pairs[i]));
      labels.push_back(test[i].label);
      snr.push_back(test[i].snr_db);
    }
  }
  return tally_curve("SCN", labels, snr, decisions);
}

template <typename T>
void save_scn(const std::filesystem::path& path, const ScnModel<T>& model, const nlohmann::json& extra) {
  nlohmann::json meta = extra.is_object() ? extra : nlohmann::json::object();
  meta["architecture"] = "scn";
  meta["config"] = to_json(model.config);
  meta["seed"] = model.seed;
  nn::save_checkpoint(path, model.network, meta);
}

template <typename T>
ScnModel<T> load_scn(const std::filesystem::path& path) {
  auto loaded = nn::load_checkpoint<T>(path);
  require(loaded.meta.value("architecture", "") == "scn", "checkpoint is not an SCN model");
  ScnModel<T> model;
  model.config = scn_config_from_json(loaded.meta.at("config"));
  model.seed = loaded.meta.value("seed", std::uint64_t{0});
  require(loaded.network.specs() == scn_layers(model.config), "checkpoint layers do not match its config");
  model.network = std::move(loaded.network);
  return model;
}

// --- SPCE ------------------------------------------------------------------------

void write_coop_examples(std::ostream& out, const std::vector<CoopExample>& examples, const nlohmann::json& extra) {
  const std::size_t k = examples.empty() ? 0 : examples.front().k();
  require(k <= 255, "SPCE stores the node count in one byte");
  nlohmann::json header = extra.is_object() ? extra : nlohmann::json::object();
  header["format"] = "SPCE";
  header["k"] = k;
  header["count"] = examples.size();
  io::write_container_header(out, "SPCE", kCoopFormatVersion, header.dump());
  for (const auto& e : examples) {
    require(e.k() == k, "examples with differing node counts");
    require(e.snr_db == std::round(e.snr_db) && std::abs(e.snr_db) <= 32767.0,
            "SPCE stores SNR as whole dB in s16");
    io::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(e.label));
    io::write_le<std::int16_t>(out, static_cast<std::int16_t>(std::lround(e.snr_db)));
    io::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(k));
    for (const auto& p : e.node_probs) {
      io::write_le<float>(out, static_cast<float>(p.p0));
      io::write_le<float>(out, static_cast<float>(p.p1));
    }
  }
  if (!out) throw RuntimeFailure("failed writing cooperative examples");
}

void write_coop_examples(const std::filesystem::path& path, const std::vector<CoopExample>& examples,
                         const nlohmann::json& extra) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot open " + path.string() + " for writing");
  write_coop_examples(out, examples, extra);
}

CoopFile read_coop_examples(std::istream& in) {
  const auto c = io::read_container_header(in, "SPCE");
  require(c.version == kCoopFormatVersion, "unsupported SPCE version");
  CoopFile f;
  try {
    f.header = nlohmann::json::parse(c.header);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("SPCE header is not valid JSON: ") + e.what());
  }
  const auto count = f.header.at("count").get<std::size_t>();
  f.examples.resize(count);
  for (auto& e : f.examples) {
    const auto label = io::read_le<std::uint8_t>(in);
    require(label <= 1, "SPCE record has an invalid label");
    e.label = static_cast<Hypothesis>(label);
    e.snr_db = io::read_le<std::int16_t>(in);
    const auto k = io::read_le<std::uint8_t>(in);
    e.node_probs.resize(k);
    for (auto& p : e.node_probs) {
      p.p0 = io::read_le<float>(in);
      p.p1 = io::read_le<float>(in);
    }
  }
  return f;
}

CoopFile read_coop_examples(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  return read_coop_examples(in);
}

#define SPECSENSE_INSTANTIATE(T)                                                                                 \
  template std::vector<CoopExample> node_probabilities<T>(std::span<const detectnet::DetectNet<T>>,              \
                                                          const std::vector<CoopFrames>&);                       \
  template CoopDataset synth_coop_dataset<T>(const sigmod::DatasetSpec&, std::size_t,                            \
                                             std::span<const detectnet::DetectNet<T>>, unsigned);                \
  template ScnModel<T> scn_build<T>(const SCNConfig&, std::uint64_t);                                            \
  template detectnet::ExampleSet<T> coop_to_examples<T>(const std::vector<CoopExample>&);                        \
  template ScnTrainResult<T> scn_build_train<T>(const SCNConfig&, const std::vector<CoopExample>&,                \
                                                const std::vector<CoopExample>&, const detectnet::StopPolicy&,   \
                                                std::uint64_t, const detectnet::EpochCallback&);                 \
  template ProbPair scn_infer<T>(const ScnModel<T>&, const CoopExample&);                                        \
  template DetectionCurve coop_curve<T>(FusionRule, const std::vector<CoopExample>&, const ScnModel<T>*);        \
  template void save_scn<T>(const std::filesystem::path&, const ScnModel<T>&, const nlohmann::json&);            \
  template ScnModel<T> load_scn<T>(const std::filesystem::path&);

SPECSENSE_INSTANTIATE(float)
SPECSENSE_INSTANTIATE(double)
#undef SPECSENSE_INSTANTIATE

}  // namespace specsense::coopfuse
