#include <algorithm>
#include <cmath>

#include "specsense/detectnet.hpp"
#include "specsense/tensornet/checkpoint.hpp"

namespace specsense::detectnet {

void DetectNetConfig::validate() const {
  require(sample_length > 0, "sample_length must be positive");
  require(conv_filters > 0 && kernel > 0 && lstm_cells > 0 && fc1_units > 0, "layer widths must be positive");
  require(out_units == 2, "DetectNet has exactly two output units");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
  require(learning_rate > 0.0, "learning rate must be positive");
  require(batch_size > 0, "batch size must be positive");
}

nlohmann::json to_json(const DetectNetConfig& c) {
  return {{"sample_length", c.sample_length}, {"conv_filters", c.conv_filters}, {"kernel", c.kernel},
          {"lstm_cells", c.lstm_cells},       {"fc1_units", c.fc1_units},       {"out_units", c.out_units},
          {"dropout", c.dropout},             {"learning_rate", c.learning_rate}, {"batch_size", c.batch_size}};
}

DetectNetConfig detectnet_config_from_json(const nlohmann::json& j) {
  DetectNetConfig c;
  c.sample_length = j.at("sample_length").get<std::size_t>();
  c.conv_filters = j.value("conv_filters", c.conv_filters);
  c.kernel = j.value("kernel", c.kernel);
  c.lstm_cells = j.value("lstm_cells", c.lstm_cells);
  c.fc1_units = j.value("fc1_units", c.fc1_units);
  c.out_units = j.value("out_units", c.out_units);
  c.dropout = j.value("dropout", c.dropout);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.validate();
  return c;
}

void StopPolicy::validate() const {
  require(pf_low >= 0.0 && pf_low <= pf_high && pf_high <= 1.0, "Pf stop interval must satisfy 0 <= low <= high <= 1");
  require(stage1_max_epochs >= 1, "stage 1 needs at least one epoch");
}

double StopPolicy::distance_to_interval(double pf) const noexcept {
  if (pf < pf_low) return pf_low - pf;
  if (pf > pf_high) return pf - pf_high;
  return 0.0;
}

nlohmann::json to_json(const EpochMetrics& m) {
  nlohmann::json pd = nlohmann::json::array();
  for (const auto& [snr, p] : m.pd_by_snr) pd.push_back({snr, p});
  return {{"epoch", m.epoch}, {"val_loss", m.val_loss}, {"val_acc", m.val_acc}, {"pf", m.pf}, {"pd_by_snr", pd}};
}

// --- examples --------------------------------------------------------------------

template <typename T>
nn::Tensor<T> ExampleSet<T>::batch(std::span<const std::size_t> indices) const {
  nn::Shape shape{indices.size()};
  shape.insert(shape.end(), example_shape.begin(), example_shape.end());
  nn::Tensor<T> out(shape);
  const std::size_t stride = example_size();
  for (std::size_t i = 0; i < indices.size(); ++i)
    std::copy_n(inputs.begin() + static_cast<std::ptrdiff_t>(indices[i] * stride), stride, out.data() + i * stride);
  return out;
}

template <typename T>
nn::Tensor<T> ExampleSet<T>::batch_range(std::size_t begin, std::size_t end) const {
  nn::Shape shape{end - begin};
  shape.insert(shape.end(), example_shape.begin(), example_shape.end());
  const std::size_t stride = example_size();
  return nn::Tensor<T>(shape, std::vector<T>(inputs.begin() + static_cast<std::ptrdiff_t>(begin * stride),
                                             inputs.begin() + static_cast<std::ptrdiff_t>(end * stride)));
}

template <typename T>
void ExampleSet<T>::push_back(std::span<const T> input, Hypothesis label, double snr) {
  require(input.size() == example_size(), "example size does not match the set's example shape");
  inputs.insert(inputs.end(), input.begin(), input.end());
  labels.push_back(static_cast<int>(label));
  snr_db.push_back(snr);
}

template <typename T>
nn::Tensor<T> frame_tensor(const sigmod::IQFrame& frame) {
  nn::Tensor<T> t({1, frame.size(), 2});
  for (std::size_t n = 0; n < frame.size(); ++n) {
    t[2 * n] = static_cast<T>(frame.samples[n].real());
    t[2 * n + 1] = static_cast<T>(frame.samples[n].imag());
  }
  return t;
}

template <typename T>
ExampleSet<T> frames_to_examples(const std::vector<sigmod::LabeledFrame>& frames) {
  ExampleSet<T> set;
  require(!frames.empty(), "no frames to convert");
  const std::size_t n = frames.front().frame.size();
  set.example_shape = {n, 2};
  set.inputs.reserve(frames.size() * n * 2);
  for (const auto& f : frames) {
    require(f.frame.size() == n, "frames of differing length in one example set");
    const auto t = frame_tensor<T>(f.frame);
    set.push_back(t.values(), f.label, f.snr_db);
  }
  return set;
}

// --- model -------------------------------------------------------------------------

std::vector<nn::LayerSpec> detectnet_layers(const DetectNetConfig& c) {
  c.validate();
  using nn::LayerSpec;
  return {
      LayerSpec::conv1d("conv1", 2, c.conv_filters, c.kernel),
      LayerSpec::relu("conv1_relu"),
      LayerSpec::dropout("conv1_dropout", c.dropout),
      LayerSpec::conv1d("conv2", c.conv_filters, c.conv_filters, c.kernel),
      LayerSpec::relu("conv2_relu"),
      LayerSpec::dropout("conv2_dropout", c.dropout),
      LayerSpec::time_dense("fc1", c.conv_filters, c.fc1_units),
      LayerSpec::relu("fc1_relu"),
      LayerSpec::dropout("fc1_dropout", c.dropout),
      LayerSpec::lstm("lstm1", c.fc1_units, c.lstm_cells, true),
      LayerSpec::dropout("lstm1_dropout", c.dropout),
      LayerSpec::lstm("lstm2", c.lstm_cells, c.lstm_cells, false),
      LayerSpec::dropout("lstm2_dropout", c.dropout),
      LayerSpec::dense("fc2", c.lstm_cells, c.fc2_units()),
      LayerSpec::relu("fc2_relu"),
      LayerSpec::dropout("fc2_dropout", c.dropout),
      LayerSpec::dense("fc3", c.fc2_units(), c.out_units),
      LayerSpec::softmax("fc3_softmax"),
  };
}

template <typename T>
DetectNet<T> build(const DetectNetConfig& config, std::uint64_t seed) {
  return {config, seed, nn::Network<T>::initialize(detectnet_layers(config), seed)};
}

template <typename T>
ProbPair infer(const DetectNet<T>& model, const sigmod::IQFrame& frame) {
  if (frame.size() != model.config.sample_length) {
    throw ValidationError("frame has " + std::to_string(frame.size()) + " samples; model expects " +
                          std::to_string(model.config.sample_length));
  }
  const auto out = model.network.predict(frame_tensor<T>(frame));
  return {static_cast<double>(out[0]), static_cast<double>(out[1])};
}

template <typename T>
ProbPair detect(const DetectNet<T>& model, const sigmod::IQFrame& raw_frame) {
  return infer(model, sigmod::energy_normalize(raw_frame));
}

template <typename T>
std::vector<ProbPair> predict_pairs(const nn::Network<T>& network, const ExampleSet<T>& examples,
                                    std::size_t batch_size) {
  require(network.ends_with_softmax(), "classifier network must end with SOFTMAX");
  std::vector<ProbPair> pairs;
  pairs.reserve(examples.size());
  for (std::size_t begin = 0; begin < examples.size(); begin += batch_size) {
    const std::size_t end = std::min(examples.size(), begin + batch_size);
    const auto out = network.predict(examples.batch_range(begin, end));
    require(out.rank() == 2 && out.dim(1) == 2, "classifier must output [batch, 2]");
    for (std::size_t i = 0; i < end - begin; ++i)
      pairs.push_back({static_cast<double>(out[2 * i]), static_cast<double>(out[2 * i + 1])});
  }
  return pairs;
}

template <typename T>
EpochMetrics epoch_metrics(const nn::Network<T>& network, const ExampleSet<T>& validation, std::size_t epoch) {
  require(validation.size() > 0, "validation set is empty");
  const auto pairs = predict_pairs(network, validation);
  EpochMetrics m;
  m.epoch = epoch;
  double loss = 0.0;
  std::size_t correct = 0;
  std::vector<Hypothesis> labels, decisions;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto truth = static_cast<Hypothesis>(validation.labels[i]);
    const double p_true = truth == Hypothesis::H1 ? pairs[i].p1 : pairs[i].p0;
    loss -= std::log(std::max(p_true, 1e-300));
    const auto d = decide(pairs[i]);
    correct += d == truth ? 1 : 0;
    labels.push_back(truth);
    decisions.push_back(d);
  }
  m.val_loss = loss / static_cast<double>(pairs.size());
  m.val_acc = static_cast<double>(correct) / static_cast<double>(pairs.size());
  const auto curve = tally_curve("", labels, validation.snr_db, decisions);
  m.pf = curve.pf;
  for (const auto& p : curve.pd_by_snr) m.pd_by_snr[p.snr_db] = p.pd;
  return m;
}

template <typename T>
DetectionCurve dl_curve(const nn::Network<T>& network, const ExampleSet<T>& test, std::string detector_id) {
  const auto pairs = predict_pairs(network, test);
  std::vector<Hypothesis> labels, decisions;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    labels.push_back(static_cast<Hypothesis>(test.labels[i]));
    decisions.push_back(decide(pairs[i]));
  }
  return tally_curve(std::move(detector_id), labels, test.snr_db, decisions);
}

template <typename T>
void save_model(const std::filesystem::path& path, const DetectNet<T>& model, const nlohmann::json& extra) {
  nlohmann::json meta = extra.is_object() ? extra : nlohmann::json::object();
  meta["architecture"] = "detectnet";
  meta["config"] = to_json(model.config);
  meta["seed"] = model.seed;
  nn::save_checkpoint(path, model.network, meta);
}

template <typename T>
DetectNet<T> load_model(const std::filesystem::path& path) {
  auto loaded = nn::load_checkpoint<T>(path);
  require(loaded.meta.value("architecture", "") == "detectnet", "checkpoint is not a DetectNet model");
  DetectNet<T> model;
  model.config = detectnet_config_from_json(loaded.meta.at("config"));
  model.seed = loaded.meta.value("seed", std::uint64_t{0});
  require(loaded.network.specs() == detectnet_layers(model.config), "checkpoint layers do not match its config");
  model.network = std::move(loaded.network);
  return model;
}

#define SPECSENSE_INSTANTIATE(T)                                                                              \
  template struct ExampleSet<T>;                                                                              \
  template nn::Tensor<T> frame_tensor<T>(const sigmod::IQFrame&);                                             \
  template ExampleSet<T> frames_to_examples<T>(const std::vector<sigmod::LabeledFrame>&);                     \
  template DetectNet<T> build<T>(const DetectNetConfig&, std::uint64_t);                                      \
  template ProbPair infer<T>(const DetectNet<T>&, const sigmod::IQFrame&);                                    \
  template ProbPair detect<T>(const DetectNet<T>&, const sigmod::IQFrame&);                                   \
  template std::vector<ProbPair> predict_pairs<T>(const nn::Network<T>&, const ExampleSet<T>&, std::size_t);  \
  template EpochMetrics epoch_metrics<T>(const nn::Network<T>&, const ExampleSet<T>&, std::size_t);           \
  template DetectionCurve dl_curve<T>(const nn::Network<T>&, const ExampleSet<T>&, std::string);              \
  template void save_model<T>(const std::filesystem::path&, const DetectNet<T>&, const nlohmann::json&);      \
  template DetectNet<T> load_model<T>(const std::filesystem::path&);

SPECSENSE_INSTANTIATE(float)
SPECSENSE_INSTANTIATE(double)
#undef SPECSENSE_INSTANTIATE

}  // namespace specsense::detectnet
