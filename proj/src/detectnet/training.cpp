#include <algorithm>
#include <cmath>
#include <numeric>

#include "specsense/detectnet.hpp"

namespace specsense::detectnet {

namespace {
constexpr std::uint64_t kStage2StreamKey = 0x7374616765320000ULL;
}  // namespace

bool EarlyStopping::update(double loss) {
  if (loss < best_) {
    best_ = loss;
    stale_ = 0;
  } else {
    ++stale_;
  }
  return stale_ >= patience_;
}

template <typename T>
double train_epoch(nn::Network<T>& network, nn::AdamState<T>& optimizer, const ExampleSet<T>& train,
                   const TrainingOptions& options, std::size_t epoch) {
  require(train.size() > 0, "training set is empty");
  require(options.batch_size > 0, "batch size must be positive");
  require(network.ends_with_softmax(), "classifier network must end with SOFTMAX");

  RngStream epoch_rng = RngStream(options.seed).substream(epoch);
  RngStream shuffle_rng = epoch_rng.substream(1);
  RngStream dropout_rng = epoch_rng.substream(2);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);

  const std::size_t logits_depth = network.layer_count() - 1;
  double total = 0.0;
  std::size_t seen = 0;
  std::vector<int> labels;
  for (std::size_t begin = 0; begin < order.size(); begin += options.batch_size) {
    const std::size_t end = std::min(order.size(), begin + options.batch_size);
    const std::span<const std::size_t> idx(order.data() + begin, end - begin);
    labels.clear();
    for (std::size_t i : idx) labels.push_back(train.labels[i]);

    auto pass = network.forward(train.batch(idx), nn::Mode::Train, dropout_rng, logits_depth);
    auto loss = nn::batch_softmax_cross_entropy(pass.output, labels);
    if (!std::isfinite(loss.loss))
      throw RuntimeFailure("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(begin / options.batch_size));
    const auto grads = network.backward(pass, std::move(loss.grad_logits));
    nn::adam_step(network.params(), grads, optimizer, options.adam);
    total += loss.loss * static_cast<double>(idx.size());
    seen += idx.size();
  }
  return total / static_cast<double>(seen);
}

template <typename T>
Stage1Result<T> train_stage1(const nn::Network<T>& initial, const ExampleSet<T>& train,
                             const ExampleSet<T>& validation, const StopPolicy& policy,
                             const TrainingOptions& options, const EpochCallback& on_epoch) {
  policy.validate();
  Stage1Result<T> result;
  Checkpoint<T> current{initial, nn::AdamState<T>::for_params(initial.params()), 0, {}};
  current.metrics = epoch_metrics(current.network, validation, 0);
  result.history.push_back(current.metrics);
  if (on_epoch) on_epoch("stage1", current.metrics);
  result.best = current;

  EarlyStopping stopper(policy.stage1_patience, current.metrics.val_loss);
  for (std::size_t epoch = 1; epoch <= policy.stage1_max_epochs; ++epoch) {
    train_epoch(current.network, current.optimizer, train, options, epoch);
    current.epoch = epoch;
    current.metrics = epoch_metrics(current.network, validation, epoch);
    result.history.push_back(current.metrics);
    if (on_epoch) on_epoch("stage1", current.metrics);
    const bool improved = current.metrics.val_loss < stopper.best();
    const bool stop = stopper.update(current.metrics.val_loss);
    if (improved) result.best = current;
    if (stop) break;
  }
  result.last = std::move(current);
  return result;
}

template <typename T>
Stage2Result<T> train_stage2(const Checkpoint<T>& start, const ExampleSet<T>& train,
                             const ExampleSet<T>& validation, const StopPolicy& policy,
                             const TrainingOptions& options, const EpochCallback& on_epoch) {
  policy.validate();
  Stage2Result<T> result;
  Checkpoint<T> current = start;
  current.metrics = epoch_metrics(current.network, validation, current.epoch);
  if (policy.pf_in_interval(current.metrics.pf)) {
    result.checkpoint = current;
    return result;
  }
  // Stage 1 already drew the shuffles and masks for the epochs after its best
  // checkpoint; a separate stream keeps stage 2 from replaying them.
  TrainingOptions stage2_options = options;
  stage2_options.seed = RngStream(options.seed).substream(kStage2StreamKey).next_u64();
  Checkpoint<T> closest = current;
  for (std::size_t i = 0; i < policy.stage2_max_epochs; ++i) {
    const std::size_t epoch = current.epoch + 1;
    train_epoch(current.network, current.optimizer, train, stage2_options, epoch);
    current.epoch = epoch;
    current.metrics = epoch_metrics(current.network, validation, epoch);
    result.history.push_back(current.metrics);
    if (on_epoch) on_epoch("stage2", current.metrics);
    if (policy.pf_in_interval(current.metrics.pf)) {
      result.checkpoint = std::move(current);
      return result;
    }
    if (policy.distance_to_interval(current.metrics.pf) < policy.distance_to_interval(closest.metrics.pf))
      closest = current;
  }
  result.checkpoint = std::move(closest);
  result.out_of_interval = true;
  return result;
}

#define SPECSENSE_INSTANTIATE(T)                                                                               \
  template double train_epoch<T>(nn::Network<T>&, nn::AdamState<T>&, const ExampleSet<T>&,                     \
                                 const TrainingOptions&, std::size_t);                                         \
  template Stage1Result<T> train_stage1<T>(const nn::Network<T>&, const ExampleSet<T>&, const ExampleSet<T>&,  \
                                           const StopPolicy&, const TrainingOptions&, const EpochCallback&);   \
  template Stage2Result<T> train_stage2<T>(const Checkpoint<T>&, const ExampleSet<T>&, const ExampleSet<T>&,   \
                                           const StopPolicy&, const TrainingOptions&, const EpochCallback&);

SPECSENSE_INSTANTIATE(float)
SPECSENSE_INSTANTIATE(double)
#undef SPECSENSE_INSTANTIATE

}  // namespace specsense::detectnet
