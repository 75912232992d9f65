#include "specsense/tensornet/network.hpp"

#include <algorithm>
#include <cmath>

namespace specsense::nn {

template <typename T>
Network<T>::Network(std::vector<LayerSpec> specs, std::vector<ParamSet<T>> params)
    : specs_(std::move(specs)), params_(std::move(params)) {
  require(specs_.size() == params_.size(), "network needs one parameter set per layer");
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    specs_[i].validate();
    for (std::size_t j = 0; j < i; ++j)
      require(specs_[i].name != specs_[j].name, "duplicate layer name: " + specs_[i].name);
    require(specs_[i].has_params() != params_[i].empty(), "layer " + specs_[i].name + " has unexpected parameters");
  }
}

template <typename T>
Network<T> Network<T>::initialize(std::vector<LayerSpec> specs, std::uint64_t seed) {
  RngStream rng(seed);
  std::vector<ParamSet<T>> params;
  for (const auto& s : specs) params.push_back(init_params<T>(s, rng));
  return Network(std::move(specs), std::move(params));
}

template <typename T>
std::size_t Network<T>::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.scalar_count();
  return n;
}

template <typename T>
bool Network<T>::ends_with_softmax() const noexcept {
  return !specs_.empty() && specs_.back().kind == LayerKind::Softmax;
}

template <typename T>
typename Network<T>::Pass Network<T>::forward(const Tensor<T>& input, Mode mode, RngStream& rng,
                                              std::size_t layers) const {
  layers = std::min(layers, specs_.size());
  Pass pass;
  pass.caches.reserve(layers);
  pass.output = input;
  for (std::size_t i = 0; i < layers; ++i) {
    auto r = layer_forward(specs_[i], params_[i], pass.output, mode, rng);
    pass.output = std::move(r.output);
    pass.caches.push_back(std::move(r.cache));
  }
  return pass;
}

template <typename T>
Tensor<T> Network<T>::predict(const Tensor<T>& input) const {
  RngStream unused(0);
  Tensor<T> x = input;
  for (std::size_t i = 0; i < specs_.size(); ++i) x = layer_forward(specs_[i], params_[i], x, Mode::Eval, unused).output;
  return x;
}

template <typename T>
std::vector<ParamSet<T>> Network<T>::backward(const Pass& pass, Tensor<T> grad_output, Tensor<T>* grad_input,
                                              const BackwardFn<T>& backward_fn) const {
  std::vector<ParamSet<T>> grads(specs_.size());
  for (std::size_t i = pass.caches.size(); i-- > 0;) {
    auto r = backward_fn ? backward_fn(specs_[i], params_[i], pass.caches[i], grad_output)
                         : layer_backward(specs_[i], params_[i], pass.caches[i], grad_output);
    grads[i] = std::move(r.grad_params);
    grad_output = std::move(r.grad_input);
  }
  for (std::size_t i = pass.caches.size(); i < specs_.size(); ++i) grads[i] = params_[i].zeros_like();
  if (grad_input) *grad_input = std::move(grad_output);
  return grads;
}

template <typename T>
std::vector<ParamSet<T>> Network<T>::zero_gradients() const {
  std::vector<ParamSet<T>> g;
  for (const auto& p : params_) g.push_back(p.zeros_like());
  return g;
}

LossResult<double> softmax_cross_entropy(std::span<const double> logits, std::size_t label) {
  require(!logits.empty(), "softmax_cross_entropy needs logits");
  if (label >= logits.size()) throw ValidationError("label out of range for softmax_cross_entropy");
  const double peak = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - peak);
  const double log_sum = std::log(sum);
  LossResult<double> r;
  r.loss = -(logits[label] - peak - log_sum);
  r.grad_logits = Tensor<double>({logits.size()});
  for (std::size_t c = 0; c < logits.size(); ++c) {
    r.grad_logits[c] = std::exp(logits[c] - peak - log_sum) - (c == label ? 1.0 : 0.0);
  }
  return r;
}

template <typename T>
LossResult<T> batch_softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  require(logits.rank() == 2, "batch cross-entropy expects [batch, classes] logits");
  const std::size_t b = logits.dim(0), c = logits.dim(1);
  require(labels.size() == b, "one label per batch row required");
  LossResult<T> r;
  r.grad_logits = Tensor<T>(logits.shape());
  double total = 0.0;
  std::vector<double> row(c);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < c; ++j) row[j] = static_cast<double>(logits[i * c + j]);
    if (labels[i] < 0) throw ValidationError("negative label");
    const auto one = softmax_cross_entropy(row, static_cast<std::size_t>(labels[i]));
    total += one.loss;
    for (std::size_t j = 0; j < c; ++j) r.grad_logits[i * c + j] = static_cast<T>(one.grad_logits[j] / b);
  }
  r.loss = total / static_cast<double>(b);
  return r;
}

template class Network<float>;
template class Network<double>;
template LossResult<float> batch_softmax_cross_entropy<float>(const Tensor<float>&, std::span<const int>);
template LossResult<double> batch_softmax_cross_entropy<double>(const Tensor<double>&, std::span<const int>);

}  // namespace specsense::nn
