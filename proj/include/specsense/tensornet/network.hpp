#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "specsense/tensornet/layers.hpp"

namespace specsense::nn {

/// A sequential chain of layers with per-layer parameters.
template <typename T>
class Network {
 public:
  struct Pass {
    std::vector<LayerCache<T>> caches;
    Tensor<T> output;
  };

  Network() = default;
  Network(std::vector<LayerSpec> specs, std::vector<ParamSet<T>> params);

  /// Validates the chain and initializes every weighted layer from one seeded stream.
  [[nodiscard]] static Network initialize(std::vector<LayerSpec> specs, std::uint64_t seed);

  [[nodiscard]] const std::vector<LayerSpec>& specs() const noexcept { return specs_; }
  [[nodiscard]] std::vector<ParamSet<T>>& params() noexcept { return params_; }
  [[nodiscard]] const std::vector<ParamSet<T>>& params() const noexcept { return params_; }
  [[nodiscard]] std::size_t layer_count() const noexcept { return specs_.size(); }
  [[nodiscard]] std::size_t parameter_count() const noexcept;
  [[nodiscard]] bool ends_with_softmax() const noexcept;

  /// Runs the first `layers` layers (all when layers exceeds the chain length).
  [[nodiscard]] Pass forward(const Tensor<T>& input, Mode mode, RngStream& rng, std::size_t layers = SIZE_MAX) const;

  /// Eval-mode output of the whole chain.
  [[nodiscard]] Tensor<T> predict(const Tensor<T>& input) const;

  /// Back-propagates `grad_output` through the layers that produced `pass`.
  /// Returns one gradient ParamSet per layer (empty for weightless layers).
  [[nodiscard]] std::vector<ParamSet<T>> backward(const Pass& pass, Tensor<T> grad_output,
                                                  Tensor<T>* grad_input = nullptr,
                                                  const BackwardFn<T>& backward_fn = {}) const;

  [[nodiscard]] std::vector<ParamSet<T>> zero_gradients() const;

  template <typename U>
  [[nodiscard]] Network<U> cast() const {
    std::vector<ParamSet<U>> p;
    for (const auto& ps : params_) p.push_back(ps.template cast<U>());
    return Network<U>(specs_, std::move(p));
  }

 private:
  std::vector<LayerSpec> specs_;
  std::vector<ParamSet<T>> params_;
};

template <typename T>
struct LossResult {
  double loss = 0.0;
  Tensor<T> grad_logits;
};

/// Single-example categorical cross-entropy on raw logits: loss = -log softmax(logits)[label],
/// grad = softmax(logits) - onehot(label).
[[nodiscard]] LossResult<double> softmax_cross_entropy(std::span<const double> logits, std::size_t label);

/// Mean cross-entropy over a [batch, classes] logit tensor; gradient is scaled by 1/batch.
template <typename T>
[[nodiscard]] LossResult<T> batch_softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels);

}  // namespace specsense::nn
