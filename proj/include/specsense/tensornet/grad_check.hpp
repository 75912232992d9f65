#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "specsense/tensornet/network.hpp"

namespace specsense::nn {

struct GradCheckOptions {
  std::size_t samples = 200;  // parameter scalars compared (all of them if fewer exist)
  double step = 1e-5;         // central-difference half width
  /// Denominator floor of the relative error |a - n| / max(|a|, |n|, floor).
  double floor = 1e-6;
  std::uint64_t seed = 0;     // chooses the sampled parameters
  Mode mode = Mode::Eval;
  std::uint64_t dropout_seed = 0;  // train mode: every evaluation replays the same masks
  BackwardFn<double> backward_fn{};  // replaces layer_backward when set
  /// Discard samples whose +-step probes flip the sign of any RELU input; the
  /// central difference straddles a kink there and says nothing about the gradient.
  bool skip_kinks = true;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::string worst_parameter;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t kinks_skipped = 0;
};

[[nodiscard]] double relative_error(double analytic, double numeric, double floor);

/// Compares back-propagated gradients of the mean cross-entropy loss with
/// central differences. The loss is taken on the pre-softmax logits when the
/// chain ends in SOFTMAX, otherwise on the raw output. Parameters are drawn
/// without replacement until `samples` valid comparisons are made.
[[nodiscard]] GradCheckReport grad_check(const Network<double>& network, const Tensor<double>& input,
                                         std::span<const int> labels, const GradCheckOptions& options = {});

/// Single-layer check with the linear loss sum(r * output) for a random r.
/// Covers input gradients and every parameter scalar.
[[nodiscard]] GradCheckReport layer_grad_check(const LayerSpec& spec, const ParamSet<double>& params,
                                               const Tensor<double>& input, std::uint64_t seed,
                                               const GradCheckOptions& options = {});

}  // namespace specsense::nn
