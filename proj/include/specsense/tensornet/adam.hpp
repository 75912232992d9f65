#pragma once

#include <cstdint>
#include <vector>

#include "specsense/tensornet/layers.hpp"

namespace specsense::nn {

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  std::vector<ParamSet<T>> first_moment;
  std::vector<ParamSet<T>> second_moment;
  std::int64_t step = 0;  // number of updates applied so far

  [[nodiscard]] static AdamState for_params(const std::vector<ParamSet<T>>& params);
};

/// One bias-corrected Adam update (Kingma & Ba); increments state.step first,
/// so the first call uses t = 1.
template <typename T>
void adam_step(std::vector<ParamSet<T>>& params, const std::vector<ParamSet<T>>& grads, AdamState<T>& state,
               const AdamConfig& config);

}  // namespace specsense::nn
