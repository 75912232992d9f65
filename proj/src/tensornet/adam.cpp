#include "specsense/tensornet/adam.hpp"

#include <cmath>

namespace specsense::nn {

template <typename T>
AdamState<T> AdamState<T>::for_params(const std::vector<ParamSet<T>>& params) {
  AdamState s;
  for (const auto& p : params) {
    s.first_moment.push_back(p.zeros_like());
    s.second_moment.push_back(p.zeros_like());
  }
  return s;
}

template <typename T>
void adam_step(std::vector<ParamSet<T>>& params, const std::vector<ParamSet<T>>& grads, AdamState<T>& state,
               const AdamConfig& config) {
  if (state.first_moment.empty() && !params.empty()) state = AdamState<T>::for_params(params);
  require(grads.size() == params.size() && state.first_moment.size() == params.size() &&
              state.second_moment.size() == params.size(),
          "adam_step: parameter, gradient and state layer counts differ");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  const T b1 = static_cast<T>(config.beta1);
  const T b2 = static_cast<T>(config.beta2);

  for (std::size_t layer = 0; layer < params.size(); ++layer) {
    auto& p = params[layer].entries();
    const auto& g = grads[layer].entries();
    auto& m = state.first_moment[layer].entries();
    auto& v = state.second_moment[layer].entries();
    require(g.size() == p.size() && m.size() == p.size() && v.size() == p.size(),
            "adam_step: tensor counts differ in layer " + std::to_string(layer));
    for (std::size_t i = 0; i < p.size(); ++i) {
      auto& w = p[i].value;
      require(g[i].value.shape() == w.shape() && m[i].value.shape() == w.shape() && v[i].value.shape() == w.shape(),
              "adam_step: shape mismatch for " + p[i].name);
      for (std::size_t j = 0; j < w.size(); ++j) {
        const T gj = g[i].value[j];
        m[i].value[j] = b1 * m[i].value[j] + (T{1} - b1) * gj;
        v[i].value[j] = b2 * v[i].value[j] + (T{1} - b2) * gj * gj;
        const double m_hat = static_cast<double>(m[i].value[j]) / correction1;
        const double v_hat = static_cast<double>(v[i].value[j]) / correction2;
        w[j] -= static_cast<T>(config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon));
      }
    }
  }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step<float>(std::vector<ParamSet<float>>&, const std::vector<ParamSet<float>>&, AdamState<float>&,
                               const AdamConfig&);
template void adam_step<double>(std::vector<ParamSet<double>>&, const std::vector<ParamSet<double>>&,
                                AdamState<double>&, const AdamConfig&);

}  // namespace specsense::nn
