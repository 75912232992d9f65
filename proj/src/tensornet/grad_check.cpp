#include "specsense/tensornet/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace specsense::nn {

namespace {

struct ParamRef {
  std::size_t layer;
  std::size_t tensor;
  std::size_t index;
};

/// Every parameter scalar in a seeded random order.
std::vector<ParamRef> shuffled_params(const std::vector<ParamSet<double>>& params, std::uint64_t seed) {
  std::vector<ParamRef> all;
  for (std::size_t l = 0; l < params.size(); ++l)
    for (std::size_t t = 0; t < params[l].entries().size(); ++t)
      for (std::size_t i = 0; i < params[l].entries()[t].value.size(); ++i) all.push_back({l, t, i});
  RngStream rng(seed);
  for (std::size_t i = all.size(); i > 1; --i) std::swap(all[i - 1], all[rng.uniform_index(i)]);
  return all;
}

bool relu_pattern_differs(const Network<double>::Pass& a, const Network<double>::Pass& b) {
  for (std::size_t l = 0; l < a.caches.size(); ++l) {
    if (a.caches[l].kind != LayerKind::Relu) continue;
    const auto& x = a.caches[l].saved.front();
    const auto& y = b.caches[l].saved.front();
    for (std::size_t i = 0; i < x.size(); ++i)
      if ((x[i] > 0.0) != (y[i] > 0.0)) return true;
  }
  return false;
}

void record(GradCheckReport& report, const std::string& name, double analytic, double numeric, double floor) {
  const double err = relative_error(analytic, numeric, floor);
  ++report.checked;
  if (report.checked == 1 || err > report.max_relative_error) {
    report.max_relative_error = err;
    report.worst_parameter = name;
    report.worst_analytic = analytic;
    report.worst_numeric = numeric;
  }
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

GradCheckReport grad_check(const Network<double>& network, const Tensor<double>& input, std::span<const int> labels,
                           const GradCheckOptions& options) {
  const std::size_t depth = network.ends_with_softmax() ? network.layer_count() - 1 : network.layer_count();
  Network<double> probe = network;

  auto loss_of = [&](const Network<double>& net, Network<double>::Pass* keep) {
    RngStream rng(options.dropout_seed);
    auto pass = net.forward(input, options.mode, rng, depth);
    auto loss = batch_softmax_cross_entropy(pass.output, labels);
    if (keep) *keep = std::move(pass);
    return loss;
  };

  Network<double>::Pass pass;
  const auto base = loss_of(probe, &pass);
  const auto grads = probe.backward(pass, base.grad_logits, nullptr, options.backward_fn);

  GradCheckReport report;
  Network<double>::Pass plus_pass, minus_pass;
  for (const auto& ref : shuffled_params(probe.params(), options.seed)) {
    if (report.checked >= options.samples) break;
    auto& entry = probe.params()[ref.layer].entries()[ref.tensor];
    const double saved = entry.value[ref.index];
    entry.value[ref.index] = saved + options.step;
    const double plus = loss_of(probe, &plus_pass).loss;
    entry.value[ref.index] = saved - options.step;
    const double minus = loss_of(probe, &minus_pass).loss;
    entry.value[ref.index] = saved;
    if (options.skip_kinks && relu_pattern_differs(plus_pass, minus_pass)) {
      ++report.kinks_skipped;
      continue;
    }
    const double numeric = (plus - minus) / (2.0 * options.step);
    const double analytic = grads[ref.layer].entries()[ref.tensor].value[ref.index];
    record(report, network.specs()[ref.layer].name + "/" + entry.name + "[" + std::to_string(ref.index) + "]",
           analytic, numeric, options.floor);
  }
  return report;
}

GradCheckReport layer_grad_check(const LayerSpec& spec, const ParamSet<double>& params, const Tensor<double>& input,
                                 std::uint64_t seed, const GradCheckOptions& options) {
  RngStream weights_rng(seed);
  ParamSet<double> probe = params;
  Tensor<double> x = input;

  auto forward = [&]() {
    RngStream rng(options.dropout_seed);
    return layer_forward(spec, probe, x, options.mode, rng);
  };
  const auto base = forward();
  Tensor<double> r(base.output.shape());
  for (auto& v : r.values()) v = 2.0 * weights_rng.uniform() - 1.0;
  auto loss = [&]() {
    const auto out = forward().output;
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += r[i] * out[i];
    return s;
  };
  const auto grads = options.backward_fn ? options.backward_fn(spec, probe, base.cache, r)
                                         : layer_backward(spec, probe, base.cache, r);

  GradCheckReport report;
  auto check = [&](double& slot, double analytic, const std::string& name) {
    const double saved = slot;
    slot = saved + options.step;
    const double plus = loss();
    slot = saved - options.step;
    const double minus = loss();
    slot = saved;
    record(report, name, analytic, (plus - minus) / (2.0 * options.step), options.floor);
  };
  for (std::size_t i = 0; i < x.size(); ++i) check(x[i], grads.grad_input[i], "input[" + std::to_string(i) + "]");
  for (std::size_t t = 0; t < probe.entries().size(); ++t) {
    auto& entry = probe.entries()[t];
    for (std::size_t i = 0; i < entry.value.size(); ++i)
      check(entry.value[i], grads.grad_params.entries()[t].value[i], entry.name + "[" + std::to_string(i) + "]");
  }
  return report;
}

}  // namespace specsense::nn
