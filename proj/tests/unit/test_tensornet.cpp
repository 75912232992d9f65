#include <doctest.h>

#include <cmath>
#include <sstream>

#include "specsense/tensornet/adam.hpp"
#include "specsense/tensornet/checkpoint.hpp"
#include "specsense/tensornet/grad_check.hpp"
#include "specsense/tensornet/network.hpp"

using namespace specsense;
using namespace specsense::nn;

namespace {

Tensor<double> random_tensor(Shape shape, RngStream& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) v = scale * (2.0 * rng.uniform() - 1.0);
  return t;
}

ForwardResult<double> fwd(const LayerSpec& spec, const ParamSet<double>& p, const Tensor<double>& x,
                          Mode mode = Mode::Eval, std::uint64_t seed = 0) {
  RngStream rng(seed);
  return layer_forward(spec, p, x, mode, rng);
}

ParamSet<double> random_params(const LayerSpec& spec, RngStream& rng) {
  auto p = init_params<double>(spec, rng);
  // Nonzero biases so every gradient path is exercised.
  for (auto& e : p.entries())
    if (e.name == "bias")
      for (auto& v : e.value.values()) v += 0.3 * (2.0 * rng.uniform() - 1.0);
  return p;
}

std::vector<LayerSpec> small_chain() {
  return {LayerSpec::conv1d("c", 2, 3, 3), LayerSpec::relu("r"),          LayerSpec::lstm("l", 3, 4, false),
          LayerSpec::dense("d", 4, 2),     LayerSpec::softmax("s")};
}

}  // namespace

TEST_CASE("layer spec names and validation") {
  for (auto k : {LayerKind::Conv1D, LayerKind::Dense, LayerKind::TimeDense, LayerKind::Lstm, LayerKind::Relu,
                 LayerKind::Softmax, LayerKind::Dropout})
    CHECK(layer_kind_from_string(to_string(k)) == k);
  CHECK_THROWS_AS((void)layer_kind_from_string("POOL"), ValidationError);
  CHECK_THROWS_AS(LayerSpec::dropout("d", 1.0).validate(), ValidationError);
  CHECK_THROWS_AS(LayerSpec::dropout("d", -0.1).validate(), ValidationError);
  CHECK_THROWS_AS(LayerSpec::dense("d", 0, 2).validate(), ValidationError);
  CHECK_THROWS_AS(LayerSpec::conv1d("c", 1, 2, 0).validate(), ValidationError);
  const auto s = LayerSpec::lstm("l", 3, 4, false);
  CHECK(layer_spec_from_json(to_json(s)) == s);
}

TEST_CASE("DENSE with identity weights and zero bias is the identity") {
  const auto spec = LayerSpec::dense("d", 3, 3);
  ParamSet<double> p;
  p.add("kernel", Tensor<double>({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}));
  p.add("bias", Tensor<double>({3}));
  const Tensor<double> x({2, 3}, {1, -2, 3, 0.5, 0, -7});
  CHECK(fwd(spec, p, x).output == x);
}

TEST_CASE("DENSE backward on a 2x2 case") {
  const auto spec = LayerSpec::dense("d", 2, 2);
  ParamSet<double> p;
  p.add("kernel", Tensor<double>({2, 2}, {1, 2, 3, 4}));
  p.add("bias", Tensor<double>({2}, {0.5, -0.5}));
  const Tensor<double> x({1, 2}, {2, -1});
  const auto f = fwd(spec, p, x);
  // y_j = sum_i x_i W_ij + b_j
  CHECK(f.output[0] == doctest::Approx(2 * 1 - 1 * 3 + 0.5));
  CHECK(f.output[1] == doctest::Approx(2 * 2 - 1 * 4 - 0.5));
  const Tensor<double> g({1, 2}, {3, 5});
  const auto b = layer_backward(spec, p, f.cache, g);
  // dW = outer(x, g), db = g, dx = W g
  const std::vector<double> dw = {2 * 3, 2 * 5, -1 * 3, -1 * 5};
  for (std::size_t i = 0; i < 4; ++i) CHECK(b.grad_params.at("kernel")[i] == doctest::Approx(dw[i]));
  CHECK(b.grad_params.at("bias")[0] == doctest::Approx(3));
  CHECK(b.grad_params.at("bias")[1] == doctest::Approx(5));
  CHECK(b.grad_input[0] == doctest::Approx(1 * 3 + 2 * 5));
  CHECK(b.grad_input[1] == doctest::Approx(3 * 3 + 4 * 5));
}

TEST_CASE("SOFTMAX examples and properties") {
  const auto spec = LayerSpec::softmax("s");
  const auto out = fwd(spec, {}, Tensor<double>({1, 2}, {0, 0})).output;
  CHECK(out[0] == 0.5);
  CHECK(out[1] == 0.5);
  const auto big = fwd(spec, {}, Tensor<double>({1, 2}, {1000, -1000})).output;
  CHECK(std::isfinite(big[0]));
  CHECK(big[0] == doctest::Approx(1.0));
  RngStream rng(6);
  const auto x = random_tensor({50, 5}, rng, 30.0);
  const auto y = fwd(spec, {}, x).output;
  for (std::size_t r = 0; r < 50; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 5; ++c) {
      CHECK(y[r * 5 + c] > 0.0);
      s += y[r * 5 + c];
    }
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
}

TEST_CASE("LSTM single step with zero weights gives zero hidden state") {
  const auto spec = LayerSpec::lstm("l", 2, 3, true);
  RngStream rng(1);
  auto p = init_params<double>(spec, rng);
  for (auto& e : p.entries()) e.value.fill(0.0);
  const auto f = fwd(spec, p, random_tensor({1, 1, 2}, rng));
  for (double v : f.output.values()) CHECK(v == 0.0);
  const auto& gates = f.cache.saved.at(1);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(gates[j] == 0.5);
    CHECK(gates[3 + j] == 0.5);
    CHECK(gates[6 + j] == 0.0);
    CHECK(gates[9 + j] == 0.5);
  }
}

TEST_CASE("LSTM with zero input outputs a sequence that depends only on the biases") {
  const auto spec = LayerSpec::lstm("l", 3, 4, true);
  RngStream rng(2);
  auto p1 = random_params(spec, rng);
  auto p2 = random_params(spec, rng);
  p2.at("bias") = p1.at("bias");
  p2.at("recurrent_kernel").fill(0.0);
  p1.at("recurrent_kernel").fill(0.0);
  const Tensor<double> zeros({2, 6, 3});
  const auto a = fwd(spec, p1, zeros).output;
  const auto b = fwd(spec, p2, zeros).output;
  CHECK(a == b);
  // The first step is h = o * tanh(i * g) from the biases alone.
  const auto& bias = p1.at("bias");
  auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  for (std::size_t j = 0; j < 4; ++j)
    CHECK(a[j] == doctest::Approx(sig(bias[12 + j]) * std::tanh(sig(bias[j]) * std::tanh(bias[8 + j]))));
}

TEST_CASE("CONV1D centered unit kernel is the identity") {
  for (std::size_t k : {1u, 3u, 5u}) {
    const auto spec = LayerSpec::conv1d("c", 1, 1, k);
    ParamSet<double> p;
    Tensor<double> w({k, 1, 1});
    w[(k - 1) / 2] = 1.0;
    p.add("kernel", w);
    p.add("bias", Tensor<double>({1}));
    RngStream rng(k);
    const auto x = random_tensor({2, 9, 1}, rng);
    CHECK(fwd(spec, p, x).output == x);
  }
}

TEST_CASE("CONV1D matches a triple-loop cross-correlation oracle") {
  for (std::size_t k : {3u, 4u, 10u}) {
    CAPTURE(k);
    const auto spec = LayerSpec::conv1d("c", 2, 3, k);
    RngStream rng(40 + k);
    const auto p = random_params(spec, rng);
    const auto x = random_tensor({2, 8, 2}, rng);
    const auto y = fwd(spec, p, x).output;
    REQUIRE(y.shape() == Shape{2, 8, 3});
    const auto& w = p.at("kernel");
    const auto& b = p.at("bias");
    const auto left = static_cast<std::ptrdiff_t>((k - 1) / 2);
    for (std::size_t bi = 0; bi < 2; ++bi)
      for (std::size_t t = 0; t < 8; ++t)
        for (std::size_t f = 0; f < 3; ++f) {
          double acc = b[f];
          for (std::size_t j = 0; j < k; ++j) {
            const auto src = static_cast<std::ptrdiff_t>(t + j) - left;
            if (src < 0 || src >= 8) continue;
            for (std::size_t c = 0; c < 2; ++c)
              acc += w[(j * 2 + c) * 3 + f] * x[(bi * 8 + static_cast<std::size_t>(src)) * 2 + c];
          }
          CHECK(std::abs(y[(bi * 8 + t) * 3 + f] - acc) < 1e-12);
        }
  }
}

TEST_CASE("CONV1D same padding keeps the length, even widths pad one extra on the right") {
  for (std::size_t k = 1; k <= 10; ++k) {
    const auto spec = LayerSpec::conv1d("c", 1, 1, k);
    CHECK(spec.pad_left() + spec.pad_right() == k - 1);
    CHECK(spec.pad_right() - spec.pad_left() == (k % 2 == 0 ? 1u : 0u));
    RngStream rng(k);
    const auto p = init_params<double>(spec, rng);
    CHECK(fwd(spec, p, Tensor<double>({1, 13, 1}, 1.0)).output.dim(1) == 13);
  }
  CHECK(LayerSpec::conv1d("c", 1, 1, 10).pad_left() == 4);
  CHECK(LayerSpec::conv1d("c", 1, 1, 10).pad_right() == 5);
}

TEST_CASE("TIME_DENSE equals DENSE applied at each step") {
  RngStream rng(3);
  const auto td = LayerSpec::time_dense("t", 4, 3);
  const auto d = LayerSpec::dense("d", 4, 3);
  const auto p = random_params(td, rng);
  const auto x = random_tensor({2, 5, 4}, rng);
  const auto y = fwd(td, p, x).output;
  for (std::size_t bi = 0; bi < 2; ++bi)
    for (std::size_t t = 0; t < 5; ++t) {
      Tensor<double> row({1, 4});
      for (std::size_t c = 0; c < 4; ++c) row[c] = x[(bi * 5 + t) * 4 + c];
      const auto yr = fwd(d, p, row).output;
      for (std::size_t u = 0; u < 3; ++u) CHECK(y[(bi * 5 + t) * 3 + u] == doctest::Approx(yr[u]).epsilon(1e-14));
    }
}

TEST_CASE("RELU forward and backward") {
  const auto spec = LayerSpec::relu("r");
  const Tensor<double> x({1, 4}, {-1, 2, 0.5, -0.1});
  const auto f = fwd(spec, {}, x);
  CHECK(f.output == Tensor<double>({1, 4}, {0, 2, 0.5, 0}));
  const Tensor<double> g({1, 4}, {7, 8, 9, 10});
  const auto b = layer_backward(spec, {}, f.cache, g);
  CHECK(b.grad_input == Tensor<double>({1, 4}, {0, 8, 9, 0}));
}

TEST_CASE("DROPOUT: eval is the identity and train matches it in expectation") {
  const auto spec = LayerSpec::dropout("d", 0.3);
  RngStream rng(10);
  const auto x = random_tensor({4, 5}, rng);
  CHECK(fwd(spec, {}, x, Mode::Eval).output == x);

  std::vector<double> mean(x.size(), 0.0);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const auto y = fwd(spec, {}, x, Mode::Train, 1000 + i).output;
    for (std::size_t j = 0; j < x.size(); ++j) mean[j] += y[j] / draws;
  }
  for (std::size_t j = 0; j < x.size(); ++j) {
    CAPTURE(j);
    CHECK(std::abs(mean[j] - x[j]) <= 0.02 * std::abs(x[j]) + 0.02 * std::sqrt(0.3 / 0.7) * std::abs(x[j]) * 3);
  }
  double overall = 0.0, target = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    overall += std::abs(mean[j]);
    target += std::abs(x[j]);
  }
  CHECK(std::abs(overall / target - 1.0) < 0.02);
}

TEST_CASE("DROPOUT backward reuses the forward mask") {
  const auto spec = LayerSpec::dropout("d", 0.5);
  const Tensor<double> x({1, 64}, 1.0);
  const auto f = fwd(spec, {}, x, Mode::Train, 77);
  const Tensor<double> g({1, 64}, 1.0);
  CHECK(layer_backward(spec, {}, f.cache, g).grad_input == f.output);
}

TEST_CASE("layer_backward rejects a mismatched cache or gradient") {
  const auto d = LayerSpec::dense("d", 2, 2);
  const auto r = LayerSpec::relu("r");
  RngStream rng(1);
  const auto p = init_params<double>(d, rng);
  const auto f = fwd(d, p, random_tensor({1, 2}, rng));
  CHECK_THROWS_AS((void)layer_backward(r, {}, f.cache, f.output), ValidationError);
  CHECK_THROWS_AS((void)layer_backward(d, p, f.cache, Tensor<double>({1, 3})), ValidationError);
  CHECK_THROWS_AS((void)fwd(d, p, Tensor<double>({1, 3})), ValidationError);
}

TEST_CASE("every layer kind passes finite differences over 10 seeds") {
  const std::vector<std::pair<LayerSpec, Shape>> cases = {
      {LayerSpec::conv1d("conv_odd", 2, 3, 3), {2, 7, 2}},
      {LayerSpec::conv1d("conv_even", 2, 3, 4), {2, 7, 2}},
      {LayerSpec::dense("dense", 5, 3), {3, 5}},
      {LayerSpec::time_dense("time_dense", 4, 3), {2, 5, 4}},
      {LayerSpec::lstm("lstm_seq", 3, 4, true), {2, 5, 3}},
      {LayerSpec::lstm("lstm_last", 3, 4, false), {2, 5, 3}},
      {LayerSpec::relu("relu"), {3, 6}},
      {LayerSpec::softmax("softmax"), {3, 4}},
      {LayerSpec::dropout("dropout", 0.4), {3, 6}},
  };
  for (const auto& [spec, shape] : cases) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      CAPTURE(spec.name);
      CAPTURE(seed);
      RngStream rng(seed * 7919);
      const auto p = random_params(spec, rng);
      const auto x = random_tensor(shape, rng, 2.0);
      GradCheckOptions opt;
      if (spec.kind == LayerKind::Dropout) {
        opt.mode = Mode::Train;
        opt.dropout_seed = seed;
      }
      const auto rep = layer_grad_check(spec, p, x, seed, opt);
      CHECK(rep.checked > 0);
      CHECK(rep.max_relative_error < 1e-4);
    }
  }
}

TEST_CASE("softmax_cross_entropy examples") {
  const std::vector<double> z0 = {0, 0};
  const auto a = softmax_cross_entropy(z0, 0);
  CHECK(a.loss == doctest::Approx(std::log(2.0)));
  CHECK(a.grad_logits[0] == doctest::Approx(-0.5));
  CHECK(a.grad_logits[1] == doctest::Approx(0.5));

  const std::vector<double> z1 = {50, -50};
  const auto b = softmax_cross_entropy(z1, 0);
  CHECK(std::isfinite(b.loss));
  CHECK(b.loss < 1e-20);
  CHECK(std::isfinite(softmax_cross_entropy(z1, 1).loss));
  CHECK(softmax_cross_entropy(z1, 1).loss == doctest::Approx(100.0));

  CHECK_THROWS_AS((void)softmax_cross_entropy(z0, 2), ValidationError);
}

TEST_CASE("softmax_cross_entropy gradient matches finite differences") {
  RngStream rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> z(4);
    for (auto& v : z) v = rng.normal();
    const std::size_t label = rng.uniform_index(4);
    const auto r = softmax_cross_entropy(z, label);
    for (std::size_t i = 0; i < 4; ++i) {
      auto zp = z, zm = z;
      zp[i] += 1e-5;
      zm[i] -= 1e-5;
      const double num = (softmax_cross_entropy(zp, label).loss - softmax_cross_entropy(zm, label).loss) / 2e-5;
      CHECK(relative_error(r.grad_logits[i], num, 1e-8) < 1e-6);
    }
  }
}

TEST_CASE("batch cross-entropy is the mean of per-example losses") {
  const Tensor<double> logits({2, 2}, {0, 0, 1, -1});
  const std::vector<int> labels = {0, 1};
  const auto r = batch_softmax_cross_entropy(logits, labels);
  const std::vector<double> l1 = {1, -1};
  const double want = (std::log(2.0) + softmax_cross_entropy(l1, 1).loss) / 2;
  CHECK(r.loss == doctest::Approx(want));
  CHECK(r.grad_logits[0] == doctest::Approx(-0.25));
}

TEST_CASE("Adam first step moves by lr against the gradient sign") {
  for (double g : {0.5, -3.0, 1e-3}) {
    std::vector<ParamSet<double>> params(1), grads(1);
    params[0].add("w", Tensor<double>({1}, 1.0));
    grads[0].add("w", Tensor<double>({1}, g));
    auto state = AdamState<double>::for_params(params);
    adam_step(params, grads, state, {0.01, 0.9, 0.999, 1e-8});
    CHECK(state.step == 1);
    const double delta = params[0].at("w")[0] - 1.0;
    CHECK(delta == doctest::Approx(-0.01 * (g > 0 ? 1 : -1)).epsilon(1e-5));
  }
}

TEST_CASE("Adam with zero gradient leaves parameters unchanged and decays moments") {
  std::vector<ParamSet<double>> params(1), grads(1);
  params[0].add("w", Tensor<double>({2}, {1.0, -2.0}));
  grads[0].add("w", Tensor<double>({2}, {1.0, 1.0}));
  auto state = AdamState<double>::for_params(params);
  adam_step(params, grads, state, {});
  const auto before = params[0].at("w");
  const double m = state.first_moment[0].at("w")[0];
  const double v = state.second_moment[0].at("w")[0];
  grads[0].at("w").fill(0.0);
  adam_step(params, grads, state, {0.1, 0.9, 0.999, 1e-8});
  CHECK(state.first_moment[0].at("w")[0] == doctest::Approx(0.9 * m));
  CHECK(state.second_moment[0].at("w")[0] == doctest::Approx(0.999 * v));
  // Only the decayed first moment drives the update; the fresh gradient contributes nothing.
  const auto after = params[0].at("w");
  const double expect = 0.1 * (0.9 * m / (1 - 0.81)) / (std::sqrt(0.999 * v / (1 - 0.999 * 0.999)) + 1e-8);
  CHECK(before[0] - after[0] == doctest::Approx(expect));

  std::vector<ParamSet<double>> fresh(1), zero(1);
  fresh[0].add("w", Tensor<double>({1}, 3.0));
  zero[0].add("w", Tensor<double>({1}, 0.0));
  auto s2 = AdamState<double>::for_params(fresh);
  adam_step(fresh, zero, s2, {});
  CHECK(fresh[0].at("w")[0] == 3.0);
}

TEST_CASE("Adam minimizes x^2 from 1 with lr 0.1") {
  std::vector<ParamSet<double>> params(1), grads(1);
  params[0].add("x", Tensor<double>({1}, 1.0));
  grads[0].add("x", Tensor<double>({1}));
  auto state = AdamState<double>::for_params(params);
  std::vector<double> traj = {1.0};
  for (int i = 0; i < 100; ++i) {
    grads[0].at("x")[0] = 2.0 * params[0].at("x")[0];
    adam_step(params, grads, state, {0.1, 0.9, 0.999, 1e-8});
    traj.push_back(params[0].at("x")[0]);
  }
  for (int i = 1; i <= 8; ++i) CHECK(std::abs(traj[i]) < std::abs(traj[i - 1]));
  for (int i = 50; i <= 100; ++i) CHECK(std::abs(traj[i]) < 0.1);
}

TEST_CASE("Adam rejects mismatched shapes") {
  std::vector<ParamSet<double>> params(1), grads(1);
  params[0].add("w", Tensor<double>({2}));
  grads[0].add("w", Tensor<double>({3}));
  auto state = AdamState<double>::for_params(params);
  CHECK_THROWS_AS(adam_step(params, grads, state, {}), ValidationError);
}

TEST_CASE("network forward is deterministic and seeds control initialization") {
  const auto a = Network<double>::initialize(small_chain(), 5);
  const auto b = Network<double>::initialize(small_chain(), 5);
  const auto c = Network<double>::initialize(small_chain(), 6);
  CHECK(a.params()[0].at("kernel") == b.params()[0].at("kernel"));
  CHECK(!(a.params()[0].at("kernel") == c.params()[0].at("kernel")));
  RngStream rng(1);
  const auto x = random_tensor({3, 10, 2}, rng);
  CHECK(a.predict(x) == b.predict(x));
  CHECK(a.ends_with_softmax());
}

TEST_CASE("network grad_check on a small chain, with and without dropout") {
  auto specs = small_chain();
  const auto net = Network<double>::initialize(specs, 9);
  RngStream rng(2);
  const auto x = random_tensor({4, 10, 2}, rng);
  const std::vector<int> labels = {0, 1, 1, 0};
  GradCheckOptions opt;
  opt.samples = 200;
  const auto plain = grad_check(net, x, labels, opt);
  CHECK(plain.max_relative_error < 1e-4);

  specs.insert(specs.begin() + 2, LayerSpec::dropout("drop", 0.5));
  auto params = net.params();
  params.insert(params.begin() + 2, ParamSet<double>{});
  const Network<double> with_dropout(specs, params);
  const auto eval = grad_check(with_dropout, x, labels, opt);
  CHECK(eval.max_relative_error == plain.max_relative_error);
  CHECK(eval.worst_parameter == plain.worst_parameter);

  opt.mode = Mode::Train;
  opt.dropout_seed = 4;
  CHECK(grad_check(with_dropout, x, labels, opt).max_relative_error < 1e-4);
}

TEST_CASE("grad_check flags a corrupted DENSE backward") {
  const auto net = Network<double>::initialize(small_chain(), 9);
  RngStream rng(2);
  const auto x = random_tensor({4, 10, 2}, rng);
  const std::vector<int> labels = {0, 1, 1, 0};
  GradCheckOptions opt;
  opt.backward_fn = [](const LayerSpec& s, const ParamSet<double>& p, const LayerCache<double>& c,
                       const Tensor<double>& g) {
    auto r = layer_backward(s, p, c, g);
    if (s.kind == LayerKind::Dense)
      for (auto& v : r.grad_params.at("kernel").values()) v *= 1.5;
    return r;
  };
  CHECK(grad_check(net, x, labels, opt).max_relative_error > 1e-2);
}

TEST_CASE("checkpoint round-trip preserves specs, f32 weights and meta") {
  const auto net = Network<double>::initialize(small_chain(), 3).cast<float>();
  std::stringstream buf;
  save_checkpoint(buf, net, {{"epoch", 4}});
  const auto loaded = load_checkpoint<float>(buf);
  CHECK(loaded.meta.at("epoch") == 4);
  CHECK(loaded.network.specs() == net.specs());
  for (std::size_t l = 0; l < net.layer_count(); ++l)
    for (std::size_t i = 0; i < net.params()[l].size(); ++i)
      CHECK(loaded.network.params()[l].entries()[i].value == net.params()[l].entries()[i].value);

  std::stringstream again;
  save_checkpoint(again, loaded.network, loaded.meta);
  std::stringstream first;
  save_checkpoint(first, net, {{"epoch", 4}});
  CHECK(again.str() == first.str());

  std::stringstream bad("SPCX garbage");
  CHECK_THROWS_AS((void)load_checkpoint<float>(bad), ValidationError);
}
