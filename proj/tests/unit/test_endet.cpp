#include <doctest.h>

#include <cmath>
#include <numbers>

#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "specsense/endet.hpp"
#include "specsense/errors.hpp"

using namespace specsense;
using namespace specsense::endet;
using sigmod::Complex;
using sigmod::IQFrame;

namespace {

double q_oracle(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

double wall_db(double pf, double pd, std::size_t n, std::optional<std::size_t> m = std::nullopt) {
  return snr_wall({pf, pd, n, m}).gamma_db;
}

IQFrame noise_frame(std::size_t n, double variance, RngStream& rng) { return sigmod::cscg_noise(n, variance, rng); }

}  // namespace

TEST_CASE("q_inv matches the normal quantile") {
  CHECK(q_inv(0.5) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(q_inv(0.05) == doctest::Approx(1.6449).epsilon(1e-4));
  const boost::math::normal_distribution<double> nd;
  for (double p : {1e-6, 1e-4, 0.01, 0.0592, 0.1, 0.3, 0.7, 0.9, 0.99, 1 - 1e-6}) {
    CAPTURE(p);
    CHECK(q_inv(p) == doctest::Approx(boost::math::quantile(boost::math::complement(nd, p))).epsilon(1e-9));
  }
  CHECK_THROWS_AS((void)q_inv(0.0), ValidationError);
  CHECK_THROWS_AS((void)q_inv(1.0), ValidationError);
  CHECK_THROWS_AS((void)q_inv(-0.1), ValidationError);
}

TEST_CASE("q_function round-trips q_inv to 1e-10 relative error") {
  for (double e = -6.0; e <= -0.3; e += 0.1) {
    for (double p : {std::pow(10.0, e), 1.0 - std::pow(10.0, e)}) {
      CAPTURE(p);
      CHECK(std::abs(q_function(q_inv(p)) - p) / p < 1e-10);
      CHECK(std::abs(q_oracle(q_inv(p)) - p) / p < 1e-10);
    }
  }
}

TEST_CASE("incomplete gamma and beta agree with an independent implementation") {
  for (double a : {1.0, 2.5, 64.0, 128.0, 1024.0}) {
    for (double x : {0.1, 0.9, 1.0, 1.1, 2.0}) {
      const double xa = x * a;
      CAPTURE(a);
      CAPTURE(xa);
      CHECK(gamma_p(a, xa) == doctest::Approx(boost::math::gamma_p(a, xa)).epsilon(1e-10));
      CHECK(gamma_q(a, xa) == doctest::Approx(boost::math::gamma_q(a, xa)).epsilon(1e-9));
    }
  }
  for (double a : {1.0, 64.0, 256.0})
    for (double b : {1.0, 64.0, 256.0})
      for (double x : {0.05, 0.3, 0.5, 0.7, 0.95}) {
        CAPTURE(a);
        CAPTURE(b);
        CAPTURE(x);
        CHECK(beta_inc(a, b, x) == doctest::Approx(boost::math::ibeta(a, b, x)).epsilon(1e-9));
      }
}

TEST_CASE("energy_statistic examples") {
  IQFrame z;
  z.samples.assign(64, Complex(0, 0));
  CHECK(energy_statistic(z, 0.5) == 0.0);

  const double s2 = 0.37;
  IQFrame unit;
  RngStream rng(8);
  for (int i = 0; i < 64; ++i) unit.samples.push_back(std::polar(std::sqrt(2 * s2), 2 * std::numbers::pi * rng.uniform()));
  CHECK(energy_statistic(unit, s2) == doctest::Approx(1.0).epsilon(1e-12));

  const auto f = noise_frame(128, 1.0, rng);
  long double acc = 0.0L;
  for (const auto& y : f.samples) acc += static_cast<long double>(y.real()) * y.real() + static_cast<long double>(y.imag()) * y.imag();
  const double oracle = static_cast<double>(acc / (2.0L * 0.5L * 128.0L));
  CHECK(std::abs(energy_statistic(f, 0.5) - oracle) < 1e-12);

  CHECK_THROWS_AS((void)energy_statistic(f, 0.0), ValidationError);
  CHECK_THROWS_AS((void)energy_statistic(f, -1.0), ValidationError);
}

TEST_CASE("energy_statistic is invariant to a global phase rotation") {
  RngStream rng(12);
  for (int t = 0; t < 20; ++t) {
    auto f = noise_frame(128, 1.0, rng);
    const double before = energy_statistic(f, 0.5);
    const auto rot = std::polar(1.0, 2 * std::numbers::pi * rng.uniform());
    for (auto& y : f.samples) y *= rot;
    CHECK(energy_statistic(f, 0.5) == doctest::Approx(before).epsilon(1e-13));
  }
}

TEST_CASE("cfar_threshold inverts the Gamma(N) tail exactly") {
  for (std::size_t n : {16u, 64u, 128u, 1024u}) {
    for (double pf : {0.01, 0.05, 0.0734, 0.1, 0.5}) {
      const double lam = cfar_threshold(pf, n);
      const boost::math::gamma_distribution<double> g(static_cast<double>(n), 1.0);
      CHECK(boost::math::cdf(boost::math::complement(g, n * lam)) == doctest::Approx(pf).epsilon(1e-9));
    }
  }
  CHECK(cfar_threshold(1.0 - 1e-12, 64) < 0.5);
  CHECK(cfar_threshold(1.0 - 1e-12, 64) > 0.0);
  CHECK(cfar_threshold(0.999, 64) < cfar_threshold(0.9, 64));
  CHECK_THROWS_AS((void)cfar_threshold(0.0, 64), ValidationError);
  CHECK_THROWS_AS((void)cfar_threshold(1.0, 64), ValidationError);
  CHECK_THROWS_AS((void)cfar_threshold(0.1, 0), ValidationError);
}

TEST_CASE("cfar_threshold approaches the CLT form at N=1024") {
  for (double pf : {0.01, 0.05, 0.1}) {
    const double clt = 1.0 + q_inv(pf) / std::sqrt(1024.0);
    CHECK(std::abs(cfar_threshold(pf, 1024) - clt) / clt < 0.02);
  }
}

TEST_CASE("cfar_threshold_estimated inverts the F(2N,2M) tail") {
  for (std::size_t m : {16u, 128u, 1000u}) {
    const double lam = cfar_threshold_estimated(0.05, 128, m);
    const boost::math::fisher_f_distribution<double> f(256.0, 2.0 * static_cast<double>(m));
    CHECK(boost::math::cdf(boost::math::complement(f, lam)) == doctest::Approx(0.05).epsilon(1e-8));
  }
  CHECK(cfar_threshold_estimated(0.05, 128, 100000) == doctest::Approx(cfar_threshold(0.05, 128)).epsilon(1e-3));
}

TEST_CASE("cfar_threshold: empirical false-alarm rate at N=128, pf=0.05") {
  const std::size_t trials = 100000;
  const double pf = empirical_false_alarm(128, cfar_threshold(0.05, 128), trials, 2024);
  const double sigma = std::sqrt(0.05 * 0.95 / trials);
  CHECK(std::abs(pf - 0.05) < 3 * sigma);
}

TEST_CASE("empirical_false_alarm is deterministic in its seed") {
  const double lam = cfar_threshold(0.1, 64);
  CHECK(empirical_false_alarm(64, lam, 5000, 7) == empirical_false_alarm(64, lam, 5000, 7));
}

TEST_CASE("estimate_noise") {
  const double sigma2 = 0.8;
  std::vector<Complex> w;
  for (int i = 0; i < 32; ++i) w.push_back(std::polar(std::sqrt(2 * sigma2), 0.3 * i));
  CHECK(estimate_noise(w, 32) == doctest::Approx(sigma2).epsilon(1e-12));
  CHECK(estimate_noise(w, 1) == doctest::Approx(std::norm(w[0]) / 2).epsilon(1e-15));

  RngStream rng(31);
  const auto big = noise_frame(1'000'000, 1.0, rng);
  CHECK(std::abs(estimate_noise(big.samples, big.size()) - 0.5) / 0.5 < 0.005);

  CHECK_THROWS_AS((void)estimate_noise(std::span<const Complex>{}, 1), ValidationError);
  CHECK_THROWS_AS((void)estimate_noise(w, 33), ValidationError);
  CHECK_THROWS_AS((void)estimate_noise(w, 0), ValidationError);
}

TEST_CASE("ed_detect decision rule") {
  IQFrame z;
  z.samples.assign(32, Complex(0, 0));
  CHECK(ed_detect(z, NoiseModel::known(0.5), 0.3) == Hypothesis::H0);

  IQFrame f;
  f.samples.assign(32, Complex(1, 1));  // statistic 2 at sigma2 0.5
  CHECK(ed_detect(f, NoiseModel::known(0.5), 1.0) == Hypothesis::H1);
  CHECK(ed_detect(f, NoiseModel::known(0.5), 2.0) == Hypothesis::H0);  // tie
  CHECK(ed_detect(f, NoiseModel::known(0.5), 1.999) == Hypothesis::H1);
}

TEST_CASE("ed_detect at +10 dB detects more than 99.9% of modulated frames") {
  const double lam = cfar_threshold(0.05, 128);
  RngStream rng(55);
  std::size_t hits = 0;
  const std::size_t trials = 10000;
  for (std::size_t t = 0; t < trials; ++t) {
    auto sig = sigmod::modulated_frame(sigmod::ModScheme::QPSK, 128, 8, {}, {}, rng);
    const double ps = sig.power();
    // Unit-variance noise (sigma2 = 0.5) with the signal scaled to 10 dB.
    for (auto& s : sig.samples) s *= std::sqrt(10.0 / ps);
    const auto w = noise_frame(128, 1.0, rng);
    for (std::size_t n = 0; n < 128; ++n) sig.samples[n] += w.samples[n];
    hits += ed_detect(sig, NoiseModel::known(0.5), lam) == Hypothesis::H1;
  }
  CHECK(static_cast<double>(hits) / trials > 0.999);
}

TEST_CASE("snr_wall reproduces the published energy-detector walls") {
  CHECK(std::abs(wall_db(0.0592, 0.9, 128) + 5.35) <= 0.02);
  CHECK(std::abs(wall_db(0.0734, 0.9, 128) + 5.57) <= 0.02);
  CHECK(std::abs(wall_db(0.0805, 0.9, 64) + 3.91) <= 0.02);
}

TEST_CASE("snr_wall closed form against a direct evaluation") {
  const boost::math::normal_distribution<double> nd;
  auto qi = [&](double p) { return boost::math::quantile(boost::math::complement(nd, p)); };
  for (std::size_t n : {64u, 128u, 512u}) {
    for (std::optional<std::size_t> m : {std::optional<std::size_t>{}, std::optional<std::size_t>{256}}) {
      const double phi = m ? double(n + *m) / double(n * *m) : 1.0 / double(n);
      const double g = (1 - qi(0.9) * std::sqrt(phi)) / (1 - qi(0.05) * std::sqrt(phi)) - 1;
      const auto r = snr_wall({0.05, 0.9, n, m});
      CHECK(r.gamma_linear == doctest::Approx(g).epsilon(1e-10));
      CHECK(r.gamma_db == doctest::Approx(10 * std::log10(g)).epsilon(1e-10));
    }
  }
}

TEST_CASE("snr_wall degenerate and invalid queries") {
  const auto r = snr_wall({0.5, 0.5, 128, std::nullopt});
  CHECK(r.gamma_linear == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(!r.has_wall());
  CHECK(std::isinf(r.gamma_db));
  CHECK(r.gamma_db < 0);
  // q_inv(1e-6)/sqrt(16) > 1 makes the denominator negative.
  CHECK_THROWS_AS((void)snr_wall({1e-6, 0.9, 16, std::nullopt}), ValidationError);
  CHECK_THROWS_AS((void)snr_wall({0.0, 0.9, 128, std::nullopt}), ValidationError);
  CHECK_THROWS_AS((void)snr_wall({0.1, 0.9, 0, std::nullopt}), ValidationError);
}

TEST_CASE("snr_wall strictly decreases with N") {
  double prev = INFINITY;
  for (std::size_t n = 64; n <= 1024; n *= 2) {
    const double w = wall_db(0.0734, 0.9, n);
    CHECK(w < prev);
    prev = w;
  }
}

TEST_CASE("finite-M wall: empirical Pd at the wall is within 3 points of target") {
  const std::size_t n = 128, m = 128;
  const double pf = 0.05, pd = 0.9;
  const auto wall = snr_wall({pf, pd, n, m});
  REQUIRE(wall.has_wall());
  const double lam = cfar_threshold_estimated(pf, n, m);
  RngStream rng(4040);
  const std::size_t trials = 20000;
  std::size_t hits = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    auto y = noise_frame(n, 1.0, rng);
    const auto s = noise_frame(n, wall.gamma_linear, rng);
    for (std::size_t i = 0; i < n; ++i) y.samples[i] += s.samples[i];
    const auto w = noise_frame(m, 1.0, rng);
    const NoiseModel model{0.5, m, estimate_noise(w.samples, m)};
    hits += ed_detect(y, model, lam) == Hypothesis::H1;
  }
  CHECK(std::abs(static_cast<double>(hits) / trials - pd) <= 0.03);
}

TEST_CASE("energy_detector_curve holds its false-alarm target on a dataset split") {
  sigmod::DatasetSpec spec;
  spec.schemes = {sigmod::ModScheme::QPSK};
  spec.sample_length = 64;
  spec.snr_grid = {-10, 0, 10};
  spec.train_count = 10;
  spec.val_count = 10;
  spec.test_count = 6000;
  spec.seed = 17;
  const auto c = energy_detector_curve(spec, sigmod::Split::Test, 0.1, std::nullopt);
  CHECK(c.n_neg == 3000);
  CHECK(std::abs(c.pf - 0.1) < 3 * std::sqrt(0.1 * 0.9 / 3000));
  REQUIRE(c.pd_by_snr.size() == 3);
  CHECK(c.pd_by_snr[0].pd < c.pd_by_snr[1].pd);
  CHECK(c.pd_by_snr[2].pd > 0.999);
  CHECK(c == energy_detector_curve(spec, sigmod::Split::Test, 0.1, std::nullopt));

  const auto cm = energy_detector_curve(spec, sigmod::Split::Test, 0.1, std::size_t{64});
  CHECK(std::abs(cm.pf - 0.1) < 3 * std::sqrt(0.1 * 0.9 / 3000));
}
