#pragma once

// Classical energy detector: the noise-normalized energy statistic, exact CFAR
// thresholds, noise-variance estimation and the closed-form SNR wall.

#include <cstddef>
#include <optional>
#include <span>

#include "specsense/rng.hpp"
#include "specsense/sigmod.hpp"
#include "specsense/types.hpp"

namespace specsense::endet {

// --- special functions ------------------------------------------------------

/// Upper tail of the standard normal.
[[nodiscard]] double q_function(double x);
/// Inverse of q_function on (0, 1).
[[nodiscard]] double q_inv(double p);

/// Regularized lower incomplete gamma P(a, x).
[[nodiscard]] double gamma_p(double a, double x);
/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
[[nodiscard]] double gamma_q(double a, double x);
/// x such that gamma_q(a, x) == q, by bisection.
[[nodiscard]] double gamma_q_inv(double a, double q);
/// Regularized incomplete beta I_x(a, b).
[[nodiscard]] double beta_inc(double a, double b, double x);

// --- detector ---------------------------------------------------------------

/// Per-dimension noise variance, true and estimated. `m_samples` empty means
/// the variance is known exactly (M = infinity).
struct NoiseModel {
  double sigma2 = 0.5;
  std::optional<std::size_t> m_samples;
  double sigma2_hat = 0.5;

  [[nodiscard]] static NoiseModel known(double sigma2) { return {sigma2, std::nullopt, sigma2}; }
};

/// (1 / (2 sigma2_hat N)) * sum |y(n)|^2
[[nodiscard]] double energy_statistic(const sigmod::IQFrame& frame, double sigma2_hat);

/// Threshold with Pr(statistic > threshold | H0) == pf_target when the noise
/// variance is known; uses N * statistic ~ Gamma(N, 1).
[[nodiscard]] double cfar_threshold(double pf_target, std::size_t n_samples);

/// CFAR threshold when the variance is estimated from M fresh noise samples
/// each trial. The statistic is then an F(2N, 2M) variate under H0.
[[nodiscard]] double cfar_threshold_estimated(double pf_target, std::size_t n_samples, std::size_t m_samples);

/// (1 / (2M)) * sum_{m<M} |w(m)|^2
[[nodiscard]] double estimate_noise(std::span<const sigmod::Complex> noise, std::size_t m_samples);

/// H1 iff statistic > threshold; equality decides H0.
[[nodiscard]] Hypothesis ed_detect(const sigmod::IQFrame& frame, const NoiseModel& noise, double threshold);

struct WallQuery {
  double pf_target = 0.1;
  double pd_target = 0.9;
  std::size_t n_samples = 128;
  std::optional<std::size_t> m_samples;  // empty: M = infinity
};

struct WallResult {
  double gamma_linear = 0.0;
  double gamma_db = 0.0;  // -inf when gamma_linear <= 0 (no wall)

  [[nodiscard]] bool has_wall() const noexcept { return gamma_linear > 0.0; }
};

/// gamma_min = (1 - Qinv(Pd) sqrt(phi)) / (1 - Qinv(Pf) sqrt(phi)) - 1 with
/// phi = (N + M) / (N M). Throws ValidationError when the denominator is not
/// positive (the query is unattainable).
[[nodiscard]] WallResult snr_wall(const WallQuery& query);

// --- Monte-Carlo drivers ----------------------------------------------------

/// Empirical false-alarm rate over `trials` CSCG noise frames with known variance.
[[nodiscard]] double empirical_false_alarm(std::size_t n_samples, double threshold, std::size_t trials,
                                           std::uint64_t seed);

/// Energy-detector curve over one dataset split. Frames are regenerated before
/// normalization; the threshold is CFAR for `pf_target` (exact Gamma when M is
/// infinite, exact F otherwise, re-estimating the variance every trial).
[[nodiscard]] DetectionCurve energy_detector_curve(const sigmod::DatasetSpec& spec, sigmod::Split split,
                                                   double pf_target, std::optional<std::size_t> m_samples);

}  // namespace specsense::endet
