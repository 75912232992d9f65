#include <cmath>
#include <limits>

#include "specsense/endet.hpp"
#include "specsense/errors.hpp"

namespace specsense::endet {

double energy_statistic(const sigmod::IQFrame& frame, double sigma2_hat) {
  require(sigma2_hat > 0.0, "noise variance estimate must be positive");
  require(frame.size() > 0, "energy statistic of an empty frame");
  double energy = 0.0;
  for (const auto& y : frame.samples) energy += std::norm(y);
  return energy / (2.0 * sigma2_hat * static_cast<double>(frame.size()));
}

double cfar_threshold(double pf_target, std::size_t n_samples) {
  require(pf_target > 0.0 && pf_target < 1.0, "pf_target must lie in (0, 1)");
  require(n_samples >= 1, "n_samples must be positive");
  const double n = static_cast<double>(n_samples);
  return gamma_q_inv(n, pf_target) / n;
}

double cfar_threshold_estimated(double pf_target, std::size_t n_samples, std::size_t m_samples) {
  require(pf_target > 0.0 && pf_target < 1.0, "pf_target must lie in (0, 1)");
  require(n_samples >= 1 && m_samples >= 1, "sample counts must be positive");
  const double n = static_cast<double>(n_samples);
  const double m = static_cast<double>(m_samples);
  // Pr(F > t) = I_{M/(M+N t)}(M, N), decreasing in t.
  auto tail = [&](double t) { return beta_inc(m, n, m / (m + n * t)); };
  double lo = 0.0;
  double hi = 2.0;
  while (tail(hi) > pf_target) hi *= 2.0;
  for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (tail(mid) > pf_target)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

double estimate_noise(std::span<const sigmod::Complex> noise, std::size_t m_samples) {
  require(m_samples >= 1, "noise estimate needs at least one sample");
  require(noise.size() >= m_samples, "fewer noise samples than requested for the estimate");
  double sum = 0.0;
  for (std::size_t m = 0; m < m_samples; ++m) sum += std::norm(noise[m]);
  return sum / (2.0 * static_cast<double>(m_samples));
}

Hypothesis ed_detect(const sigmod::IQFrame& frame, const NoiseModel& noise, double threshold) {
  return energy_statistic(frame, noise.sigma2_hat) > threshold ? Hypothesis::H1 : Hypothesis::H0;
}

WallResult snr_wall(const WallQuery& query) {
  require(query.pf_target > 0.0 && query.pf_target < 1.0, "P_f must lie in (0, 1)");
  require(query.pd_target > 0.0 && query.pd_target < 1.0, "P_d must lie in (0, 1)");
  require(query.n_samples >= 1, "N must be positive");
  const double n = static_cast<double>(query.n_samples);
  double phi = 1.0 / n;
  if (query.m_samples) {
    require(*query.m_samples >= 1, "M must be positive");
    const double m = static_cast<double>(*query.m_samples);
    phi = (n + m) / (n * m);
  }
  const double root = std::sqrt(phi);
  const double denominator = 1.0 - q_inv(query.pf_target) * root;
  if (!(denominator > 0.0)) throw ValidationError("SNR wall undefined: 1 - Qinv(Pf) sqrt(phi) <= 0");
  WallResult r;
  r.gamma_linear = (1.0 - q_inv(query.pd_target) * root) / denominator - 1.0;
  r.gamma_db = r.gamma_linear > 0.0 ? 10.0 * std::log10(r.gamma_linear) : -std::numeric_limits<double>::infinity();
  return r;
}

double empirical_false_alarm(std::size_t n_samples, double threshold, std::size_t trials, std::uint64_t seed) {
  require(trials > 0, "need at least one trial");
  const RngStream root(seed);
  std::size_t alarms = 0;
  const auto noise = NoiseModel::known(0.5);
  for (std::size_t t = 0; t < trials; ++t) {
    RngStream rng = root.substream(t);
    const auto frame = sigmod::cscg_noise(n_samples, 2.0 * noise.sigma2, rng);
    if (ed_detect(frame, noise, threshold) == Hypothesis::H1) ++alarms;
  }
  return static_cast<double>(alarms) / static_cast<double>(trials);
}

DetectionCurve energy_detector_curve(const sigmod::DatasetSpec& spec, sigmod::Split split, double pf_target,
                                     std::optional<std::size_t> m_samples) {
  const auto plan = sigmod::plan_split(spec, split);
  const std::size_t offset = sigmod::split_offset(spec, split);
  const double threshold = m_samples ? cfar_threshold_estimated(pf_target, spec.sample_length, *m_samples)
                                     : cfar_threshold(pf_target, spec.sample_length);
  std::vector<Hypothesis> labels;
  std::vector<double> snrs;
  std::vector<Hypothesis> decisions;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const auto synth = sigmod::synthesize_frame(spec, plan[i], offset + i);
    NoiseModel noise = NoiseModel::known(synth.noise_variance / 2.0);
    if (m_samples) {
      noise.m_samples = m_samples;
      RngStream rng = sigmod::frame_streams(spec.seed, offset + i).noise.substream(0xED);
      const auto reference = sigmod::cscg_noise(*m_samples, synth.noise_variance, rng);
      noise.sigma2_hat = estimate_noise(reference.samples, *m_samples);
    }
    labels.push_back(plan[i].label);
    snrs.push_back(plan[i].snr_db);
    decisions.push_back(ed_detect(synth.received, noise, threshold));
  }
  std::string id = "energy-detector";
  if (m_samples) id += "-M" + std::to_string(*m_samples);
  return tally_curve(std::move(id), labels, snrs, decisions);
}

}  // namespace specsense::endet
