#include <algorithm>
#include <cmath>
#include <numbers>

#include "specsense/errors.hpp"
#include "specsense/sigmod.hpp"

namespace specsense::sigmod {

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<Complex> build_constellation(ModScheme scheme) {
  std::vector<Complex> points;
  auto square_qam = [&](int side) {
    std::vector<double> levels;
    for (int i = 0; i < side; ++i) levels.push_back(2.0 * i - (side - 1));
    double energy = 0.0;
    for (double a : levels)
      for (double b : levels) energy += a * a + b * b;
    const double scale = 1.0 / std::sqrt(energy / (side * side));
    for (int q = 0; q < side; ++q)
      for (int i = 0; i < side; ++i) points.emplace_back(levels[i] * scale, levels[q] * scale);
  };
  switch (scheme) {
    case ModScheme::BPSK:
      points = {{1.0, 0.0}, {-1.0, 0.0}};
      break;
    case ModScheme::QPSK:
      for (int k = 0; k < 4; ++k) points.push_back(std::polar(1.0, kPi / 4.0 + k * kPi / 2.0));
      break;
    case ModScheme::PSK8:
      for (int k = 0; k < 8; ++k) points.push_back(std::polar(1.0, k * kPi / 4.0));
      break;
    case ModScheme::PAM4: {
      const double scale = 1.0 / std::sqrt(5.0);
      for (double a : {-3.0, -1.0, 1.0, 3.0}) points.emplace_back(a * scale, 0.0);
      break;
    }
    case ModScheme::QAM16:
      square_qam(4);
      break;
    case ModScheme::QAM64:
      square_qam(8);
      break;
    case ModScheme::CPFSK:
    case ModScheme::GFSK:
      throw ValidationError("FSK schemes have no constellation; use fsk_modulate");
  }
  return points;
}

const std::vector<Complex>& constellation(ModScheme scheme) {
  static const auto table = [] {
    std::array<std::vector<Complex>, 8> t;
    for (ModScheme s : kAllSchemes)
      if (!is_fsk(s)) t[static_cast<std::size_t>(s)] = build_constellation(s);
    return t;
  }();
  if (is_fsk(scheme)) throw ValidationError("FSK schemes have no constellation; use fsk_modulate");
  return table[static_cast<std::size_t>(scheme)];
}

}  // namespace

std::string_view to_string(ModScheme scheme) {
  switch (scheme) {
    case ModScheme::BPSK: return "BPSK";
    case ModScheme::QPSK: return "QPSK";
    case ModScheme::PSK8: return "PSK8";
    case ModScheme::CPFSK: return "CPFSK";
    case ModScheme::QAM16: return "QAM16";
    case ModScheme::QAM64: return "QAM64";
    case ModScheme::GFSK: return "GFSK";
    case ModScheme::PAM4: return "PAM4";
  }
  return "?";
}

ModScheme scheme_from_string(std::string_view name) {
  if (name == "8PSK") return ModScheme::PSK8;
  for (ModScheme s : kAllSchemes)
    if (to_string(s) == name) return s;
  throw ValidationError("unknown modulation scheme: " + std::string(name));
}

ModScheme scheme_from_id(std::uint8_t id) {
  if (id >= kAllSchemes.size()) throw ValidationError("modulation id out of range: " + std::to_string(id));
  return kAllSchemes[id];
}

std::size_t alphabet_size(ModScheme scheme) { return is_fsk(scheme) ? 2 : constellation(scheme).size(); }

double IQFrame::power() const noexcept {
  if (samples.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& s : samples) sum += std::norm(s);
  return sum / static_cast<double>(samples.size());
}

std::vector<Complex> map_symbols(ModScheme scheme, std::span<const std::uint32_t> indices) {
  const auto& points = constellation(scheme);
  std::vector<Complex> out;
  out.reserve(indices.size());
  for (auto idx : indices) {
    if (idx >= points.size()) {
      throw ValidationError("symbol index " + std::to_string(idx) + " out of range for " + std::string(to_string(scheme)));
    }
    out.push_back(points[idx]);
  }
  return out;
}

std::vector<double> rrc_taps(int sps, double rolloff, int span_symbols) {
  require(sps >= 1, "samples per symbol must be >= 1");
  require(rolloff > 0.0 && rolloff <= 1.0, "rolloff must lie in (0, 1]");
  require(span_symbols >= 2, "filter span must be >= 2 symbols");
  const int length = span_symbols * sps + 1;
  const double beta = rolloff;
  std::vector<double> taps(length);
  for (int n = 0; n < length; ++n) {
    const double t = static_cast<double>(n - length / 2) / sps;
    double h;
    if (std::abs(t) < 1e-12) {
      h = 1.0 - beta + 4.0 * beta / kPi;
    } else if (std::abs(std::abs(t) - 1.0 / (4.0 * beta)) < 1e-12) {
      h = beta / std::sqrt(2.0) *
          ((1.0 + 2.0 / kPi) * std::sin(kPi / (4.0 * beta)) + (1.0 - 2.0 / kPi) * std::cos(kPi / (4.0 * beta)));
    } else {
      const double x = 4.0 * beta * t;
      h = (std::sin(kPi * t * (1.0 - beta)) + x * std::cos(kPi * t * (1.0 + beta))) / (kPi * t * (1.0 - x * x));
    }
    taps[n] = h;
  }
  double energy = 0.0;
  for (double h : taps) energy += h * h;
  const double scale = std::sqrt(sps / energy);
  for (double& h : taps) h *= scale;
  return taps;
}

std::vector<Complex> interpolate(std::span<const Complex> symbols, int sps, std::span<const double> taps) {
  require(sps >= 1, "samples per symbol must be >= 1");
  require(!taps.empty(), "empty filter");
  const std::size_t upsampled = symbols.size() * static_cast<std::size_t>(sps);
  std::vector<Complex> out(upsampled + taps.size() - 1, Complex{});
  for (std::size_t k = 0; k < symbols.size(); ++k) {
    const std::size_t base = k * static_cast<std::size_t>(sps);
    for (std::size_t j = 0; j < taps.size(); ++j) out[base + j] += symbols[k] * taps[j];
  }
  return out;
}

IQFrame pulse_shape(std::span<const Complex> symbols, int sps, double rolloff, int span_symbols,
                    std::size_t sample_length) {
  const auto taps = rrc_taps(sps, rolloff, span_symbols);
  const std::size_t transient = taps.size() - 1;
  const std::size_t upsampled = symbols.size() * static_cast<std::size_t>(sps);
  if (upsampled < transient + sample_length) {
    throw ValidationError("too few symbols to fill a frame of " + std::to_string(sample_length) +
                          " samples after transient trimming");
  }
  const auto full = interpolate(symbols, sps, taps);
  const std::size_t steady = upsampled - transient;
  const std::size_t start = transient + (steady - sample_length) / 2;
  IQFrame frame;
  frame.samples.assign(full.begin() + static_cast<std::ptrdiff_t>(start),
                       full.begin() + static_cast<std::ptrdiff_t>(start + sample_length));
  return frame;
}

std::vector<double> gaussian_taps(int sps, double bt, int span_symbols) {
  require(sps >= 1, "samples per symbol must be >= 1");
  require(bt > 0.0, "BT must be positive");
  require(span_symbols >= 1, "Gaussian span must be >= 1 symbol");
  const int length = span_symbols * sps + 1;
  // Standard deviation in symbol periods for a Gaussian filter of 3 dB bandwidth B.
  const double sigma = std::sqrt(std::log(2.0)) / (2.0 * kPi * bt);
  std::vector<double> taps(length);
  double sum = 0.0;
  for (int n = 0; n < length; ++n) {
    const double t = static_cast<double>(n - length / 2) / sps;
    taps[n] = std::exp(-t * t / (2.0 * sigma * sigma));
    sum += taps[n];
  }
  for (double& g : taps) g /= sum;
  return taps;
}

IQFrame fsk_modulate(ModScheme scheme, std::span<const std::uint32_t> bits, int sps, double mod_index, double bt,
                     int gaussian_span_symbols) {
  require(is_fsk(scheme), "fsk_modulate requires CPFSK or GFSK");
  require(sps >= 1, "samples per symbol must be >= 1");
  const std::size_t n = bits.size() * static_cast<std::size_t>(sps);
  std::vector<double> freq(n);
  for (std::size_t k = 0; k < bits.size(); ++k) {
    if (bits[k] > 1) throw ValidationError("FSK symbol indices must be binary");
    std::fill_n(freq.begin() + static_cast<std::ptrdiff_t>(k * sps), sps, bits[k] ? 1.0 : -1.0);
  }
  if (scheme == ModScheme::GFSK) {
    const auto g = gaussian_taps(sps, bt, gaussian_span_symbols);
    const auto half = static_cast<std::ptrdiff_t>(g.size() / 2);
    std::vector<double> shaped(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < g.size(); ++j) {
        const auto src = static_cast<std::ptrdiff_t>(i) + static_cast<std::ptrdiff_t>(j) - half;
        if (src >= 0 && src < static_cast<std::ptrdiff_t>(n)) acc += g[j] * freq[static_cast<std::size_t>(src)];
      }
      shaped[i] = acc;
    }
    freq = std::move(shaped);
  }
  IQFrame frame;
  frame.samples.resize(n);
  double phase = 0.0;
  const double step = kPi * mod_index / sps;
  for (std::size_t i = 0; i < n; ++i) {
    frame.samples[i] = std::polar(1.0, phase);
    phase = std::remainder(phase + step * freq[i], 2.0 * kPi);
  }
  return frame;
}

IQFrame apply_channel(const IQFrame& frame, const ChannelDraw& draw, RngStream& rng) {
  const double ps = frame.power();
  if (!(ps > 0.0) || !std::isfinite(ps)) throw ValidationError("apply_channel needs a frame with finite nonzero power");
  IQFrame out;
  out.samples.resize(frame.size());
  const bool noiseless = std::isinf(draw.snr_db) && draw.snr_db > 0.0;
  // h = 0 leaves no received signal to reference; fall back to the unfaded noise level.
  const double ref = std::norm(draw.gain) > 0.0 ? std::norm(draw.gain) * ps : ps;
  const double variance = noiseless ? 0.0 : ref / std::pow(10.0, draw.snr_db / 10.0);
  for (std::size_t n = 0; n < frame.size(); ++n) {
    out.samples[n] = draw.gain * frame.samples[n];
    if (!noiseless) out.samples[n] += rng.complex_normal(variance);
  }
  return out;
}

IQFrame energy_normalize(const IQFrame& frame) {
  const double p = frame.power();
  if (!(p > 0.0) || !std::isfinite(p)) throw ValidationError("cannot energy-normalize a zero-power frame");
  const double scale = 1.0 / std::sqrt(p);
  IQFrame out = frame;
  for (auto& s : out.samples) s *= scale;
  return out;
}

IQFrame cscg_noise(std::size_t n, double variance, RngStream& rng) {
  IQFrame frame;
  frame.samples.resize(n);
  for (auto& s : frame.samples) s = rng.complex_normal(variance);
  return frame;
}

IQFrame modulated_frame(ModScheme scheme, std::size_t sample_length, int sps, const PulseParams& pulse,
                        const FskParams& fsk, RngStream& rng) {
  const std::size_t core = (sample_length + static_cast<std::size_t>(sps) - 1) / static_cast<std::size_t>(sps);
  if (is_fsk(scheme)) {
    const std::size_t margin = static_cast<std::size_t>(fsk.gaussian_span_symbols);
    std::vector<std::uint32_t> bits(core + 2 * margin);
    for (auto& b : bits) b = static_cast<std::uint32_t>(rng.uniform_index(2));
    const auto full = fsk_modulate(scheme, bits, sps, fsk.mod_index, fsk.bt, fsk.gaussian_span_symbols);
    const std::size_t start = (full.size() - sample_length) / 2;
    IQFrame frame;
    frame.samples.assign(full.samples.begin() + static_cast<std::ptrdiff_t>(start),
                         full.samples.begin() + static_cast<std::ptrdiff_t>(start + sample_length));
    return frame;
  }
  const std::size_t m = alphabet_size(scheme);
  std::vector<std::uint32_t> idx(core + 2 * static_cast<std::size_t>(pulse.span_symbols));
  for (auto& i : idx) i = static_cast<std::uint32_t>(rng.uniform_index(m));
  const auto symbols = map_symbols(scheme, idx);
  return pulse_shape(symbols, sps, pulse.rolloff, pulse.span_symbols, sample_length);
}

}  // namespace specsense::sigmod
