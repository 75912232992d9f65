#pragma once

// Baseband signal synthesis: constellations, pulse shaping, FSK, the
// y = h s + w channel, energy normalization and labeled dataset assembly.

#include <array>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "specsense/rng.hpp"
#include "specsense/types.hpp"

namespace specsense::sigmod {

using Complex = std::complex<double>;

enum class ModScheme : std::uint8_t { BPSK = 0, QPSK = 1, PSK8 = 2, CPFSK = 3, QAM16 = 4, QAM64 = 5, GFSK = 6, PAM4 = 7 };

inline constexpr std::array<ModScheme, 8> kAllSchemes = {ModScheme::BPSK,  ModScheme::QPSK,  ModScheme::PSK8,
                                                         ModScheme::CPFSK, ModScheme::QAM16, ModScheme::QAM64,
                                                         ModScheme::GFSK,  ModScheme::PAM4};

/// On-disk mod_id for H0 frames.
inline constexpr std::uint8_t kNoModulation = 255;

[[nodiscard]] std::string_view to_string(ModScheme scheme);
/// Accepts the canonical names plus "8PSK".
[[nodiscard]] ModScheme scheme_from_string(std::string_view name);
[[nodiscard]] ModScheme scheme_from_id(std::uint8_t id);
[[nodiscard]] constexpr bool is_fsk(ModScheme s) noexcept { return s == ModScheme::CPFSK || s == ModScheme::GFSK; }
/// Number of constellation points; 2 for the binary FSK schemes.
[[nodiscard]] std::size_t alphabet_size(ModScheme scheme);

struct IQFrame {
  std::vector<Complex> samples;

  [[nodiscard]] std::size_t size() const noexcept { return samples.size(); }
  /// (1/N) sum |y(n)|^2
  [[nodiscard]] double power() const noexcept;
};

struct ChannelDraw {
  Complex gain{1.0, 0.0};
  double snr_db = 0.0;  // +inf disables the noise
};

struct LabeledFrame {
  IQFrame frame;
  Hypothesis label = Hypothesis::H0;
  std::optional<ModScheme> mod;  // empty iff label == H0
  double snr_db = 0.0;
};

struct PulseParams {
  double rolloff = 0.35;
  int span_symbols = 8;
};

struct FskParams {
  double mod_index = 0.5;
  double bt = 0.3;
  int gaussian_span_symbols = 4;
};

struct DatasetSpec {
  std::vector<ModScheme> schemes;
  std::size_t sample_length = 128;
  int samples_per_symbol = 8;
  std::vector<double> snr_grid = default_snr_grid();
  std::size_t train_count = 48000;
  std::size_t val_count = 16000;
  std::size_t test_count = 16000;
  double positive_fraction = 0.5;
  std::uint64_t seed = 0;
  PulseParams pulse{};
  FskParams fsk{};

  static std::vector<double> default_snr_grid();  // -20..20 dB, 1 dB steps
  /// Throws ValidationError describing the first offending field.
  void validate() const;
  [[nodiscard]] std::size_t total_count() const noexcept { return train_count + val_count + test_count; }
};

enum class Split : std::uint8_t { Train = 0, Validation = 1, Test = 2 };
[[nodiscard]] std::string_view to_string(Split split);
[[nodiscard]] Split split_from_string(std::string_view name);

struct Dataset {
  std::vector<LabeledFrame> train;
  std::vector<LabeledFrame> val;
  std::vector<LabeledFrame> test;

  [[nodiscard]] const std::vector<LabeledFrame>& split(Split s) const;
};

// --- synthesis primitives ---------------------------------------------------

/// Unit-average-energy constellation points. Throws for FSK schemes and out-of-range indices.
[[nodiscard]] std::vector<Complex> map_symbols(ModScheme scheme, std::span<const std::uint32_t> indices);

/// Root-raised-cosine taps of length span*sps+1, scaled so sum(h^2) == sps
/// (unit-energy symbols give unit average output power).
[[nodiscard]] std::vector<double> rrc_taps(int sps, double rolloff, int span_symbols);

/// Zero-stuffing interpolation followed by full linear convolution with `taps`.
/// Symbol k contributes its peak at output index k*sps + (taps.size()-1)/2.
[[nodiscard]] std::vector<Complex> interpolate(std::span<const Complex> symbols, int sps, std::span<const double> taps);

/// RRC-shaped frame of exactly `sample_length` samples, center-cropped from the
/// steady-state part of the filtered stream. Needs at least
/// ceil(sample_length/sps) + span_symbols symbols.
[[nodiscard]] IQFrame pulse_shape(std::span<const Complex> symbols, int sps, double rolloff, int span_symbols,
                                  std::size_t sample_length);

/// Gaussian frequency-pulse taps (unit DC gain) for GFSK, length span*sps+1.
[[nodiscard]] std::vector<double> gaussian_taps(int sps, double bt, int span_symbols);

/// Continuous-phase FSK of a bit sequence. Output has bits.size()*sps
/// unit-magnitude samples; sample n+1 advances the phase of sample n by
/// pi * mod_index * f[n] / sps where f is the NRZ (+-1) bit waveform, Gaussian
/// filtered for GFSK. Bit 0 maps to -1 (the lower tone).
[[nodiscard]] IQFrame fsk_modulate(ModScheme scheme, std::span<const std::uint32_t> bits, int sps,
                                   double mod_index, double bt, int gaussian_span_symbols = 4);

/// h*s(n) + w(n) with per-sample noise variance |h|^2 P_s / 10^(snr_db/10),
/// P_s being the realized power of the input frame. With h = 0 the variance
/// is P_s / 10^(snr_db/10), so the output is pure noise.
[[nodiscard]] IQFrame apply_channel(const IQFrame& frame, const ChannelDraw& draw, RngStream& rng);

/// Scales the frame to unit average power.
[[nodiscard]] IQFrame energy_normalize(const IQFrame& frame);

/// Clean modulated frame with i.i.d. uniform symbols drawn from `rng`.
[[nodiscard]] IQFrame modulated_frame(ModScheme scheme, std::size_t sample_length, int sps, const PulseParams& pulse,
                                      const FskParams& fsk, RngStream& rng);

/// Samples of CSCG noise with E|w|^2 = variance.
[[nodiscard]] IQFrame cscg_noise(std::size_t n, double variance, RngStream& rng);

// --- dataset assembly -------------------------------------------------------

struct FramePlan {
  Hypothesis label = Hypothesis::H0;
  std::optional<ModScheme> mod;
  double snr_db = 0.0;
};

/// Label/scheme/SNR assignment for one split: positives round-robin over
/// (snr, scheme) cells, then shuffled with a stream derived from (seed, split).
[[nodiscard]] std::vector<FramePlan> plan_split(const DatasetSpec& spec, Split split);

/// Index of a split's first frame in the dataset-wide frame numbering.
[[nodiscard]] std::size_t split_offset(const DatasetSpec& spec, Split split);

/// All intermediate quantities of one frame's synthesis.
struct FrameSynthesis {
  IQFrame clean;           // s(n), empty for H0
  Complex gain{0.0, 0.0};  // h, zero for H0
  double noise_variance = 0.0;
  IQFrame received;        // y(n) before normalization
  LabeledFrame labeled;    // normalized, rounded to f32 precision
};

/// Synthesizes frame `global_index` from its own substream of the dataset seed.
[[nodiscard]] FrameSynthesis synthesize_frame(const DatasetSpec& spec, const FramePlan& plan, std::size_t global_index);

/// Substreams used by synthesize_frame, exposed so callers can regenerate parts of a frame.
struct FrameStreams {
  RngStream signal;
  RngStream channel;
  RngStream noise;
};
[[nodiscard]] FrameStreams frame_streams(std::uint64_t seed, std::size_t global_index);

/// Generates all three splits. Output is independent of `threads`.
[[nodiscard]] Dataset synth_dataset(const DatasetSpec& spec, unsigned threads = 1);
[[nodiscard]] std::vector<LabeledFrame> synth_split(const DatasetSpec& spec, Split split, unsigned threads = 1);

// --- SPSD files -------------------------------------------------------------

inline constexpr std::uint16_t kDatasetFormatVersion = 1;

[[nodiscard]] nlohmann::json spec_to_json(const DatasetSpec& spec);
[[nodiscard]] DatasetSpec spec_from_json(const nlohmann::json& j);

struct DatasetFile {
  DatasetSpec spec;
  Split split = Split::Train;
  nlohmann::json header;
  std::vector<LabeledFrame> frames;
};

/// `extra` is merged into the header (run metadata such as config hash).
void write_dataset(std::ostream& out, const DatasetSpec& spec, Split split, const std::vector<LabeledFrame>& frames,
                   const nlohmann::json& extra = nlohmann::json::object());
void write_dataset(const std::filesystem::path& path, const DatasetSpec& spec, Split split,
                   const std::vector<LabeledFrame>& frames, const nlohmann::json& extra = nlohmann::json::object());
[[nodiscard]] DatasetFile read_dataset(std::istream& in);
[[nodiscard]] DatasetFile read_dataset(const std::filesystem::path& path);

}  // namespace specsense::sigmod
