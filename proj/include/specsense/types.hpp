#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace specsense {

enum class Hypothesis : std::uint8_t { H0 = 0, H1 = 1 };

/// Softmax output of a detector for one frame; index 0 is H0, index 1 is H1.
struct ProbPair {
  double p0 = 0.5;
  double p1 = 0.5;
};

/// Argmax decision with ties going to H0.
[[nodiscard]] constexpr Hypothesis decide(const ProbPair& p) noexcept {
  return p.p1 > p.p0 ? Hypothesis::H1 : Hypothesis::H0;
}

struct PdPoint {
  double snr_db = 0.0;
  double pd = 0.0;
  std::size_t n_pos = 0;

  friend bool operator==(const PdPoint&, const PdPoint&) = default;
};

/// Pf over all H0 frames plus Pd per nominal SNR over the H1 frames.
struct DetectionCurve {
  std::string detector_id;
  double pf = 0.0;
  std::size_t n_neg = 0;
  std::vector<PdPoint> pd_by_snr;  // strictly increasing snr_db

  friend bool operator==(const DetectionCurve&, const DetectionCurve&) = default;
};

/// Tallies decisions into a curve. Frames are bucketed by their nominal SNR;
/// SNRs without positive frames are omitted.
DetectionCurve tally_curve(std::string detector_id, const std::vector<Hypothesis>& labels,
                           const std::vector<double>& snr_db, const std::vector<Hypothesis>& decisions);

}  // namespace specsense
