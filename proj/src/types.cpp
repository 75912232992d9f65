#include "specsense/types.hpp"

#include <map>

#include "specsense/errors.hpp"

namespace specsense {

DetectionCurve tally_curve(std::string detector_id, const std::vector<Hypothesis>& labels,
                           const std::vector<double>& snr_db, const std::vector<Hypothesis>& decisions) {
  require(labels.size() == snr_db.size() && labels.size() == decisions.size(),
          "labels, SNRs and decisions must have equal length");
  std::size_t negatives = 0;
  std::size_t false_alarms = 0;
  std::map<double, std::pair<std::size_t, std::size_t>> buckets;  // snr -> (hits, total)
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool said_h1 = decisions[i] == Hypothesis::H1;
    if (labels[i] == Hypothesis::H0) {
      ++negatives;
      false_alarms += said_h1 ? 1 : 0;
    } else {
      auto& [hits, total] = buckets[snr_db[i]];
      hits += said_h1 ? 1 : 0;
      ++total;
    }
  }
  DetectionCurve curve;
  curve.detector_id = std::move(detector_id);
  curve.n_neg = negatives;
  curve.pf = negatives > 0 ? static_cast<double>(false_alarms) / static_cast<double>(negatives) : 0.0;
  for (const auto& [snr, counts] : buckets) {
    curve.pd_by_snr.push_back(
        {snr, static_cast<double>(counts.first) / static_cast<double>(counts.second), counts.second});
  }
  return curve;
}

}  // namespace specsense
