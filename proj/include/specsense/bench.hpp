#pragma once

// Evaluation harness: curve CSV and plot data, SNR-wall estimation from
// empirical curves, wall tables, experiment configs and the end-to-end runner.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "specsense/detectnet.hpp"
#include "specsense/sigmod.hpp"
#include "specsense/types.hpp"

namespace specsense::bench {

// --- curves ------------------------------------------------------------------------

inline constexpr std::string_view kCsvHeader = "detector,snr_db,pd,pf,n_pos,n_neg";

/// One row per (curve, snr) with pf replicated; a curve with no Pd points gets
/// a single row with empty snr_db/pd/n_pos. `comment`, when nonempty, is
/// written as a leading "# ..." line.
void write_curves_csv(std::ostream& out, const std::vector<DetectionCurve>& curves, const std::string& comment = {});
void write_curves_csv(const std::filesystem::path& path, const std::vector<DetectionCurve>& curves,
                      const std::string& comment = {});
[[nodiscard]] std::string curves_csv(const std::vector<DetectionCurve>& curves, const std::string& comment = {});

/// Inverse of write_curves_csv; skips "#" lines. Curves come back in first-seen order.
[[nodiscard]] std::vector<DetectionCurve> parse_curves_csv(std::istream& in);
[[nodiscard]] std::vector<DetectionCurve> parse_curves_csv(const std::string& text);

/// gnuplot data: one indexed block per curve, columns snr_db pd pf.
void write_gnuplot_data(std::ostream& out, const std::vector<DetectionCurve>& curves, const std::string& comment = {});

/// Lowest SNR from which Pd stays at or above `pd_target` on every later grid
/// point, with linear interpolation into the preceding grid interval. Empty
/// when the last point is still below target.
[[nodiscard]] std::optional<double> estimate_snr_wall(const DetectionCurve& curve, double pd_target);

struct WallRow {
  double pf = 0.0;
  std::size_t n = 0;
  double edw_db = 0.0;
  std::optional<double> dlw_db;
  std::optional<double> improvement_db;  // edw - dlw
};

/// EDW only (no trained models): one row per (N, pf).
[[nodiscard]] std::vector<WallRow> edw_table(std::span<const std::size_t> lengths, std::span<const double> pf_observed,
                                             double pd_target = 0.9);

/// Full table; needs one curve per length.
[[nodiscard]] std::vector<WallRow> wall_report(std::span<const std::size_t> lengths,
                                               std::span<const double> pf_observed,
                                               std::span<const DetectionCurve> curves, double pd_target = 0.9);

[[nodiscard]] std::string format_wall_table(const std::vector<WallRow>& rows);
void write_wall_csv(std::ostream& out, const std::vector<WallRow>& rows, const std::string& comment = {});

// --- hashing -------------------------------------------------------------------------

[[nodiscard]] std::string sha256_hex(std::string_view bytes);
[[nodiscard]] std::string sha256_file(const std::filesystem::path& path);

// --- experiments -----------------------------------------------------------------------

struct ExperimentConfig {
  sigmod::DatasetSpec dataset;
  std::string detector = "detectnet";  // detectnet | energy
  detectnet::DetectNetConfig model;
  detectnet::StopPolicy policy;
  std::optional<std::size_t> ed_m_samples;
  std::optional<double> ed_pf;  // default: the trained detector's test Pf
  double pd_target = 0.9;
  bool reference_precision = false;
  unsigned threads = 1;
  std::filesystem::path out_dir = "out";
  bool seed_set = false;

  [[nodiscard]] std::uint64_t seed() const noexcept { return dataset.seed; }
  void validate() const;
};

/// Parses a flat "key = value" document; '#' starts a comment. Unknown keys
/// and malformed values throw ValidationError.
[[nodiscard]] ExperimentConfig parse_config(const std::string& text);
[[nodiscard]] ExperimentConfig load_config(const std::filesystem::path& path);
/// Applies one key=value pair (the same keys parse_config accepts).
void apply_config_value(ExperimentConfig& config, const std::string& key, const std::string& value);

/// Canonical key=value rendering, sorted by key. Excludes out_dir and threads,
/// which do not change results.
[[nodiscard]] std::string canonical_config(const ExperimentConfig& config);
/// SHA-256 of canonical_config.
[[nodiscard]] std::string config_hash(const ExperimentConfig& config);

struct ExperimentResult {
  std::filesystem::path out_dir;
  std::string config_hash;
  std::map<std::string, std::string> file_sha256;  // relative path -> digest
  std::vector<DetectionCurve> curves;
  std::optional<detectnet::EpochMetrics> epoch0;
  bool out_of_interval = false;
};

/// generate -> train -> evaluate into config.out_dir. Writes an INCOMPLETE
/// marker first and removes it on success; failures rethrow as RuntimeFailure
/// (ValidationError stays ValidationError) prefixed with the stage name.
ExperimentResult run_experiment(const ExperimentConfig& config, std::ostream* log = nullptr);

}  // namespace specsense::bench
