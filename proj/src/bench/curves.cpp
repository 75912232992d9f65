#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "specsense/bench.hpp"
#include "specsense/endet.hpp"

namespace specsense::bench {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_double(std::string_view s, std::size_t line) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
    throw ValidationError("CSV line " + std::to_string(line) + ": bad number '" + std::string(s) + "'");
  return v;
}

std::size_t parse_count(std::string_view s, std::size_t line) {
  std::size_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
    throw ValidationError("CSV line " + std::to_string(line) + ": bad count '" + std::string(s) + "'");
  return v;
}

std::vector<std::string_view> split_commas(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == ',') {
      out.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

}  // namespace

void write_curves_csv(std::ostream& out, const std::vector<DetectionCurve>& curves, const std::string& comment) {
  if (!comment.empty()) out << "# " << comment << '\n';
  out << kCsvHeader << '\n';
  for (const auto& c : curves) {
    require(c.detector_id.find_first_of(",\n\r\"#") == std::string::npos && !c.detector_id.empty(),
            "detector id must be nonempty and free of commas, quotes, '#' and line breaks");
    if (c.pd_by_snr.empty()) {
      out << c.detector_id << ",,," << fmt_double(c.pf) << ",," << c.n_neg << '\n';
      continue;
    }
    for (const auto& p : c.pd_by_snr) {
      out << c.detector_id << ',' << fmt_double(p.snr_db) << ',' << fmt_double(p.pd) << ',' << fmt_double(c.pf)
          << ',' << p.n_pos << ',' << c.n_neg << '\n';
    }
  }
}

void write_curves_csv(const std::filesystem::path& path, const std::vector<DetectionCurve>& curves,
                      const std::string& comment) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot open " + path.string() + " for writing");
  write_curves_csv(out, curves, comment);
  if (!out) throw RuntimeFailure("failed writing " + path.string());
}

std::string curves_csv(const std::vector<DetectionCurve>& curves, const std::string& comment) {
  std::ostringstream s;
  write_curves_csv(s, curves, comment);
  return s.str();
}

std::vector<DetectionCurve> parse_curves_csv(std::istream& in) {
  std::vector<DetectionCurve> curves;
  std::map<std::string, std::size_t, std::less<>> index;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (!header_seen) {
      if (line != kCsvHeader) throw ValidationError("CSV header must be '" + std::string(kCsvHeader) + "'");
      header_seen = true;
      continue;
    }
    const auto f = split_commas(line);
    if (f.size() != 6) throw ValidationError("CSV line " + std::to_string(line_no) + ": expected 6 fields");
    const std::string id(f[0]);
    const double pf = parse_double(f[3], line_no);
    const std::size_t n_neg = parse_count(f[5], line_no);
    auto it = index.find(id);
    if (it == index.end()) {
      it = index.emplace(id, curves.size()).first;
      curves.push_back({id, pf, n_neg, {}});
    }
    auto& c = curves[it->second];
    if (c.pf != pf || c.n_neg != n_neg)
      throw ValidationError("CSV line " + std::to_string(line_no) + ": pf/n_neg differ within detector " + id);
    if (f[1].empty() && f[2].empty() && f[4].empty()) continue;
    const PdPoint p{parse_double(f[1], line_no), parse_double(f[2], line_no), parse_count(f[4], line_no)};
    if (!c.pd_by_snr.empty() && !(p.snr_db > c.pd_by_snr.back().snr_db))
      throw ValidationError("CSV line " + std::to_string(line_no) + ": snr_db not strictly increasing");
    c.pd_by_snr.push_back(p);
  }
  if (!header_seen) throw ValidationError("CSV has no header line");
  return curves;
}

std::vector<DetectionCurve> parse_curves_csv(const std::string& text) {
  std::istringstream s(text);
  return parse_curves_csv(s);
}

void write_gnuplot_data(std::ostream& out, const std::vector<DetectionCurve>& curves, const std::string& comment) {
  if (!comment.empty()) out << "# " << comment << '\n';
  bool first = true;
  for (const auto& c : curves) {
    if (!first) out << "\n\n";
    first = false;
    out << "# " << c.detector_id << "\n# snr_db pd pf\n";
    for (const auto& p : c.pd_by_snr) out << fmt_double(p.snr_db) << ' ' << fmt_double(p.pd) << ' ' << fmt_double(c.pf) << '\n';
  }
}

std::optional<double> estimate_snr_wall(const DetectionCurve& curve, double pd_target) {
  require(!curve.pd_by_snr.empty(), "cannot estimate a wall from an empty curve");
  require(pd_target > 0.0 && pd_target < 1.0, "pd_target must lie in (0, 1)");
  const auto& pts = curve.pd_by_snr;
  std::size_t below = pts.size();
  for (std::size_t i = pts.size(); i-- > 0;) {
    if (pts[i].pd < pd_target) {
      below = i;
      break;
    }
  }
  if (below == pts.size()) return pts.front().snr_db;
  if (below + 1 == pts.size()) return std::nullopt;
  const auto& a = pts[below];
  const auto& b = pts[below + 1];
  return a.snr_db + (pd_target - a.pd) / (b.pd - a.pd) * (b.snr_db - a.snr_db);
}

std::vector<WallRow> edw_table(std::span<const std::size_t> lengths, std::span<const double> pf_observed,
                               double pd_target) {
  require(lengths.size() == pf_observed.size(), "need one observed Pf per sample length");
  std::vector<WallRow> rows;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    WallRow r;
    r.n = lengths[i];
    r.pf = pf_observed[i];
    r.edw_db = endet::snr_wall({r.pf, pd_target, r.n, std::nullopt}).gamma_db;
    rows.push_back(r);
  }
  return rows;
}

std::vector<WallRow> wall_report(std::span<const std::size_t> lengths, std::span<const double> pf_observed,
                                 std::span<const DetectionCurve> curves, double pd_target) {
  if (curves.size() != lengths.size())
    throw ValidationError("wall report needs one curve per sample length (" + std::to_string(lengths.size()) +
                          " lengths, " + std::to_string(curves.size()) + " curves)");
  auto rows = edw_table(lengths, pf_observed, pd_target);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].dlw_db = estimate_snr_wall(curves[i], pd_target);
    if (rows[i].dlw_db) rows[i].improvement_db = rows[i].edw_db - *rows[i].dlw_db;
  }
  return rows;
}

std::string format_wall_table(const std::vector<WallRow>& rows) {
  std::ostringstream s;
  char buf[160];
  s << "    Pf      N   EDW(dB)   DLW(dB)  Improvement(dB)\n";
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%6.2f%% %5zu %9.2f", 100.0 * r.pf, r.n, r.edw_db);
    s << buf;
    if (r.dlw_db) {
      std::snprintf(buf, sizeof buf, " %9.2f %16.2f\n", *r.dlw_db, *r.improvement_db);
    } else {
      std::snprintf(buf, sizeof buf, " %9s %16s\n", "NONE", "-");
    }
    s << buf;
  }
  return s.str();
}

void write_wall_csv(std::ostream& out, const std::vector<WallRow>& rows, const std::string& comment) {
  if (!comment.empty()) out << "# " << comment << '\n';
  out << "pf,n,edw_db,dlw_db,improvement_db\n";
  for (const auto& r : rows) {
    out << fmt_double(r.pf) << ',' << r.n << ',' << fmt_double(r.edw_db) << ','
        << (r.dlw_db ? fmt_double(*r.dlw_db) : "") << ',' << (r.improvement_db ? fmt_double(*r.improvement_db) : "")
        << '\n';
  }
}

}  // namespace specsense::bench
