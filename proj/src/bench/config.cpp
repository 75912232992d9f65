#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include <openssl/evp.h>

#include "specsense/bench.hpp"

namespace specsense::bench {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string fmt_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double to_double(const std::string& key, const std::string& v) {
  double x = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (r.ec != std::errc{} || r.ptr != v.data() + v.size() || !std::isfinite(x))
    throw ValidationError("config key '" + key + "': '" + v + "' is not a number");
  return x;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (r.ec != std::errc{} || r.ptr != v.data() + v.size())
    throw ValidationError("config key '" + key + "': '" + v + "' is not a non-negative integer");
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ValidationError("config key '" + key + "': '" + v + "' is not a boolean");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream s(v);
  std::string item;
  while (std::getline(s, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

/// "a:b:step" or a comma list.
std::vector<double> parse_grid(const std::string& key, const std::string& v) {
  std::vector<double> grid;
  if (v.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream s(v);
    std::string item;
    while (std::getline(s, item, ':')) parts.push_back(trim(item));
    if (parts.size() != 3) throw ValidationError("config key '" + key + "': range must be start:stop:step");
    const double a = to_double(key, parts[0]), b = to_double(key, parts[1]), step = to_double(key, parts[2]);
    if (!(step > 0.0) || b < a) throw ValidationError("config key '" + key + "': empty or invalid range");
    const auto n = static_cast<std::size_t>(std::floor((b - a) / step + 1e-9)) + 1;
    for (std::size_t i = 0; i < n; ++i) grid.push_back(a + static_cast<double>(i) * step);
    return grid;
  }
  for (const auto& item : split_list(v)) grid.push_back(to_double(key, item));
  return grid;
}

}  // namespace

void ExperimentConfig::validate() const {
  require(seed_set, "config must set a seed");
  dataset.validate();
  require(detector == "detectnet" || detector == "energy", "detector must be 'detectnet' or 'energy'");
  require(model.sample_length == dataset.sample_length, "model sample length must equal the dataset's");
  model.validate();
  policy.validate();
  require(pd_target > 0.0 && pd_target < 1.0, "pd_target must lie in (0, 1)");
  if (ed_pf) require(*ed_pf > 0.0 && *ed_pf < 1.0, "ed_pf must lie in (0, 1)");
  if (ed_m_samples) require(*ed_m_samples > 0, "ed_m must be positive");
  if (detector == "energy") require(ed_pf.has_value(), "the energy detector needs ed_pf");
}

void apply_config_value(ExperimentConfig& c, const std::string& key, const std::string& value) {
  const auto& v = value;
  auto& d = c.dataset;
  auto& m = c.model;
  auto& p = c.policy;
  if (key == "seed") {
    d.seed = to_u64(key, v);
    c.seed_set = true;
  } else if (key == "schemes") {
    d.schemes.clear();
    for (const auto& s : split_list(v)) d.schemes.push_back(sigmod::scheme_from_string(s));
  } else if (key == "sample_length") {
    d.sample_length = to_u64(key, v);
    m.sample_length = d.sample_length;
  } else if (key == "samples_per_symbol") {
    d.samples_per_symbol = static_cast<int>(to_u64(key, v));
  } else if (key == "snr_grid") {
    d.snr_grid = parse_grid(key, v);
  } else if (key == "train_count") {
    d.train_count = to_u64(key, v);
  } else if (key == "val_count") {
    d.val_count = to_u64(key, v);
  } else if (key == "test_count") {
    d.test_count = to_u64(key, v);
  } else if (key == "positive_fraction") {
    d.positive_fraction = to_double(key, v);
  } else if (key == "rolloff") {
    d.pulse.rolloff = to_double(key, v);
  } else if (key == "pulse_span") {
    d.pulse.span_symbols = static_cast<int>(to_u64(key, v));
  } else if (key == "fsk_mod_index") {
    d.fsk.mod_index = to_double(key, v);
  } else if (key == "fsk_bt") {
    d.fsk.bt = to_double(key, v);
  } else if (key == "detector") {
    c.detector = v;
  } else if (key == "conv_filters") {
    m.conv_filters = to_u64(key, v);
  } else if (key == "kernel") {
    m.kernel = to_u64(key, v);
  } else if (key == "lstm_cells") {
    m.lstm_cells = to_u64(key, v);
  } else if (key == "fc1_units") {
    m.fc1_units = to_u64(key, v);
  } else if (key == "dropout") {
    m.dropout = to_double(key, v);
  } else if (key == "learning_rate") {
    m.learning_rate = to_double(key, v);
  } else if (key == "batch_size") {
    m.batch_size = to_u64(key, v);
  } else if (key == "patience") {
    p.stage1_patience = to_u64(key, v);
  } else if (key == "stage1_max_epochs") {
    p.stage1_max_epochs = to_u64(key, v);
  } else if (key == "stage2_max_epochs") {
    p.stage2_max_epochs = to_u64(key, v);
  } else if (key == "pf_low") {
    p.pf_low = to_double(key, v);
  } else if (key == "pf_high") {
    p.pf_high = to_double(key, v);
  } else if (key == "ed_m") {
    c.ed_m_samples = to_u64(key, v);
  } else if (key == "ed_pf") {
    c.ed_pf = to_double(key, v);
  } else if (key == "pd_target") {
    c.pd_target = to_double(key, v);
  } else if (key == "reference_precision") {
    c.reference_precision = to_bool(key, v);
  } else if (key == "threads") {
    c.threads = static_cast<unsigned>(std::max<std::uint64_t>(1, to_u64(key, v)));
  } else if (key == "out_dir") {
    c.out_dir = v;
  } else {
    throw ValidationError("unknown config key '" + key + "'");
  }
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config line " + std::to_string(line_no) + ": expected key = value");
    const auto key = trim(std::string_view(line).substr(0, eq));
    const auto value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw ValidationError("config line " + std::to_string(line_no) + ": empty key");
    apply_config_value(c, key, value);
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open config " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return parse_config(s.str());
}

std::string canonical_config(const ExperimentConfig& c) {
  std::map<std::string, std::string> kv;
  const auto& d = c.dataset;
  std::string schemes;
  for (auto s : d.schemes) schemes += (schemes.empty() ? "" : ",") + std::string(sigmod::to_string(s));
  std::string grid;
  for (double g : d.snr_grid) grid += (grid.empty() ? "" : ",") + fmt_double(g);
  kv["seed"] = std::to_string(d.seed);
  kv["schemes"] = schemes;
  kv["sample_length"] = std::to_string(d.sample_length);
  kv["samples_per_symbol"] = std::to_string(d.samples_per_symbol);
  kv["snr_grid"] = grid;
  kv["train_count"] = std::to_string(d.train_count);
  kv["val_count"] = std::to_string(d.val_count);
  kv["test_count"] = std::to_string(d.test_count);
  kv["positive_fraction"] = fmt_double(d.positive_fraction);
  kv["rolloff"] = fmt_double(d.pulse.rolloff);
  kv["pulse_span"] = std::to_string(d.pulse.span_symbols);
  kv["fsk_mod_index"] = fmt_double(d.fsk.mod_index);
  kv["fsk_bt"] = fmt_double(d.fsk.bt);
  kv["detector"] = c.detector;
  kv["conv_filters"] = std::to_string(c.model.conv_filters);
  kv["kernel"] = std::to_string(c.model.kernel);
  kv["lstm_cells"] = std::to_string(c.model.lstm_cells);
  kv["fc1_units"] = std::to_string(c.model.fc1_units);
  kv["dropout"] = fmt_double(c.model.dropout);
  kv["learning_rate"] = fmt_double(c.model.learning_rate);
  kv["batch_size"] = std::to_string(c.model.batch_size);
  kv["patience"] = std::to_string(c.policy.stage1_patience);
  kv["stage1_max_epochs"] = std::to_string(c.policy.stage1_max_epochs);
  kv["stage2_max_epochs"] = std::to_string(c.policy.stage2_max_epochs);
  kv["pf_low"] = fmt_double(c.policy.pf_low);
  kv["pf_high"] = fmt_double(c.policy.pf_high);
  if (c.ed_m_samples) kv["ed_m"] = std::to_string(*c.ed_m_samples);
  if (c.ed_pf) kv["ed_pf"] = fmt_double(*c.ed_pf);
  kv["pd_target"] = fmt_double(c.pd_target);
  kv["reference_precision"] = c.reference_precision ? "true" : "false";
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

std::string config_hash(const ExperimentConfig& config) { return sha256_hex(canonical_config(config)); }

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw RuntimeFailure("SHA-256 computation failed");
  std::ostringstream s;
  for (unsigned int i = 0; i < len; ++i) s << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return s.str();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeFailure("cannot open " + path.string() + " for hashing");
  std::ostringstream s;
  s << in.rdbuf();
  return sha256_hex(s.str());
}

}  // namespace specsense::bench
