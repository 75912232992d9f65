#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <thread>

#include "specsense/binary_io.hpp"
#include "specsense/errors.hpp"
#include "specsense/sigmod.hpp"

namespace specsense::sigmod {

namespace {

constexpr std::uint64_t kPlanStreamTag = 1ULL << 63;

double round_to_f32(double x) { return static_cast<double>(static_cast<float>(x)); }

}  // namespace

std::vector<double> DatasetSpec::default_snr_grid() {
  std::vector<double> grid;
  for (int s = -20; s <= 20; ++s) grid.push_back(s);
  return grid;
}

void DatasetSpec::validate() const {
  require(!schemes.empty(), "dataset needs at least one modulation scheme");
  for (std::size_t i = 0; i < schemes.size(); ++i)
    for (std::size_t j = i + 1; j < schemes.size(); ++j)
      require(schemes[i] != schemes[j], "duplicate modulation scheme in dataset spec");
  require(sample_length >= 1, "sample_length must be positive");
  require(samples_per_symbol >= 1, "samples_per_symbol must be positive");
  require(!snr_grid.empty(), "snr_grid must not be empty");
  for (std::size_t i = 0; i < snr_grid.size(); ++i) {
    require(std::isfinite(snr_grid[i]), "snr_grid values must be finite");
    require(i == 0 || snr_grid[i] > snr_grid[i - 1], "snr_grid must be strictly increasing");
  }
  require(total_count() > 0, "dataset must contain at least one frame");
  require(positive_fraction > 0.0 && positive_fraction < 1.0, "positive_fraction must lie in (0, 1)");
  require(pulse.rolloff > 0.0 && pulse.rolloff <= 1.0, "rolloff must lie in (0, 1]");
  require(pulse.span_symbols >= 2, "pulse span must be >= 2 symbols");
  require(fsk.mod_index > 0.0, "FSK modulation index must be positive");
  require(fsk.bt > 0.0, "GFSK BT must be positive");
  require(fsk.gaussian_span_symbols >= 1, "Gaussian span must be >= 1 symbol");
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Validation: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Split split_from_string(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "val" || name == "validation") return Split::Validation;
  if (name == "test") return Split::Test;
  throw ValidationError("unknown split: " + std::string(name));
}

const std::vector<LabeledFrame>& Dataset::split(Split s) const {
  switch (s) {
    case Split::Train: return train;
    case Split::Validation: return val;
    case Split::Test: return test;
  }
  return train;
}

std::size_t split_offset(const DatasetSpec& spec, Split split) {
  switch (split) {
    case Split::Train: return 0;
    case Split::Validation: return spec.train_count;
    case Split::Test: return spec.train_count + spec.val_count;
  }
  return 0;
}

static std::size_t split_count(const DatasetSpec& spec, Split split) {
  switch (split) {
    case Split::Train: return spec.train_count;
    case Split::Validation: return spec.val_count;
    case Split::Test: return spec.test_count;
  }
  return 0;
}

std::vector<FramePlan> plan_split(const DatasetSpec& spec, Split split) {
  spec.validate();
  const std::size_t n = split_count(spec, split);
  auto positives = static_cast<std::size_t>(std::llround(static_cast<double>(n) * spec.positive_fraction));
  positives = std::min(positives, n);
  RngStream rng = RngStream(spec.seed).substream(kPlanStreamTag | static_cast<std::uint64_t>(split));

  const std::size_t n_schemes = spec.schemes.size();
  const std::size_t cells = n_schemes * spec.snr_grid.size();
  std::vector<FramePlan> plan(n);
  for (std::size_t j = 0; j < positives; ++j) {
    const std::size_t c = j % cells;
    plan[j].label = Hypothesis::H1;
    plan[j].mod = spec.schemes[c % n_schemes];
    plan[j].snr_db = spec.snr_grid[c / n_schemes];
  }
  for (std::size_t j = positives; j < n; ++j) {
    plan[j].label = Hypothesis::H0;
    plan[j].snr_db = spec.snr_grid[rng.uniform_index(spec.snr_grid.size())];
  }
  for (std::size_t i = n; i > 1; --i) std::swap(plan[i - 1], plan[rng.uniform_index(i)]);
  return plan;
}

FrameStreams frame_streams(std::uint64_t seed, std::size_t global_index) {
  const RngStream base = RngStream(seed).substream(global_index);
  return {base.substream(1), base.substream(2), base.substream(3)};
}

FrameSynthesis synthesize_frame(const DatasetSpec& spec, const FramePlan& plan, std::size_t global_index) {
  auto streams = frame_streams(spec.seed, global_index);
  FrameSynthesis out;
  if (plan.label == Hypothesis::H1) {
    if (!plan.mod) throw ValidationError("H1 frame plan without modulation");
    out.clean = modulated_frame(*plan.mod, spec.sample_length, spec.samples_per_symbol, spec.pulse, spec.fsk,
                                streams.signal);
    out.gain = std::polar(1.0, 2.0 * std::numbers::pi * streams.channel.uniform());
    out.noise_variance = std::norm(out.gain) * out.clean.power() / std::pow(10.0, plan.snr_db / 10.0);
    out.received = apply_channel(out.clean, {out.gain, plan.snr_db}, streams.noise);
  } else {
    out.noise_variance = 1.0;
    out.received = cscg_noise(spec.sample_length, out.noise_variance, streams.noise);
  }
  out.labeled.frame = energy_normalize(out.received);
  for (auto& s : out.labeled.frame.samples) s = {round_to_f32(s.real()), round_to_f32(s.imag())};
  out.labeled.label = plan.label;
  out.labeled.mod = plan.label == Hypothesis::H1 ? plan.mod : std::nullopt;
  out.labeled.snr_db = plan.snr_db;
  return out;
}

std::vector<LabeledFrame> synth_split(const DatasetSpec& spec, Split split, unsigned threads) {
  const auto plan = plan_split(spec, split);
  const std::size_t offset = split_offset(spec, split);
  std::vector<LabeledFrame> frames(plan.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) frames[i] = synthesize_frame(spec, plan[i], offset + i).labeled;
  };
  threads = std::max(1u, threads);
  if (threads == 1 || plan.size() < 2) {
    work(0, plan.size());
    return frames;
  }
  {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (plan.size() + threads - 1) / threads;
    for (std::size_t begin = 0; begin < plan.size(); begin += chunk)
      pool.emplace_back(work, begin, std::min(plan.size(), begin + chunk));
  }
  return frames;
}

Dataset synth_dataset(const DatasetSpec& spec, unsigned threads) {
  spec.validate();
  Dataset d;
  d.train = synth_split(spec, Split::Train, threads);
  d.val = synth_split(spec, Split::Validation, threads);
  d.test = synth_split(spec, Split::Test, threads);
  return d;
}

// --- serialization -----------------------------------------------------------

nlohmann::json spec_to_json(const DatasetSpec& spec) {
  nlohmann::json j;
  std::vector<int> ids;
  for (auto s : spec.schemes) ids.push_back(static_cast<int>(s));
  j["schemes"] = ids;
  j["sample_length"] = spec.sample_length;
  j["samples_per_symbol"] = spec.samples_per_symbol;
  j["snr_grid"] = spec.snr_grid;
  j["counts"] = {spec.train_count, spec.val_count, spec.test_count};
  j["positive_fraction"] = spec.positive_fraction;
  j["seed"] = spec.seed;
  j["rolloff"] = spec.pulse.rolloff;
  j["pulse_span"] = spec.pulse.span_symbols;
  j["fsk_mod_index"] = spec.fsk.mod_index;
  j["gfsk_bt"] = spec.fsk.bt;
  j["gaussian_span"] = spec.fsk.gaussian_span_symbols;
  return j;
}

DatasetSpec spec_from_json(const nlohmann::json& j) {
  try {
    DatasetSpec spec;
    spec.schemes.clear();
    for (int id : j.at("schemes")) spec.schemes.push_back(scheme_from_id(static_cast<std::uint8_t>(id)));
    spec.sample_length = j.at("sample_length").get<std::size_t>();
    spec.samples_per_symbol = j.at("samples_per_symbol").get<int>();
    spec.snr_grid = j.at("snr_grid").get<std::vector<double>>();
    const auto counts = j.at("counts").get<std::vector<std::size_t>>();
    require(counts.size() == 3, "counts must hold (train, val, test)");
    spec.train_count = counts[0];
    spec.val_count = counts[1];
    spec.test_count = counts[2];
    spec.positive_fraction = j.at("positive_fraction").get<double>();
    spec.seed = j.at("seed").get<std::uint64_t>();
    spec.pulse.rolloff = j.value("rolloff", spec.pulse.rolloff);
    spec.pulse.span_symbols = j.value("pulse_span", spec.pulse.span_symbols);
    spec.fsk.mod_index = j.value("fsk_mod_index", spec.fsk.mod_index);
    spec.fsk.bt = j.value("gfsk_bt", spec.fsk.bt);
    spec.fsk.gaussian_span_symbols = j.value("gaussian_span", spec.fsk.gaussian_span_symbols);
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed dataset spec: ") + e.what());
  }
}

void write_dataset(std::ostream& out, const DatasetSpec& spec, Split split, const std::vector<LabeledFrame>& frames,
                   const nlohmann::json& extra) {
  for (double s : spec.snr_grid) {
    require(s == std::round(s) && std::abs(s) <= std::numeric_limits<std::int16_t>::max(),
            "SPSD stores SNR as whole dB in s16; grid value out of range");
  }
  nlohmann::json header = spec_to_json(spec);
  for (const auto& [k, v] : extra.items()) header[k] = v;
  header["format"] = "SPSD";
  header["split"] = std::string(to_string(split));
  header["count"] = frames.size();
  io::write_container_header(out, "SPSD", kDatasetFormatVersion, header.dump());

  for (const auto& f : frames) {
    require(f.frame.size() == spec.sample_length, "frame length does not match dataset sample_length");
    require((f.label == Hypothesis::H0) == !f.mod.has_value(), "label/modulation mismatch (H0 iff no modulation)");
    io::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(f.label));
    io::write_le<std::uint8_t>(out, f.mod ? static_cast<std::uint8_t>(*f.mod) : kNoModulation);
    io::write_le<std::int16_t>(out, static_cast<std::int16_t>(std::lround(f.snr_db)));
    for (const auto& s : f.frame.samples) {
      io::write_le<float>(out, static_cast<float>(s.real()));
      io::write_le<float>(out, static_cast<float>(s.imag()));
    }
  }
  if (!out) throw RuntimeFailure("failed writing dataset stream");
}

void write_dataset(const std::filesystem::path& path, const DatasetSpec& spec, Split split,
                   const std::vector<LabeledFrame>& frames, const nlohmann::json& extra) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot open " + path.string() + " for writing");
  write_dataset(out, spec, split, frames, extra);
}

DatasetFile read_dataset(std::istream& in) {
  const auto container = io::read_container_header(in, "SPSD");
  require(container.version == kDatasetFormatVersion, "unsupported SPSD version " + std::to_string(container.version));
  DatasetFile file;
  try {
    file.header = nlohmann::json::parse(container.header);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("SPSD header is not valid JSON: ") + e.what());
  }
  file.spec = spec_from_json(file.header);
  file.split = split_from_string(file.header.at("split").get<std::string>());
  const auto count = file.header.at("count").get<std::size_t>();
  const std::size_t n = file.spec.sample_length;
  file.frames.resize(count);
  for (auto& f : file.frames) {
    const auto label = io::read_le<std::uint8_t>(in);
    const auto mod = io::read_le<std::uint8_t>(in);
    require(label <= 1, "invalid hypothesis label in SPSD record");
    f.label = static_cast<Hypothesis>(label);
    if (mod == kNoModulation) {
      require(f.label == Hypothesis::H0, "H1 record without modulation id");
    } else {
      require(f.label == Hypothesis::H1, "H0 record with modulation id");
      f.mod = scheme_from_id(mod);
    }
    f.snr_db = io::read_le<std::int16_t>(in);
    f.frame.samples.resize(n);
    for (auto& s : f.frame.samples) {
      const float i = io::read_le<float>(in);
      const float q = io::read_le<float>(in);
      s = {i, q};
    }
  }
  return file;
}

DatasetFile read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open dataset " + path.string());
  return read_dataset(in);
}

}  // namespace specsense::sigmod
