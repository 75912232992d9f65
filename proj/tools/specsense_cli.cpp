// specsense: dataset generation, training, evaluation and reports.
//
// Exit codes: 0 success, 2 invalid input, 3 runtime failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "specsense/bench.hpp"
#include "specsense/coopfuse.hpp"
#include "specsense/detectnet.hpp"
#include "specsense/endet.hpp"
#include "specsense/sigmod.hpp"

namespace fs = std::filesystem;
using namespace specsense;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::string out_dir;
  bool reference_precision = false;
  std::vector<std::string> overrides;  // key=value
};

bench::ExperimentConfig resolve(const Globals& g) {
  bench::ExperimentConfig c = g.config_path.empty() ? bench::ExperimentConfig{} : bench::load_config(g.config_path);
  for (const auto& kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + kv + "'");
    bench::apply_config_value(c, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (g.seed) bench::apply_config_value(c, "seed", std::to_string(*g.seed));
  if (!g.out_dir.empty()) c.out_dir = g.out_dir;
  if (g.reference_precision) c.reference_precision = true;
  if (c.dataset.schemes.empty()) throw ValidationError("no modulation schemes configured (set schemes=...)");
  c.validate();
  return c;
}

std::string stamp_comment(const bench::ExperimentConfig& c) {
  return "config_hash=" + bench::config_hash(c) + " seed=" + std::to_string(c.seed());
}

nlohmann::json stamp_json(const bench::ExperimentConfig& c) {
  return {{"config_hash", bench::config_hash(c)}, {"seed", c.seed()}};
}

void write_curves(const fs::path& dir, const std::vector<DetectionCurve>& curves, const std::string& comment) {
  fs::create_directories(dir);
  bench::write_curves_csv(dir / "curves.csv", curves, comment);
  std::ofstream dat(dir / "curves.dat", std::ios::binary | std::ios::trunc);
  bench::write_gnuplot_data(dat, curves, comment);
  std::cout << "wrote " << (dir / "curves.csv").string() << "\n";
}

std::vector<DetectionCurve> read_curves_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  return bench::parse_curves_csv(in);
}

detectnet::EpochCallback printer() {
  return [](std::string_view stage, const detectnet::EpochMetrics& m) {
    std::printf("%-6.*s epoch %3zu  val_loss %.5f  val_acc %.4f  pf %.4f\n", static_cast<int>(stage.size()),
                stage.data(), m.epoch, m.val_loss, m.val_acc, m.pf);
    std::fflush(stdout);
  };
}

// --- subcommands -----------------------------------------------------------------

void cmd_dataset_gen(const Globals& g) {
  const auto c = resolve(g);
  const fs::path dir = c.out_dir / "dataset";
  fs::create_directories(dir);
  const auto d = sigmod::synth_dataset(c.dataset, c.threads);
  for (auto s : {sigmod::Split::Train, sigmod::Split::Validation, sigmod::Split::Test}) {
    const auto path = dir / (std::string(sigmod::to_string(s)) + ".spsd");
    sigmod::write_dataset(path, c.dataset, s, d.split(s), stamp_json(c));
    std::cout << path.string() << "  " << bench::sha256_file(path) << "\n";
  }
}

std::vector<sigmod::LabeledFrame> load_split(const fs::path& dir, sigmod::Split s, sigmod::DatasetSpec* spec = nullptr) {
  auto f = sigmod::read_dataset(dir / (std::string(sigmod::to_string(s)) + ".spsd"));
  if (spec) *spec = f.spec;
  return std::move(f.frames);
}

template <typename T>
void train_detectnet(const Globals& g, const fs::path& dataset_dir) {
  auto c = resolve(g);
  sigmod::DatasetSpec spec;
  const auto train_frames = load_split(dataset_dir, sigmod::Split::Train, &spec);
  const auto val_frames = load_split(dataset_dir, sigmod::Split::Validation);
  if (spec.sample_length != c.model.sample_length)
    throw ValidationError("dataset sample length " + std::to_string(spec.sample_length) +
                          " differs from the configured model's " + std::to_string(c.model.sample_length));
  const auto train = detectnet::frames_to_examples<T>(train_frames);
  const auto val = detectnet::frames_to_examples<T>(val_frames);
  auto model = detectnet::build<T>(c.model, c.seed());
  std::printf("DetectNet: %zu parameters\n", model.network.parameter_count());

  fs::create_directories(c.out_dir);
  std::ofstream log(c.out_dir / "epochs.jsonl", std::ios::binary | std::ios::trunc);
  const auto stamp = stamp_json(c);
  const auto print = printer();
  auto on_epoch = [&](std::string_view st, const detectnet::EpochMetrics& m) {
    nlohmann::json line = stamp;
    line["stage"] = st;
    line.update(detectnet::to_json(m));
    log << line.dump() << '\n';
    log.flush();
    print(st, m);
  };
  detectnet::TrainingOptions opt;
  opt.adam.learning_rate = c.model.learning_rate;
  opt.batch_size = c.model.batch_size;
  opt.seed = c.seed();
  auto s1 = detectnet::train_stage1(model.network, train, val, c.policy, opt, on_epoch);
  auto s2 = detectnet::train_stage2(s1.best, train, val, c.policy, opt, on_epoch);
  nlohmann::json result = stamp;
  result["stage"] = "stage2-result";
  result["epoch"] = s2.checkpoint.epoch;
  result["pf"] = s2.checkpoint.metrics.pf;
  result["out_of_interval"] = s2.out_of_interval;
  log << result.dump() << '\n';
  if (s2.out_of_interval)
    std::printf("warning: validation Pf never entered [%g, %g]; kept epoch %zu (pf %.4f)\n", c.policy.pf_low,
                c.policy.pf_high, s2.checkpoint.epoch, s2.checkpoint.metrics.pf);
  model.network = std::move(s2.checkpoint.network);
  nlohmann::json meta = stamp;
  meta["epoch"] = s2.checkpoint.epoch;
  meta["metrics"] = detectnet::to_json(s2.checkpoint.metrics);
  meta["out_of_interval"] = s2.out_of_interval;
  detectnet::save_model(c.out_dir / "model.spck", model, meta);
  std::cout << "wrote " << (c.out_dir / "model.spck").string() << "\n";
}

template <typename T>
void eval_model(const Globals& g, const fs::path& model_path, const fs::path& dataset_path, double pd_target) {
  const auto model = detectnet::load_model<T>(model_path);
  const auto file = sigmod::read_dataset(dataset_path);
  const auto examples = detectnet::frames_to_examples<T>(file.frames);
  auto curve = detectnet::dl_curve(model.network, examples);
  std::string comment = "model=" + model_path.filename().string() + " seed=" + std::to_string(model.seed);
  write_curves(g.out_dir.empty() ? fs::path("out") : fs::path(g.out_dir), {curve}, comment);
  std::printf("pf %.4f over %zu noise frames\n", curve.pf, curve.n_neg);
  if (!curve.pd_by_snr.empty()) {
    const auto wall = bench::estimate_snr_wall(curve, pd_target);
    if (wall) std::printf("empirical SNR wall at Pd=%g: %.2f dB\n", pd_target, *wall);
    else std::printf("empirical SNR wall at Pd=%g: NONE\n", pd_target);
  }
}

void cmd_ed_baseline(const Globals& g, double pf, std::optional<std::size_t> m) {
  const auto c = resolve(g);
  auto curve = endet::energy_detector_curve(c.dataset, sigmod::Split::Test, pf, m);
  write_curves(c.out_dir, {curve}, stamp_comment(c));
  std::printf("target pf %g, empirical pf %.4f; threshold %.6f\n", pf, curve.pf,
              m ? endet::cfar_threshold_estimated(pf, c.dataset.sample_length, *m)
                : endet::cfar_threshold(pf, c.dataset.sample_length));
}

void cmd_wall_report(const Globals& g, const std::vector<std::size_t>& lengths, const std::vector<double>& pfs,
                     const std::vector<std::string>& curve_files, double pd_target) {
  std::vector<bench::WallRow> rows;
  if (curve_files.empty()) {
    rows = bench::edw_table(lengths, pfs, pd_target);
  } else {
    std::vector<DetectionCurve> curves;
    for (const auto& f : curve_files) {
      auto cs = read_curves_file(f);
      if (cs.empty()) throw ValidationError(f + " holds no curves");
      curves.push_back(cs.front());
    }
    std::vector<double> observed = pfs;
    if (observed.empty())
      for (const auto& c : curves) observed.push_back(c.pf);
    rows = bench::wall_report(lengths, observed, curves, pd_target);
  }
  std::cout << bench::format_wall_table(rows);
  if (!g.out_dir.empty()) {
    fs::create_directories(g.out_dir);
    std::ofstream out(fs::path(g.out_dir) / "wall.csv", std::ios::binary | std::ios::trunc);
    bench::write_wall_csv(out, rows);
  }
}

template <typename T>
void train_scn(const Globals& g, const std::vector<std::string>& node_models, std::size_t k) {
  auto c = resolve(g);
  std::vector<detectnet::DetectNet<T>> nodes;
  for (const auto& p : node_models) nodes.push_back(detectnet::load_model<T>(p));
  if (nodes.empty()) throw ValidationError("train scn needs at least one --node-model");
  const auto data = coopfuse::synth_coop_dataset<T>(c.dataset, k, nodes, c.threads);
  fs::create_directories(c.out_dir);
  const auto stamp = stamp_json(c);
  coopfuse::write_coop_examples(c.out_dir / "coop_train.spce", data.train, stamp);
  coopfuse::write_coop_examples(c.out_dir / "coop_val.spce", data.val, stamp);
  coopfuse::write_coop_examples(c.out_dir / "coop_test.spce", data.test, stamp);
  coopfuse::SCNConfig sc;
  sc.k = k;
  sc.dropout = c.model.dropout;
  sc.learning_rate = c.model.learning_rate;
  sc.batch_size = c.model.batch_size;
  auto r = coopfuse::scn_build_train<T>(sc, data.train, data.val, c.policy, c.seed(), printer());
  if (r.out_of_interval) std::printf("warning: SCN validation Pf never entered the stop interval\n");
  nlohmann::json meta = stamp;
  meta["epoch"] = r.epoch;
  meta["metrics"] = detectnet::to_json(r.metrics);
  meta["out_of_interval"] = r.out_of_interval;
  coopfuse::save_scn(c.out_dir / "scn.spck", r.model, meta);
  std::cout << "wrote " << (c.out_dir / "scn.spck").string() << "\n";
}

template <typename T>
void coop_eval(const Globals& g, const fs::path& examples_path, const std::string& scn_path) {
  const auto file = coopfuse::read_coop_examples(examples_path);
  std::vector<DetectionCurve> curves;
  for (auto rule : {coopfuse::FusionRule::LogicalOr, coopfuse::FusionRule::Majority, coopfuse::FusionRule::LogicalAnd})
    curves.push_back(coopfuse::coop_curve(rule, file.examples));
  if (!scn_path.empty()) {
    const auto scn = coopfuse::load_scn<T>(scn_path);
    curves.push_back(coopfuse::coop_curve<T>(coopfuse::FusionRule::Scn, file.examples, &scn));
  }
  for (const auto& c : curves) std::printf("%-12s pf %.4f\n", c.detector_id.c_str(), c.pf);
  write_curves(g.out_dir.empty() ? fs::path("out") : fs::path(g.out_dir), curves,
               "examples=" + examples_path.filename().string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectrum-sensing toolkit: synthesis, detectors, training and evaluation"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Master seed")->group("Global");
  app.add_option("--config", g.config_path, "Flat key=value experiment config")->group("Global");
  app.add_option("--out", g.out_dir, "Output directory")->group("Global");
  app.add_flag("--reference-precision", g.reference_precision, "64-bit arithmetic throughout")->group("Global");
  app.add_option("--set", g.overrides, "Override one config key (key=value), repeatable")->group("Global");
  app.fallthrough();

  auto* dataset = app.add_subcommand("dataset", "Dataset operations");
  dataset->require_subcommand(1);
  auto* gen = dataset->add_subcommand("gen", "Generate train/validation/test SPSD files");

  auto* train = app.add_subcommand("train", "Train a model");
  train->require_subcommand(1);
  auto* train_dn = train->add_subcommand("detectnet", "Two-stage DetectNet training");
  std::string dataset_dir;
  train_dn->add_option("--dataset-dir", dataset_dir, "Directory holding train.spsd and validation.spsd")->required();
  auto* train_scn_cmd = train->add_subcommand("scn", "Generate cooperative examples and train SoftCombinationNet");
  std::vector<std::string> node_models;
  std::size_t k = 2;
  train_scn_cmd->add_option("--node-model", node_models, "Node DetectNet checkpoint (one shared, or one per node)")
      ->required();
  train_scn_cmd->add_option("--k", k, "Number of sensing nodes")->check(CLI::Range(1, 255));

  auto* eval = app.add_subcommand("eval", "Evaluate a DetectNet checkpoint on an SPSD split");
  std::string model_path, dataset_path;
  double pd_target = 0.9;
  eval->add_option("--model", model_path)->required();
  eval->add_option("--dataset", dataset_path, "SPSD file, usually test.spsd")->required();
  eval->add_option("--pd-target", pd_target);

  auto* ed = app.add_subcommand("ed-baseline", "Energy-detector curve on the configured test split");
  double ed_pf = 0.1;
  std::optional<std::size_t> ed_m;
  ed->add_option("--pf", ed_pf, "CFAR target")->required();
  ed->add_option("--m", ed_m, "Noise-estimation samples (omit for known noise)");

  auto* wall = app.add_subcommand("wall-report", "EDW/DLW table");
  std::vector<std::size_t> lengths;
  std::vector<double> pfs;
  std::vector<std::string> curve_files;
  wall->add_option("--n", lengths, "Sample lengths")->required()->delimiter(',');
  wall->add_option("--pf", pfs, "Observed Pf per length")->delimiter(',');
  wall->add_option("--curves", curve_files, "One curves.csv per length (first curve is used)")->delimiter(',');
  wall->add_option("--pd-target", pd_target);

  auto* coop = app.add_subcommand("coop", "Cooperative sensing");
  coop->require_subcommand(1);
  auto* coop_eval_cmd = coop->add_subcommand("eval", "Fusion curves (OR, MAJORITY, AND, optional SCN)");
  std::string examples_path, scn_path;
  coop_eval_cmd->add_option("--examples", examples_path, "SPCE file")->required();
  coop_eval_cmd->add_option("--scn", scn_path, "SCN checkpoint");

  auto* run = app.add_subcommand("run", "generate, train and evaluate from one config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  if (seed_opt->count() > 0) g.seed = seed;

  try {
    if (gen->parsed()) {
      cmd_dataset_gen(g);
    } else if (train_dn->parsed()) {
      if (g.reference_precision) train_detectnet<double>(g, dataset_dir);
      else train_detectnet<float>(g, dataset_dir);
    } else if (train_scn_cmd->parsed()) {
      if (g.reference_precision) train_scn<double>(g, node_models, k);
      else train_scn<float>(g, node_models, k);
    } else if (eval->parsed()) {
      if (g.reference_precision) eval_model<double>(g, model_path, dataset_path, pd_target);
      else eval_model<float>(g, model_path, dataset_path, pd_target);
    } else if (ed->parsed()) {
      cmd_ed_baseline(g, ed_pf, ed_m);
    } else if (wall->parsed()) {
      cmd_wall_report(g, lengths, pfs, curve_files, pd_target);
    } else if (coop_eval_cmd->parsed()) {
      if (g.reference_precision) coop_eval<double>(g, examples_path, scn_path);
      else coop_eval<float>(g, examples_path, scn_path);
    } else if (run->parsed()) {
      const auto c = resolve(g);
      const auto r = bench::run_experiment(c, &std::cout);
      std::cout << "config_hash " << r.config_hash << "\n";
      for (const auto& [file, digest] : r.file_sha256) std::cout << digest << "  " << file << "\n";
      if (r.out_of_interval) std::cout << "warning: stage-2 Pf stayed outside the stop interval\n";
    }
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "failure: %s\n", e.what());
    return 3;
  }
  return 0;
}
