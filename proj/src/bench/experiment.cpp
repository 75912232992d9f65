#include <fstream>
#include <functional>

#include "specsense/bench.hpp"
#include "specsense/endet.hpp"

namespace specsense::bench {

namespace fs = std::filesystem;

namespace {

template <typename F>
auto stage(const char* name, F&& body) {
  try {
    return body();
  } catch (const ValidationError& e) {
    throw ValidationError(std::string("[") + name + "] " + e.what());
  } catch (const std::exception& e) {
    throw RuntimeFailure(std::string("[") + name + "] " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw RuntimeFailure("failed writing " + path.string());
}

struct Trained {
  std::optional<detectnet::EpochMetrics> epoch0;
  bool out_of_interval = false;
  DetectionCurve curve;
};

template <typename T>
Trained train_and_test(const ExperimentConfig& c, const sigmod::Dataset& data, const fs::path& dir,
                       const nlohmann::json& stamp, std::ostream* log) {
  Trained out;
  detectnet::ExampleSet<T> train, val, test;
  detectnet::DetectNet<T> model;
  stage("train", [&] {
    train = detectnet::frames_to_examples<T>(data.train);
    val = detectnet::frames_to_examples<T>(data.val);
    model = detectnet::build<T>(c.model, c.seed());
    std::ofstream epochs(dir / "epochs.jsonl", std::ios::binary | std::ios::trunc);
    auto on_epoch = [&](std::string_view st, const detectnet::EpochMetrics& m) {
      nlohmann::json line = stamp;
      line["stage"] = st;
      line.update(detectnet::to_json(m));
      epochs << line.dump() << '\n';
      epochs.flush();
      if (log) {
        *log << st << " epoch " << m.epoch << " val_loss " << m.val_loss << " val_acc " << m.val_acc << " pf "
             << m.pf << std::endl;
      }
    };
    detectnet::TrainingOptions opt;
    opt.adam.learning_rate = c.model.learning_rate;
    opt.batch_size = c.model.batch_size;
    opt.seed = c.seed();
    auto s1 = detectnet::train_stage1(model.network, train, val, c.policy, opt, on_epoch);
    out.epoch0 = s1.history.front();
    auto s2 = detectnet::train_stage2(s1.best, train, val, c.policy, opt, on_epoch);
    out.out_of_interval = s2.out_of_interval;
    nlohmann::json flag = stamp;
    flag["stage"] = "stage2-result";
    flag["epoch"] = s2.checkpoint.epoch;
    flag["pf"] = s2.checkpoint.metrics.pf;
    flag["out_of_interval"] = s2.out_of_interval;
    epochs << flag.dump() << '\n';
    model.network = std::move(s2.checkpoint.network);
    nlohmann::json meta = stamp;
    meta["epoch"] = s2.checkpoint.epoch;
    meta["metrics"] = detectnet::to_json(s2.checkpoint.metrics);
    meta["out_of_interval"] = s2.out_of_interval;
    detectnet::save_model(dir / "model.spck", model, meta);
    return 0;
  });
  stage("evaluate", [&] {
    test = detectnet::frames_to_examples<T>(data.test);
    out.curve = detectnet::dl_curve(model.network, test);
    return 0;
  });
  return out;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& c, std::ostream* log) {
  stage("config", [&] {
    c.validate();
    return 0;
  });
  ExperimentResult result;
  result.out_dir = c.out_dir;
  result.config_hash = config_hash(c);
  const fs::path dir = c.out_dir;
  const nlohmann::json stamp = {{"config_hash", result.config_hash}, {"seed", c.seed()}};
  const std::string comment = "config_hash=" + result.config_hash + " seed=" + std::to_string(c.seed());

  stage("setup", [&] {
    fs::create_directories(dir / "dataset");
    write_text(dir / "INCOMPLETE", "run started; outputs in this directory are partial\n");
    write_text(dir / "config.txt", "# " + comment + "\n" + canonical_config(c));
    return 0;
  });

  const auto data = stage("generate", [&] {
    if (log) *log << "generating dataset (" << c.dataset.total_count() << " frames)" << std::endl;
    auto d = sigmod::synth_dataset(c.dataset, c.threads);
    for (auto s : {sigmod::Split::Train, sigmod::Split::Validation, sigmod::Split::Test})
      sigmod::write_dataset(dir / "dataset" / (std::string(sigmod::to_string(s)) + ".spsd"), c.dataset, s,
                            d.split(s), stamp);
    return d;
  });

  if (c.detector == "detectnet") {
    auto t = c.reference_precision ? train_and_test<double>(c, data, dir, stamp, log)
                                   : train_and_test<float>(c, data, dir, stamp, log);
    result.epoch0 = t.epoch0;
    result.out_of_interval = t.out_of_interval;
    result.curves.push_back(std::move(t.curve));
  }

  stage("evaluate", [&] {
    const double ed_pf = c.ed_pf ? *c.ed_pf : result.curves.front().pf;
    if (ed_pf > 0.0 && ed_pf < 1.0) {
      if (log) *log << "energy detector baseline at pf " << ed_pf << std::endl;
      result.curves.push_back(
          endet::energy_detector_curve(c.dataset, sigmod::Split::Test, ed_pf, c.ed_m_samples));
    } else if (log) {
      *log << "skipping energy detector baseline: detector pf " << ed_pf << " is not in (0, 1)" << std::endl;
    }
    write_curves_csv(dir / "curves.csv", result.curves, comment);
    std::ofstream dat(dir / "curves.dat", std::ios::binary | std::ios::trunc);
    write_gnuplot_data(dat, result.curves, comment);

    std::vector<std::size_t> lengths;
    std::vector<double> pfs;
    std::vector<DetectionCurve> curves;
    for (const auto& curve : result.curves) {
      if (curve.pf <= 0.0 || curve.pf >= 1.0 || curve.pd_by_snr.empty()) continue;
      lengths.push_back(c.dataset.sample_length);
      pfs.push_back(curve.pf);
      curves.push_back(curve);
    }
    const auto rows = wall_report(lengths, pfs, curves, c.pd_target);
    std::string table = "# " + comment + "\n";
    for (std::size_t i = 0; i < rows.size(); ++i) table += "# row " + std::to_string(i) + ": " + curves[i].detector_id + "\n";
    write_text(dir / "wall.txt", table + format_wall_table(rows));
    std::ofstream wall(dir / "wall.csv", std::ios::binary | std::ios::trunc);
    write_wall_csv(wall, rows, comment);
    return 0;
  });

  stage("manifest", [&] {
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
      if (!entry.is_regular_file()) continue;
      const auto rel = fs::relative(entry.path(), dir).generic_string();
      if (rel == "INCOMPLETE" || rel == "manifest.json") continue;
      result.file_sha256[rel] = sha256_file(entry.path());
    }
    nlohmann::json manifest = stamp;
    manifest["files"] = result.file_sha256;
    manifest["detector"] = c.detector;
    manifest["out_of_interval"] = result.out_of_interval;
    if (result.epoch0) manifest["epoch0"] = detectnet::to_json(*result.epoch0);
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
    fs::remove(dir / "INCOMPLETE");
    return 0;
  });
  return result;
}

}  // namespace specsense::bench
