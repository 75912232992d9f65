#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "specsense/bench.hpp"
#include "specsense/endet.hpp"

using namespace specsense;
using namespace specsense::bench;
namespace fs = std::filesystem;

namespace {

DetectionCurve make_curve(std::string id, double pf, std::vector<std::pair<double, double>> pts, std::size_t n = 100) {
  DetectionCurve c;
  c.detector_id = std::move(id);
  c.pf = pf;
  c.n_neg = 1000;
  for (auto [s, p] : pts) c.pd_by_snr.push_back({s, p, n});
  return c;
}

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("specsense_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const char* kSmallConfig = R"(# small end-to-end run
seed = 5
schemes = GFSK
sample_length = 32
snr_grid = -4:4:4
train_count = 400
val_count = 200
test_count = 200
conv_filters = 4
kernel = 4
lstm_cells = 6
fc1_units = 8
batch_size = 50
learning_rate = 0.003
patience = 1
stage1_max_epochs = 2
stage2_max_epochs = 1
)";

ExperimentConfig small_config(const fs::path& out) {
  auto c = parse_config(kSmallConfig);
  c.out_dir = out;
  return c;
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(SPECSENSE_CLI) + " " + args + " >" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("curve CSV round-trips exactly") {
  const std::vector<DetectionCurve> curves = {
      make_curve("detectnet", 0.0734, {{-20, 0.1}, {-3, 0.333333333333333315}, {7, 1.0}}),
      make_curve("ed_pf0.0734", 1.0 / 3.0, {{-1.5, 0.0}, {0, 2.0 / 3.0}}),
      make_curve("empty", 0.25, {}),
  };
  const auto text = curves_csv(curves, "config_hash=abc seed=1");
  CHECK(text.rfind("# config_hash=abc seed=1\n", 0) == 0);
  CHECK(text.find(std::string(kCsvHeader) + "\n") != std::string::npos);
  CHECK(text.find('\r') == std::string::npos);
  CHECK(parse_curves_csv(text) == curves);
  CHECK(curves_csv(parse_curves_csv(text), "config_hash=abc seed=1") == text);
}

TEST_CASE("curve CSV rejects bad ids and malformed input") {
  std::ostringstream out;
  CHECK_THROWS_AS(write_curves_csv(out, {make_curve("a,b", 0.1, {})}), ValidationError);
  CHECK_THROWS_AS(write_curves_csv(out, {make_curve("", 0.1, {})}), ValidationError);
  CHECK_THROWS_AS((void)parse_curves_csv(std::string("wrong,header\n")), ValidationError);
  const std::string h = std::string(kCsvHeader) + "\n";
  CHECK_THROWS_AS((void)parse_curves_csv(h + "d,0,0.5,0.1,10,10\nd,0,0.6,0.1,10,10\n"), ValidationError);
  CHECK_THROWS_AS((void)parse_curves_csv(h + "d,0,0.5,0.1,10,10\nd,1,0.6,0.2,10,10\n"), ValidationError);
  CHECK_THROWS_AS((void)parse_curves_csv(h + "d,zero,0.5,0.1,10,10\n"), ValidationError);
}

TEST_CASE("gnuplot data has one block per curve") {
  std::ostringstream out;
  write_gnuplot_data(out, {make_curve("a", 0.1, {{0, 0.5}}), make_curve("b", 0.2, {{0, 0.6}, {1, 0.7}})});
  const auto s = out.str();
  CHECK(s.find("# a\n") != std::string::npos);
  CHECK(s.find("# b\n") != std::string::npos);
  CHECK(s.find("\n\n\n") != std::string::npos);
}

TEST_CASE("estimate_snr_wall examples") {
  CHECK(*estimate_snr_wall(make_curve("c", 0.1, {{-10, 1}, {-9, 1}, {-8, 1}}), 0.9) == -10.0);
  CHECK(!estimate_snr_wall(make_curve("c", 0.1, {{-10, 0}, {-9, 0}}), 0.9));
  CHECK(*estimate_snr_wall(make_curve("c", 0.1, {{-10, 0.8}, {-9, 1.0}}), 0.9) == doctest::Approx(-9.5));
  // A dip after the first crossing pushes the wall past the dip.
  const auto dip = make_curve("c", 0.1, {{-6, 0.5}, {-5, 0.95}, {-4, 0.85}, {-3, 0.95}, {-2, 1.0}});
  CHECK(*estimate_snr_wall(dip, 0.9) == doctest::Approx(-3.5));
  CHECK(!estimate_snr_wall(make_curve("c", 0.1, {{-6, 0.95}, {-5, 0.5}}), 0.9));
  CHECK_THROWS_AS((void)estimate_snr_wall(make_curve("c", 0.1, {}), 0.9), ValidationError);
}

TEST_CASE("estimate_snr_wall is monotone in the target") {
  RngStream rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::pair<double, double>> pts;
    double pd = 0.0;
    for (int s = -10; s <= 5; ++s) {
      pd = std::clamp(pd + 0.15 * (rng.uniform() - 0.25), 0.0, 1.0);
      pts.push_back({double(s), pd});
    }
    const auto c = make_curve("c", 0.1, pts);
    std::optional<double> prev = estimate_snr_wall(c, 0.05);
    for (double t = 0.1; t < 1.0; t += 0.05) {
      const auto w = estimate_snr_wall(c, t);
      if (!prev) {
        CHECK(!w);
      } else if (w) {
        CHECK(*w >= *prev - 1e-12);
      }
      prev = w;
    }
  }
}

TEST_CASE("wall_report EDW column matches the published energy-detector walls") {
  const std::vector<std::size_t> n = {128, 1024};
  const std::vector<double> pf = {0.0734, 0.0786};
  const auto rows = edw_table(n, pf);
  CHECK(std::abs(rows[0].edw_db + 5.57) <= 0.02);
  CHECK(std::abs(rows[1].edw_db + 10.55) <= 0.02);
  CHECK(!rows[0].dlw_db);

  const std::vector<DetectionCurve> curves = {make_curve("a", 0.0734, {{-10, 0.5}, {-9, 0.95}, {-8, 1.0}}),
                                              make_curve("b", 0.0786, {{-12, 0.2}, {-11, 0.1}})};
  const auto full = wall_report(n, pf, curves);
  CHECK(full[0].edw_db == rows[0].edw_db);
  CHECK(full[1].edw_db == rows[1].edw_db);
  REQUIRE(full[0].dlw_db);
  CHECK(*full[0].dlw_db == doctest::Approx(-9 - 0.05 / 0.45));
  CHECK(*full[0].improvement_db == full[0].edw_db - *full[0].dlw_db);
  CHECK(!full[1].dlw_db);
  CHECK(!full[1].improvement_db);
  CHECK_THROWS_AS((void)wall_report(n, pf, std::span(curves).first(1)), ValidationError);

  const auto table = format_wall_table(full);
  CHECK(table.find("-5.57") != std::string::npos);
  std::ostringstream csv;
  write_wall_csv(csv, full);
  CHECK(csv.str().find("pf,n,edw_db,dlw_db,improvement_db") != std::string::npos);
}

TEST_CASE("EDW does not depend on any curve") {
  const std::vector<std::size_t> n = {64};
  const std::vector<double> pf = {0.0805};
  const std::vector<DetectionCurve> a = {make_curve("a", 0.0805, {{0, 1}})};
  const std::vector<DetectionCurve> b = {make_curve("b", 0.5, {{-20, 0}, {20, 0.1}})};
  CHECK(wall_report(n, pf, a)[0].edw_db == wall_report(n, pf, b)[0].edw_db);
  CHECK(wall_report(n, pf, a)[0].edw_db == endet::snr_wall({0.0805, 0.9, 64, std::nullopt}).gamma_db);
}

TEST_CASE("sha256 known vectors") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("config parsing, canonical form and hash") {
  auto c = parse_config(kSmallConfig);
  CHECK(c.seed_set);
  CHECK(c.seed() == 5);
  CHECK(c.dataset.snr_grid == std::vector<double>{-4, 0, 4});
  CHECK(c.model.sample_length == 32);
  CHECK_NOTHROW(c.validate());

  auto d = c;
  d.threads = 8;
  d.out_dir = "elsewhere";
  CHECK(config_hash(c) == config_hash(d));
  apply_config_value(d, "learning_rate", "0.001");
  CHECK(config_hash(c) != config_hash(d));
  CHECK(config_hash(parse_config(canonical_config(c))) == config_hash(c));
  CHECK(config_hash(c).size() == 64);

  CHECK_THROWS_AS((void)parse_config("colour = blue\n"), ValidationError);
  CHECK_THROWS_AS((void)parse_config("seed = -1\n"), ValidationError);
  CHECK_THROWS_AS((void)parse_config("just words\n"), ValidationError);
  CHECK_THROWS_AS((void)parse_config("snr_grid = 4:0:1\n"), ValidationError);
  CHECK_THROWS_AS(parse_config("schemes = QPSK\n").validate(), ValidationError);  // seed is mandatory
  auto e = parse_config("seed = 1\nschemes = QPSK\ndetector = energy\n");
  CHECK_THROWS_AS(e.validate(), ValidationError);
  apply_config_value(e, "ed_pf", "0.05");
  CHECK_NOTHROW(e.validate());
}

TEST_CASE("run_experiment: smoke path, stamping and determinism") {
  const auto dir_a = scratch_dir("run_a");
  const auto dir_b = scratch_dir("run_b");
  auto ca = small_config(dir_a);
  ca.reference_precision = true;
  auto cb = small_config(dir_b);
  cb.reference_precision = true;
  const auto a = run_experiment(ca);
  const auto b = run_experiment(cb);

  for (const char* f : {"config.txt", "dataset/train.spsd", "dataset/val.spsd", "dataset/test.spsd",
                        "epochs.jsonl", "model.spck", "curves.csv", "curves.dat", "wall.txt", "wall.csv",
                        "manifest.json"})
    CHECK_MESSAGE(fs::exists(dir_a / f), f);
  CHECK(!fs::exists(dir_a / "INCOMPLETE"));

  for (const char* f : {"dataset/train.spsd", "dataset/val.spsd", "dataset/test.spsd"})
    CHECK(a.file_sha256.at(f) == b.file_sha256.at(f));
  REQUIRE(a.epoch0);
  REQUIRE(b.epoch0);
  CHECK(a.epoch0->val_loss == b.epoch0->val_loss);
  CHECK(a.curves == b.curves);

  const auto hash = a.config_hash;
  for (const char* f : {"config.txt", "curves.csv", "curves.dat", "wall.txt", "wall.csv", "manifest.json"})
    CHECK_MESSAGE(slurp(dir_a / f).find(hash) != std::string::npos, f);
  std::ifstream epochs(dir_a / "epochs.jsonl");
  std::string line, last;
  while (std::getline(epochs, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.at("config_hash") == hash);
    CHECK(j.at("seed") == 5);
    last = line;
  }
  const auto result = nlohmann::json::parse(last);
  CHECK(result.at("stage") == "stage2-result");
  CHECK((ca.policy.pf_in_interval(result.at("pf")) || result.at("out_of_interval") == true));
  CHECK(sigmod::read_dataset(dir_a / "dataset/test.spsd").header.at("config_hash") == hash);

  const auto curves = parse_curves_csv(slurp(dir_a / "curves.csv"));
  REQUIRE(curves.size() >= 1);
  CHECK(curves.front().detector_id == "detectnet");
  CHECK(curves == a.curves);
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST_CASE("run_experiment tags failures with their stage") {
  auto c = small_config(scratch_dir("run_bad"));
  c.seed_set = false;
  try {
    (void)run_experiment(c);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).rfind("[config]", 0) == 0);
  }
}

TEST_CASE("CLI exit codes") {
  const auto dir = scratch_dir("cli");
  const auto log = dir / "log.txt";
  {
    std::ofstream cfg(dir / "small.cfg");
    cfg << kSmallConfig;
  }
  CHECK(run_cli("--help", log) == 0);
  CHECK(run_cli("wall-report --n 128,1024 --pf 0.0734,0.0786", log) == 0);
  CHECK(slurp(log).find("-5.57") != std::string::npos);
  CHECK(slurp(log).find("-10.55") != std::string::npos);

  CHECK(run_cli("--bogus-flag", log) == 2);
  CHECK(run_cli("wall-report --n 128", log) == 2);  // no pf
  CHECK(run_cli("--config " + (dir / "missing.cfg").string() + " dataset gen", log) == 2);
  CHECK(run_cli("--set colour=blue --seed 1 dataset gen", log) == 2);
  CHECK(run_cli("eval --model " + (dir / "none.spck").string() + " --dataset " + (dir / "none.spsd").string(), log) ==
        2);
  {
    std::ofstream blocker(dir / "blocker");
    blocker << "x";
  }
  CHECK(run_cli("--config " + (dir / "small.cfg").string() + " --out " + (dir / "blocker" / "sub").string() +
                    " dataset gen",
                log) == 3);

  const auto out = dir / "gen";
  CHECK(run_cli("--config " + (dir / "small.cfg").string() + " --out " + out.string() + " dataset gen", log) == 0);
  CHECK(fs::exists(out / "dataset" / "test.spsd"));
  CHECK(run_cli("--config " + (dir / "small.cfg").string() + " --out " + (dir / "ed").string() +
                    " ed-baseline --pf 0.1",
                log) == 0);
  CHECK(parse_curves_csv(slurp(dir / "ed" / "curves.csv")).size() == 1);
  fs::remove_all(dir);
}
