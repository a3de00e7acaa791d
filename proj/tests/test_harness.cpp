#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gridinfer/harness.hpp"
#include "gridinfer/rng.hpp"

using namespace gridinfer;
namespace fs = std::filesystem;

#ifndef FIXTURE_DIR
#define FIXTURE_DIR "tests/fixtures"
#endif

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

nlohmann::json read_json(const fs::path& p) {
  return nlohmann::json::parse(slurp(p));
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// desk-scale experiment: small synthetic dataset, fixed alpha
ExperimentConfig small_config(const std::string& out_dir, std::uint64_t seed) {
  ExperimentConfig c = ExperimentConfig::from_json_text(R"({
    "dataset": {"synthesize": {"n_loads": 14, "n_gens": 3, "n_samples": 600}},
    "leave_out": {"kind": "loads", "m_top": 3},
    "alpha": 1e-5,
    "scatter_max_rows": 100
  })");
  c.seed = seed;
  c.out_dir = out_dir;
  return c;
}

}  // namespace

TEST_CASE("config parsing: defaults, errors, round trip hash stability") {
  const ExperimentConfig c = ExperimentConfig::from_json_text("{}");
  CHECK(c.use_synthesize);
  CHECK(c.leave_out.m_top == 5);
  CHECK(c.alpha == 1e-5);
  CHECK(c.split.train_fraction == 0.8);

  CHECK_THROWS_AS(ExperimentConfig::from_json_text("not json"), Error);
  CHECK_THROWS_AS(ExperimentConfig::from_json_text(
                      R"({"dataset": {"csv": "a.csv", "cache": "b.bin"}})"),
                  Error);
  CHECK_THROWS_AS(
      ExperimentConfig::from_json_text(R"({"leave_out": {"m_top": 0}})"),
      Error);
  CHECK_THROWS_AS(
      ExperimentConfig::from_json_text(R"({"leave_out": {"kind": "foo"}})"),
      Error);
  CHECK_THROWS_AS(ExperimentConfig::from_json_text(R"({"alpha": -1})"), Error);
  CHECK_THROWS_AS(
      ExperimentConfig::from_json_text(R"({"split": {"train_fraction": 0}})"),
      Error);

  // the config hash is a pure function of the parsed config
  const ExperimentConfig a = ExperimentConfig::from_json_text(
      R"({"alpha": 0.5, "leave_out": {"m_top": 2}})");
  const ExperimentConfig b = ExperimentConfig::from_json_text(
      R"({"leave_out": {"m_top": 2}, "alpha": 0.5})");
  CHECK(a.to_json() == b.to_json());
}

TEST_CASE("fit run: outputs, manifest hashes, summary shape") {
  TempDir dir("gi_test_fit");
  const RunResult res = run_top_m_experiment(small_config(dir.path.string(), 1));
  CHECK(fs::exists(dir.path / "nrmse.csv"));
  CHECK(fs::exists(dir.path / "scatter_0.csv"));
  CHECK(fs::exists(dir.path / "scatter_2.csv"));
  CHECK(fs::exists(dir.path / "model.json"));
  CHECK(fs::exists(dir.path / "model_weights.bin"));
  CHECK(fs::exists(dir.path / "summary.json"));
  CHECK(fs::exists(dir.path / "manifest.json"));

  CHECK(res.summary["targets"].size() == 3);
  CHECK(res.summary["train_rows"].get<int>() == 480);
  CHECK(res.summary["test_rows"].get<int>() == 120);
  CHECK(res.summary["alpha_used"].get<double>() == 1e-5);

  // manifest lists every output (itself excluded) with correct hashes
  const nlohmann::json manifest = read_json(dir.path / "manifest.json");
  CHECK(manifest["outputs"].size() == 7);  // nrmse + 3 scatter + model x2 + summary
  for (const auto& entry : manifest["outputs"]) {
    const std::string h = entry["sha256"].get<std::string>();
    CHECK(h.size() == 64);
  }
  CHECK(manifest["seed"].get<std::uint64_t>() == 1);
  CHECK(manifest["stage"].get<std::string>() == "fit");
}

TEST_CASE("identical seeds give byte-identical reports (manifest aside)") {
  TempDir a("gi_test_det_a"), b("gi_test_det_b"), c("gi_test_det_c");
  run_top_m_experiment(small_config(a.path.string(), 7));
  run_top_m_experiment(small_config(b.path.string(), 7));
  run_top_m_experiment(small_config(c.path.string(), 8));
  int compared = 0;
  for (const auto& entry : fs::directory_iterator(a.path)) {
    const std::string name = entry.path().filename().string();
    if (name == "manifest.json") continue;  // carries wall-clock timings
    CHECK(slurp(entry.path()) == slurp(b.path / name));
    ++compared;
  }
  CHECK(compared == 7);
  CHECK(slurp(a.path / "nrmse.csv") != slurp(c.path / "nrmse.csv"));
}

TEST_CASE("failed runs leave no report files behind") {
  TempDir dir("gi_test_fail");
  ExperimentConfig c = small_config(dir.path.string(), 1);
  c.csv_path = "does_not_exist.csv";
  c.use_synthesize = false;
  CHECK_THROWS_AS(run_top_m_experiment(c), Error);
  CHECK_FALSE(fs::exists(dir.path / "summary.json"));
  CHECK_FALSE(fs::exists(dir.path / "manifest.json"));
}

TEST_CASE("generator experiment uses generator targets") {
  TempDir dir("gi_test_gens");
  ExperimentConfig c = small_config(dir.path.string(), 3);
  c.leave_out.m_top = 2;
  const RunResult res = run_generator_experiment(c);
  const auto targets = res.summary["targets"].get<std::vector<std::string>>();
  REQUIRE(targets.size() == 2);
  for (const auto& t : targets) CHECK(t.rfind("G:", 0) == 0);
  // generator targets may take m_top equal to the generator count
  c.leave_out.m_top = 3;
  TempDir dir2("gi_test_gens_all");
  c.out_dir = dir2.path.string();
  CHECK(run_generator_experiment(c).summary["targets"].size() == 3);
}

TEST_CASE("m sweep covers m_list and matches standalone runs") {
  TempDir dir("gi_test_sweepm");
  ExperimentConfig c = small_config(dir.path.string(), 5);
  c.m_list = {1, 3, 5};
  const RunResult res = run_m_sweep(c);
  CHECK(fs::exists(dir.path / "m_sweep.csv"));
  REQUIRE(res.summary["cells"].size() == 3);
  CHECK(res.summary["cells"][0]["m"].get<int>() == 1);
  CHECK(res.summary["cells"][2]["m"].get<int>() == 5);

  // a sweep cell equals the corresponding standalone experiment
  TempDir dir2("gi_test_sweepm_single");
  ExperimentConfig single = small_config(dir2.path.string(), 5);
  single.leave_out.m_top = 3;
  const RunResult one = run_top_m_experiment(single);
  double mean = 0.0;
  for (const auto& v : one.summary["nrmse_test"]) mean += v.get<double>();
  mean /= one.summary["nrmse_test"].size();
  CHECK(res.summary["cells"][1]["mean"].get<double>() ==
        doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("train-size sweep reports round(fraction * train rows) rows") {
  TempDir dir("gi_test_sweept");
  ExperimentConfig c = small_config(dir.path.string(), 9);
  c.train_fractions = {0.25, 0.5, 1.0};
  const RunResult res = run_train_size_sweep(c);
  CHECK(fs::exists(dir.path / "train_size.csv"));
  REQUIRE(res.summary["cells"].size() == 3);
  CHECK(res.summary["cells"][0]["train_rows"].get<int>() == 120);  // 0.25*480
  CHECK(res.summary["cells"][1]["train_rows"].get<int>() == 240);
  CHECK(res.summary["cells"][2]["train_rows"].get<int>() == 480);
  // more data should not be dramatically worse
  CHECK(res.summary["cells"][2]["mean"].get<double>() <
        10.0 * res.summary["cells"][0]["mean"].get<double>() + 1.0);

  c.train_fractions = {1.5};
  CHECK_THROWS_AS(run_train_size_sweep(c), Error);
  c.train_fractions.clear();
  CHECK_THROWS_AS(run_train_size_sweep(c), Error);
}

TEST_CASE("flow reconstruction on the 9-bus network") {
  TempDir dir("gi_test_flows");
  ExperimentConfig c = ExperimentConfig::from_json_text(std::string(R"({
    "dataset": {"synthesize": {"n_loads": 6, "n_gens": 3, "n_samples": 400,
                               "fluct_scale": 0.05},
                "for_network": true},
    "leave_out": {"kind": "loads", "m_top": 2},
    "alpha": 1e-6,
    "network": ")") + FIXTURE_DIR + R"(/case9.json",
    "max_flow_timestamps": 12
  })");
  c.seed = 2;
  c.out_dir = dir.path.string();
  const RunResult res = run_flow_reconstruction(c);
  CHECK(fs::exists(dir.path / "flow_scatter.csv"));
  CHECK(fs::exists(dir.path / "flow_report.csv"));
  CHECK(res.summary["timestamps_used"].get<int>() >= 1);
  CHECK(res.summary["m1"].get<double>() >= 0.0);
  CHECK(res.summary["m2"].get<double>() >=
        res.summary["m1"].get<double>() - 1e-12);
  CHECK(res.summary["within_10pct_fraction"].get<double>() >= 0.0);
  CHECK(res.summary["within_10pct_fraction"].get<double>() <= 1.0);

  // oracle injections: feeding true loads through the pipeline must give a
  // perfect reconstruction, metrics exactly zero
  TempDir dir2("gi_test_flows_oracle");
  c.out_dir = dir2.path.string();
  c.oracle_injections = true;
  const RunResult oracle = run_flow_reconstruction(c);
  CHECK(oracle.summary["m1"].get<double>() == 0.0);
  CHECK(oracle.summary["m2"].get<double>() == 0.0);
  CHECK(oracle.summary["within_10pct_fraction"].get<double>() == 1.0);
}

TEST_CASE("non-convergent timestamps are excluded, not fatal") {
  // two-load triangle network; one test-row load is physically infeasible
  TempDir dir("gi_test_flows_div");
  const std::string net_path = (dir.path / "net.json").string();
  fs::create_directories(dir.path);
  {
    std::ofstream out(net_path);
    out << R"({"base_mva": 100.0,
      "buses": [
        {"id": 1, "kind": "slack", "p_set": 0.0, "q_set": 0.0, "v_set": 1.0},
        {"id": 2, "kind": "load", "p_set": -0.4, "q_set": -0.1, "v_set": 1.0},
        {"id": 3, "kind": "load", "p_set": -0.3, "q_set": -0.1, "v_set": 1.0}],
      "lines": [
        {"from": 1, "to": 2, "g": 0.5, "b": 10.0},
        {"from": 2, "to": 3, "g": 0.5, "b": 10.0},
        {"from": 1, "to": 3, "g": 0.5, "b": 10.0}]})";
  }
  ObservationSet obs;
  obs.load_labels = {"2", "3"};
  obs.gen_labels = {};
  const int n = 40;
  Rng rng(77);
  obs.loads.resize(n, 2);
  obs.gens.resize(n, 0);
  for (int t = 0; t < n; ++t) {
    obs.timestamps.push_back(t);
    obs.loads(t, 0) = 0.4 + 0.05 * rng.gaussian();
    obs.loads(t, 1) = 0.3 + 0.04 * rng.gaussian();
  }
  obs.loads(n - 1, 0) = 80.0;  // far beyond any feasible transfer
  const std::string csv_path = (dir.path / "obs.csv").string();
  write_observations_csv(obs, csv_path);

  ExperimentConfig c = ExperimentConfig::from_json_text(R"({
    "leave_out": {"kind": "loads", "labels": ["L:2"]},
    "alpha": 1e-4,
    "split": {"train_fraction": 0.7, "contiguous": true},
    "max_flow_timestamps": 12,
    "oracle_injections": true
  })");
  c.csv_path = csv_path;
  c.use_synthesize = false;
  c.network_path = net_path;
  c.seed = 4;
  c.out_dir = (dir.path / "out").string();
  const RunResult res = run_flow_reconstruction(c);
  CHECK(res.summary["timestamps_excluded"].get<int>() == 1);
  CHECK(res.summary["timestamps_used"].get<int>() == 11);
}

TEST_CASE("weight analysis reports both peak fits") {
  TempDir dir("gi_test_weights");
  ExperimentConfig c = small_config(dir.path.string(), 6);
  c.leave_out.m_top = 5;
  c.histogram_bins = 31;
  const RunResult res = run_weight_analysis(c);
  CHECK(fs::exists(dir.path / "weight_histogram.csv"));
  CHECK(res.summary.contains("gaussian"));
  CHECK(res.summary.contains("lorentzian"));
  const std::string sel = res.summary["selected"].get<std::string>();
  CHECK((sel == "gaussian" || sel == "lorentzian"));
  const double gd =
      std::abs(res.summary["gaussian"]["chi2_reduced"].get<double>() - 1.0);
  const double ld =
      std::abs(res.summary["lorentzian"]["chi2_reduced"].get<double>() - 1.0);
  CHECK(sel == (gd <= ld ? "gaussian" : "lorentzian"));
}

TEST_CASE("run_mode dispatch and unknown modes") {
  TempDir dir("gi_test_mode");
  ExperimentConfig c = small_config(dir.path.string(), 2);
  CHECK_NOTHROW(run_mode("fit", c));
  CHECK_THROWS_AS(run_mode("frobnicate", c), Error);
}

TEST_CASE("synthesize run writes a loadable CSV and cache") {
  TempDir dir("gi_test_synth");
  fs::create_directories(dir.path);
  ExperimentConfig c = small_config("", 12);
  const std::string csv = (dir.path / "obs.csv").string();
  const std::string cache = (dir.path / "obs.bin").string();
  const RunResult res = run_synthesize(c, csv, cache);
  CHECK(res.summary["samples"].get<int>() == 600);
  const ObservationSet from_csv = read_observations_csv(csv);
  const ObservationSet from_cache = read_observations_cache(cache);
  CHECK(from_csv.loads == from_cache.loads);
  CHECK(from_csv.load_labels == from_cache.load_labels);
}

TEST_CASE("workers > 1 gives the same sweep results") {
  TempDir a("gi_test_par_a"), b("gi_test_par_b");
  ExperimentConfig c = small_config(a.path.string(), 13);
  c.m_list = {1, 2, 3, 4};
  const RunResult serial = run_m_sweep(c);
  c.out_dir = b.path.string();
  c.workers = 4;
  const RunResult parallel = run_m_sweep(c);
  CHECK(slurp(a.path / "m_sweep.csv") == slurp(b.path / "m_sweep.csv"));
  CHECK(serial.summary == parallel.summary);
}
