#include "gridinfer/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <functional>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "gridinfer/curvefit.hpp"
#include "gridinfer/rng.hpp"
#include "gridinfer/powerflow.hpp"
#include "gridinfer/sha256.hpp"

namespace fs = std::filesystem;

namespace gridinfer {

static constexpr const char* kVersion = "0.1.0";

// --- config ----------------------------------------------------------------

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  try {
    if (j.contains("dataset")) {
      const auto& d = j["dataset"];
      int sources = 0;
      if (d.contains("csv")) {
        c.csv_path = d["csv"].get<std::string>();
        ++sources;
      }
      if (d.contains("cache")) {
        c.cache_path = d["cache"].get<std::string>();
        ++sources;
      }
      if (d.contains("synthesize")) {
        c.use_synthesize = true;
        c.synth = SynthesizeConfig::from_json_text(d["synthesize"].dump());
        c.synthesize_for_network = d.value("for_network", false);
        ++sources;
      }
      if (sources != 1)
        throw config_error("dataset must name exactly one source");
    } else {
      c.use_synthesize = true;  // default desk-scale synthetic set
    }
    if (j.contains("leave_out")) {
      const auto& l = j["leave_out"];
      const std::string kind = l.value("kind", std::string("loads"));
      if (kind == "loads")
        c.leave_out.target_kind = TargetKind::Loads;
      else if (kind == "generators")
        c.leave_out.target_kind = TargetKind::Generators;
      else
        throw config_error("leave_out.kind must be 'loads' or 'generators'");
      c.leave_out.m_top = l.value("m_top", 5);
      if (l.contains("labels")) {
        c.leave_out.ranking = Ranking::ByLabelList;
        c.leave_out.explicit_labels =
            l["labels"].get<std::vector<std::string>>();
      }
      if (c.leave_out.ranking == Ranking::ByMeanDemand && c.leave_out.m_top < 1)
        throw config_error("leave_out.m_top must be >= 1");
    }
    c.alpha = j.value("alpha", c.alpha);
    if (c.alpha < 0.0) throw config_error("alpha must be >= 0");
    if (j.contains("alpha_grid"))
      c.alpha_grid = j["alpha_grid"].get<std::vector<double>>();
    if (j.contains("split")) {
      c.split.train_fraction = j["split"].value("train_fraction", 0.8);
      c.split.contiguous = j["split"].value("contiguous", false);
    }
    if (c.split.train_fraction <= 0.0 || c.split.train_fraction > 1.0)
      throw config_error("split.train_fraction must be in (0, 1]");
    c.train_subsample = j.value("train_subsample", 1.0);
    if (j.contains("m_list")) c.m_list = j["m_list"].get<std::vector<int>>();
    if (j.contains("train_fractions"))
      c.train_fractions = j["train_fractions"].get<std::vector<double>>();
    c.network_path = j.value("network", std::string());
    c.power_factor = j.value("power_factor", 0.95);
    if (c.power_factor <= 0.0 || c.power_factor > 1.0)
      throw config_error("power_factor must be in (0, 1]");
    if (j.contains("solver")) {
      c.solver_tolerance = j["solver"].value("tolerance", 1e-8);
      c.solver_max_iter = j["solver"].value("max_iter", 20);
      c.warm_start_series = j["solver"].value("warm_start", false);
      c.retry_nonconverged = j["solver"].value("retry_nonconverged", false);
    }
    c.max_flow_timestamps = j.value("max_flow_timestamps", 50);
    c.oracle_injections = j.value("oracle_injections", false);
    c.histogram_bins = j.value("histogram_bins", 101);
    c.scatter_max_rows = j.value("scatter_max_rows", 2000);
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("config schema error: ") + e.what());
  }
  return c;
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str());
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json d;
  if (!csv_path.empty()) d["csv"] = csv_path;
  if (!cache_path.empty()) d["cache"] = cache_path;
  if (use_synthesize) {
    d["synthesize"] = nlohmann::json::parse(synth.to_json_text());
    if (synthesize_for_network) d["for_network"] = true;
  }
  nlohmann::json j;
  j["dataset"] = d;
  j["leave_out"] = {
      {"kind",
       leave_out.target_kind == TargetKind::Loads ? "loads" : "generators"},
      {"m_top", leave_out.m_top}};
  if (leave_out.ranking == Ranking::ByLabelList)
    j["leave_out"]["labels"] = leave_out.explicit_labels;
  j["alpha"] = alpha;
  if (!alpha_grid.empty()) j["alpha_grid"] = alpha_grid;
  j["split"] = {{"train_fraction", split.train_fraction},
                {"contiguous", split.contiguous}};
  j["train_subsample"] = train_subsample;
  if (!m_list.empty()) j["m_list"] = m_list;
  if (!train_fractions.empty()) j["train_fractions"] = train_fractions;
  if (!network_path.empty()) j["network"] = network_path;
  j["power_factor"] = power_factor;
  j["solver"] = {{"tolerance", solver_tolerance},
                 {"max_iter", solver_max_iter},
                 {"warm_start", warm_start_series},
                 {"retry_nonconverged", retry_nonconverged}};
  j["max_flow_timestamps"] = max_flow_timestamps;
  j["oracle_injections"] = oracle_injections;
  j["histogram_bins"] = histogram_bins;
  j["scatter_max_rows"] = scatter_max_rows;
  return j;
}

// --- helpers ---------------------------------------------------------------

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Collects output files; removes everything already written if the run
// fails partway, then writes the manifest as the final file.
class ReportWriter {
 public:
  ReportWriter(const ExperimentConfig& config, const std::string& stage)
      : config_(config), stage_(stage) {
    if (config.out_dir.empty())
      throw config_error("output directory not set (use --out)");
    std::error_code ec;
    fs::create_directories(config.out_dir, ec);
    if (ec || !fs::is_directory(config.out_dir))
      throw config_error("cannot create output directory '" + config.out_dir +
                         "'");
    start_ = std::chrono::steady_clock::now();
  }

  ~ReportWriter() {
    if (!committed_) {
      for (const auto& f : files_) {
        std::error_code ec;
        fs::remove(f, ec);
      }
    }
  }

  std::string path(const std::string& name) const {
    return (fs::path(config_.out_dir) / name).string();
  }

  void write_text(const std::string& name, const std::string& content) {
    const std::string p = path(name);
    std::ofstream out(p, std::ios::binary);
    if (!out) throw config_error("cannot write '" + p + "'");
    out << content;
    files_.push_back(p);
  }

  void note_file(const std::string& p) { files_.push_back(p); }

  void stage_done(const std::string& name) {
    const auto now = std::chrono::steady_clock::now();
    timings_[name] =
        std::chrono::duration_cast<std::chrono::milliseconds>(now - last_)
            .count();
    last_ = now;
  }

  RunResult commit(nlohmann::json summary) {
    write_text("summary.json", summary.dump(2) + "\n");
    nlohmann::json manifest;
    manifest["stage"] = stage_;
    manifest["version"] = kVersion;
    manifest["seed"] = config_.seed;
    manifest["config_sha256"] = sha256_hex(config_.to_json().dump());
    manifest["timings_ms"] = timings_;
    manifest["timings_ms"]["total"] =
        std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::steady_clock::now() - start_)
            .count();
    manifest["outputs"] = nlohmann::json::array();
    for (const auto& f : files_)
      manifest["outputs"].push_back(
          {{"file", fs::path(f).filename().string()},
           {"sha256", sha256_file_hex(f)}});
    write_text("manifest.json", manifest.dump(2) + "\n");
    committed_ = true;
    RunResult res;
    res.files = files_;
    res.summary = std::move(summary);
    return res;
  }

 private:
  const ExperimentConfig& config_;
  std::string stage_;
  std::vector<std::string> files_;
  std::map<std::string, std::int64_t> timings_;
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
  bool committed_ = false;
};

void parallel_for(int n, int workers, const std::function<void(int)>& body) {
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct CoreFit {
  RidgeModel model;
  FitReport report;
  RegressionProblem problem;
  std::vector<int> rows_used;  // training rows after sub-sampling
  double alpha_used = 0.0;
};

// Single leave-out experiment: rank, assemble, (optionally) sub-sample,
// grid-search or fix alpha, fit, evaluate. Shared by the single-shot runs
// and every sweep cell, so sweep cells are identical to standalone runs.
CoreFit core_fit(const ExperimentConfig& config, const ObservationSet& obs,
                 const LeaveOutSpec& leave_out, double subsample_fraction) {
  SplitSpec split_spec = config.split;
  split_spec.seed = derive_seed(config.seed, 0x5917);
  RowSplit split = make_split(obs.sample_count(), split_spec);
  const ColumnSelection cols =
      rank_and_split_targets(obs, leave_out, split.train_rows);
  RegressionProblem problem = assemble(obs, cols, split);

  CoreFit out;
  out.rows_used = subsample_fraction < 1.0
                      ? subsample_train_rows(split, subsample_fraction)
                      : split.train_rows;
  if (subsample_fraction < 1.0) {
    problem.split.train_rows = out.rows_used;  // test rows stay fixed
  }

  double alpha = config.alpha;
  if (!config.alpha_grid.empty())
    alpha = grid_search_alpha(problem, config.alpha_grid).first;
  out.model = fit(problem, alpha);
  out.report = evaluate(out.model, problem);
  out.alpha_used = alpha;
  out.problem = std::move(problem);
  return out;
}

std::string nrmse_table_csv(const CoreFit& cf) {
  std::ostringstream os;
  os << "target,label,nrmse_train,nrmse_test\n";
  for (Eigen::Index c = 0; c < cf.report.nrmse_train.size(); ++c) {
    os << c << ',' << cf.model.target_labels[c] << ','
       << fmt(cf.report.nrmse_train[c]) << ','
       << fmt(cf.report.nrmse_test.size() > c ? cf.report.nrmse_test[c]
                                              : std::nan(""))
       << '\n';
  }
  return os.str();
}

nlohmann::json fit_summary(const CoreFit& cf) {
  nlohmann::json j;
  j["alpha_used"] = cf.alpha_used;
  j["train_rows"] = cf.rows_used.size();
  j["test_rows"] = cf.problem.split.test_rows.size();
  j["features"] = cf.model.feature_labels.size();
  j["targets"] = cf.model.target_labels;
  j["nrmse_train"] = std::vector<double>(cf.report.nrmse_train.begin(),
                                         cf.report.nrmse_train.end());
  j["nrmse_test"] = std::vector<double>(cf.report.nrmse_test.begin(),
                                        cf.report.nrmse_test.end());
  j["sigma_min"] = cf.report.sigma_min;
  j["sigma_max"] = cf.report.sigma_max;
  j["reference_timing_note"] =
      "context: a 903-feature, 139776-observation ridge fit is reported at "
      "8.26 s on a laptop-class CPU";
  return j;
}

void write_scatter_files(ReportWriter& w, const CoreFit& cf,
                         int scatter_max_rows) {
  const Eigen::MatrixXd pred_all = predict(cf.model, cf.problem.X);
  for (std::size_t t = 0; t < cf.model.target_labels.size(); ++t) {
    std::ostringstream os;
    os << "split,timestamp_row,true,predicted\n";
    auto emit = [&](const std::vector<int>& rows, const char* tag) {
      const std::size_t stride =
          rows.size() > static_cast<std::size_t>(scatter_max_rows)
              ? (rows.size() + scatter_max_rows - 1) / scatter_max_rows
              : 1;
      for (std::size_t i = 0; i < rows.size(); i += stride) {
        const int r = rows[i];
        os << tag << ',' << r << ',' << fmt(cf.problem.Y(r, t)) << ','
           << fmt(pred_all(r, t)) << '\n';
      }
    };
    emit(cf.problem.split.train_rows, "train");
    emit(cf.problem.split.test_rows, "test");
    w.write_text("scatter_" + std::to_string(t) + ".csv", os.str());
  }
}

RunResult run_single(const ExperimentConfig& config, const LeaveOutSpec& lo,
                     const std::string& stage) {
  ReportWriter w(config, stage);
  const ObservationSet obs = load_observations(config);
  w.stage_done("dataset");
  const CoreFit cf = core_fit(config, obs, lo, config.train_subsample);
  w.stage_done("fit");
  w.write_text("nrmse.csv", nrmse_table_csv(cf));
  write_scatter_files(w, cf, config.scatter_max_rows);
  save_model(cf.model, w.path("model.json"), w.path("model_weights.bin"));
  w.note_file(w.path("model.json"));
  w.note_file(w.path("model_weights.bin"));
  w.stage_done("report");
  return w.commit(fit_summary(cf));
}

}  // namespace

// --- dataset resolution ----------------------------------------------------

ObservationSet load_observations(const ExperimentConfig& config) {
  if (!config.csv_path.empty()) return read_observations_csv(config.csv_path);
  if (!config.cache_path.empty())
    return read_observations_cache(config.cache_path);
  if (!config.use_synthesize) throw config_error("no dataset source configured");

  SynthesizeConfig sc = config.synth;
  if (config.synthesize_for_network) {
    if (config.network_path.empty())
      throw config_error("dataset.for_network requires a network file");
    const GridNetwork net = GridNetwork::from_json_file(config.network_path);
    std::vector<std::pair<double, int>> loads, gens;
    for (int i = 0; i < net.bus_count(); ++i) {
      const Bus& b = net.buses()[i];
      if (b.kind == BusKind::Load)
        loads.push_back({std::abs(b.p_set), b.id});
      else
        gens.push_back({b.p_set, b.id});
    }
    // biggest synthetic column maps onto the biggest network bus
    auto desc = [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    };
    std::sort(loads.begin(), loads.end(), desc);
    std::sort(gens.begin(), gens.end(), desc);
    sc.n_loads = static_cast<int>(loads.size());
    sc.n_gens = static_cast<int>(gens.size());
    ObservationSet obs = synthesize(sc, derive_seed(config.seed, 0xda7a));
    for (std::size_t i = 0; i < loads.size(); ++i) {
      obs.load_labels[i] = std::to_string(loads[i].second);
      // rescale the synthetic column to the bus setpoint magnitude;
      // zero-setpoint (junction) buses get a zero series
      const double mean = obs.loads.col(i).mean();
      if (mean > 0.0) obs.loads.col(i) *= loads[i].first / mean;
    }
    for (std::size_t j = 0; j < gens.size(); ++j) {
      obs.gen_labels[j] = std::to_string(gens[j].second);
      const double mean = obs.gens.col(j).mean();
      if (mean > 0.0) obs.gens.col(j) *= gens[j].first / mean;
    }
    return obs;
  }
  return synthesize(sc, derive_seed(config.seed, 0xda7a));
}

// --- single experiments ----------------------------------------------------

RunResult run_top_m_experiment(const ExperimentConfig& config) {
  LeaveOutSpec lo = config.leave_out;
  lo.target_kind = TargetKind::Loads;
  return run_single(config, lo, "fit");
}

RunResult run_generator_experiment(const ExperimentConfig& config) {
  LeaveOutSpec lo = config.leave_out;
  lo.target_kind = TargetKind::Generators;
  return run_single(config, lo, "gens");
}

// --- sweeps ----------------------------------------------------------------

RunResult run_m_sweep(const ExperimentConfig& config) {
  if (config.m_list.empty()) throw config_error("sweep-m requires m_list");
  ReportWriter w(config, "sweep-m");
  const ObservationSet obs = load_observations(config);
  w.stage_done("dataset");

  const int n = static_cast<int>(config.m_list.size());
  std::vector<nlohmann::json> cells(n);
  parallel_for(n, config.workers, [&](int i) {
    LeaveOutSpec lo = config.leave_out;
    lo.m_top = config.m_list[i];
    const CoreFit cf = core_fit(config, obs, lo, config.train_subsample);
    cells[i] = {{"m", lo.m_top},
                {"mean", cf.report.nrmse_test.mean()},
                {"min", cf.report.nrmse_test.minCoeff()},
                {"max", cf.report.nrmse_test.maxCoeff()}};
  });
  w.stage_done("sweep");

  std::ostringstream os;
  os << "m,nrmse_test_mean,nrmse_test_min,nrmse_test_max\n";
  for (const auto& c : cells)
    os << c["m"].get<int>() << ',' << fmt(c["mean"].get<double>()) << ','
       << fmt(c["min"].get<double>()) << ',' << fmt(c["max"].get<double>())
       << '\n';
  w.write_text("m_sweep.csv", os.str());
  nlohmann::json summary;
  summary["cells"] = cells;
  return w.commit(summary);
}

RunResult run_train_size_sweep(const ExperimentConfig& config) {
  if (config.train_fractions.empty())
    throw config_error("sweep-train-size requires train_fractions");
  for (double f : config.train_fractions)
    if (f <= 0.0 || f > 1.0)
      throw config_error("train fractions must be in (0, 1]");
  ReportWriter w(config, "sweep-train-size");
  const ObservationSet obs = load_observations(config);
  w.stage_done("dataset");

  const std::vector<int> ms =
      config.m_list.empty() ? std::vector<int>{config.leave_out.m_top}
                            : config.m_list;
  struct Cell {
    double fraction;
    int m;
    std::size_t rows;
    double mean, min, max;
  };
  const int n = static_cast<int>(config.train_fractions.size() * ms.size());
  std::vector<Cell> cells(n);
  parallel_for(n, config.workers, [&](int i) {
    const double f = config.train_fractions[i / ms.size()];
    const int m = ms[i % ms.size()];
    LeaveOutSpec lo = config.leave_out;
    lo.m_top = m;
    const CoreFit cf = core_fit(config, obs, lo, f);
    cells[i] = {f, m, cf.rows_used.size(), cf.report.nrmse_test.mean(),
                cf.report.nrmse_test.minCoeff(),
                cf.report.nrmse_test.maxCoeff()};
  });
  w.stage_done("sweep");

  std::ostringstream os;
  os << "train_fraction,m,train_rows,nrmse_test_mean,nrmse_test_min,"
        "nrmse_test_max\n";
  nlohmann::json jcells = nlohmann::json::array();
  for (const auto& c : cells) {
    os << fmt(c.fraction) << ',' << c.m << ',' << c.rows << ',' << fmt(c.mean)
       << ',' << fmt(c.min) << ',' << fmt(c.max) << '\n';
    jcells.push_back({{"fraction", c.fraction},
                      {"m", c.m},
                      {"train_rows", c.rows},
                      {"mean", c.mean},
                      {"min", c.min},
                      {"max", c.max}});
  }
  w.write_text("train_size.csv", os.str());
  nlohmann::json summary;
  summary["cells"] = jcells;
  return w.commit(summary);
}

// --- flow reconstruction ---------------------------------------------------

namespace {

struct InjectionMap {
  std::vector<int> load_bus;  // internal bus index per dataset load column
  std::vector<int> gen_bus;   // internal bus index per dataset gen column
};

InjectionMap map_buses(const GridNetwork& net, const ObservationSet& obs) {
  InjectionMap map;
  auto resolve = [&](const std::string& label) {
    try {
      return net.bus_index(std::stoi(label));
    } catch (const std::invalid_argument&) {
      throw config_error("dataset label '" + label +
                         "' is not a bus id; flow runs need bus-id labels");
    }
  };
  for (const auto& l : obs.load_labels) map.load_bus.push_back(resolve(l));
  for (const auto& l : obs.gen_labels) map.gen_bus.push_back(resolve(l));
  return map;
}

}  // namespace

RunResult run_flow_reconstruction(const ExperimentConfig& config) {
  if (config.network_path.empty())
    throw config_error("flows requires a network file");
  ReportWriter w(config, "flows");
  const GridNetwork net = GridNetwork::from_json_file(config.network_path);
  const ObservationSet obs = load_observations(config);
  const InjectionMap map = map_buses(net, obs);
  w.stage_done("dataset");

  LeaveOutSpec lo = config.leave_out;
  lo.target_kind = TargetKind::Loads;
  const CoreFit cf = core_fit(config, obs, lo, config.train_subsample);
  w.stage_done("fit");

  // predicted values for target columns, full dataset rows
  const Eigen::MatrixXd pred_all = predict(cf.model, cf.problem.X);
  // target label -> load column index
  std::vector<int> target_cols;
  for (const auto& lbl : cf.model.target_labels) {
    const std::string name = lbl.substr(2);
    const auto it =
        std::find(obs.load_labels.begin(), obs.load_labels.end(), name);
    target_cols.push_back(static_cast<int>(it - obs.load_labels.begin()));
  }

  const double q_ratio = std::tan(std::acos(config.power_factor));
  const double load_sign = obs.loads_are_magnitudes ? -1.0 : 1.0;

  auto make_flow_spec = [&](int row, bool use_predicted) {
    PowerFlowSpec spec = make_spec(net);
    spec.p_set.setZero();
    spec.q_set.setZero();
    for (int c = 0; c < obs.load_count(); ++c) {
      double v = obs.loads(row, c);
      if (use_predicted) {
        const auto t = std::find(target_cols.begin(), target_cols.end(), c);
        if (t != target_cols.end())
          v = pred_all(row, t - target_cols.begin());
      }
      spec.p_set[map.load_bus[c]] = load_sign * v;
      spec.q_set[map.load_bus[c]] = q_ratio * load_sign * v;
    }
    for (int c = 0; c < obs.gen_count(); ++c)
      spec.p_set[map.gen_bus[c]] = obs.gens(row, c);
    return spec;
  };

  const int n_stamps = std::min<int>(config.max_flow_timestamps,
                                     cf.problem.split.test_rows.size());
  const SolveOptions opts{config.solver_tolerance, config.solver_max_iter, {}};

  struct StampResult {
    bool ok = false;
    Eigen::VectorXd flows_true, flows_hat;
  };
  std::vector<StampResult> stamps(n_stamps);
  const int e = net.line_count();
  parallel_for(n_stamps, config.workers, [&](int s) {
    const int row = cf.problem.split.test_rows[s];
    try {
      const SolveResult sol_true =
          solve_newton_raphson(make_flow_spec(row, false), opts);
      SolveResult sol_hat = solve_newton_raphson(
          make_flow_spec(row, !config.oracle_injections), opts);
      if (sol_true.converged && !sol_hat.converged &&
          config.retry_nonconverged) {
        SolveOptions retry = opts;
        retry.warm_start = sol_true.state;
        sol_hat = solve_newton_raphson(
            make_flow_spec(row, !config.oracle_injections), retry);
      }
      if (!sol_true.converged || !sol_hat.converged) return;
      StampResult& r = stamps[s];
      r.flows_true.resize(e);
      r.flows_hat.resize(e);
      for (int k = 0; k < e; ++k) {
        r.flows_true[k] = line_flow(net, sol_true.state, k).first;
        r.flows_hat[k] = line_flow(net, sol_hat.state, k).first;
      }
      r.ok = true;
    } catch (const Error&) {
      // singular Jacobian etc.: timestamp excluded, run continues
    }
  });
  w.stage_done("powerflow");

  std::vector<int> kept;
  for (int s = 0; s < n_stamps; ++s)
    if (stamps[s].ok) kept.push_back(s);
  if (kept.empty())
    throw numeric_error("no power-flow timestamp converged; cannot score flows");

  Eigen::MatrixXd series_true(kept.size(), e), series_hat(kept.size(), e);
  for (std::size_t i = 0; i < kept.size(); ++i) {
    series_true.row(i) = stamps[kept[i]].flows_true;
    series_hat.row(i) = stamps[kept[i]].flows_hat;
  }
  const FlowMetrics metrics = flow_metrics(series_true, series_hat);

  // per line-timestamp scatter of true vs reconstructed flow
  std::size_t within_band = 0, band_total = 0;
  std::ostringstream scat;
  scat << "row,line,from,to,p_true,p_hat,rel_dev,overloaded\n";
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const int row = cf.problem.split.test_rows[kept[i]];
    for (int k = 0; k < e; ++k) {
      const double pt = series_true(i, k);
      const double ph = series_hat(i, k);
      const double rel = pt != 0.0 ? (ph - pt) / std::abs(pt) : 0.0;
      if (pt != 0.0) {
        ++band_total;
        if (std::abs(rel) <= 0.10) ++within_band;
      }
      const Line& ln = net.lines()[k];
      const bool over =
          ln.thermal_limit > 0.0 && std::abs(pt) > 0.95 * ln.thermal_limit;
      scat << row << ',' << k << ',' << net.buses()[ln.from].id << ','
           << net.buses()[ln.to].id << ',' << fmt(pt) << ',' << fmt(ph) << ','
           << fmt(rel) << ',' << (over ? 1 : 0) << '\n';
    }
  }
  w.write_text("flow_scatter.csv", scat.str());

  std::ostringstream rep;
  rep << "line,from,to,sigma2_true,var_dev,normalized_rms,excluded\n";
  for (int k = 0; k < e; ++k) {
    const bool excl =
        std::find(metrics.excluded_lines.begin(), metrics.excluded_lines.end(),
                  k) != metrics.excluded_lines.end();
    const Line& ln = net.lines()[k];
    rep << k << ',' << net.buses()[ln.from].id << ',' << net.buses()[ln.to].id
        << ',' << fmt(metrics.sigma2_line[k]) << ',' << fmt(metrics.var_line[k])
        << ','
        << fmt(excl ? std::nan("")
                    : std::sqrt(metrics.var_line[k] / metrics.sigma2_line[k]))
        << ',' << (excl ? 1 : 0) << '\n';
  }
  w.write_text("flow_report.csv", rep.str());
  w.stage_done("report");

  nlohmann::json summary = fit_summary(cf);
  summary["m1"] = metrics.m1;
  summary["m2"] = metrics.m2;
  summary["excluded_lines"] = metrics.excluded_lines;
  summary["timestamps_requested"] = n_stamps;
  summary["timestamps_used"] = kept.size();
  summary["timestamps_excluded"] = n_stamps - static_cast<int>(kept.size());
  summary["within_10pct_fraction"] =
      band_total > 0 ? static_cast<double>(within_band) / band_total : 0.0;
  return w.commit(summary);
}

// --- weight analysis -------------------------------------------------------

RunResult run_weight_analysis(const ExperimentConfig& config) {
  ReportWriter w(config, "analyze-weights");
  const ObservationSet obs = load_observations(config);
  w.stage_done("dataset");
  const CoreFit cf =
      core_fit(config, obs, config.leave_out, config.train_subsample);
  w.stage_done("fit");
  const WeightHistogramFit wf = analyze_weights(cf.model, config.histogram_bins);
  w.stage_done("analyze");

  std::ostringstream os;
  os << "bin_center,count\n";
  for (Eigen::Index k = 0; k < wf.hist.counts.size(); ++k)
    os << fmt(wf.hist.centers[k]) << ',' << fmt(wf.hist.counts[k]) << '\n';
  w.write_text("weight_histogram.csv", os.str());

  auto fit_json = [](const PeakFit& f) {
    return nlohmann::json{{"amplitude", f.amplitude},
                          {"center", f.center},
                          {"width", f.width},
                          {"chi2_reduced", f.chi2_reduced},
                          {"converged", f.converged}};
  };
  nlohmann::json summary = fit_summary(cf);
  summary["gaussian"] = fit_json(wf.gaussian);
  summary["lorentzian"] = fit_json(wf.lorentzian);
  summary["selected"] =
      wf.selected == PeakFamily::Gaussian ? "gaussian" : "lorentzian";
  return w.commit(summary);
}

// --- synthesize ------------------------------------------------------------

RunResult run_synthesize(const ExperimentConfig& config,
                         const std::string& csv_out,
                         const std::string& cache_out) {
  if (csv_out.empty()) throw config_error("synthesize requires an output path");
  const ObservationSet obs = load_observations(config);
  write_observations_csv(obs, csv_out);
  RunResult res;
  res.files.push_back(csv_out);
  if (!cache_out.empty()) {
    write_observations_cache(obs, cache_out);
    res.files.push_back(cache_out);
  }
  res.summary = {{"samples", obs.sample_count()},
                 {"loads", obs.load_count()},
                 {"generators", obs.gen_count()}};
  return res;
}

RunResult run_mode(const std::string& mode, const ExperimentConfig& config) {
  if (mode == "fit") return run_top_m_experiment(config);
  if (mode == "gens") return run_generator_experiment(config);
  if (mode == "sweep-m") return run_m_sweep(config);
  if (mode == "sweep-train-size") return run_train_size_sweep(config);
  if (mode == "flows") return run_flow_reconstruction(config);
  if (mode == "analyze-weights") return run_weight_analysis(config);
  throw config_error("unknown mode '" + mode + "'");
}

}  // namespace gridinfer
