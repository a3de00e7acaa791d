#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include "gridinfer/dataset.hpp"
#include "oracles.hpp"

using namespace gridinfer;

namespace {

ObservationSet small_obs() {
  ObservationSet obs;
  obs.load_labels = {"a", "b", "c"};
  obs.gen_labels = {"g1"};
  obs.timestamps = {0, 1, 2, 3};
  obs.loads.resize(4, 3);
  obs.loads << 1.0, 0.5, 2.0,
               1.5, 0.25, 2.5,
               0.75, 0.5, 1.75,
               1.25, 0.125, 2.25;
  obs.gens.resize(4, 1);
  obs.gens << 3.0, 3.5, 2.5, 3.25;
  return obs;
}

}  // namespace

TEST_CASE("CSV round trip preserves values exactly") {
  gridinfer::Rng rng(8);
  ObservationSet obs = small_obs();
  // inject awkward values: tiny, huge, many digits
  obs.loads(0, 0) = 1.0 / 3.0;
  obs.loads(1, 1) = 1e-17;
  obs.loads(2, 2) = 12345.6789012345678;
  const std::string path = "test_obs_roundtrip.csv";
  write_observations_csv(obs, path);
  const ObservationSet back = read_observations_csv(path);
  CHECK(back.load_labels == obs.load_labels);
  CHECK(back.gen_labels == obs.gen_labels);
  CHECK(back.timestamps == obs.timestamps);
  CHECK((back.loads - obs.loads).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.gens - obs.gens).cwiseAbs().maxCoeff() == 0.0);
  std::remove(path.c_str());
}

TEST_CASE("CSV parse errors name the offending row and column") {
  const std::string path = "test_obs_bad.csv";
  {
    std::ofstream out(path);
    out << "timestamp,L:a,G:g1\n0,1.0,2.0\n1,,2.0\n";
  }
  try {
    read_observations_csv(path);
    FAIL("expected parse rejection");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("row 2") != std::string::npos);
    CHECK(msg.find("L:a") != std::string::npos);
    CHECK(e.code() == ErrorCode::Config);
  }
  std::remove(path.c_str());
}

TEST_CASE("CSV with unknown column prefix is rejected") {
  const std::string path = "test_obs_badcol.csv";
  {
    std::ofstream out(path);
    out << "timestamp,X:a\n0,1.0\n";
  }
  CHECK_THROWS_AS(read_observations_csv(path), Error);
  std::remove(path.c_str());
}

TEST_CASE("binary cache round trip is bit exact") {
  ObservationSet obs = small_obs();
  obs.loads(0, 0) = 0.1 + 0.2;  // not exactly representable in decimal
  const std::string path = "test_obs_cache.bin";
  write_observations_cache(obs, path);
  const ObservationSet back = read_observations_cache(path);
  CHECK(back.load_labels == obs.load_labels);
  CHECK(back.timestamps == obs.timestamps);
  CHECK(back.loads == obs.loads);
  CHECK(back.gens == obs.gens);
  std::remove(path.c_str());
}

TEST_CASE("cache rejects a corrupted magic header") {
  const std::string path = "test_obs_badmagic.bin";
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOTACACHE";
  }
  CHECK_THROWS_AS(read_observations_cache(path), Error);
  std::remove(path.c_str());
}

TEST_CASE("synthesize is deterministic in (config, seed)") {
  SynthesizeConfig cfg;
  cfg.n_loads = 12;
  cfg.n_gens = 3;
  cfg.n_samples = 400;
  const ObservationSet a = synthesize(cfg, 7);
  const ObservationSet b = synthesize(cfg, 7);
  const ObservationSet c = synthesize(cfg, 8);
  CHECK(a.loads == b.loads);
  CHECK(a.gens == b.gens);
  CHECK(a.loads != c.loads);
}

TEST_CASE("synthesized loads are positive with the documented shapes") {
  SynthesizeConfig cfg;
  cfg.n_loads = 20;
  cfg.n_gens = 4;
  cfg.n_samples = 2000;
  const ObservationSet obs = synthesize(cfg, 3);
  CHECK(obs.load_count() == 20);
  CHECK(obs.gen_count() == 4);
  CHECK(obs.sample_count() == 2000);
  CHECK(obs.loads.minCoeff() > 0.0);
  CHECK(obs.loads_are_magnitudes);
  // descending scale ordering: first load has the largest mean
  Eigen::VectorXd means = obs.loads.colwise().mean();
  CHECK(means[0] > means[19]);
}

TEST_CASE("rho = 1 gives perfectly correlated detrended fluctuations") {
  SynthesizeConfig cfg;
  cfg.n_loads = 6;
  cfg.n_gens = 1;
  cfg.n_samples = 3000;
  cfg.rho = 1.0;
  const ObservationSet obs = synthesize(cfg, 11);
  // normalize each column; the shared profile means any two columns are
  // then identical up to affine scaling -> correlation 1
  for (int j = 1; j < 6; ++j) {
    const double c =
        oracle::sample_correlation(obs.loads.col(0), obs.loads.col(j));
    CHECK(c > 0.999999);
  }
}

TEST_CASE("rho = 0 decorrelates the idiosyncratic parts") {
  SynthesizeConfig cfg;
  cfg.n_loads = 4;
  cfg.n_gens = 1;
  cfg.n_samples = 20000;
  cfg.rho = 0.0;
  cfg.seasonal_daily = 0.0;   // remove the shared profile entirely
  cfg.seasonal_weekly = 0.0;
  const ObservationSet obs = synthesize(cfg, 13);
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j) {
      const double c =
          oracle::sample_correlation(obs.loads.col(i), obs.loads.col(j));
      CHECK(std::abs(c) < 0.05);
    }
}

TEST_CASE("higher rho raises pairwise correlation") {
  SynthesizeConfig cfg;
  cfg.n_loads = 5;
  cfg.n_gens = 1;
  cfg.n_samples = 8000;
  auto mean_corr = [&](double rho) {
    cfg.rho = rho;
    const ObservationSet obs = synthesize(cfg, 17);
    double acc = 0.0;
    int n = 0;
    for (int i = 0; i < 5; ++i)
      for (int j = i + 1; j < 5; ++j, ++n)
        acc += oracle::sample_correlation(obs.loads.col(i), obs.loads.col(j));
    return acc / n;
  };
  CHECK(mean_corr(0.95) > mean_corr(0.2));
}

TEST_CASE("step generators dwell on discrete levels") {
  SynthesizeConfig cfg;
  cfg.n_loads = 2;
  cfg.n_gens = 3;
  cfg.n_samples = 500;
  cfg.gen_mode = GenMode::Steps;
  const ObservationSet obs = synthesize(cfg, 21);
  for (int j = 0; j < 3; ++j) {
    std::set<double> levels;
    for (int t = 0; t < 500; ++t) levels.insert(obs.gens(t, j));
    CHECK(levels.size() <= 4);
    CHECK(levels.size() >= 2);
  }
}

TEST_CASE("load-coupled generators are deterministic functions of the loads") {
  SynthesizeConfig cfg;
  cfg.n_loads = 6;
  cfg.n_gens = 2;
  cfg.n_samples = 600;
  cfg.gen_mode = GenMode::LoadCoupled;
  const ObservationSet obs = synthesize(cfg, 23);
  // exact linear dependence: residual of least squares on loads is zero
  Eigen::MatrixXd x(600, 7);
  x.leftCols(6) = obs.loads;
  x.col(6).setOnes();
  const Eigen::MatrixXd coef =
      (x.transpose() * x).ldlt().solve(x.transpose() * obs.gens);
  CHECK((x * coef - obs.gens).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("synthesize config JSON round trip and validation") {
  SynthesizeConfig cfg;
  cfg.n_loads = 7;
  cfg.rho = 0.5;
  cfg.gen_mode = GenMode::LoadCoupled;
  const SynthesizeConfig back =
      SynthesizeConfig::from_json_text(cfg.to_json_text());
  CHECK(back.n_loads == 7);
  CHECK(back.rho == 0.5);
  CHECK(back.gen_mode == GenMode::LoadCoupled);

  SynthesizeConfig bad;
  bad.rho = 1.5;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad.rho = 0.5;
  bad.n_loads = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("make_split: disjoint, exhaustive, correctly sized, sorted") {
  SplitSpec spec;
  spec.train_fraction = 0.8;
  spec.seed = 5;
  const RowSplit split = make_split(1000, spec);
  CHECK(split.train_rows.size() == 800);
  CHECK(split.test_rows.size() == 200);
  CHECK(std::is_sorted(split.train_rows.begin(), split.train_rows.end()));
  CHECK(std::is_sorted(split.test_rows.begin(), split.test_rows.end()));
  std::set<int> all(split.train_rows.begin(), split.train_rows.end());
  all.insert(split.test_rows.begin(), split.test_rows.end());
  CHECK(all.size() == 1000);
  CHECK(*all.begin() == 0);
  CHECK(*all.rbegin() == 999);

  const RowSplit again = make_split(1000, spec);
  CHECK(again.train_rows == split.train_rows);
  spec.seed = 6;
  const RowSplit other = make_split(1000, spec);
  CHECK(other.train_rows != split.train_rows);
}

TEST_CASE("make_split train size is round(fraction * n)") {
  SplitSpec spec;
  spec.train_fraction = 0.1;
  // 0.1 * 17472 * 0.8 arithmetic shows up downstream; here check rounding
  CHECK(make_split(25, spec).train_rows.size() == 3);   // round(2.5) = 3
  spec.train_fraction = 0.33;
  CHECK(make_split(100, spec).train_rows.size() == 33);
}

TEST_CASE("contiguous split is a leading block") {
  SplitSpec spec;
  spec.train_fraction = 0.6;
  spec.contiguous = true;
  const RowSplit split = make_split(10, spec);
  CHECK(split.train_rows == std::vector<int>({0, 1, 2, 3, 4, 5}));
  CHECK(split.test_rows == std::vector<int>({6, 7, 8, 9}));
}

TEST_CASE("subsample_train_rows is nested and correctly sized") {
  SplitSpec spec;
  spec.train_fraction = 0.8;
  spec.seed = 9;
  const RowSplit split = make_split(17472 * 8, spec);  // large train set
  const auto s10 = subsample_train_rows(split, 0.01);
  const auto s50 = subsample_train_rows(split, 0.5);
  const auto s100 = subsample_train_rows(split, 1.0);
  CHECK(s100.size() == split.train_rows.size());
  CHECK(s10.size() ==
        static_cast<std::size_t>(std::llround(0.01 * split.train_rows.size())));
  // nesting: every row of the smaller subset is in the larger one
  const std::set<int> big(s50.begin(), s50.end());
  for (int r : s10) CHECK(big.count(r) == 1);
  const std::set<int> full(s100.begin(), s100.end());
  for (int r : s50) CHECK(full.count(r) == 1);
  // all subsampled rows come from the training rows
  const std::set<int> train(split.train_rows.begin(), split.train_rows.end());
  for (int r : s10) CHECK(train.count(r) == 1);
}

TEST_CASE("subsample of 1% of a 139776-row 80% train split has 1398 rows") {
  SplitSpec spec;
  spec.train_fraction = 0.8;
  const RowSplit split = make_split(174720, spec);
  CHECK(split.train_rows.size() == 139776);
  CHECK(subsample_train_rows(split, 0.01).size() == 1398);
}

TEST_CASE("rank_and_split_targets orders by mean demand with index ties") {
  ObservationSet obs = small_obs();
  // col means over rows {0,1,2,3}: a=1.125, b=0.34375, c=2.125
  LeaveOutSpec spec;
  spec.target_kind = TargetKind::Loads;
  spec.m_top = 2;
  const std::vector<int> rows = {0, 1, 2, 3};
  const ColumnSelection sel = rank_and_split_targets(obs, spec, rows);
  CHECK(sel.target_labels == std::vector<std::string>({"L:c", "L:a"}));
  CHECK(sel.feature_labels == std::vector<std::string>({"L:b", "G:g1"}));
}

TEST_CASE("ranking respects the training rows only") {
  ObservationSet obs = small_obs();
  obs.loads(3, 1) = 1000.0;  // huge value outside the training rows
  LeaveOutSpec spec;
  spec.m_top = 1;
  const ColumnSelection sel = rank_and_split_targets(obs, spec, {0, 1, 2});
  CHECK(sel.target_labels == std::vector<std::string>({"L:c"}));
}

TEST_CASE("mean-demand ties break toward the lower column index") {
  ObservationSet obs;
  obs.load_labels = {"x", "y"};
  obs.timestamps = {0, 1};
  obs.loads.resize(2, 2);
  obs.loads << 1.0, 1.0, 2.0, 2.0;
  obs.gens.resize(2, 0);
  LeaveOutSpec spec;
  spec.m_top = 1;
  const ColumnSelection sel = rank_and_split_targets(obs, spec, {0, 1});
  CHECK(sel.target_labels == std::vector<std::string>({"L:x"}));
}

TEST_CASE("boundary m_top values") {
  const ObservationSet obs = small_obs();
  LeaveOutSpec spec;
  spec.m_top = 0;
  CHECK_THROWS_AS(rank_and_split_targets(obs, spec, {0, 1, 2, 3}), Error);
  spec.m_top = 3;  // all loads: nothing left to regress on except gens
  CHECK_THROWS_AS(rank_and_split_targets(obs, spec, {0, 1, 2, 3}), Error);
  spec.m_top = 2;
  CHECK_NOTHROW(rank_and_split_targets(obs, spec, {0, 1, 2, 3}));
}

TEST_CASE("generator targets keep all loads as features") {
  SynthesizeConfig cfg;
  cfg.n_loads = 5;
  cfg.n_gens = 3;
  cfg.n_samples = 50;
  const ObservationSet obs = synthesize(cfg, 31);
  LeaveOutSpec spec;
  spec.target_kind = TargetKind::Generators;
  spec.m_top = 2;
  std::vector<int> rows(50);
  std::iota(rows.begin(), rows.end(), 0);
  const ColumnSelection sel = rank_and_split_targets(obs, spec, rows);
  CHECK(sel.target_labels.size() == 2);
  CHECK(sel.feature_labels.size() == 5 + 1);  // all loads + remaining gen
  for (const auto& t : sel.target_labels)
    CHECK(t.rfind("G:", 0) == 0);
  // m_top equal to every generator is allowed for generator targets
  spec.m_top = 3;
  const ColumnSelection all = rank_and_split_targets(obs, spec, rows);
  CHECK(all.target_labels.size() == 3);
  CHECK(all.feature_labels.size() == 5);
}

TEST_CASE("explicit label selection") {
  const ObservationSet obs = small_obs();
  LeaveOutSpec spec;
  spec.ranking = Ranking::ByLabelList;
  spec.explicit_labels = {"L:b"};
  const ColumnSelection sel = rank_and_split_targets(obs, spec, {0, 1, 2, 3});
  CHECK(sel.target_labels == std::vector<std::string>({"L:b"}));
  spec.explicit_labels = {"L:nope"};
  CHECK_THROWS_AS(rank_and_split_targets(obs, spec, {0, 1, 2, 3}), Error);
}

TEST_CASE("assemble appends a bias column and honors the split") {
  const ObservationSet obs = small_obs();
  LeaveOutSpec spec;
  spec.m_top = 1;
  SplitSpec sspec;
  sspec.train_fraction = 0.75;
  sspec.contiguous = true;
  const RowSplit split = make_split(4, sspec);
  const ColumnSelection sel = rank_and_split_targets(obs, spec, split.train_rows);
  const RegressionProblem prob = assemble(obs, sel, split);
  CHECK(prob.X.rows() == 4);
  CHECK(prob.X.cols() == 4);  // 2 loads + 1 gen + bias
  CHECK((prob.X.col(3).array() == 1.0).all());
  CHECK(prob.Y.cols() == 1);
  CHECK(prob.train_X().rows() == 3);
  CHECK(prob.test_X().rows() == 1);
  CHECK(prob.test_Y()(0, 0) == obs.loads(3, 2));  // target is L:c
  // feature columns match the labeled source columns
  CHECK(prob.X(0, 0) == obs.loads(0, 0));  // L:a
  CHECK(prob.X(0, 2) == obs.gens(0, 0));   // G:g1
}

TEST_CASE("assemble rejects overlapping feature/target labels") {
  const ObservationSet obs = small_obs();
  ColumnSelection sel;
  sel.feature_labels = {"L:a", "L:b"};
  sel.target_labels = {"L:a"};
  SplitSpec sspec;
  const RowSplit split = make_split(4, sspec);
  CHECK_THROWS_AS(assemble(obs, sel, split), Error);
}
