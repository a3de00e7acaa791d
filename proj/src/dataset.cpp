#include "gridinfer/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "gridinfer/rng.hpp"

namespace gridinfer {

// --- synthesis -------------------------------------------------------------

void SynthesizeConfig::validate() const {
  if (n_loads < 1) throw config_error("n_loads must be >= 1");
  if (n_gens < 0) throw config_error("n_gens must be >= 0");
  if (n_samples < 1) throw config_error("n_samples must be >= 1");
  if (rho < 0.0 || rho > 1.0) throw config_error("rho must be in [0, 1]");
  if (seasonal_daily < 0.0 || seasonal_weekly < 0.0)
    throw config_error("seasonal amplitudes must be >= 0");
  if (fluct_scale < 0.0) throw config_error("fluct_scale must be >= 0");
  if (noise_scale < 0.0) throw config_error("noise_scale must be >= 0");
}

SynthesizeConfig SynthesizeConfig::from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("synthesize config is not valid JSON: ") +
                       e.what());
  }
  SynthesizeConfig c;
  c.n_loads = j.value("n_loads", c.n_loads);
  c.n_gens = j.value("n_gens", c.n_gens);
  c.n_samples = j.value("n_samples", c.n_samples);
  c.rho = j.value("rho", c.rho);
  c.seasonal_daily = j.value("seasonal_daily", c.seasonal_daily);
  c.seasonal_weekly = j.value("seasonal_weekly", c.seasonal_weekly);
  c.fluct_scale = j.value("fluct_scale", c.fluct_scale);
  c.noise_scale = j.value("noise_scale", c.noise_scale);
  const std::string mode = j.value("gen_mode", std::string("steps"));
  if (mode == "steps")
    c.gen_mode = GenMode::Steps;
  else if (mode == "load_coupled")
    c.gen_mode = GenMode::LoadCoupled;
  else
    throw config_error("unknown gen_mode '" + mode + "'");
  c.validate();
  return c;
}

std::string SynthesizeConfig::to_json_text() const {
  nlohmann::json j = {
      {"n_loads", n_loads},
      {"n_gens", n_gens},
      {"n_samples", n_samples},
      {"rho", rho},
      {"seasonal_daily", seasonal_daily},
      {"seasonal_weekly", seasonal_weekly},
      {"fluct_scale", fluct_scale},
      {"noise_scale", noise_scale},
      {"gen_mode", gen_mode == GenMode::Steps ? "steps" : "load_coupled"},
  };
  return j.dump();
}

namespace {

// per-bus nominal demand, descending in bus index so ByMeanDemand ranking
// is stable: bus 0 is the largest load
double load_scale(int i, int m) {
  const double t = m > 1 ? static_cast<double>(i) / (m - 1) : 0.0;
  return 3.0 * (1.0 - 0.8 * t);
}

// idiosyncratic fluctuation weight, increasing in bus index: the largest
// loads are the most predictable ones
double idio_weight(int i, int m) {
  const double t = m > 1 ? static_cast<double>(i) / (m - 1) : 0.0;
  return 0.3 + 3.7 * t;
}

double gen_rated(int j, int m) {
  const double t = m > 1 ? static_cast<double>(j) / (m - 1) : 0.0;
  return 2.0 * (1.0 - 0.7 * t);
}

}  // namespace

ObservationSet synthesize(const SynthesizeConfig& config, std::uint64_t seed) {
  config.validate();
  const auto n = config.n_samples;
  const int ml = config.n_loads;
  const int mg = config.n_gens;

  ObservationSet obs;
  obs.loads_are_magnitudes = true;
  obs.timestamps.resize(n);
  std::iota(obs.timestamps.begin(), obs.timestamps.end(), 0);
  for (int i = 0; i < ml; ++i) obs.load_labels.push_back("load" + std::to_string(i));
  for (int j = 0; j < mg; ++j) obs.gen_labels.push_back("gen" + std::to_string(j));
  obs.loads.resize(n, ml);
  obs.gens.resize(n, mg);

  // shared seasonal profile, mean 1
  Eigen::VectorXd season(n);
  for (std::int64_t t = 0; t < n; ++t) {
    season[t] = 1.0 +
                config.seasonal_daily * std::sin(2.0 * M_PI * t / 24.0 + 0.3) +
                config.seasonal_weekly * std::sin(2.0 * M_PI * t / 168.0 + 1.1);
  }

  // shared fluctuation stream
  Eigen::VectorXd shared(n);
  {
    Rng rng(derive_seed(seed, 0));
    for (std::int64_t t = 0; t < n; ++t) shared[t] = rng.gaussian();
  }

  const double rho_sq = std::sqrt(config.rho);
  const double idio_sq = std::sqrt(1.0 - config.rho);
  for (int i = 0; i < ml; ++i) {
    Rng rng(derive_seed(seed, 1000 + static_cast<std::uint64_t>(i)));
    const double scale = load_scale(i, ml);
    const double wi = std::sqrt(idio_weight(i, ml));
    for (std::int64_t t = 0; t < n; ++t) {
      const double fluct =
          config.fluct_scale * (rho_sq * shared[t] + idio_sq * wi * rng.gaussian());
      double rel = season[t] + fluct;
      if (config.noise_scale > 0.0) rel += config.noise_scale * rng.gaussian();
      // loads are consumption magnitudes: clamp the relative level at a
      // small floor so deep fluctuation dips never go negative
      obs.loads(t, i) = scale * std::max(rel, 0.02);
    }
  }

  if (config.gen_mode == GenMode::Steps) {
    // step-like dispatch: piecewise-constant output at a few discrete
    // fractions of rated power, independent of the loads
    static const double kLevels[] = {0.0, 0.3, 0.6, 1.0};
    for (int j = 0; j < mg; ++j) {
      Rng rng(derive_seed(seed, 2000000 + static_cast<std::uint64_t>(j)));
      const double rated = gen_rated(j, mg);
      std::int64_t t = 0;
      while (t < n) {
        const std::int64_t dwell = 6 + static_cast<std::int64_t>(rng.below(42));
        const double level = rated * kLevels[rng.below(4)];
        for (std::int64_t s = t; s < std::min(n, t + dwell); ++s)
          obs.gens(s, j) = level;
        t += dwell;
      }
    }
  } else {
    // controlled mode: each generator is a fixed positive combination of
    // the loads, hence exactly linearly predictable from them
    for (int j = 0; j < mg; ++j) {
      Rng rng(derive_seed(seed, 3000000 + static_cast<std::uint64_t>(j)));
      Eigen::VectorXd w(ml);
      for (int i = 0; i < ml; ++i) w[i] = rng.uniform();
      w *= gen_rated(j, mg) / w.sum();
      obs.gens.col(j) = obs.loads * w;
    }
  }
  return obs;
}

// --- CSV -------------------------------------------------------------------

void write_observations_csv(const ObservationSet& obs,
                            const std::string& path) {
  std::ofstream out(path);
  if (!out) throw config_error("cannot write '" + path + "'");
  out << "timestamp";
  for (const auto& l : obs.load_labels) out << ",L:" << l;
  for (const auto& l : obs.gen_labels) out << ",G:" << l;
  out << '\n';
  char buf[40];
  for (std::int64_t t = 0; t < obs.sample_count(); ++t) {
    out << obs.timestamps[t];
    for (int i = 0; i < obs.load_count(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", obs.loads(t, i));
      out << ',' << buf;
    }
    for (int j = 0; j < obs.gen_count(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", obs.gens(t, j));
      out << ',' << buf;
    }
    out << '\n';
  }
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

// row is 1-based over the data rows; name is the header of the column
double parse_cell(const std::string& cell, std::int64_t row,
                  const std::string& name) {
  if (cell.empty()) {
    std::ostringstream os;
    os << "blank cell at row " << row << ", column '" << name << "'";
    throw config_error(os.str());
  }
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (end != cell.c_str() + cell.size()) {
    std::ostringstream os;
    os << "non-numeric cell '" << cell << "' at row " << row << ", column '"
       << name << "'";
    throw config_error(os.str());
  }
  return v;
}

}  // namespace

ObservationSet read_observations_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw config_error("'" + path + "' is empty");
  const auto header = split_line(line);
  if (header.empty() || header[0] != "timestamp")
    throw config_error("first CSV column must be 'timestamp'");

  ObservationSet obs;
  std::vector<int> col_kind;  // 0 = load, 1 = gen, per data column
  for (std::size_t c = 1; c < header.size(); ++c) {
    const auto& h = header[c];
    if (h.rfind("L:", 0) == 0) {
      obs.load_labels.push_back(h.substr(2));
      col_kind.push_back(0);
    } else if (h.rfind("G:", 0) == 0) {
      obs.gen_labels.push_back(h.substr(2));
      col_kind.push_back(1);
    } else {
      throw config_error("CSV column '" + h + "' lacks an L: or G: prefix");
    }
  }

  std::vector<std::int64_t> stamps;
  std::vector<double> values;  // row-major over data columns
  std::int64_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != header.size()) {
      std::ostringstream os;
      os << "row " << row + 1 << " has " << cells.size()
         << " cells, expected " << header.size();
      throw config_error(os.str());
    }
    stamps.push_back(
        static_cast<std::int64_t>(parse_cell(cells[0], row + 1, header[0])));
    for (std::size_t c = 1; c < cells.size(); ++c)
      values.push_back(parse_cell(cells[c], row + 1, header[c]));
    ++row;
  }
  if (row == 0) throw config_error("'" + path + "' has no data rows");

  obs.timestamps = std::move(stamps);
  obs.loads.resize(row, static_cast<int>(obs.load_labels.size()));
  obs.gens.resize(row, static_cast<int>(obs.gen_labels.size()));
  const std::size_t width = col_kind.size();
  for (std::int64_t t = 0; t < row; ++t) {
    int li = 0, gi = 0;
    for (std::size_t c = 0; c < width; ++c) {
      const double v = values[t * width + c];
      if (col_kind[c] == 0)
        obs.loads(t, li++) = v;
      else
        obs.gens(t, gi++) = v;
    }
  }
  return obs;
}

// --- binary cache ----------------------------------------------------------

namespace {
constexpr char kCacheMagic[8] = {'G', 'I', 'O', 'B', 'S', '1', 0, 0};

void put_label(std::ofstream& out, const std::string& s) {
  const std::uint32_t len = static_cast<std::uint32_t>(s.size());
  out.write(reinterpret_cast<const char*>(&len), 4);
  out.write(s.data(), len);
}

std::string get_label(std::ifstream& in) {
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), 4);
  std::string s(len, 0);
  in.read(s.data(), len);
  return s;
}
}  // namespace

void write_observations_cache(const ObservationSet& obs,
                              const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw config_error("cannot write '" + path + "'");
  out.write(kCacheMagic, 8);
  const std::int64_t n = obs.sample_count();
  const std::int32_t ml = obs.load_count();
  const std::int32_t mg = obs.gen_count();
  const std::uint8_t mag = obs.loads_are_magnitudes ? 1 : 0;
  out.write(reinterpret_cast<const char*>(&n), 8);
  out.write(reinterpret_cast<const char*>(&ml), 4);
  out.write(reinterpret_cast<const char*>(&mg), 4);
  out.write(reinterpret_cast<const char*>(&mag), 1);
  for (const auto& l : obs.load_labels) put_label(out, l);
  for (const auto& l : obs.gen_labels) put_label(out, l);
  out.write(reinterpret_cast<const char*>(obs.timestamps.data()), 8 * n);
  // row-major payload
  for (std::int64_t t = 0; t < n; ++t) {
    for (int i = 0; i < ml; ++i) {
      const double v = obs.loads(t, i);
      out.write(reinterpret_cast<const char*>(&v), 8);
    }
    for (int j = 0; j < mg; ++j) {
      const double v = obs.gens(t, j);
      out.write(reinterpret_cast<const char*>(&v), 8);
    }
  }
}

ObservationSet read_observations_cache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error("cannot open '" + path + "'");
  char magic[8] = {};
  in.read(magic, 8);
  if (std::memcmp(magic, kCacheMagic, 8) != 0)
    throw config_error("'" + path + "' is not an observation cache file");
  std::int64_t n = 0;
  std::int32_t ml = 0, mg = 0;
  std::uint8_t mag = 0;
  in.read(reinterpret_cast<char*>(&n), 8);
  in.read(reinterpret_cast<char*>(&ml), 4);
  in.read(reinterpret_cast<char*>(&mg), 4);
  in.read(reinterpret_cast<char*>(&mag), 1);
  if (!in || n < 1 || ml < 0 || mg < 0)
    throw config_error("corrupt cache header in '" + path + "'");
  ObservationSet obs;
  obs.loads_are_magnitudes = mag != 0;
  for (int i = 0; i < ml; ++i) obs.load_labels.push_back(get_label(in));
  for (int j = 0; j < mg; ++j) obs.gen_labels.push_back(get_label(in));
  obs.timestamps.resize(n);
  in.read(reinterpret_cast<char*>(obs.timestamps.data()), 8 * n);
  obs.loads.resize(n, ml);
  obs.gens.resize(n, mg);
  for (std::int64_t t = 0; t < n; ++t) {
    for (int i = 0; i < ml; ++i) in.read(reinterpret_cast<char*>(&obs.loads(t, i)), 8);
    for (int j = 0; j < mg; ++j) in.read(reinterpret_cast<char*>(&obs.gens(t, j)), 8);
  }
  if (!in) throw config_error("truncated cache payload in '" + path + "'");
  return obs;
}

// --- splitting and assembly ------------------------------------------------

RowSplit make_split(std::int64_t n_rows, const SplitSpec& spec) {
  if (n_rows < 1) throw config_error("cannot split an empty dataset");
  if (spec.train_fraction <= 0.0 || spec.train_fraction > 1.0)
    throw config_error("train_fraction must be in (0, 1]");
  const auto n_train = std::min<std::int64_t>(
      n_rows, std::llround(spec.train_fraction * n_rows));
  RowSplit split;
  split.seed = spec.seed;
  if (spec.contiguous) {
    for (std::int64_t i = 0; i < n_rows; ++i)
      (i < n_train ? split.train_rows : split.test_rows)
          .push_back(static_cast<int>(i));
    return split;
  }
  std::vector<int> perm(n_rows);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(derive_seed(spec.seed, 0x5b17));
  for (std::int64_t i = n_rows - 1; i > 0; --i)
    std::swap(perm[i], perm[rng.below(i + 1)]);
  split.train_rows.assign(perm.begin(), perm.begin() + n_train);
  split.test_rows.assign(perm.begin() + n_train, perm.end());
  std::sort(split.train_rows.begin(), split.train_rows.end());
  std::sort(split.test_rows.begin(), split.test_rows.end());
  return split;
}

std::vector<int> subsample_train_rows(const RowSplit& split, double fraction) {
  if (fraction <= 0.0 || fraction > 1.0)
    throw config_error("subsample fraction must be in (0, 1]");
  std::vector<int> rows = split.train_rows;
  const auto k = std::min<std::size_t>(
      rows.size(),
      static_cast<std::size_t>(std::llround(fraction * rows.size())));
  if (k == 0) throw config_error("subsample fraction selects zero rows");
  Rng rng(derive_seed(split.seed, 0xab5));
  for (std::size_t i = rows.size() - 1; i > 0; --i)
    std::swap(rows[i], rows[rng.below(i + 1)]);
  rows.resize(k);
  std::sort(rows.begin(), rows.end());
  return rows;
}

ColumnSelection rank_and_split_targets(const ObservationSet& obs,
                                       const LeaveOutSpec& spec,
                                       const std::vector<int>& train_rows) {
  const bool loads = spec.target_kind == TargetKind::Loads;
  const Eigen::MatrixXd& mat = loads ? obs.loads : obs.gens;
  const auto& labels = loads ? obs.load_labels : obs.gen_labels;
  const int total = static_cast<int>(mat.cols());
  if (total == 0) throw config_error("no columns of the requested kind");

  const std::string want_prefix = loads ? "L:" : "G:";
  std::vector<int> target_cols;
  if (spec.ranking == Ranking::ByLabelList) {
    std::set<int> seen;
    for (const auto& prefixed : spec.explicit_labels) {
      if (prefixed.rfind(want_prefix, 0) != 0)
        throw config_error("target label '" + prefixed +
                           "' does not match the requested kind (" +
                           want_prefix + "...)");
      const std::string name = prefixed.substr(2);
      const auto it = std::find(labels.begin(), labels.end(), name);
      if (it == labels.end())
        throw config_error("unknown target label '" + prefixed + "'");
      const int c = static_cast<int>(it - labels.begin());
      if (!seen.insert(c).second)
        throw config_error("duplicate target label '" + prefixed + "'");
      target_cols.push_back(c);
    }
    if (target_cols.empty()) throw config_error("explicit label list is empty");
  } else {
    const int limit = loads ? total - 1 : total;
    if (spec.m_top < 1 || spec.m_top > limit)
      throw config_error("m_top " + std::to_string(spec.m_top) +
                         " out of range [1, " + std::to_string(limit) + "]");
    if (train_rows.empty()) throw config_error("empty training partition");
    std::vector<std::pair<double, int>> ranked(total);
    for (int c = 0; c < total; ++c) {
      double s = 0.0;
      for (int r : train_rows) s += std::abs(mat(r, c));
      ranked[c] = {s / train_rows.size(), c};
    }
    // descending by mean magnitude, ties broken by lower column index
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (int k = 0; k < spec.m_top; ++k) target_cols.push_back(ranked[k].second);
  }

  std::set<int> target_set(target_cols.begin(), target_cols.end());
  ColumnSelection out;
  const char prefix = loads ? 'L' : 'G';
  for (int c : target_cols)
    out.target_labels.push_back(std::string(1, prefix) + ":" + labels[c]);
  if (loads) {
    // features: the remaining loads plus every observed generator
    for (int c = 0; c < total; ++c)
      if (!target_set.count(c))
        out.feature_labels.push_back("L:" + labels[c]);
    for (const auto& l : obs.gen_labels) out.feature_labels.push_back("G:" + l);
  } else {
    // generator targets: features are all loads plus the remaining generators
    for (const auto& l : obs.load_labels) out.feature_labels.push_back("L:" + l);
    for (int c = 0; c < total; ++c)
      if (!target_set.count(c))
        out.feature_labels.push_back("G:" + labels[c]);
  }
  return out;
}

namespace {

Eigen::VectorXd column_by_label(const ObservationSet& obs,
                                const std::string& prefixed) {
  if (prefixed.size() < 3 || prefixed[1] != ':')
    throw config_error("label '" + prefixed + "' lacks an L:/G: prefix");
  const std::string name = prefixed.substr(2);
  const bool is_load = prefixed[0] == 'L';
  const auto& labels = is_load ? obs.load_labels : obs.gen_labels;
  const auto it = std::find(labels.begin(), labels.end(), name);
  if (it == labels.end())
    throw config_error("unknown column label '" + prefixed + "'");
  const auto c = it - labels.begin();
  return is_load ? obs.loads.col(c) : obs.gens.col(c);
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m,
                          const std::vector<int>& rows) {
  Eigen::MatrixXd out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(i) = m.row(rows[i]);
  return out;
}

}  // namespace

Eigen::MatrixXd RegressionProblem::train_X() const {
  return take_rows(X, split.train_rows);
}
Eigen::MatrixXd RegressionProblem::train_Y() const {
  return take_rows(Y, split.train_rows);
}
Eigen::MatrixXd RegressionProblem::test_X() const {
  return take_rows(X, split.test_rows);
}
Eigen::MatrixXd RegressionProblem::test_Y() const {
  return take_rows(Y, split.test_rows);
}

RegressionProblem assemble(const ObservationSet& obs,
                           const ColumnSelection& cols, const RowSplit& split) {
  std::set<std::string> feat(cols.feature_labels.begin(),
                             cols.feature_labels.end());
  for (const auto& t : cols.target_labels)
    if (feat.count(t))
      throw config_error("label '" + t + "' is both feature and target");

  const auto n = obs.sample_count();
  RegressionProblem p;
  p.feature_labels = cols.feature_labels;
  p.target_labels = cols.target_labels;
  p.split = split;
  p.X.resize(n, cols.feature_labels.size() + 1);
  for (std::size_t c = 0; c < cols.feature_labels.size(); ++c)
    p.X.col(c) = column_by_label(obs, cols.feature_labels[c]);
  p.X.col(cols.feature_labels.size()).setOnes();  // bias column last
  p.Y.resize(n, cols.target_labels.size());
  for (std::size_t c = 0; c < cols.target_labels.size(); ++c)
    p.Y.col(c) = column_by_label(obs, cols.target_labels[c]);
  return p;
}

}  // namespace gridinfer
