#include "gridinfer/grid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

namespace gridinfer {

namespace {

void check_connected(int n, const std::vector<Line>& lines) {
  if (n == 0) throw config_error("network has no buses");
  std::vector<std::vector<int>> adj(n);
  for (const auto& ln : lines) {
    adj[ln.from].push_back(ln.to);
    adj[ln.to].push_back(ln.from);
  }
  std::vector<char> seen(n, 0);
  std::queue<int> q;
  q.push(0);
  seen[0] = 1;
  int reached = 1;
  while (!q.empty()) {
    int u = q.front();
    q.pop();
    for (int v : adj[u]) {
      if (!seen[v]) {
        seen[v] = 1;
        ++reached;
        q.push(v);
      }
    }
  }
  if (reached != n) {
    std::ostringstream os;
    os << "network graph is disconnected: component containing bus 0 has "
       << reached << " of " << n << " buses; unreachable buses:";
    int listed = 0;
    for (int i = 0; i < n && listed < 10; ++i) {
      if (!seen[i]) {
        os << ' ' << i;
        ++listed;
      }
    }
    throw config_error(os.str());
  }
}

}  // namespace

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> build_admittance(
    const std::vector<Bus>& buses, const std::vector<Line>& lines) {
  const int n = static_cast<int>(buses.size());
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n, n);
  std::set<std::pair<int, int>> seen;
  for (const auto& ln : lines) {
    if (ln.from < 0 || ln.from >= n || ln.to < 0 || ln.to >= n)
      throw config_error("line references unknown bus index");
    if (ln.from == ln.to) throw config_error("line endpoints coincide");
    auto key = std::minmax(ln.from, ln.to);
    if (!seen.insert(key).second) {
      std::ostringstream os;
      os << "duplicate line record for bus pair (" << key.first << ", "
         << key.second << "); merge parallel lines first";
      throw config_error(os.str());
    }
    if (std::abs(ln.b) <= 0.0)
      throw config_error("line susceptance must be nonzero");
    g(ln.from, ln.to) -= ln.g;
    g(ln.to, ln.from) -= ln.g;
    g(ln.from, ln.from) += ln.g;
    g(ln.to, ln.to) += ln.g;
    b(ln.from, ln.to) += ln.b;
    b(ln.to, ln.from) += ln.b;
    b(ln.from, ln.from) -= ln.b;
    b(ln.to, ln.to) -= ln.b;
  }
  check_connected(n, lines);
  return {std::move(g), std::move(b)};
}

GridNetwork::GridNetwork(std::vector<Bus> buses, std::vector<Line> lines,
                         double base_mva)
    : base_mva_(base_mva) {
  const int n = static_cast<int>(buses.size());
  std::unordered_map<int, int> index_of;
  id_of_.reserve(n);
  for (int i = 0; i < n; ++i) {
    if (!index_of.emplace(buses[i].id, i).second)
      throw config_error("duplicate bus id " + std::to_string(buses[i].id));
    id_of_.push_back(buses[i].id);
    if (buses[i].v_set <= 0.0)
      throw config_error("bus " + std::to_string(buses[i].id) +
                         ": v_set must be positive");
  }
  // remap line endpoints from external labels to internal indices
  for (auto& ln : lines) {
    auto it_f = index_of.find(ln.from);
    auto it_t = index_of.find(ln.to);
    if (it_f == index_of.end() || it_t == index_of.end())
      throw config_error("line references unknown bus id");
    ln.from = it_f->second;
    ln.to = it_t->second;
  }
  buses_ = std::move(buses);
  lines_ = std::move(lines);
  std::tie(g_, b_) = build_admittance(buses_, lines_);

  degree_.assign(n, 0);
  incident_.assign(n, {});
  for (int k = 0; k < static_cast<int>(lines_.size()); ++k) {
    ++degree_[lines_[k].from];
    ++degree_[lines_[k].to];
    incident_[lines_[k].from].push_back(k);
    incident_[lines_[k].to].push_back(k);
  }

  int declared = -1;
  for (int i = 0; i < n; ++i) {
    if (buses_[i].kind == BusKind::Slack) {
      if (declared >= 0) throw config_error("more than one slack bus declared");
      declared = i;
    }
  }
  if (declared >= 0) {
    slack_ = declared;
  } else {
    double best = -1.0;
    for (int i = 0; i < n; ++i) {
      if (buses_[i].kind == BusKind::Generator && buses_[i].p_set > best) {
        best = buses_[i].p_set;
        slack_ = i;
      }
    }
    if (slack_ < 0)
      throw config_error("no slack bus declared and no generator to promote");
  }
}

int GridNetwork::bus_index(int id) const {
  for (int i = 0; i < bus_count(); ++i)
    if (id_of_[i] == id) return i;
  throw config_error("unknown bus id " + std::to_string(id));
}

Injections injections(const GridNetwork& net, const PowerFlowState& state) {
  const int n = net.bus_count();
  if (state.v.size() != n || state.theta.size() != n)
    throw config_error("state dimension does not match network");
  Injections out;
  out.p = Eigen::VectorXd::Zero(n);
  out.q = Eigen::VectorXd::Zero(n);
  const auto& g = net.conductance();
  const auto& b = net.susceptance();
  for (int i = 0; i < n; ++i) {
    double p = 0.0, q = 0.0;
    for (int j = 0; j < n; ++j) {
      if (g(i, j) == 0.0 && b(i, j) == 0.0) continue;
      const double d = state.theta[i] - state.theta[j];
      const double vv = state.v[i] * state.v[j];
      p += vv * (g(i, j) * std::cos(d) + b(i, j) * std::sin(d));
      q += vv * (g(i, j) * std::sin(d) - b(i, j) * std::cos(d));
    }
    out.p[i] = p;
    out.q[i] = q;
  }
  return out;
}

std::pair<double, double> line_flow(const GridNetwork& net,
                                    const PowerFlowState& state,
                                    int line_index) {
  if (line_index < 0 || line_index >= net.line_count())
    throw config_error("unknown line index " + std::to_string(line_index));
  const Line& ln = net.lines()[line_index];
  const int i = ln.from, j = ln.to;
  const double d = state.theta[i] - state.theta[j];
  const double vv = state.v[i] * state.v[j];
  const double gij = net.conductance()(i, j);
  const double bij = net.susceptance()(i, j);
  const double p = vv * (gij * std::cos(d) + bij * std::sin(d));
  const double q = vv * (gij * std::sin(d) - bij * std::cos(d));
  return {p, q};
}

LinearizedDeviation linearized_flow_deviation(
    const GridNetwork& net, const PowerFlowState& base,
    const Eigen::VectorXd& delta_theta) {
  const int n = net.bus_count();
  const int e = net.line_count();
  if (base.v.size() != n || base.theta.size() != n ||
      delta_theta.size() != n)
    throw config_error("dimension mismatch in linearized_flow_deviation");
  LinearizedDeviation out;
  out.line_delta = Eigen::VectorXd::Zero(e);
  out.bus_delta = Eigen::VectorXd::Zero(n);
  out.bus_mean = Eigen::VectorXd::Zero(n);
  const auto& b = net.susceptance();
  for (int k = 0; k < e; ++k) {
    const Line& ln = net.lines()[k];
    const int i = ln.from, j = ln.to;
    const double stiff = b(i, j) * base.v[i] * base.v[j] *
                         std::cos(base.theta[i] - base.theta[j]);
    out.line_delta[k] = stiff * (delta_theta[i] - delta_theta[j]);
    out.bus_delta[i] += out.line_delta[k];
    out.bus_delta[j] -= out.line_delta[k];  // reversed orientation at j
  }
  out.bus_fluct.resize(n);
  for (int i = 0; i < n; ++i) {
    const int c = net.connectivity()[i];
    out.bus_mean[i] = c > 0 ? out.bus_delta[i] / c : 0.0;
    out.bus_fluct[i].reserve(net.incident_lines(i).size());
    for (int k : net.incident_lines(i)) {
      const double directed =
          net.lines()[k].from == i ? out.line_delta[k] : -out.line_delta[k];
      out.bus_fluct[i].push_back(directed - out.bus_mean[i]);
    }
  }
  return out;
}

// --- JSON serialization ----------------------------------------------------

static BusKind kind_from_string(const std::string& s) {
  if (s == "slack") return BusKind::Slack;
  if (s == "generator") return BusKind::Generator;
  if (s == "load") return BusKind::Load;
  throw config_error("unknown bus kind '" + s + "'");
}

static const char* kind_to_string(BusKind k) {
  switch (k) {
    case BusKind::Slack: return "slack";
    case BusKind::Generator: return "generator";
    case BusKind::Load: return "load";
  }
  return "load";
}

GridNetwork GridNetwork::from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("network file is not valid JSON: ") +
                       e.what());
  }
  try {
    std::vector<Bus> buses;
    for (const auto& jb : j.at("buses")) {
      Bus b;
      b.id = jb.at("id").get<int>();
      b.kind = kind_from_string(jb.at("kind").get<std::string>());
      b.p_set = jb.value("p_set", 0.0);
      b.q_set = jb.value("q_set", 0.0);
      b.v_set = jb.value("v_set", 1.0);
      buses.push_back(b);
    }
    std::vector<Line> lines;
    for (const auto& jl : j.at("lines")) {
      Line l;
      l.from = jl.at("from").get<int>();
      l.to = jl.at("to").get<int>();
      l.g = jl.value("g", 0.0);
      l.b = jl.at("b").get<double>();
      l.thermal_limit = jl.value("thermal_limit", 0.0);
      lines.push_back(l);
    }
    const double base = j.value("base_mva", 100.0);
    return GridNetwork(std::move(buses), std::move(lines), base);
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("network file schema error: ") + e.what());
  }
}

GridNetwork GridNetwork::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open network file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str());
}

void GridNetwork::to_json_file(const std::string& path) const {
  nlohmann::json j;
  j["base_mva"] = base_mva_;
  j["buses"] = nlohmann::json::array();
  for (const auto& b : buses_) {
    j["buses"].push_back({{"id", b.id},
                          {"kind", kind_to_string(b.kind)},
                          {"p_set", b.p_set},
                          {"q_set", b.q_set},
                          {"v_set", b.v_set}});
  }
  j["lines"] = nlohmann::json::array();
  for (const auto& l : lines_) {
    nlohmann::json jl = {{"from", id_of_[l.from]},
                         {"to", id_of_[l.to]},
                         {"g", l.g},
                         {"b", l.b}};
    if (l.thermal_limit > 0.0) jl["thermal_limit"] = l.thermal_limit;
    j["lines"].push_back(jl);
  }
  std::ofstream out(path);
  if (!out) throw config_error("cannot write network file '" + path + "'");
  out << j.dump(2) << '\n';
}

}  // namespace gridinfer
