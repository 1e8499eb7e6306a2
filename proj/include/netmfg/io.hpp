#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "netmfg/coupling.hpp"
#include "netmfg/error.hpp"
#include "netmfg/grid.hpp"
#include "netmfg/hamiltonian.hpp"
#include "netmfg/mfg.hpp"
#include "netmfg/network.hpp"
#include "netmfg/simulate.hpp"

#ifndef NETMFG_VERSION
#define NETMFG_VERSION "0.0.0"
#endif

namespace netmfg {

using nlohmann::json;

// Everything a problem file can describe. Loads (linear.f, hjb.f, drift) are
// per-edge constants; missing sections take the defaults below.
struct ProblemSpec {
  std::vector<RawEdge> edges;
  RoutingTable routing;
  std::size_t num_vertices = 0;

  HamiltonianSpec hamiltonian;
  CouplingSpec coupling;
  double h_target = 1.0 / 64;

  double tol = 1e-10;
  double damping = 0.5;
  int max_iters = 500;
  double residual_tol = 1e-6;

  double linear_lambda = 1.0;
  std::vector<double> linear_f;  // solve-linear load
  std::vector<double> hjb_f;     // solve-hjb load
  std::vector<double> drift;     // solve-fp and simulate drift b = dH/dp

  SimConfig simulation;

  Network network() const { return build_network(std::span<const RawEdge>(edges), routing); }
  DiscreteNetwork discretize() const { return build_grids(network(), h_target); }

  MFGConfig mfg_config() const {
    MFGConfig c;
    c.tol = tol;
    c.damping = damping;
    c.max_iters = max_iters;
    c.residual_tol = residual_tol;
    return c;
  }

  friend bool operator==(const ProblemSpec& a, const ProblemSpec& b) {
    auto same_edges = [](const std::vector<RawEdge>& x, const std::vector<RawEdge>& y) {
      if (x.size() != y.size()) return false;
      for (std::size_t k = 0; k < x.size(); ++k)
        if (x[k].a != y[k].a || x[k].b != y[k].b || x[k].length != y[k].length || x[k].mu != y[k].mu) return false;
      return true;
    };
    const auto& ha = a.hamiltonian;
    const auto& hb = b.hamiltonian;
    const auto& ca = a.coupling;
    const auto& cb = b.coupling;
    const auto& sa = a.simulation;
    const auto& sb = b.simulation;
    return same_edges(a.edges, b.edges) && a.routing == b.routing && ha.kappa == hb.kappa && ha.q == hb.q &&
           ha.linear == hb.linear && ca.family == cb.family && ca.kappa == cb.kappa && ca.theta == cb.theta &&
           ca.epsilon == cb.epsilon && ca.shift == cb.shift && a.h_target == b.h_target && a.tol == b.tol &&
           a.damping == b.damping && a.max_iters == b.max_iters && a.residual_tol == b.residual_tol &&
           a.linear_lambda == b.linear_lambda && a.linear_f == b.linear_f && a.hjb_f == b.hjb_f && a.drift == b.drift &&
           sa.dt == sb.dt && sa.samples == sb.samples && sa.paths == sb.paths && sa.burn_in == sb.burn_in &&
           sa.bins == sb.bins && sa.seed == sb.seed;
  }
};

namespace detail {

inline std::string line_column(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t k = 0; k < byte && k < text.size(); ++k) {
    if (text[k] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ModelError(std::string("field '") + key + "' has the wrong type");
  }
}

inline std::vector<double> per_edge(const json& j, const char* key, std::size_t ne, double fallback) {
  if (!j.contains(key)) return std::vector<double>(ne, fallback);
  const auto& v = j.at(key);
  if (v.is_number()) return std::vector<double>(ne, v.get<double>());
  if (!v.is_array()) throw ModelError(std::string("field '") + key + "' must be a number or an array");
  auto out = get_or<std::vector<double>>(j, key, {});
  if (out.size() != ne) throw ModelError(std::string("field '") + key + "' needs one value per edge");
  return out;
}

inline CouplingFamily family_from(const std::string& s) {
  if (s == "power") return CouplingFamily::Power;
  if (s == "log") return CouplingFamily::Log;
  if (s == "bounded") return CouplingFamily::Bounded;
  throw ModelError("unknown coupling family '" + s + "'");
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

} // namespace detail

inline ProblemSpec problem_from_json(const json& j) {
  if (!j.is_object()) throw ModelError("problem file must contain a JSON object");
  ProblemSpec p;
  if (!j.contains("network")) throw ModelError("missing section 'network'");
  const auto& net = j.at("network");
  if (!net.contains("edges") || !net.at("edges").is_array()) throw ModelError("network needs an 'edges' array");
  std::size_t k = 0;
  for (const auto& e : net.at("edges")) {
    if (!e.contains("from") || !e.contains("to")) throw ModelError("edge " + std::to_string(k) + ": 'from' and 'to' are required");
    RawEdge r;
    r.a = detail::get_or<int>(e, "from", 0);
    r.b = detail::get_or<int>(e, "to", 0);
    r.length = detail::get_or<double>(e, "length", 1.0);
    r.mu = detail::get_or<double>(e, "mu", 1.0);
    if (!(r.length > 0.0)) throw ModelError("edge " + std::to_string(k) + ": length must be positive");
    p.edges.push_back(r);
    ++k;
  }
  if (net.contains("routing")) {
    if (!net.at("routing").is_object()) throw ModelError("'routing' must map vertex ids to weight arrays");
    for (const auto& [key, val] : net.at("routing").items()) {
      int v = 0;
      try {
        std::size_t used = 0;
        v = std::stoi(key, &used);
        if (used != key.size()) throw std::invalid_argument(key);
      } catch (const std::exception&) {
        throw ModelError("routing key '" + key + "' is not a vertex id");
      }
      try {
        p.routing[v] = val.get<std::vector<double>>();
      } catch (const json::exception&) {
        throw ModelError("vertex " + key + ": routing weights must be an array of numbers");
      }
    }
  }
  const std::size_t ne = p.edges.size();

  const json empty = json::object();
  const auto& h = j.contains("hamiltonian") ? j.at("hamiltonian") : empty;
  p.hamiltonian.kappa = detail::per_edge(h, "kappa", ne, 0.5);
  p.hamiltonian.q = detail::get_or<double>(h, "q", 2.0);
  if (h.contains("linear")) p.hamiltonian.linear = detail::per_edge(h, "linear", ne, 0.0);

  const auto& c = j.contains("coupling") ? j.at("coupling") : empty;
  p.coupling.family = detail::family_from(detail::get_or<std::string>(c, "family", "power"));
  p.coupling.kappa = detail::get_or<double>(c, "kappa", 1.0);
  p.coupling.theta = detail::get_or<double>(c, "theta", 1.0);
  p.coupling.epsilon = detail::get_or<double>(c, "epsilon", 1e-6);
  p.coupling.shift = detail::get_or<double>(c, "shift", 0.0);

  const auto& d = j.contains("discretization") ? j.at("discretization") : empty;
  p.h_target = detail::get_or<double>(d, "h_target", p.h_target);

  const auto& s = j.contains("solver") ? j.at("solver") : empty;
  p.tol = detail::get_or<double>(s, "tol", p.tol);
  p.damping = detail::get_or<double>(s, "damping", p.damping);
  p.max_iters = detail::get_or<int>(s, "max_iters", p.max_iters);
  p.residual_tol = detail::get_or<double>(s, "residual_tol", p.residual_tol);

  const auto& l = j.contains("linear") ? j.at("linear") : empty;
  p.linear_lambda = detail::get_or<double>(l, "lambda", p.linear_lambda);
  p.linear_f = detail::per_edge(l, "f", ne, 1.0);
  const auto& hj = j.contains("hjb") ? j.at("hjb") : empty;
  p.hjb_f = detail::per_edge(hj, "f", ne, 0.0);
  p.drift = detail::per_edge(j, "drift", ne, 0.0);

  const auto& sim = j.contains("simulation") ? j.at("simulation") : empty;
  p.simulation.dt = detail::get_or<double>(sim, "dt", p.simulation.dt);
  p.simulation.samples = detail::get_or<double>(sim, "samples", p.simulation.samples);
  p.simulation.paths = detail::get_or<int>(sim, "paths", p.simulation.paths);
  p.simulation.burn_in = detail::get_or<double>(sim, "burn_in", p.simulation.burn_in);
  p.simulation.bins = detail::get_or<int>(sim, "bins", p.simulation.bins);
  p.simulation.seed = detail::get_or<std::uint64_t>(sim, "seed", p.simulation.seed);

  // semantic checks; build_network validates the graph and routing
  const Network built = p.network();
  p.num_vertices = built.num_vertices();
  p.hamiltonian.validate(ne);
  p.coupling.validate();
  if (!(p.h_target > 0.0)) throw ModelError("h_target must be positive");
  if (!(p.linear_lambda > 0.0)) throw ModelError("linear lambda must be positive");
  p.mfg_config().validate();
  p.simulation.validate();
  return p;
}

// Parses a problem file. Syntax errors carry the line and column.
inline ProblemSpec parse_problem(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t at = e.byte > 0 ? e.byte - 1 : 0;
    std::string what = e.what();
    const auto colon = what.find("syntax error");
    throw ModelError(detail::line_column(text, at) + ": " + (colon == std::string::npos ? what : what.substr(colon)));
  }
  return problem_from_json(j);
}

inline ProblemSpec load_problem(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot open problem file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_problem(ss.str());
  } catch (const ModelError& e) {
    throw ModelError(path.string() + ": " + e.what());
  }
}

inline json to_json(const ProblemSpec& p) {
  json edges = json::array();
  for (const auto& e : p.edges) edges.push_back({{"from", e.a}, {"to", e.b}, {"length", e.length}, {"mu", e.mu}});
  json routing = json::object();
  for (const auto& [v, w] : p.routing) routing[std::to_string(v)] = w;
  json h = {{"kappa", p.hamiltonian.kappa}, {"q", p.hamiltonian.q}};
  if (!p.hamiltonian.linear.empty()) h["linear"] = p.hamiltonian.linear;
  return {
      {"network", {{"edges", edges}, {"routing", routing}}},
      {"hamiltonian", h},
      {"coupling",
       {{"family", to_string(p.coupling.family)},
        {"kappa", p.coupling.kappa},
        {"theta", p.coupling.theta},
        {"epsilon", p.coupling.epsilon},
        {"shift", p.coupling.shift}}},
      {"discretization", {{"h_target", p.h_target}}},
      {"solver", {{"tol", p.tol}, {"damping", p.damping}, {"max_iters", p.max_iters}, {"residual_tol", p.residual_tol}}},
      {"linear", {{"lambda", p.linear_lambda}, {"f", p.linear_f}}},
      {"hjb", {{"f", p.hjb_f}}},
      {"drift", p.drift},
      {"simulation",
       {{"dt", p.simulation.dt},
        {"samples", p.simulation.samples},
        {"paths", p.simulation.paths},
        {"burn_in", p.simulation.burn_in},
        {"bins", p.simulation.bins},
        {"seed", p.simulation.seed}}},
  };
}

inline std::string config_hash(const ProblemSpec& p) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << detail::fnv1a(to_json(p).dump());
  return os.str();
}

inline json to_json(const ResidualReport& r) {
  return {{"hjb_interior", r.hjb_interior}, {"hjb_vertex", r.hjb_vertex}, {"fp_interior", r.fp_interior},
          {"fp_vertex", r.fp_vertex},       {"kirchhoff", r.kirchhoff},   {"fp_flux", r.fp_flux},
          {"v_continuity", r.v_continuity}, {"m_jump", r.m_jump},         {"v_mean", r.v_mean},
          {"mass", r.mass},                 {"min_m", r.min_m},           {"duality_gap", r.duality_gap}};
}

inline ResidualReport residuals_from_json(const json& j) {
  ResidualReport r;
  r.hjb_interior = j.at("hjb_interior").get<double>();
  r.hjb_vertex = j.at("hjb_vertex").get<double>();
  r.fp_interior = j.at("fp_interior").get<double>();
  r.fp_vertex = j.at("fp_vertex").get<double>();
  r.kirchhoff = j.at("kirchhoff").get<double>();
  r.fp_flux = j.at("fp_flux").get<double>();
  r.v_continuity = j.at("v_continuity").get<double>();
  r.m_jump = j.at("m_jump").get<double>();
  r.v_mean = j.at("v_mean").get<double>();
  r.mass = j.at("mass").get<double>();
  r.min_m = j.at("min_m").get<double>();
  r.duality_gap = j.at("duality_gap").get<double>();
  return r;
}

// What a solve produced; absent pieces are written as nan.
struct SolutionView {
  std::string kind;  // linear, fp, hjb, mfg
  const GridFunction* v = nullptr;
  const GridFunction* m = nullptr;
  const Policy* policy = nullptr;
  double rho = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
  bool converged = true;
  json extra = json::object();  // residual report and anything else
};

inline SolutionView view_of(const MFGSolution& s) {
  SolutionView out{"mfg", &s.v, &s.m, &s.policy, s.rho, s.iterations, s.converged, json::object()};
  out.extra["residuals"] = to_json(s.residuals);
  out.extra["coupling_truncation"] = s.coupling_truncation;
  return out;
}

// Writes solution.csv, summary.json and plot.dat into dir.
inline void write_solution(const std::filesystem::path& dir, const DiscreteNetwork& disc, const ProblemSpec& spec,
                           const SolutionView& sol) {
  std::filesystem::create_directories(dir);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  auto value = [&](const GridFunction* g, EdgeId a, int k) { return g ? g->at(a, k) : nan; };

  std::ofstream csv(dir / "solution.csv");
  std::ofstream plot(dir / "plot.dat");
  if (!csv || !plot) throw std::runtime_error("cannot write to " + dir.string());
  csv << std::setprecision(17);
  plot << std::setprecision(10);
  csv << "edge,node,arclength,v,dv,m,feedback\n";
  for (std::size_t ua = 0; ua < disc.num_edges(); ++ua) {
    const auto a = static_cast<EdgeId>(ua);
    plot << "# edge " << a << " (" << disc.network().edge(a).tail << " -> " << disc.network().edge(a).head
         << ")\n# arclength v m\n";
    for (int k = 0; k <= disc.intervals(a); ++k) {
      const double y = disc.node_position(a, k);
      const double dv = sol.policy ? sol.policy->gradient(a, k) : nan;
      const double fb = sol.policy ? -sol.policy->drift(a, k) : nan;
      csv << a << ',' << k << ',' << y << ',' << value(sol.v, a, k) << ',' << dv << ',' << value(sol.m, a, k) << ','
          << fb << '\n';
      plot << y << ' ' << value(sol.v, a, k) << ' ' << value(sol.m, a, k) << '\n';
    }
    plot << "\n\n";
  }

  json summary = sol.extra;
  summary["kind"] = sol.kind;
  summary["rho"] = std::isnan(sol.rho) ? json(nullptr) : json(sol.rho);
  summary["iterations"] = sol.iterations;
  summary["converged"] = sol.converged;
  summary["config_hash"] = config_hash(spec);
  summary["version"] = NETMFG_VERSION;
  summary["seed"] = spec.simulation.seed;
  summary["grid"] = {{"dofs", disc.size()}};
  summary["problem"] = to_json(spec);
  std::ofstream js(dir / "summary.json");
  if (!js) throw std::runtime_error("cannot write to " + dir.string());
  js << std::setw(2) << summary << '\n';
}

// A solution read back from disk, on its own copy of the grid.
struct LoadedSolution {
  ProblemSpec spec;
  std::unique_ptr<DiscreteNetwork> disc;
  json summary;
  std::optional<GridFunction> v;
  std::optional<GridFunction> m;
  EdgeField feedback;  // zero where not recorded
  double rho = std::numeric_limits<double>::quiet_NaN();
};

// Accepts the output directory or the path of its solution.csv.
inline LoadedSolution load_solution(const std::filesystem::path& where) {
  const auto dir = std::filesystem::is_directory(where) ? where : where.parent_path();
  LoadedSolution out;
  {
    std::ifstream in(dir / "summary.json");
    if (!in) throw ModelError("cannot open " + (dir / "summary.json").string());
    try {
      in >> out.summary;
    } catch (const json::exception& e) {
      throw ModelError((dir / "summary.json").string() + ": " + e.what());
    }
  }
  out.spec = problem_from_json(out.summary.at("problem"));
  out.disc = std::make_unique<DiscreteNetwork>(out.spec.discretize());
  const auto& disc = *out.disc;
  if (out.summary.contains("grid") && out.summary["grid"].value("dofs", disc.size()) != disc.size()) {
    throw ModelError("solution grid does not match its problem description");
  }
  if (out.summary.contains("rho") && out.summary["rho"].is_number()) out.rho = out.summary["rho"].get<double>();

  std::ifstream csv(dir / "solution.csv");
  if (!csv) throw ModelError("cannot open " + (dir / "solution.csv").string());
  std::string line;
  std::getline(csv, line);
  if (line != "edge,node,arclength,v,dv,m,feedback") throw ModelError("solution.csv: unexpected header");
  GridFunction v(disc, Convention::V), m(disc, Convention::W);
  out.feedback = EdgeField(disc);
  bool have_v = false, have_m = false;
  std::size_t row = 1;
  while (std::getline(csv, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 7) throw ModelError("solution.csv line " + std::to_string(row) + ": expected 7 columns");
    const int a = std::stoi(cells[0]);
    const int k = std::stoi(cells[1]);
    if (a < 0 || static_cast<std::size_t>(a) >= disc.num_edges() || k < 0 || k > disc.intervals(a)) {
      throw ModelError("solution.csv line " + std::to_string(row) + ": node outside the grid");
    }
    const double vv = std::strtod(cells[3].c_str(), nullptr);
    const double mm = std::strtod(cells[5].c_str(), nullptr);
    const double fb = std::strtod(cells[6].c_str(), nullptr);
    const std::size_t j = disc.dof(a, k);
    if (!std::isnan(vv)) {
      v[j] = vv;
      have_v = true;
    }
    if (!std::isnan(mm)) {
      m[j] = mm / disc.side_scale(Convention::W, a, k);
      have_m = true;
    }
    out.feedback(a, k) = std::isnan(fb) ? 0.0 : fb;
  }
  if (have_v) out.v = v;
  if (have_m) out.m = m;
  return out;
}

} // namespace netmfg
