#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "netmfg/io.hpp"
#include "netmfg/mfg.hpp"
#include "netmfg/operators.hpp"
#include "netmfg/solvers.hpp"

namespace netmfg {

struct Check {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::string note;
};

struct ValidationReport {
  std::vector<Check> checks;
  bool all_pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
  }
};

namespace detail {

inline DriftField random_drift(const DiscreteNetwork& disc, std::mt19937_64& rng, double bound) {
  std::uniform_real_distribution<double> u(-bound, bound);
  DriftField b(disc);
  for (auto& row : b.values)
    for (double& x : row) x = u(rng);
  return b;
}

inline double row_scale(const SparseOperator& op) {
  double s = 0.0;
  for (Eigen::Index r = 0; r < op.matrix.outerSize(); ++r) {
    double row = 0.0;
    for (SparseMatrix::InnerIterator it(op.matrix, r); it; ++it) row += std::abs(it.value());
    s = std::max(s, row);
  }
  return s;
}

inline double sup_error(const GridFunction& u, const std::function<double(EdgeId, double)>& exact) {
  const auto& disc = u.disc();
  double e = 0.0;
  for (std::size_t ua = 0; ua < disc.num_edges(); ++ua) {
    const auto a = static_cast<EdgeId>(ua);
    for (int k = 0; k <= disc.intervals(a); ++k) e = std::max(e, std::abs(u.at(a, k) - exact(a, disc.node_position(a, k))));
  }
  return e;
}

// A constant load has a constant (exactly resolved) solution and tests
// nothing, so it is replaced by one that differs between edges.
inline std::vector<double> informative_load(const std::vector<double>& f) {
  if (std::adjacent_find(f.begin(), f.end(), std::not_equal_to<>()) != f.end()) return f;
  std::vector<double> g(f.size());
  for (std::size_t a = 0; a < g.size(); ++a) g[a] = a == 0 ? 1.0 : 0.5 * static_cast<double>(a % 3);
  return g;
}

} // namespace detail

// Property checks on the network and data of one problem. Each check is
// independent; exceptions inside a check turn into a failed row.
inline ValidationReport validate_problem(const ProblemSpec& spec, std::uint64_t seed = 7) {
  ValidationReport rep;
  const Network net = spec.network();
  const DiscreteNetwork disc = spec.discretize();
  const std::size_t ne = net.num_edges();
  std::mt19937_64 rng(seed);

  auto run = [&](const std::string& name, double tol, const std::function<double(Check&)>& body,
                 std::function<bool(double, double)> ok = {}) {
    Check c{name, 0.0, tol, false, {}};
    try {
      c.value = body(c);
      c.pass = ok ? ok(c.value, tol) : (std::isfinite(c.value) && c.value <= tol);
    } catch (const std::exception& e) {
      c.note = e.what();
      c.pass = false;
    }
    rep.checks.push_back(std::move(c));
  };
  auto at_least = [](double v, double t) { return v >= t; };

  run("generator kernel |A1| / |A|", 1e-13, [&](Check&) {
    double worst = 0.0;
    for (int t = 0; t < 10; ++t) {
      const auto b = detail::random_drift(disc, rng, 3.0);
      for (Scheme s : {Scheme::Upwind, Scheme::Centered}) {
        const auto A = assemble_generator(disc, b, 0.0, s);
        worst = std::max(worst, detail::sup(A.apply(constant(disc, Convention::V, 1.0))) / detail::row_scale(A));
      }
    }
    return worst;
  });

  run("duality <Av,m> - <v,A*m>, relative to |A|", 1e-12, [&](Check&) {
    std::normal_distribution<double> g;
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
      const auto A = assemble_generator(disc, detail::random_drift(disc, rng, 2.0), 0.0);
      const auto As = adjoint_fp(disc, A);
      GridFunction v(disc, Convention::V), m(disc, Convention::W);
      for (std::size_t j = 0; j < disc.size(); ++j) {
        v[j] = g(rng);
        m[j] = g(rng);
      }
      const GridFunction Av(disc, Convention::V, A.apply(v));
      const GridFunction Asm(disc, Convention::W, As.apply(m));
      // roundoff in <Av,m> grows with |A| ~ mu / h^2
      const double scale = norm(v, NormKind::L2) * norm(m, NormKind::L2) * std::max(1.0, detail::row_scale(A));
      worst = std::max(worst, std::abs(pair(Av, m) - pair(v, Asm)) / scale);
    }
    return worst;
  });

  run("fp zero drift: jump law", 1e-12, [&](Check& c) {
    const auto m = solve_stationary_fp(disc, DriftField(disc));
    double worst = 0.0;
    for (const auto& vx : net.vertices()) {
      std::vector<double> ratio;
      for (EdgeId a : vx.incident_edges) {
        const int k = net.edge(a).tail == vx.id ? 0 : disc.intervals(a);
        ratio.push_back(m.at(a, k) / net.gamma(vx.id, a));
      }
      const auto [lo, hi] = std::minmax_element(ratio.begin(), ratio.end());
      worst = std::max(worst, (*hi - *lo) / *hi);
    }
    c.note = "min m " + detail::fmt_double(m.values().minCoeff());
    if (!(m.values().minCoeff() > 0.0)) return std::numeric_limits<double>::infinity();
    return worst;
  });

  run("fp random drift: min m > 0, |int m - 1|", 1e-12, [&](Check& c) {
    double mass_err = 0.0, min_m = std::numeric_limits<double>::infinity();
    for (int t = 0; t < 5; ++t) {
      const auto m = solve_stationary_fp(disc, detail::random_drift(disc, rng, 3.0));
      mass_err = std::max(mass_err, std::abs(integrate(m) - 1.0));
      min_m = std::min(min_m, m.values().minCoeff());
    }
    c.note = "min m " + detail::fmt_double(min_m);
    return min_m > 0.0 ? mass_err : std::numeric_limits<double>::infinity();
  });

  const std::vector<double> lin_f = detail::informative_load(spec.linear_f);
  run("linear oracle: observed order", 1.9, [&](Check& c) {
    const auto oracle = analytic_linear_oracle(net, spec.linear_lambda, lin_f);
    std::vector<double> errs;
    for (double h : {1.0 / 32, 1.0 / 64, 1.0 / 128}) {
      const auto d = build_grids(net, h);
      const auto u = solve_linear_kirchhoff(d, spec.linear_lambda, per_edge_constant(d, lin_f));
      errs.push_back(detail::sup_error(u, [&](EdgeId a, double y) { return oracle(a, y); }));
    }
    c.note = "errors " + detail::fmt_double(errs[0]) + " " + detail::fmt_double(errs[1]) + " " + detail::fmt_double(errs[2]);
    // on a single edge a constant load gives a constant solution
    if (errs[0] < 1e-11) {
      c.note += ", solution resolved exactly";
      return c.tolerance;
    }
    return std::min(std::log2(errs[0] / errs[1]), std::log2(errs[1] / errs[2]));
  }, at_least);

  const std::vector<double> hjb_f = detail::informative_load(spec.hjb_f);
  run("ergodic |rho| - max|H(x,0) - f|", 1e-8, [&](Check& c) {
    const auto f = per_edge_constant(disc, hjb_f);
    const auto sol = solve_hjb_ergodic(disc, spec.hamiltonian, f);
    c.note = "rho " + detail::fmt_double(sol.rho);
    return std::abs(sol.rho) - sol.rho_bound;
  });

  run("vanishing discount |lambda mean(v) - rho|", 1e-3, [&](Check& c) {
    const auto f = per_edge_constant(disc, hjb_f);
    const auto sol = solve_hjb_ergodic(disc, spec.hamiltonian, f);
    const auto vd = ergodic_by_vanishing_discount(disc, spec.hamiltonian, f);
    c.note = "lambda = 1e-4";
    return std::abs(vd.estimates.back() - sol.rho);
  });

  std::optional<MFGSolution> first;
  run("mfg duality identity", 1e-4, [&](Check& c) {
    first = solve_mfg(disc, spec.hamiltonian, spec.coupling, spec.mfg_config());
    c.note = "rho " + detail::fmt_double(first->rho) + ", " + std::to_string(first->iterations) + " iterations";
    if (!first->converged) {
      c.note += ", not converged";
      return std::numeric_limits<double>::infinity();
    }
    return first->residuals.duality_gap;
  });

  run("mfg uniqueness sup|m1 - m2|", 1e-5, [&](Check& c) {
    if (!first || !first->converged) throw SolverError("no converged reference solution", 0.0);
    auto cfg = spec.mfg_config();
    cfg.init = InitialDensity::Concentrated;
    cfg.concentrated_edge = static_cast<EdgeId>(ne - 1);
    const auto second = solve_mfg(disc, spec.hamiltonian, spec.coupling, cfg);
    if (!second.converged) throw SolverError("second run did not converge", 0.0);
    const double dv = detail::sup(first->v.values() - second.v.values());
    const double dm = detail::sup(first->m.values() - second.m.values());
    const double gap = monotonicity_gap(disc, spec.hamiltonian, spec.coupling, *first, second);
    c.note = "sup|v1 - v2| " + detail::fmt_double(dv) + ", |rho1 - rho2| " + detail::fmt_double(std::abs(first->rho - second.rho)) +
             ", gap " + detail::fmt_double(gap);
    if (dv > 1e-5 || std::abs(first->rho - second.rho) > 1e-6 || gap < -1e-9) return std::numeric_limits<double>::infinity();
    return dm;
  });

  return rep;
}

} // namespace netmfg
