#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "netmfg/coupling.hpp"
#include "netmfg/error.hpp"
#include "netmfg/grid.hpp"
#include "netmfg/hamiltonian.hpp"
#include "netmfg/operators.hpp"
#include "netmfg/solvers.hpp"

namespace netmfg {

enum class InitialDensity { Uniform, Concentrated, Custom };

struct MFGConfig {
  double damping = 0.5;
  double tol = 1e-10;           // on sup |m_{k+1} - m_k|
  int max_iters = 500;
  double residual_tol = 1e-6;   // discrete residuals required at acceptance
  double hjb_tol = 1e-12;
  InitialDensity init = InitialDensity::Uniform;
  EdgeId concentrated_edge = 0;
  std::optional<GridFunction> initial_m;

  void validate() const {
    if (!(damping > 0.0 && damping <= 1.0)) throw ModelError("damping must lie in (0,1]");
    if (!(tol > 0.0)) throw ModelError("tolerance must be positive");
    if (max_iters < 1) throw ModelError("max_iters must be at least 1");
    if (!(residual_tol > 0.0)) throw ModelError("residual tolerance must be positive");
  }
};

struct ResidualReport {
  double hjb_interior = 0.0;  // discrete HJB rows, interior nodes
  double hjb_vertex = 0.0;    // discrete HJB rows, vertices
  double fp_interior = 0.0;   // discrete FP rows (A* m), interior nodes
  double fp_vertex = 0.0;     // discrete FP rows, vertices
  double kirchhoff = 0.0;     // sum gamma mu d_a v at vertices, O(h^2) one-sided stencil
  double fp_flux = 0.0;       // sum [mu d_a m + n b m] at vertices, same stencil
  double v_continuity = 0.0;  // structural
  double m_jump = 0.0;        // spread of side value / gamma at vertices
  double v_mean = 0.0;        // |integral v|
  double mass = 0.0;          // |integral m - 1|
  double min_m = 0.0;
  double duality_gap = 0.0;   // rho - int F(m) m - int (b p - H) m

  double hjb() const { return std::max(hjb_interior, hjb_vertex); }
  double fp() const { return std::max(fp_interior, fp_vertex); }

  bool passes(double tol) const {
    return hjb() <= tol && fp() <= tol && v_mean <= tol && mass <= tol && min_m > 0.0;
  }
};

struct IterationRecord {
  int iteration = 0;
  double m_change = 0.0;
  double rho = 0.0;
  double coupling_truncation = 0.0;
  double hamiltonian_truncation = 0.0;
  int hjb_iterations = 0;
};

struct MFGSolution {
  GridFunction v;
  GridFunction m;
  double rho = 0.0;
  Policy policy;  // upwind policy of v; policy.drift is the FP drift of m
  ResidualReport residuals;
  std::vector<IterationRecord> history;
  bool converged = false;
  int iterations = 0;
  double coupling_truncation = 0.0;

  // feedback a* = -dH/dp(x, v'), per node and side
  EdgeField feedback() const {
    EdgeField a = policy.drift;
    for (auto& row : a.values)
      for (double& x : row) x = -x;
    return a;
  }
};

// F(m) sampled at every node, side values at vertices.
inline EdgeField coupling_load(const CouplingSpec& F, const GridFunction& m) {
  EdgeField f = m.edge_field();
  for (auto& row : f.values)
    for (double& x : row) x = F(x);
  return f;
}

inline GridFunction initial_density(const DiscreteNetwork& disc, const MFGConfig& cfg) {
  const auto& net = disc.network();
  GridFunction m(disc, Convention::W);
  if (cfg.init == InitialDensity::Custom) {
    if (!cfg.initial_m) throw ModelError("custom initial density missing");
    if (cfg.initial_m->convention() != Convention::W || cfg.initial_m->values().size() != m.values().size()) {
      throw ModelError("initial density must be W-type on the same grid");
    }
    if (cfg.initial_m->values().minCoeff() < 0.0) throw ModelError("initial density must be nonnegative");
    m.values() = cfg.initial_m->values();
  } else {
    // side values 1 in the uniform case: s_i = deg_i / sum_a gamma_ia
    for (const auto& v : net.vertices()) {
      double g = 0.0;
      for (double x : net.gamma_row(v.id)) g += x;
      m[static_cast<std::size_t>(v.id)] = static_cast<double>(v.incident_edges.size()) / g;
    }
    for (std::size_t ua = 0; ua < disc.num_edges(); ++ua) {
      const auto a = static_cast<EdgeId>(ua);
      double level = 1.0;
      if (cfg.init == InitialDensity::Concentrated) level = a == cfg.concentrated_edge ? 10.0 : 0.1;
      for (int k = 1; k < disc.intervals(a); ++k) m[disc.dof(a, k)] = level;
    }
  }
  const double mass = integrate(m);
  if (!(mass > 0.0)) throw ModelError("initial density has zero mass");
  m.values() /= mass;
  return m;
}

namespace detail {

// Outward one-sided derivative at the endpoint of edge a at vertex i, second
// order, from the side values of an EdgeField.
inline double outward_derivative(const DiscreteNetwork& disc, const EdgeField& f, EdgeId a, bool at_tail) {
  const int n = disc.intervals(a);
  const double h = disc.step(a);
  const int k0 = at_tail ? 0 : n, k1 = at_tail ? 1 : n - 1, k2 = at_tail ? 2 : n - 2;
  return (1.5 * f(a, k0) - 2.0 * f(a, k1) + 0.5 * f(a, k2)) / h;
}

inline double trapezoid_product(const DiscreteNetwork& disc, const EdgeField& f, const EdgeField& g) {
  EdgeField p = f;
  for (std::size_t a = 0; a < p.values.size(); ++a)
    for (std::size_t k = 0; k < p.values[a].size(); ++k) p.values[a][k] *= g.values[a][k];
  return integrate(disc, p);
}

} // namespace detail

inline ResidualReport residuals(const DiscreteNetwork& disc, const HamiltonianSpec& H, const CouplingSpec& F,
                                const MFGSolution& sol) {
  const auto& net = disc.network();
  const std::size_t nv = net.num_vertices();
  ResidualReport r;
  const EdgeField f = coupling_load(F, sol.m);

  const Eigen::VectorXd hr = hjb_rows(disc, H, sol.v, 0.0, sol.rho, f);
  const Policy pol = compute_policy(disc, H, sol.v);
  const auto A = assemble_generator(disc, pol.drift, 0.0, Scheme::Upwind);
  const Eigen::VectorXd fr = adjoint_fp(disc, A).apply(sol.m);
  for (Eigen::Index j = 0; j < hr.size(); ++j) {
    const bool vertex = static_cast<std::size_t>(j) < nv;
    double& hslot = vertex ? r.hjb_vertex : r.hjb_interior;
    double& fslot = vertex ? r.fp_vertex : r.fp_interior;
    hslot = std::max(hslot, std::abs(hr[j]));
    fslot = std::max(fslot, std::abs(fr[j]));
  }

  const EdgeField vf = sol.v.edge_field();
  const EdgeField mf = sol.m.edge_field();
  for (const auto& vx : net.vertices()) {
    double kir = 0.0, flux = 0.0;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (EdgeId a : vx.incident_edges) {
      const auto& e = net.edge(a);
      const bool at_tail = e.tail == vx.id;
      const int k0 = at_tail ? 0 : disc.intervals(a);
      const double g = net.gamma(vx.id, a);
      kir += g * e.mu * detail::outward_derivative(disc, vf, a, at_tail);
      const double n_sign = at_tail ? -1.0 : 1.0;
      flux += e.mu * detail::outward_derivative(disc, mf, a, at_tail) + n_sign * pol.drift(a, k0) * mf(a, k0);
      const double ratio = mf(a, k0) / g;
      lo = std::min(lo, ratio);
      hi = std::max(hi, ratio);
    }
    r.kirchhoff = std::max(r.kirchhoff, std::abs(kir));
    r.fp_flux = std::max(r.fp_flux, std::abs(flux));
    r.m_jump = std::max(r.m_jump, hi - lo);
  }
  r.v_continuity = 0.0;
  r.v_mean = std::abs(integrate(sol.v));
  r.mass = std::abs(integrate(sol.m) - 1.0);
  r.min_m = sol.m.values().minCoeff();

  EdgeField lag(disc);
  for (std::size_t a = 0; a < lag.values.size(); ++a)
    for (std::size_t k = 0; k < lag.values[a].size(); ++k)
      lag.values[a][k] = f.values[a][k] + pol.drift.values[a][k] * pol.gradient.values[a][k] - pol.hamiltonian.values[a][k];
  r.duality_gap = std::abs(sol.rho - detail::trapezoid_product(disc, lag, mf));
  return r;
}

// Damped fixed point m -> FP(drift of HJB(F(m))). The coupling is truncated
// at a level doubled whenever max m reaches half of it.
inline MFGSolution solve_mfg(const DiscreteNetwork& disc, const HamiltonianSpec& H, const CouplingSpec& F,
                             const MFGConfig& cfg = {}) {
  cfg.validate();
  H.validate(disc.num_edges());
  F.validate();
  GridFunction m = initial_density(disc, cfg);
  double level = 10.0;
  std::optional<GridFunction> v_prev;

  MFGSolution best{GridFunction(disc, Convention::V), m, 0.0, {}, {}, {}, false, 0, level};
  for (int it = 1; it <= cfg.max_iters; ++it) {
    while (m.values().maxCoeff() * 2.0 > level) level *= 2.0;
    const CouplingSpec Fn = truncate_coupling(F, level);

    ErgodicOptions eo;
    eo.tol = cfg.hjb_tol;
    eo.initial = v_prev;
    const ErgodicSolution erg = solve_hjb_ergodic(disc, H, coupling_load(Fn, m), eo);
    const GridFunction mhat = solve_stationary_fp(disc, erg.policy.drift);
    const double change = cfg.damping * detail::sup(mhat.values() - m.values());

    best.v = erg.v;
    best.m = mhat;
    best.rho = erg.rho;
    best.policy = erg.policy;
    best.iterations = it;
    best.coupling_truncation = level;
    best.history.push_back({it, change, erg.rho, level, erg.truncation, erg.iterations});

    if (change <= cfg.tol && mhat.values().maxCoeff() < level) {
      best.residuals = residuals(disc, H, F, best);
      if (best.residuals.passes(cfg.residual_tol)) {
        best.converged = true;
        return best;
      }
    }
    m.values() = (1.0 - cfg.damping) * m.values() + cfg.damping * mhat.values();
    v_prev = erg.v;
  }
  best.residuals = residuals(disc, H, F, best);
  best.converged = false;
  return best;
}

// int (mA - mB)(F(mA) - F(mB)) plus the two Bregman terms of H. Nonnegative
// for convex H and monotone F; zero when the pair coincides.
inline double monotonicity_gap(const DiscreteNetwork& disc, const HamiltonianSpec& H, const CouplingSpec& F,
                               const MFGSolution& A, const MFGSolution& B) {
  if (&A.m.disc() != &disc || &B.m.disc() != &disc || &A.v.disc() != &disc || &B.v.disc() != &disc) {
    throw ModelError("solutions live on different grids");
  }
  const Policy pa = compute_policy(disc, H, A.v);
  const Policy pb = compute_policy(disc, H, B.v);
  const EdgeField ma = A.m.edge_field(), mb = B.m.edge_field();
  EdgeField g(disc);
  for (std::size_t ua = 0; ua < disc.num_edges(); ++ua) {
    const auto a = static_cast<EdgeId>(ua);
    for (int k = 0; k <= disc.intervals(a); ++k) {
      const double xa = ma(a, k), xb = mb(a, k);
      const double p1 = pa.gradient(a, k), p2 = pb.gradient(a, k);
      const double coupling = (xa - xb) * (F(xa) - F(xb));
      const double breg_a = xa * (H.value(a, p2) - H.value(a, p1) - pa.drift(a, k) * (p2 - p1));
      const double breg_b = xb * (H.value(a, p1) - H.value(a, p2) - pb.drift(a, k) * (p1 - p2));
      g(a, k) = coupling + breg_a + breg_b;
    }
  }
  return integrate(disc, g);
}

} // namespace netmfg
