#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseLU>

#include "netmfg/error.hpp"
#include "netmfg/grid.hpp"
#include "netmfg/hamiltonian.hpp"
#include "netmfg/operators.hpp"

namespace netmfg {

namespace detail {

using ColMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor>;

inline Eigen::VectorXd sparse_solve(const ColMatrix& m, const Eigen::VectorXd& rhs, const char* what) {
  Eigen::SparseLU<ColMatrix, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(m);
  if (lu.info() != Eigen::Success) throw SolverError(std::string(what) + ": singular system");
  Eigen::VectorXd x = lu.solve(rhs);
  if (lu.info() != Eigen::Success || !x.allFinite()) throw SolverError(std::string(what) + ": solve failed");
  return x;
}

// LU solve followed by a few steps of iterative refinement, for fine grids
// where roundoff in a single solve exceeds the residual target.
inline Eigen::VectorXd refined_solve(const ColMatrix& m, const Eigen::VectorXd& rhs, double rel_tol, const char* what) {
  Eigen::SparseLU<ColMatrix, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(m);
  if (lu.info() != Eigen::Success) throw SolverError(std::string(what) + ": singular system");
  Eigen::VectorXd x = lu.solve(rhs);
  for (int step = 0; step < 5; ++step) {
    const Eigen::VectorXd r = rhs - m * x;
    if (r.norm() <= rel_tol * rhs.norm()) break;
    x += lu.solve(r);
  }
  if (!x.allFinite()) throw SolverError(std::string(what) + ": solve failed");
  return x;
}

inline double sup(const Eigen::VectorXd& x) { return x.size() == 0 ? 0.0 : x.cwiseAbs().maxCoeff(); }

} // namespace detail

// Right-hand side for the rows of assemble_generator: interior rows take the
// nodal value, vertex rows the gamma h / 2 weighted mean of the side values.
inline Eigen::VectorXd load_vector(const DiscreteNetwork& disc, const EdgeField& f) {
  if (!f.matches(disc)) throw ModelError("load does not match the grid");
  const auto& net = disc.network();
  const auto& w = disc.weights(Convention::W);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(disc.size()));
  for (std::size_t ua = 0; ua < disc.num_edges(); ++ua) {
    const auto a = static_cast<EdgeId>(ua);
    const int n = disc.intervals(a);
    for (int k = 1; k < n; ++k) out[static_cast<Eigen::Index>(disc.dof(a, k))] = f(a, k);
    const auto& e = net.edge(a);
    const double half = 0.5 * disc.step(a);
    out[e.tail] += net.gamma(e.tail, a) * half * f(a, 0) / w[static_cast<std::size_t>(e.tail)];
    out[e.head] += net.gamma(e.head, a) * half * f(a, n) / w[static_cast<std::size_t>(e.head)];
  }
  return out;
}

// Weighted L2 size of a residual vector.
inline double residual_l2(const DiscreteNetwork& disc, const Eigen::VectorXd& r) {
  const auto& w = disc.weights(Convention::W);
  double s = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) s += w[j] * r[static_cast<Eigen::Index>(j)] * r[static_cast<Eigen::Index>(j)];
  return std::sqrt(s);
}

// -mu v'' + lambda v = f with Kirchhoff vertex conditions, lambda > 0.
inline GridFunction solve_linear_kirchhoff(const DiscreteNetwork& disc, double lambda, const EdgeField& f,
                                           Scheme scheme = Scheme::Centered) {
  if (!(lambda > 0.0)) throw ModelError("lambda must be positive");
  const DriftField zero(disc);
  const auto A = assemble_generator(disc, zero, lambda, scheme);
  const Eigen::VectorXd rhs = load_vector(disc, f);
  Eigen::VectorXd x = detail::refined_solve(A.matrix, rhs, 1e-12, "solve_linear_kirchhoff");
  const double res = residual_l2(disc, A.matrix * x - rhs);
  // On very fine grids the attainable residual is bounded below by roundoff
  // in A x itself, about eps |A| |x|.
  const double floor = 64.0 * std::numeric_limits<double>::epsilon() *
                       residual_l2(disc, A.matrix.cwiseAbs() * x.cwiseAbs());
  if (res > std::max(1e-10 * residual_l2(disc, rhs), floor) && res > 1e-14) {
    throw SolverError("solve_linear_kirchhoff: residual too large", res);
  }
  return GridFunction(disc, Convention::V, std::move(x));
}

// Closed-form solution of -mu v'' + lambda v = f_a (f constant per edge)
// with continuity and Kirchhoff conditions. On edge a
//   v(y) = f_a/lambda + zeta cosh(k y) + xi sinh(k y),  k = sqrt(lambda/mu_a),
// and the vertex values solve the dense system obtained by writing the
// Kirchhoff conditions in terms of the endpoint values.
class LinearOracle {
public:
  LinearOracle(const Network& net, double lambda, std::vector<double> f) : net_(net), lambda_(lambda), f_(std::move(f)) {
    if (!(lambda > 0.0)) throw ModelError("oracle requires lambda > 0");
    if (f_.size() != net.num_edges()) throw ModelError("oracle needs one load value per edge");
    const auto nv = static_cast<Eigen::Index>(net.num_vertices());
    M_ = Eigen::MatrixXd::Zero(nv, nv);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nv);
    for (const auto& v : net.vertices()) {
      for (EdgeId a : v.incident_edges) {
        const auto& e = net.edge(a);
        const double k = std::sqrt(lambda / e.mu);
        const double kl = k * e.length;
        const double coth = 1.0 / std::tanh(kl);
        const double csch = 1.0 / std::sinh(kl);
        const double g = net.gamma(v.id, a) * e.mu;
        const VertexId other = e.tail == v.id ? e.head : e.tail;
        const double c = f_[static_cast<std::size_t>(a)] / lambda;
        M_(v.id, v.id) += g * k * coth;
        M_(v.id, other) -= g * k * csch;
        rhs[v.id] += g * k * c * (coth - csch);
      }
    }
    U_ = M_.partialPivLu().solve(rhs);
  }

  const Eigen::MatrixXd& vertex_matrix() const noexcept { return M_; }
  const Eigen::VectorXd& vertex_values() const noexcept { return U_; }

  bool diagonally_dominant() const {
    for (Eigen::Index i = 0; i < M_.rows(); ++i) {
      double off = 0.0;
      for (Eigen::Index j = 0; j < M_.cols(); ++j)
        if (j != i) off += std::abs(M_(i, j));
      if (!(M_(i, i) > off)) return false;
    }
    return true;
  }

  double operator()(EdgeId a, double y) const {
    const auto& e = net_.edge(a);
    const double k = std::sqrt(lambda_ / e.mu);
    const double c = f_[static_cast<std::size_t>(a)] / lambda_;
    const double ut = U_[e.tail] - c;
    const double uh = U_[e.head] - c;
    // sinh-weighted interpolation, stable for large k l
    const double kl = k * e.length;
    return c + (ut * std::sinh(k * (e.length - y)) + uh * std::sinh(k * y)) / std::sinh(kl);
  }

private:
  Network net_;
  double lambda_;
  std::vector<double> f_;
  Eigen::MatrixXd M_;
  Eigen::VectorXd U_;
};

inline LinearOracle analytic_linear_oracle(const Network& net, double lambda, const std::vector<double>& f) {
  return LinearOracle(net, lambda, f);
}

// Stationary density of the generator A (lambda = 0): kernel of the weighted
// adjoint, with one row replaced by the normalization integral(m) = 1.
inline GridFunction solve_stationary_fp(const DiscreteNetwork& disc, const SparseOperator& generator) {
  if (generator.lambda != 0.0) throw ModelError("stationary density needs the generator with lambda = 0");
  const auto adj = adjoint_fp(disc, generator);
  const auto& w = disc.weights(Convention::W);
  const std::size_t n = disc.size();

  std::vector<Eigen::Triplet<double>> t;
  for (Eigen::Index r = 1; r < adj.matrix.outerSize(); ++r) {
    for (SparseMatrix::InnerIterator it(adj.matrix, r); it; ++it) t.emplace_back(static_cast<int>(r), static_cast<int>(it.col()), it.value());
  }
  for (std::size_t j = 0; j < n; ++j) t.emplace_back(0, static_cast<int>(j), w[j]);
  detail::ColMatrix K(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  K.setFromTriplets(t.begin(), t.end());
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  rhs[0] = 1.0;

  Eigen::VectorXd m;
  try {
    m = detail::sparse_solve(K, rhs, "solve_stationary_fp");
  } catch (const SolverError&) {
    throw SolverError("solve_stationary_fp: kernel dimension is not 1");
  }
  // the dropped row must hold too, otherwise the kernel is not one-dimensional
  const double scale = detail::sup(Eigen::VectorXd(adj.matrix.cwiseAbs() * m.cwiseAbs()));
  const double res = detail::sup(adj.matrix * m);
  if (res > 1e-8 * std::max(scale, 1e-300)) throw SolverError("solve_stationary_fp: kernel dimension is not 1", res);

  const double mmax = detail::sup(m);
  if (m.minCoeff() < -1e-12 * std::max(1.0, mmax)) {
    throw SolverError("solve_stationary_fp: negative density", m.minCoeff());
  }
  GridFunction out(disc, Convention::W, std::move(m));
  out.values() /= integrate(out);
  return out;
}

inline GridFunction solve_stationary_fp(const DiscreteNetwork& disc, const DriftField& b) {
  return solve_stationary_fp(disc, assemble_generator(disc, b, 0.0, Scheme::Upwind));
}

struct HJBOptions {
  double tol = 1e-9;
  int max_iter = 200;
  std::optional<GridFunction> initial;
};

// Value of the discrete HJB rows  -mu v'' + H(x, v') + lambda v + rho - f  at
// every DOF (vertex rows in the lumped vertex form of assemble_generator).
inline Eigen::VectorXd hjb_rows(const DiscreteNetwork& disc, const HamiltonianSpec& H, const GridFunction& v,
                                double lambda, double rho, const EdgeField& f) {
  const Policy pol = compute_policy(disc, H, v);
  const auto A = assemble_generator(disc, pol.drift, lambda, Scheme::Upwind);
  EdgeField g(disc);
  for (std::size_t a = 0; a < g.values.size(); ++a)
    for (std::size_t k = 0; k < g.values[a].size(); ++k)
      g.values[a][k] = pol.hamiltonian.values[a][k] - pol.drift.values[a][k] * pol.gradient.values[a][k] - f.values[a][k];
  Eigen::VectorXd r = A.matrix * v.values() + load_vector(disc, g);
  r.array() += rho;
  return r;
}

namespace detail {

// True when the discrete HJB rows at v are zero up to roundoff in forming
// them. Near ties between the two upwind branches the policy can flip back
// and forth at this level without v settling to a relative 1e-12.
inline bool hjb_at_roundoff(const DiscreteNetwork& disc, const HamiltonianSpec& H, const GridFunction& v,
                            double lambda, double rho, const EdgeField& f) {
  const Policy pol = compute_policy(disc, H, v);
  const auto A = assemble_generator(disc, pol.drift, lambda, Scheme::Upwind);
  EdgeField g(disc);
  for (std::size_t a = 0; a < g.values.size(); ++a)
    for (std::size_t k = 0; k < g.values[a].size(); ++k)
      g.values[a][k] = pol.hamiltonian.values[a][k] - pol.drift.values[a][k] * pol.gradient.values[a][k] - f.values[a][k];
  const Eigen::VectorXd load = load_vector(disc, g);
  Eigen::VectorXd r = A.matrix * v.values() + load;
  r.array() += rho;
  const Eigen::VectorXd scale = A.matrix.cwiseAbs() * v.values().cwiseAbs() + load.cwiseAbs();
  return sup(r) <= 8.0 * std::numeric_limits<double>::epsilon() * (sup(scale) + std::abs(rho));
}

} // namespace detail

struct DiscountedSolution {
  GridFunction v;
  int iterations = 0;
  double residual = 0.0;
  double truncation = 0.0;
};

namespace detail {

// Right-hand side of the Howard step: f - H(p) + b p.
inline EdgeField howard_load(const Policy& pol, const EdgeField& f) {
  EdgeField g = f;
  for (std::size_t a = 0; a < g.values.size(); ++a)
    for (std::size_t k = 0; k < g.values[a].size(); ++k)
      g.values[a][k] += pol.drift.values[a][k] * pol.gradient.values[a][k] - pol.hamiltonian.values[a][k];
  return g;
}

// Computes the policy, doubling the truncation level until it is inactive.
inline Policy truncated_policy(const DiscreteNetwork& disc, const HamiltonianSpec& H, const GridFunction& v,
                               double& level) {
  for (int guard = 0; guard < 200; ++guard) {
    Policy pol = compute_policy(disc, H.truncated(level), v);
    if (max_abs_difference(v) < level) return pol;
    level *= 2.0;
  }
  throw SolverError("hamiltonian truncation level diverged");
}

} // namespace detail

// -mu v'' + H(x, v') + lambda v = f with Kirchhoff conditions by policy
// iteration on the upwind discretization, H truncated at a level that is
// doubled until inactive.
inline DiscountedSolution solve_discounted_hjb(const DiscreteNetwork& disc, const HamiltonianSpec& H, const EdgeField& f,
                                               double lambda, const HJBOptions& opt = {}) {
  if (!(lambda > 0.0)) throw ModelError("lambda must be positive");
  H.validate(disc.num_edges());
  if (!f.matches(disc)) throw ModelError("load does not match the grid");
  GridFunction v = opt.initial ? *opt.initial : GridFunction(disc, Convention::V);
  double level = 10.0 * (1.0 + max_abs_difference(v));
  double change = std::numeric_limits<double>::infinity();
  double previous = change;
  int it = 0;
  while (it < opt.max_iter) {
    ++it;
    const Policy pol = detail::truncated_policy(disc, H, v, level);
    const auto A = assemble_generator(disc, pol.drift, lambda, Scheme::Upwind);
    Eigen::VectorXd next = detail::sparse_solve(A.matrix, load_vector(disc, detail::howard_load(pol, f)), "solve_discounted_hjb");
    change = detail::sup(next - v.values());
    v.values() = std::move(next);
    if (change <= opt.tol * std::max(1.0, detail::sup(v.values()))) break;
    const bool stalled = change > 0.5 * previous;
    previous = change;
    if (stalled && detail::hjb_at_roundoff(disc, H.truncated(level), v, lambda, 0.0, f)) {
      change = 0.0;
      break;
    }
  }
  const double res = detail::sup(hjb_rows(disc, H.truncated(level), v, lambda, 0.0, f));
  if (change > opt.tol * std::max(1.0, detail::sup(v.values()))) {
    throw SolverError("solve_discounted_hjb: policy iteration did not converge", res);
  }
  if (max_abs_difference(v) >= level) throw SolverError("solve_discounted_hjb: truncation active at solution", res);
  return {std::move(v), it, res, level};
}

struct ErgodicSolution {
  GridFunction v;
  double rho = 0.0;
  int iterations = 0;
  double residual = 0.0;     // sup of the discrete HJB rows
  double truncation = 0.0;
  double rho_bound = 0.0;    // max |H(x,0) - f(x)|
  Policy policy;             // upwind policy of v
  bool used_fallback = false;
};

struct ErgodicOptions {
  double tol = 1e-10;
  int max_iter = 200;
  std::optional<GridFunction> initial;
  // Also run the vanishing-discount path and require agreement on rho.
  bool cross_check = false;
  double cross_check_tol = 1e-3;
};

struct VanishingDiscount {
  std::vector<double> lambdas;
  std::vector<double> estimates; // lambda * mean(v_lambda)
  double extrapolated = 0.0;     // Richardson on the two smallest lambdas
  GridFunction v;                // v_lambda - mean(v_lambda) for the smallest lambda
};

inline double max_h0_minus_f(const DiscreteNetwork& disc, const HamiltonianSpec& H, const EdgeField& f) {
  double s = 0.0;
  for (std::size_t ua = 0; ua < disc.num_edges(); ++ua) {
    const auto a = static_cast<EdgeId>(ua);
    for (int k = 0; k <= disc.intervals(a); ++k) s = std::max(s, std::abs(H.value(a, 0.0) - f(a, k)));
  }
  return s;
}

inline VanishingDiscount ergodic_by_vanishing_discount(const DiscreteNetwork& disc, const HamiltonianSpec& H,
                                                       const EdgeField& f,
                                                       std::vector<double> lambdas = {1e-1, 1e-2, 1e-3, 1e-4}) {
  if (lambdas.size() < 2) throw ModelError("vanishing discount needs at least two values of lambda");
  const double length = disc.network().total_length();
  VanishingDiscount out{lambdas, {}, 0.0, GridFunction(disc, Convention::V)};
  std::optional<GridFunction> guess;
  double prev_lambda = 0.0;
  for (double lambda : lambdas) {
    HJBOptions opt;
    opt.tol = 1e-12;
    if (guess) {
      guess->values() *= prev_lambda / lambda;
      opt.initial = guess;
    }
    auto sol = solve_discounted_hjb(disc, H, f, lambda, opt);
    const double mean = integrate(sol.v) / length;
    out.estimates.push_back(lambda * mean);
    guess = sol.v;
    prev_lambda = lambda;
    out.v = sol.v;
    out.v.values().array() -= mean;
  }
  const std::size_t k = lambdas.size() - 1;
  const double l0 = lambdas[k - 1], l1 = lambdas[k];
  out.extrapolated = (l0 * out.estimates[k] - l1 * out.estimates[k - 1]) / (l0 - l1);
  return out;
}

// -mu v'' + H(x, v') + rho = f, Kirchhoff conditions, integral(v) = 0. Each
// policy step solves the bordered system [A 1; w^T 0] [v; rho] = [g; 0].
inline ErgodicSolution solve_hjb_ergodic(const DiscreteNetwork& disc, const HamiltonianSpec& H, const EdgeField& f,
                                         const ErgodicOptions& opt = {}) {
  H.validate(disc.num_edges());
  if (!f.matches(disc)) throw ModelError("load does not match the grid");
  const std::size_t n = disc.size();
  const auto& wv = disc.weights(Convention::V);

  GridFunction v = opt.initial ? *opt.initial : GridFunction(disc, Convention::V);
  double rho = 0.0;
  double level = 10.0 * (1.0 + max_abs_difference(v));
  bool converged = false;
  double previous = std::numeric_limits<double>::infinity();
  int it = 0;
  try {
    while (it < opt.max_iter) {
      ++it;
      const Policy pol = detail::truncated_policy(disc, H, v, level);
      const auto A = assemble_generator(disc, pol.drift, 0.0, Scheme::Upwind);
      std::vector<Eigen::Triplet<double>> t;
      t.reserve(static_cast<std::size_t>(A.matrix.nonZeros()) + 2 * n);
      for (Eigen::Index r = 0; r < A.matrix.outerSize(); ++r)
        for (SparseMatrix::InnerIterator itr(A.matrix, r); itr; ++itr)
          t.emplace_back(static_cast<int>(r), static_cast<int>(itr.col()), itr.value());
      for (std::size_t j = 0; j < n; ++j) {
        t.emplace_back(static_cast<int>(j), static_cast<int>(n), 1.0);
        t.emplace_back(static_cast<int>(n), static_cast<int>(j), wv[j]);
      }
      detail::ColMatrix K(static_cast<Eigen::Index>(n + 1), static_cast<Eigen::Index>(n + 1));
      K.setFromTriplets(t.begin(), t.end());
      Eigen::VectorXd rhs(static_cast<Eigen::Index>(n + 1));
      rhs.head(static_cast<Eigen::Index>(n)) = load_vector(disc, detail::howard_load(pol, f));
      rhs[static_cast<Eigen::Index>(n)] = 0.0;
      const Eigen::VectorXd x = detail::sparse_solve(K, rhs, "solve_hjb_ergodic");
      const double next_rho = x[static_cast<Eigen::Index>(n)];
      const double change = std::max(detail::sup(x.head(static_cast<Eigen::Index>(n)) - v.values()), std::abs(next_rho - rho));
      v.values() = x.head(static_cast<Eigen::Index>(n));
      rho = next_rho;
      if (change <= opt.tol * std::max({1.0, detail::sup(v.values()), std::abs(rho)})) {
        converged = true;
        break;
      }
      const bool stalled = change > 0.5 * previous;
      previous = change;
      if (stalled && detail::hjb_at_roundoff(disc, H.truncated(level), v, 0.0, rho, f)) {
        converged = true;
        break;
      }
    }
  } catch (const SolverError&) {
    converged = false;
  }

  ErgodicSolution out{v, rho, it, 0.0, level, max_h0_minus_f(disc, H, f), {}, false};
  if (!converged) {
    // fall back on the vanishing-discount limit
    auto vd = ergodic_by_vanishing_discount(disc, H, f);
    out.v = vd.v;
    out.rho = vd.extrapolated;
    out.used_fallback = true;
    level = 10.0 * (1.0 + max_abs_difference(out.v));
  }
  out.policy = detail::truncated_policy(disc, H, out.v, level);
  out.truncation = level;
  out.residual = detail::sup(hjb_rows(disc, H.truncated(level), out.v, 0.0, out.rho, f));
  if (opt.cross_check) {
    const auto vd = ergodic_by_vanishing_discount(disc, H, f);
    if (std::abs(vd.extrapolated - out.rho) > opt.cross_check_tol) {
      throw SolverError("solve_hjb_ergodic: augmented and vanishing-discount values of rho disagree",
                        std::abs(vd.extrapolated - out.rho));
    }
  }
  return out;
}

} // namespace netmfg
