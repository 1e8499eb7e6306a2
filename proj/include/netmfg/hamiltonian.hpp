#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "netmfg/error.hpp"
#include "netmfg/grid.hpp"

namespace netmfg {

// H_a(x, p) = kappa_a |p|^q + c_a p on edge a, with q in (1, 2]. The
// optional truncation level n replaces H by H(n p / |p|) for |p| > n.
struct HamiltonianSpec {
  std::vector<double> kappa;  // per edge, > 0
  double q = 2.0;
  std::vector<double> linear; // per edge, empty means zero
  double truncation = std::numeric_limits<double>::infinity();

  static HamiltonianSpec quadratic(std::size_t num_edges, double kappa = 0.5) {
    HamiltonianSpec h;
    h.kappa.assign(num_edges, kappa);
    return h;
  }

  void validate(std::size_t num_edges) const {
    if (!(q > 1.0 && q <= 2.0)) throw ModelError("q must lie in (1,2]");
    if (kappa.size() != num_edges) throw ModelError("hamiltonian needs one kappa per edge");
    for (double k : kappa)
      if (!(k > 0.0) || !std::isfinite(k)) throw ModelError("hamiltonian kappa must be positive");
    if (!linear.empty() && linear.size() != num_edges) throw ModelError("hamiltonian needs one linear coefficient per edge");
    if (!(truncation > 0.0)) throw ModelError("truncation level must be positive");
  }

  double c(EdgeId a) const { return linear.empty() ? 0.0 : linear[static_cast<std::size_t>(a)]; }

  double value(EdgeId a, double p) const {
    if (std::abs(p) > truncation) p = std::copysign(truncation, p);
    return kappa[static_cast<std::size_t>(a)] * std::pow(std::abs(p), q) + c(a) * p;
  }

  // dH/dp; zero where the truncation is active.
  double dp(EdgeId a, double p) const {
    if (std::abs(p) > truncation) return 0.0;
    const double k = kappa[static_cast<std::size_t>(a)];
    const double grad = p == 0.0 ? 0.0 : q * k * std::pow(std::abs(p), q - 1.0) * (p > 0.0 ? 1.0 : -1.0);
    return grad + c(a);
  }

  // Minimizer of p -> H_a(p).
  double argmin(EdgeId a) const {
    const double ca = c(a);
    if (ca == 0.0) return 0.0;
    const double k = kappa[static_cast<std::size_t>(a)];
    const double p = std::pow(std::abs(ca) / (q * k), 1.0 / (q - 1.0));
    return std::clamp(ca > 0.0 ? -p : p, -truncation, truncation);
  }

  HamiltonianSpec truncated(double n) const {
    HamiltonianSpec h = *this;
    h.truncation = n;
    return h;
  }
};

// Upwind evaluation of H at every node of a V-type function. At interior
// nodes the discrete Hamiltonian is
//   max( H(max(p_back, p*)), H(min(p_fwd, p*)) ),   p* = argmin H,
// which is monotone and consistent; the active branch fixes the gradient p
// and the drift b = dH/dp (b >= 0 on the backward branch, b <= 0 on the
// forward branch, matching the upwind generator). At vertex sides p is the
// one-sided derivative along the edge.
struct Policy {
  EdgeField gradient;
  EdgeField hamiltonian;
  EdgeField drift;

  double max_abs_gradient() const {
    double s = 0.0;
    for (const auto& row : gradient.values)
      for (double x : row) s = std::max(s, std::abs(x));
    return s;
  }
};

inline Policy compute_policy(const DiscreteNetwork& disc, const HamiltonianSpec& H, const GridFunction& v) {
  if (v.convention() != Convention::V) throw ModelError("value function must be V-type");
  Policy pol{EdgeField(disc), EdgeField(disc), EdgeField(disc)};
  for (std::size_t ua = 0; ua < disc.num_edges(); ++ua) {
    const auto a = static_cast<EdgeId>(ua);
    const int n = disc.intervals(a);
    const double h = disc.step(a);
    const double pstar = H.argmin(a);
    auto set = [&](int k, double p) {
      pol.gradient(a, k) = p;
      pol.hamiltonian(a, k) = H.value(a, p);
      pol.drift(a, k) = H.dp(a, p);
    };
    set(0, (v.at(a, 1) - v.at(a, 0)) / h);
    set(n, (v.at(a, n) - v.at(a, n - 1)) / h);
    for (int k = 1; k < n; ++k) {
      const double pb = std::max((v.at(a, k) - v.at(a, k - 1)) / h, pstar);
      const double pf = std::min((v.at(a, k + 1) - v.at(a, k)) / h, pstar);
      set(k, H.value(a, pb) >= H.value(a, pf) ? pb : pf);
    }
  }
  return pol;
}

// Largest one-sided difference of a V-type function.
inline double max_abs_difference(const GridFunction& v) {
  const auto& disc = v.disc();
  double s = 0.0;
  for (std::size_t ua = 0; ua < disc.num_edges(); ++ua) {
    const auto a = static_cast<EdgeId>(ua);
    for (int k = 0; k < disc.intervals(a); ++k) {
      s = std::max(s, std::abs(v.at(a, k + 1) - v.at(a, k)) / disc.step(a));
    }
  }
  return s;
}

} // namespace netmfg
