#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <ostream>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "netmfg/error.hpp"
#include "netmfg/grid.hpp"

namespace netmfg {

// Drift b(x) of the operator -mu v'' + b v'. Values may jump at vertices, so
// endpoint samples are per-side values.
using DriftField = EdgeField;

enum class Scheme { Centered, Upwind };
enum class VertexStencil { FirstOrder, SecondOrder };

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct SparseOperator {
  SparseMatrix matrix;
  Convention acts_on = Convention::V;
  double lambda = 0.0;
  std::uint64_t drift_id = 0;

  Eigen::VectorXd apply(const GridFunction& f) const {
    if (f.convention() != acts_on) throw ModelError("operator applied to a function of the wrong convention");
    return matrix * f.values();
  }
  std::size_t dimension() const { return static_cast<std::size_t>(matrix.rows()); }
};

namespace detail {

// FNV-1a over the drift samples; identifies the drift an operator was built from.
inline std::uint64_t fingerprint(const EdgeField& f) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& row : f.values) {
    for (double x : row) {
      std::uint64_t bits;
      std::memcpy(&bits, &x, sizeof bits);
      for (int i = 0; i < 8; ++i) {
        h ^= (bits >> (8 * i)) & 0xffu;
        h *= 1099511628211ull;
      }
    }
  }
  return h;
}

inline void check_drift(const DiscreteNetwork& disc, const DriftField& b) {
  if (!b.matches(disc)) throw ModelError("drift field does not match the grid");
  for (const auto& row : b.values)
    for (double x : row)
      if (!std::isfinite(x)) throw ModelError("drift field has non-finite values");
}

struct TripletBuilder {
  std::vector<Eigen::Triplet<double>> t;
  void add(std::size_t r, std::size_t c, double v) {
    if (v != 0.0) t.emplace_back(static_cast<int>(r), static_cast<int>(c), v);
  }
  SparseMatrix build(std::size_t n) {
    SparseMatrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    m.setFromTriplets(t.begin(), t.end());
    m.makeCompressed();
    return m;
  }
};

// Rounds the off-diagonal entries of each row to a common power-of-two
// quantum and sets the diagonal to minus their sum. All partial sums of the
// row are then exact, so the row sums are exactly zero in floating point.
inline void zero_row_sums(SparseMatrix& m) {
  for (Eigen::Index r = 0; r < m.outerSize(); ++r) {
    double big = 0.0;
    int count = 0;
    double* diag = nullptr;
    for (SparseMatrix::InnerIterator it(m, r); it; ++it) {
      big = std::max(big, std::abs(it.value()));
      ++count;
      if (it.col() == r) diag = &it.valueRef();
    }
    if (!diag || big == 0.0) throw ModelError("generator row without a diagonal entry");
    const double q = std::ldexp(1.0, std::ilogb(2.0 * count * big) + 1 - std::numeric_limits<double>::digits);
    double sum = 0.0;
    for (SparseMatrix::InnerIterator it(m, r); it; ++it) {
      if (it.col() == r) continue;
      it.valueRef() = q * std::nearbyint(it.value() / q);
      sum += it.value();
    }
    *diag = -sum;
  }
}

} // namespace detail

// Discretizes  -mu v'' + b v' + lambda v  on V-type DOFs.
//
// Interior rows use the centered second difference; the advection term is
// upwinded (b > 0 backward, b < 0 forward) or centered. The row of vertex i
// is the lumped Petrov-Galerkin equation of the W-type hat function at i:
//
//   (1/w_i) [ sum_a gamma_ia mu_a d_a v(i) + sum_a gamma_ia c_a h_a b_a(i) dv_a(i)
//             + lambda w_i v_i ] ,
//
// with w_i = sum_a gamma_ia h_a / 2, d_a the outward one-sided difference,
// dv_a the one-sided derivative along edge a and c_a the share of the first
// face owned by the vertex (1 or 0 when upwinded, 1/2 centered), so that the
// adjoint flux is consistent up to the vertex. As h -> 0 the row reduces to
// the Kirchhoff condition sum_a gamma_ia mu_a d_a v(i) = 0. Constants are in
// the kernel when lambda = 0 for every b, exactly in floating point.
inline SparseOperator assemble_generator(const DiscreteNetwork& disc, const DriftField& b, double lambda,
                                         Scheme scheme = Scheme::Upwind,
                                         VertexStencil stencil = VertexStencil::FirstOrder) {
  if (!(lambda >= 0.0)) throw ModelError("lambda must be nonnegative");
  detail::check_drift(disc, b);
  const auto& net = disc.network();
  detail::TripletBuilder tb;

  for (std::size_t ua = 0; ua < disc.num_edges(); ++ua) {
    const auto a = static_cast<EdgeId>(ua);
    const double h = disc.step(a);
    const double mu = net.edge(a).mu;
    const double diff = mu / (h * h);
    for (int k = 1; k < disc.intervals(a); ++k) {
      const std::size_t j = disc.dof(a, k);
      const std::size_t jm = disc.dof(a, k - 1);
      const std::size_t jp = disc.dof(a, k + 1);
      double diag = 2.0 * diff;
      double lower = -diff;
      double upper = -diff;
      const double bk = b(a, k);
      if (scheme == Scheme::Upwind) {
        if (bk > 0.0) {
          diag += bk / h;
          lower -= bk / h;
        } else {
          diag -= bk / h;
          upper += bk / h;
        }
      } else {
        upper += 0.5 * bk / h;
        lower -= 0.5 * bk / h;
      }
      tb.add(j, j, diag);
      tb.add(j, jm, lower);
      tb.add(j, jp, upper);
    }
  }

  const auto& w = disc.weights(Convention::W);
  for (const auto& v : net.vertices()) {
    const auto i = static_cast<std::size_t>(v.id);
    const double s = 1.0 / w[i];
    for (std::size_t loc = 0; loc < v.incident_edges.size(); ++loc) {
      const EdgeId a = v.incident_edges[loc];
      const double g = net.gamma_row(v.id)[loc];
      const double h = disc.step(a);
      const double mu = net.edge(a).mu;
      const int n = disc.intervals(a);
      const bool at_tail = net.edge(a).tail == v.id;
      const int k0 = at_tail ? 0 : n;
      const int k1 = at_tail ? 1 : n - 1;
      const int k2 = at_tail ? 2 : n - 2;
      const double kir = s * g * mu;
      if (stencil == VertexStencil::FirstOrder) {
        tb.add(i, i, kir / h);
        tb.add(i, disc.dof(a, k1), -kir / h);
      } else {
        tb.add(i, i, 1.5 * kir / h);
        tb.add(i, disc.dof(a, k1), -2.0 * kir / h);
        tb.add(i, disc.dof(a, k2), 0.5 * kir / h);
      }
      // Advection across the first face. Upwind: the vertex owns the face
      // when its one-sided difference is the upwind one (tail with b < 0,
      // head with b > 0), otherwise the neighbouring node does. Centered:
      // half a cell of the one-sided difference.
      const double bs = b(a, k0);
      double weight = 0.5;
      if (scheme == Scheme::Upwind) weight = (at_tail ? bs < 0.0 : bs > 0.0) ? 1.0 : 0.0;
      const double c = s * g * weight * bs;
      if (at_tail) {
        tb.add(i, i, -c);
        tb.add(i, disc.dof(a, k1), c);
      } else {
        tb.add(i, i, c);
        tb.add(i, disc.dof(a, k1), -c);
      }
    }
  }

  SparseOperator op;
  op.matrix = tb.build(disc.size());
  detail::zero_row_sums(op.matrix);
  if (lambda != 0.0) op.matrix.diagonal().array() += lambda;
  op.acts_on = Convention::V;
  op.lambda = lambda;
  op.drift_id = detail::fingerprint(b);
  return op;
}

// Discretizes  lambda0 m - mu m'' - (b m)'  on W-type DOFs in conservative
// form with flux F = -mu m' - b m at half points (centered average for b m).
// The row of vertex i is the balance of its half cells:
//   lambda0 w_i s_i + sum_a (outflow of F into edge a) = 0, scaled by 1/w_i,
// which is the condition sum_a [n_ia b m + mu_a d_a m](i) = 0 as h -> 0.
inline SparseOperator assemble_fp_direct(const DiscreteNetwork& disc, const DriftField& b, double lambda0) {
  if (!(lambda0 >= 0.0)) throw ModelError("lambda0 must be nonnegative");
  detail::check_drift(disc, b);
  const auto& net = disc.network();
  const auto& w = disc.weights(Convention::W);
  detail::TripletBuilder tb;

  // Adds coeff * F_{k+1/2} of edge a to row r.
  auto add_flux = [&](std::size_t r, EdgeId a, int k, double coeff) {
    const double h = disc.step(a);
    const double mu = net.edge(a).mu;
    const double bbar = 0.5 * (b(a, k) + b(a, k + 1));
    const double c_next = -mu / h - 0.5 * bbar;
    const double c_here = mu / h - 0.5 * bbar;
    tb.add(r, disc.dof(a, k + 1), coeff * c_next * disc.side_scale(Convention::W, a, k + 1));
    tb.add(r, disc.dof(a, k), coeff * c_here * disc.side_scale(Convention::W, a, k));
  };

  for (std::size_t ua = 0; ua < disc.num_edges(); ++ua) {
    const auto a = static_cast<EdgeId>(ua);
    const double h = disc.step(a);
    for (int k = 1; k < disc.intervals(a); ++k) {
      const std::size_t j = disc.dof(a, k);
      tb.add(j, j, lambda0);
      add_flux(j, a, k, 1.0 / h);
      add_flux(j, a, k - 1, -1.0 / h);
    }
  }
  for (const auto& v : net.vertices()) {
    const auto i = static_cast<std::size_t>(v.id);
    const double s = 1.0 / w[i];
    tb.add(i, i, lambda0);
    for (EdgeId a : v.incident_edges) {
      if (net.edge(a).tail == v.id) add_flux(i, a, 0, s);
      else add_flux(i, a, disc.intervals(a) - 1, -s);
    }
  }

  SparseOperator op;
  op.matrix = tb.build(disc.size());
  op.acts_on = Convention::W;
  op.lambda = lambda0;
  op.drift_id = detail::fingerprint(b);
  return op;
}

// Weighted transpose D^{-1} A^T D, D = diag(W-type quadrature weights), so
// that  integral((A v) m) = integral(v (A* m))  exactly for V-type v and
// W-type m.
inline SparseOperator adjoint_fp(const DiscreteNetwork& disc, const SparseOperator& generator) {
  if (generator.acts_on != Convention::V) throw ModelError("adjoint_fp expects an operator on V-type functions");
  if (generator.dimension() != disc.size()) throw ModelError("operator does not match the grid");
  const auto& wv = disc.weights(Convention::W);
  Eigen::VectorXd w(static_cast<Eigen::Index>(wv.size()));
  for (std::size_t j = 0; j < wv.size(); ++j) w[static_cast<Eigen::Index>(j)] = wv[j];
  SparseMatrix at = generator.matrix.transpose();
  SparseMatrix scaled = w.cwiseInverse().asDiagonal() * at * w.asDiagonal();
  scaled.makeCompressed();
  SparseOperator op;
  op.matrix = std::move(scaled);
  op.acts_on = Convention::W;
  op.lambda = generator.lambda;
  op.drift_id = generator.drift_id;
  return op;
}

// Plain "row col value" dump, one nonzero per line.
inline void write_triplets(std::ostream& os, const SparseOperator& op) {
  os.precision(17);
  for (Eigen::Index r = 0; r < op.matrix.outerSize(); ++r) {
    for (SparseMatrix::InnerIterator it(op.matrix, r); it; ++it) {
      os << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
    }
  }
}

} // namespace netmfg
