#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include <Eigen/Core>

#include "netmfg/error.hpp"
#include "netmfg/network.hpp"

namespace netmfg {

// V-type: one value per vertex shared by all incident edges (continuous).
// W-type: one unknown s_i per vertex; the side value on edge a at vertex i
// is gamma_ia * s_i, so the jump law holds by construction.
enum class Convention { V, W };

// Uniform grid on every edge plus the global numbering shared by both
// conventions: vertices first, then interior nodes edge by edge.
class DiscreteNetwork {
public:
  DiscreteNetwork(Network net, std::vector<int> intervals) : net_(std::move(net)), n_(std::move(intervals)) {
    if (n_.size() != net_.num_edges()) throw ModelError("one interval count per edge is required");
    offset_.resize(n_.size());
    std::size_t next = net_.num_vertices();
    for (std::size_t a = 0; a < n_.size(); ++a) {
      if (n_[a] < 2) throw ModelError("every edge needs at least two intervals");
      h_.push_back(net_.edge(static_cast<EdgeId>(a)).length / n_[a]);
      offset_[a] = next;
      next += static_cast<std::size_t>(n_[a] - 1);
    }
    size_ = next;

    weight_v_.assign(size_, 0.0);
    weight_w_.assign(size_, 0.0);
    for (std::size_t a = 0; a < n_.size(); ++a) {
      const auto& e = net_.edge(static_cast<EdgeId>(a));
      for (int k = 1; k < n_[a]; ++k) {
        weight_v_[offset_[a] + static_cast<std::size_t>(k - 1)] = h_[a];
        weight_w_[offset_[a] + static_cast<std::size_t>(k - 1)] = h_[a];
      }
      weight_v_[static_cast<std::size_t>(e.tail)] += 0.5 * h_[a];
      weight_v_[static_cast<std::size_t>(e.head)] += 0.5 * h_[a];
      weight_w_[static_cast<std::size_t>(e.tail)] += 0.5 * h_[a] * net_.gamma(e.tail, e.id);
      weight_w_[static_cast<std::size_t>(e.head)] += 0.5 * h_[a] * net_.gamma(e.head, e.id);
    }
  }

  const Network& network() const noexcept { return net_; }
  std::size_t num_edges() const noexcept { return n_.size(); }
  std::size_t size() const noexcept { return size_; }
  int intervals(EdgeId a) const { return n_.at(static_cast<std::size_t>(a)); }
  double step(EdgeId a) const { return h_.at(static_cast<std::size_t>(a)); }

  // Global index of node k (0..n) on edge a; endpoints map to vertex DOFs.
  std::size_t dof(EdgeId a, int k) const {
    const auto ua = static_cast<std::size_t>(a);
    if (k == 0) return static_cast<std::size_t>(net_.edge(a).tail);
    if (k == n_[ua]) return static_cast<std::size_t>(net_.edge(a).head);
    return offset_[ua] + static_cast<std::size_t>(k - 1);
  }

  bool is_vertex_dof(std::size_t j) const noexcept { return j < net_.num_vertices(); }

  // Factor turning the DOF value into the side value at node k of edge a.
  double side_scale(Convention c, EdgeId a, int k) const {
    if (c == Convention::V) return 1.0;
    const auto& e = net_.edge(a);
    if (k == 0) return net_.gamma(e.tail, a);
    if (k == n_[static_cast<std::size_t>(a)]) return net_.gamma(e.head, a);
    return 1.0;
  }

  double node_position(EdgeId a, int k) const { return k * step(a); }

  // Trapezoid weights. V: sum over DOFs equals the total length.
  // W: the weight of s_i is sum_a gamma_ia h_a / 2.
  const std::vector<double>& weights(Convention c) const noexcept {
    return c == Convention::V ? weight_v_ : weight_w_;
  }

private:
  Network net_;
  std::vector<int> n_;
  std::vector<double> h_;
  std::vector<std::size_t> offset_;
  std::size_t size_ = 0;
  std::vector<double> weight_v_;
  std::vector<double> weight_w_;
};

inline DiscreteNetwork build_grids(const Network& net, double h_target) {
  if (!(h_target > 0.0)) throw ModelError("h_target must be positive");
  std::vector<int> n;
  for (const auto& e : net.edges()) {
    n.push_back(std::max(2, static_cast<int>(std::ceil(e.length / h_target - 1e-12))));
  }
  return DiscreteNetwork(net, std::move(n));
}

// Piecewise function sampled at every node of every edge, endpoints being
// side values. Drifts, loads and reconstructed grid functions use it.
struct EdgeField {
  std::vector<std::vector<double>> values;

  EdgeField() = default;
  EdgeField(const DiscreteNetwork& disc, double fill = 0.0) {
    values.resize(disc.num_edges());
    for (std::size_t a = 0; a < disc.num_edges(); ++a) {
      values[a].assign(static_cast<std::size_t>(disc.intervals(static_cast<EdgeId>(a)) + 1), fill);
    }
  }

  double& operator()(EdgeId a, int k) { return values[static_cast<std::size_t>(a)][static_cast<std::size_t>(k)]; }
  double operator()(EdgeId a, int k) const {
    return values[static_cast<std::size_t>(a)][static_cast<std::size_t>(k)];
  }

  bool matches(const DiscreteNetwork& disc) const {
    if (values.size() != disc.num_edges()) return false;
    for (std::size_t a = 0; a < values.size(); ++a) {
      if (values[a].size() != static_cast<std::size_t>(disc.intervals(static_cast<EdgeId>(a)) + 1)) return false;
    }
    return true;
  }
};

inline EdgeField sample(const DiscreteNetwork& disc, const std::function<double(EdgeId, double)>& f) {
  EdgeField out(disc);
  for (std::size_t a = 0; a < disc.num_edges(); ++a) {
    const auto e = static_cast<EdgeId>(a);
    for (int k = 0; k <= disc.intervals(e); ++k) out(e, k) = f(e, disc.node_position(e, k));
  }
  return out;
}

inline EdgeField per_edge_constant(const DiscreteNetwork& disc, const std::vector<double>& c) {
  if (c.size() != disc.num_edges()) throw ModelError("one value per edge is required");
  return sample(disc, [&](EdgeId a, double) { return c[static_cast<std::size_t>(a)]; });
}

class GridFunction {
public:
  GridFunction(const DiscreteNetwork& disc, Convention c)
      : disc_(&disc), conv_(c), values_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(disc.size()))) {}
  GridFunction(const DiscreteNetwork& disc, Convention c, Eigen::VectorXd values)
      : disc_(&disc), conv_(c), values_(std::move(values)) {
    if (values_.size() != static_cast<Eigen::Index>(disc.size())) throw ModelError("grid function size mismatch");
  }

  const DiscreteNetwork& disc() const noexcept { return *disc_; }
  Convention convention() const noexcept { return conv_; }
  const Eigen::VectorXd& values() const noexcept { return values_; }
  Eigen::VectorXd& values() noexcept { return values_; }
  double& operator[](std::size_t j) { return values_[static_cast<Eigen::Index>(j)]; }
  double operator[](std::size_t j) const { return values_[static_cast<Eigen::Index>(j)]; }

  // Value seen from edge a at node k (side value at endpoints).
  double at(EdgeId a, int k) const {
    return disc_->side_scale(conv_, a, k) * values_[static_cast<Eigen::Index>(disc_->dof(a, k))];
  }

  EdgeField edge_field() const {
    EdgeField out(*disc_);
    for (std::size_t a = 0; a < disc_->num_edges(); ++a) {
      const auto e = static_cast<EdgeId>(a);
      for (int k = 0; k <= disc_->intervals(e); ++k) out(e, k) = at(e, k);
    }
    return out;
  }

private:
  const DiscreteNetwork* disc_;
  Convention conv_;
  Eigen::VectorXd values_;
};

inline GridFunction constant(const DiscreteNetwork& disc, Convention c, double value) {
  GridFunction f(disc, c);
  f.values().setConstant(value);
  return f;
}

// Samples a continuous function into V-type DOFs.
inline GridFunction sample_v(const DiscreteNetwork& disc, const std::function<double(EdgeId, double)>& f) {
  GridFunction out(disc, Convention::V);
  for (std::size_t a = 0; a < disc.num_edges(); ++a) {
    const auto e = static_cast<EdgeId>(a);
    for (int k = 0; k <= disc.intervals(e); ++k) out[disc.dof(e, k)] = f(e, disc.node_position(e, k));
  }
  return out;
}

inline double integrate(const DiscreteNetwork& disc, const EdgeField& f) {
  double s = 0.0;
  for (std::size_t a = 0; a < disc.num_edges(); ++a) {
    const auto e = static_cast<EdgeId>(a);
    const int n = disc.intervals(e);
    double edge_sum = 0.5 * (f(e, 0) + f(e, n));
    for (int k = 1; k < n; ++k) edge_sum += f(e, k);
    s += disc.step(e) * edge_sum;
  }
  return s;
}

inline double integrate(const GridFunction& f) {
  const auto& w = f.disc().weights(f.convention());
  double s = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) s += w[j] * f[j];
  return s;
}

// Integral of the product of a continuous and a W-type function.
inline double pair(const GridFunction& u, const GridFunction& m) {
  if (&u.disc() != &m.disc()) throw ModelError("grid functions live on different grids");
  if (u.convention() != Convention::V || m.convention() != Convention::W) {
    throw ModelError("pairing expects a V-type and a W-type function");
  }
  const auto& w = u.disc().weights(Convention::W);
  double s = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) s += w[j] * u[j] * m[j];
  return s;
}

enum class NormKind { Sup, L2, Lq };

inline double norm(const DiscreteNetwork& disc, const EdgeField& f, NormKind kind, double q = 2.0) {
  if (kind == NormKind::Sup) {
    double s = 0.0;
    for (const auto& row : f.values)
      for (double x : row) s = std::max(s, std::abs(x));
    return s;
  }
  if (kind == NormKind::L2) q = 2.0;
  if (!(q >= 1.0)) throw ModelError("Lq norm requires q >= 1");
  EdgeField g = f;
  for (auto& row : g.values)
    for (double& x : row) x = std::pow(std::abs(x), q);
  return std::pow(integrate(disc, g), 1.0 / q);
}

inline double norm(const GridFunction& f, NormKind kind, double q = 2.0) {
  return norm(f.disc(), f.edge_field(), kind, q);
}

} // namespace netmfg
