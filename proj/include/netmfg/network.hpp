#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <queue>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "netmfg/error.hpp"

namespace netmfg {

using VertexId = int;
using EdgeId = int;

struct Vertex {
  VertexId id = 0;
  std::vector<EdgeId> incident_edges; // the set A_i, ascending edge id
  bool is_boundary = false;
  bool is_artificial = false;
};

// An edge is parametrized by arclength y in [0, length], y = 0 at the tail.
struct Edge {
  EdgeId id = 0;
  VertexId tail = 0;
  VertexId head = 0;
  double length = 1.0;
  double mu = 1.0;
};

// Edge as supplied by a user: endpoints in any order.
struct RawEdge {
  VertexId a = 0;
  VertexId b = 0;
  double length = 1.0;
  double mu = 1.0;
};

// Routing weights per vertex, listed in the order of the vertex's incident
// edges (ascending edge id). Vertices that are absent get equal weights.
using RoutingTable = std::map<VertexId, std::vector<double>>;

inline constexpr double kRoutingTolerance = 1e-12;

class Network {
public:
  Network() = default;

  const std::vector<Vertex>& vertices() const noexcept { return vertices_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const Vertex& vertex(VertexId i) const { return vertices_.at(static_cast<std::size_t>(i)); }
  const Edge& edge(EdgeId e) const { return edges_.at(static_cast<std::size_t>(e)); }
  std::size_t num_vertices() const noexcept { return vertices_.size(); }
  std::size_t num_edges() const noexcept { return edges_.size(); }

  // Position of edge e inside vertex i's incident list.
  std::size_t local_index(VertexId i, EdgeId e) const {
    const auto& inc = vertex(i).incident_edges;
    auto it = std::find(inc.begin(), inc.end(), e);
    if (it == inc.end()) {
      throw ModelError("edge " + std::to_string(e) + " is not incident to vertex " + std::to_string(i));
    }
    return static_cast<std::size_t>(it - inc.begin());
  }

  double routing(VertexId i, EdgeId e) const { return routing_[idx(i)][local_index(i, e)]; }
  double gamma(VertexId i, EdgeId e) const { return gamma_[idx(i)][local_index(i, e)]; }
  int sign(VertexId i, EdgeId e) const { return sign_[idx(i)][local_index(i, e)]; }

  // Tables aligned with vertex(i).incident_edges.
  const std::vector<double>& routing_row(VertexId i) const { return routing_[idx(i)]; }
  const std::vector<double>& gamma_row(VertexId i) const { return gamma_[idx(i)]; }
  const std::vector<int>& sign_row(VertexId i) const { return sign_[idx(i)]; }

  double total_length() const {
    double s = 0.0;
    for (const auto& e : edges_) s += e.length;
    return s;
  }

  // Every vertex is either the tail of all its edges or the head of all of them.
  bool is_all_in_all_out() const {
    for (const auto& v : vertices_) {
      bool any_tail = false, any_head = false;
      for (EdgeId e : v.incident_edges) {
        (edge(e).tail == v.id ? any_tail : any_head) = true;
      }
      if (any_tail && any_head) return false;
    }
    return true;
  }

  // Validates and assembles a network whose edges already carry their final
  // orientation. Used by build_network and orientation_split.
  static Network assemble(std::size_t num_vertices, std::vector<Edge> edges,
                          const RoutingTable& routing, const std::vector<bool>& artificial = {});

private:
  std::size_t idx(VertexId i) const {
    if (i < 0 || static_cast<std::size_t>(i) >= vertices_.size()) {
      throw ModelError("vertex " + std::to_string(i) + " does not exist");
    }
    return static_cast<std::size_t>(i);
  }

  std::vector<Vertex> vertices_;
  std::vector<Edge> edges_;
  std::vector<std::vector<double>> routing_;
  std::vector<std::vector<double>> gamma_;
  std::vector<std::vector<int>> sign_;
};

namespace detail {

inline std::string fmt_double(double x) {
  std::ostringstream os;
  os.precision(12);
  os << x;
  return os.str();
}

inline bool connected(std::size_t nv, const std::vector<Edge>& edges) {
  if (nv == 0) return false;
  std::vector<std::vector<VertexId>> adj(nv);
  for (const auto& e : edges) {
    adj[static_cast<std::size_t>(e.tail)].push_back(e.head);
    adj[static_cast<std::size_t>(e.head)].push_back(e.tail);
  }
  std::vector<char> seen(nv, 0);
  std::queue<VertexId> q;
  q.push(0);
  seen[0] = 1;
  std::size_t count = 1;
  while (!q.empty()) {
    VertexId u = q.front();
    q.pop();
    for (VertexId w : adj[static_cast<std::size_t>(u)]) {
      if (!seen[static_cast<std::size_t>(w)]) {
        seen[static_cast<std::size_t>(w)] = 1;
        ++count;
        q.push(w);
      }
    }
  }
  return count == nv;
}

} // namespace detail

inline Network Network::assemble(std::size_t num_vertices, std::vector<Edge> edges,
                                 const RoutingTable& routing, const std::vector<bool>& artificial) {
  if (num_vertices == 0 || edges.empty()) throw ModelError("network must have at least one edge");
  std::set<std::pair<VertexId, VertexId>> seen_pairs;
  for (std::size_t k = 0; k < edges.size(); ++k) {
    auto& e = edges[k];
    e.id = static_cast<EdgeId>(k);
    const std::string name = "edge " + std::to_string(k);
    if (!(e.length > 0.0) || !std::isfinite(e.length)) throw ModelError(name + ": length must be positive");
    if (!(e.mu > 0.0) || !std::isfinite(e.mu)) throw ModelError(name + ": mu must be positive");
    if (e.tail == e.head) throw ModelError(name + ": self-loops are not allowed");
    for (VertexId v : {e.tail, e.head}) {
      if (v < 0 || static_cast<std::size_t>(v) >= num_vertices) {
        throw ModelError(name + ": endpoint " + std::to_string(v) + " out of range");
      }
    }
    auto key = std::minmax(e.tail, e.head);
    if (!seen_pairs.insert({key.first, key.second}).second) {
      throw ModelError(name + ": vertices " + std::to_string(key.first) + " and " +
                       std::to_string(key.second) + " are already joined by another edge");
    }
  }

  Network net;
  net.edges_ = std::move(edges);
  net.vertices_.resize(num_vertices);
  for (std::size_t i = 0; i < num_vertices; ++i) {
    net.vertices_[i].id = static_cast<VertexId>(i);
    net.vertices_[i].is_artificial = i < artificial.size() && artificial[i];
  }
  for (const auto& e : net.edges_) {
    net.vertices_[static_cast<std::size_t>(e.tail)].incident_edges.push_back(e.id);
    net.vertices_[static_cast<std::size_t>(e.head)].incident_edges.push_back(e.id);
  }
  for (auto& v : net.vertices_) {
    if (v.incident_edges.empty()) throw ModelError("vertex " + std::to_string(v.id) + " has no incident edge");
    v.is_boundary = v.incident_edges.size() == 1;
  }
  if (!detail::connected(num_vertices, net.edges_)) throw ModelError("network is not connected");

  for (const auto& [vid, w] : routing) {
    if (vid < 0 || static_cast<std::size_t>(vid) >= num_vertices) {
      throw ModelError("routing given for unknown vertex " + std::to_string(vid));
    }
  }

  net.routing_.resize(num_vertices);
  net.gamma_.resize(num_vertices);
  net.sign_.resize(num_vertices);
  for (const auto& v : net.vertices_) {
    const std::size_t deg = v.incident_edges.size();
    const std::string name = "vertex " + std::to_string(v.id);
    std::vector<double> p;
    if (auto it = routing.find(v.id); it != routing.end()) {
      p = it->second;
      if (p.size() != deg) {
        throw ModelError(name + ": expected " + std::to_string(deg) + " routing weights, got " +
                         std::to_string(p.size()));
      }
    } else {
      p.assign(deg, 1.0 / static_cast<double>(deg));
    }
    double sum = 0.0;
    for (double x : p) {
      if (!(x > 0.0) || !std::isfinite(x)) throw ModelError(name + ": routing weights must be positive");
      sum += x;
    }
    if (std::abs(sum - 1.0) > kRoutingTolerance) {
      throw ModelError(name + ": routing weights sum to " + detail::fmt_double(sum) + ", expected 1");
    }
    if (v.is_artificial) {
      if (deg != 2) throw ModelError(name + ": artificial vertex must have two edges");
      const auto& e0 = net.edge(v.incident_edges[0]);
      const auto& e1 = net.edge(v.incident_edges[1]);
      if (std::abs(p[0] - 0.5) > kRoutingTolerance || std::abs(p[1] - 0.5) > kRoutingTolerance) {
        throw ModelError(name + ": artificial vertex must route 1/2 to each side");
      }
      if (e0.mu != e1.mu) throw ModelError(name + ": mu must agree across an artificial vertex");
    }
    auto& g = net.gamma_[static_cast<std::size_t>(v.id)];
    auto& s = net.sign_[static_cast<std::size_t>(v.id)];
    for (std::size_t k = 0; k < deg; ++k) {
      const auto& e = net.edge(v.incident_edges[k]);
      g.push_back(p[k] / e.mu);
      s.push_back(e.head == v.id ? +1 : -1);
    }
    net.routing_[static_cast<std::size_t>(v.id)] = std::move(p);
  }
  return net;
}

// Builds a network from user edges. Each edge is oriented from the lower to
// the higher vertex index; the vertex count is inferred from the edge list.
inline Network build_network(std::span<const RawEdge> raw, const RoutingTable& routing = {}) {
  std::vector<Edge> edges;
  edges.reserve(raw.size());
  VertexId max_vertex = -1;
  for (const auto& r : raw) {
    Edge e;
    e.tail = std::min(r.a, r.b);
    e.head = std::max(r.a, r.b);
    e.length = r.length;
    e.mu = r.mu;
    if (e.tail < 0) throw ModelError("negative vertex index in edge list");
    max_vertex = std::max(max_vertex, e.head);
    edges.push_back(e);
  }
  return Network::assemble(static_cast<std::size_t>(max_vertex + 1), std::move(edges), routing);
}

inline Network build_network(std::initializer_list<RawEdge> raw, const RoutingTable& routing = {}) {
  return build_network(std::span<const RawEdge>(raw.begin(), raw.size()), routing);
}

// Where a piece of the split network sits on the original network:
// original arclength = reversed ? start - y : start + y.
struct EdgePiece {
  EdgeId original = 0;
  double start = 0.0;
  bool reversed = false;

  double to_original(double y) const { return reversed ? start - y : start + y; }
};

struct SplitNetwork {
  Network network;
  std::vector<EdgePiece> pieces;      // indexed by edge id of `network`
  std::vector<EdgeId> split_edges;    // original edges that were cut in two
  std::vector<VertexId> original_vertex; // -1 for artificial vertices
};

// Cuts edges in half, adding artificial vertices, until every vertex is the
// tail of all its edges or the head of all of them. Each vertex is labelled
// source or sink; an edge between two equal labels is cut.
inline SplitNetwork orientation_split(const Network& net) {
  const std::size_t nv = net.num_vertices();
  std::vector<char> source(nv, 0);
  for (const auto& v : net.vertices()) {
    int tails = 0;
    for (EdgeId e : v.incident_edges) tails += net.edge(e).tail == v.id ? 1 : 0;
    source[static_cast<std::size_t>(v.id)] = 2 * tails >= static_cast<int>(v.incident_edges.size());
  }
  auto conflicts = [&](VertexId v, char label) {
    int c = 0;
    for (EdgeId e : net.vertex(v).incident_edges) {
      const auto& ed = net.edge(e);
      VertexId other = ed.tail == v ? ed.head : ed.tail;
      c += source[static_cast<std::size_t>(other)] == label ? 1 : 0;
    }
    return c;
  };
  for (bool changed = true; changed;) {
    changed = false;
    for (const auto& v : net.vertices()) {
      const char cur = source[static_cast<std::size_t>(v.id)];
      if (conflicts(v.id, static_cast<char>(!cur)) < conflicts(v.id, cur)) {
        source[static_cast<std::size_t>(v.id)] = static_cast<char>(!cur);
        changed = true;
      }
    }
  }

  SplitNetwork out;
  std::vector<Edge> edges;
  std::vector<bool> artificial(nv, false);
  std::size_t next_vertex = nv;
  out.original_vertex.resize(nv);
  std::iota(out.original_vertex.begin(), out.original_vertex.end(), 0);
  // new incident edge -> original edge, to carry routing weights over
  std::vector<std::vector<std::pair<EdgeId, EdgeId>>> carried(nv);

  auto add = [&](VertexId tail, VertexId head, double len, double mu, EdgePiece piece) {
    Edge e;
    e.tail = tail;
    e.head = head;
    e.length = len;
    e.mu = mu;
    const EdgeId id = static_cast<EdgeId>(edges.size());
    edges.push_back(e);
    out.pieces.push_back(piece);
    for (VertexId v : {tail, head}) {
      if (static_cast<std::size_t>(v) < nv) carried[static_cast<std::size_t>(v)].push_back({id, piece.original});
    }
  };

  for (const auto& e : net.edges()) {
    const bool st = source[static_cast<std::size_t>(e.tail)];
    const bool sh = source[static_cast<std::size_t>(e.head)];
    if (st != sh) {
      if (st) add(e.tail, e.head, e.length, e.mu, {e.id, 0.0, false});
      else add(e.head, e.tail, e.length, e.mu, {e.id, e.length, true});
      continue;
    }
    const auto w = static_cast<VertexId>(next_vertex++);
    artificial.push_back(true);
    out.original_vertex.push_back(-1);
    out.split_edges.push_back(e.id);
    const double half = 0.5 * e.length;
    if (st) {
      add(e.tail, w, half, e.mu, {e.id, 0.0, false});
      add(e.head, w, half, e.mu, {e.id, e.length, true});
    } else {
      add(w, e.tail, half, e.mu, {e.id, half, true});
      add(w, e.head, half, e.mu, {e.id, half, false});
    }
  }

  RoutingTable routing;
  for (const auto& v : net.vertices()) {
    // new edge ids are created in increasing order, matching incident order
    std::vector<double> p;
    for (const auto& [new_edge, orig] : carried[static_cast<std::size_t>(v.id)]) {
      p.push_back(net.routing(v.id, orig));
    }
    routing[v.id] = std::move(p);
  }
  for (std::size_t w = nv; w < next_vertex; ++w) routing[static_cast<VertexId>(w)] = {0.5, 0.5};

  out.network = Network::assemble(next_vertex, std::move(edges), routing, artificial);
  return out;
}

// A point of the network given by (edge, arclength). Endpoints are
// identified with the corresponding vertex.
struct EdgePoint {
  EdgeId edge = 0;
  double y = 0.0;
  std::optional<VertexId> vertex;
};

inline EdgePoint edge_point(const Network& net, EdgeId e, double y) {
  const auto& ed = net.edge(e);
  if (!(y >= 0.0 && y <= ed.length)) {
    throw ModelError("arclength " + detail::fmt_double(y) + " outside [0, " + detail::fmt_double(ed.length) +
                     "] on edge " + std::to_string(e));
  }
  EdgePoint p{e, y, std::nullopt};
  if (y == 0.0) p.vertex = ed.tail;
  else if (y == ed.length) p.vertex = ed.head;
  return p;
}

} // namespace netmfg
