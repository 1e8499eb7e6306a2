#pragma once

#include <random>
#include <set>
#include <vector>

#include "netmfg/network.hpp"

namespace netmfg::fx {

inline Network single_edge(double length = 1.0, double mu = 1.0) {
  return build_network({{0, 1, length, mu}});
}

// Center 0 joined to leaves 1, 2, 3; unit lengths, mu = (1, 1, 2),
// routing (1/2, 1/4, 1/4) at the center.
inline Network star3() {
  return build_network({{0, 1, 1.0, 1.0}, {0, 2, 1.0, 1.0}, {0, 3, 1.0, 2.0}}, {{0, {0.5, 0.25, 0.25}}});
}

// Random connected network: a random tree plus a few chords.
inline Network random_network(std::mt19937_64& rng, int max_vertices = 7) {
  std::uniform_int_distribution<int> nv_dist(2, max_vertices);
  std::uniform_real_distribution<double> len(0.5, 1.5), mu(0.5, 2.0), weight(0.2, 1.0);
  const int nv = nv_dist(rng);
  std::vector<RawEdge> edges;
  std::set<std::pair<int, int>> used;
  for (int v = 1; v < nv; ++v) {
    std::uniform_int_distribution<int> parent(0, v - 1);
    const int p = parent(rng);
    edges.push_back({p, v, len(rng), mu(rng)});
    used.insert({p, v});
  }
  std::uniform_int_distribution<int> pick(0, nv - 1);
  for (int extra = 0; extra < nv / 2; ++extra) {
    int a = pick(rng), b = pick(rng);
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    if (!used.insert({a, b}).second) continue;
    edges.push_back({a, b, len(rng), mu(rng)});
  }
  std::vector<int> degree(static_cast<std::size_t>(nv), 0);
  for (const auto& e : edges) {
    ++degree[static_cast<std::size_t>(e.a)];
    ++degree[static_cast<std::size_t>(e.b)];
  }
  RoutingTable routing;
  for (int v = 0; v < nv; ++v) {
    std::vector<double> p;
    double s = 0.0;
    for (int k = 0; k < degree[static_cast<std::size_t>(v)]; ++k) {
      p.push_back(weight(rng));
      s += p.back();
    }
    for (double& x : p) x /= s;
    routing[v] = p;
  }
  return build_network(edges, routing);
}

} // namespace netmfg::fx
