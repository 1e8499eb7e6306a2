#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <thread>
#include <vector>

#include "netmfg/error.hpp"
#include "netmfg/grid.hpp"
#include "netmfg/network.hpp"

namespace netmfg {

struct SimConfig {
  double dt = 1e-4;
  double samples = 1e7;   // post-burn-in samples over all paths
  int paths = 8;
  double burn_in = 0.2;   // fraction of each path's steps discarded
  int bins = 50;          // per edge
  std::uint64_t seed = 1;
  int threads = 1;

  void validate() const {
    if (!(dt > 0.0)) throw ModelError("dt must be positive");
    if (!(samples >= 1.0)) throw ModelError("samples must be at least 1");
    if (paths < 1) throw ModelError("paths must be at least 1");
    if (!(burn_in >= 0.0 && burn_in < 1.0)) throw ModelError("burn_in must lie in [0,1)");
    if (bins < 1) throw ModelError("bins must be at least 1");
    if (threads < 1) throw ModelError("threads must be at least 1");
  }
};

struct OccupationHistogram {
  std::vector<std::vector<double>> density;   // per edge, per bin
  std::vector<double> width;                  // bin width per edge
  std::uint64_t samples = 0;
  // per vertex, hits of each incident edge (aligned with incident_edges)
  std::map<VertexId, std::vector<std::uint64_t>> routing_hits;

  double mass() const {
    double s = 0.0;
    for (std::size_t a = 0; a < density.size(); ++a)
      for (double d : density[a]) s += d * width[a];
    return s;
  }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t path_seed(std::uint64_t seed, std::uint64_t path) {
  return splitmix64(splitmix64(seed) ^ (path + 1) * 0xd1b54a32d192ed03ull);
}

struct PathCounts {
  std::vector<std::vector<std::uint64_t>> bins;
  std::vector<std::vector<std::uint64_t>> hits;
  std::uint64_t samples = 0;
};

class PathSimulator {
public:
  PathSimulator(const DiscreteNetwork& disc, const EdgeField& drift, const SimConfig& cfg)
      : disc_(disc), net_(disc.network()), drift_(drift), cfg_(cfg) {
    // In z = y / sqrt(mu) the motion has unit diffusion on every edge and
    // the vertex condition sum p d_y u = 0 reads sum (p / sqrt(mu)) d_z u = 0,
    // so crossings are re-deposited with weights p / sqrt(mu) and the
    // overshoot is carried over in z.
    for (const auto& v : net_.vertices()) {
      std::vector<double> w;
      double total = 0.0;
      double shortest = std::numeric_limits<double>::infinity(), max_mu = 0.0;
      for (std::size_t k = 0; k < v.incident_edges.size(); ++k) {
        const auto& e = net_.edge(v.incident_edges[k]);
        w.push_back(net_.routing_row(v.id)[k] / std::sqrt(e.mu));
        total += w.back();
        shortest = std::min(shortest, e.length);
        max_mu = std::max(max_mu, e.mu);
      }
      std::vector<double> cum;
      double s = 0.0;
      for (double x : w) cum.push_back(s += x / total);
      cum.back() = 1.0;
      cumulative_.push_back(std::move(cum));
      exit_level_.push_back(std::min(0.25 * shortest, 4.0 * std::sqrt(2.0 * max_mu * cfg.dt)));
    }
  }

  PathCounts run(std::uint64_t path, std::uint64_t steps, std::uint64_t burn) const {
    std::mt19937_64 rng(path_seed(cfg_.seed, path));
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unif;
    PathCounts out;
    out.bins.resize(net_.num_edges(), std::vector<std::uint64_t>(static_cast<std::size_t>(cfg_.bins), 0));
    for (const auto& v : net_.vertices()) out.hits.emplace_back(v.incident_edges.size(), 0);

    // start uniformly in arclength
    double u = unif(rng) * net_.total_length();
    EdgeId a = 0;
    while (static_cast<std::size_t>(a) + 1 < net_.num_edges() && u > net_.edge(a).length) u -= net_.edge(a++).length;
    double y = std::clamp(u, 0.0, net_.edge(a).length);

    VertexId pending = -1;
    std::vector<double> sigma;
    for (const auto& e : net_.edges()) sigma.push_back(std::sqrt(2.0 * e.mu * cfg_.dt));

    const Edge* e = &net_.edge(a);
    // moves the path a depth d (measured on the current edge) past vertex vtx
    auto redeposit = [&](VertexId vtx, double d) {
      const Edge& ne = net_.edge(net_.vertex(vtx).incident_edges[choose(vtx, unif(rng))]);
      d *= std::sqrt(ne.mu / e->mu);
      y = ne.tail == vtx ? d : ne.length - d;
      a = ne.id;
      e = &ne;
      pending = vtx;
    };

    for (std::uint64_t step = 0; step < steps; ++step) {
      const double y0 = y;
      const EdgeId a0 = a;
      y += drift_at(a, y) * cfg_.dt + sigma[static_cast<std::size_t>(a)] * normal(rng);
      if (y >= 0.0 && y <= e->length) {
        // the step may still have touched an endpoint; Brownian bridge
        // probability exp(-d0 d1 / (mu dt))
        const double md = e->mu * cfg_.dt;
        const double p_tail = std::exp(-y0 * y / md);
        const double p_head = std::exp(-(e->length - y0) * (e->length - y) / md);
        const double u = unif(rng);
        if (u < p_tail) redeposit(e->tail, y);
        else if (u < p_tail + p_head) redeposit(e->head, e->length - y);
      }
      while (y < 0.0 || y > e->length) {
        if (y < 0.0) redeposit(e->tail, -y);
        else redeposit(e->head, y - e->length);
      }
      // routing is observed as the edge on which the path first gets
      // exit_level away from the vertex it last crossed (bridge-corrected)
      if (pending >= 0 && (e->tail == pending || e->head == pending)) {
        const bool from_tail = e->tail == pending;
        const double level = exit_level_[static_cast<std::size_t>(pending)];
        const double d0 = from_tail ? y0 : e->length - y0;
        const double d1 = from_tail ? y : e->length - y;
        bool reached = d1 >= level;
        if (!reached && a == a0 && d0 < level) reached = unif(rng) < std::exp(-(level - d0) * (level - d1) / (e->mu * cfg_.dt));
        if (reached) {
          ++out.hits[static_cast<std::size_t>(pending)][net_.local_index(pending, a)];
          pending = -1;
        }
      }
      if (step >= burn) {
        const auto ua = static_cast<std::size_t>(a);
        auto bin = static_cast<std::size_t>(y / e->length * cfg_.bins);
        if (bin >= out.bins[ua].size()) bin = out.bins[ua].size() - 1;
        ++out.bins[ua][bin];
        ++out.samples;
      }
    }
    return out;
  }

private:
  double drift_at(EdgeId a, double y) const {
    const double h = disc_.step(a);
    const int n = disc_.intervals(a);
    int k = static_cast<int>(y / h);
    k = std::clamp(k, 0, n - 1);
    const double t = y / h - k;
    return (1.0 - t) * drift_(a, k) + t * drift_(a, k + 1);
  }

  std::size_t choose(VertexId v, double u) const {
    const auto& cum = cumulative_[static_cast<std::size_t>(v)];
    return static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end() - 1, u) - cum.begin());
  }

  const DiscreteNetwork& disc_;
  const Network& net_;
  const EdgeField& drift_;
  const SimConfig& cfg_;
  std::vector<std::vector<double>> cumulative_;
  std::vector<double> exit_level_;
};

} // namespace detail

// Euler-Maruyama for dX = a dt + sqrt(2 mu) dW on each edge, a the process
// drift sampled on the grid and interpolated linearly. A step that leaves
// the edge through a vertex re-enters a randomly chosen incident edge,
// carrying the overshoot along. routing_hits counts, per vertex, the edge on
// which each excursion first reaches a quarter of the shortest incident
// length; its frequencies estimate the routing weights p.
inline OccupationHistogram simulate_paths(const DiscreteNetwork& disc, const EdgeField& drift, const SimConfig& cfg) {
  cfg.validate();
  if (!drift.matches(disc)) throw ModelError("drift does not match the grid");
  const auto& net = disc.network();
  for (const auto& e : net.edges()) {
    if (!(std::sqrt(2.0 * e.mu * cfg.dt) < e.length / 4.0)) {
      throw ModelError("dt too large for edge " + std::to_string(e.id) + ": step size must stay below length/4");
    }
  }

  const auto paths = static_cast<std::uint64_t>(cfg.paths);
  const auto per_path = static_cast<std::uint64_t>(std::ceil(cfg.samples / static_cast<double>(paths)));
  const auto steps = static_cast<std::uint64_t>(std::ceil(static_cast<double>(per_path) / (1.0 - cfg.burn_in)));
  const std::uint64_t burn = steps - per_path;

  detail::PathSimulator sim(disc, drift, cfg);
  std::vector<detail::PathCounts> results(paths);
  const auto workers = std::min<std::uint64_t>(static_cast<std::uint64_t>(cfg.threads), paths);
  if (workers <= 1) {
    for (std::uint64_t p = 0; p < paths; ++p) results[p] = sim.run(p, steps, burn);
  } else {
    std::vector<std::thread> pool;
    for (std::uint64_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::uint64_t p = w; p < paths; p += workers) results[p] = sim.run(p, steps, burn);
      });
    }
    for (auto& t : pool) t.join();
  }

  OccupationHistogram hist;
  std::vector<std::vector<std::uint64_t>> counts(net.num_edges(), std::vector<std::uint64_t>(static_cast<std::size_t>(cfg.bins), 0));
  for (const auto& v : net.vertices()) hist.routing_hits[v.id].assign(v.incident_edges.size(), 0);
  for (const auto& r : results) {
    hist.samples += r.samples;
    for (std::size_t a = 0; a < counts.size(); ++a)
      for (std::size_t b = 0; b < counts[a].size(); ++b) counts[a][b] += r.bins[a][b];
    for (std::size_t v = 0; v < r.hits.size(); ++v)
      for (std::size_t k = 0; k < r.hits[v].size(); ++k) hist.routing_hits[static_cast<VertexId>(v)][k] += r.hits[v][k];
  }
  const double total = static_cast<double>(hist.samples);
  for (std::size_t a = 0; a < counts.size(); ++a) {
    const double w = net.edge(static_cast<EdgeId>(a)).length / cfg.bins;
    hist.width.push_back(w);
    std::vector<double> d;
    for (auto c : counts[a]) d.push_back(static_cast<double>(c) / (total * w));
    hist.density.push_back(std::move(d));
  }
  return hist;
}

// The controlled process moves with a* = -dH/dp(x, v'); b is the HJB drift.
inline EdgeField feedback_drift(const EdgeField& b) {
  EdgeField a = b;
  for (auto& row : a.values)
    for (double& x : row) x = -x;
  return a;
}

namespace detail {

// Exact integral over [x0, x1] of the piecewise linear interpolant of the
// node values f(a, 0..n).
inline double integrate_piecewise_linear(const DiscreteNetwork& disc, const EdgeField& f, EdgeId a, double x0, double x1) {
  const double h = disc.step(a);
  const int n = disc.intervals(a);
  double s = 0.0;
  int k = std::clamp(static_cast<int>(x0 / h), 0, n - 1);
  for (; k < n; ++k) {
    const double c0 = k * h, c1 = (k + 1) * h;
    const double lo = std::max(x0, c0), hi = std::min(x1, c1);
    if (hi <= lo) {
      if (c0 >= x1) break;
      continue;
    }
    auto val = [&](double x) { return f(a, k) + (f(a, k + 1) - f(a, k)) * (x - c0) / h; };
    s += 0.5 * (val(lo) + val(hi)) * (hi - lo);
  }
  return s;
}

} // namespace detail

// Bin averages of a W-type density, in the histogram layout.
inline OccupationHistogram bin_density(const GridFunction& m, int bins) {
  if (bins < 1) throw ModelError("bins must be at least 1");
  const auto& disc = m.disc();
  const EdgeField f = m.edge_field();
  OccupationHistogram hist;
  for (std::size_t ua = 0; ua < disc.num_edges(); ++ua) {
    const auto a = static_cast<EdgeId>(ua);
    const double w = disc.network().edge(a).length / bins;
    hist.width.push_back(w);
    std::vector<double> d;
    for (int b = 0; b < bins; ++b) d.push_back(detail::integrate_piecewise_linear(disc, f, a, b * w, (b + 1) * w) / w);
    hist.density.push_back(std::move(d));
  }
  return hist;
}

// Total variation distance 1/2 sum |hist mass - integral of m| over bins.
inline double compare_density(const OccupationHistogram& hist, const GridFunction& m) {
  const auto& disc = m.disc();
  if (hist.density.size() != disc.num_edges()) throw ModelError("histogram and density live on different networks");
  const EdgeField f = m.edge_field();
  double tv = 0.0;
  for (std::size_t ua = 0; ua < disc.num_edges(); ++ua) {
    const auto a = static_cast<EdgeId>(ua);
    const double w = hist.width[ua];
    if (std::abs(w * static_cast<double>(hist.density[ua].size()) - disc.network().edge(a).length) > 1e-9) {
      throw ModelError("histogram and density live on different networks");
    }
    for (std::size_t b = 0; b < hist.density[ua].size(); ++b) {
      const double exact = detail::integrate_piecewise_linear(disc, f, a, static_cast<double>(b) * w, static_cast<double>(b + 1) * w);
      tv += std::abs(hist.density[ua][b] * w - exact);
    }
  }
  return 0.5 * tv;
}

inline void write_histogram_csv(std::ostream& os, const OccupationHistogram& hist) {
  os.precision(12);
  os << "edge,bin_center,density\n";
  for (std::size_t a = 0; a < hist.density.size(); ++a)
    for (std::size_t b = 0; b < hist.density[a].size(); ++b)
      os << a << ',' << (static_cast<double>(b) + 0.5) * hist.width[a] << ',' << hist.density[a][b] << '\n';
}

} // namespace netmfg
