#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "fixtures.hpp"
#include "netmfg/simulate.hpp"
#include "netmfg/solvers.hpp"

using namespace netmfg;

TEST(Simulate, UniformOnSingleEdge) {
  const auto disc = build_grids(fx::single_edge(), 0.01);
  const auto hist = simulate_paths(disc, EdgeField(disc), SimConfig{});
  EXPECT_EQ(hist.samples, 10000000u);
  EXPECT_NEAR(hist.mass(), 1.0, 1e-12);
  EXPECT_LT(compare_density(hist, constant(disc, Convention::W, 1.0)), 0.02);
}

TEST(Simulate, StarEdgeMasses) {
  const auto disc = build_grids(fx::star3(), 0.01);
  const auto hist = simulate_paths(disc, EdgeField(disc), SimConfig{});
  const double expect[3] = {4.0 / 7, 2.0 / 7, 1.0 / 7};
  for (std::size_t a = 0; a < 3; ++a) {
    double mass = 0.0;
    for (double d : hist.density[a]) mass += d * hist.width[a];
    EXPECT_NEAR(mass, expect[a], 0.01) << a;
  }
  // the histogram shows the jump at the center
  EXPECT_GT(hist.density[0].front(), 1.5 * hist.density[1].front());
}

TEST(Simulate, RoutingChiSquare) {
  const auto disc = build_grids(fx::star3(), 0.01);
  SimConfig cfg;
  cfg.dt = 1e-3;
  cfg.samples = 2e7;
  const auto hist = simulate_paths(disc, EdgeField(disc), cfg);
  const auto& hits = hist.routing_hits.at(0);
  double n = 0.0;
  for (auto h : hits) n += static_cast<double>(h);
  ASSERT_GE(n, 1e5);
  const auto& p = disc.network().routing_row(0);
  double chi2 = 0.0;
  for (std::size_t k = 0; k < hits.size(); ++k) {
    const double e = n * p[k];
    chi2 += (static_cast<double>(hits[k]) - e) * (static_cast<double>(hits[k]) - e) / e;
  }
  EXPECT_LT(chi2, 9.21); // 1% critical value, 2 degrees of freedom
}

TEST(Simulate, DriftedSingleEdge) {
  // HJB drift b = 1 means the process moves with a = -1 and m ~ exp(-x)
  const auto disc = build_grids(fx::single_edge(), 0.01);
  const DriftField b(disc, 1.0);
  const auto m = solve_stationary_fp(disc, b);
  const auto hist = simulate_paths(disc, feedback_drift(b), SimConfig{});
  EXPECT_LT(compare_density(hist, m), 0.02);
  EXPECT_GT(hist.density[0].front(), 2.0 * hist.density[0].back());
}

TEST(Simulate, Reproducible) {
  const auto disc = build_grids(fx::star3(), 0.05);
  SimConfig cfg;
  cfg.samples = 2e5;
  const auto a = simulate_paths(disc, EdgeField(disc), cfg);
  const auto b = simulate_paths(disc, EdgeField(disc), cfg);
  cfg.threads = 3;
  const auto c = simulate_paths(disc, EdgeField(disc), cfg);
  EXPECT_EQ(a.density, b.density);
  EXPECT_EQ(a.density, c.density);
  EXPECT_EQ(a.routing_hits, c.routing_hits);
  cfg.seed = 2;
  EXPECT_NE(a.density, simulate_paths(disc, EdgeField(disc), cfg).density);
}

TEST(Simulate, Preconditions) {
  const auto disc = build_grids(fx::star3(), 0.05);
  SimConfig cfg;
  cfg.dt = 0.02;
  EXPECT_THROW(simulate_paths(disc, EdgeField(disc), cfg), ModelError);
  cfg = SimConfig{};
  cfg.burn_in = 1.0;
  EXPECT_THROW(simulate_paths(disc, EdgeField(disc), cfg), ModelError);
  const auto other = build_grids(fx::single_edge(), 0.05);
  EXPECT_THROW(simulate_paths(disc, EdgeField(other), SimConfig{}), ModelError);
  EXPECT_THROW(build_network({{0, 1, 1.0, 1.0}, {0, 2, 1.0, 1.0}, {0, 3, 1.0, 1.0}}, {{0, {1.0, 0.0, 0.0}}}), ModelError);
}

TEST(CompareDensity, ExactCases) {
  const auto disc = build_grids(fx::star3(), 0.03);
  const auto m = solve_stationary_fp(disc, sample(disc, [](EdgeId a, double y) { return std::sin(3 * y + a); }));
  EXPECT_LE(compare_density(bin_density(m, 17), m), 1e-14);
  const auto u = solve_stationary_fp(disc, DriftField(disc));
  EXPECT_LE(compare_density(bin_density(u, 50), u), 1e-14);
  const double tv = compare_density(bin_density(m, 20), u);
  EXPECT_GT(tv, 0.0);
  EXPECT_LE(tv, 1.0);
  EXPECT_NEAR(tv, compare_density(bin_density(u, 20), m), 1e-3);
}

TEST(CompareDensity, CsvExport) {
  const auto disc = build_grids(fx::single_edge(2.0), 0.1);
  std::ostringstream os;
  write_histogram_csv(os, bin_density(constant(disc, Convention::W, 0.5), 4));
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "edge,bin_center,density");
  std::getline(is, line);
  EXPECT_EQ(line, "0,0.25,0.5");
}
