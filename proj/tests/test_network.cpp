#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "netmfg/network.hpp"

using namespace netmfg;

TEST(Network, SingleEdgeSignsAndGamma) {
  const auto net = fx::single_edge();
  EXPECT_EQ(net.num_vertices(), 2u);
  EXPECT_DOUBLE_EQ(net.gamma(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(net.gamma(1, 0), 1.0);
  EXPECT_EQ(net.sign(0, 0), -1);
  EXPECT_EQ(net.sign(1, 0), +1);
  EXPECT_TRUE(net.vertex(0).is_boundary);
}

TEST(Network, StarGamma) {
  const auto net = fx::star3();
  EXPECT_DOUBLE_EQ(net.gamma(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(net.gamma(0, 1), 0.25);
  EXPECT_DOUBLE_EQ(net.gamma(0, 2), 0.125);
  EXPECT_FALSE(net.vertex(0).is_boundary);
  EXPECT_TRUE(net.vertex(3).is_boundary);
  EXPECT_DOUBLE_EQ(net.gamma(3, 2), 0.5); // boundary: p = 1, mu = 2
}

TEST(Network, RejectsBadRouting) {
  try {
    build_network({{0, 1, 1, 1}, {0, 2, 1, 1}, {0, 3, 1, 1}}, {{0, {0.5, 0.25, 0.2}}});
    FAIL() << "expected an error";
  } catch (const ModelError& e) {
    EXPECT_NE(std::string(e.what()).find("routing weights sum to 0.95"), std::string::npos) << e.what();
  }
  EXPECT_THROW(build_network({{0, 1, 1, 1}, {0, 2, 1, 1}, {0, 3, 1, 1}}, {{0, {1.0, 0.0, 0.0}}}), ModelError);
}

TEST(Network, RejectsInvalidInput) {
  EXPECT_THROW(build_network({{0, 1, -1.0, 1.0}}), ModelError);
  EXPECT_THROW(build_network({{0, 1, 1.0, 0.0}}), ModelError);
  EXPECT_THROW(build_network({{1, 1, 1.0, 1.0}}), ModelError);
  EXPECT_THROW(build_network({{0, 1, 1.0, 1.0}, {2, 3, 1.0, 1.0}}), ModelError); // disconnected
  EXPECT_THROW(build_network({{0, 1, 1.0, 1.0}, {1, 0, 1.0, 1.0}}), ModelError); // parallel edges
}

TEST(Network, LowToHighOrientation) {
  const auto net = build_network({{3, 1, 1.0, 1.0}, {1, 0, 1.0, 1.0}, {2, 3, 1.0, 1.0}});
  for (const auto& e : net.edges()) EXPECT_LT(e.tail, e.head);
}

TEST(Network, InvariantsOnRandomNetworks) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const auto net = fx::random_network(rng);
    for (const auto& v : net.vertices()) {
      double sp = 0.0, sg = 0.0;
      for (EdgeId e : v.incident_edges) {
        sp += net.routing(v.id, e);
        sg += net.gamma(v.id, e) * net.edge(e).mu;
      }
      EXPECT_NEAR(sp, 1.0, 1e-12);
      EXPECT_NEAR(sp, sg, 1e-15);
      EXPECT_EQ(v.is_boundary, v.incident_edges.size() == 1);
    }
    for (const auto& e : net.edges()) EXPECT_EQ(net.sign(e.tail, e.id) + net.sign(e.head, e.id), 0);
  }
}

namespace {

// 4 vertices, 4 edges oriented low to high: 1-2, 1-3, 1-4, 3-4 (0-based here).
Network figure_network() {
  return build_network({{0, 1, 1.0, 1.0}, {0, 2, 1.0, 1.0}, {0, 3, 1.0, 1.0}, {2, 3, 1.0, 1.0}});
}

} // namespace

TEST(OrientationSplit, FigureExampleAddsOneArtificialVertex) {
  const auto net = figure_network();
  EXPECT_FALSE(net.is_all_in_all_out());
  const auto sp = orientation_split(net);
  EXPECT_EQ(sp.network.num_vertices(), 5u);
  EXPECT_EQ(sp.network.num_edges(), 5u);
  ASSERT_EQ(sp.split_edges.size(), 1u);
  EXPECT_EQ(sp.split_edges[0], 1); // the edge between the first and third vertex
  EXPECT_TRUE(sp.network.is_all_in_all_out());
  EXPECT_TRUE(sp.network.vertex(4).is_artificial);
  EXPECT_DOUBLE_EQ(sp.network.routing(4, sp.network.vertex(4).incident_edges[0]), 0.5);
}

TEST(OrientationSplit, CompliantNetworkUnchanged) {
  const auto net = fx::single_edge();
  const auto sp = orientation_split(net);
  EXPECT_TRUE(sp.split_edges.empty());
  EXPECT_EQ(sp.network.num_edges(), 1u);
  EXPECT_EQ(sp.network.edge(0).tail, 0);
  EXPECT_FALSE(sp.pieces[0].reversed);
}

TEST(OrientationSplit, TriangleNeedsASplit) {
  const auto net = build_network({{0, 1, 1.0, 1.0}, {1, 2, 2.0, 1.5}, {0, 2, 0.5, 1.0}});
  const auto sp = orientation_split(net);
  EXPECT_GE(sp.split_edges.size(), 1u);
  // exhaustive all-in/all-out check
  for (const auto& v : sp.network.vertices()) {
    int tails = 0;
    for (EdgeId e : v.incident_edges) tails += sp.network.edge(e).tail == v.id;
    EXPECT_TRUE(tails == 0 || tails == static_cast<int>(v.incident_edges.size())) << "vertex " << v.id;
  }
}

TEST(OrientationSplit, PropertiesOnRandomNetworks) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto net = fx::random_network(rng, 9);
    const auto once = orientation_split(net);
    EXPECT_TRUE(once.network.is_all_in_all_out());
    EXPECT_NEAR(once.network.total_length(), net.total_length(), 1e-12);
    const auto twice = orientation_split(once.network);
    EXPECT_TRUE(twice.split_edges.empty());
    EXPECT_EQ(twice.network.num_edges(), once.network.num_edges());
    for (const auto& p : twice.pieces) EXPECT_FALSE(p.reversed);
    // pieces tile the original edges and keep mu and routing
    std::vector<double> covered(net.num_edges(), 0.0);
    for (std::size_t k = 0; k < once.pieces.size(); ++k) {
      const auto& piece = once.pieces[k];
      const auto& e = once.network.edge(static_cast<EdgeId>(k));
      covered[static_cast<std::size_t>(piece.original)] += e.length;
      EXPECT_EQ(e.mu, net.edge(piece.original).mu);
      const double ya = piece.to_original(0.0), yb = piece.to_original(e.length);
      EXPECT_GE(std::min(ya, yb), -1e-12);
      EXPECT_LE(std::max(ya, yb), net.edge(piece.original).length + 1e-12);
      for (VertexId v : {e.tail, e.head}) {
        const VertexId orig = once.original_vertex[static_cast<std::size_t>(v)];
        if (orig >= 0) {
          EXPECT_DOUBLE_EQ(once.network.routing(v, e.id), net.routing(orig, piece.original));
        }
      }
    }
    for (std::size_t a = 0; a < covered.size(); ++a) EXPECT_NEAR(covered[a], net.edge(static_cast<EdgeId>(a)).length, 1e-12);
  }
}

TEST(EdgePoint, Endpoints) {
  const auto net = fx::star3();
  EXPECT_EQ(edge_point(net, 1, 0.0).vertex, 0);
  EXPECT_EQ(edge_point(net, 1, 1.0).vertex, 2);
  EXPECT_FALSE(edge_point(net, 1, 0.5).vertex.has_value());
  EXPECT_THROW(edge_point(net, 1, 1.5), ModelError);
  EXPECT_THROW(edge_point(net, 1, -0.1), ModelError);
}
