#include "doctest.h"
#include "hbf/errors.hpp"
#include "hbf/graph.hpp"
#include "support.hpp"

using namespace hbf;
using hbf::testing::small_scenario;

TEST_CASE("single link graph") {
  const auto sc = small_scenario(1, 1, 8, 2);
  const auto g = build_graph(gen_sample(sc, 1), sc);
  CHECK(g.num_bs() == 1);
  CHECK(g.num_ues() == 1);
  REQUIRE(g.edges.size() == 1);
  CHECK(g.edges[0].kind == EdgeKind::desired);
}

TEST_CASE("complete bipartite layout and feature widths") {
  auto sc = small_scenario(2, 2, 16, 4);
  sc.max_power = {1.5, 0.5};
  const auto s = gen_sample(sc, 2);
  const auto g = build_graph(s, sc);
  CHECK(g.num_bs() == 2);
  CHECK(g.num_ues() == 4);
  REQUIRE(g.edges.size() == 8);
  int desired = 0;
  for (const auto& e : g.edges) desired += e.kind == EdgeKind::desired;
  CHECK(desired == 4);
  CHECK(g.bs_nodes[0].feature == std::vector<double>{1.5});
  CHECK(g.bs_nodes[1].feature == std::vector<double>{0.5});
  for (int u = 0; u < 4; ++u) {
    const auto& f = g.ue_nodes[u].feature;
    REQUIRE(f.size() == 1 + 2 * 4);
    CHECK(f[0] == sc.noise_power);
    for (int n = 0; n < 4; ++n) {
      CHECK(f[1 + 2 * n] == s.sub6(u, n).real());
      CHECK(f[2 + 2 * n] == s.sub6(u, n).imag());
    }
  }
  for (int k = 0; k < 2; ++k) {
    for (int u = 0; u < 4; ++u) {
      const auto& e = g.edge(k, u);
      CHECK(e.bs == k);
      CHECK(e.ue == u);
      CHECK((e.kind == EdgeKind::desired) == (g.serving[u] == k));
      REQUIRE(e.feature.size() == 8);
      for (int j = 0; j < 4; ++j) {
        CHECK(e.feature[2 * j] == s.partial(u, k)[j].real());
        CHECK(e.feature[2 * j + 1] == s.partial(u, k)[j].imag());
      }
    }
  }
}

TEST_CASE("neighbourhood sizes") {
  auto sc = small_scenario(3, 2, 8, 2);
  sc.ues_per_bs = {1, 3, 2};
  const auto g = build_graph(gen_sample(sc, 3), sc);
  const int U = sc.total_ues();
  for (int k = 0; k < 3; ++k) {
    const auto d = neighbors(g, {NodeType::bs, k}, NodeType::ue, EdgeKind::desired);
    const auto i = neighbors(g, {NodeType::bs, k}, NodeType::ue, EdgeKind::interfering);
    CHECK(static_cast<int>(d.size()) == sc.ues_per_bs[k]);
    CHECK(static_cast<int>(i.size()) == U - sc.ues_per_bs[k]);
    for (std::size_t j = 1; j < i.size(); ++j) CHECK(i[j - 1].index < i[j].index);
  }
  for (int u = 0; u < U; ++u) {
    const auto d = neighbors(g, {NodeType::ue, u}, NodeType::bs, EdgeKind::desired);
    REQUIRE(d.size() == 1);
    CHECK(d[0].index == sc.serving_bs(u));
    CHECK(neighbors(g, {NodeType::ue, u}, NodeType::bs, EdgeKind::interfering).size() == 2);
  }
  CHECK_THROWS_AS(neighbors(g, {NodeType::bs, 3}, NodeType::ue, EdgeKind::desired), LookupError);
  CHECK_THROWS_AS(neighbors(g, {NodeType::ue, -1}, NodeType::bs, EdgeKind::desired), LookupError);
}

TEST_CASE("build_graph is pure and checks dimensions") {
  const auto sc = small_scenario(2, 2, 8, 4);
  const auto s = gen_sample(sc, 4);
  const auto a = build_graph(s, sc), b = build_graph(s, sc);
  for (std::size_t e = 0; e < a.edges.size(); ++e) CHECK(a.edges[e].feature == b.edges[e].feature);
  for (std::size_t u = 0; u < a.ue_nodes.size(); ++u) CHECK(a.ue_nodes[u].feature == b.ue_nodes[u].feature);

  auto other = sc;
  other.ues_per_bs = {2, 3};
  other.max_power = {1, 1};
  CHECK_THROWS_AS(build_graph(s, other), DimensionError);
}
