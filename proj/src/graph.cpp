#include "hbf/graph.hpp"

#include "hbf/errors.hpp"

namespace hbf {

void interleave(const Eigen::VectorXcd& z, std::vector<double>& out) {
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    out.push_back(z[i].real());
    out.push_back(z[i].imag());
  }
}

HeteroGraph build_graph(const ChannelSample& sample, const Scenario& scenario) {
  check_conforms(sample, scenario);
  const int K = scenario.num_bs, U = scenario.total_ues();
  HeteroGraph g;
  g.bs_nodes.resize(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) g.bs_nodes[static_cast<std::size_t>(k)].feature = {scenario.max_power[static_cast<std::size_t>(k)]};
  g.ue_nodes.resize(static_cast<std::size_t>(U));
  g.serving.resize(static_cast<std::size_t>(U));
  for (int u = 0; u < U; ++u) {
    auto& f = g.ue_nodes[static_cast<std::size_t>(u)].feature;
    f.reserve(static_cast<std::size_t>(1 + 2 * scenario.sub6_antennas));
    f.push_back(scenario.noise_power);
    interleave(sample.sub6.row(u).transpose(), f);
    g.serving[static_cast<std::size_t>(u)] = scenario.serving_bs(u);
  }
  g.edges.reserve(static_cast<std::size_t>(K * U));
  for (int k = 0; k < K; ++k) {
    for (int u = 0; u < U; ++u) {
      Edge e;
      e.bs = k;
      e.ue = u;
      e.kind = g.serving[static_cast<std::size_t>(u)] == k ? EdgeKind::desired : EdgeKind::interfering;
      interleave(sample.partial(u, k), e.feature);
      g.edges.push_back(std::move(e));
    }
  }
  return g;
}

std::vector<Neighbor> neighbors(const HeteroGraph& g, NodeRef node, NodeType type, EdgeKind kind) {
  std::vector<Neighbor> out;
  if (node.type == NodeType::bs) {
    if (node.index < 0 || node.index >= g.num_bs()) throw LookupError("unknown BS node");
    if (type != NodeType::ue) return out;  // bipartite: BS neighbours are UEs
    for (int u = 0; u < g.num_ues(); ++u) {
      const auto& e = g.edge(node.index, u);
      if (e.kind == kind) out.push_back({u, e.feature});
    }
  } else {
    if (node.index < 0 || node.index >= g.num_ues()) throw LookupError("unknown UE node");
    if (type != NodeType::bs) return out;
    for (int k = 0; k < g.num_bs(); ++k) {
      const auto& e = g.edge(k, node.index);
      if (e.kind == kind) out.push_back({k, e.feature});
    }
  }
  return out;
}

}  // namespace hbf
