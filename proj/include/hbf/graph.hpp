#pragma once

#include <span>
#include <vector>

#include "hbf/channel.hpp"

namespace hbf {

enum class NodeType { bs, ue };
enum class EdgeKind { desired, interfering };

struct BsNode {
  std::vector<double> feature;  // [P_k]
};

struct UeNode {
  std::vector<double> feature;  // [sigma2, re/im-interleaved sub-6GHz CSI]
};

// Directed BS -> UE link; feature is the interleaved partial mmWave CSI.
struct Edge {
  int bs = 0;
  int ue = 0;
  EdgeKind kind = EdgeKind::interfering;
  std::vector<double> feature;
};

// Complete bipartite BS/UE graph of one channel sample. Edges are ordered
// by (bs, ue); edge (k, u) lives at index k * num_ues + u.
struct HeteroGraph {
  std::vector<BsNode> bs_nodes;
  std::vector<UeNode> ue_nodes;
  std::vector<Edge> edges;
  std::vector<int> serving;  // UE -> serving BS

  int num_bs() const { return static_cast<int>(bs_nodes.size()); }
  int num_ues() const { return static_cast<int>(ue_nodes.size()); }
  const Edge& edge(int bs, int ue) const { return edges[static_cast<std::size_t>(bs * num_ues() + ue)]; }
  int edge_width() const { return edges.empty() ? 0 : static_cast<int>(edges.front().feature.size()); }
};

struct NodeRef {
  NodeType type;
  int index;
};

struct Neighbor {
  int index;
  std::span<const double> edge_feature;
};

HeteroGraph build_graph(const ChannelSample& sample, const Scenario& scenario);

// N_{t,w}(node) in ascending neighbour index.
std::vector<Neighbor> neighbors(const HeteroGraph& g, NodeRef node, NodeType type, EdgeKind kind);

// Appends (re, im) of every entry of z to out.
void interleave(const Eigen::VectorXcd& z, std::vector<double>& out);

}  // namespace hbf
