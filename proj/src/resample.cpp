#include "vtrace/resample.hpp"

#include <algorithm>
#include <cmath>

namespace vtrace {

namespace {

struct PolylineSample {
  Vec3 pos;
  double radius;
};

// Position/radius at arc length s along the polyline through the given nodes.
PolylineSample sample_at(const SkeletonGraph& g, const GraphIndex& idx,
                         const std::vector<int>& path, const std::vector<double>& cum,
                         double s) {
  std::size_t seg = 1;
  while (seg + 1 < cum.size() && cum[seg] < s) ++seg;
  const auto& a = g.nodes[idx.idx_of(path[seg - 1])];
  const auto& b = g.nodes[idx.idx_of(path[seg])];
  const double seg_len = cum[seg] - cum[seg - 1];
  const double t = seg_len > 0.0 ? (s - cum[seg - 1]) / seg_len : 0.0;
  return {a.pos + (b.pos - a.pos) * t, a.radius + (b.radius - a.radius) * t};
}

}  // namespace

SkeletonGraph resample(const SkeletonGraph& graph, double step) {
  if (step <= 0.0) throw GraphError("resample step must be positive");
  if (graph.empty()) return graph;

  const GraphIndex idx = build_index(graph);
  const BranchDecomposition decomp = branch_decomposition(graph);

  SkeletonGraph out;
  out.fragment_roots = graph.fragment_roots;

  // Topological endpoints keep their identity; interior nodes are re-placed.
  std::vector<char> keep(graph.nodes.size(), 0);
  for (const auto& br : decomp.branches) {
    keep[idx.idx_of(br.front())] = 1;
    keep[idx.idx_of(br.back())] = 1;
  }
  // Isolated nodes have no branch but survive as-is.
  for (std::size_t i = 0; i < graph.nodes.size(); ++i)
    if (idx.parent_idx[i] < 0 && idx.children[i].empty()) keep[i] = 1;

  int next_id = 0;
  for (const auto& node : graph.nodes) next_id = std::max(next_id, node.id + 1);

  std::unordered_map<int, std::size_t> out_pos;
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    if (!keep[i]) continue;
    SkeletonNode n = graph.nodes[i];
    if (n.parent >= 0) n.parent = -1;  // reconnected per-branch below
    out_pos.emplace(n.id, out.nodes.size());
    out.nodes.push_back(n);
  }

  for (const auto& br : decomp.branches) {
    std::vector<double> cum(br.size(), 0.0);
    for (std::size_t k = 1; k < br.size(); ++k) {
      const auto& a = graph.nodes[idx.idx_of(br[k - 1])];
      const auto& b = graph.nodes[idx.idx_of(br[k])];
      cum[k] = cum[k - 1] + distance(a.pos, b.pos);
    }
    const double total = cum.back();

    int prev_id = br.front();
    const double eps = 1e-9 * std::max(1.0, total);
    for (int k = 1; k * step < total - eps; ++k) {
      const PolylineSample ps = sample_at(graph, idx, br, cum, k * step);
      SkeletonNode n;
      n.id = next_id++;
      n.pos = ps.pos;
      n.radius = ps.radius;
      n.cls = NodeClass::intermediate;
      n.parent = prev_id;
      out.nodes.push_back(n);
      prev_id = n.id;
    }
    out.nodes[out_pos.at(br.back())].parent = prev_id;
  }

  return classify_nodes(out);
}

}  // namespace vtrace
