#include "vtrace/skeleton.hpp"

#include <algorithm>
#include <numeric>

namespace vtrace {

std::size_t SkeletonGraph::edge_count() const {
  std::size_t n = 0;
  for (const auto& node : nodes) n += (node.parent >= 0);
  return n + chords.size();
}

GraphIndex build_index(const SkeletonGraph& graph) {
  GraphIndex idx;
  idx.id_to_idx.reserve(graph.nodes.size());
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    const auto [it, inserted] = idx.id_to_idx.emplace(graph.nodes[i].id, int(i));
    (void)it;
    if (!inserted)
      throw GraphError("duplicate node id " + std::to_string(graph.nodes[i].id));
  }
  idx.parent_idx.assign(graph.nodes.size(), -1);
  idx.children.assign(graph.nodes.size(), {});
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    const int pid = graph.nodes[i].parent;
    if (pid < 0) {
      idx.roots.push_back(int(i));
      continue;
    }
    const int p = idx.idx_of(pid);
    if (p < 0)
      throw GraphError("dangling parent id " + std::to_string(pid) + " on node " +
                       std::to_string(graph.nodes[i].id));
    idx.parent_idx[i] = p;
    idx.children[p].push_back(int(i));
  }
  auto by_id = [&](int a, int b) { return graph.nodes[a].id < graph.nodes[b].id; };
  for (auto& ch : idx.children) std::sort(ch.begin(), ch.end(), by_id);
  std::sort(idx.roots.begin(), idx.roots.end(), by_id);
  return idx;
}

namespace {

// Walks every parent chain once; throws on a loop.
void check_acyclic(const SkeletonGraph& graph, const GraphIndex& idx) {
  // 0 = unvisited, 1 = on current chain, 2 = done
  std::vector<char> state(graph.nodes.size(), 0);
  std::vector<int> chain;
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    if (state[i] != 0) continue;
    chain.clear();
    int cur = int(i);
    while (cur >= 0 && state[cur] == 0) {
      state[cur] = 1;
      chain.push_back(cur);
      cur = idx.parent_idx[cur];
    }
    if (cur >= 0 && state[cur] == 1)
      throw GraphError("cycle in parent chain at node id " +
                       std::to_string(graph.nodes[cur].id));
    for (int v : chain) state[v] = 2;
  }
}

}  // namespace

void validate_forest(const SkeletonGraph& graph) {
  const GraphIndex idx = build_index(graph);
  check_acyclic(graph, idx);
  for (const auto& node : graph.nodes)
    if (!(node.radius > 0.0))
      throw GraphError("non-positive radius on node id " + std::to_string(node.id));
}

SkeletonGraph classify_nodes(const SkeletonGraph& graph) {
  const GraphIndex idx = build_index(graph);
  check_acyclic(graph, idx);
  SkeletonGraph out = graph;
  for (std::size_t i = 0; i < out.nodes.size(); ++i) {
    auto& node = out.nodes[i];
    if (node.parent < 0)
      node.cls = NodeClass::root;
    else if (idx.children[i].size() >= 2)
      node.cls = NodeClass::branching;
    else if (idx.children[i].empty())
      node.cls = NodeClass::leaf;
    else
      node.cls = NodeClass::intermediate;
  }
  return out;
}

std::pair<int, int> betti_numbers(const SkeletonGraph& graph) {
  const int n = int(graph.nodes.size());
  if (n == 0) return {0, 0};
  const GraphIndex idx = build_index(graph);

  std::vector<int> uf(n);
  std::iota(uf.begin(), uf.end(), 0);
  auto find = [&](int a) {
    while (uf[a] != a) {
      uf[a] = uf[uf[a]];
      a = uf[a];
    }
    return a;
  };
  auto join = [&](int a, int b) { uf[find(a)] = find(b); };

  std::size_t edges = 0;
  for (int i = 0; i < n; ++i)
    if (idx.parent_idx[i] >= 0) {
      join(i, idx.parent_idx[i]);
      ++edges;
    }
  for (const auto& [a, b] : graph.chords) {
    const int ia = idx.idx_of(a), ib = idx.idx_of(b);
    if (ia < 0 || ib < 0)
      throw GraphError("chord references unknown node id");
    join(ia, ib);
    ++edges;
  }

  int beta0 = 0;
  for (int i = 0; i < n; ++i) beta0 += (find(i) == i);
  const int beta1 = int(edges) - n + beta0;
  return {beta0, beta1};
}

BranchDecomposition branch_decomposition(const SkeletonGraph& graph) {
  const GraphIndex idx = build_index(graph);
  check_acyclic(graph, idx);

  auto topological = [&](int i) {
    return idx.parent_idx[i] < 0 || idx.children[i].size() != 1;
  };

  BranchDecomposition out;
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    if (!topological(int(i))) continue;
    for (int child : idx.children[i]) {
      std::vector<int> path{graph.nodes[i].id};
      int cur = child;
      while (!topological(cur)) {
        path.push_back(graph.nodes[cur].id);
        cur = idx.children[cur][0];
      }
      path.push_back(graph.nodes[cur].id);
      out.branches.push_back(std::move(path));
    }
  }
  return out;
}

double branch_length(const SkeletonGraph& graph, const GraphIndex& index,
                     const std::vector<int>& branch) {
  double len = 0.0;
  for (std::size_t i = 1; i < branch.size(); ++i) {
    const auto& a = graph.nodes[index.idx_of(branch[i - 1])];
    const auto& b = graph.nodes[index.idx_of(branch[i])];
    len += distance(a.pos, b.pos);
  }
  return len;
}

}  // namespace vtrace
