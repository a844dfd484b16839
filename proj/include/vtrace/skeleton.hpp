#pragma once

#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vtrace/vec3.hpp"

namespace vtrace {

struct GraphError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Semantic node classes; values double as the on-disk class codes.
enum class NodeClass : int { root = 1, intermediate = 2, branching = 3, leaf = 4 };

struct SkeletonNode {
  int id = 0;             // unique within a graph
  Vec3 pos;               // voxel units, (z, y, x)
  double radius = 1.0;    // > 0
  NodeClass cls = NodeClass::intermediate;
  int parent = -1;        // parent node id, -1 for roots
};

// Rooted forest. Edges are the child->parent links carried by the nodes.
// `chords` holds extra undirected diagnostic edges (id pairs) that only
// betti_numbers accounts for; valid forests have none.
struct SkeletonGraph {
  std::vector<SkeletonNode> nodes;
  std::vector<std::pair<int, int>> chords;
  // Provisional roots of fragments traced without a supplied root; these
  // trees are candidates for the split-merging postprocess.
  std::vector<int> fragment_roots;

  bool empty() const { return nodes.empty(); }
  std::size_t edge_count() const;
};

// Index structures rebuilt from a graph (ids are arbitrary ints).
struct GraphIndex {
  std::unordered_map<int, int> id_to_idx;
  std::vector<int> parent_idx;              // -1 for roots
  std::vector<std::vector<int>> children;   // sorted by child id
  std::vector<int> roots;                   // node indices, ascending id

  int idx_of(int id) const {
    auto it = id_to_idx.find(id);
    return it == id_to_idx.end() ? -1 : it->second;
  }
};

// Builds the index; throws GraphError on duplicate ids or dangling parents.
GraphIndex build_index(const SkeletonGraph& graph);

// Throws GraphError if the parent links contain a cycle or a radius is <= 0.
void validate_forest(const SkeletonGraph& graph);

// Reassigns classes from the degree rules: parentless -> root, else >= 2
// children -> branching, 0 children -> leaf, else intermediate.
SkeletonGraph classify_nodes(const SkeletonGraph& graph);

// (beta0, beta1) of the undirected graph: components via union-find over the
// parent edges plus chords; beta1 = E - V + beta0.
std::pair<int, int> betti_numbers(const SkeletonGraph& graph);

// Maximal paths whose interior nodes have exactly one child and a parent.
// Each branch is a node-id path from its rootward topological endpoint to the
// next topological node; branches partition the edge set.
struct BranchDecomposition {
  std::vector<std::vector<int>> branches;
};

BranchDecomposition branch_decomposition(const SkeletonGraph& graph);

// Arc length of the polyline through a branch's nodes.
double branch_length(const SkeletonGraph& graph, const GraphIndex& index,
                     const std::vector<int>& branch);

}  // namespace vtrace
