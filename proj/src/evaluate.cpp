#include "vtrace/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <unordered_set>

#include "vtrace/hungarian.hpp"
#include "vtrace/resample.hpp"

namespace vtrace {

const char* strategy_name(MatchStrategy s) {
  switch (s) {
    case MatchStrategy::hierarchical: return "hierarchical";
    case MatchStrategy::greedy: return "greedy";
    case MatchStrategy::hungarian: return "hungarian";
  }
  return "unknown";
}

MatchStrategy parse_strategy(const std::string& name) {
  if (name == "hierarchical") return MatchStrategy::hierarchical;
  if (name == "greedy") return MatchStrategy::greedy;
  if (name == "hungarian") return MatchStrategy::hungarian;
  throw GraphError("unknown matching strategy: " + name);
}

namespace {

void check_classified(const SkeletonGraph& g, const GraphIndex& idx) {
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    NodeClass expect;
    if (idx.parent_idx[i] < 0)
      expect = NodeClass::root;
    else if (idx.children[i].size() >= 2)
      expect = NodeClass::branching;
    else if (idx.children[i].empty())
      expect = NodeClass::leaf;
    else
      expect = NodeClass::intermediate;
    if (g.nodes[i].cls != expect)
      throw GraphError("graph must be classified before matching (node id " +
                       std::to_string(g.nodes[i].id) + ")");
  }
}

// Root index per node.
std::vector<int> tree_roots(const SkeletonGraph& g, const GraphIndex& idx) {
  std::vector<int> root(g.nodes.size(), -1);
  for (int r : idx.roots) {
    std::vector<int> stack{r};
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      root[v] = r;
      for (int c : idx.children[v]) stack.push_back(c);
    }
  }
  return root;
}

// Preorder traversal with children in ascending id order.
std::vector<int> preorder(const GraphIndex& idx, int root) {
  std::vector<int> order, stack{root};
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    order.push_back(v);
    for (auto it = idx.children[v].rbegin(); it != idx.children[v].rend(); ++it)
      stack.push_back(*it);
  }
  return order;
}

class NodeHash {
 public:
  NodeHash(const SkeletonGraph& g, double cell) : graph_(g), cell_(std::max(cell, 1e-6)) {
    for (std::size_t i = 0; i < g.nodes.size(); ++i)
      cells_[key_of(g.nodes[i].pos)].push_back(int(i));
  }

  // Indices of nodes within `radius` of p (unordered).
  std::vector<int> query(const Vec3& p, double radius) const {
    std::vector<int> out;
    const int r = int(std::ceil(radius / cell_));
    const int cz = int(std::floor(p.z / cell_)), cy = int(std::floor(p.y / cell_)),
              cx = int(std::floor(p.x / cell_));
    for (int z = cz - r; z <= cz + r; ++z)
      for (int y = cy - r; y <= cy + r; ++y)
        for (int x = cx - r; x <= cx + r; ++x) {
          auto it = cells_.find(pack(z, y, x));
          if (it == cells_.end()) continue;
          for (int i : it->second)
            if (distance(graph_.nodes[i].pos, p) <= radius) out.push_back(i);
        }
    return out;
  }

 private:
  std::int64_t key_of(const Vec3& p) const {
    return pack(int(std::floor(p.z / cell_)), int(std::floor(p.y / cell_)),
                int(std::floor(p.x / cell_)));
  }
  static std::int64_t pack(int z, int y, int x) {
    return (std::int64_t(z) << 42) ^ (std::int64_t(y) << 21) ^ std::int64_t(x & 0x1FFFFF);
  }

  const SkeletonGraph& graph_;
  double cell_;
  std::unordered_map<std::int64_t, std::vector<int>> cells_;
};

struct MatchState {
  std::vector<int> gt_to_pred;  // node indices, -1 unmatched
  std::vector<int> pred_to_gt;
};

MatchResult finish(const SkeletonGraph& gt, const SkeletonGraph& pred,
                   const MatchState& st) {
  MatchResult out;
  for (std::size_t i = 0; i < st.gt_to_pred.size(); ++i) {
    if (st.gt_to_pred[i] >= 0)
      out.pairs.emplace(gt.nodes[i].id, pred.nodes[st.gt_to_pred[i]].id);
    else
      out.unmatched_gt.push_back(gt.nodes[i].id);
  }
  for (std::size_t j = 0; j < st.pred_to_gt.size(); ++j)
    if (st.pred_to_gt[j] < 0) out.unmatched_pred.push_back(pred.nodes[j].id);
  std::sort(out.unmatched_gt.begin(), out.unmatched_gt.end());
  std::sort(out.unmatched_pred.begin(), out.unmatched_pred.end());
  return out;
}

MatchState match_hierarchical_impl(const SkeletonGraph& gt, const GraphIndex& gidx,
                                   const SkeletonGraph& pred, const GraphIndex& pidx,
                                   double d_max) {
  const std::vector<int> gt_root = tree_roots(gt, gidx);
  MatchState st{std::vector<int>(gt.nodes.size(), -1),
                std::vector<int>(pred.nodes.size(), -1)};
  if (pred.nodes.empty() || gt.nodes.empty()) return st;

  NodeHash hash(pred, d_max);

  // Candidate lists: same class first, then the rest, each by distance.
  std::vector<std::vector<int>> cands(gt.nodes.size());
  for (std::size_t v = 0; v < gt.nodes.size(); ++v) {
    std::vector<int> near = hash.query(gt.nodes[v].pos, d_max);
    auto dist_of = [&](int w) { return distance(gt.nodes[v].pos, pred.nodes[w].pos); };
    std::sort(near.begin(), near.end(), [&](int a, int b) {
      const bool sa = pred.nodes[a].cls == gt.nodes[v].cls;
      const bool sb = pred.nodes[b].cls == gt.nodes[v].cls;
      if (sa != sb) return sa;
      const double da = dist_of(a), db = dist_of(b);
      if (da != db) return da < db;
      return pred.nodes[a].id < pred.nodes[b].id;
    });
    cands[v] = std::move(near);
  }

  // Root order: roots with a same-class candidate first, then by distance of
  // their closest candidate, then by id.
  std::vector<int> roots = gidx.roots;
  auto root_key = [&](int r) {
    bool has_same = false;
    double closest = std::numeric_limits<double>::infinity();
    for (int w : cands[r]) {
      has_same |= pred.nodes[w].cls == gt.nodes[r].cls;
      closest = std::min(closest, distance(gt.nodes[r].pos, pred.nodes[w].pos));
    }
    return std::tuple<int, double, int>(has_same ? 0 : 1, closest, gt.nodes[r].id);
  };
  std::sort(roots.begin(), roots.end(),
            [&](int a, int b) { return root_key(a) < root_key(b); });

  auto pred_parent_tree = [&](int w) {
    // GT tree that the parent of predicted node w is matched into, -1 if none.
    const int pw = pidx.parent_idx[w];
    if (pw < 0 || st.pred_to_gt[pw] < 0) return -1;
    return gt_root[st.pred_to_gt[pw]];
  };

  for (int r : roots) {
    const std::vector<int> order = preorder(gidx, r);
    const NodeClass passes[3][2] = {{NodeClass::root, NodeClass::root},
                                    {NodeClass::branching, NodeClass::leaf},
                                    {NodeClass::intermediate, NodeClass::intermediate}};
    for (const auto& pass : passes) {
      for (int v : order) {
        const NodeClass c = gt.nodes[v].cls;
        if (c != pass[0] && c != pass[1]) continue;
        if (st.gt_to_pred[v] >= 0) continue;

        // Live candidates in priority order.
        std::vector<int> live;
        for (int w : cands[v]) {
          if (st.pred_to_gt[w] >= 0) continue;
          if (c == NodeClass::root) {
            const int t = pred_parent_tree(w);
            if (t >= 0 && t != r) continue;  // parent matched to another tree
          }
          live.push_back(w);
        }
        if (live.empty()) continue;

        if (c != NodeClass::root) {
          std::vector<int> same_tree;
          for (int w : live)
            if (pred_parent_tree(w) == r) same_tree.push_back(w);
          if (!same_tree.empty()) live = std::move(same_tree);
        }

        const int w = live.front();
        st.gt_to_pred[v] = w;
        st.pred_to_gt[w] = v;
      }
    }
  }
  return st;
}

MatchState match_greedy_impl(const SkeletonGraph& gt, const SkeletonGraph& pred,
                             double d_max) {
  MatchState st{std::vector<int>(gt.nodes.size(), -1),
                std::vector<int>(pred.nodes.size(), -1)};
  if (pred.nodes.empty() || gt.nodes.empty()) return st;

  NodeHash hash(pred, d_max);
  struct Pair {
    double d;
    int gi, pi;
  };
  std::vector<Pair> pairs;
  for (std::size_t v = 0; v < gt.nodes.size(); ++v)
    for (int w : hash.query(gt.nodes[v].pos, d_max))
      pairs.push_back({distance(gt.nodes[v].pos, pred.nodes[w].pos), int(v), w});
  std::sort(pairs.begin(), pairs.end(), [&](const Pair& a, const Pair& b) {
    if (a.d != b.d) return a.d < b.d;
    if (gt.nodes[a.gi].id != gt.nodes[b.gi].id)
      return gt.nodes[a.gi].id < gt.nodes[b.gi].id;
    return pred.nodes[a.pi].id < pred.nodes[b.pi].id;
  });
  for (const Pair& p : pairs) {
    if (st.gt_to_pred[p.gi] >= 0 || st.pred_to_gt[p.pi] >= 0) continue;
    st.gt_to_pred[p.gi] = p.pi;
    st.pred_to_gt[p.pi] = p.gi;
  }
  return st;
}

MatchState match_hungarian_impl(const SkeletonGraph& gt, const SkeletonGraph& pred,
                                double d_max) {
  MatchState st{std::vector<int>(gt.nodes.size(), -1),
                std::vector<int>(pred.nodes.size(), -1)};
  const int n = int(gt.nodes.size()), m = int(pred.nodes.size());
  if (n == 0 || m == 0) return st;

  const double forbidden = 1e9;
  std::vector<double> cost(std::size_t(n) * m, forbidden);
  NodeHash hash(pred, d_max);
  for (int v = 0; v < n; ++v)
    for (int w : hash.query(gt.nodes[v].pos, d_max))
      cost[std::size_t(v) * m + w] = distance(gt.nodes[v].pos, pred.nodes[w].pos);

  const std::vector<int> assign = min_cost_assignment(cost, n, m, forbidden);
  for (int v = 0; v < n; ++v)
    if (assign[v] >= 0) {
      st.gt_to_pred[v] = assign[v];
      st.pred_to_gt[assign[v]] = v;
    }
  return st;
}

// Shared edge classification under a match.
struct EdgeClasses {
  int tp = 0;
  std::vector<std::pair<int, int>> fn_edges;  // gt (child, parent) ids, both matched
  std::vector<std::pair<int, int>> fp_edges;  // pred (child, parent) ids
};

std::int64_t pack_pair(int a, int b) {
  if (a > b) std::swap(a, b);
  return (std::int64_t(a) << 32) | std::uint32_t(b);
}

EdgeClasses classify_edges(const SkeletonGraph& gt, const SkeletonGraph& pred,
                           const MatchResult& m) {
  EdgeClasses out;

  std::unordered_map<int, int> inverse;  // pred id -> gt id
  for (const auto& [g, p] : m.pairs) inverse.emplace(p, g);

  std::unordered_set<std::int64_t> pred_adj, gt_adj;
  for (const auto& n : pred.nodes)
    if (n.parent >= 0) pred_adj.insert(pack_pair(n.id, n.parent));
  for (const auto& n : gt.nodes)
    if (n.parent >= 0) gt_adj.insert(pack_pair(n.id, n.parent));

  // GT edges in child-id order for determinism.
  std::vector<const SkeletonNode*> gt_nodes;
  for (const auto& n : gt.nodes)
    if (n.parent >= 0) gt_nodes.push_back(&n);
  std::sort(gt_nodes.begin(), gt_nodes.end(),
            [](const SkeletonNode* a, const SkeletonNode* b) { return a->id < b->id; });

  for (const SkeletonNode* n : gt_nodes) {
    auto ic = m.pairs.find(n->id), ip = m.pairs.find(n->parent);
    if (ic == m.pairs.end() || ip == m.pairs.end()) continue;  // neither TP nor FN
    if (pred_adj.count(pack_pair(ic->second, ip->second)))
      ++out.tp;
    else
      out.fn_edges.emplace_back(n->id, n->parent);
  }

  std::vector<const SkeletonNode*> pred_nodes;
  for (const auto& n : pred.nodes)
    if (n.parent >= 0) pred_nodes.push_back(&n);
  std::sort(pred_nodes.begin(), pred_nodes.end(),
            [](const SkeletonNode* a, const SkeletonNode* b) { return a->id < b->id; });

  // FPs are defined between matched targets only; predicted edges with an
  // unmatched endpoint participate in no count.
  for (const SkeletonNode* n : pred_nodes) {
    auto ic = inverse.find(n->id), ip = inverse.find(n->parent);
    if (ic == inverse.end() || ip == inverse.end()) continue;
    if (!gt_adj.count(pack_pair(ic->second, ip->second)))
      out.fp_edges.emplace_back(n->id, n->parent);
  }
  return out;
}

struct AncestorTable {
  std::vector<int> tin, tout, root;
  std::unordered_map<int, int> id_to_idx;

  bool ancestor(int a, int b) const {  // a ancestor of b (or equal)
    return tin[a] <= tin[b] && tout[b] <= tout[a];
  }
};

AncestorTable build_ancestors(const SkeletonGraph& g) {
  const GraphIndex idx = build_index(g);
  AncestorTable t;
  t.tin.assign(g.nodes.size(), 0);
  t.tout.assign(g.nodes.size(), 0);
  t.root = tree_roots(g, idx);
  t.id_to_idx = idx.id_to_idx;

  int timer = 0;
  for (int r : idx.roots) {
    // Iterative DFS with explicit enter/exit events.
    std::vector<std::pair<int, bool>> stack{{r, false}};
    while (!stack.empty()) {
      auto [v, exiting] = stack.back();
      stack.pop_back();
      if (exiting) {
        t.tout[v] = timer++;
        continue;
      }
      t.tin[v] = timer++;
      stack.push_back({v, true});
      for (auto it = idx.children[v].rbegin(); it != idx.children[v].rend(); ++it)
        stack.push_back({*it, false});
    }
  }
  return t;
}

double safe_div(double num, double den, double when_empty) {
  return den > 0.0 ? num / den : when_empty;
}

}  // namespace

MatchResult match(const SkeletonGraph& gt, const SkeletonGraph& pred,
                  const MatchParams& params) {
  const GraphIndex gidx = build_index(gt), pidx = build_index(pred);
  check_classified(gt, gidx);
  check_classified(pred, pidx);

  MatchState st;
  switch (params.strategy) {
    case MatchStrategy::hierarchical:
      st = match_hierarchical_impl(gt, gidx, pred, pidx, params.d_max);
      break;
    case MatchStrategy::greedy:
      st = match_greedy_impl(gt, pred, params.d_max);
      break;
    case MatchStrategy::hungarian:
      st = match_hungarian_impl(gt, pred, params.d_max);
      break;
  }
  return finish(gt, pred, st);
}

EdgeMetrics edge_metrics(const SkeletonGraph& gt, const SkeletonGraph& pred,
                         const MatchResult& m) {
  const EdgeClasses c = classify_edges(gt, pred, m);
  EdgeMetrics out;
  out.tp = c.tp;
  out.fn = int(c.fn_edges.size());
  out.fp = int(c.fp_edges.size());
  out.precision = safe_div(out.tp, out.tp + out.fp, 1.0);
  out.recall = safe_div(out.tp, out.tp + out.fn, 1.0);
  out.f1 = safe_div(2.0 * out.tp, 2.0 * out.tp + out.fp + out.fn, 1.0);
  return out;
}

FalseMergeResult false_merges(const SkeletonGraph& gt, const SkeletonGraph& pred,
                              const MatchResult& m) {
  const EdgeClasses c = classify_edges(gt, pred, m);
  const AncestorTable anc = build_ancestors(gt);

  std::unordered_map<int, int> inverse;
  for (const auto& [g, p] : m.pairs) inverse.emplace(p, g);

  FalseMergeResult out;
  for (const auto& [child, parent] : c.fp_edges) {
    const int a = anc.id_to_idx.at(inverse.at(child));
    const int b = anc.id_to_idx.at(inverse.at(parent));
    const bool related =
        anc.root[a] == anc.root[b] && (anc.ancestor(a, b) || anc.ancestor(b, a));
    if (!related) {
      ++out.count;
      out.edges.emplace_back(child, parent);
    }
  }
  return out;
}

int false_splits(const SkeletonGraph& gt, const SkeletonGraph& pred,
                 const MatchResult& m) {
  const EdgeClasses c = classify_edges(gt, pred, m);
  const FalseMergeResult fm = false_merges(gt, pred, m);

  std::unordered_set<std::int64_t> fm_set;
  for (const auto& [a, b] : fm.edges) fm_set.insert(pack_pair(a, b));

  // P*: the prediction with false-merge edges removed.
  const GraphIndex pidx = build_index(pred);
  std::vector<int> uf(pred.nodes.size());
  for (std::size_t i = 0; i < uf.size(); ++i) uf[i] = int(i);
  auto find = [&](int a) {
    while (uf[a] != a) {
      uf[a] = uf[uf[a]];
      a = uf[a];
    }
    return a;
  };
  for (std::size_t i = 0; i < pred.nodes.size(); ++i) {
    const int p = pidx.parent_idx[i];
    if (p < 0) continue;
    if (fm_set.count(pack_pair(pred.nodes[i].id, pred.nodes[p].id))) continue;
    uf[find(int(i))] = find(p);
  }

  int fs = 0;
  for (const auto& [child, parent] : c.fn_edges) {
    const int a = pidx.idx_of(m.pairs.at(child));
    const int b = pidx.idx_of(m.pairs.at(parent));
    if (find(a) != find(b)) {
      ++fs;
      uf[find(a)] = find(b);
    }
  }
  return fs;
}

PointMetrics point_metrics(const SkeletonGraph& gt, const SkeletonGraph& pred,
                           double d_max) {
  PointMetrics out;
  if (gt.nodes.empty() && pred.nodes.empty()) return out;

  MatchState st = match_greedy_impl(gt, pred, d_max);
  int matched = 0;
  double mae = 0.0;
  for (std::size_t v = 0; v < st.gt_to_pred.size(); ++v) {
    const int w = st.gt_to_pred[v];
    if (w < 0) continue;
    ++matched;
    mae += std::abs(gt.nodes[v].radius - pred.nodes[w].radius);
  }
  out.precision = safe_div(matched, double(pred.nodes.size()), 1.0);
  out.recall = safe_div(matched, double(gt.nodes.size()), 1.0);
  out.f1 = safe_div(2.0 * out.precision * out.recall, out.precision + out.recall, 0.0);
  if (gt.nodes.empty() != pred.nodes.empty()) out.f1 = 0.0;
  out.radius_mae = matched > 0 ? mae / matched : 0.0;
  return out;
}

double branch_metrics(const SkeletonGraph& gt, const SkeletonGraph& pred,
                      const MatchResult& m) {
  const BranchDecomposition gb = branch_decomposition(gt);
  const BranchDecomposition pb = branch_decomposition(pred);
  if (gb.branches.empty() && pb.branches.empty()) return 1.0;
  if (gb.branches.empty() || pb.branches.empty()) return 0.0;

  // Pred node id -> branches containing it (endpoints belong to several).
  std::unordered_map<int, std::vector<int>> membership;
  for (std::size_t b = 0; b < pb.branches.size(); ++b)
    for (int id : pb.branches[b]) membership[id].push_back(int(b));

  std::vector<char> claimed(pb.branches.size(), 0);
  int tp = 0;
  for (const auto& branch : gb.branches) {
    std::unordered_map<int, int> votes;
    for (int id : branch) {
      auto it = m.pairs.find(id);
      if (it == m.pairs.end()) continue;
      auto mb = membership.find(it->second);
      if (mb == membership.end()) continue;
      for (int b : mb->second) votes[b] += 1;
    }
    int best_branch = -1, best_votes = 0;
    for (const auto& [b, n] : votes)
      if (n > best_votes || (n == best_votes && b < best_branch)) {
        best_branch = b;
        best_votes = n;
      }
    // Inclusive 80% threshold, exact in integers.
    if (best_branch >= 0 && 5 * best_votes >= 4 * int(branch.size())) {
      ++tp;
      claimed[best_branch] = 1;
    }
  }
  const int fn = int(gb.branches.size()) - tp;
  int fp = 0;
  for (char cl : claimed) fp += (cl == 0);
  return safe_div(2.0 * tp, 2.0 * tp + fp + fn, 1.0);
}

std::pair<int, int> betti_errors(const SkeletonGraph& gt, const SkeletonGraph& pred) {
  const auto [g0, g1] = betti_numbers(gt);
  const auto [p0, p1] = betti_numbers(pred);
  return {std::abs(g0 - p0), std::abs(g1 - p1)};
}

MetricsReport evaluate(const SkeletonGraph& gt0, const SkeletonGraph& pred0,
                       const MatchParams& params) {
  const SkeletonGraph gt = classify_nodes(resample(gt0, params.step));
  const SkeletonGraph pred = classify_nodes(resample(pred0, params.step));

  const MatchResult m = match(gt, pred, params);
  const EdgeMetrics em = edge_metrics(gt, pred, m);
  const FalseMergeResult fm = false_merges(gt, pred, m);
  const int fs = false_splits(gt, pred, m);
  const PointMetrics pm = point_metrics(gt, pred, params.d_max);
  const auto [b0e, b1e] = betti_errors(gt, pred);

  MetricsReport r;
  r.strategy = strategy_name(params.strategy);
  r.edge_tp = em.tp;
  r.edge_fp = em.fp;
  r.edge_fn = em.fn;
  r.edge_f1 = em.f1;
  r.edge_precision = em.precision;
  r.edge_recall = em.recall;
  r.fm_abs = fm.count;
  r.fs_abs = fs;
  const double pred_edges = double(pred.edge_count());
  r.fm_rel = safe_div(fm.count, pred_edges, 0.0);
  r.fs_rel = safe_div(fs, pred_edges, 0.0);
  r.betti0_error = b0e;
  r.betti1_error = b1e;
  r.point_f1 = pm.f1;
  r.point_precision = pm.precision;
  r.point_recall = pm.recall;
  r.radius_mae = pm.radius_mae;
  r.branch_f1 = branch_metrics(gt, pred, m);
  return r;
}

std::string report_lines(const MetricsReport& r) {
  char buf[128];
  std::string out;
  auto put_str = [&](const char* k, const std::string& v) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  };
  auto put_int = [&](const char* k, int v) { put_str(k, std::to_string(v)); };
  auto put_real = [&](const char* k, double v) {
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    put_str(k, buf);
  };

  put_str("strategy", r.strategy);
  put_int("edge_tp", r.edge_tp);
  put_int("edge_fp", r.edge_fp);
  put_int("edge_fn", r.edge_fn);
  put_real("edge_f1", r.edge_f1);
  put_real("edge_precision", r.edge_precision);
  put_real("edge_recall", r.edge_recall);
  put_int("fm_abs", r.fm_abs);
  put_real("fm_rel", r.fm_rel);
  put_int("fs_abs", r.fs_abs);
  put_real("fs_rel", r.fs_rel);
  put_int("betti0_error", r.betti0_error);
  put_int("betti1_error", r.betti1_error);
  put_real("point_f1", r.point_f1);
  put_real("point_precision", r.point_precision);
  put_real("point_recall", r.point_recall);
  put_real("radius_mae", r.radius_mae);
  put_real("branch_f1", r.branch_f1);
  return out;
}

}  // namespace vtrace
