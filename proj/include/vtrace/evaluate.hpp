#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vtrace/skeleton.hpp"

namespace vtrace {

enum class MatchStrategy { hierarchical, greedy, hungarian };

const char* strategy_name(MatchStrategy s);
MatchStrategy parse_strategy(const std::string& name);

struct MatchParams {
  double step = 1.0;   // resampling arc-length step
  double d_max = 3.0;  // candidate radius
  MatchStrategy strategy = MatchStrategy::hierarchical;
};

// One-to-at-most-one node mapping from GT ids to predicted ids.
struct MatchResult {
  std::unordered_map<int, int> pairs;
  std::vector<int> unmatched_gt;
  std::vector<int> unmatched_pred;
};

// Node assignment between a classified GT graph and a classified predicted
// graph. hierarchical: greedy class- and ancestry-aware matching, GT roots
// processed best-candidate-first, two depth-first passes per tree
// (root/branching/leaf before intermediate), candidates preferring parents
// matched into the same tree. greedy: globally ascending-distance one-to-one.
// hungarian: minimum-total-distance assignment over pairs within d_max.
MatchResult match(const SkeletonGraph& gt, const SkeletonGraph& pred,
                  const MatchParams& params);

struct EdgeMetrics {
  int tp = 0, fp = 0, fn = 0;
  double f1 = 1.0, precision = 1.0, recall = 1.0;
};

// Edge-wise scores under the matching: a GT edge is a TP iff the matched
// pair is adjacent in the prediction; a GT edge with both endpoints matched
// but no corresponding predicted edge is an FN; a predicted edge between two
// matched targets that is not the image of a GT edge is an FP. Edges with an
// unmatched endpoint participate in no count.
EdgeMetrics edge_metrics(const SkeletonGraph& gt, const SkeletonGraph& pred,
                         const MatchResult& m);

struct FalseMergeResult {
  int count = 0;
  std::vector<std::pair<int, int>> edges;  // predicted (child, parent) id pairs
};

// FP edges whose GT counterparts have no ancestor relation.
FalseMergeResult false_merges(const SkeletonGraph& gt, const SkeletonGraph& pred,
                              const MatchResult& m);

// FN edges whose restoration joins two components of the prediction with all
// false-merge edges removed.
int false_splits(const SkeletonGraph& gt, const SkeletonGraph& pred,
                 const MatchResult& m);

struct PointMetrics {
  double precision = 1.0, recall = 1.0, f1 = 1.0;
  double radius_mae = 0.0;
};

// Greedy one-to-one nearest-neighbor node comparison within d_max.
PointMetrics point_metrics(const SkeletonGraph& gt, const SkeletonGraph& pred,
                           double d_max);

// Branch-level F1: a GT branch is a TP iff at least 80% of its nodes match
// into a single predicted branch; unclaimed predicted branches are FPs.
double branch_metrics(const SkeletonGraph& gt, const SkeletonGraph& pred,
                      const MatchResult& m);

std::pair<int, int> betti_errors(const SkeletonGraph& gt, const SkeletonGraph& pred);

struct MetricsReport {
  std::string strategy;
  int edge_tp = 0, edge_fp = 0, edge_fn = 0;
  double edge_f1 = 1.0, edge_precision = 1.0, edge_recall = 1.0;
  int fm_abs = 0, fs_abs = 0;
  double fm_rel = 0.0, fs_rel = 0.0;
  int betti0_error = 0, betti1_error = 0;
  double point_f1 = 1.0, point_precision = 1.0, point_recall = 1.0;
  double radius_mae = 0.0;
  double branch_f1 = 1.0;
};

// Full pipeline: resample both graphs at params.step, classify, match, and
// compute every metric.
MetricsReport evaluate(const SkeletonGraph& gt, const SkeletonGraph& pred,
                       const MatchParams& params = {});

// Newline-delimited `key=value` lines (floats printed as %.6f).
std::string report_lines(const MetricsReport& r);

}  // namespace vtrace
