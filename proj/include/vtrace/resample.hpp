#pragma once

#include "vtrace/skeleton.hpp"

namespace vtrace {

// Re-places the intermediate nodes of every branch at fixed arc-length
// intervals (final segment may be shorter). Root, branching, and leaf nodes
// are preserved exactly; radii are interpolated linearly along arc length.
SkeletonGraph resample(const SkeletonGraph& graph, double step);

}  // namespace vtrace
