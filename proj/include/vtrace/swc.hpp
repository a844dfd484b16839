#pragma once

#include <string>

#include "vtrace/skeleton.hpp"

namespace vtrace {

// Text graph format, one node per line:
//   id class x y z radius parent_id
// whitespace-separated, '#' starts a comment. Class codes 1=root,
// 2=intermediate, 3=branching, 4=leaf; parent_id -1 for roots. Coordinates
// are voxel units in (x, y, z) column order, converted to internal (z, y, x).
SkeletonGraph read_swc(const std::string& path);
void write_swc(const SkeletonGraph& graph, const std::string& path);

}  // namespace vtrace
