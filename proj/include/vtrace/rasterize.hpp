#pragma once

#include "vtrace/skeleton.hpp"
#include "vtrace/volume.hpp"

namespace vtrace {

// Voxelizes a skeleton as a union of capsules: a voxel is foreground iff it
// lies within distance r(t) of some edge, r(t) interpolating the endpoint
// radii. Voxels traversed by the centerline itself are always foreground, so
// sub-voxel radii still produce connected vessels. Throws VolumeError when a
// node lies outside dims.
MaskVolume rasterize(const SkeletonGraph& graph, GridDims dims, Spacing spacing = {});

}  // namespace vtrace
