#pragma once

#include "vtrace/volume.hpp"

namespace vtrace {

// Exact anisotropic Euclidean distance transform. For each foreground voxel,
// the distance to the nearest background voxel center (min over background
// voxels of the anisotropic Euclidean distance); background voxels map to 0.
// Throws VolumeError if the mask has no background voxel at all.
ScalarVolume euclidean_distance_transform(const MaskVolume& mask, Spacing spacing);

// Spacing taken from the mask itself.
ScalarVolume euclidean_distance_transform(const MaskVolume& mask);

}  // namespace vtrace
