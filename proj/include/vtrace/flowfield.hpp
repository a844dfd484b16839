#pragma once

#include <cstdint>

#include "vtrace/skeleton.hpp"
#include "vtrace/volume.hpp"

namespace vtrace {

struct VectorFieldParams {
  double step_size = 3.0;  // rootward step, voxel units
};

enum class PerturbationKind { vector_noise, image_noise };

struct PerturbationSpec {
  PerturbationKind kind = PerturbationKind::vector_noise;
  double level = 0.0;  // epsilon for vectors, sigma for images
  std::uint64_t seed = 0;
};

// Per-voxel direction vectors for a rooted skeleton: each foreground voxel
// whose distance to the nearest graph edge is within that edge's radius gets
// a vector to the closest centerline point advanced `step_size` along the
// graph toward the root (clamped at the root); all other voxels get zero.
// Per-edge radius is the child node's radius. Nearest-edge ties break toward
// the lower edge index (edges ordered by child id).
VecVolume generate_vectors(const MaskVolume& mask, const SkeletonGraph& graph,
                           const VectorFieldParams& params = {});

// Per-voxel Euclidean norm of the direction vectors.
ScalarVolume vmf(const VecVolume& field);

// Angle in degrees in [0, 180]; zero if either vector is zero.
double angle_between(const Vec3& a, const Vec3& b);

// v -> v + level * |v| * u with u an independent uniform random unit vector
// per voxel; zero vectors stay zero. Deterministic given spec.seed.
VecVolume perturb_vectors(const VecVolume& field, const PerturbationSpec& spec);

// Min-max normalizes, adds i.i.d. Gaussian(0, level^2) per voxel, clips to
// [0, 1]. Throws VolumeError on a constant image.
ScalarVolume perturb_image(const ScalarVolume& image, const PerturbationSpec& spec);

// Foreground iff value >= threshold.
MaskVolume threshold_segment(const ScalarVolume& image, double threshold);

// Trilinear sample of a vector field at an arbitrary position (clamped to the
// volume); used by root detection and the split postprocess.
Vec3 sample_field(const VecVolume& field, const Vec3& pos);

}  // namespace vtrace
