#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "vtrace/flowfield.hpp"
#include "vtrace/skeleton.hpp"
#include "vtrace/volume.hpp"

namespace vtrace {

struct PenaltyParams {
  double scale = 1'000'000.0;
  int exponent = 16;  // positive even integer
  bool use_dbf = true;
  bool use_vmf = true;
  bool use_angle = true;
};

// Normalization maxima for the penalty terms; m1/m2 are strictly above the
// foreground maxima so the boundary term base stays positive and the
// magnitude term stays below one.
struct PenaltyContext {
  double m1 = 1.0;
  double m2 = 1.0;
  double m3 = 180.0;
};

PenaltyContext make_penalty_context(const MaskVolume& mask, const ScalarVolume& dbf,
                                    const ScalarVolume& magnitudes);

// Penalty of a directed move from voxel p to 26-neighbor n: scaled sum of the
// boundary-distance, vector-magnitude, and walk-angle terms, each raised to
// params.exponent. Throws GraphError when n is not a 26-neighbor of p.
double penalty(const std::array<int, 3>& p, const std::array<int, 3>& n,
               const ScalarVolume& dbf, const VecVolume& field,
               const PenaltyContext& ctx, const PenaltyParams& params);

struct AdaptiveMaskParams {
  double s_min = 1.1;
  double s_max = 1.5;
  double c_min = 2.0;
  double c_max = 10.0;
  // Radius bounds for normalization. With auto_bounds the solver replaces
  // them per connected component by the 5th/95th percentile of the DBF.
  double r_min = 1.0;
  double r_max = 8.0;
  bool auto_bounds = true;
};

// d(r) = scale(r) * r + const(r) with scale/const interpolated over the
// normalized radius fraction clamped to [0, 1].
double mask_radius(double r, const AdaptiveMaskParams& params);

struct RootDetectionParams {
  int n_steps = 50;
  double step = 1.0;       // lambda
  double tolerance = 0.1;  // tau
  double min_radius = 3.0;
};

// Seeds a particle at every foreground voxel with DBF >= min_radius, follows
// the interpolated field, records sinks where the displacement drops below
// tolerance, and clusters sinks within 2 voxels (centroid per cluster).
std::vector<Vec3> detect_roots(const MaskVolume& mask, const VecVolume& field,
                               const ScalarVolume& dbf,
                               const RootDetectionParams& params = {});

struct PostprocessParams {
  double max_distance = 5.0;     // voxels
  double max_radius_diff = 3.0;
  double max_angle = 100.0;      // degrees
};

struct SkeletonizeParams {
  PenaltyParams penalty;
  AdaptiveMaskParams mask;
  PostprocessParams post;
  double snap_radius = 3.0;  // root-to-foreground snapping
};

// Multi-root penalized shortest-path skeletonization. Per 26-connected
// foreground component: repeatedly pick the unprocessed voxel farthest
// (geodesically) from the component's roots, trace the cheapest path to any
// root, mask a radius-dependent tube around it as processed, and fuse the
// accepted paths into rooted trees. Components without a root are traced
// from their thickest voxel and listed in fragment_roots for the split
// postprocess, which runs as the final step.
SkeletonGraph skeletonize(const MaskVolume& mask, const VecVolume& field,
                          const std::vector<Vec3>& roots,
                          const SkeletonizeParams& params = {});

// Reconnects rootless fragments to nearby trees when radius and direction
// agree; connections that would form a cycle are rejected, so the result
// stays a forest.
SkeletonGraph postprocess_splits(const SkeletonGraph& graph, const VecVolume& field,
                                 const PostprocessParams& params = {});

}  // namespace vtrace
