#pragma once

#include <cstdint>
#include <utility>

#include "vtrace/skeleton.hpp"
#include "vtrace/volume.hpp"

namespace vtrace {

struct PhantomError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PhantomConfig {
  std::uint64_t seed = 0;
  GridDims dims{128, 128, 128};
  int n_trees = 3;
  int max_depth = 4;
  double root_radius = 4.0;
  double taper = 0.8;                     // child radius = parent radius * taper
  double branch_prob = 0.6;
  std::pair<double, double> segment_length{9.0, 15.0};
  double min_clearance = 2.0;             // surface separation between trees
  bool parallel_pair = false;             // two touching near-parallel vessels
};

struct PhantomResult {
  SkeletonGraph graph;
  MaskVolume mask;
  ScalarVolume image;  // mask smoothed with a 1-voxel Gaussian
};

// Deterministic synthetic vessel forest: same config, bit-identical outputs.
// Throws PhantomError when the roots cannot be placed at the requested
// clearance after bounded retries, or dims cannot contain a root sphere.
PhantomResult generate(const PhantomConfig& config);

// Separable Gaussian blur, kernel truncated at 3 sigma.
ScalarVolume gaussian_smooth(const ScalarVolume& image, double sigma);

}  // namespace vtrace
