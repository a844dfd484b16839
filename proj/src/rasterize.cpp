#include "vtrace/rasterize.hpp"

#include <algorithm>
#include <cmath>

namespace vtrace {

namespace {

Vec3 to_physical(const Vec3& p, const Spacing& sp) {
  return {p.z * sp.z, p.y * sp.y, p.x * sp.x};
}

}  // namespace

MaskVolume rasterize(const SkeletonGraph& graph, GridDims dims, Spacing spacing) {
  MaskVolume mask(dims, spacing, 0);
  const GraphIndex idx = build_index(graph);

  for (const auto& node : graph.nodes) {
    if (node.pos.z < 0 || node.pos.z > dims.nz - 1 || node.pos.y < 0 ||
        node.pos.y > dims.ny - 1 || node.pos.x < 0 || node.pos.x > dims.nx - 1)
      throw VolumeError("skeleton node id " + std::to_string(node.id) +
                        " lies outside the volume");
  }

  auto paint_capsule = [&](const SkeletonNode& a, const SkeletonNode& b) {
    const double rmax = std::max(a.radius, b.radius);
    const int z0 = std::max(0, int(std::floor(std::min(a.pos.z, b.pos.z) - rmax / spacing.z)) - 1);
    const int z1 = std::min(dims.nz - 1, int(std::ceil(std::max(a.pos.z, b.pos.z) + rmax / spacing.z)) + 1);
    const int y0 = std::max(0, int(std::floor(std::min(a.pos.y, b.pos.y) - rmax / spacing.y)) - 1);
    const int y1 = std::min(dims.ny - 1, int(std::ceil(std::max(a.pos.y, b.pos.y) + rmax / spacing.y)) + 1);
    const int x0 = std::max(0, int(std::floor(std::min(a.pos.x, b.pos.x) - rmax / spacing.x)) - 1);
    const int x1 = std::min(dims.nx - 1, int(std::ceil(std::max(a.pos.x, b.pos.x) + rmax / spacing.x)) + 1);

    const Vec3 pa = to_physical(a.pos, spacing);
    const Vec3 pb = to_physical(b.pos, spacing);
    for (int z = z0; z <= z1; ++z)
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          const Vec3 c = to_physical(Vec3(z, y, x), spacing);
          double t;
          const Vec3 cp = closest_point_on_segment(c, pa, pb, &t);
          const double r = a.radius + t * (b.radius - a.radius);
          if (distance(c, cp) <= r) mask.at(z, y, x) = 1;
        }

    // Centerline guarantee: stamp the voxels the segment passes through.
    const double len = distance(a.pos, b.pos);
    const int steps = std::max(1, int(std::ceil(len / 0.25)));
    for (int s = 0; s <= steps; ++s) {
      const double t = double(s) / steps;
      const Vec3 p = a.pos + (b.pos - a.pos) * t;
      const int z = int(std::lround(p.z)), y = int(std::lround(p.y)), x = int(std::lround(p.x));
      if (mask.in_bounds(z, y, x)) mask.at(z, y, x) = 1;
    }
  };

  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    const int p = idx.parent_idx[i];
    if (p >= 0) {
      paint_capsule(graph.nodes[i], graph.nodes[p]);
    } else if (idx.children[i].empty()) {
      // Isolated node: degenerate capsule (a sphere).
      paint_capsule(graph.nodes[i], graph.nodes[i]);
    }
  }
  return mask;
}

}  // namespace vtrace
