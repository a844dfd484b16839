#include "vtrace/components.hpp"

namespace vtrace {

const std::vector<std::array<int, 3>>& neighbor_offsets_26() {
  static const std::vector<std::array<int, 3>> offsets = [] {
    std::vector<std::array<int, 3>> v;
    v.reserve(26);
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dz == 0 && dy == 0 && dx == 0) continue;
          v.push_back({dz, dy, dx});
        }
    return v;
  }();
  return offsets;
}

ComponentLabeling connected_components(const MaskVolume& mask) {
  const GridDims dims = mask.dims();
  ComponentLabeling out{Grid3<std::uint32_t>(dims, mask.spacing(), 0), 0};
  const std::size_t n = dims.voxels();
  if (n == 0) return out;

  std::vector<std::size_t> stack;
  const auto& offs = neighbor_offsets_26();

  for (std::size_t seed = 0; seed < n; ++seed) {
    if (mask[seed] == 0 || out.labels[seed] != 0) continue;
    const std::uint32_t label = ++out.count;
    out.labels[seed] = label;
    stack.push_back(seed);
    while (!stack.empty()) {
      const std::size_t cur = stack.back();
      stack.pop_back();
      int z, y, x;
      mask.coords(cur, z, y, x);
      for (const auto& o : offs) {
        const int nz = z + o[0], ny = y + o[1], nx = x + o[2];
        if (!mask.in_bounds(nz, ny, nx)) continue;
        const std::size_t ni = mask.index(nz, ny, nx);
        if (mask[ni] != 0 && out.labels[ni] == 0) {
          out.labels[ni] = label;
          stack.push_back(ni);
        }
      }
    }
  }
  return out;
}

}  // namespace vtrace
