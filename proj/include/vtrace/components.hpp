#pragma once

#include <cstdint>
#include <vector>

#include "vtrace/volume.hpp"

namespace vtrace {

// 26-connectivity labeling of the foreground. Label 0 is background; component
// labels are 1..count, assigned in (z, y, x) scan order of first contact.
struct ComponentLabeling {
  Grid3<std::uint32_t> labels;
  std::uint32_t count = 0;
};

ComponentLabeling connected_components(const MaskVolume& mask);

// The 26 neighbor offsets in (dz, dy, dx), fixed scan order.
const std::vector<std::array<int, 3>>& neighbor_offsets_26();

}  // namespace vtrace
