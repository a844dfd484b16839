#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "vtrace/vec3.hpp"

namespace vtrace {

struct VolumeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GridDims {
  int nz = 0;
  int ny = 0;
  int nx = 0;

  std::size_t voxels() const {
    return static_cast<std::size_t>(nz) * static_cast<std::size_t>(ny) *
           static_cast<std::size_t>(nx);
  }
  bool operator==(const GridDims&) const = default;
};

// Physical voxel size per axis, (z, y, x) order. Defaults to isotropic 1.
struct Spacing {
  double z = 1.0;
  double y = 1.0;
  double x = 1.0;
  bool operator==(const Spacing&) const = default;
};

// Dense 3D grid, C order with z outermost. Immutable by convention once built;
// operations return new grids.
template <typename T>
class Grid3 {
 public:
  Grid3() = default;
  Grid3(GridDims dims, Spacing spacing = {}, T fill = T{})
      : dims_(dims), spacing_(spacing), data_(dims.voxels(), fill) {
    if (dims.nz < 0 || dims.ny < 0 || dims.nx < 0)
      throw VolumeError("negative grid dimension");
    if (spacing.z <= 0.0 || spacing.y <= 0.0 || spacing.x <= 0.0)
      throw VolumeError("spacing components must be strictly positive");
  }

  const GridDims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  bool in_bounds(int z, int y, int x) const {
    return z >= 0 && z < dims_.nz && y >= 0 && y < dims_.ny && x >= 0 && x < dims_.nx;
  }

  std::size_t index(int z, int y, int x) const {
    return (static_cast<std::size_t>(z) * dims_.ny + y) * dims_.nx + x;
  }

  T& at(int z, int y, int x) { return data_[index(z, y, x)]; }
  const T& at(int z, int y, int x) const { return data_[index(z, y, x)]; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  // Linear index -> (z, y, x).
  void coords(std::size_t i, int& z, int& y, int& x) const {
    x = static_cast<int>(i % dims_.nx);
    const std::size_t r = i / dims_.nx;
    y = static_cast<int>(r % dims_.ny);
    z = static_cast<int>(r / dims_.ny);
  }

 private:
  GridDims dims_;
  Spacing spacing_;
  std::vector<T> data_;
};

using MaskVolume = Grid3<std::uint8_t>;
using ScalarVolume = Grid3<float>;
// Vector voxels store (z, y, x) components.
using VecVolume = Grid3<std::array<float, 3>>;

using AnyVolume = std::variant<MaskVolume, ScalarVolume, VecVolume>;

std::size_t count_foreground(const MaskVolume& mask);

// Binary "VVOL1" container. Little-endian: 5-byte magic, u8 dtype
// (0 = mask/u8, 1 = scalar/f32, 2 = vec3/f32x3), u32 nz ny nx, f32 sz sy sx,
// then the raw payload in C order (vec3 interleaved per voxel, z y x).
AnyVolume read_volume(const std::string& path);
void write_volume(const AnyVolume& volume, const std::string& path);

MaskVolume read_mask_volume(const std::string& path);
ScalarVolume read_scalar_volume(const std::string& path);
VecVolume read_vec_volume(const std::string& path);

}  // namespace vtrace
