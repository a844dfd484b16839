#include "vtrace/volume.hpp"

#include <cstring>
#include <fstream>

namespace vtrace {

namespace {

constexpr char kMagic[5] = {'V', 'V', 'O', 'L', '1'};

void write_raw(std::ofstream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_raw(std::ifstream& in, void* p, std::size_t n, const char* what) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n)
    throw VolumeError(std::string("payload length mismatch reading ") + what);
}

template <typename T>
void write_grid(std::ofstream& out, const Grid3<T>& g, std::uint8_t dtype) {
  write_raw(out, kMagic, sizeof(kMagic));
  write_raw(out, &dtype, 1);
  const std::uint32_t nz = g.dims().nz, ny = g.dims().ny, nx = g.dims().nx;
  write_raw(out, &nz, 4);
  write_raw(out, &ny, 4);
  write_raw(out, &nx, 4);
  const float sz = static_cast<float>(g.spacing().z);
  const float sy = static_cast<float>(g.spacing().y);
  const float sx = static_cast<float>(g.spacing().x);
  write_raw(out, &sz, 4);
  write_raw(out, &sy, 4);
  write_raw(out, &sx, 4);
  write_raw(out, g.data().data(), g.data().size() * sizeof(T));
}

template <typename T>
Grid3<T> read_grid(std::ifstream& in, GridDims dims, Spacing spacing) {
  Grid3<T> g(dims, spacing);
  read_raw(in, g.data().data(), g.data().size() * sizeof(T), "payload");
  // A longer-than-declared payload is also a mismatch.
  char extra;
  in.read(&extra, 1);
  if (in.gcount() != 0) throw VolumeError("payload length mismatch: trailing bytes");
  return g;
}

}  // namespace

std::size_t count_foreground(const MaskVolume& mask) {
  std::size_t n = 0;
  for (std::uint8_t v : mask.data()) n += (v != 0);
  return n;
}

AnyVolume read_volume(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw VolumeError("cannot open volume file: " + path);

  char magic[5];
  read_raw(in, magic, 5, "magic");
  if (std::memcmp(magic, kMagic, 5) != 0)
    throw VolumeError("bad magic in volume file: " + path);

  std::uint8_t dtype = 0;
  read_raw(in, &dtype, 1, "dtype");

  std::uint32_t nz = 0, ny = 0, nx = 0;
  read_raw(in, &nz, 4, "dims");
  read_raw(in, &ny, 4, "dims");
  read_raw(in, &nx, 4, "dims");
  float sz = 0, sy = 0, sx = 0;
  read_raw(in, &sz, 4, "spacing");
  read_raw(in, &sy, 4, "spacing");
  read_raw(in, &sx, 4, "spacing");

  const GridDims dims{static_cast<int>(nz), static_cast<int>(ny), static_cast<int>(nx)};
  const Spacing spacing{sz, sy, sx};

  switch (dtype) {
    case 0:
      return read_grid<std::uint8_t>(in, dims, spacing);
    case 1:
      return read_grid<float>(in, dims, spacing);
    case 2:
      return read_grid<std::array<float, 3>>(in, dims, spacing);
    default:
      throw VolumeError("unknown dtype code " + std::to_string(int(dtype)) +
                        " in volume file: " + path);
  }
}

void write_volume(const AnyVolume& volume, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw VolumeError("cannot open volume file for writing: " + path);
  std::visit(
      [&](const auto& g) {
        using T = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<T, MaskVolume>)
          write_grid(out, g, 0);
        else if constexpr (std::is_same_v<T, ScalarVolume>)
          write_grid(out, g, 1);
        else
          write_grid(out, g, 2);
      },
      volume);
  if (!out) throw VolumeError("write failed: " + path);
}

MaskVolume read_mask_volume(const std::string& path) {
  AnyVolume v = read_volume(path);
  if (auto* m = std::get_if<MaskVolume>(&v)) return std::move(*m);
  throw VolumeError("expected mask (dtype 0) volume: " + path);
}

ScalarVolume read_scalar_volume(const std::string& path) {
  AnyVolume v = read_volume(path);
  if (auto* s = std::get_if<ScalarVolume>(&v)) return std::move(*s);
  throw VolumeError("expected scalar (dtype 1) volume: " + path);
}

VecVolume read_vec_volume(const std::string& path) {
  AnyVolume v = read_volume(path);
  if (auto* f = std::get_if<VecVolume>(&v)) return std::move(*f);
  throw VolumeError("expected vec3 (dtype 2) volume: " + path);
}

}  // namespace vtrace
