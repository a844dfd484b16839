#include "vtrace/edt.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace vtrace {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1D squared-distance lower envelope of parabolas f[q] + w2*(i-q)^2.
// Sites with f[q] == inf contribute no parabola. Felzenszwalb & Huttenlocher.
void envelope_1d(const double* f, double* d, int n, double w2, int* v, double* zbound) {
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      zbound[0] = -kInf;
      zbound[1] = kInf;
      continue;
    }
    double s;
    for (;;) {
      const int p = v[k];
      s = ((f[q] + w2 * q * q) - (f[p] + w2 * p * p)) / (2.0 * w2 * (q - p));
      if (s > zbound[k]) break;
      --k;
      if (k < 0) break;
    }
    ++k;
    v[k] = q;
    zbound[k] = s;
    zbound[k + 1] = kInf;
  }
  if (k < 0) {
    for (int i = 0; i < n; ++i) d[i] = kInf;
    return;
  }
  int j = 0;
  for (int i = 0; i < n; ++i) {
    while (zbound[j + 1] < i) ++j;
    const double di = i - v[j];
    d[i] = f[v[j]] + w2 * di * di;
  }
}

}  // namespace

ScalarVolume euclidean_distance_transform(const MaskVolume& mask, Spacing spacing) {
  const GridDims dims = mask.dims();
  const std::size_t n = dims.voxels();
  if (n == 0) return ScalarVolume(dims, spacing);

  bool any_background = false;
  std::vector<double> sq(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool fg = mask[i] != 0;
    any_background |= !fg;
    sq[i] = fg ? kInf : 0.0;
  }
  if (!any_background)
    throw VolumeError("distance transform undefined: no boundary exists (all-foreground mask)");

  const int nz = dims.nz, ny = dims.ny, nx = dims.nx;
  const int nmax = std::max(nx, std::max(ny, nz));
  std::vector<double> fbuf(nmax), dbuf(nmax), zbuf(nmax + 1);
  std::vector<int> vbuf(nmax);

  // x axis: seeds are exact (0 at background), so the envelope pass over the
  // initial field is already the correct 1D squared distance.
  const double wx2 = spacing.x * spacing.x;
  for (int z = 0; z < nz; ++z)
    for (int y = 0; y < ny; ++y) {
      const std::size_t base = mask.index(z, y, 0);
      for (int x = 0; x < nx; ++x) fbuf[x] = sq[base + x];
      envelope_1d(fbuf.data(), dbuf.data(), nx, wx2, vbuf.data(), zbuf.data());
      for (int x = 0; x < nx; ++x) sq[base + x] = dbuf[x];
    }

  const double wy2 = spacing.y * spacing.y;
  for (int z = 0; z < nz; ++z)
    for (int x = 0; x < nx; ++x) {
      const std::size_t base = mask.index(z, 0, x);
      const std::size_t stride = static_cast<std::size_t>(nx);
      for (int y = 0; y < ny; ++y) fbuf[y] = sq[base + stride * y];
      envelope_1d(fbuf.data(), dbuf.data(), ny, wy2, vbuf.data(), zbuf.data());
      for (int y = 0; y < ny; ++y) sq[base + stride * y] = dbuf[y];
    }

  const double wz2 = spacing.z * spacing.z;
  for (int y = 0; y < ny; ++y)
    for (int x = 0; x < nx; ++x) {
      const std::size_t base = mask.index(0, y, x);
      const std::size_t stride = static_cast<std::size_t>(nx) * ny;
      for (int z = 0; z < nz; ++z) fbuf[z] = sq[base + stride * z];
      envelope_1d(fbuf.data(), dbuf.data(), nz, wz2, vbuf.data(), zbuf.data());
      for (int z = 0; z < nz; ++z) sq[base + stride * z] = dbuf[z];
    }

  ScalarVolume out(dims, spacing);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(std::sqrt(sq[i]));
  return out;
}

ScalarVolume euclidean_distance_transform(const MaskVolume& mask) {
  return euclidean_distance_transform(mask, mask.spacing());
}

}  // namespace vtrace
