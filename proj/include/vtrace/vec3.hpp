#pragma once

#include <cmath>

namespace vtrace {

// 3D vector / position in (z, y, x) component order, matching the internal
// volume axis order (z outermost).
struct Vec3 {
  double z = 0.0;
  double y = 0.0;
  double x = 0.0;

  Vec3() = default;
  Vec3(double z_, double y_, double x_) : z(z_), y(y_), x(x_) {}

  Vec3 operator+(const Vec3& o) const { return {z + o.z, y + o.y, x + o.x}; }
  Vec3 operator-(const Vec3& o) const { return {z - o.z, y - o.y, x - o.x}; }
  Vec3 operator*(double s) const { return {z * s, y * s, x * s}; }
  Vec3& operator+=(const Vec3& o) {
    z += o.z;
    y += o.y;
    x += o.x;
    return *this;
  }

  double dot(const Vec3& o) const { return z * o.z + y * o.y + x * o.x; }
  double norm2() const { return dot(*this); }
  double norm() const { return std::sqrt(norm2()); }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

inline double distance(const Vec3& a, const Vec3& b) { return (a - b).norm(); }

// Closest point on segment [a, b] to p; t is the normalized parameter in [0, 1].
inline Vec3 closest_point_on_segment(const Vec3& p, const Vec3& a, const Vec3& b,
                                     double* t_out = nullptr) {
  const Vec3 ab = b - a;
  const double len2 = ab.norm2();
  double t = 0.0;
  if (len2 > 0.0) {
    t = (p - a).dot(ab) / len2;
    t = t < 0.0 ? 0.0 : (t > 1.0 ? 1.0 : t);
  }
  if (t_out) *t_out = t;
  return a + ab * t;
}

}  // namespace vtrace
