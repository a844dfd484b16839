#include <doctest.h>

#include <cmath>

#include "vtrace/flowfield.hpp"
#include "vtrace/phantom.hpp"
#include "vtrace/rasterize.hpp"
#include "vtrace/skeleton.hpp"

using namespace vtrace;

namespace {

SkeletonNode make_node(int id, Vec3 pos, double radius, int parent) {
  SkeletonNode n;
  n.id = id;
  n.pos = pos;
  n.radius = radius;
  n.parent = parent;
  return n;
}

// Straight vessel along +z with the root at max z.
struct StraightVessel {
  SkeletonGraph graph;
  MaskVolume mask;

  StraightVessel(int length = 24, double radius = 3.0, GridDims dims = {32, 16, 16}) {
    graph.nodes.push_back(make_node(0, {double(length), 8, 8}, radius, -1));  // root
    graph.nodes.push_back(make_node(1, {2, 8, 8}, radius, 0));
    mask = rasterize(graph, dims);
  }
};

Vec3 vec_at(const VecVolume& f, int z, int y, int x) {
  const auto& v = f.at(z, y, x);
  return {v[0], v[1], v[2]};
}

}  // namespace

TEST_CASE("vectors: centerline voxel points a full step rootward") {
  StraightVessel v;
  const VecVolume field = generate_vectors(v.mask, v.graph, {3.0});
  const Vec3 got = vec_at(field, 10, 8, 8);
  CHECK(got.z == doctest::Approx(3.0));
  CHECK(got.y == doctest::Approx(0.0));
  CHECK(got.x == doctest::Approx(0.0));
}

TEST_CASE("vectors: off-axis voxel recovers the centerline then steps") {
  StraightVessel v;
  const VecVolume field = generate_vectors(v.mask, v.graph, {3.0});
  const Vec3 got = vec_at(field, 10, 8, 10);  // offset +2 in x
  CHECK(got.z == doctest::Approx(3.0));
  CHECK(got.y == doctest::Approx(0.0));
  CHECK(got.x == doctest::Approx(-2.0));
  CHECK(got.norm() == doctest::Approx(std::sqrt(13.0)));
}

TEST_CASE("vectors: the root voxel clamps to a zero vector") {
  StraightVessel v;
  const VecVolume field = generate_vectors(v.mask, v.graph, {3.0});
  CHECK(vec_at(field, 24, 8, 8).norm() == doctest::Approx(0.0));
}

TEST_CASE("vectors: zero outside the foreground and for an empty graph error") {
  StraightVessel v;
  const VecVolume field = generate_vectors(v.mask, v.graph, {3.0});
  for (std::size_t i = 0; i < field.size(); ++i)
    if (v.mask[i] == 0) CHECK(vec_at(field, 0, 0, 0).norm() == 0.0);
  CHECK_THROWS_AS(generate_vectors(v.mask, SkeletonGraph{}, {3.0}), GraphError);
}

TEST_CASE("vmf: norms per voxel, minimal on the centerline cross-section") {
  StraightVessel v;
  const VecVolume field = generate_vectors(v.mask, v.graph, {3.0});
  const ScalarVolume mag = vmf(field);
  CHECK(mag.at(10, 8, 10) == doctest::Approx(std::sqrt(13.0)));

  // Arg-min over an interior cross-section lies on the centerline voxel.
  for (int z = 6; z <= 18; z += 4) {
    float best = 1e9f;
    int by = -1, bx = -1;
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) {
        if (v.mask.at(z, y, x) == 0) continue;
        if (mag.at(z, y, x) < best) {
          best = mag.at(z, y, x);
          by = y;
          bx = x;
        }
      }
    CHECK(by == 8);
    CHECK(bx == 8);
  }
}

TEST_CASE("angle_between: axis cases and the zero-vector convention") {
  CHECK(angle_between({1, 0, 0}, {1, 0, 0}) == doctest::Approx(0.0));
  CHECK(angle_between({1, 0, 0}, {-1, 0, 0}) == doctest::Approx(180.0));
  CHECK(angle_between({1, 0, 0}, {0, 1, 0}) == doctest::Approx(90.0));
  CHECK(angle_between({0, 0, 0}, {1, 2, 3}) == 0.0);
}

TEST_CASE("perturb_vectors: zero level is the identity") {
  StraightVessel v;
  const VecVolume field = generate_vectors(v.mask, v.graph, {3.0});
  const VecVolume same = perturb_vectors(field, {PerturbationKind::vector_noise, 0.0, 1});
  CHECK(same.data() == field.data());
}

TEST_CASE("perturb_vectors: displacement is exactly level times the norm") {
  VecVolume field({4, 4, 4});
  field.at(1, 1, 1) = {2, 0, 0};
  field.at(2, 2, 2) = {0, 1.5f, -1.f};
  const VecVolume noisy = perturb_vectors(field, {PerturbationKind::vector_noise, 1.0, 7});
  for (int i : {0, 1}) {
    const auto& a = i == 0 ? field.at(1, 1, 1) : field.at(2, 2, 2);
    const auto& b = i == 0 ? noisy.at(1, 1, 1) : noisy.at(2, 2, 2);
    const double norm = Vec3(a[0], a[1], a[2]).norm();
    const double moved =
        Vec3(b[0] - a[0], b[1] - a[1], b[2] - a[2]).norm();
    CHECK(moved == doctest::Approx(norm).epsilon(1e-5));
  }
  // Zero vectors stay zero.
  CHECK(Vec3(noisy.at(0, 0, 0)[0], noisy.at(0, 0, 0)[1], noisy.at(0, 0, 0)[2]).norm() == 0.0);
}

TEST_CASE("perturb_vectors: mean displacement ratio matches the level") {
  const int n = 24;  // 13824 samples
  VecVolume field({n, n, n});
  for (std::size_t i = 0; i < field.size(); ++i) field[i] = {1.f, 2.f, -2.f};
  const double eps = 0.5;
  const VecVolume noisy = perturb_vectors(field, {PerturbationKind::vector_noise, eps, 99});
  double sum_ratio = 0.0;
  for (std::size_t i = 0; i < field.size(); ++i) {
    const auto &a = field[i], &b = noisy[i];
    const double norm = Vec3(a[0], a[1], a[2]).norm();
    sum_ratio += Vec3(b[0] - a[0], b[1] - a[1], b[2] - a[2]).norm() / norm;
  }
  const double mean = sum_ratio / double(field.size());
  CHECK(mean == doctest::Approx(eps).epsilon(0.02));
}

TEST_CASE("perturb_vectors: reproducible bit-for-bit given the seed") {
  StraightVessel v;
  const VecVolume field = generate_vectors(v.mask, v.graph, {3.0});
  const PerturbationSpec spec{PerturbationKind::vector_noise, 0.7, 123};
  CHECK(perturb_vectors(field, spec).data() == perturb_vectors(field, spec).data());
}

TEST_CASE("perturb_image: zero sigma normalizes only, output clipped to [0,1]") {
  ScalarVolume img({4, 4, 4});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = float(i);
  const ScalarVolume out = perturb_image(img, {PerturbationKind::image_noise, 0.0, 5});
  CHECK(out[0] == doctest::Approx(0.0));
  CHECK(out[img.size() - 1] == doctest::Approx(1.0));

  const ScalarVolume noisy = perturb_image(img, {PerturbationKind::image_noise, 0.4, 5});
  for (float v : noisy.data()) {
    CHECK(v >= 0.f);
    CHECK(v <= 1.f);
  }
}

TEST_CASE("perturb_image: noise variance matches sigma squared") {
  const int n = 24;
  ScalarVolume img({n, n, n});
  // Values spread over a mid range so clipping is (almost surely) inactive.
  for (std::size_t i = 0; i < img.size(); ++i)
    img[i] = 0.4f + 0.2f * float(i) / float(img.size());
  img[0] = 0.f;
  img[1] = 1.f;  // pins the normalization
  const double sigma = 0.1;
  const ScalarVolume out = perturb_image(img, {PerturbationKind::image_noise, sigma, 21});

  double sum = 0.0, sum2 = 0.0;
  std::size_t count = 0;
  const float lo = 0.f, hi = 1.f;
  for (std::size_t i = 2; i < img.size(); ++i) {
    const double norm = (img[i] - lo) / (hi - lo);
    const double d = out[i] - norm;
    sum += d;
    sum2 += d * d;
    ++count;
  }
  const double mean = sum / double(count);
  const double var = sum2 / double(count) - mean * mean;
  CHECK(var == doctest::Approx(sigma * sigma).epsilon(0.05));
}

TEST_CASE("perturb_image: constant image is an error") {
  ScalarVolume img({3, 3, 3}, {}, 0.7f);
  CHECK_THROWS_WITH_AS(perturb_image(img, {PerturbationKind::image_noise, 0.1, 0}),
                       doctest::Contains("constant"), VolumeError);
}

TEST_CASE("threshold_segment: boundary cases and phantom round trip") {
  ScalarVolume img({2, 2, 2});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = float(i) / 7.f;
  CHECK(count_foreground(threshold_segment(img, 0.0)) == img.size());
  CHECK(count_foreground(threshold_segment(img, 1.01)) == 0);

  PhantomConfig cfg;
  cfg.seed = 4;
  cfg.dims = {64, 64, 64};
  cfg.n_trees = 2;
  const PhantomResult res = generate(cfg);
  const MaskVolume seg = threshold_segment(res.image, 0.5);
  std::size_t disagree = 0;
  for (std::size_t i = 0; i < seg.size(); ++i) disagree += (seg[i] != res.mask[i]);
  CHECK(double(disagree) / double(seg.size()) < 0.05);
}

TEST_CASE("vectors: iterated following converges at the root") {
  StraightVessel v(24, 3.0);
  const double step = 3.0;
  const VecVolume field = generate_vectors(v.mask, v.graph, {step});
  const Vec3 root = v.graph.nodes[0].pos;

  // Arc length from the far end is ~22; bound is arc/step + 2 iterations.
  const int max_iters = int(22.0 / step) + 2;
  for (const Vec3 start : {Vec3(3, 8, 8), Vec3(5, 8, 10), Vec3(12, 6, 8)}) {
    Vec3 pos = start;
    bool converged = false;
    for (int i = 0; i < max_iters && !converged; ++i) {
      const int z = int(std::lround(pos.z)), y = int(std::lround(pos.y)),
                x = int(std::lround(pos.x));
      if (!v.mask.in_bounds(z, y, x)) break;
      const Vec3 vec = vec_at(field, z, y, x);
      if (vec.norm() == 0.0 && v.mask.at(z, y, x)) {
        converged = true;  // landed on the root voxel
        break;
      }
      pos += vec;
      if (distance(pos, root) <= step) converged = true;
    }
    CHECK(converged);
  }
}
