#include <doctest.h>

#include <cmath>

#include "vtrace/components.hpp"
#include "vtrace/edt.hpp"
#include "vtrace/flowfield.hpp"
#include "vtrace/phantom.hpp"
#include "vtrace/rasterize.hpp"
#include "vtrace/rng.hpp"
#include "vtrace/teasar.hpp"

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

// Independent evaluation of the move penalty, written from the formula: for
// each enabled term, ((value / normalizer))^exponent with the boundary term
// using (1 - dbf/m1), summed and scaled.
double reference_penalty(double dbf_n, double vmf_n, double theta_deg,
                         const PenaltyContext& ctx, const PenaltyParams& p) {
  double acc = 0.0;
  if (p.use_dbf) acc += std::pow(1.0 - dbf_n / ctx.m1, double(p.exponent));
  if (p.use_vmf) acc += std::pow(vmf_n / ctx.m2, double(p.exponent));
  if (p.use_angle) acc += std::pow(theta_deg / ctx.m3, double(p.exponent));
  return p.scale * acc;
}

// 3x3x3 scene where everything the penalty reads is pinned: dbf at the
// neighbor, the neighbor's vector (vmf), and the source vector (theta).
struct PenaltyScene {
  ScalarVolume dbf{GridDims{3, 3, 3}};
  VecVolume field{GridDims{3, 3, 3}};
  std::array<int, 3> p{1, 1, 1};
  std::array<int, 3> n;

  PenaltyScene(double dbf_n, const Vec3& v_n, const Vec3& v_p,
               const std::array<int, 3>& n_off)
      : n{1 + n_off[0], 1 + n_off[1], 1 + n_off[2]} {
    dbf.at(n[0], n[1], n[2]) = float(dbf_n);
    field.at(n[0], n[1], n[2]) = {float(v_n.z), float(v_n.y), float(v_n.x)};
    field.at(p[0], p[1], p[2]) = {float(v_p.z), float(v_p.y), float(v_p.x)};
  }

  double run(const PenaltyContext& ctx, const PenaltyParams& params) const {
    return penalty(p, n, dbf, field, ctx, params);
  }

  // Inputs as the implementation sees them, read back from the stored grids.
  double dbf_at_n() const { return dbf.at(n[0], n[1], n[2]); }
  double vmf_at_n() const {
    const auto& v = field.at(n[0], n[1], n[2]);
    return Vec3(v[0], v[1], v[2]).norm();
  }
  double theta() const {
    const auto& v = field.at(p[0], p[1], p[2]);
    return angle_between(Vec3(v[0], v[1], v[2]),
                         Vec3(n[0] - p[0], n[1] - p[1], n[2] - p[2]));
  }
};

double scene_penalty(double dbf_n, const Vec3& v_n, const Vec3& v_p,
                     const std::array<int, 3>& n_off, const PenaltyContext& ctx,
                     const PenaltyParams& params, double* theta_out) {
  const PenaltyScene scene(dbf_n, v_n, v_p, n_off);
  if (theta_out) *theta_out = scene.theta();
  return scene.run(ctx, params);
}

}  // namespace

TEST_CASE("penalty: zero dbf, zero vmf, zero angle gives exactly the scale") {
  PenaltyContext ctx{10.0, 5.0, 180.0};
  PenaltyParams params;
  const double got = scene_penalty(0.0, {0, 0, 0}, {0, 0, 0}, {0, 0, 1}, ctx, params,
                                   nullptr);
  CHECK(got == doctest::Approx(1'000'000.0).epsilon(1e-12));
}

TEST_CASE("penalty: angle term alone at 180 degrees gives the scale") {
  PenaltyContext ctx{10.0, 5.0, 180.0};
  PenaltyParams params;
  params.use_dbf = false;
  params.use_vmf = false;
  // Source vector opposite to the walk direction.
  const double got =
      scene_penalty(3.0, {1, 1, 1}, {0, 0, -1}, {0, 0, 1}, ctx, params, nullptr);
  CHECK(got == doctest::Approx(1'000'000.0).epsilon(1e-12));
}

TEST_CASE("penalty: random triples match the independent formula to 1e-10") {
  CounterRng rng(77, 0);
  PenaltyContext ctx{7.3, 4.1, 180.0};
  const auto& offs = neighbor_offsets_26();
  for (int trial = 0; trial < 500; ++trial) {
    PenaltyParams params;
    params.use_dbf = rng.next_double() < 0.8;
    params.use_vmf = rng.next_double() < 0.8;
    params.use_angle = rng.next_double() < 0.8;
    const double dbf_n = rng.uniform(0.0, 7.0);
    const Vec3 v_n(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
    const Vec3 v_p(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
    const auto off = offs[std::size_t(rng.uniform_int(0, 25))];

    const PenaltyScene scene(dbf_n, v_n, v_p, off);
    const double got = scene.run(ctx, params);
    // The grids store float32; the reference reads the stored values back so
    // both sides see identical inputs.
    const double want =
        reference_penalty(scene.dbf_at_n(), scene.vmf_at_n(), scene.theta(), ctx, params);
    CHECK(got == doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("penalty: non-neighbor voxel is an error") {
  ScalarVolume dbf({4, 4, 4});
  VecVolume field({4, 4, 4});
  PenaltyContext ctx;
  PenaltyParams params;
  CHECK_THROWS_WITH_AS(penalty({0, 0, 0}, {0, 0, 2}, dbf, field, ctx, params),
                       doctest::Contains("neighbor"), GraphError);
  CHECK_THROWS_AS(penalty({1, 1, 1}, {1, 1, 1}, dbf, field, ctx, params), GraphError);
}

TEST_CASE("penalty: monotone in dbf and angle") {
  PenaltyContext ctx{10.0, 5.0, 180.0};
  PenaltyParams only_dbf;
  only_dbf.use_vmf = only_dbf.use_angle = false;
  double prev = 1e18;
  for (double d = 0.0; d <= 9.0; d += 0.5) {
    const double cur = scene_penalty(d, {0, 0, 0}, {0, 0, 0}, {0, 0, 1}, ctx, only_dbf,
                                     nullptr);
    CHECK(cur < prev);
    prev = cur;
  }

  PenaltyParams only_angle;
  only_angle.use_dbf = only_angle.use_vmf = false;
  prev = -1.0;
  for (double a = 10.0; a <= 170.0; a += 20.0) {
    const double rad = a * 3.14159265358979323846 / 180.0;
    // Source vector rotated `a` degrees away from the +x walk direction.
    const Vec3 vp(0.0, std::sin(rad), std::cos(rad));
    const double cur = scene_penalty(3.0, {0, 0, 0}, vp, {0, 0, 1}, ctx, only_angle,
                                     nullptr);
    CHECK(cur > prev);
    prev = cur;
  }
}

TEST_CASE("penalty context: maxima raised to 1.01 and m3 fixed at 180") {
  MaskVolume mask({2, 2, 2}, {}, 1);
  mask.at(0, 0, 0) = 0;
  ScalarVolume dbf({2, 2, 2});
  ScalarVolume mag({2, 2, 2});
  dbf.at(1, 1, 1) = 4.0f;
  mag.at(0, 1, 1) = 2.5f;
  const PenaltyContext ctx = make_penalty_context(mask, dbf, mag);
  CHECK(ctx.m1 == doctest::Approx(std::pow(4.0, 1.01)).epsilon(1e-12));
  CHECK(ctx.m2 == doctest::Approx(std::pow(2.5, 1.01)).epsilon(1e-12));
  CHECK(ctx.m3 == 180.0);
  CHECK(ctx.m1 > 4.0);
  CHECK(ctx.m2 > 2.5);
}

TEST_CASE("penalty context: maxima at or below one still keep strict bounds") {
  MaskVolume mask({2, 2, 2}, {}, 1);
  mask.at(0, 0, 0) = 0;
  ScalarVolume dbf({2, 2, 2});
  ScalarVolume mag({2, 2, 2});
  dbf.at(1, 1, 1) = 1.0f;
  mag.at(1, 1, 1) = 0.5f;
  const PenaltyContext ctx = make_penalty_context(mask, dbf, mag);
  CHECK(ctx.m1 > 1.0);
  CHECK(ctx.m2 > 0.5);
}

TEST_CASE("mask_radius: endpoints and midpoint of the interpolation") {
  AdaptiveMaskParams p;
  p.s_min = 1.1;
  p.s_max = 1.5;
  p.c_min = 2.0;
  p.c_max = 10.0;
  p.r_min = 1.0;
  p.r_max = 5.0;
  p.auto_bounds = false;

  CHECK(mask_radius(p.r_min, p) == doctest::Approx(1.1 * 1.0 + 2.0));
  CHECK(mask_radius(p.r_max, p) == doctest::Approx(1.5 * 5.0 + 10.0));

  const double mid = 3.0;  // alpha = 0.5 by hand
  const double scale = 1.1 + 0.5 * (1.5 - 1.1);
  const double offset = 2.0 + 0.5 * (10.0 - 2.0);
  CHECK(mask_radius(mid, p) == doctest::Approx(scale * mid + offset));

  // Clamped outside the bounds.
  CHECK(mask_radius(0.1, p) == doctest::Approx(1.1 * 0.1 + 2.0));
  CHECK(mask_radius(50.0, p) == doctest::Approx(1.5 * 50.0 + 10.0));
}

namespace {

// Straight vessel with the root at high z, fully interior so the capsule's
// spherical end caps are not clipped by the volume.
struct VesselScene {
  SkeletonGraph graph;
  MaskVolume mask;
  VecVolume field;
  ScalarVolume dbf;
  Vec3 root;

  explicit VesselScene(double radius = 3.5, int len = 34, GridDims dims = {46, 20, 20}) {
    root = Vec3(len + 6, 10, 10);
    graph.nodes.push_back(make_node(0, root, radius, -1));
    graph.nodes.push_back(make_node(1, {6, 10, 10}, radius, 0));
    mask = rasterize(graph, dims);
    field = generate_vectors(mask, graph, {3.0});
    dbf = euclidean_distance_transform(mask);
  }
};

}  // namespace

TEST_CASE("detect_roots: straight vessel yields one cluster at the root") {
  VesselScene scene;
  const std::vector<Vec3> roots = detect_roots(scene.mask, scene.field, scene.dbf, {});
  REQUIRE(!roots.empty());
  double best = 1e9;
  for (const Vec3& r : roots) best = std::min(best, distance(r, scene.root));
  CHECK(best <= 2.0);
  CHECK(roots.size() == 1);
}

TEST_CASE("detect_roots: zero field makes every seed a sink") {
  MaskVolume mask({12, 12, 12});
  for (int z = 2; z < 10; ++z)
    for (int y = 2; y < 10; ++y)
      for (int x = 2; x < 10; ++x) mask.at(z, y, x) = 1;
  const ScalarVolume dbf = euclidean_distance_transform(mask);
  VecVolume field(mask.dims());
  const std::vector<Vec3> roots = detect_roots(mask, field, dbf, {});
  // Seeds (dbf >= 3) all become sinks immediately and cluster into one blob.
  REQUIRE(!roots.empty());
  const Vec3 center(5.5, 5.5, 5.5);
  for (const Vec3& r : roots) CHECK(distance(r, center) < 4.0);
}

TEST_CASE("detect_roots: every phantom root is found within two voxels") {
  PhantomConfig cfg;
  cfg.seed = 21;
  cfg.dims = {96, 96, 96};
  cfg.n_trees = 3;
  cfg.root_radius = 4.5;
  const PhantomResult res = generate(cfg);
  const VecVolume field = generate_vectors(res.mask, res.graph, {3.0});
  const ScalarVolume dbf = euclidean_distance_transform(res.mask);
  const std::vector<Vec3> detected = detect_roots(res.mask, field, dbf, {});

  int found = 0;
  for (const auto& n : res.graph.nodes) {
    if (n.parent >= 0) continue;
    double best = 1e9;
    for (const Vec3& r : detected) best = std::min(best, distance(r, n.pos));
    found += (best <= 2.0);
  }
  CHECK(found == cfg.n_trees);
}

TEST_CASE("skeletonize: straight cylinder gives one chain near the centerline") {
  VesselScene scene;
  const SkeletonGraph pred =
      skeletonize(scene.mask, scene.field, {scene.root}, SkeletonizeParams{});

  REQUIRE(!pred.empty());
  const auto [b0, b1] = betti_numbers(pred);
  CHECK(b0 == 1);
  CHECK(b1 == 0);

  int branchings = 0;
  for (const auto& n : classify_nodes(pred).nodes) branchings += (n.cls == NodeClass::branching);
  CHECK(branchings == 0);

  for (const auto& n : pred.nodes) {
    CHECK(std::abs(n.pos.y - 10.0) <= 1.5);
    CHECK(std::abs(n.pos.x - 10.0) <= 1.5);
    CHECK(scene.mask.at(int(std::lround(n.pos.z)), int(std::lround(n.pos.y)), int(std::lround(n.pos.x))) == 1);
  }

  // The chain spans the vessel.
  double zmin = 1e9, zmax = -1e9;
  for (const auto& n : pred.nodes) {
    zmin = std::min(zmin, n.pos.z);
    zmax = std::max(zmax, n.pos.z);
  }
  CHECK(zmax - zmin >= 28.0);
}

TEST_CASE("skeletonize: empty mask gives an empty graph, no roots is an error") {
  MaskVolume empty({8, 8, 8});
  VecVolume field({8, 8, 8});
  CHECK(skeletonize(empty, field, {Vec3(1, 1, 1)}, {}).empty());

  VesselScene scene;
  CHECK_THROWS_AS(skeletonize(scene.mask, scene.field, {}, {}), GraphError);
}

TEST_CASE("skeletonize: root far from foreground is an error") {
  VesselScene scene;
  CHECK_THROWS_WITH_AS(
      skeletonize(scene.mask, scene.field, {Vec3(2, 18, 18)}, {}),
      doctest::Contains("snap"), GraphError);
}

TEST_CASE("skeletonize: forest invariants hold on random blob masks") {
  CounterRng rng(31, 0);
  for (int trial = 0; trial < 10; ++trial) {
    MaskVolume mask({20, 20, 20});
    // A few random balls, sometimes overlapping.
    const int balls = rng.uniform_int(1, 4);
    std::vector<Vec3> centers;
    for (int b = 0; b < balls; ++b) {
      const Vec3 c(rng.uniform(4, 15), rng.uniform(4, 15), rng.uniform(4, 15));
      centers.push_back(c);
      const double r = rng.uniform(2.0, 4.0);
      for (int z = 0; z < 20; ++z)
        for (int y = 0; y < 20; ++y)
          for (int x = 0; x < 20; ++x)
            if (distance(Vec3(z, y, x), c) <= r) mask.at(z, y, x) = 1;
    }
    VecVolume field(mask.dims());
    for (std::size_t i = 0; i < field.size(); ++i)
      if (mask[i]) {
        const Vec3 u = rng.unit_vector() * rng.uniform(0.0, 3.0);
        field[i] = {float(u.z), float(u.y), float(u.x)};
      }

    const SkeletonGraph pred = skeletonize(mask, field, {centers.front()}, {});
    validate_forest(pred);
    const auto [b0, b1] = betti_numbers(pred);
    (void)b0;
    CHECK(b1 == 0);
    for (const auto& n : pred.nodes)
      CHECK(mask.at(int(std::lround(n.pos.z)), int(std::lround(n.pos.y)), int(std::lround(n.pos.x))) == 1);
  }
}

TEST_CASE("postprocess: artificially split chain is restored") {
  // Chain of nodes 0..9 along x; break the edge into node 5 and mark the
  // distal part as a rootless fragment.
  SkeletonGraph g;
  for (int i = 0; i < 10; ++i)
    g.nodes.push_back(make_node(i, {5, 5, double(i * 2)}, 2.0, i == 0 ? -1 : i - 1));
  g.nodes[5].parent = -1;
  g.fragment_roots.push_back(5);
  g = classify_nodes(g);
  CHECK(betti_numbers(g).first == 2);

  VecVolume field({12, 12, 24});  // zero field: angle gate passes by convention
  const SkeletonGraph fixed = postprocess_splits(g, field, {});
  CHECK(betti_numbers(fixed) == std::pair<int, int>{1, 0});
  CHECK(fixed.fragment_roots.empty());
  validate_forest(fixed);
}

TEST_CASE("postprocess: distant fragments stay disconnected") {
  SkeletonGraph g;
  g.nodes.push_back(make_node(0, {5, 5, 0}, 2.0, -1));
  g.nodes.push_back(make_node(1, {5, 5, 2}, 2.0, 0));
  g.nodes.push_back(make_node(2, {5, 5, 20}, 2.0, -1));  // > 5 voxels away
  g.nodes.push_back(make_node(3, {5, 5, 22}, 2.0, 2));
  g.fragment_roots.push_back(2);
  g = classify_nodes(g);

  VecVolume field({12, 12, 30});
  const SkeletonGraph out = postprocess_splits(g, field, {});
  CHECK(betti_numbers(out).first == 2);
  CHECK(out.fragment_roots == std::vector<int>{2});
}

TEST_CASE("postprocess: radius gate rejects mismatched candidates") {
  SkeletonGraph g;
  g.nodes.push_back(make_node(0, {5, 5, 0}, 12.0, -1));
  g.nodes.push_back(make_node(1, {5, 5, 2}, 12.0, 0));
  g.nodes.push_back(make_node(2, {5, 5, 5}, 2.0, -1));  // radius diff 10
  g.nodes.push_back(make_node(3, {5, 5, 7}, 2.0, 2));
  g.fragment_roots.push_back(2);
  g = classify_nodes(g);

  VecVolume field({12, 12, 12});
  const SkeletonGraph out = postprocess_splits(g, field, {});
  CHECK(betti_numbers(out).first == 2);
}
