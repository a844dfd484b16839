#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "vtrace/components.hpp"
#include "vtrace/rasterize.hpp"
#include "vtrace/resample.hpp"
#include "vtrace/skeleton.hpp"
#include "vtrace/swc.hpp"

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

SkeletonGraph chain(int n, Vec3 start = {0, 0, 0}, Vec3 step = {0, 0, 1},
                    double radius = 1.0) {
  SkeletonGraph g;
  for (int i = 0; i < n; ++i)
    g.nodes.push_back(make_node(i, start + step * double(i), radius, i == 0 ? -1 : i - 1));
  return g;
}

int count_class(const SkeletonGraph& g, NodeClass c) {
  int n = 0;
  for (const auto& node : g.nodes) n += (node.cls == c);
  return n;
}

}  // namespace

TEST_CASE("classify: five-node chain") {
  const SkeletonGraph g = classify_nodes(chain(5));
  CHECK(count_class(g, NodeClass::root) == 1);
  CHECK(count_class(g, NodeClass::leaf) == 1);
  CHECK(count_class(g, NodeClass::intermediate) == 3);
  CHECK(count_class(g, NodeClass::branching) == 0);
}

TEST_CASE("classify: node with three children is branching") {
  SkeletonGraph g;
  g.nodes.push_back(make_node(0, {0, 0, 0}, 1, -1));
  g.nodes.push_back(make_node(1, {0, 0, 1}, 1, 0));
  for (int i = 2; i < 5; ++i) g.nodes.push_back(make_node(i, {0, double(i), 2}, 1, 1));
  const SkeletonGraph c = classify_nodes(g);
  CHECK(c.nodes[1].cls == NodeClass::branching);
}

TEST_CASE("classify: isolated node is a root") {
  SkeletonGraph g;
  g.nodes.push_back(make_node(7, {1, 2, 3}, 1, -1));
  CHECK(classify_nodes(g).nodes[0].cls == NodeClass::root);
}

TEST_CASE("classify: cycle is an error") {
  SkeletonGraph g;
  g.nodes.push_back(make_node(0, {0, 0, 0}, 1, 2));
  g.nodes.push_back(make_node(1, {0, 0, 1}, 1, 0));
  g.nodes.push_back(make_node(2, {0, 0, 2}, 1, 1));
  CHECK_THROWS_WITH_AS(classify_nodes(g), doctest::Contains("cycle"), GraphError);
}

TEST_CASE("betti: two trees, empty graph, added chord") {
  SkeletonGraph two = chain(3);
  two.nodes.push_back(make_node(10, {5, 0, 0}, 1, -1));
  two.nodes.push_back(make_node(11, {5, 0, 1}, 1, 10));
  CHECK(betti_numbers(two) == std::pair<int, int>{2, 0});

  CHECK(betti_numbers(SkeletonGraph{}) == std::pair<int, int>{0, 0});

  SkeletonGraph chord = chain(4);
  chord.chords.emplace_back(0, 3);
  CHECK(betti_numbers(chord) == std::pair<int, int>{1, 1});
}

TEST_CASE("resample: straight branch of length four at step one") {
  SkeletonGraph g;
  g.nodes.push_back(make_node(0, {0, 0, 0}, 2.0, -1));
  g.nodes.push_back(make_node(1, {0, 0, 4}, 1.0, 0));
  const SkeletonGraph r = resample(g, 1.0);
  REQUIRE(r.nodes.size() == 5);

  std::vector<double> xs;
  for (const auto& n : r.nodes) xs.push_back(n.pos.x);
  std::sort(xs.begin(), xs.end());
  for (int i = 0; i < 5; ++i) CHECK(xs[i] == doctest::Approx(double(i)));

  // Radii interpolate along arc length.
  for (const auto& n : r.nodes)
    CHECK(n.radius == doctest::Approx(2.0 - 0.25 * n.pos.x));
}

TEST_CASE("resample: step larger than every branch keeps only topological nodes") {
  SkeletonGraph g = chain(6);
  const SkeletonGraph r = resample(g, 100.0);
  REQUIRE(r.nodes.size() == 2);
  CHECK(betti_numbers(r) == std::pair<int, int>{1, 0});
}

TEST_CASE("resample: Y tree verified against an independent arc-length walker") {
  SkeletonGraph g;
  g.nodes.push_back(make_node(0, {0, 0, 0}, 3.0, -1));
  g.nodes.push_back(make_node(1, {0, 0, 3}, 2.5, 0));
  g.nodes.push_back(make_node(2, {0, 0, 7}, 2.0, 1));   // branching
  g.nodes.push_back(make_node(3, {0, 3, 10}, 1.5, 2));
  g.nodes.push_back(make_node(4, {0, -3, 10}, 1.5, 2));
  g = classify_nodes(g);

  const double step = 1.25;
  const SkeletonGraph r = resample(g, step);

  CHECK(betti_numbers(r).first == betti_numbers(g).first);
  CHECK(count_class(r, NodeClass::branching) == count_class(g, NodeClass::branching));
  CHECK(count_class(r, NodeClass::leaf) == count_class(g, NodeClass::leaf));

  // Walker: every original branch polyline re-walked at the step; expect the
  // same multiset of positions among the resampled nodes.
  const GraphIndex idx = build_index(g);
  std::vector<Vec3> expected;
  for (const auto& n : g.nodes)
    if (n.cls != NodeClass::intermediate) expected.push_back(n.pos);
  for (const auto& br : branch_decomposition(g).branches) {
    std::vector<Vec3> pts;
    for (int id : br) pts.push_back(g.nodes[idx.idx_of(id)].pos);
    double total = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i) total += distance(pts[i - 1], pts[i]);
    for (double s = step; s < total - 1e-9; s += step) {
      double left = s;
      for (std::size_t i = 1; i < pts.size(); ++i) {
        const double seg = distance(pts[i - 1], pts[i]);
        if (left <= seg) {
          expected.push_back(pts[i - 1] + (pts[i] - pts[i - 1]) * (left / seg));
          break;
        }
        left -= seg;
      }
    }
  }
  REQUIRE(expected.size() == r.nodes.size());

  auto key = [](const Vec3& p) { return std::tuple(p.z, p.y, p.x); };
  std::vector<std::tuple<double, double, double>> got, want;
  for (const auto& n : r.nodes) got.push_back(key(n.pos));
  for (const auto& p : expected) want.push_back(key(p));
  std::sort(got.begin(), got.end());
  std::sort(want.begin(), want.end());
  for (std::size_t i = 0; i < got.size(); ++i) {
    CHECK(std::get<0>(got[i]) == doctest::Approx(std::get<0>(want[i])).epsilon(1e-9));
    CHECK(std::get<1>(got[i]) == doctest::Approx(std::get<1>(want[i])).epsilon(1e-9));
    CHECK(std::get<2>(got[i]) == doctest::Approx(std::get<2>(want[i])).epsilon(1e-9));
  }
}

TEST_CASE("resample: idempotent at the existing uniform spacing") {
  const SkeletonGraph g = chain(9, {0, 0, 0}, {0, 0, 1.5});
  const SkeletonGraph once = resample(g, 1.5);
  const SkeletonGraph twice = resample(once, 1.5);
  REQUIRE(once.nodes.size() == twice.nodes.size());

  auto sorted_positions = [](const SkeletonGraph& gr) {
    std::vector<std::tuple<double, double, double>> v;
    for (const auto& n : gr.nodes) v.emplace_back(n.pos.z, n.pos.y, n.pos.x);
    std::sort(v.begin(), v.end());
    return v;
  };
  const auto a = sorted_positions(once), b = sorted_positions(twice);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::abs(std::get<2>(a[i]) - std::get<2>(b[i])) < 1e-6);
  }
}

TEST_CASE("rasterize: cylinder along z covers its centerline") {
  SkeletonGraph g;
  g.nodes.push_back(make_node(0, {2, 8, 8}, 2.0, -1));
  g.nodes.push_back(make_node(1, {12, 8, 8}, 2.0, 0));
  const MaskVolume m = rasterize(g, {16, 16, 16});
  for (int z = 2; z <= 12; ++z) CHECK(m.at(z, 8, 8) == 1);
  CHECK(m.at(2, 8, 8 + 3) == 0);  // outside the radius
}

TEST_CASE("rasterize: sub-voxel radius still paints the traversed line") {
  SkeletonGraph g;
  g.nodes.push_back(make_node(0, {1, 4, 4}, 0.4, -1));
  g.nodes.push_back(make_node(1, {7, 4, 4}, 0.4, 0));
  const MaskVolume m = rasterize(g, {9, 9, 9});
  for (int z = 1; z <= 7; ++z) CHECK(m.at(z, 4, 4) == 1);
}

TEST_CASE("rasterize: two separated trees give two mask components") {
  SkeletonGraph g;
  g.nodes.push_back(make_node(0, {4, 4, 4}, 1.5, -1));
  g.nodes.push_back(make_node(1, {14, 4, 4}, 1.5, 0));
  g.nodes.push_back(make_node(2, {4, 14, 14}, 1.5, -1));
  g.nodes.push_back(make_node(3, {14, 14, 14}, 1.5, 2));
  const MaskVolume m = rasterize(g, {20, 20, 20});
  CHECK(connected_components(m).count == 2);
}

TEST_CASE("rasterize: node outside dims is an error") {
  SkeletonGraph g;
  g.nodes.push_back(make_node(0, {0, 0, 30}, 1.0, -1));
  CHECK_THROWS_WITH_AS(rasterize(g, {8, 8, 8}), doctest::Contains("outside"), VolumeError);
}

TEST_CASE("branch decomposition partitions the edge set") {
  SkeletonGraph g;
  g.nodes.push_back(make_node(0, {0, 0, 0}, 1, -1));
  g.nodes.push_back(make_node(1, {0, 0, 1}, 1, 0));
  g.nodes.push_back(make_node(2, {0, 0, 2}, 1, 1));
  g.nodes.push_back(make_node(3, {0, 1, 2}, 1, 2));
  g.nodes.push_back(make_node(4, {0, -1, 2}, 1, 2));
  g.nodes.push_back(make_node(5, {0, 2, 2}, 1, 3));
  const BranchDecomposition d = branch_decomposition(g);

  std::multiset<std::pair<int, int>> edges_in_branches;
  for (const auto& br : d.branches)
    for (std::size_t i = 1; i < br.size(); ++i)
      edges_in_branches.insert({std::min(br[i - 1], br[i]), std::max(br[i - 1], br[i])});
  std::multiset<std::pair<int, int>> edges;
  for (const auto& n : g.nodes)
    if (n.parent >= 0) edges.insert({std::min(n.id, n.parent), std::max(n.id, n.parent)});
  CHECK(edges_in_branches == edges);
}

TEST_CASE("swc: three-node chain round-trips") {
  const auto path = (std::filesystem::temp_directory_path() / "chain.swc").string();
  SkeletonGraph g = classify_nodes(chain(3, {1.25, 2.5, 3.75}, {0.5, 0, 1}, 1.5));
  write_swc(g, path);
  const SkeletonGraph back = read_swc(path);
  REQUIRE(back.nodes.size() == g.nodes.size());
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    CHECK(back.nodes[i].id == g.nodes[i].id);
    CHECK(back.nodes[i].parent == g.nodes[i].parent);
    CHECK(back.nodes[i].cls == g.nodes[i].cls);
    CHECK(back.nodes[i].pos.x == doctest::Approx(g.nodes[i].pos.x).epsilon(1e-6));
    CHECK(back.nodes[i].pos.z == doctest::Approx(g.nodes[i].pos.z).epsilon(1e-6));
    CHECK(back.nodes[i].radius == doctest::Approx(g.nodes[i].radius).epsilon(1e-6));
  }
  std::filesystem::remove(path);
}

TEST_CASE("swc: dangling parent, duplicate id, and cycle are distinct errors") {
  const auto dir = std::filesystem::temp_directory_path();
  const auto path = (dir / "bad.swc").string();

  std::ofstream(path) << "1 1 0 0 0 1.0 -1\n2 2 1 0 0 1.0 99\n";
  CHECK_THROWS_WITH_AS(read_swc(path), doctest::Contains("dangling parent"), GraphError);

  std::ofstream(path) << "1 1 0 0 0 1.0 -1\n1 2 1 0 0 1.0 1\n";
  CHECK_THROWS_WITH_AS(read_swc(path), doctest::Contains("duplicate"), GraphError);

  std::ofstream(path) << "1 2 0 0 0 1.0 3\n2 2 1 0 0 1.0 1\n3 2 2 0 0 1.0 2\n";
  CHECK_THROWS_WITH_AS(read_swc(path), doctest::Contains("cycle"), GraphError);
  std::filesystem::remove(path);
}
