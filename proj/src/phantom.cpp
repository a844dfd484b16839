#include "vtrace/phantom.hpp"

#include <algorithm>
#include <cmath>

#include "vtrace/rasterize.hpp"
#include "vtrace/rng.hpp"

namespace vtrace {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct PlacedSegment {
  Vec3 a, b;
  double radius;
  int tree;
  int parent_end;  // node ids, for adjacency exclusion
  int child_end;
};

double segment_segment_distance(const Vec3& p1, const Vec3& q1, const Vec3& p2,
                                const Vec3& q2) {
  // Standard closest-distance between two segments.
  const Vec3 d1 = q1 - p1, d2 = q2 - p2, r = p1 - p2;
  const double a = d1.norm2(), e = d2.norm2(), f = d2.dot(r);
  double s = 0.0, t = 0.0;
  if (a <= 1e-12 && e <= 1e-12) return r.norm();
  if (a <= 1e-12) {
    t = std::clamp(f / e, 0.0, 1.0);
  } else {
    const double c = d1.dot(r);
    if (e <= 1e-12) {
      s = std::clamp(-c / a, 0.0, 1.0);
    } else {
      const double b = d1.dot(d2);
      const double denom = a * e - b * b;
      if (denom > 1e-12) s = std::clamp((b * f - c * e) / denom, 0.0, 1.0);
      t = (b * s + f) / e;
      if (t < 0.0) {
        t = 0.0;
        s = std::clamp(-c / a, 0.0, 1.0);
      } else if (t > 1.0) {
        t = 1.0;
        s = std::clamp((b - c) / a, 0.0, 1.0);
      }
    }
  }
  const Vec3 c1 = p1 + d1 * s, c2 = p2 + d2 * t;
  return distance(c1, c2);
}

Vec3 perpendicular_of(CounterRng& rng, const Vec3& dir) {
  Vec3 any = rng.unit_vector();
  Vec3 perp = any - dir * any.dot(dir);
  double n = perp.norm();
  if (n < 1e-9) {
    perp = Vec3(dir.y, -dir.z, 0.0);  // fallback perpendicular
    n = perp.norm();
    if (n < 1e-9) perp = Vec3(0.0, dir.x, -dir.y), n = perp.norm();
  }
  return perp * (1.0 / n);
}

Vec3 rotate_toward(const Vec3& dir, const Vec3& perp, double angle) {
  Vec3 out = dir * std::cos(angle) + perp * std::sin(angle);
  return out * (1.0 / out.norm());
}

// Rotates `dir` by a random angle up to `max_angle_rad` around a random axis
// perpendicular to it.
Vec3 jitter_direction(CounterRng& rng, const Vec3& dir, double max_angle_rad) {
  const double angle = rng.uniform(0.0, max_angle_rad);
  return rotate_toward(dir, perpendicular_of(rng, dir), angle);
}

class ForestBuilder {
 public:
  explicit ForestBuilder(const PhantomConfig& cfg) : cfg_(cfg) {}

  SkeletonGraph build() {
    if (cfg_.parallel_pair) {
      build_parallel_pair();
    } else {
      place_and_grow_trees();
    }
    return classify_nodes(graph_);
  }

 private:
  int add_node(const Vec3& pos, double radius, int parent_id) {
    SkeletonNode n;
    n.id = next_id_++;
    n.pos = pos;
    n.radius = radius;
    n.parent = parent_id;
    graph_.nodes.push_back(n);
    return n.id;
  }

  bool inside_safe_box(const Vec3& p, double margin) const {
    return p.z >= margin && p.z <= cfg_.dims.nz - 1 - margin && p.y >= margin &&
           p.y <= cfg_.dims.ny - 1 - margin && p.x >= margin &&
           p.x <= cfg_.dims.nx - 1 - margin;
  }

  // Clearance of a candidate segment against everything already placed.
  // Same-tree segments touching the growth point (or its parent) are exempt.
  bool segment_clear(const Vec3& a, const Vec3& b, double radius, int tree,
                     int from_id, int from_parent_id) const {
    for (const auto& seg : placed_) {
      double needed;
      if (seg.tree != tree) {
        needed = radius + seg.radius + cfg_.min_clearance;
      } else {
        if (seg.child_end == from_id || seg.parent_end == from_id ||
            seg.child_end == from_parent_id || seg.parent_end == from_parent_id)
          continue;
        needed = radius + seg.radius + 1.0;
      }
      if (segment_segment_distance(a, b, seg.a, seg.b) < needed) return false;
    }
    return true;
  }

  void grow_branch(CounterRng& rng, int tree, int start_id, Vec3 pos, Vec3 dir,
                   double radius, int depth) {
    const int n_segments = rng.uniform_int(2, 3);
    int prev_id = start_id;
    int prev_parent = graph_.nodes[start_id].parent;
    Vec3 cur = pos;
    for (int s = 0; s < n_segments; ++s) {
      bool placed = false;
      for (int attempt = 0; attempt < 10 && !placed; ++attempt) {
        const Vec3 cand_dir = jitter_direction(rng, dir, kPi / 6.0);  // <= 30 deg
        const double len =
            rng.uniform(cfg_.segment_length.first, cfg_.segment_length.second);
        const Vec3 nxt = cur + cand_dir * len;
        if (!inside_safe_box(nxt, radius + 1.5)) continue;
        if (!segment_clear(cur, nxt, radius, tree, prev_id, prev_parent)) continue;
        const int nid = add_node(nxt, radius, prev_id);
        placed_.push_back({cur, nxt, radius, tree, prev_id, nid});
        prev_parent = prev_id;
        prev_id = nid;
        cur = nxt;
        dir = cand_dir;
        placed = true;
      }
      if (!placed) return;  // boxed in; branch terminates here
    }

    if (depth < cfg_.max_depth && rng.next_double() < cfg_.branch_prob) {
      const double child_radius = std::max(1.2, radius * cfg_.taper);
      // Siblings split to opposite sides of a shared axis so the mutual
      // branch angle stays wide enough to resolve at voxel scale.
      const Vec3 axis = perpendicular_of(rng, dir);
      for (int c = 0; c < 2; ++c) {
        const double split = rng.uniform(kPi / 5.6, kPi / 3.6);  // ~32..50 deg
        Vec3 child_dir = rotate_toward(dir, axis, c == 0 ? split : -split);
        grow_branch(rng, tree, prev_id, cur, child_dir, child_radius, depth + 1);
      }
      if (graph_.nodes.back().id != prev_id) return;  // at least one child grew
    }

    // Terminal branch: taper to a narrow tip so the centerline spans the
    // whole rasterized tube instead of stopping a radius short of its cap.
    const double tip_len = radius;
    const Vec3 tip = cur + dir * tip_len;
    if (inside_safe_box(tip, 1.5) &&
        segment_clear(cur, tip, radius * 0.5, tree, prev_id, prev_parent)) {
      add_node(tip, 0.6, prev_id);
      placed_.push_back({cur, tip, radius * 0.5, tree, prev_id, graph_.nodes.back().id});
    }
  }

  void place_and_grow_trees() {
    const double margin = cfg_.root_radius + 2.0;
    if (cfg_.dims.nz - 1 < 2 * margin || cfg_.dims.ny - 1 < 2 * margin ||
        cfg_.dims.nx - 1 < 2 * margin)
      throw PhantomError("dims too small to contain a root sphere");

    CounterRng place_rng(cfg_.seed, 1);
    std::vector<Vec3> roots;
    for (int t = 0; t < cfg_.n_trees; ++t) {
      bool grown = false;
      for (int attempt = 0; attempt < 400 && !grown; ++attempt) {
        Vec3 p(place_rng.uniform(margin, cfg_.dims.nz - 1 - margin),
               place_rng.uniform(margin, cfg_.dims.ny - 1 - margin),
               place_rng.uniform(margin, cfg_.dims.nx - 1 - margin));
        bool ok = true;
        for (const Vec3& q : roots)
          if (distance(p, q) < 2.0 * cfg_.root_radius + cfg_.min_clearance + 8.0) {
            ok = false;
            break;
          }
        // The root sphere itself must clear every earlier tree.
        for (const auto& seg : placed_)
          if (ok && segment_segment_distance(p, p, seg.a, seg.b) <
                        cfg_.root_radius + seg.radius + cfg_.min_clearance)
            ok = false;
        if (!ok) continue;

        const int root_id = add_node(p, cfg_.root_radius, -1);
        // Root spheres are obstacles for everything grown later.
        placed_.push_back({p, p, cfg_.root_radius, t, -1, root_id});

        CounterRng rng(cfg_.seed, 100 + 64 * std::uint64_t(t) + std::uint64_t(attempt));
        const Vec3 center(cfg_.dims.nz / 2.0, cfg_.dims.ny / 2.0, cfg_.dims.nx / 2.0);
        Vec3 inward = center - p;
        const double n = inward.norm();
        Vec3 dir = n > 1e-9 ? inward * (1.0 / n) : Vec3(1, 0, 0);
        dir = jitter_direction(rng, dir, kPi / 8.0);
        grow_branch(rng, t, root_id, p, dir, cfg_.root_radius, 1);

        if (graph_.nodes.back().id != root_id) {
          roots.push_back(p);
          grown = true;
        } else {
          // Nothing grew from this spot; retry the tree elsewhere.
          graph_.nodes.pop_back();
          placed_.pop_back();
          --next_id_;
        }
      }
      if (!grown)
        throw PhantomError("cannot place " + std::to_string(cfg_.n_trees) +
                           " roots at clearance " + std::to_string(cfg_.min_clearance));
    }
  }

  // Stress pair: vessel B is straight and thick; vessel A tapers to a long
  // thin tail and converges on B so that their surfaces stay min_clearance
  // apart along the whole length. A boundary-distance-only tracer crossing at
  // the tail is cheaper than threading the tail, which is exactly the failure
  // the direction terms are meant to prevent.
  void build_parallel_pair() {
    const double r0 = cfg_.root_radius;
    const double r_tail = 1.2;
    const int nz = cfg_.dims.nz;
    const double z_lo = std::max(4.0, r0 + 2.0);
    const double z_hi = nz - 1 - z_lo;
    if (z_hi - z_lo < 24.0 || cfg_.dims.nx < int(4 * r0 + 16) ||
        cfg_.dims.ny < int(2 * r0 + 8))
      throw PhantomError("dims too small for a parallel pair");

    CounterRng rng(cfg_.seed, 7);
    const double cy = cfg_.dims.ny / 2.0 + rng.uniform(-2.0, 2.0);
    const double xb = cfg_.dims.nx / 2.0 + r0 + rng.uniform(-1.5, 1.5);
    const double taper_start = 0.30 + rng.uniform(-0.03, 0.03);
    const double taper_end = 0.55 + rng.uniform(-0.03, 0.03);

    auto radius_a = [&](double t) {
      if (t <= taper_start) return r0;
      if (t >= taper_end) return r_tail;
      const double u = (t - taper_start) / (taper_end - taper_start);
      return r0 + u * (r_tail - r0);
    };

    // min_clearance counts voxel planes between the discrete surfaces:
    // 1 -> the surfaces occupy adjacent voxels (one component), 2 -> one
    // background plane separates them. The 0.5 keeps rounding on the
    // intended side of the voxel boundary.
    const double surface_gap = cfg_.min_clearance - 1.0 + 0.5;

    const int n_samples = std::max(12, int((z_hi - z_lo) / 2.0));
    int prev_a = -1, prev_b = -1;
    for (int k = 0; k <= n_samples; ++k) {
      const double t = double(k) / n_samples;
      const double z = z_lo + t * (z_hi - z_lo);
      const double ra = radius_a(t);
      const double xa = xb - (ra + r0 + surface_gap);
      prev_a = add_node(Vec3(z, cy, xa), ra, prev_a);
    }
    for (int k = 0; k <= n_samples; ++k) {
      const double t = double(k) / n_samples;
      const double z = z_lo + t * (z_hi - z_lo);
      prev_b = add_node(Vec3(z, cy, xb), r0, prev_b);
    }
  }

  const PhantomConfig& cfg_;
  SkeletonGraph graph_;
  std::vector<PlacedSegment> placed_;
  int next_id_ = 0;
};

}  // namespace

ScalarVolume gaussian_smooth(const ScalarVolume& image, double sigma) {
  if (sigma <= 0.0) return image;
  const int radius = std::max(1, int(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (double& k : kernel) k /= sum;

  const GridDims d = image.dims();
  ScalarVolume a = image, b(d, image.spacing());
  auto pass = [&](const ScalarVolume& src, ScalarVolume& dst, int axis) {
    const int n[3] = {d.nz, d.ny, d.nx};
    for (int z = 0; z < d.nz; ++z)
      for (int y = 0; y < d.ny; ++y)
        for (int x = 0; x < d.nx; ++x) {
          double acc = 0.0;
          int c[3] = {z, y, x};
          for (int i = -radius; i <= radius; ++i) {
            int cc = std::clamp(c[axis] + i, 0, n[axis] - 1);
            int zz = axis == 0 ? cc : z, yy = axis == 1 ? cc : y, xx = axis == 2 ? cc : x;
            acc += kernel[i + radius] * src.at(zz, yy, xx);
          }
          dst.at(z, y, x) = float(acc);
        }
  };
  pass(a, b, 0);
  pass(b, a, 1);
  pass(a, b, 2);
  return b;
}

PhantomResult generate(const PhantomConfig& config) {
  if (config.n_trees <= 0) throw PhantomError("n_trees must be positive");
  if (config.taper <= 0.0 || config.taper > 1.0)
    throw PhantomError("taper must be in (0, 1]");
  if (config.segment_length.first <= 0.0 ||
      config.segment_length.second < config.segment_length.first)
    throw PhantomError("invalid segment_length range");

  ForestBuilder builder(config);
  PhantomResult out;
  out.graph = builder.build();
  out.mask = rasterize(out.graph, config.dims);

  ScalarVolume gray(config.dims, out.mask.spacing());
  for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = out.mask[i] ? 1.0f : 0.0f;
  out.image = gaussian_smooth(gray, 1.0);
  return out;
}

}  // namespace vtrace
