#include "vtrace/flowfield.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "vtrace/rng.hpp"

namespace vtrace {

namespace {

struct GraphEdge {
  int child_idx;
  int parent_idx;
  double radius;  // child node radius
};

// Uniform spatial hash over edge segments for exact nearest-edge queries.
class EdgeHash {
 public:
  EdgeHash(const SkeletonGraph& g, const std::vector<GraphEdge>& edges, double cell)
      : graph_(g), edges_(edges), cell_(cell) {
    for (std::size_t e = 0; e < edges_.size(); ++e) {
      const Vec3& a = g.nodes[edges_[e].child_idx].pos;
      const Vec3& b = g.nodes[edges_[e].parent_idx].pos;
      const int z0 = cell_of(std::min(a.z, b.z)), z1 = cell_of(std::max(a.z, b.z));
      const int y0 = cell_of(std::min(a.y, b.y)), y1 = cell_of(std::max(a.y, b.y));
      const int x0 = cell_of(std::min(a.x, b.x)), x1 = cell_of(std::max(a.x, b.x));
      for (int z = z0; z <= z1; ++z)
        for (int y = y0; y <= y1; ++y)
          for (int x = x0; x <= x1; ++x) {
            cells_[pack(z, y, x)].push_back(int(e));
            lo_[0] = std::min(lo_[0], z), hi_[0] = std::max(hi_[0], z);
            lo_[1] = std::min(lo_[1], y), hi_[1] = std::max(hi_[1], y);
            lo_[2] = std::min(lo_[2], x), hi_[2] = std::max(hi_[2], x);
          }
    }
  }

  // Exact nearest edge by point-to-segment distance; ties -> lower edge index.
  int nearest(const Vec3& p, double* dist_out, Vec3* point_out) const {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    Vec3 best_point;
    const int cz = cell_of(p.z), cy = cell_of(p.y), cx = cell_of(p.x);
    // Rings past this cover every occupied cell.
    const int last_ring =
        std::max({std::abs(cz - lo_[0]), std::abs(cz - hi_[0]), std::abs(cy - lo_[1]),
                  std::abs(cy - hi_[1]), std::abs(cx - lo_[2]), std::abs(cx - hi_[2])});
    for (int ring = 0; ring <= last_ring; ++ring) {
      // A cell on this ring only holds points at distance >= (ring-1)*cell.
      if (best >= 0 && best_d <= (ring - 1) * cell_) break;
      for (int z = cz - ring; z <= cz + ring; ++z)
        for (int y = cy - ring; y <= cy + ring; ++y)
          for (int x = cx - ring; x <= cx + ring; ++x) {
            if (std::max({std::abs(z - cz), std::abs(y - cy), std::abs(x - cx)}) != ring)
              continue;
            auto it = cells_.find(pack(z, y, x));
            if (it == cells_.end()) continue;
            for (int e : it->second) {
              Vec3 q = closest_point_on_segment(p, graph_.nodes[edges_[e].child_idx].pos,
                                                graph_.nodes[edges_[e].parent_idx].pos);
              const double d = distance(p, q);
              if (d < best_d - 1e-12 || (std::abs(d - best_d) <= 1e-12 && e < best)) {
                best = e;
                best_d = d;
                best_point = q;
              }
            }
          }
    }
    if (dist_out) *dist_out = best_d;
    if (point_out) *point_out = best_point;
    return best;
  }

 private:
  int cell_of(double v) const { return int(std::floor(v / cell_)); }
  static std::int64_t pack(int z, int y, int x) {
    return (std::int64_t(z) << 42) ^ (std::int64_t(y) << 21) ^ std::int64_t(x & 0x1FFFFF);
  }

  const SkeletonGraph& graph_;
  const std::vector<GraphEdge>& edges_;
  double cell_;
  int lo_[3] = {1 << 28, 1 << 28, 1 << 28};
  int hi_[3] = {-(1 << 28), -(1 << 28), -(1 << 28)};
  std::unordered_map<std::int64_t, std::vector<int>> cells_;
};

std::vector<GraphEdge> collect_edges(const SkeletonGraph& g, const GraphIndex& idx) {
  std::vector<GraphEdge> edges;
  std::vector<int> order(g.nodes.size());
  for (std::size_t i = 0; i < g.nodes.size(); ++i) order[i] = int(i);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return g.nodes[a].id < g.nodes[b].id; });
  for (int i : order)
    if (idx.parent_idx[i] >= 0)
      edges.push_back({i, idx.parent_idx[i], g.nodes[i].radius});
  return edges;
}

}  // namespace

VecVolume generate_vectors(const MaskVolume& mask, const SkeletonGraph& graph,
                           const VectorFieldParams& params) {
  if (graph.empty()) throw GraphError("cannot generate vectors for an empty graph");
  if (params.step_size <= 0.0) throw GraphError("step_size must be positive");

  const GraphIndex idx = build_index(graph);
  const std::vector<GraphEdge> edges = collect_edges(graph, idx);
  VecVolume field(mask.dims(), mask.spacing(), {0.f, 0.f, 0.f});
  if (edges.empty()) return field;  // single-node graphs have no centerline

  double max_radius = 0.0;
  for (const auto& e : edges) max_radius = std::max(max_radius, e.radius);
  EdgeHash hash(graph, edges, std::max(4.0, max_radius));

  const GridDims dims = mask.dims();
  for (int z = 0; z < dims.nz; ++z)
    for (int y = 0; y < dims.ny; ++y)
      for (int x = 0; x < dims.nx; ++x) {
        const std::size_t vi = mask.index(z, y, x);
        if (mask[vi] == 0) continue;
        const Vec3 voxel(z, y, x);
        double d;
        Vec3 closest;
        const int e = hash.nearest(voxel, &d, &closest);
        if (e < 0 || d > edges[e].radius) continue;

        // Walk step_size rootward from the closest point, clamping at the root.
        double left = params.step_size;
        Vec3 point = closest;
        int parent = edges[e].parent_idx;
        for (;;) {
          const Vec3& pp = graph.nodes[parent].pos;
          const double seg = distance(point, pp);
          if (left <= seg) {
            point = seg > 0.0 ? point + (pp - point) * (left / seg) : pp;
            break;
          }
          left -= seg;
          point = pp;
          const int up = idx.parent_idx[parent];
          if (up < 0) break;  // reached the root
          parent = up;
        }
        const Vec3 v = point - voxel;
        field[vi] = {float(v.z), float(v.y), float(v.x)};
      }
  return field;
}

ScalarVolume vmf(const VecVolume& field) {
  ScalarVolume out(field.dims(), field.spacing());
  for (std::size_t i = 0; i < field.size(); ++i) {
    const auto& v = field[i];
    out[i] = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  }
  return out;
}

double angle_between(const Vec3& a, const Vec3& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  const double c = std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
  return std::acos(c) * (180.0 / 3.14159265358979323846);
}

VecVolume perturb_vectors(const VecVolume& field, const PerturbationSpec& spec) {
  if (spec.kind != PerturbationKind::vector_noise)
    throw VolumeError("perturb_vectors expects a vector_noise spec");
  VecVolume out = field;
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto& v = out[i];
    const double norm = std::sqrt(double(v[0]) * v[0] + double(v[1]) * v[1] +
                                  double(v[2]) * v[2]);
    if (norm == 0.0) continue;
    CounterRng rng(spec.seed, i);  // per-voxel stream
    const Vec3 u = rng.unit_vector();
    v[0] = float(v[0] + spec.level * norm * u.z);
    v[1] = float(v[1] + spec.level * norm * u.y);
    v[2] = float(v[2] + spec.level * norm * u.x);
  }
  return out;
}

ScalarVolume perturb_image(const ScalarVolume& image, const PerturbationSpec& spec) {
  if (spec.kind != PerturbationKind::image_noise)
    throw VolumeError("perturb_image expects an image_noise spec");
  float lo = std::numeric_limits<float>::max(), hi = std::numeric_limits<float>::lowest();
  for (float v : image.data()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (image.empty() || !(hi > lo))
    throw VolumeError("cannot normalize a constant image");

  ScalarVolume out(image.dims(), image.spacing());
  const double range = double(hi) - double(lo);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double norm = (double(image[i]) - lo) / range;
    CounterRng rng(spec.seed, i);
    const double noisy = norm + spec.level * rng.gaussian();
    out[i] = float(std::clamp(noisy, 0.0, 1.0));
  }
  return out;
}

MaskVolume threshold_segment(const ScalarVolume& image, double threshold) {
  MaskVolume out(image.dims(), image.spacing(), 0);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = image[i] >= threshold ? 1 : 0;
  return out;
}

Vec3 sample_field(const VecVolume& field, const Vec3& pos) {
  const GridDims dims = field.dims();
  if (dims.voxels() == 0) return {};
  const double z = std::clamp(pos.z, 0.0, double(dims.nz - 1));
  const double y = std::clamp(pos.y, 0.0, double(dims.ny - 1));
  const double x = std::clamp(pos.x, 0.0, double(dims.nx - 1));
  const int z0 = std::min(int(z), dims.nz - 1), z1 = std::min(z0 + 1, dims.nz - 1);
  const int y0 = std::min(int(y), dims.ny - 1), y1 = std::min(y0 + 1, dims.ny - 1);
  const int x0 = std::min(int(x), dims.nx - 1), x1 = std::min(x0 + 1, dims.nx - 1);
  const double fz = z - z0, fy = y - y0, fx = x - x0;

  Vec3 acc;
  for (int dz = 0; dz <= 1; ++dz)
    for (int dy = 0; dy <= 1; ++dy)
      for (int dx = 0; dx <= 1; ++dx) {
        const double w = (dz ? fz : 1.0 - fz) * (dy ? fy : 1.0 - fy) * (dx ? fx : 1.0 - fx);
        if (w == 0.0) continue;
        const auto& v = field.at(dz ? z1 : z0, dy ? y1 : y0, dx ? x1 : x0);
        acc += Vec3(v[0], v[1], v[2]) * w;
      }
  return acc;
}

}  // namespace vtrace
