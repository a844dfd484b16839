#include "vtrace/teasar.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <unordered_map>
#include <unordered_set>

#include "vtrace/components.hpp"
#include "vtrace/edt.hpp"

namespace vtrace {

namespace {

double ipow(double x, int e) {
  double r = 1.0;
  for (int i = 0; i < e; ++i) r *= x;
  return r;
}

double guard_max(double max_value) {
  if (max_value <= 0.0) return 1.0;
  const double m = std::pow(max_value, 1.01);
  // pow(x, 1.01) <= x for x <= 1; keep the normalizer strictly above the max.
  return m > max_value ? m : max_value * 1.01;
}

Vec3 field_at(const VecVolume& field, std::size_t i) {
  const auto& v = field[i];
  return {v[0], v[1], v[2]};
}

}  // namespace

PenaltyContext make_penalty_context(const MaskVolume& mask, const ScalarVolume& dbf,
                                    const ScalarVolume& magnitudes) {
  double max_dbf = 0.0, max_vmf = 0.0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] == 0) continue;
    max_dbf = std::max(max_dbf, double(dbf[i]));
    max_vmf = std::max(max_vmf, double(magnitudes[i]));
  }
  PenaltyContext ctx;
  ctx.m1 = guard_max(max_dbf);
  ctx.m2 = guard_max(max_vmf);
  ctx.m3 = 180.0;
  return ctx;
}

double penalty(const std::array<int, 3>& p, const std::array<int, 3>& n,
               const ScalarVolume& dbf, const VecVolume& field,
               const PenaltyContext& ctx, const PenaltyParams& params) {
  const int dz = n[0] - p[0], dy = n[1] - p[1], dx = n[2] - p[2];
  if ((dz == 0 && dy == 0 && dx == 0) || std::abs(dz) > 1 || std::abs(dy) > 1 ||
      std::abs(dx) > 1)
    throw GraphError("penalty: n is not a 26-neighbor of p");

  const std::size_t ni = dbf.index(n[0], n[1], n[2]);
  double acc = 0.0;
  if (params.use_dbf) acc += ipow(1.0 - double(dbf[ni]) / ctx.m1, params.exponent);
  if (params.use_vmf) {
    const double mag = field_at(field, ni).norm();
    acc += ipow(mag / ctx.m2, params.exponent);
  }
  if (params.use_angle) {
    const Vec3 vp = field_at(field, field.index(p[0], p[1], p[2]));
    const double theta = angle_between(vp, Vec3(dz, dy, dx));
    acc += ipow(theta / ctx.m3, params.exponent);
  }
  return params.scale * acc;
}

double mask_radius(double r, const AdaptiveMaskParams& params) {
  double alpha = 0.0;
  if (params.r_max > params.r_min)
    alpha = std::clamp((r - params.r_min) / (params.r_max - params.r_min), 0.0, 1.0);
  const double scale = params.s_min + alpha * (params.s_max - params.s_min);
  const double offset = params.c_min + alpha * (params.c_max - params.c_min);
  return scale * r + offset;
}

std::vector<Vec3> detect_roots(const MaskVolume& mask, const VecVolume& field,
                               const ScalarVolume& dbf,
                               const RootDetectionParams& params) {
  const GridDims dims = mask.dims();
  std::vector<Vec3> sinks;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] == 0 || double(dbf[i]) < params.min_radius) continue;
    int z, y, x;
    mask.coords(i, z, y, x);
    Vec3 pos(z, y, x);
    for (int step = 0; step < params.n_steps; ++step) {
      const Vec3 v = sample_field(field, pos);
      if (params.step * v.norm() < params.tolerance) {
        sinks.push_back(pos);
        break;
      }
      pos += v * params.step;
      pos.z = std::clamp(pos.z, 0.0, double(dims.nz - 1));
      pos.y = std::clamp(pos.y, 0.0, double(dims.ny - 1));
      pos.x = std::clamp(pos.x, 0.0, double(dims.nx - 1));
    }
  }

  // Single-linkage clustering of sinks within 2 voxels, via a 2-voxel grid.
  const double cell = 2.0;
  std::unordered_map<std::int64_t, std::vector<int>> grid;
  auto pack = [](int z, int y, int x) {
    return (std::int64_t(z) << 42) ^ (std::int64_t(y) << 21) ^ std::int64_t(x & 0x1FFFFF);
  };
  std::vector<int> uf(sinks.size());
  for (std::size_t i = 0; i < sinks.size(); ++i) uf[i] = int(i);
  auto find = [&](int a) {
    while (uf[a] != a) {
      uf[a] = uf[uf[a]];
      a = uf[a];
    }
    return a;
  };
  for (std::size_t i = 0; i < sinks.size(); ++i) {
    const int cz = int(std::floor(sinks[i].z / cell));
    const int cy = int(std::floor(sinks[i].y / cell));
    const int cx = int(std::floor(sinks[i].x / cell));
    for (int z = cz - 1; z <= cz + 1; ++z)
      for (int y = cy - 1; y <= cy + 1; ++y)
        for (int x = cx - 1; x <= cx + 1; ++x) {
          auto it = grid.find(pack(z, y, x));
          if (it == grid.end()) continue;
          for (int j : it->second)
            if (distance(sinks[i], sinks[j]) <= 2.0) uf[find(int(i))] = find(j);
        }
    grid[pack(cz, cy, cx)].push_back(int(i));
  }

  std::unordered_map<int, std::pair<Vec3, int>> clusters;  // root -> (sum, count)
  std::vector<int> order;  // cluster representatives in first-seen order
  for (std::size_t i = 0; i < sinks.size(); ++i) {
    const int r = find(int(i));
    auto it = clusters.find(r);
    if (it == clusters.end()) {
      clusters[r] = {sinks[i], 1};
      order.push_back(r);
    } else {
      it->second.first += sinks[i];
      it->second.second += 1;
    }
  }
  std::vector<Vec3> roots;
  roots.reserve(order.size());
  for (int r : order) {
    const auto& [sum, count] = clusters[r];
    roots.push_back(sum * (1.0 / count));
  }
  return roots;
}

namespace {

// One skeletonization pass over a volume; owns the reusable search buffers.
class Tracer {
 public:
  Tracer(const MaskVolume& mask, const VecVolume& field, const SkeletonizeParams& params)
      : mask_(mask),
        field_(field),
        params_(params),
        dbf_(euclidean_distance_transform(mask)),
        labels_(connected_components(mask)),
        ctx_(make_penalty_context(mask, dbf_, vmf(field))),
        processed_(mask.size(), 0),
        dist_(mask.size(), 0.0),
        pred_(mask.size(), -1),
        stamp_(mask.size(), 0),
        geo_(mask.size(), -1) {
    const auto& offs = neighbor_offsets_26();
    for (std::size_t k = 0; k < offs.size(); ++k)
      move_len_[k] = std::sqrt(double(offs[k][0] * offs[k][0] + offs[k][1] * offs[k][1] +
                                      offs[k][2] * offs[k][2]));
  }

  SkeletonGraph run(const std::vector<Vec3>& roots) {
    std::vector<std::size_t> snapped;
    snapped.reserve(roots.size());
    for (const Vec3& r : roots) snapped.push_back(snap_root(r));

    for (std::uint32_t label = 1; label <= labels_.count; ++label) {
      std::vector<std::size_t> comp_roots;
      for (std::size_t s : snapped)
        if (labels_.labels[s] == label) comp_roots.push_back(s);

      std::vector<std::size_t> comp_voxels;
      for (std::size_t i = 0; i < mask_.size(); ++i)
        if (labels_.labels[i] == label) comp_voxels.push_back(i);

      bool fragment = false;
      if (comp_roots.empty()) {
        // No root reached this component: trace it from its thickest voxel
        // and hand the resulting tree to the split postprocess.
        std::size_t best = comp_voxels.front();
        for (std::size_t v : comp_voxels)
          if (dbf_[v] > dbf_[best]) best = v;
        comp_roots.push_back(best);
        fragment = true;
      }
      trace_component(comp_voxels, comp_roots, fragment);
    }
    return std::move(out_);
  }

 private:
  std::size_t snap_root(const Vec3& r) {
    const GridDims dims = mask_.dims();
    const int rad = int(std::ceil(params_.snap_radius));
    const int z0 = std::max(0, int(std::floor(r.z)) - rad);
    const int z1 = std::min(dims.nz - 1, int(std::ceil(r.z)) + rad);
    const int y0 = std::max(0, int(std::floor(r.y)) - rad);
    const int y1 = std::min(dims.ny - 1, int(std::ceil(r.y)) + rad);
    const int x0 = std::max(0, int(std::floor(r.x)) - rad);
    const int x1 = std::min(dims.nx - 1, int(std::ceil(r.x)) + rad);

    double best_d = std::numeric_limits<double>::infinity();
    std::size_t best = 0;
    bool found = false;
    for (int z = z0; z <= z1; ++z)
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          if (mask_.at(z, y, x) == 0) continue;
          const double d = distance(r, Vec3(z, y, x));
          if (d <= params_.snap_radius && d < best_d) {
            best_d = d;
            best = mask_.index(z, y, x);
            found = true;
          }
        }
    if (!found)
      throw GraphError("root is farther than the snap radius from any foreground voxel");
    return best;
  }

  void trace_component(const std::vector<std::size_t>& comp_voxels,
                       const std::vector<std::size_t>& comp_roots, bool fragment) {
    // Resolve adaptive-mask radius bounds from the component's DBF.
    AdaptiveMaskParams amp = params_.mask;
    if (amp.auto_bounds) {
      std::vector<float> values;
      values.reserve(comp_voxels.size());
      for (std::size_t v : comp_voxels) values.push_back(dbf_[v]);
      std::sort(values.begin(), values.end());
      amp.r_min = values[std::size_t(0.05 * double(values.size() - 1))];
      amp.r_max = values[std::size_t(0.95 * double(values.size() - 1))];
      if (!(amp.r_max > amp.r_min)) amp.r_max = amp.r_min + 1.0;
    }

    geodesic_bfs(comp_roots);

    // Endpoint order: farthest first, ties to the lexicographically smaller
    // voxel (comp_voxels is already in scan order).
    std::vector<std::size_t> order = comp_voxels;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return geo_[a] > geo_[b]; });

    std::unordered_map<std::size_t, int> root_serial;
    for (std::size_t i = 0; i < comp_roots.size(); ++i)
      root_serial[comp_roots[i]] = int(i) + serial_base_;
    serial_base_ += int(comp_roots.size());

    for (std::size_t endpoint : order) {
      if (processed_[endpoint]) continue;
      const std::vector<std::size_t> path = search_path(endpoint, root_serial);
      mark_processed(path, amp);
      emit_path(path, root_serial);
    }

    if (fragment) {
      // The provisional root (thickest voxel) heads the fragment's tree.
      auto it = serial_root_node_.find(root_serial.at(comp_roots.front()));
      if (it != serial_root_node_.end()) out_.fragment_roots.push_back(it->second);
    }
  }

  // Multi-source BFS over the 26-neighborhood with unit edge weights.
  void geodesic_bfs(const std::vector<std::size_t>& sources) {
    for (std::size_t i = 0; i < geo_.size(); ++i) geo_[i] = -1;
    std::queue<std::size_t> q;
    for (std::size_t s : sources) {
      geo_[s] = 0;
      q.push(s);
    }
    const auto& offs = neighbor_offsets_26();
    while (!q.empty()) {
      const std::size_t u = q.front();
      q.pop();
      int z, y, x;
      mask_.coords(u, z, y, x);
      for (const auto& o : offs) {
        const int nz = z + o[0], ny = y + o[1], nx = x + o[2];
        if (!mask_.in_bounds(nz, ny, nx)) continue;
        const std::size_t v = mask_.index(nz, ny, nx);
        if (mask_[v] == 0 || geo_[v] >= 0) continue;
        geo_[v] = geo_[u] + 1;
        q.push(v);
      }
    }
  }

  // Dijkstra from the endpoint. Targets are the component's root voxels and
  // every voxel of an already-accepted path, so a new trace attaches at its
  // cheapest contact with the existing skeleton instead of running parallel
  // to it. The first target popped is the cheapest.
  std::vector<std::size_t> search_path(
      std::size_t endpoint, const std::unordered_map<std::size_t, int>& root_serial) {
    ++stamp_now_;
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    dist_[endpoint] = 0.0;
    pred_[endpoint] = -1;
    stamp_[endpoint] = stamp_now_;
    heap.push({0.0, endpoint});

    auto is_target = [&](std::size_t v) {
      return raw_owner_.count(v) > 0 || root_serial.count(v) > 0;
    };

    const auto& offs = neighbor_offsets_26();
    std::size_t target = endpoint;
    bool found = is_target(endpoint);
    while (!found && !heap.empty()) {
      const auto [d, u] = heap.top();
      heap.pop();
      if (stamp_[u] != stamp_now_ || d > dist_[u]) continue;
      if (is_target(u)) {
        target = u;
        found = true;
        break;
      }
      int z, y, x;
      mask_.coords(u, z, y, x);
      const std::array<int, 3> pu{z, y, x};
      for (std::size_t k = 0; k < offs.size(); ++k) {
        const int nz = z + offs[k][0], ny = y + offs[k][1], nx = x + offs[k][2];
        if (!mask_.in_bounds(nz, ny, nx)) continue;
        const std::size_t v = mask_.index(nz, ny, nx);
        if (mask_[v] == 0) continue;
        const std::array<int, 3> pv{nz, ny, nx};
        const double c =
            d + penalty(pu, pv, dbf_, field_, ctx_, params_.penalty) + move_len_[k] * 1e-6;
        if (stamp_[v] != stamp_now_ || c < dist_[v]) {
          stamp_[v] = stamp_now_;
          dist_[v] = c;
          pred_[v] = std::int64_t(u);
          heap.push({c, v});
        }
      }
    }
    if (!found)
      throw GraphError("internal: no root reachable inside a traced component");

    std::vector<std::size_t> path;
    for (std::int64_t v = std::int64_t(target); v >= 0; v = pred_[v]) {
      path.push_back(std::size_t(v));
      if (std::size_t(v) == endpoint) break;
    }
    std::reverse(path.begin(), path.end());  // endpoint .. target
    return path;
  }

  void mark_processed(const std::vector<std::size_t>& path, const AdaptiveMaskParams& amp) {
    const GridDims dims = mask_.dims();
    for (std::size_t i = 0; i < path.size(); ++i) {
      // Local radius: max DBF in a 5-voxel window along the path.
      double local_r = 0.0;
      const std::size_t j0 = i >= 2 ? i - 2 : 0;
      const std::size_t j1 = std::min(path.size() - 1, i + 2);
      for (std::size_t j = j0; j <= j1; ++j) local_r = std::max(local_r, double(dbf_[path[j]]));

      const double d = mask_radius(local_r, amp);
      const int rad = int(std::ceil(d));
      int z, y, x;
      mask_.coords(path[i], z, y, x);
      for (int dz = -rad; dz <= rad; ++dz)
        for (int dy = -rad; dy <= rad; ++dy)
          for (int dx = -rad; dx <= rad; ++dx) {
            const int nz = z + dz, ny = y + dy, nx = x + dx;
            if (nz < 0 || nz >= dims.nz || ny < 0 || ny >= dims.ny || nx < 0 ||
                nx >= dims.nx)
              continue;
            if (double(dz * dz + dy * dy + dx * dx) > d * d) continue;
            processed_[mask_.index(nz, ny, nx)] = 1;
          }
      processed_[path[i]] = 1;
    }
  }

  Vec3 voxel_pos(std::size_t voxel) const {
    int z, y, x;
    mask_.coords(voxel, z, y, x);
    return Vec3(z, y, x);
  }

  // Downsamples a raw 26-neighbor voxel path to roughly one node per voxel
  // step of true arc length: keeps a subsequence of path voxels such that the
  // skipped staircase stays within 0.7 voxels of the replacing chord and no
  // hop exceeds 3 voxels.
  std::vector<std::size_t> downsample_path(const std::vector<std::size_t>& path) const {
    std::vector<std::size_t> kept{0};
    std::size_t i = 0;
    while (i + 1 < path.size()) {
      std::size_t best = i + 1;
      const Vec3 pi = voxel_pos(path[i]);
      for (std::size_t j = i + 2; j < path.size(); ++j) {
        const Vec3 pj = voxel_pos(path[j]);
        if (distance(pi, pj) > 3.0) break;
        bool ok = true;
        for (std::size_t k = i + 1; k < j && ok; ++k) {
          const Vec3 pk = voxel_pos(path[k]);
          ok = distance(pk, closest_point_on_segment(pk, pi, pj)) <= 0.7;
        }
        if (ok) best = j;
      }
      kept.push_back(best);
      i = best;
    }
    return kept;
  }

  // Sub-voxel centering: average raw voxel centers over a 5-step window of
  // the owning path. Must still round onto a foreground voxel; falls back to
  // the raw center at sharp thin corners where the average leaves the tube.
  Vec3 smoothed_pos(const std::vector<std::size_t>& voxels, std::size_t i) const {
    const std::size_t j0 = i >= 2 ? i - 2 : 0;
    const std::size_t j1 = std::min(voxels.size() - 1, i + 2);
    Vec3 acc;
    for (std::size_t j = j0; j <= j1; ++j) acc += voxel_pos(voxels[j]);
    const Vec3 mean = acc * (1.0 / double(j1 - j0 + 1));
    const int z = int(std::lround(mean.z)), y = int(std::lround(mean.y)),
              x = int(std::lround(mean.x));
    if (mask_.in_bounds(z, y, x) && mask_.at(z, y, x) != 0) return mean;
    return voxel_pos(voxels[i]);
  }

  int make_node(const Vec3& pos, std::size_t radius_voxel) {
    SkeletonNode n;
    n.id = int(out_.nodes.size());
    n.pos = pos;
    n.radius = std::max(0.5, double(dbf_[radius_voxel]));
    n.parent = -1;
    out_.nodes.push_back(n);
    return n.id;
  }

  // Node at raw position `pos` of an already-emitted path: the kept node if
  // one exists there, otherwise a new node splitting the bracketing edge.
  // `override_pos`, when finite, refines the split node's position.
  int node_on_path(int path_idx, std::size_t pos, const Vec3* override_pos = nullptr) {
    TracedPath& owner = paths_[path_idx];
    const auto it = std::lower_bound(owner.kept.begin(), owner.kept.end(), pos);
    const std::size_t k = std::size_t(it - owner.kept.begin());
    if (it != owner.kept.end() && *it == pos) return owner.kept_nodes[k];

    // pos lies strictly inside the kept edge (kept[k-1], kept[k]).
    const int child = owner.kept_nodes[k - 1];
    const int parent = owner.kept_nodes[k];
    const Vec3 node_pos = override_pos ? *override_pos : smoothed_pos(owner.voxels, pos);
    const int node = make_node(node_pos, owner.voxels[pos]);
    out_.nodes[child].parent = node;
    out_.nodes[node].parent = parent;
    owner.kept.insert(it, pos);
    owner.kept_nodes.insert(owner.kept_nodes.begin() + k, node);
    return node;
  }

  // Attaches an incoming path to `owner` near the discrete contact voxel.
  // The discrete contact lands wherever the two staircases first share a
  // voxel, typically a little past the true junction; the incoming chain's
  // approach ray intersected with the owner's centerline recovers it.
  int refit_attach(int path_idx, std::size_t contact, const std::vector<std::size_t>& bpath,
                   const std::vector<Vec3>& bsmooth) {
    TracedPath& owner = paths_[path_idx];
    const std::size_t n = bpath.size();
    if (n < 5) return node_on_path(path_idx, contact);

    // Approach ray from samples clear of the junction bulge.
    const Vec3 tip = bsmooth[n - 3];
    const Vec3 tail = bsmooth[n >= 8 ? n - 8 : 0];
    Vec3 dir = tip - tail;
    const double dn = dir.norm();
    if (dn < 1e-6) return node_on_path(path_idx, contact);
    dir = dir * (1.0 / dn);
    const Vec3 ray_a = tail;
    const Vec3 ray_b = tip + dir * 8.0;

    // Owner centerline window around the contact.
    const std::size_t lo = contact >= 6 ? contact - 6 : 0;
    const std::size_t hi = std::min(owner.voxels.size() - 1, contact + 6);
    double best_d = std::numeric_limits<double>::infinity();
    std::size_t best_i = contact;
    Vec3 best_point = smoothed_pos(owner.voxels, contact);
    for (std::size_t i = lo; i < hi; ++i) {
      const Vec3 a = smoothed_pos(owner.voxels, i);
      const Vec3 b = smoothed_pos(owner.voxels, i + 1);
      // Closest approach of the ray segment to this centerline segment.
      for (int step = 0; step <= 8; ++step) {
        const Vec3 q = ray_a + (ray_b - ray_a) * (double(step) / 8.0);
        double t;
        const Vec3 p = closest_point_on_segment(q, a, b, &t);
        const double d = distance(q, p);
        if (d < best_d) {
          best_d = d;
          best_i = t < 0.5 ? i : i + 1;
          best_point = p;
        }
      }
    }
    if (best_d > 2.5) return node_on_path(path_idx, contact);

    const int z = int(std::lround(best_point.z)), y = int(std::lround(best_point.y)),
              x = int(std::lround(best_point.x));
    if (!mask_.in_bounds(z, y, x) || mask_.at(z, y, x) == 0)
      return node_on_path(path_idx, contact);

    // Attach at the refit location: reuse a kept node there if one is close,
    // otherwise split with the refit position.
    const auto it = std::lower_bound(owner.kept.begin(), owner.kept.end(), best_i);
    if (it != owner.kept.end() && *it == best_i) {
      const int node = owner.kept_nodes[std::size_t(it - owner.kept.begin())];
      if (distance(out_.nodes[node].pos, best_point) <= 0.8) return node;
    }
    // Splitting requires a strictly interior raw index.
    if (std::binary_search(owner.kept.begin(), owner.kept.end(), best_i)) {
      // Kept node at that index but the refit point is meaningfully away;
      // fall back to the plain attach.
      return node_on_path(path_idx, contact);
    }
    return node_on_path(path_idx, best_i, &best_point);
  }

  void emit_path(const std::vector<std::size_t>& path,
                 const std::unordered_map<std::size_t, int>& root_serial) {
    const std::size_t last = path.back();

    std::vector<Vec3> smooth(path.size());
    for (std::size_t i = 0; i < path.size(); ++i) smooth[i] = smoothed_pos(path, i);

    int attach = -1;  // existing node the new chain hangs onto
    int serial;
    auto owned = raw_owner_.find(last);
    if (owned != raw_owner_.end()) {
      serial = paths_[owned->second.first].serial;
      if (path.size() == 1) return;  // endpoint already on the skeleton
      attach = refit_attach(owned->second.first, owned->second.second, path, smooth);
    } else {
      serial = root_serial.at(last);  // fresh root: the path becomes the stem
    }

    std::vector<std::size_t> kept = downsample_path(path);
    std::vector<int> kept_nodes(kept.size(), -1);
    if (attach >= 0) kept_nodes.back() = attach;

    for (std::size_t k = 0; k < kept.size(); ++k) {
      if (kept_nodes[k] < 0) kept_nodes[k] = make_node(smooth[kept[k]], path[kept[k]]);
      if (k > 0) {
        SkeletonNode& child = out_.nodes[kept_nodes[k - 1]];
        if (child.parent == -1 && kept_nodes[k - 1] != kept_nodes[k])
          child.parent = kept_nodes[k];
      }
    }
    if (attach < 0) serial_root_node_.emplace(serial, kept_nodes.back());

    const int path_idx = int(paths_.size());
    const std::size_t register_until = attach >= 0 ? path.size() - 1 : path.size();
    for (std::size_t i = 0; i < register_until; ++i)
      raw_owner_.emplace(path[i], std::make_pair(path_idx, i));
    paths_.push_back({serial, path, std::move(kept), std::move(kept_nodes)});
  }

  const MaskVolume& mask_;
  const VecVolume& field_;
  SkeletonizeParams params_;
  ScalarVolume dbf_;
  ComponentLabeling labels_;
  PenaltyContext ctx_;
  std::vector<char> processed_;
  std::vector<double> dist_;
  std::vector<std::int64_t> pred_;
  std::vector<std::uint32_t> stamp_;
  std::vector<std::int32_t> geo_;
  std::uint32_t stamp_now_ = 0;
  double move_len_[26];
  int serial_base_ = 0;
  SkeletonGraph out_;

  struct TracedPath {
    int serial;
    std::vector<std::size_t> voxels;
    std::vector<std::size_t> kept;   // ascending indices into voxels
    std::vector<int> kept_nodes;     // node ids parallel to kept
  };
  std::vector<TracedPath> paths_;
  std::unordered_map<std::size_t, std::pair<int, std::size_t>> raw_owner_;
  std::unordered_map<int, int> serial_root_node_;
};

}  // namespace

SkeletonGraph skeletonize(const MaskVolume& mask, const VecVolume& field,
                          const std::vector<Vec3>& roots, const SkeletonizeParams& params) {
  if (count_foreground(mask) == 0) return {};
  if (roots.empty()) throw GraphError("skeletonize requires at least one root");
  if (field.dims() != mask.dims())
    throw VolumeError("vector field dims do not match the mask");

  Tracer tracer(mask, field, params);
  SkeletonGraph traced = tracer.run(roots);
  SkeletonGraph merged = postprocess_splits(traced, field, params.post);
  return classify_nodes(merged);
}

SkeletonGraph postprocess_splits(const SkeletonGraph& graph, const VecVolume& field,
                                 const PostprocessParams& params) {
  SkeletonGraph out = graph;
  if (out.empty() || out.fragment_roots.empty()) return classify_nodes(out);

  GraphIndex idx = build_index(out);

  // Union-find over node indices mirrors tree membership as edges are added.
  std::vector<int> uf(out.nodes.size());
  for (std::size_t i = 0; i < uf.size(); ++i) uf[i] = int(i);
  auto find = [&](int a) {
    while (uf[a] != a) {
      uf[a] = uf[uf[a]];
      a = uf[a];
    }
    return a;
  };
  for (std::size_t i = 0; i < out.nodes.size(); ++i)
    if (idx.parent_idx[i] >= 0) uf[find(int(i))] = find(idx.parent_idx[i]);

  // Spatial hash over all nodes.
  const double cell = std::max(1.0, params.max_distance);
  std::unordered_map<std::int64_t, std::vector<int>> grid;
  auto cell_key = [&](const Vec3& p) {
    const int z = int(std::floor(p.z / cell)), y = int(std::floor(p.y / cell)),
              x = int(std::floor(p.x / cell));
    return (std::int64_t(z) << 42) ^ (std::int64_t(y) << 21) ^ std::int64_t(x & 0x1FFFFF);
  };
  for (std::size_t i = 0; i < out.nodes.size(); ++i)
    grid[cell_key(out.nodes[i].pos)].push_back(int(i));

  std::vector<int> fragments = out.fragment_roots;
  std::sort(fragments.begin(), fragments.end());

  bool merged_any = true;
  while (merged_any) {
    merged_any = false;
    for (auto frag_it = fragments.begin(); frag_it != fragments.end();) {
      const int frag_root_idx = idx.idx_of(*frag_it);
      if (frag_root_idx < 0) {
        ++frag_it;
        continue;
      }
      const int frag_comp = find(frag_root_idx);

      struct Candidate {
        double dist;
        int from_idx, to_idx;
      };
      Candidate best{std::numeric_limits<double>::infinity(), -1, -1};

      for (std::size_t fi = 0; fi < out.nodes.size(); ++fi) {
        if (find(int(fi)) != frag_comp) continue;
        const SkeletonNode& f = out.nodes[fi];
        const int cz = int(std::floor(f.pos.z / cell));
        const int cy = int(std::floor(f.pos.y / cell));
        const int cx = int(std::floor(f.pos.x / cell));
        for (int z = cz - 1; z <= cz + 1; ++z)
          for (int y = cy - 1; y <= cy + 1; ++y)
            for (int x = cx - 1; x <= cx + 1; ++x) {
              auto it = grid.find((std::int64_t(z) << 42) ^ (std::int64_t(y) << 21) ^
                                  std::int64_t(x & 0x1FFFFF));
              if (it == grid.end()) continue;
              for (int ti : it->second) {
                if (find(ti) == frag_comp) continue;  // same tree would cycle
                const SkeletonNode& t = out.nodes[ti];
                const double d = distance(f.pos, t.pos);
                if (d > params.max_distance) continue;
                if (std::abs(f.radius - t.radius) >= params.max_radius_diff) continue;
                const double ang = angle_between(sample_field(field, f.pos),
                                                 sample_field(field, t.pos));
                if (ang >= params.max_angle) continue;
                if (d < best.dist - 1e-12 ||
                    (std::abs(d - best.dist) <= 1e-12 &&
                     (best.from_idx < 0 || out.nodes[std::size_t(fi)].id <
                                               out.nodes[best.from_idx].id)))
                  best = {d, int(fi), ti};
              }
            }
      }

      if (best.from_idx >= 0) {
        // Re-root the fragment at the attachment node, then hang it on the
        // target tree.
        std::vector<int> chain;
        for (int v = best.from_idx; v >= 0; v = idx.parent_idx[v]) chain.push_back(v);
        for (std::size_t k = chain.size(); k-- > 1;) {
          out.nodes[chain[k]].parent = out.nodes[chain[k - 1]].id;
          idx.parent_idx[chain[k]] = chain[k - 1];
        }
        out.nodes[best.from_idx].parent = out.nodes[best.to_idx].id;
        idx.parent_idx[best.from_idx] = best.to_idx;
        uf[find(frag_comp)] = find(best.to_idx);
        frag_it = fragments.erase(frag_it);
        merged_any = true;
      } else {
        ++frag_it;
      }
    }
  }

  out.fragment_roots = fragments;
  return classify_nodes(out);
}

}  // namespace vtrace
