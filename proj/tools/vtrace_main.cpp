// vtrace: phantom generation, direction fields, guided skeletonization, and
// graph evaluation as composable subcommands.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vtrace/components.hpp"
#include "vtrace/edt.hpp"
#include "vtrace/evaluate.hpp"
#include "vtrace/flowfield.hpp"
#include "vtrace/phantom.hpp"
#include "vtrace/rng.hpp"
#include "vtrace/swc.hpp"
#include "vtrace/teasar.hpp"
#include "vtrace/volume.hpp"

namespace fs = std::filesystem;
using namespace vtrace;

namespace {

// Every tunable of the pipeline in one flat bag; doubles as the resolved
// config written next to each run's outputs.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string out_dir = ".";

  // phantom
  int dim_z = 128, dim_y = 128, dim_x = 128;
  int n_trees = 3;
  int max_depth = 4;
  double root_radius = 4.0;
  double taper = 0.8;
  double branch_prob = 0.6;
  double segment_min = 9.0, segment_max = 15.0;
  double min_clearance = 2.0;
  bool parallel_pair = false;

  // vectors
  double step_size = 3.0;

  // penalty
  double penalty_scale = 1'000'000.0;
  int penalty_exponent = 16;
  bool use_dbf = true, use_vmf = true, use_angle = true;

  // adaptive masking
  double mask_s_min = 1.1, mask_s_max = 1.5;
  double mask_c_min = 2.0, mask_c_max = 10.0;
  double mask_r_min = 0.0, mask_r_max = 0.0;  // 0,0 = per-component percentiles

  // root detection
  int root_n_steps = 50;
  double root_step = 1.0;
  double root_tolerance = 0.1;
  double root_min_radius = 3.0;

  // postprocess
  double post_max_distance = 5.0;
  double post_max_radius_diff = 3.0;
  double post_max_angle = 100.0;

  // matching / evaluation
  double match_step = 1.0;
  double match_d_max = 3.0;
  std::string match_strategy = "hierarchical";

  // sweep
  std::string noise_kind = "vector_noise";
  std::string levels = "0,0.5,1.0,2.0";
  double threshold = 0.5;  // segmentation threshold for image-noise sweeps

  PhantomConfig phantom() const {
    PhantomConfig c;
    c.seed = seed;
    c.dims = {dim_z, dim_y, dim_x};
    c.n_trees = n_trees;
    c.max_depth = max_depth;
    c.root_radius = root_radius;
    c.taper = taper;
    c.branch_prob = branch_prob;
    c.segment_length = {segment_min, segment_max};
    c.min_clearance = min_clearance;
    c.parallel_pair = parallel_pair;
    return c;
  }

  SkeletonizeParams solver() const {
    SkeletonizeParams p;
    p.penalty.scale = penalty_scale;
    p.penalty.exponent = penalty_exponent;
    p.penalty.use_dbf = use_dbf;
    p.penalty.use_vmf = use_vmf;
    p.penalty.use_angle = use_angle;
    p.mask.s_min = mask_s_min;
    p.mask.s_max = mask_s_max;
    p.mask.c_min = mask_c_min;
    p.mask.c_max = mask_c_max;
    if (mask_r_min > 0.0 && mask_r_max > mask_r_min) {
      p.mask.r_min = mask_r_min;
      p.mask.r_max = mask_r_max;
      p.mask.auto_bounds = false;
    }
    p.post.max_distance = post_max_distance;
    p.post.max_radius_diff = post_max_radius_diff;
    p.post.max_angle = post_max_angle;
    return p;
  }

  RootDetectionParams root_detection() const {
    return {root_n_steps, root_step, root_tolerance, root_min_radius};
  }

  MatchParams matching() const {
    return {match_step, match_d_max, parse_strategy(match_strategy)};
  }
};

void write_resolved_config(const ExperimentConfig& c, const fs::path& path) {
  std::ofstream out(path);
  char buf[64];
  auto real = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return std::string(buf);
  };
  out << "seed = " << c.seed << '\n'
      << "out_dir = " << c.out_dir << '\n'
      << "dim_z = " << c.dim_z << '\n'
      << "dim_y = " << c.dim_y << '\n'
      << "dim_x = " << c.dim_x << '\n'
      << "n_trees = " << c.n_trees << '\n'
      << "max_depth = " << c.max_depth << '\n'
      << "root_radius = " << real(c.root_radius) << '\n'
      << "taper = " << real(c.taper) << '\n'
      << "branch_prob = " << real(c.branch_prob) << '\n'
      << "segment_min = " << real(c.segment_min) << '\n'
      << "segment_max = " << real(c.segment_max) << '\n'
      << "min_clearance = " << real(c.min_clearance) << '\n'
      << "parallel_pair = " << (c.parallel_pair ? "true" : "false") << '\n'
      << "step_size = " << real(c.step_size) << '\n'
      << "penalty_scale = " << real(c.penalty_scale) << '\n'
      << "penalty_exponent = " << c.penalty_exponent << '\n'
      << "use_dbf = " << (c.use_dbf ? "true" : "false") << '\n'
      << "use_vmf = " << (c.use_vmf ? "true" : "false") << '\n'
      << "use_angle = " << (c.use_angle ? "true" : "false") << '\n'
      << "mask_s_min = " << real(c.mask_s_min) << '\n'
      << "mask_s_max = " << real(c.mask_s_max) << '\n'
      << "mask_c_min = " << real(c.mask_c_min) << '\n'
      << "mask_c_max = " << real(c.mask_c_max) << '\n'
      << "mask_r_min = " << real(c.mask_r_min) << '\n'
      << "mask_r_max = " << real(c.mask_r_max) << '\n'
      << "root_n_steps = " << c.root_n_steps << '\n'
      << "root_step = " << real(c.root_step) << '\n'
      << "root_tolerance = " << real(c.root_tolerance) << '\n'
      << "root_min_radius = " << real(c.root_min_radius) << '\n'
      << "post_max_distance = " << real(c.post_max_distance) << '\n'
      << "post_max_radius_diff = " << real(c.post_max_radius_diff) << '\n'
      << "post_max_angle = " << real(c.post_max_angle) << '\n'
      << "match_step = " << real(c.match_step) << '\n'
      << "match_d_max = " << real(c.match_d_max) << '\n'
      << "match_strategy = " << c.match_strategy << '\n'
      << "noise_kind = " << c.noise_kind << '\n'
      << "levels = " << c.levels << '\n'
      << "threshold = " << real(c.threshold) << '\n';
}

// Accepts "a,b,c" or "lo:hi:step" (inclusive grid).
std::vector<double> parse_levels(const std::string& text) {
  std::vector<double> out;
  if (text.find(':') != std::string::npos) {
    double lo, hi, step;
    char c1, c2;
    std::istringstream ss(text);
    if (!(ss >> lo >> c1 >> hi >> c2 >> step) || c1 != ':' || c2 != ':' || step <= 0)
      throw std::runtime_error("bad levels range: " + text);
    const int n = int(std::llround((hi - lo) / step)) + 1;
    for (int i = 0; i < n; ++i) out.push_back(lo + i * step);
    return out;
  }
  std::istringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stod(item));
  }
  if (out.empty()) throw std::runtime_error("no noise levels given");
  return out;
}

std::vector<Vec3> read_roots_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open roots file: " + path);
  std::vector<Vec3> roots;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    Vec3 p;
    if (ss >> p.z >> p.y >> p.x) roots.push_back(p);
  }
  if (roots.empty()) throw std::runtime_error("roots file is empty: " + path);
  return roots;
}

void write_roots_file(const std::vector<Vec3>& roots, const fs::path& path) {
  std::ofstream out(path);
  char buf[128];
  for (const Vec3& r : roots) {
    std::snprintf(buf, sizeof(buf), "%.3f %.3f %.3f\n", r.z, r.y, r.x);
    out << buf;
  }
}

// GT root positions of a graph, `z y x` per line.
std::vector<Vec3> graph_roots(const SkeletonGraph& g) {
  std::vector<Vec3> roots;
  for (const auto& n : g.nodes)
    if (n.parent < 0) roots.push_back(n.pos);
  return roots;
}

void add_common_options(CLI::App* cmd, ExperimentConfig& c) {
  cmd->set_config("--config", "", "flat key = value config file");
  cmd->allow_config_extras(false);

  cmd->add_option("--seed", c.seed, "master seed");
  cmd->add_option("--out-dir", c.out_dir, "output directory")->configurable(false);
  cmd->add_option("--out_dir", c.out_dir, "output directory (config key)")
      ->group("");  // hidden alias so resolved configs round-trip

  cmd->add_option("--dim_z", c.dim_z);
  cmd->add_option("--dim_y", c.dim_y);
  cmd->add_option("--dim_x", c.dim_x);
  cmd->add_option("--n_trees", c.n_trees);
  cmd->add_option("--max_depth", c.max_depth);
  cmd->add_option("--root_radius", c.root_radius);
  cmd->add_option("--taper", c.taper);
  cmd->add_option("--branch_prob", c.branch_prob);
  cmd->add_option("--segment_min", c.segment_min);
  cmd->add_option("--segment_max", c.segment_max);
  cmd->add_option("--min_clearance", c.min_clearance);
  cmd->add_flag("--parallel_pair", c.parallel_pair, "two touching near-parallel vessels");

  cmd->add_option("--step_size", c.step_size, "rootward vector step (voxels)");

  cmd->add_option("--penalty_scale", c.penalty_scale);
  cmd->add_option("--penalty_exponent", c.penalty_exponent);
  cmd->add_option("--use_dbf", c.use_dbf);
  cmd->add_option("--use_vmf", c.use_vmf);
  cmd->add_option("--use_angle", c.use_angle);

  cmd->add_option("--mask_s_min", c.mask_s_min);
  cmd->add_option("--mask_s_max", c.mask_s_max);
  cmd->add_option("--mask_c_min", c.mask_c_min);
  cmd->add_option("--mask_c_max", c.mask_c_max);
  cmd->add_option("--mask_r_min", c.mask_r_min, "0 = component percentile");
  cmd->add_option("--mask_r_max", c.mask_r_max, "0 = component percentile");

  cmd->add_option("--root_n_steps", c.root_n_steps);
  cmd->add_option("--root_step", c.root_step);
  cmd->add_option("--root_tolerance", c.root_tolerance);
  cmd->add_option("--root_min_radius", c.root_min_radius);

  cmd->add_option("--post_max_distance", c.post_max_distance);
  cmd->add_option("--post_max_radius_diff", c.post_max_radius_diff);
  cmd->add_option("--post_max_angle", c.post_max_angle);

  cmd->add_option("--match_step", c.match_step);
  cmd->add_option("--match_d_max", c.match_d_max);
  cmd->add_option("--match_strategy", c.match_strategy)
      ->check(CLI::IsMember({"hierarchical", "greedy", "hungarian"}));

  cmd->add_option("--noise_kind", c.noise_kind)
      ->check(CLI::IsMember({"vector_noise", "image_noise"}));
  cmd->add_option("--levels", c.levels, "comma list or lo:hi:step grid");
  cmd->add_option("--threshold", c.threshold);
}

int run_phantom(const ExperimentConfig& c) {
  const PhantomResult res = generate(c.phantom());
  fs::create_directories(c.out_dir);
  write_swc(res.graph, (fs::path(c.out_dir) / "gt.swc").string());
  write_volume(res.mask, (fs::path(c.out_dir) / "mask.vvol").string());
  write_volume(res.image, (fs::path(c.out_dir) / "image.vvol").string());
  write_roots_file(graph_roots(res.graph), fs::path(c.out_dir) / "roots.txt");
  write_resolved_config(c, fs::path(c.out_dir) / "resolved.config");
  std::cout << "phantom: " << res.graph.nodes.size() << " nodes, "
            << count_foreground(res.mask) << " foreground voxels -> " << c.out_dir
            << "\n";
  return 0;
}

int run_vectors(const ExperimentConfig& c, const std::string& mask_path,
                const std::string& graph_path) {
  const MaskVolume mask = read_mask_volume(mask_path);
  const SkeletonGraph graph = read_swc(graph_path);
  const VecVolume field = generate_vectors(mask, graph, {c.step_size});
  fs::create_directories(c.out_dir);
  write_volume(field, (fs::path(c.out_dir) / "vectors.vvol").string());
  write_resolved_config(c, fs::path(c.out_dir) / "resolved.config");
  std::cout << "vectors: step_size " << c.step_size << " -> " << c.out_dir << "\n";
  return 0;
}

int run_skeletonize(const ExperimentConfig& c, const std::string& mask_path,
                    const std::string& vectors_path, const std::string& roots_path,
                    bool auto_roots) {
  const MaskVolume mask = read_mask_volume(mask_path);
  const VecVolume field = read_vec_volume(vectors_path);

  std::vector<Vec3> roots;
  if (auto_roots) {
    const ScalarVolume dbf = euclidean_distance_transform(mask);
    roots = detect_roots(mask, field, dbf, c.root_detection());
    if (roots.empty()) throw std::runtime_error("automatic root detection found no sinks");
  } else {
    roots = read_roots_file(roots_path);
  }

  const SkeletonGraph pred = skeletonize(mask, field, roots, c.solver());
  fs::create_directories(c.out_dir);
  write_swc(pred, (fs::path(c.out_dir) / "pred.swc").string());
  if (auto_roots) write_roots_file(roots, fs::path(c.out_dir) / "detected_roots.txt");
  write_resolved_config(c, fs::path(c.out_dir) / "resolved.config");
  const auto [b0, b1] = betti_numbers(pred);
  std::cout << "skeletonize: " << pred.nodes.size() << " nodes, beta0 " << b0
            << ", beta1 " << b1 << " -> " << c.out_dir << "\n";
  return 0;
}

int run_evaluate(const ExperimentConfig& c, const std::string& gt_path,
                 const std::string& pred_path, bool table) {
  const SkeletonGraph gt = read_swc(gt_path);
  const SkeletonGraph pred = read_swc(pred_path);
  const MetricsReport r = evaluate(gt, pred, c.matching());

  const std::string lines = report_lines(r);
  std::cout << lines;
  if (table) {
    std::printf("\n%-12s %8s %8s %8s %6s %6s %6s %6s\n", "strategy", "edge_f1", "prec",
                "recall", "fm", "fs", "b0err", "b1err");
    std::printf("%-12s %8.4f %8.4f %8.4f %6d %6d %6d %6d\n", r.strategy.c_str(),
                r.edge_f1, r.edge_precision, r.edge_recall, r.fm_abs, r.fs_abs,
                r.betti0_error, r.betti1_error);
  }
  fs::create_directories(c.out_dir);
  std::ofstream out(fs::path(c.out_dir) / "report.txt");
  out << lines;
  write_resolved_config(c, fs::path(c.out_dir) / "resolved.config");
  return 0;
}

int run_sweep(const ExperimentConfig& c) {
  const std::vector<double> levels = parse_levels(c.levels);
  const PhantomResult base = generate(c.phantom());
  const VecVolume field = generate_vectors(base.mask, base.graph, {c.step_size});
  const std::vector<Vec3> roots = graph_roots(base.graph);
  const bool image_noise = c.noise_kind == "image_noise";

  fs::create_directories(c.out_dir);
  std::ofstream tsv(fs::path(c.out_dir) / "sweep.tsv");
  const char* header =
      "level\tedge_f1\tedge_precision\tedge_recall\tfm_abs\tfs_abs\tbetti0_error\t"
      "betti1_error\tpoint_f1\tbranch_f1\n";
  tsv << header;
  std::cout << header;

  for (std::size_t i = 0; i < levels.size(); ++i) {
    // Independent, reproducible sub-seed per row.
    const std::uint64_t sub_seed = CounterRng::mix(c.seed ^ (0x5EEDULL + i));
    MetricsReport r;
    if (image_noise) {
      const PerturbationSpec spec{PerturbationKind::image_noise, levels[i], sub_seed};
      const ScalarVolume noisy = perturb_image(base.image, spec);
      const MaskVolume mask = threshold_segment(noisy, c.threshold);
      if (count_foreground(mask) == 0) continue;
      const VecVolume vecs = generate_vectors(mask, base.graph, {c.step_size});
      const SkeletonGraph pred = skeletonize(mask, vecs, roots, c.solver());
      r = evaluate(base.graph, pred, c.matching());
    } else {
      const PerturbationSpec spec{PerturbationKind::vector_noise, levels[i], sub_seed};
      const VecVolume noisy = perturb_vectors(field, spec);
      const SkeletonGraph pred = skeletonize(base.mask, noisy, roots, c.solver());
      r = evaluate(base.graph, pred, c.matching());
    }
    char row[256];
    std::snprintf(row, sizeof(row),
                  "%.3f\t%.6f\t%.6f\t%.6f\t%d\t%d\t%d\t%d\t%.6f\t%.6f\n", levels[i],
                  r.edge_f1, r.edge_precision, r.edge_recall, r.fm_abs, r.fs_abs,
                  r.betti0_error, r.betti1_error, r.point_f1, r.branch_f1);
    tsv << row;
    std::cout << row;
  }
  write_resolved_config(c, fs::path(c.out_dir) / "resolved.config");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vector-guided skeletonization of tubular 3D structures"};
  app.require_subcommand(1);

  ExperimentConfig cfg;

  CLI::App* p_phantom = app.add_subcommand("phantom", "generate a synthetic vessel forest");
  add_common_options(p_phantom, cfg);

  CLI::App* p_vectors = app.add_subcommand("vectors", "direction field from mask + graph");
  std::string mask_path, graph_path, vectors_path, roots_path, gt_path, pred_path;
  bool auto_roots = false, table = false;
  add_common_options(p_vectors, cfg);
  p_vectors->add_option("--mask", mask_path, "mask .vvol")->required()->configurable(false);
  p_vectors->add_option("--graph", graph_path, "skeleton .swc")->required()->configurable(false);

  CLI::App* p_skel = app.add_subcommand("skeletonize", "trace centerlines from mask + vectors");
  add_common_options(p_skel, cfg);
  p_skel->add_option("--mask", mask_path, "mask .vvol")->required()->configurable(false);
  p_skel->add_option("--vectors", vectors_path, "direction field .vvol")
      ->required()
      ->configurable(false);
  p_skel->add_option("--roots", roots_path, "roots file, `z y x` per line")->configurable(false);
  p_skel->add_flag("--auto-roots", auto_roots, "detect roots from the field")->configurable(false);
  p_skel->add_flag_callback("--ablate-vmf", [&] { cfg.use_vmf = false; },
                            "drop the magnitude term");
  p_skel->add_flag_callback("--ablate-angle", [&] { cfg.use_angle = false; },
                            "drop the angle term");
  p_skel->add_flag_callback("--ablate-dbf", [&] { cfg.use_dbf = false; },
                            "drop the boundary term");

  CLI::App* p_eval = app.add_subcommand("evaluate", "compare predicted graph to GT");
  add_common_options(p_eval, cfg);
  p_eval->add_option("gt", gt_path, "ground-truth .swc")->required();
  p_eval->add_option("pred", pred_path, "predicted .swc")->required();
  p_eval->add_option("--strategy", cfg.match_strategy, "matching strategy")
      ->check(CLI::IsMember({"hierarchical", "greedy", "hungarian"}))
      ->configurable(false);
  p_eval->add_flag("--table", table, "also print a human-readable table");

  CLI::App* p_sweep = app.add_subcommand("sweep", "noise-perturbation sweep");
  add_common_options(p_sweep, cfg);
  p_sweep->add_flag_callback("--ablate-vmf", [&] { cfg.use_vmf = false; });
  p_sweep->add_flag_callback("--ablate-angle", [&] { cfg.use_angle = false; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // usage errors -> 1, --help -> 0
  }

  try {
    if (p_phantom->parsed()) return run_phantom(cfg);
    if (p_vectors->parsed()) return run_vectors(cfg, mask_path, graph_path);
    if (p_skel->parsed()) {
      if (!auto_roots && roots_path.empty())
        throw std::runtime_error("skeletonize needs --roots FILE or --auto-roots");
      return run_skeletonize(cfg, mask_path, vectors_path, roots_path, auto_roots);
    }
    if (p_eval->parsed()) return run_evaluate(cfg, gt_path, pred_path, table);
    if (p_sweep->parsed()) return run_sweep(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
