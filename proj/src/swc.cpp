#include "vtrace/swc.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace vtrace {

SkeletonGraph read_swc(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw GraphError("cannot open graph file: " + path);

  SkeletonGraph g;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    SkeletonNode n;
    int cls = 0;
    double x, y, z;
    if (!(ss >> n.id)) continue;  // blank/comment line
    if (!(ss >> cls >> x >> y >> z >> n.radius >> n.parent))
      throw GraphError("malformed line " + std::to_string(lineno) + " in " + path);
    if (cls < 1 || cls > 4)
      throw GraphError("unknown class code " + std::to_string(cls) + " on line " +
                       std::to_string(lineno) + " in " + path);
    if (!(n.radius > 0.0))
      throw GraphError("non-positive radius on line " + std::to_string(lineno) + " in " +
                       path);
    n.cls = static_cast<NodeClass>(cls);
    n.pos = Vec3(z, y, x);
    g.nodes.push_back(n);
  }

  // Surfaces duplicate ids, dangling parents, and parent-chain cycles.
  validate_forest(g);
  return g;
}

void write_swc(const SkeletonGraph& graph, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw GraphError("cannot open graph file for writing: " + path);

  std::vector<const SkeletonNode*> order;
  order.reserve(graph.nodes.size());
  for (const auto& n : graph.nodes) order.push_back(&n);
  std::sort(order.begin(), order.end(),
            [](const SkeletonNode* a, const SkeletonNode* b) { return a->id < b->id; });

  char buf[256];
  for (const SkeletonNode* n : order) {
    std::snprintf(buf, sizeof(buf), "%d %d %.6f %.6f %.6f %.6f %d\n", n->id,
                  static_cast<int>(n->cls), n->pos.x, n->pos.y, n->pos.z, n->radius,
                  n->parent);
    out << buf;
  }
  if (!out) throw GraphError("write failed: " + path);
}

}  // namespace vtrace
