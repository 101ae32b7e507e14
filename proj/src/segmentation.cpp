#include "polydiff/segmentation.hpp"

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>

#include "polydiff/errors.hpp"

namespace polydiff {
namespace {

// Facet label for one triangle.  A unanimous vertex vote decides directly;
// any disagreement is settled geometrically by the facet nearest the triangle
// centroid (vote count, then id, break exact distance ties).  Trusting a bare
// 2-1 majority would let edge-line vertices, whose own assignment is
// ambiguous, capture the first triangle row of a neighbouring face.
int triangle_label(const TriMesh& mesh, const VertexFacetAssignment& assignment,
                   const PolycubeComplex& pc, int tri) {
  std::array<int, 4> cand{};
  std::array<int, 4> count{};
  int n = 0;
  for (int k = 0; k < 3; ++k) {
    const int f = assignment.facet[mesh.faces(k, tri)];
    bool found = false;
    for (int i = 0; i < n; ++i)
      if (cand[i] == f) {
        ++count[i];
        found = true;
      }
    if (!found) {
      cand[n] = f;
      count[n] = 1;
      ++n;
    }
  }
  if (n == 1) return cand[0];
  const Vec3 centroid = (mesh.vertices.col(mesh.faces(0, tri)) +
                         mesh.vertices.col(mesh.faces(1, tri)) +
                         mesh.vertices.col(mesh.faces(2, tri))) /
                        3.0;
  // A triangle whose vertices all hug polycube edges may not vote for the
  // facet it actually lies on, so the globally nearest facet always runs.
  const int geometric = nearest_facet(pc, centroid);
  {
    bool found = false;
    for (int i = 0; i < n; ++i) found = found || cand[i] == geometric;
    if (!found) {
      cand[n] = geometric;
      count[n] = 0;
      ++n;
    }
  }
  int pick = -1;
  double pick_dist = 0.0;
  int pick_count = 0;
  for (int i = 0; i < n; ++i) {
    const double d = facet_distance(pc, cand[i], centroid);
    if (pick < 0 || d < pick_dist - 1e-15 ||
        (d < pick_dist + 1e-15 &&
         (count[i] > pick_count || (count[i] == pick_count && cand[i] < pick)))) {
      pick = cand[i];
      pick_count = count[i];
      pick_dist = d;
    }
  }
  return pick;
}

// Triangle adjacency across shared edges (manifold: at most one neighbour).
std::vector<std::array<int, 3>> triangle_neighbors(const TriMesh& mesh) {
  std::unordered_map<std::uint64_t, int> open;  // edge key -> (tri*3 + side)
  std::vector<std::array<int, 3>> nbr(mesh.faces.cols(), {-1, -1, -1});
  for (int t = 0; t < mesh.faces.cols(); ++t) {
    for (int k = 0; k < 3; ++k) {
      const std::uint64_t a = mesh.faces(k, t);
      const std::uint64_t b = mesh.faces((k + 1) % 3, t);
      const std::uint64_t key = (std::min(a, b) << 32) | std::max(a, b);
      auto it = open.find(key);
      if (it == open.end()) {
        open.emplace(key, t * 3 + k);
      } else {
        const int ot = it->second / 3;
        const int ok = it->second % 3;
        nbr[t][k] = ot;
        nbr[ot][ok] = t;
        open.erase(it);
      }
    }
  }
  return nbr;
}

// Connected components of same-label triangles; returns component id per
// triangle and the component sizes.
std::pair<std::vector<int>, std::vector<int>> label_components(
    const std::vector<int>& label, const std::vector<std::array<int, 3>>& nbr) {
  std::vector<int> comp(label.size(), -1);
  std::vector<int> size;
  for (std::size_t seed = 0; seed < label.size(); ++seed) {
    if (comp[seed] >= 0) continue;
    const int id = static_cast<int>(size.size());
    size.push_back(0);
    std::vector<int> stack = {static_cast<int>(seed)};
    comp[seed] = id;
    while (!stack.empty()) {
      const int t = stack.back();
      stack.pop_back();
      ++size[id];
      for (const int o : nbr[t]) {
        if (o >= 0 && comp[o] < 0 && label[o] == label[t]) {
          comp[o] = id;
          stack.push_back(o);
        }
      }
    }
  }
  return {comp, size};
}

}  // namespace

SegmentationLabels segment_surface(const TriMesh& mesh,
                                   const VertexFacetAssignment& assignment,
                                   const PolycubeComplex& pc) {
  const int tri_count = static_cast<int>(mesh.faces.cols());
  const int facet_count = static_cast<int>(pc.facets.size());
  if (static_cast<int>(assignment.facet.size()) != mesh.vertices.cols())
    throw ConfigError("assignment does not cover every vertex");
  for (const int f : assignment.facet)
    if (f < 0 || f >= facet_count) throw ConfigError("assignment facet id out of range");

  SegmentationLabels out;
  out.tri_label.resize(tri_count);
  for (int t = 0; t < tri_count; ++t)
    out.tri_label[t] = triangle_label(mesh, assignment, pc, t);

  const auto nbr = triangle_neighbors(mesh);

  // Re-attach fragments: any component that is not its label's largest gets
  // the label of the neighbouring patch it shares the most edges with.
  for (int round = 0; round < 64; ++round) {
    auto [comp, size] = label_components(out.tri_label, nbr);
    std::vector<int> biggest(facet_count, -1);
    for (int t = 0; t < tri_count; ++t) {
      const int lab = out.tri_label[t];
      if (biggest[lab] < 0 || size[comp[t]] > size[biggest[lab]] ||
          (size[comp[t]] == size[biggest[lab]] && comp[t] < biggest[lab]))
        biggest[lab] = comp[t];
    }
    std::map<int, std::map<int, int>> votes;  // fragment comp -> label -> edges
    for (int t = 0; t < tri_count; ++t) {
      if (comp[t] == biggest[out.tri_label[t]]) continue;
      for (const int o : nbr[t])
        if (o >= 0 && out.tri_label[o] != out.tri_label[t]) ++votes[comp[t]][out.tri_label[o]];
    }
    if (votes.empty()) break;
    bool changed = false;
    std::vector<int> relabel(size.size(), -1);
    for (const auto& [fragment, tally] : votes) {
      int best_label = -1, best_votes = 0;
      for (const auto& [lab, v] : tally)
        if (v > best_votes || (v == best_votes && lab < best_label)) {
          best_label = lab;
          best_votes = v;
        }
      relabel[fragment] = best_label;
    }
    for (int t = 0; t < tri_count; ++t)
      if (relabel[comp[t]] >= 0 && out.tri_label[t] != relabel[comp[t]]) {
        out.tri_label[t] = relabel[comp[t]];
        changed = true;
      }
    if (!changed) break;
  }

  // Patch adjacency must match the facet adjacency exactly.
  std::set<std::pair<int, int>> patch_adj;
  for (int t = 0; t < tri_count; ++t)
    for (const int o : nbr[t]) {
      if (o < 0) continue;
      const int a = out.tri_label[t], b = out.tri_label[o];
      if (a != b) patch_adj.emplace(std::min(a, b), std::max(a, b));
    }
  const std::set<std::pair<int, int>> facet_adj(pc.facet_adjacency.begin(),
                                                pc.facet_adjacency.end());
  if (patch_adj != facet_adj) {
    std::ostringstream msg;
    msg << "segmentation adjacency mismatch:";
    for (const auto& p : patch_adj)
      if (!facet_adj.count(p)) msg << " extra(" << p.first << "," << p.second << ")";
    for (const auto& p : facet_adj)
      if (!patch_adj.count(p)) msg << " missing(" << p.first << "," << p.second << ")";
    throw StageError(msg.str());
  }

  // Assemble patches and run the disk test (V - E + F = 1 per patch).
  out.patches.resize(facet_count);
  for (int f = 0; f < facet_count; ++f) out.patches[f].facet = f;
  for (int t = 0; t < tri_count; ++t) out.patches[out.tri_label[t]].triangles.push_back(t);
  std::vector<int> bad_patches;
  for (int f = 0; f < facet_count; ++f) {
    if (out.patches[f].triangles.empty()) {
      bad_patches.push_back(f);
      continue;
    }
    std::set<int> verts;
    std::set<std::uint64_t> edges;
    for (const int t : out.patches[f].triangles)
      for (int k = 0; k < 3; ++k) {
        const std::uint64_t a = mesh.faces(k, t);
        const std::uint64_t b = mesh.faces((k + 1) % 3, t);
        verts.insert(static_cast<int>(a));
        edges.insert((std::min(a, b) << 32) | std::max(a, b));
      }
    const long chi = static_cast<long>(verts.size()) - static_cast<long>(edges.size()) +
                     static_cast<long>(out.patches[f].triangles.size());
    if (chi != 1) bad_patches.push_back(f);
  }
  if (!bad_patches.empty()) {
    std::ostringstream msg;
    msg << "patches are not topological disks:";
    for (const int f : bad_patches) msg << " " << f;
    throw StageError(msg.str());
  }

  // Oriented boundary loop per patch.  Boundary half-edges inherit the
  // triangle winding, so following them walks the loop counter-clockwise as
  // seen from outside.
  for (int f = 0; f < facet_count; ++f) {
    std::unordered_map<int, int> next;
    for (const int t : out.patches[f].triangles)
      for (int k = 0; k < 3; ++k) {
        const int o = nbr[t][k];
        if (o >= 0 && out.tri_label[o] == f) continue;
        next[mesh.faces(k, t)] = mesh.faces((k + 1) % 3, t);
      }
    if (next.empty()) throw StageError("patch has no boundary");
    std::vector<int>& loop = out.patches[f].loop;
    int start = next.begin()->first;
    for (const auto& [v, w] : next) start = std::min(start, v);
    int v = start;
    do {
      loop.push_back(v);
      auto it = next.find(v);
      if (it == next.end()) throw StageError("patch boundary is not a closed loop");
      v = it->second;
    } while (v != start && loop.size() <= next.size());
    if (v != start || loop.size() != next.size())
      throw StageError("patch boundary is not a single loop");
  }

  // Global corner table: every facet-rectangle corner is matched to one mesh
  // vertex, chosen among vertices incident to >= 3 patches (falling back to
  // >= 2) as the nearest to the corner's model-space position.  Sharing the
  // table across patches keeps neighbouring boundary splits consistent.
  std::vector<std::set<int>> vertex_labels(mesh.vertices.cols());
  for (int t = 0; t < tri_count; ++t)
    for (int k = 0; k < 3; ++k) vertex_labels[mesh.faces(k, t)].insert(out.tri_label[t]);
  std::vector<int> multi3, multi2;
  for (int v = 0; v < mesh.vertices.cols(); ++v) {
    if (vertex_labels[v].size() >= 3) multi3.push_back(v);
    if (vertex_labels[v].size() >= 2) multi2.push_back(v);
  }
  std::map<std::array<int, 3>, int> corner_vertex;
  auto corner_pick = [&](const Vec3& lattice_corner) {
    const std::array<int, 3> key = {static_cast<int>(std::lround(lattice_corner.x() * 2)),
                                    static_cast<int>(std::lround(lattice_corner.y() * 2)),
                                    static_cast<int>(std::lround(lattice_corner.z() * 2))};
    auto it = corner_vertex.find(key);
    if (it != corner_vertex.end()) return it->second;
    const Vec3 target = pc.lattice_to_model(lattice_corner);
    const std::vector<int>& pool = multi3.empty() ? multi2 : multi3;
    if (pool.empty()) throw StageError("no multi-patch vertices to anchor corners");
    int best = pool.front();
    double best_d = (mesh.vertices.col(best) - target).norm();
    for (const int v : pool) {
      const double d = (mesh.vertices.col(v) - target).norm();
      if (d < best_d - 1e-15 ||
          (d < best_d + 1e-15 && vertex_labels[v].size() > vertex_labels[best].size())) {
        best = v;
        best_d = d;
      }
    }
    corner_vertex.emplace(key, best);
    return best;
  };

  for (int f = 0; f < facet_count; ++f) {
    const PolycubeFacet& facet = pc.facets[f];
    out.patches[f].width = facet.s_extent();
    out.patches[f].height = facet.t_extent();
    const double w = facet.s_extent(), h = facet.t_extent();
    const std::array<Eigen::Vector2d, 4> rect = {
        Eigen::Vector2d(0, 0), Eigen::Vector2d(w, 0), Eigen::Vector2d(w, h),
        Eigen::Vector2d(0, h)};
    SurfacePatch& patch = out.patches[f];
    std::array<int, 4> corner_v{};
    for (int k = 0; k < 4; ++k)
      corner_v[k] = corner_pick(facet.lattice_point(rect[k].x(), rect[k].y()));
    for (int k = 0; k < 4; ++k)
      for (int j = k + 1; j < 4; ++j)
        if (corner_v[k] == corner_v[j])
          throw StageError("facet " + std::to_string(f) + " has coincident boundary corners");
    std::array<int, 4> pos{};
    for (int k = 0; k < 4; ++k) {
      const auto it = std::find(patch.loop.begin(), patch.loop.end(), corner_v[k]);
      if (it == patch.loop.end())
        throw StageError("corner vertex missing from the boundary of facet " +
                         std::to_string(f));
      pos[k] = static_cast<int>(it - patch.loop.begin());
    }
    // Rotate the loop to start at the (0, 0) corner; the remaining corners
    // must then appear in increasing loop order (both are counter-clockwise).
    std::rotate(patch.loop.begin(), patch.loop.begin() + pos[0], patch.loop.end());
    const int n = static_cast<int>(patch.loop.size());
    const int shift = pos[0];
    for (int k = 0; k < 4; ++k) pos[k] = (pos[k] - shift + n) % n;
    if (!(pos[0] == 0 && pos[0] < pos[1] && pos[1] < pos[2] && pos[2] < pos[3]))
      throw StageError("boundary corners of facet " + std::to_string(f) +
                       " are not in cyclic order");
    patch.corner_pos = pos;
  }
  return out;
}

}  // namespace polydiff
