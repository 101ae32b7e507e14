#include "polydiff/polycube.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "polydiff/errors.hpp"

namespace polydiff {
namespace {

using json = nlohmann::json;

int argmax_abs(const Vec3& n) {
  int best = 0;
  for (int k = 1; k < 3; ++k)
    if (std::abs(n[k]) > std::abs(n[best])) best = k;
  return best;
}

// Dense unit-cell occupancy over the bounding lattice box of the cuboids.
struct LatticeGrid {
  Eigen::Vector3i lo = Eigen::Vector3i::Zero();
  Eigen::Vector3i hi = Eigen::Vector3i::Zero();  // exclusive
  std::vector<int> cell_cuboid;                  // -1 when empty

  bool in_bounds(const Eigen::Vector3i& c) const {
    return (c.array() >= lo.array()).all() && (c.array() < hi.array()).all();
  }
  int index(const Eigen::Vector3i& c) const {
    const Eigen::Vector3i d = c - lo;
    const Eigen::Vector3i n = hi - lo;
    return (d.z() * n.y() + d.y()) * n.x() + d.x();
  }
  int cuboid_at(const Eigen::Vector3i& c) const {
    return in_bounds(c) ? cell_cuboid[index(c)] : -1;
  }
};

struct GridBuild {
  LatticeGrid grid;
  std::vector<std::string> problems;
};

GridBuild build_grid(const std::vector<Cuboid>& cuboids) {
  GridBuild out;
  if (cuboids.empty()) {
    out.problems.push_back("complex has no cuboids");
    return out;
  }
  LatticeGrid& g = out.grid;
  g.lo = cuboids[0].lo;
  g.hi = cuboids[0].hi;
  for (std::size_t i = 0; i < cuboids.size(); ++i) {
    const Cuboid& c = cuboids[i];
    if ((c.hi.array() <= c.lo.array()).any()) {
      std::ostringstream os;
      os << "degenerate cuboid " << i;
      out.problems.push_back(os.str());
      continue;
    }
    g.lo = g.lo.cwiseMin(c.lo);
    g.hi = g.hi.cwiseMax(c.hi);
  }
  const Eigen::Vector3i n = g.hi - g.lo;
  const std::int64_t total =
      std::int64_t(n.x()) * std::int64_t(n.y()) * std::int64_t(n.z());
  if (total <= 0 || total > (std::int64_t(1) << 24)) {
    out.problems.push_back("lattice bounding box is empty or unreasonably large");
    return out;
  }
  g.cell_cuboid.assign(static_cast<std::size_t>(total), -1);
  std::set<std::pair<int, int>> overlaps;
  for (std::size_t i = 0; i < cuboids.size(); ++i) {
    const Cuboid& c = cuboids[i];
    if ((c.hi.array() <= c.lo.array()).any()) continue;
    for (int z = c.lo.z(); z < c.hi.z(); ++z)
      for (int y = c.lo.y(); y < c.hi.y(); ++y)
        for (int x = c.lo.x(); x < c.hi.x(); ++x) {
          const Eigen::Vector3i cell(x, y, z);
          int& slot = g.cell_cuboid[g.index(cell)];
          if (slot >= 0)
            overlaps.insert({slot, static_cast<int>(i)});
          else
            slot = static_cast<int>(i);
        }
  }
  for (const auto& [a, b] : overlaps) {
    std::ostringstream os;
    os << "interior overlap between cuboids " << a << " and " << b;
    out.problems.push_back(os.str());
  }
  return out;
}

// A boundary unit square: normal axis, plane level, cell coordinates in the
// cross axes u=(axis+1)%3, v=(axis+2)%3.
struct FaceKey {
  int axis, level, iu, iv;
  bool operator<(const FaceKey& o) const {
    return std::tie(axis, level, iu, iv) < std::tie(o.axis, o.level, o.iu, o.iv);
  }
};

struct FacetBuild {
  std::vector<PolycubeFacet> facets;
  std::vector<std::pair<int, int>> adjacency;
  std::map<FaceKey, int> face_facet;  // boundary unit square -> facet id
  std::vector<std::string> problems;
};

FacetBuild build_facets(const LatticeGrid& grid, const std::vector<Cuboid>& cuboids) {
  FacetBuild out;
  std::map<FaceKey, std::pair<int, int>> square_dir;  // -> (facet id, dir)

  for (std::size_t ci = 0; ci < cuboids.size(); ++ci) {
    const Cuboid& cub = cuboids[ci];
    if ((cub.hi.array() <= cub.lo.array()).any()) continue;
    for (int axis = 0; axis < 3; ++axis) {
      const int ua = (axis + 1) % 3;
      const int va = (axis + 2) % 3;
      const int nu = cub.hi[ua] - cub.lo[ua];
      const int nv = cub.hi[va] - cub.lo[va];
      for (int dir = -1; dir <= 1; dir += 2) {
        const int level = dir > 0 ? cub.hi[axis] : cub.lo[axis];
        // Exposure of each unit square of this cuboid face.
        std::vector<char> exposed(static_cast<std::size_t>(nu) * nv, 0);
        std::vector<char> used(exposed.size(), 0);
        auto at = [&](int u, int v) -> int { return v * nu + u; };
        for (int v = 0; v < nv; ++v)
          for (int u = 0; u < nu; ++u) {
            Eigen::Vector3i cell;
            cell[axis] = dir > 0 ? level - 1 : level;
            cell[ua] = cub.lo[ua] + u;
            cell[va] = cub.lo[va] + v;
            Eigen::Vector3i nb = cell;
            nb[axis] += dir;
            exposed[at(u, v)] = grid.cuboid_at(nb) < 0 ? 1 : 0;
          }
        // Greedy rectangle decomposition, row-major.
        for (int v = 0; v < nv; ++v)
          for (int u = 0; u < nu; ++u) {
            if (!exposed[at(u, v)] || used[at(u, v)]) continue;
            int u2 = u + 1;
            while (u2 < nu && exposed[at(u2, v)] && !used[at(u2, v)]) ++u2;
            int v2 = v + 1;
            for (; v2 < nv; ++v2) {
              bool full = true;
              for (int uu = u; uu < u2; ++uu)
                if (!exposed[at(uu, v2)] || used[at(uu, v2)]) {
                  full = false;
                  break;
                }
              if (!full) break;
            }
            PolycubeFacet f;
            f.axis = axis;
            f.dir = dir;
            f.level = level;
            f.lo = {cub.lo[ua] + u, cub.lo[va] + v};
            f.hi = {cub.lo[ua] + u2, cub.lo[va] + v2};
            f.cuboid = static_cast<int>(ci);
            const int id = static_cast<int>(out.facets.size());
            out.facets.push_back(f);
            for (int vv = v; vv < v2; ++vv)
              for (int uu = u; uu < u2; ++uu) {
                used[at(uu, vv)] = 1;
                const FaceKey key{axis, level, cub.lo[ua] + uu, cub.lo[va] + vv};
                square_dir[key] = {id, dir};
                out.face_facet[key] = id;
              }
          }
      }
    }
  }

  // Boundary edges: every lattice edge of a boundary square must be shared by
  // exactly two boundary squares (manifold, closed).
  std::map<std::array<int, 4>, std::vector<int>> edge_facets;
  for (const auto& [key, idd] : square_dir) {
    const int axis = key.axis;
    const int ua = (axis + 1) % 3;
    const int va = (axis + 2) % 3;
    auto corner = [&](int du, int dv) {
      std::array<int, 3> p{};
      p[static_cast<std::size_t>(axis)] = key.level;
      p[static_cast<std::size_t>(ua)] = key.iu + du;
      p[static_cast<std::size_t>(va)] = key.iv + dv;
      return p;
    };
    const std::array<std::array<int, 3>, 4> c = {corner(0, 0), corner(1, 0),
                                                 corner(1, 1), corner(0, 1)};
    for (int e = 0; e < 4; ++e) {
      const auto& a = c[static_cast<std::size_t>(e)];
      const auto& b = c[static_cast<std::size_t>((e + 1) % 4)];
      const auto& mn = std::min(a, b);
      int edge_axis = 0;
      for (int k = 0; k < 3; ++k)
        if (a[static_cast<std::size_t>(k)] != b[static_cast<std::size_t>(k)]) edge_axis = k;
      edge_facets[{mn[0], mn[1], mn[2], edge_axis}].push_back(idd.first);
    }
  }
  std::set<std::pair<int, int>> adj;
  bool manifold = true;
  for (const auto& [edge, ids] : edge_facets) {
    if (ids.size() != 2) {
      manifold = false;
      continue;
    }
    if (ids[0] != ids[1]) adj.insert({std::min(ids[0], ids[1]), std::max(ids[0], ids[1])});
  }
  if (!manifold) out.problems.push_back("non-manifold voxel boundary");
  out.adjacency.assign(adj.begin(), adj.end());
  return out;
}

TriMesh boundary_mesh_from_squares(const PolycubeComplex& pc, const LatticeGrid& grid,
                                   int subdiv) {
  // Vertices are welded on the fine lattice (unit coordinates * subdiv).
  std::map<std::array<int, 3>, int> corner_ids;
  std::vector<std::array<int, 3>> corners;
  auto corner_id = [&](const std::array<int, 3>& p) {
    auto it = corner_ids.find(p);
    if (it != corner_ids.end()) return it->second;
    const int id = static_cast<int>(corners.size());
    corner_ids.emplace(p, id);
    corners.push_back(p);
    return id;
  };
  std::vector<std::array<int, 3>> tris;
  for (int z = grid.lo.z(); z < grid.hi.z(); ++z)
    for (int y = grid.lo.y(); y < grid.hi.y(); ++y)
      for (int x = grid.lo.x(); x < grid.hi.x(); ++x) {
        const Eigen::Vector3i cell(x, y, z);
        if (grid.cuboid_at(cell) < 0) continue;
        for (int axis = 0; axis < 3; ++axis)
          for (int dir = -1; dir <= 1; dir += 2) {
            Eigen::Vector3i nb = cell;
            nb[axis] += dir;
            if (grid.cuboid_at(nb) >= 0) continue;
            const int level = dir > 0 ? cell[axis] + 1 : cell[axis];
            const int sa = dir > 0 ? (axis + 1) % 3 : (axis + 2) % 3;
            const int ta = dir > 0 ? (axis + 2) % 3 : (axis + 1) % 3;
            auto corner = [&](int ds, int dt) {
              std::array<int, 3> p{};
              p[static_cast<std::size_t>(axis)] = level * subdiv;
              p[static_cast<std::size_t>(sa)] = cell[sa] * subdiv + ds;
              p[static_cast<std::size_t>(ta)] = cell[ta] * subdiv + dt;
              return corner_id(p);
            };
            for (int s = 0; s < subdiv; ++s)
              for (int t = 0; t < subdiv; ++t) {
                const int c0 = corner(s, t), c1 = corner(s + 1, t),
                          c2 = corner(s + 1, t + 1), c3 = corner(s, t + 1);
                tris.push_back({c0, c1, c2});
                tris.push_back({c0, c2, c3});
              }
          }
      }
  TriMesh mesh;
  mesh.vertices.resize(3, static_cast<int>(corners.size()));
  for (std::size_t i = 0; i < corners.size(); ++i)
    mesh.vertices.col(static_cast<int>(i)) = pc.lattice_to_model(
        Vec3(corners[i][0], corners[i][1], corners[i][2]) / double(subdiv));
  mesh.faces.resize(3, static_cast<int>(tris.size()));
  for (std::size_t i = 0; i < tris.size(); ++i)
    mesh.faces.col(static_cast<int>(i)) << tris[i][0], tris[i][1], tris[i][2];
  return mesh;
}

std::string join_problems(const std::vector<std::string>& problems) {
  std::string s;
  for (const auto& p : problems) {
    if (!s.empty()) s += "; ";
    s += p;
  }
  return s;
}

}  // namespace

int PolycubeComplex::unit_cell_count() const {
  int total = 0;
  for (const Cuboid& c : cuboids) {
    const Eigen::Vector3i d = c.hi - c.lo;
    total += d.x() * d.y() * d.z();
  }
  return total;
}

void rebuild_facets(PolycubeComplex& pc) {
  GridBuild gb = build_grid(pc.cuboids);
  if (!gb.problems.empty()) throw StageError("invalid polycube: " + join_problems(gb.problems));
  FacetBuild fb = build_facets(gb.grid, pc.cuboids);
  if (!fb.problems.empty()) throw StageError("invalid polycube: " + join_problems(fb.problems));
  pc.facets = std::move(fb.facets);
  pc.facet_adjacency = std::move(fb.adjacency);
}

double facet_distance(const PolycubeComplex& pc, int facet, const Vec3& model_point) {
  const PolycubeFacet& f = pc.facets[static_cast<std::size_t>(facet)];
  const Vec3 q = pc.model_to_lattice(model_point);
  const int ua = (f.axis + 1) % 3;
  const int va = (f.axis + 2) % 3;
  const double dn = q[f.axis] - f.level;
  const double du = std::max({0.0, f.lo.x() - q[ua], q[ua] - f.hi.x()});
  const double dv = std::max({0.0, f.lo.y() - q[va], q[va] - f.hi.y()});
  return pc.h * std::sqrt(dn * dn + du * du + dv * dv);
}

int nearest_facet(const PolycubeComplex& pc, const Vec3& model_point) {
  if (pc.facets.empty()) throw StageError("polycube has no facets");
  int best = 0;
  double best_d = facet_distance(pc, 0, model_point);
  for (int i = 1; i < static_cast<int>(pc.facets.size()); ++i) {
    const double d = facet_distance(pc, i, model_point);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

SnapResult snap_to_polycube(const Mat3X& points, const FaceMat& topology,
                            const SnapOptions& options) {
  const int n = static_cast<int>(points.cols());
  if (n < 4) throw StageError("too few points to snap");
  if (!points.allFinite()) throw StageError("non-finite point coordinates");
  if (topology.size() == 0) throw StageError("empty topology");
  if (topology.minCoeff() < 0 || topology.maxCoeff() >= n)
    throw StageError("topology references out-of-range vertices");
  if (!(options.cluster_tol > 0.0)) throw ConfigError("cluster tolerance must be positive");

  const TriMesh mesh{points, topology};
  const Mat3X normals = vertex_normals_area_weighted(mesh);

  // Dominant-normal classification.
  std::vector<int> cls_axis(static_cast<std::size_t>(n));
  std::vector<int> cls_dir(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const Vec3 nv = normals.col(i);
    if (!nv.allFinite() || nv.norm() == 0.0) {
      std::ostringstream os;
      os << "vertex " << i << " has no dominant normal direction";
      throw StageError(os.str());
    }
    const int axis = argmax_abs(nv);
    cls_axis[static_cast<std::size_t>(i)] = axis;
    cls_dir[static_cast<std::size_t>(i)] = nv[axis] >= 0.0 ? 1 : -1;
  }

  // Per-axis plane detection: 1D gap clustering with small-cluster pruning.
  std::array<std::vector<double>, 3> plane_means;
  for (int axis = 0; axis < 3; ++axis) {
    std::vector<double> vals;
    for (int i = 0; i < n; ++i)
      if (cls_axis[static_cast<std::size_t>(i)] == axis) vals.push_back(points(axis, i));
    if (vals.empty()) {
      std::ostringstream os;
      os << "no vertices classified along axis " << axis;
      throw StageError(os.str());
    }
    std::sort(vals.begin(), vals.end());
    std::vector<std::pair<std::size_t, std::size_t>> clusters;  // [begin, end)
    std::size_t begin = 0;
    for (std::size_t i = 1; i <= vals.size(); ++i) {
      if (i == vals.size() || vals[i] - vals[i - 1] > options.cluster_tol) {
        clusters.push_back({begin, i});
        begin = i;
      }
    }
    const double min_count = options.min_cluster_share * static_cast<double>(vals.size());
    for (const auto& [b, e] : clusters) {
      if (static_cast<double>(e - b) < min_count) continue;
      double sum = 0.0;
      for (std::size_t i = b; i < e; ++i) sum += vals[i];
      plane_means[static_cast<std::size_t>(axis)].push_back(sum / static_cast<double>(e - b));
    }
    if (plane_means[static_cast<std::size_t>(axis)].size() < 2) {
      std::ostringstream os;
      os << "fewer than two boundary planes along axis " << axis;
      throw StageError(os.str());
    }
  }

  // Lattice unit and plane quantization.
  double h = std::numeric_limits<double>::infinity();
  for (int axis = 0; axis < 3; ++axis) {
    const auto& m = plane_means[static_cast<std::size_t>(axis)];
    for (std::size_t j = 1; j < m.size(); ++j) h = std::min(h, m[j] - m[j - 1]);
  }
  Vec3 origin;
  std::array<std::vector<int>, 3> plane_idx;
  for (int axis = 0; axis < 3; ++axis) {
    const auto& m = plane_means[static_cast<std::size_t>(axis)];
    origin[axis] = m[0];
    for (const double v : m)
      plane_idx[static_cast<std::size_t>(axis)].push_back(
          static_cast<int>(std::lround((v - origin[axis]) / h)));
    const auto& idx = plane_idx[static_cast<std::size_t>(axis)];
    for (std::size_t j = 1; j < idx.size(); ++j)
      if (idx[j] <= idx[j - 1]) {
        std::ostringstream os;
        os << "plane quantization collision along axis " << axis;
        throw StageError(os.str());
      }
  }

  // Inside cells of the detected-plane grid, probed at pre-snap cell centers.
  PolycubeComplex pc;
  pc.h = h;
  pc.origin = origin;
  const auto& mx = plane_means[0];
  const auto& my = plane_means[1];
  const auto& mz = plane_means[2];
  for (std::size_t ix = 0; ix + 1 < mx.size(); ++ix)
    for (std::size_t iy = 0; iy + 1 < my.size(); ++iy)
      for (std::size_t iz = 0; iz + 1 < mz.size(); ++iz) {
        const Vec3 center(0.5 * (mx[ix] + mx[ix + 1]), 0.5 * (my[iy] + my[iy + 1]),
                          0.5 * (mz[iz] + mz[iz + 1]));
        if (!point_inside_mesh(mesh, center)) continue;
        Cuboid c;
        c.lo = {plane_idx[0][ix], plane_idx[1][iy], plane_idx[2][iz]};
        c.hi = {plane_idx[0][ix + 1], plane_idx[1][iy + 1], plane_idx[2][iz + 1]};
        pc.cuboids.push_back(c);
      }
  if (pc.cuboids.empty()) throw StageError("no interior cells detected");
  rebuild_facets(pc);

  // Vertex -> facet assignment: nearest facet among those matching the
  // vertex's classification, falling back to the globally nearest facet.
  SnapResult result;
  result.assignment.facet.resize(static_cast<std::size_t>(n));
  result.assignment.uv.resize(2, n);
  for (int i = 0; i < n; ++i) {
    const Vec3 p = points.col(i);
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int f = 0; f < static_cast<int>(pc.facets.size()); ++f) {
      const PolycubeFacet& facet = pc.facets[static_cast<std::size_t>(f)];
      if (facet.axis != cls_axis[static_cast<std::size_t>(i)] ||
          facet.dir != cls_dir[static_cast<std::size_t>(i)])
        continue;
      const double d = facet_distance(pc, f, p);
      if (d < best_d) {
        best_d = d;
        best = f;
      }
    }
    if (best < 0) best = nearest_facet(pc, p);
    const PolycubeFacet& facet = pc.facets[static_cast<std::size_t>(best)];
    const Eigen::Vector2d uv_raw = facet.local_uv(pc.model_to_lattice(p));
    result.assignment.facet[static_cast<std::size_t>(i)] = best;
    result.assignment.uv.col(i) << std::clamp(uv_raw.x(), 0.0, double(facet.s_extent())),
        std::clamp(uv_raw.y(), 0.0, double(facet.t_extent()));
  }
  result.complex = std::move(pc);
  return result;
}

SnapResult snap_to_polycube(const Mat3X& points, const FaceMat& topology, double tol) {
  SnapOptions options;
  options.cluster_tol = tol;
  return snap_to_polycube(points, topology, options);
}

Mat3X project_to_assigned_facets(const PolycubeComplex& pc,
                                 const VertexFacetAssignment& assignment) {
  const int n = static_cast<int>(assignment.facet.size());
  Mat3X out(3, n);
  for (int i = 0; i < n; ++i) {
    const PolycubeFacet& f = pc.facets[static_cast<std::size_t>(assignment.facet[static_cast<std::size_t>(i)])];
    out.col(i) = pc.lattice_to_model(
        f.lattice_point(assignment.uv(0, i), assignment.uv(1, i)));
  }
  return out;
}

TriMesh polycube_boundary_mesh(const PolycubeComplex& pc, int subdivisions) {
  if (subdivisions < 1) throw ConfigError("boundary subdivisions must be at least 1");
  GridBuild gb = build_grid(pc.cuboids);
  if (!gb.problems.empty()) throw StageError("invalid polycube: " + join_problems(gb.problems));
  return boundary_mesh_from_squares(pc, gb.grid, subdivisions);
}

PolycubeReport validate_polycube(const PolycubeComplex& pc,
                                 std::optional<int> expected_genus) {
  PolycubeReport report;
  if (!(pc.h > 0.0) || !std::isfinite(pc.h))
    report.violations.push_back("lattice unit is not positive");
  GridBuild gb = build_grid(pc.cuboids);
  report.violations.insert(report.violations.end(), gb.problems.begin(), gb.problems.end());
  if (gb.grid.cell_cuboid.empty()) return report;

  FacetBuild fb = build_facets(gb.grid, pc.cuboids);
  report.violations.insert(report.violations.end(), fb.problems.begin(), fb.problems.end());
  if (!fb.problems.empty()) return report;

  const TriMesh boundary = boundary_mesh_from_squares(pc, gb.grid, 1);
  try {
    report.genus = mesh_genus(boundary);
  } catch (const TopologyError& e) {
    report.violations.push_back(std::string("boundary surface invalid: ") + e.what());
    return report;
  }
  if (expected_genus && report.genus != *expected_genus) {
    std::ostringstream os;
    os << "genus mismatch (expected " << *expected_genus << ", got " << report.genus << ")";
    report.violations.push_back(os.str());
  }
  return report;
}

void save_polycube(const std::string& path, const PolycubeComplex& pc) {
  json doc;
  doc["h"] = pc.h;
  doc["origin"] = {pc.origin.x(), pc.origin.y(), pc.origin.z()};
  json cubs = json::array();
  for (const Cuboid& c : pc.cuboids) {
    json jc;
    jc["lo"] = {c.lo.x(), c.lo.y(), c.lo.z()};
    jc["hi"] = {c.hi.x(), c.hi.y(), c.hi.z()};
    cubs.push_back(jc);
  }
  doc["cuboids"] = cubs;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw StageError("cannot open " + path + " for writing");
  out << doc.dump(2) << "\n";
  if (!out) throw StageError("failed writing " + path);
}

PolycubeComplex load_polycube(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StageError("missing input " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw StageError("not a polycube file: " + std::string(e.what()));
  }
  PolycubeComplex pc;
  try {
    pc.h = doc.at("h").get<double>();
    const auto& o = doc.at("origin");
    pc.origin = Vec3(o.at(0).get<double>(), o.at(1).get<double>(), o.at(2).get<double>());
    for (const auto& jc : doc.at("cuboids")) {
      Cuboid c;
      for (int k = 0; k < 3; ++k) {
        c.lo[k] = jc.at("lo").at(static_cast<std::size_t>(k)).get<int>();
        c.hi[k] = jc.at("hi").at(static_cast<std::size_t>(k)).get<int>();
      }
      pc.cuboids.push_back(c);
    }
  } catch (const json::exception& e) {
    throw StageError("not a polycube file: " + std::string(e.what()));
  }
  if (!(pc.h > 0.0) || !std::isfinite(pc.h))
    throw StageError("polycube lattice unit must be positive");
  rebuild_facets(pc);
  return pc;
}

}  // namespace polydiff
