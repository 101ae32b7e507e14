#include "polydiff/hexmesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "polydiff/errors.hpp"
#include "polydiff/quality.hpp"

namespace polydiff {
namespace {

// Local faces of a hex, wound counter-clockwise seen from outside.
constexpr int kHexFaces[6][4] = {
    {0, 3, 2, 1},  // -z
    {4, 5, 6, 7},  // +z
    {0, 1, 5, 4},  // -y
    {3, 7, 6, 2},  // +y
    {0, 4, 7, 3},  // -x
    {1, 2, 6, 5},  // +x
};

// Offsets of the eight corners in (x, y, z), matching the ordering contract.
constexpr int kCornerOffset[8][3] = {
    {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
    {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1},
};

std::uint64_t pack_key(const Eigen::Vector3i& n, const Eigen::Vector3i& base) {
  const std::uint64_t x = static_cast<std::uint64_t>(n.x() - base.x());
  const std::uint64_t y = static_cast<std::uint64_t>(n.y() - base.y());
  const std::uint64_t z = static_cast<std::uint64_t>(n.z() - base.z());
  return (x << 42) | (y << 21) | z;
}

}  // namespace

HexMesh generate_hex_lattice(const PolycubeComplex& pc, int depth) {
  if (depth < 0 || depth > 10) throw ConfigError("subdivision depth out of range");
  if (pc.cuboids.empty()) throw ConfigError("polycube has no cuboids");
  const int S = 1 << depth;
  const long hexes = static_cast<long>(pc.unit_cell_count()) * S * S * S;
  if (hexes > (1L << 24)) throw ConfigError("subdivision would exceed the cell budget");

  Eigen::Vector3i base = pc.cuboids.front().lo;
  for (const Cuboid& c : pc.cuboids) base = base.cwiseMin(c.lo);
  base *= S;

  std::unordered_map<std::uint64_t, int> ids;
  std::vector<Eigen::Vector3i> nodes;
  HexMesh out;
  out.cells.resize(8, hexes);
  long cell = 0;
  for (const Cuboid& c : pc.cuboids) {
    const Eigen::Vector3i lo = c.lo * S;
    const Eigen::Vector3i hi = c.hi * S;
    for (int x = lo.x(); x < hi.x(); ++x)
      for (int y = lo.y(); y < hi.y(); ++y)
        for (int z = lo.z(); z < hi.z(); ++z) {
          for (int k = 0; k < 8; ++k) {
            const Eigen::Vector3i n(x + kCornerOffset[k][0], y + kCornerOffset[k][1],
                                    z + kCornerOffset[k][2]);
            const auto [it, fresh] =
                ids.emplace(pack_key(n, base), static_cast<int>(nodes.size()));
            if (fresh) nodes.push_back(n);
            out.cells(k, cell) = it->second;
          }
          ++cell;
        }
  }
  out.vertices.resize(3, nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i)
    out.vertices.col(i) = pc.lattice_to_model(nodes[i].cast<double>() / S);
  return out;
}

std::vector<std::array<int, 4>> boundary_quads(const HexMesh& mesh) {
  struct Use {
    std::array<int, 4> quad;
    int count = 0;
  };
  std::map<std::array<int, 4>, Use> uses;
  std::vector<std::array<int, 4>> order;
  for (int c = 0; c < mesh.cell_count(); ++c)
    for (const auto& f : kHexFaces) {
      const std::array<int, 4> quad = {mesh.cells(f[0], c), mesh.cells(f[1], c),
                                       mesh.cells(f[2], c), mesh.cells(f[3], c)};
      std::array<int, 4> key = quad;
      std::sort(key.begin(), key.end());
      auto [it, fresh] = uses.emplace(key, Use{quad, 0});
      ++it->second.count;
      if (fresh) order.push_back(key);
    }
  std::vector<std::array<int, 4>> out;
  for (const auto& key : order)
    if (uses.at(key).count == 1) out.push_back(uses.at(key).quad);
  return out;
}

HexMesh map_to_physical(const HexMesh& lattice, const std::vector<PatchParam>& params,
                        const TriMesh& mesh, const PolycubeComplex& pc) {
  if (params.size() != pc.facets.size())
    throw ConfigError("one parameterization per facet is required");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i].facet != static_cast<int>(i))
      throw ConfigError("parameterizations must be facet-ordered");
  if (lattice.cell_count() == 0) throw ConfigError("empty lattice");

  // Recover the fine grid: every lattice edge has the same length h / S.
  double fine_h = 1e300;
  for (int k = 0; k < 8; ++k) {
    const Vec3 a = lattice.vertices.col(lattice.cells(k, 0));
    const Vec3 b = lattice.vertices.col(lattice.cells((k + 1) % 8, 0));
    const double d = (a - b).norm();
    if (d > 1e-300) fine_h = std::min(fine_h, d);
  }
  const int S = static_cast<int>(std::lround(pc.h / fine_h));
  if (S < 1 || std::abs(S * fine_h - pc.h) > 1e-9 * pc.h)
    throw StageError("lattice spacing does not divide the polycube lattice");

  const int nv = lattice.vertex_count();
  std::vector<Eigen::Vector3i> fine(nv);
  std::unordered_map<std::uint64_t, int> node_at;
  Eigen::Vector3i bmin = Eigen::Vector3i::Zero();
  for (int v = 0; v < nv; ++v) {
    const Vec3 q = pc.model_to_lattice(lattice.vertices.col(v)) * S;
    for (int k = 0; k < 3; ++k) {
      fine[v][k] = static_cast<int>(std::lround(q[k]));
      if (std::abs(q[k] - fine[v][k]) > 1e-6 * S)
        throw StageError("lattice vertex is off the fine grid");
    }
    bmin = v == 0 ? fine[v] : bmin.cwiseMin(fine[v]);
  }
  for (int v = 0; v < nv; ++v) node_at.emplace(pack_key(fine[v], bmin), v);
  auto node = [&](int x, int y, int z) {
    const auto it = node_at.find(pack_key(Eigen::Vector3i(x, y, z), bmin));
    if (it == node_at.end()) throw StageError("missing lattice node");
    return it->second;
  };

  HexMesh out;
  out.cells = lattice.cells;
  out.vertices.setZero(3, nv);
  std::vector<bool> set(nv, false);

  // Surface nodes: any node on a facet rectangle maps through that facet's
  // patch.  Shared rectangle borders agree across patches because the side
  // paths and corner vertices are shared, so the lowest facet id suffices.
  for (int v = 0; v < nv; ++v) {
    for (std::size_t f = 0; f < pc.facets.size(); ++f) {
      const PolycubeFacet& facet = pc.facets[f];
      if (fine[v][facet.axis] != facet.level * S) continue;
      const int cu = fine[v][(facet.axis + 1) % 3];
      const int cv = fine[v][(facet.axis + 2) % 3];
      if (cu < facet.lo.x() * S || cu > facet.hi.x() * S || cv < facet.lo.y() * S ||
          cv > facet.hi.y() * S)
        continue;
      const Eigen::Vector2d uv = facet.local_uv(fine[v].cast<double>() / S);
      out.vertices.col(v) =
          map_param_to_surface(mesh, params[f], uv.x(), uv.y());
      set[v] = true;
      break;
    }
  }

  // Internal cuboid faces: Coons patches over their surface-mapped borders,
  // then interiors by transfinite blending of the six faces.
  auto pos = [&](int x, int y, int z) -> Vec3 {
    const int v = node(x, y, z);
    if (!set[v])
      throw StageError("hex mapping requires internal-face borders on the surface");
    return out.vertices.col(v);
  };
  for (const Cuboid& c : pc.cuboids) {
    const Eigen::Vector3i lo = c.lo * S;
    const Eigen::Vector3i hi = c.hi * S;
    for (int axis = 0; axis < 3; ++axis)
      for (const int level : {lo[axis], hi[axis]}) {
        const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
        for (int i = lo[a1] + 1; i < hi[a1]; ++i)
          for (int j = lo[a2] + 1; j < hi[a2]; ++j) {
            Eigen::Vector3i n;
            n[axis] = level;
            n[a1] = i;
            n[a2] = j;
            const int v = node(n.x(), n.y(), n.z());
            if (set[v]) continue;
            const double xi = static_cast<double>(i - lo[a1]) / (hi[a1] - lo[a1]);
            const double eta = static_cast<double>(j - lo[a2]) / (hi[a2] - lo[a2]);
            auto at = [&](int u, int w) {
              Eigen::Vector3i m;
              m[axis] = level;
              m[a1] = u;
              m[a2] = w;
              return pos(m.x(), m.y(), m.z());
            };
            out.vertices.col(v) =
                (1 - xi) * at(lo[a1], j) + xi * at(hi[a1], j) + (1 - eta) * at(i, lo[a2]) +
                eta * at(i, hi[a2]) -
                ((1 - xi) * (1 - eta) * at(lo[a1], lo[a2]) +
                 xi * (1 - eta) * at(hi[a1], lo[a2]) + xi * eta * at(hi[a1], hi[a2]) +
                 (1 - xi) * eta * at(lo[a1], hi[a2]));
            set[v] = true;
          }
      }
  }
  for (const Cuboid& c : pc.cuboids) {
    const Eigen::Vector3i lo = c.lo * S;
    const Eigen::Vector3i hi = c.hi * S;
    for (int x = lo.x() + 1; x < hi.x(); ++x)
      for (int y = lo.y() + 1; y < hi.y(); ++y)
        for (int z = lo.z() + 1; z < hi.z(); ++z) {
          const int v = node(x, y, z);
          if (set[v]) continue;
          const double xi = static_cast<double>(x - lo.x()) / (hi.x() - lo.x());
          const double eta = static_cast<double>(y - lo.y()) / (hi.y() - lo.y());
          const double zeta = static_cast<double>(z - lo.z()) / (hi.z() - lo.z());
          const Vec3 faces = (1 - xi) * pos(lo.x(), y, z) + xi * pos(hi.x(), y, z) +
                             (1 - eta) * pos(x, lo.y(), z) + eta * pos(x, hi.y(), z) +
                             (1 - zeta) * pos(x, y, lo.z()) + zeta * pos(x, y, hi.z());
          const Vec3 edges =
              (1 - xi) * (1 - eta) * pos(lo.x(), lo.y(), z) +
              xi * (1 - eta) * pos(hi.x(), lo.y(), z) + xi * eta * pos(hi.x(), hi.y(), z) +
              (1 - xi) * eta * pos(lo.x(), hi.y(), z) +
              (1 - eta) * (1 - zeta) * pos(x, lo.y(), lo.z()) +
              eta * (1 - zeta) * pos(x, hi.y(), lo.z()) + eta * zeta * pos(x, hi.y(), hi.z()) +
              (1 - eta) * zeta * pos(x, lo.y(), hi.z()) +
              (1 - zeta) * (1 - xi) * pos(lo.x(), y, lo.z()) +
              zeta * (1 - xi) * pos(lo.x(), y, hi.z()) + zeta * xi * pos(hi.x(), y, hi.z()) +
              (1 - zeta) * xi * pos(hi.x(), y, lo.z());
          const Vec3 corners =
              (1 - xi) * (1 - eta) * (1 - zeta) * pos(lo.x(), lo.y(), lo.z()) +
              xi * (1 - eta) * (1 - zeta) * pos(hi.x(), lo.y(), lo.z()) +
              xi * eta * (1 - zeta) * pos(hi.x(), hi.y(), lo.z()) +
              (1 - xi) * eta * (1 - zeta) * pos(lo.x(), hi.y(), lo.z()) +
              (1 - xi) * (1 - eta) * zeta * pos(lo.x(), lo.y(), hi.z()) +
              xi * (1 - eta) * zeta * pos(hi.x(), lo.y(), hi.z()) +
              xi * eta * zeta * pos(hi.x(), hi.y(), hi.z()) +
              (1 - xi) * eta * zeta * pos(lo.x(), hi.y(), hi.z());
          out.vertices.col(v) = faces - edges + corners;
          set[v] = true;
        }
  }
  for (int v = 0; v < nv; ++v)
    if (!set[v]) throw StageError("unmapped lattice node");
  return out;
}

HexMesh pillow_boundary(const HexMesh& mesh, double fraction) {
  if (mesh.cell_count() == 0) throw ConfigError("empty hex mesh");
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("offset fraction out of range");
  const auto quads = boundary_quads(mesh);
  if (quads.empty()) throw ConfigError("hex mesh has no boundary");

  const int nv = mesh.vertex_count();
  std::vector<char> on_boundary(nv, 0);
  std::vector<Vec3> normal_sum(nv, Vec3::Zero());
  std::vector<double> edge_sum(nv, 0.0);
  std::vector<int> edge_count(nv, 0);
  for (const auto& q : quads) {
    const Vec3 n = (mesh.vertices.col(q[2]) - mesh.vertices.col(q[0]))
                       .cross(mesh.vertices.col(q[3]) - mesh.vertices.col(q[1]));
    for (int k = 0; k < 4; ++k) {
      const int a = q[k], b = q[(k + 1) % 4];
      const double len = (mesh.vertices.col(a) - mesh.vertices.col(b)).norm();
      on_boundary[a] = 1;
      normal_sum[a] += n.normalized();
      edge_sum[a] += len;
      edge_sum[b] += len;
      ++edge_count[a];
      ++edge_count[b];
    }
  }
  std::vector<int> boundary_ids;
  for (int v = 0; v < nv; ++v)
    if (on_boundary[v]) boundary_ids.push_back(v);

  for (int attempt = 0; attempt < 4; ++attempt, fraction *= 0.5) {
    HexMesh out;
    out.vertices.resize(3, nv + boundary_ids.size());
    out.vertices.leftCols(nv) = mesh.vertices;
    std::vector<int> dup(nv, -1);
    for (std::size_t i = 0; i < boundary_ids.size(); ++i) {
      const int v = boundary_ids[i];
      const Vec3 inward = -normal_sum[v].normalized();
      const double step = fraction * edge_sum[v] / edge_count[v];
      dup[v] = nv + static_cast<int>(i);
      out.vertices.col(dup[v]) = mesh.vertices.col(v) + step * inward;
    }
    out.cells.resize(8, mesh.cell_count() + quads.size());
    for (int c = 0; c < mesh.cell_count(); ++c)
      for (int k = 0; k < 8; ++k) {
        const int v = mesh.cells(k, c);
        out.cells(k, c) = dup[v] >= 0 ? dup[v] : v;
      }
    for (std::size_t i = 0; i < quads.size(); ++i) {
      const auto& q = quads[i];
      const int c = mesh.cell_count() + static_cast<int>(i);
      for (int k = 0; k < 4; ++k) {
        out.cells(k, c) = dup[q[k]];
        out.cells(4 + k, c) = q[k];
      }
    }
    // Accept when the inserted layer is clean; otherwise halve the offset.
    HexMesh layer;
    layer.vertices = out.vertices;
    layer.cells = out.cells.rightCols(quads.size());
    const QualityReport check = scaled_jacobian(layer);
    if (check.min_scaled_jacobian > 0.0 && check.degenerate_count == 0) return out;
  }
  throw StageError("pillow layer self-intersects even at the smallest offset");
}

}  // namespace polydiff
