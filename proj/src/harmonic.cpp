#include "polydiff/harmonic.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "polydiff/errors.hpp"

namespace polydiff {
namespace {

using Triplet = Eigen::Triplet<double>;
using SpMat = Eigen::SparseMatrix<double>;

double signed_area2(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                    const Eigen::Vector2d& c) {
  return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

// Strictly negative area is a fold.  Exact zeros are triangles whose three
// vertices all sit on one boundary side (teeth of a zigzag patch border);
// they collapse onto the side line and point location skips them.
int count_flips(const TriMesh& mesh, const std::vector<int>& tris,
                const Eigen::Matrix2Xd& uv) {
  int flips = 0;
  for (const int t : tris) {
    const double a2 = signed_area2(uv.col(mesh.faces(0, t)), uv.col(mesh.faces(1, t)),
                                   uv.col(mesh.faces(2, t)));
    if (a2 < 0.0) ++flips;
  }
  return flips;
}

// tan(theta/2) for the angle at `at` between rays to `p` and `q`.
double tan_half_angle(const Vec3& at, const Vec3& p, const Vec3& q) {
  const Vec3 a = p - at, b = q - at;
  const double denom = a.norm() * b.norm() + a.dot(b);
  if (denom < 1e-300) return 1e12;
  return a.cross(b).norm() / denom;
}

struct PatchSystem {
  std::vector<int> vertices;            // patch vertex ids, boundary first
  std::unordered_map<int, int> index;   // mesh vertex -> local id
  std::vector<bool> is_boundary;        // by local id
  Eigen::Matrix2Xd boundary_uv;         // by local id (only boundary columns used)
};

// Chord-length boundary conditions: loop side k maps onto rectangle side k.
PatchSystem build_boundary(const TriMesh& mesh, const SurfacePatch& patch) {
  PatchSystem sys;
  const double W = patch.width, H = patch.height;
  const std::array<Eigen::Vector2d, 4> rect = {
      Eigen::Vector2d(0, 0), Eigen::Vector2d(W, 0), Eigen::Vector2d(W, H),
      Eigen::Vector2d(0, H)};
  const int n = static_cast<int>(patch.loop.size());
  std::vector<Eigen::Vector2d> loop_uv(n);
  for (int side = 0; side < 4; ++side) {
    const int begin = patch.corner_pos[side];
    const int end = side == 3 ? n : patch.corner_pos[side + 1];
    const int count = (end - begin + n) % n;  // segments on this side
    std::vector<double> chord(count + 1, 0.0);
    for (int i = 0; i < count; ++i) {
      const int a = patch.loop[(begin + i) % n];
      const int b = patch.loop[(begin + i + 1) % n];
      chord[i + 1] = chord[i] + (mesh.vertices.col(a) - mesh.vertices.col(b)).norm();
    }
    const double total = std::max(chord.back(), 1e-300);
    const Eigen::Vector2d from = rect[side];
    const Eigen::Vector2d to = rect[(side + 1) % 4];
    for (int i = 0; i < count; ++i)
      loop_uv[(begin + i) % n] = from + (chord[i] / total) * (to - from);
  }

  for (int i = 0; i < n; ++i) {
    sys.index.emplace(patch.loop[i], static_cast<int>(sys.vertices.size()));
    sys.vertices.push_back(patch.loop[i]);
  }
  for (const int t : patch.triangles)
    for (int k = 0; k < 3; ++k) {
      const int v = mesh.faces(k, t);
      if (sys.index.emplace(v, static_cast<int>(sys.vertices.size())).second)
        sys.vertices.push_back(v);
    }
  sys.is_boundary.assign(sys.vertices.size(), false);
  sys.boundary_uv.setZero(2, sys.vertices.size());
  for (int i = 0; i < n; ++i) {
    sys.is_boundary[i] = true;
    sys.boundary_uv.col(i) = loop_uv[i];
  }
  return sys;
}

// Solves sum_j w_ij (u_i - u_j) = 0 over interior vertices with the given
// per-(local i, local j) weights.  Returns interior uv and the relative
// residual.  `symmetric` selects the Cholesky path.
std::pair<Eigen::Matrix2Xd, double> solve_laplace(
    const PatchSystem& sys, const std::vector<std::map<int, double>>& weights,
    bool symmetric) {
  const int total = static_cast<int>(sys.vertices.size());
  std::vector<int> unknown(total, -1);
  std::vector<int> interior;
  for (int i = 0; i < total; ++i)
    if (!sys.is_boundary[i]) {
      unknown[i] = static_cast<int>(interior.size());
      interior.push_back(i);
    }
  Eigen::Matrix2Xd uv = sys.boundary_uv;
  const int m = static_cast<int>(interior.size());
  if (m == 0) return {uv, 0.0};

  std::vector<Triplet> trips;
  Eigen::MatrixX2d rhs = Eigen::MatrixX2d::Zero(m, 2);
  for (int row = 0; row < m; ++row) {
    const int i = interior[row];
    double diag = 0.0;
    for (const auto& [j, w] : weights[i]) {
      diag += w;
      if (unknown[j] >= 0)
        trips.emplace_back(row, unknown[j], -w);
      else
        rhs.row(row) += w * sys.boundary_uv.col(j).transpose();
    }
    trips.emplace_back(row, row, diag);
  }
  SpMat A(m, m);
  A.setFromTriplets(trips.begin(), trips.end());
  Eigen::MatrixX2d x(m, 2);
  if (symmetric) {
    Eigen::SimplicialLDLT<SpMat> solver(A);
    if (solver.info() != Eigen::Success) throw StageError("harmonic solver failed");
    x = solver.solve(rhs);
  } else {
    Eigen::SparseLU<SpMat> solver(A);
    if (solver.info() != Eigen::Success) throw StageError("harmonic solver failed");
    x = solver.solve(rhs);
  }
  const double resid = (A * x - rhs).norm() / std::max(rhs.norm(), 1e-300);
  for (int row = 0; row < m; ++row) uv.col(interior[row]) = x.row(row).transpose();
  return {uv, resid};
}

}  // namespace

PatchParam harmonic_parameterize(const TriMesh& mesh, const SegmentationLabels& labels,
                                 int facet) {
  if (facet < 0 || facet >= static_cast<int>(labels.patches.size()))
    throw ConfigError("facet id out of range");
  const SurfacePatch& patch = labels.patches[facet];
  if (patch.loop.empty() || patch.corner_pos[0] != 0)
    throw ConfigError("patch has no prepared boundary loop");

  PatchSystem sys = build_boundary(mesh, patch);
  const int total = static_cast<int>(sys.vertices.size());

  // Cotangent weights, negative values clamped to keep the maximum principle.
  std::vector<std::map<int, double>> cotan(total);
  for (const int t : patch.triangles)
    for (int k = 0; k < 3; ++k) {
      const int i = sys.index.at(mesh.faces(k, t));
      const int j = sys.index.at(mesh.faces((k + 1) % 3, t));
      const int o = mesh.faces((k + 2) % 3, t);
      const Vec3 a = mesh.vertices.col(mesh.faces(k, t)) - mesh.vertices.col(o);
      const Vec3 b = mesh.vertices.col(mesh.faces((k + 1) % 3, t)) - mesh.vertices.col(o);
      const double cross = a.cross(b).norm();
      const double cot = cross < 1e-300 ? 0.0 : a.dot(b) / cross;
      cotan[i][j] += 0.5 * cot;
      cotan[j][i] += 0.5 * cot;
    }
  for (auto& row : cotan)
    for (auto& [j, w] : row) w = std::max(w, 1e-6);

  PatchParam out;
  out.facet = facet;
  out.width = patch.width;
  out.height = patch.height;
  out.vertices = sys.vertices;
  out.triangles = patch.triangles;

  auto [uv_local, resid] = solve_laplace(sys, cotan, true);
  out.residual = resid;
  out.uv.setZero(2, mesh.vertices.cols());
  for (int i = 0; i < total; ++i) out.uv.col(sys.vertices[i]) = uv_local.col(i);

  if (count_flips(mesh, patch.triangles, out.uv) > 0) {
    // Mean-value weights: positive by construction, so the embedding obeys a
    // discrete maximum principle even on badly obtuse triangulations.
    std::vector<std::map<int, double>> mv(total);
    for (const int t : patch.triangles)
      for (int k = 0; k < 3; ++k) {
        const int vi = mesh.faces(k, t);
        const int vj = mesh.faces((k + 1) % 3, t);
        const int vo = mesh.faces((k + 2) % 3, t);
        const int i = sys.index.at(vi), j = sys.index.at(vj);
        const double len = std::max((mesh.vertices.col(vi) - mesh.vertices.col(vj)).norm(),
                                    1e-300);
        const double at_i =
            tan_half_angle(mesh.vertices.col(vi), mesh.vertices.col(vj), mesh.vertices.col(vo));
        const double at_j =
            tan_half_angle(mesh.vertices.col(vj), mesh.vertices.col(vi), mesh.vertices.col(vo));
        mv[i][j] += at_i / len;
        mv[j][i] += at_j / len;
      }
    auto [uv_mv, resid_mv] = solve_laplace(sys, mv, false);
    out.residual = resid_mv;
    out.mean_value_fallback = true;
    for (int i = 0; i < total; ++i) out.uv.col(sys.vertices[i]) = uv_mv.col(i);
    const int flips = count_flips(mesh, patch.triangles, out.uv);
    if (flips > 0)
      throw StageError("parameterization of facet " + std::to_string(facet) + " has " +
                       std::to_string(flips) + " flipped triangles");
  }
  if (!(out.residual < 1e-10))
    throw StageError("harmonic solve for facet " + std::to_string(facet) +
                     " did not converge (residual " + std::to_string(out.residual) + ")");
  return out;
}

Vec3 map_param_to_surface(const TriMesh& mesh, const PatchParam& param, double u, double v) {
  const Eigen::Vector2d p(u, v);
  double best = -1e30;
  Eigen::Vector3d best_bc = Eigen::Vector3d::Zero();
  int best_tri = -1;
  for (const int t : param.triangles) {
    const Eigen::Vector2d a = param.uv.col(mesh.faces(0, t));
    const Eigen::Vector2d b = param.uv.col(mesh.faces(1, t));
    const Eigen::Vector2d c = param.uv.col(mesh.faces(2, t));
    const double area2 = signed_area2(a, b, c);
    if (area2 <= 1e-300) continue;
    const Eigen::Vector3d bc(signed_area2(p, b, c) / area2, signed_area2(a, p, c) / area2,
                             signed_area2(a, b, p) / area2);
    const double lowest = bc.minCoeff();
    if (lowest > best) {
      best = lowest;
      best_bc = bc;
      best_tri = t;
    }
  }
  const double tol = 1e-6 * std::max(1.0, std::max(param.width, param.height));
  if (best_tri < 0 || best < -tol)
    throw StageError("parametric point location failed on facet " +
                     std::to_string(param.facet));
  best_bc = best_bc.cwiseMax(0.0);
  best_bc /= best_bc.sum();
  return mesh.vertices.col(mesh.faces(0, best_tri)) * best_bc.x() +
         mesh.vertices.col(mesh.faces(1, best_tri)) * best_bc.y() +
         mesh.vertices.col(mesh.faces(2, best_tri)) * best_bc.z();
}

}  // namespace polydiff
