#include "polydiff/quality.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <set>
#include <sstream>
#include <vector>

#include "polydiff/errors.hpp"
#include "polydiff/hexmesh.hpp"

namespace polydiff {
namespace {

// The three corners reached by the edges emanating from each corner, ordered
// so that the determinant is +1 on an axis-aligned reference hex.
constexpr int kCornerEdges[8][3] = {
    {1, 3, 4}, {2, 0, 5}, {3, 1, 6}, {0, 2, 7},
    {7, 5, 0}, {4, 6, 1}, {5, 7, 2}, {6, 4, 3},
};

double corner_jacobian(const Mat3X& x, const Eigen::Matrix<int, 8, 1>& cell, int corner,
                       bool* degenerate) {
  Eigen::Matrix3d e;
  for (int k = 0; k < 3; ++k) {
    const Vec3 d = x.col(cell[kCornerEdges[corner][k]]) - x.col(cell[corner]);
    const double len = d.norm();
    if (len < 1e-150) {
      if (degenerate) *degenerate = true;
      return 0.0;
    }
    e.col(k) = d / len;
  }
  return e.determinant();
}

double hex_min_sj(const Mat3X& x, const Eigen::Matrix<int, 8, 1>& cell,
                  bool* degenerate = nullptr) {
  double m = 1.0;
  for (int corner = 0; corner < 8; ++corner)
    m = std::min(m, corner_jacobian(x, cell, corner, degenerate));
  return m;
}

struct Adjacency {
  std::vector<std::vector<int>> hexes_of;      // vertex -> incident cells
  std::vector<std::vector<int>> neighbors_of;  // vertex -> edge neighbours
  std::vector<char> boundary;                  // vertex flag
  std::vector<std::vector<int>> boundary_neighbors_of;
  std::vector<int> boundary_vertices;
  double mean_edge = 0.0;
};

Adjacency build_adjacency(const HexMesh& mesh) {
  Adjacency adj;
  const int nv = mesh.vertex_count();
  adj.hexes_of.resize(nv);
  adj.neighbors_of.resize(nv);
  adj.boundary.assign(nv, 0);
  adj.boundary_neighbors_of.resize(nv);
  std::set<std::pair<int, int>> edges;
  for (int c = 0; c < mesh.cell_count(); ++c) {
    for (int k = 0; k < 8; ++k) {
      const int v = mesh.cells(k, c);
      adj.hexes_of[v].push_back(c);
      for (int e = 0; e < 3; ++e) {
        const int w = mesh.cells(kCornerEdges[k][e], c);
        edges.emplace(std::min(v, w), std::max(v, w));
      }
    }
  }
  double total = 0.0;
  for (const auto& [a, b] : edges) {
    adj.neighbors_of[a].push_back(b);
    adj.neighbors_of[b].push_back(a);
    total += (mesh.vertices.col(a) - mesh.vertices.col(b)).norm();
  }
  adj.mean_edge = edges.empty() ? 0.0 : total / edges.size();

  std::set<std::pair<int, int>> bedges;
  for (const auto& q : boundary_quads(mesh))
    for (int k = 0; k < 4; ++k) {
      const int a = q[k], b = q[(k + 1) % 4];
      adj.boundary[a] = 1;
      bedges.emplace(std::min(a, b), std::max(a, b));
    }
  for (const auto& [a, b] : bedges) {
    adj.boundary_neighbors_of[a].push_back(b);
    adj.boundary_neighbors_of[b].push_back(a);
  }
  for (int v = 0; v < nv; ++v)
    if (adj.boundary[v]) adj.boundary_vertices.push_back(v);
  return adj;
}

double local_min_sj(const Mat3X& x, const HexMesh& mesh, const Adjacency& adj, int v) {
  double m = 1.0;
  for (const int c : adj.hexes_of[v]) m = std::min(m, hex_min_sj(x, mesh.cells.col(c)));
  return m;
}

double shape_energy_at(const Mat3X& x, const HexMesh& mesh, const std::vector<int>& cells) {
  double e = 0.0;
  for (const int c : cells)
    for (int corner = 0; corner < 8; ++corner) {
      const double sj = corner_jacobian(x, mesh.cells.col(c), corner, nullptr);
      e += (1.0 - sj) * (1.0 - sj);
    }
  return e;
}

}  // namespace

QualityReport scaled_jacobian(const HexMesh& mesh) {
  if (mesh.cell_count() == 0) throw ConfigError("empty hex mesh");
  QualityReport report;
  report.per_hex_min.resize(mesh.cell_count());
  for (int c = 0; c < mesh.cell_count(); ++c) {
    bool degenerate = false;
    const double m = hex_min_sj(mesh.vertices, mesh.cells.col(c), &degenerate);
    report.per_hex_min[c] = m;
    report.min_scaled_jacobian = std::min(report.min_scaled_jacobian, m);
    if (m < 0.0) ++report.inverted_count;
    if (degenerate) ++report.degenerate_count;
    const double clamped = std::clamp(m, -1.0, 1.0);
    const int bin = std::min(39, static_cast<int>(std::floor((clamped + 1.0) / 0.05)));
    ++report.histogram[bin];
  }
  return report;
}

std::pair<HexMesh, QualityReport> improve_quality(const HexMesh& mesh, const TriMesh& surface,
                                                  const ImproveConfig& config) {
  if (mesh.cell_count() == 0) throw ConfigError("empty hex mesh");
  if (surface.faces.cols() == 0) throw ConfigError("empty reference surface");
  const Adjacency adj = build_adjacency(mesh);
  HexMesh current = mesh;
  const int nv = mesh.vertex_count();

  std::vector<int> all_cells(mesh.cell_count());
  for (int c = 0; c < mesh.cell_count(); ++c) all_cells[c] = c;

  auto fit_energy = [&](const Mat3X& x) {
    double e = 0.0;
    for (const int v : adj.boundary_vertices)
      e += std::pow(closest_point_on_surface(surface, x.col(v)).distance, 2);
    return e;
  };
  auto total_energy = [&](const Mat3X& x) {
    return config.w_fit * fit_energy(x) +
           config.w_shape * shape_energy_at(x, current, all_cells);
  };

  double best_min = scaled_jacobian(current).min_scaled_jacobian;
  for (int outer = 0; outer < config.outer_iterations; ++outer) {
    const Mat3X snapshot = current.vertices;

    // (a) interior Laplacian smoothing, accepted per vertex when the local
    // minimum scaled Jacobian does not decrease.
    {
      Mat3X candidate = current.vertices;
      for (int v = 0; v < nv; ++v) {
        if (adj.boundary[v] || adj.neighbors_of[v].empty()) continue;
        Vec3 avg = Vec3::Zero();
        for (const int w : adj.neighbors_of[v]) avg += current.vertices.col(w);
        avg /= static_cast<double>(adj.neighbors_of[v].size());
        const double before = local_min_sj(current.vertices, current, adj, v);
        Mat3X probe = current.vertices;
        probe.col(v) = avg;
        if (local_min_sj(probe, current, adj, v) >= before - 1e-12) candidate.col(v) = avg;
      }
      current.vertices = candidate;
    }

    // (b) boundary smoothing with projection back onto the input surface.
    {
      Mat3X candidate = current.vertices;
      for (const int v : adj.boundary_vertices) {
        if (adj.boundary_neighbors_of[v].empty()) continue;
        Vec3 avg = Vec3::Zero();
        for (const int w : adj.boundary_neighbors_of[v]) avg += current.vertices.col(w);
        avg /= static_cast<double>(adj.boundary_neighbors_of[v].size());
        const Vec3 moved = closest_point_on_surface(surface, avg).point;
        const double before = local_min_sj(current.vertices, current, adj, v);
        Mat3X probe = current.vertices;
        probe.col(v) = moved;
        if (local_min_sj(probe, current, adj, v) >= before - 1e-12) candidate.col(v) = moved;
      }
      current.vertices = candidate;
    }

    // (c) gradient descent on the fitting + shape energy with backtracking.
    for (int step = 0; step < config.descent_steps; ++step) {
      Mat3X grad = Mat3X::Zero(3, nv);
      for (const int v : adj.boundary_vertices) {
        const SurfaceProjection proj = closest_point_on_surface(surface, current.vertices.col(v));
        grad.col(v) += 2.0 * config.w_fit * (current.vertices.col(v) - proj.point);
      }
      const double eps = 1e-6 * std::max(adj.mean_edge, 1e-12);
      Mat3X probe = current.vertices;
      for (int v = 0; v < nv; ++v) {
        if (adj.hexes_of[v].empty()) continue;
        for (int k = 0; k < 3; ++k) {
          probe(k, v) = current.vertices(k, v) + eps;
          const double up = shape_energy_at(probe, current, adj.hexes_of[v]);
          probe(k, v) = current.vertices(k, v) - eps;
          const double down = shape_energy_at(probe, current, adj.hexes_of[v]);
          probe(k, v) = current.vertices(k, v);
          grad(k, v) += config.w_shape * (up - down) / (2.0 * eps);
        }
      }
      const double gmax = grad.cwiseAbs().maxCoeff();
      if (gmax < 1e-14) break;
      const double base = total_energy(current.vertices);
      double alpha = 0.05 * adj.mean_edge / gmax;
      bool accepted = false;
      for (int halving = 0; halving < 8 && !accepted; ++halving, alpha *= 0.5) {
        const Mat3X trial = current.vertices - alpha * grad;
        if (total_energy(trial) < base) {
          current.vertices = trial;
          accepted = true;
        }
      }
      if (!accepted) break;
    }

    const double now = scaled_jacobian(current).min_scaled_jacobian;
    if (now < best_min - 1e-12) {
      current.vertices = snapshot;  // roll back the whole iteration
      break;
    }
    best_min = std::max(best_min, now);
    if (current.vertices == snapshot) break;  // converged
  }
  return {current, scaled_jacobian(current)};
}

std::string render_sj_histogram(const QualityReport& report) {
  std::ostringstream out;
  out << "scaled Jacobian histogram (bin width 0.05)\n";
  const int peak = *std::max_element(report.histogram.begin(), report.histogram.end());
  for (int b = 0; b < static_cast<int>(report.histogram.size()); ++b) {
    const int count = report.histogram[b];
    if (count == 0) continue;
    const double lo = -1.0 + 0.05 * b;
    char label[32];
    std::snprintf(label, sizeof label, "[%+.2f,%+.2f)", lo, lo + 0.05);
    const int bar = peak > 0 ? std::max(1, (40 * count) / peak) : 0;
    out << "  " << label << " " << std::string(bar, '#') << " " << count << "\n";
  }
  out << "cells " << report.per_hex_min.size() << "  min SJ " << report.min_scaled_jacobian
      << "  inverted " << report.inverted_count << "  degenerate " << report.degenerate_count
      << "\n";
  return out.str();
}

}  // namespace polydiff
