#include "polydiff/smoothing.hpp"

#include <cmath>
#include <vector>

#include "polydiff/errors.hpp"

namespace polydiff {

Vec3 volume_centroid(const TriMesh& mesh) {
  // Signed tetrahedra against the origin: volume a.(b x c)/6, centroid
  // (a+b+c)/4.
  double volume = 0.0;
  Vec3 weighted = Vec3::Zero();
  for (int f = 0; f < mesh.face_count(); ++f) {
    const Vec3 a = mesh.vertices.col(mesh.faces(0, f));
    const Vec3 b = mesh.vertices.col(mesh.faces(1, f));
    const Vec3 c = mesh.vertices.col(mesh.faces(2, f));
    const double v = a.dot(b.cross(c)) / 6.0;
    volume += v;
    weighted += v * (a + b + c) / 4.0;
  }
  if (std::abs(volume) < 1e-300) throw StageError("mesh encloses no volume");
  return weighted / volume;
}

TriMesh volume_preserving_smooth(const TriMesh& mesh, int iterations, double lambda) {
  if (iterations < 0) throw ConfigError("negative smoothing iteration count");
  if (!(lambda > 0.0) || lambda > 1.0) throw ConfigError("smoothing lambda outside (0, 1]");

  const double v0 = signed_volume(mesh);
  if (std::abs(v0) < 1e-300) throw StageError("mesh encloses no volume");

  // Unique edge neighbors.
  std::vector<std::vector<int>> nbr(static_cast<std::size_t>(mesh.vertex_count()));
  for (const EdgeUse& e : edge_uses(mesh)) {
    const int a = static_cast<int>(e.key >> 32);
    const int b = static_cast<int>(e.key & 0xFFFFFFFF);
    nbr[static_cast<std::size_t>(a)].push_back(b);
    nbr[static_cast<std::size_t>(b)].push_back(a);
  }

  TriMesh out = mesh;
  TriMesh candidate = mesh;
  double energy = laplacian_energy(out);
  for (int it = 0; it < iterations; ++it) {
    for (int v = 0; v < mesh.vertex_count(); ++v) {
      const auto& ns = nbr[static_cast<std::size_t>(v)];
      if (ns.empty()) {
        candidate.vertices.col(v) = out.vertices.col(v);
        continue;
      }
      Vec3 centroid = Vec3::Zero();
      for (const int n : ns) centroid += out.vertices.col(n);
      centroid /= static_cast<double>(ns.size());
      candidate.vertices.col(v) =
          (1.0 - lambda) * out.vertices.col(v) + lambda * centroid;
    }

    const double v = signed_volume(candidate);
    if (std::abs(v) < 1e-300) throw StageError("smoothing collapsed the mesh");
    const double scale = std::cbrt(v0 / v);
    const Vec3 center = volume_centroid(candidate);
    candidate.vertices = (candidate.vertices.colwise() - center) * scale;
    candidate.vertices.colwise() += center;

    // Once the noise is gone, further averaging only amplifies the dominant
    // graph mode (the volume rescale re-inflates what averaging shrinks), so
    // the first energy increase marks convergence and ends the run.
    const double next_energy = laplacian_energy(candidate);
    if (next_energy > energy) break;
    out.vertices = candidate.vertices;
    energy = next_energy;
  }
  return out;
}

}  // namespace polydiff
