#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "polydiff/geometry.hpp"

namespace polydiff {

// Axis-aligned box with integer corners on the polycube lattice.
struct Cuboid {
  Eigen::Vector3i lo;
  Eigen::Vector3i hi;  // componentwise > lo
};

// One boundary rectangle of the complex.  `axis` is the normal axis, `dir`
// the outward sign, `level` the lattice plane index along the normal, and
// lo/hi the rectangle in the canonical cross axes ((axis+1)%3, (axis+2)%3).
// The oriented local frame (s, t) is chosen so that cross(s_hat, t_hat)
// points outward; parameterization and hex mapping both use it.
struct PolycubeFacet {
  int axis = 0;
  int dir = 1;
  int level = 0;
  Eigen::Vector2i lo;
  Eigen::Vector2i hi;
  int cuboid = -1;

  int s_axis() const { return dir > 0 ? (axis + 1) % 3 : (axis + 2) % 3; }
  int t_axis() const { return dir > 0 ? (axis + 2) % 3 : (axis + 1) % 3; }
  int s_lo() const { return dir > 0 ? lo.x() : lo.y(); }
  int t_lo() const { return dir > 0 ? lo.y() : lo.x(); }
  int s_extent() const { return dir > 0 ? hi.x() - lo.x() : hi.y() - lo.y(); }
  int t_extent() const { return dir > 0 ? hi.y() - lo.y() : hi.x() - lo.x(); }

  // Lattice-space point at local coordinates (s, t) measured in lattice units.
  Vec3 lattice_point(double s, double t) const {
    Vec3 q;
    q[axis] = level;
    q[s_axis()] = s_lo() + s;
    q[t_axis()] = t_lo() + t;
    return q;
  }
  // Local (s, t) of a lattice-space point assumed to lie near the facet plane.
  Eigen::Vector2d local_uv(const Vec3& lattice_p) const {
    return {lattice_p[s_axis()] - s_lo(), lattice_p[t_axis()] - t_lo()};
  }
};

struct PolycubeComplex {
  double h = 1.0;
  Vec3 origin = Vec3::Zero();
  std::vector<Cuboid> cuboids;
  std::vector<PolycubeFacet> facets;
  std::vector<std::pair<int, int>> facet_adjacency;  // unique pairs, first < second

  Vec3 lattice_to_model(const Vec3& q) const { return origin + h * q; }
  Vec3 model_to_lattice(const Vec3& p) const { return (p - origin) / h; }
  int unit_cell_count() const;
};

// Per input vertex: owning boundary facet and position on it, in the facet's
// oriented (s, t) frame, lattice units, clamped inside the closed rectangle.
struct VertexFacetAssignment {
  std::vector<int> facet;
  Eigen::Matrix2Xd uv;
};

// Uniform-weight Laplacian smoothing with per-iteration uniform rescaling
// about the volume centroid restoring the enclosed volume (declared in
// smoothing.hpp; listed here for discoverability next to the snap stage).

struct SnapOptions {
  double cluster_tol = 0.04;       // 1D plane-cluster gap threshold, frame units
  double min_cluster_share = 0.02; // prune clusters carrying less than this share
};

struct SnapResult {
  PolycubeComplex complex;
  VertexFacetAssignment assignment;
};

// Classify vertices by dominant area-weighted normal, detect axis planes by
// 1D gap clustering, quantize planes to a lattice (h = minimum inter-plane
// gap), keep the plane-grid cells whose pre-snap centers lie inside the
// surface, and assign every vertex to its nearest compatible facet.
SnapResult snap_to_polycube(const Mat3X& points, const FaceMat& topology,
                            const SnapOptions& options);
SnapResult snap_to_polycube(const Mat3X& points, const FaceMat& topology,
                            double tol = 0.04);

// Exact model-space positions of the vertices projected onto their facets.
Mat3X project_to_assigned_facets(const PolycubeComplex& pc,
                                 const VertexFacetAssignment& assignment);

// Facet whose rectangle is closest to a model-space point.
int nearest_facet(const PolycubeComplex& pc, const Vec3& model_point);
double facet_distance(const PolycubeComplex& pc, int facet, const Vec3& model_point);

// Watertight triangle mesh of the exposed lattice faces, model coordinates,
// outward orientation, lattice corners welded.  `subdivisions` splits every
// unit face into subdivisions^2 quads so the mesh has face-interior vertices
// (needed when the result feeds back into normal classification).
TriMesh polycube_boundary_mesh(const PolycubeComplex& pc, int subdivisions = 1);

struct PolycubeReport {
  std::vector<std::string> violations;
  int genus = -1;

  bool valid() const { return violations.empty(); }
};

// Check cuboid disjointness, boundary manifoldness/closedness, and genus
// (against `expected_genus` when given).  Violations are report entries,
// never exceptions.
PolycubeReport validate_polycube(const PolycubeComplex& pc,
                                 std::optional<int> expected_genus = std::nullopt);

// JSON persistence: lattice unit, origin, and cuboid corners.  Facets and
// adjacency are recomputed on load.
void save_polycube(const std::string& path, const PolycubeComplex& pc);
PolycubeComplex load_polycube(const std::string& path);

// Recompute facets + adjacency from the cuboid set.  Throws StageError on
// overlapping cuboids or a non-manifold boundary.
void rebuild_facets(PolycubeComplex& pc);

}  // namespace polydiff
