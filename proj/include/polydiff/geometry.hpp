#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace polydiff {

using Vec3 = Eigen::Vector3d;
using Mat3X = Eigen::Matrix3Xd;               // points stored as columns
using FaceMat = Eigen::Matrix<int, 3, Eigen::Dynamic>;
using HexMat = Eigen::Matrix<int, 8, Eigen::Dynamic>;

// Triangle surface mesh; faces wind counter-clockwise seen from outside.
struct TriMesh {
  Mat3X vertices;
  FaceMat faces;

  int vertex_count() const { return static_cast<int>(vertices.cols()); }
  int face_count() const { return static_cast<int>(faces.cols()); }
};

// Hexahedral volume mesh.  Cell corners follow the usual unstructured-grid
// convention: corners 0-3 are one face in counter-clockwise order seen from
// outside that face, corners 4-7 are the opposite face in the same order.
struct HexMesh {
  Mat3X vertices;
  HexMat cells;

  int vertex_count() const { return static_cast<int>(vertices.cols()); }
  int cell_count() const { return static_cast<int>(cells.cols()); }
};

Eigen::AlignedBox3d bounding_box(const Mat3X& points);

inline double bbox_diagonal(const Mat3X& points) {
  return bounding_box(points).diagonal().norm();
}

// Per-face normals scaled by twice the triangle area (raw cross products).
Mat3X face_cross_products(const TriMesh& mesh);

// Area-weighted vertex normals, not normalized.
Mat3X vertex_normals_area_weighted(const TriMesh& mesh);

double surface_area(const TriMesh& mesh);

// Enclosed volume by the divergence theorem; positive for outward orientation.
double signed_volume(const TriMesh& mesh);

// Sum of squared edge lengths over unique edges (uniform-weight Dirichlet
// energy of the vertex positions).
double laplacian_energy(const TriMesh& mesh);

struct EdgeUse {
  std::int64_t key;  // packed (min_vertex, max_vertex)
  int count;
};

// Unique undirected edges with incidence counts.
std::vector<EdgeUse> edge_uses(const TriMesh& mesh);

bool is_closed_manifold(const TriMesh& mesh);

// Genus of a closed, connected, manifold surface from its Euler
// characteristic.  Throws TopologyError for open, non-manifold, or
// disconnected input; the disconnected message carries per-component genera.
int mesh_genus(const TriMesh& mesh);

// Genus of every face-connected component (each must be closed and manifold).
std::vector<int> per_component_genus(const TriMesh& mesh);

// Face-connected component id per face, ids dense from zero.
std::vector<int> face_components(const TriMesh& mesh);

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

struct SurfaceProjection {
  Vec3 point;
  int triangle = -1;
  double distance = 0.0;
};

// Exact closest point by scanning all triangles (meshes here are small).
SurfaceProjection closest_point_on_surface(const TriMesh& mesh, const Vec3& p);

// One-sided and symmetric Hausdorff distances between sampled point sets.
double hausdorff_one_sided(const Mat3X& from, const Mat3X& to);
double hausdorff_symmetric(const Mat3X& a, const Mat3X& b);

// Parity ray-cast point containment for a closed triangle mesh.  The ray
// direction is fixed and irrational-ish so lattice-aligned geometry does not
// produce grazing hits.
bool point_inside_mesh(const TriMesh& mesh, const Vec3& p);

}  // namespace polydiff
