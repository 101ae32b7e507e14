#pragma once

#include <vector>

#include "polydiff/geometry.hpp"
#include "polydiff/segmentation.hpp"

namespace polydiff {

// Parameterization of one patch over its facet rectangle [0,W]x[0,H] in the
// facet's oriented (s, t) frame.  `uv` has one column per mesh vertex; only
// columns of `vertices` are meaningful.
struct PatchParam {
  int facet = -1;
  double width = 0.0;
  double height = 0.0;
  std::vector<int> vertices;
  std::vector<int> triangles;
  Eigen::Matrix2Xd uv;
  double residual = 0.0;        // relative Laplace residual over interior rows
  bool mean_value_fallback = false;
};

// Maps the patch boundary onto the rectangle sides by chord length and solves
// the cotangent-weight Laplace equation for the interior (negative weights
// clamped to 1e-6; mean-value weights as fallback if the embedding flips).
// Throws StageError on solver failure, residual >= 1e-10, or flipped
// parametric triangles after the fallback.
PatchParam harmonic_parameterize(const TriMesh& mesh, const SegmentationLabels& labels,
                                 int facet);

// Inverse of the parameterization: locate (u, v) in a parametric triangle and
// interpolate the physical positions barycentrically.  Throws StageError when
// the point lies outside every triangle beyond tolerance.
Vec3 map_param_to_surface(const TriMesh& mesh, const PatchParam& param, double u, double v);

}  // namespace polydiff
