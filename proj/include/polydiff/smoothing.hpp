#pragma once

#include "polydiff/geometry.hpp"

namespace polydiff {

// Uniform-Laplacian smoothing: each vertex moves a fraction lambda toward the
// centroid of its edge neighbors, then the mesh is rescaled about its volume
// centroid so the enclosed volume stays at its initial value.  `iterations`
// is a cap: the run stops at the first iteration that would raise the
// Laplacian energy (after denoising, the volume rescale re-inflates what
// averaging shrinks, degrading the shape), so the energy of the iterates is
// non-increasing by construction.  Throws ConfigError for lambda outside
// (0, 1] or negative iteration counts, StageError for meshes without volume.
TriMesh volume_preserving_smooth(const TriMesh& mesh, int iterations, double lambda = 0.5);

// Center of mass of the enclosed volume, by the divergence theorem.
Vec3 volume_centroid(const TriMesh& mesh);

}  // namespace polydiff
