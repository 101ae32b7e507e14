#pragma once

#include <array>
#include <vector>

#include "polydiff/geometry.hpp"
#include "polydiff/polycube.hpp"

namespace polydiff {

// One surface patch: the triangles labelled with a facet id plus its oriented
// boundary loop.  The loop runs counter-clockwise seen from outside and is
// rotated so it starts at the vertex matched to the facet rectangle's (0, 0)
// corner; `corner_pos` are loop indices of the four rectangle corners in
// order (0,0) -> (W,0) -> (W,H) -> (0,H).
struct SurfacePatch {
  int facet = -1;
  int width = 0;   // facet rectangle extent along its s axis, lattice units
  int height = 0;  // extent along the t axis
  std::vector<int> triangles;
  std::vector<int> loop;
  std::array<int, 4> corner_pos = {-1, -1, -1, -1};
};

struct SegmentationLabels {
  std::vector<int> tri_label;        // per-triangle facet id
  std::vector<SurfacePatch> patches; // indexed by facet id
};

// Label every triangle with a boundary facet: majority vote of its vertices'
// assigned facets, ties broken by the facet nearest the triangle centroid.
// Disconnected fragments are merged into their largest neighbouring patch.
// Throws StageError when the repaired patches fail the disk test or their
// adjacency graph differs from the facet adjacency graph (the message lists
// the offending patches/pairs).
SegmentationLabels segment_surface(const TriMesh& mesh,
                                   const VertexFacetAssignment& assignment,
                                   const PolycubeComplex& pc);

}  // namespace polydiff
