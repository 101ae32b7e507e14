#pragma once

#include <array>
#include <vector>

#include "polydiff/geometry.hpp"
#include "polydiff/harmonic.hpp"
#include "polydiff/polycube.hpp"

namespace polydiff {

// Uniform refinement of the polycube: every unit lattice cell becomes
// (2^depth)^3 hexes, vertices deduplicated on the shared fine grid so faces
// conform across cuboids.  Cell corners follow the usual hex ordering:
// 0..3 the bottom face counter-clockwise seen from below (outside), 4..7 the
// matching top corners.
HexMesh generate_hex_lattice(const PolycubeComplex& pc, int depth);

// Boundary quads of a hex mesh, wound counter-clockwise seen from outside.
std::vector<std::array<int, 4>> boundary_quads(const HexMesh& mesh);

// Repositions lattice nodes into physical space: nodes on boundary facets go
// through the inverse harmonic maps, internal cuboid faces are filled by
// Coons patches of their (already surface-mapped) border curves, and cuboid
// interiors by transfinite trilinear blending of the six faces.  `params`
// must hold one PatchParam per facet, index-aligned.  Connectivity is
// untouched.  Throws StageError on off-grid vertices, interior lattice
// entities whose borders never reach the surface, or point-location failure.
HexMesh map_to_physical(const HexMesh& lattice, const std::vector<PatchParam>& params,
                        const TriMesh& mesh, const PolycubeComplex& pc);

// Inserts one hex layer inside the boundary: boundary vertices are
// duplicated, offset inward by `fraction` of their mean incident boundary
// edge length, interior cells rewired to the duplicates, and one new hex
// built per boundary quad.  The original boundary geometry is unchanged.
// If the new layer contains inverted hexes the offset is halved, up to three
// retries, then StageError.
HexMesh pillow_boundary(const HexMesh& mesh, double fraction = 0.3);

}  // namespace polydiff
