#pragma once

#include <optional>
#include <string>
#include <vector>

#include "polydiff/geometry.hpp"

namespace polydiff {

// Loads a triangle surface mesh from .obj (ASCII, 1-based v/f records) or
// .stl (binary or ASCII; duplicate facet corners welded with tolerance
// 1e-8 x bounding-box diagonal, vertex ids assigned in lexicographic
// coordinate order).  Throws MeshIoError with file/line context on malformed
// input, non-triangular faces, unknown extensions, and empty meshes.
TriMesh load_surface_mesh(const std::string& path);

TriMesh parse_obj(std::istream& in, const std::string& name);
TriMesh parse_stl(std::istream& in, const std::string& name);

void write_trimesh_obj(const TriMesh& mesh, const std::string& path);

// Legacy ASCII unstructured-grid writer (file version 3.0, cell type 12).
// `cell_scalars`, when present, is written as a per-cell SCALARS field named
// "scaled_jacobian".  Output is byte-stable: fixed field order, '\n' line
// endings, and shortest-round-trip double formatting.
void write_hexmesh_vtk(const HexMesh& mesh, const std::string& path,
                       const std::optional<std::vector<double>>& cell_scalars = std::nullopt,
                       const std::string& title = "hexahedral mesh");

struct VtkHexData {
  HexMesh mesh;
  std::optional<std::vector<double>> cell_scalars;
};

// Reader for the subset of legacy ASCII VTK produced by write_hexmesh_vtk.
VtkHexData read_hexmesh_vtk(const std::string& path);

}  // namespace polydiff
