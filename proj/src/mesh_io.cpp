#include "polydiff/mesh_io.hpp"

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "polydiff/errors.hpp"

namespace polydiff {

namespace {

[[noreturn]] void fail(const std::string& name, int line, const std::string& what) {
  throw MeshIoError(name + ":" + std::to_string(line) + ": " + what);
}

std::string lower_ext(const std::string& path) {
  std::string ext = std::filesystem::path(path).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return ext;
}

bool parse_double(const std::string& tok, double& out) {
  const char* begin = tok.c_str();
  char* end = nullptr;
  out = std::strtod(begin, &end);
  return end == begin + tok.size() && tok.size() > 0;
}

// Leading vertex index of an OBJ face corner ("7", "7/1", "7//3", "7/1/3").
int parse_face_corner(const std::string& tok, int vertex_count, const std::string& name, int line) {
  const std::size_t slash = tok.find('/');
  const std::string head = slash == std::string::npos ? tok : tok.substr(0, slash);
  char* end = nullptr;
  const long idx = std::strtol(head.c_str(), &end, 10);
  if (end != head.c_str() + head.size() || head.empty())
    fail(name, line, "malformed face corner '" + tok + "'");
  if (idx < 1 || idx > vertex_count)
    fail(name, line, "face index " + std::to_string(idx) + " out of range 1.." +
                         std::to_string(vertex_count));
  return static_cast<int>(idx - 1);
}

struct RawTriangles {
  std::vector<Vec3> corners;  // 3 per facet, facet order preserved
};

TriMesh weld(const RawTriangles& raw, const std::string& name) {
  const std::size_t n = raw.corners.size();
  if (n == 0) throw MeshIoError(name + ": empty mesh (no facets)");

  Eigen::AlignedBox3d box;
  for (const Vec3& p : raw.corners) box.extend(p);
  const double diag = box.diagonal().norm();
  if (!(diag > 0.0)) throw MeshIoError(name + ": degenerate mesh, zero bounding box");
  const double tol = 1e-8 * diag;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const Vec3& pa = raw.corners[a];
    const Vec3& pb = raw.corners[b];
    if (pa.x() != pb.x()) return pa.x() < pb.x();
    if (pa.y() != pb.y()) return pa.y() < pb.y();
    return pa.z() < pb.z();
  });

  // Scan in lexicographic order; corners within tol of the current cluster
  // representative collapse onto it, so unique vertex ids follow the sort.
  std::vector<int> corner_to_vertex(n);
  std::vector<Vec3> unique_pts;
  unique_pts.reserve(n / 4);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3& p = raw.corners[order[i]];
    if (unique_pts.empty() || (p - unique_pts.back()).norm() > tol) unique_pts.push_back(p);
    corner_to_vertex[order[i]] = static_cast<int>(unique_pts.size()) - 1;
  }

  TriMesh mesh;
  mesh.vertices.resize(3, static_cast<int>(unique_pts.size()));
  for (std::size_t i = 0; i < unique_pts.size(); ++i) mesh.vertices.col(static_cast<int>(i)) = unique_pts[i];
  mesh.faces.resize(3, static_cast<int>(n / 3));
  for (std::size_t f = 0; f < n / 3; ++f) {
    const int a = corner_to_vertex[3 * f], b = corner_to_vertex[3 * f + 1],
              c = corner_to_vertex[3 * f + 2];
    if (a == b || b == c || a == c)
      throw MeshIoError(name + ": facet " + std::to_string(f) + " degenerates after welding");
    mesh.faces.col(static_cast<int>(f)) << a, b, c;
  }
  return mesh;
}

TriMesh parse_stl_ascii(std::istream& in, const std::string& name) {
  RawTriangles raw;
  std::string tok;
  int line = 1;
  int vertices_in_facet = -1;  // -1 outside a facet

  // Token scanner that tracks line numbers for error messages.
  const auto next = [&](std::string& out) -> bool {
    out.clear();
    int c;
    while ((c = in.get()) != EOF) {
      if (c == '\n') ++line;
      if (!std::isspace(c)) break;
    }
    if (c == EOF) return false;
    out.push_back(static_cast<char>(c));
    while ((c = in.get()) != EOF && !std::isspace(c)) out.push_back(static_cast<char>(c));
    if (c == '\n') ++line;
    return true;
  };

  if (!next(tok) || tok != "solid") fail(name, line, "ASCII STL must start with 'solid'");
  // Skip the optional solid name (rest of the header line is free-form).
  while (in.peek() != '\n' && in.peek() != EOF) in.get();

  while (next(tok)) {
    if (tok == "facet") {
      if (vertices_in_facet >= 0) fail(name, line, "nested facet");
      vertices_in_facet = 0;
      if (!next(tok) || tok != "normal") fail(name, line, "facet without normal");
      double dummy;
      for (int k = 0; k < 3; ++k)
        if (!next(tok) || !parse_double(tok, dummy)) fail(name, line, "malformed facet normal");
    } else if (tok == "outer") {
      if (!next(tok) || tok != "loop") fail(name, line, "expected 'outer loop'");
    } else if (tok == "vertex") {
      if (vertices_in_facet < 0) fail(name, line, "vertex outside facet");
      Vec3 p;
      for (int k = 0; k < 3; ++k) {
        double v;
        if (!next(tok) || !parse_double(tok, v)) fail(name, line, "malformed vertex coordinate");
        p[k] = v;
      }
      raw.corners.push_back(p);
      if (++vertices_in_facet > 3) fail(name, line, "facet with more than 3 vertices");
    } else if (tok == "endloop") {
      if (vertices_in_facet != 3) fail(name, line, "facet loop without exactly 3 vertices");
    } else if (tok == "endfacet") {
      vertices_in_facet = -1;
    } else if (tok == "endsolid") {
      while (next(tok)) {}  // trailing name tokens
      break;
    } else {
      fail(name, line, "unexpected token '" + tok + "'");
    }
  }
  return weld(raw, name);
}

TriMesh parse_stl_binary(const std::string& bytes, const std::string& name) {
  const auto read_u32 = [&](std::size_t off) {
    std::uint32_t v;
    std::memcpy(&v, bytes.data() + off, 4);
    return v;
  };
  const std::uint32_t count = read_u32(80);
  RawTriangles raw;
  raw.corners.reserve(static_cast<std::size_t>(count) * 3);
  for (std::uint32_t f = 0; f < count; ++f) {
    const std::size_t base = 84 + static_cast<std::size_t>(f) * 50 + 12;  // skip normal
    for (int k = 0; k < 3; ++k) {
      float xyz[3];
      std::memcpy(xyz, bytes.data() + base + static_cast<std::size_t>(k) * 12, 12);
      raw.corners.emplace_back(xyz[0], xyz[1], xyz[2]);
    }
  }
  return weld(raw, name);
}

}  // namespace

TriMesh parse_obj(std::istream& in, const std::string& name) {
  std::vector<Vec3> verts;
  std::vector<std::array<int, 3>> faces;
  std::string line_text;
  int line = 0;
  while (std::getline(in, line_text)) {
    ++line;
    std::istringstream ls(line_text);
    std::string key;
    if (!(ls >> key) || key[0] == '#') continue;
    if (key == "v") {
      std::vector<std::string> toks;
      std::string t;
      while (ls >> t) toks.push_back(t);
      if (toks.size() < 3 || toks.size() > 4) fail(name, line, "vertex record needs 3 coordinates");
      Vec3 p;
      for (int k = 0; k < 3; ++k)
        if (!parse_double(toks[static_cast<std::size_t>(k)], p[k]))
          fail(name, line, "malformed vertex coordinate '" + toks[static_cast<std::size_t>(k)] + "'");
      verts.push_back(p);
    } else if (key == "f") {
      std::vector<std::string> toks;
      std::string t;
      while (ls >> t) toks.push_back(t);
      if (toks.size() > 3) fail(name, line, "non-triangular face with " + std::to_string(toks.size()) + " corners");
      if (toks.size() < 3) fail(name, line, "face record needs 3 corners");
      std::array<int, 3> tri;
      for (int k = 0; k < 3; ++k)
        tri[static_cast<std::size_t>(k)] =
            parse_face_corner(toks[static_cast<std::size_t>(k)], static_cast<int>(verts.size()), name, line);
      faces.push_back(tri);
    }
    // Other record types (vn, vt, g, usemtl, ...) carry no surface geometry.
  }
  if (verts.empty() || faces.empty()) throw MeshIoError(name + ": empty mesh");
  TriMesh mesh;
  mesh.vertices.resize(3, static_cast<int>(verts.size()));
  for (std::size_t i = 0; i < verts.size(); ++i) mesh.vertices.col(static_cast<int>(i)) = verts[i];
  mesh.faces.resize(3, static_cast<int>(faces.size()));
  for (std::size_t f = 0; f < faces.size(); ++f)
    mesh.faces.col(static_cast<int>(f)) << faces[f][0], faces[f][1], faces[f][2];
  return mesh;
}

TriMesh parse_stl(std::istream& in, const std::string& name) {
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() >= 84) {
    std::uint32_t count;
    std::memcpy(&count, bytes.data() + 80, 4);
    if (bytes.size() == 84 + static_cast<std::size_t>(count) * 50)
      return parse_stl_binary(bytes, name);
  }
  std::istringstream ss(bytes);
  return parse_stl_ascii(ss, name);
}

TriMesh load_surface_mesh(const std::string& path) {
  const std::string ext = lower_ext(path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MeshIoError(path + ": cannot open file");
  if (ext == ".obj") return parse_obj(in, path);
  if (ext == ".stl") return parse_stl(in, path);
  throw MeshIoError(path + ": unknown mesh extension '" + ext + "' (expected .obj or .stl)");
}

namespace {

// Shortest representation that round-trips a double exactly.
std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  double back = 0.0;
  std::sscanf(buf, "%lf", &back);
  if (back == v) {
    for (int prec = 1; prec < 17; ++prec) {
      char probe[32];
      std::snprintf(probe, sizeof(probe), "%.*g", prec, v);
      std::sscanf(probe, "%lf", &back);
      if (back == v) return probe;
    }
  }
  return buf;
}

}  // namespace

void write_trimesh_obj(const TriMesh& mesh, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MeshIoError(path + ": cannot open for writing");
  for (int i = 0; i < mesh.vertex_count(); ++i)
    out << "v " << fmt_double(mesh.vertices(0, i)) << ' ' << fmt_double(mesh.vertices(1, i))
        << ' ' << fmt_double(mesh.vertices(2, i)) << '\n';
  for (int f = 0; f < mesh.face_count(); ++f)
    out << "f " << mesh.faces(0, f) + 1 << ' ' << mesh.faces(1, f) + 1 << ' '
        << mesh.faces(2, f) + 1 << '\n';
  if (!out) throw MeshIoError(path + ": write failed");
}

void write_hexmesh_vtk(const HexMesh& mesh, const std::string& path,
                       const std::optional<std::vector<double>>& cell_scalars,
                       const std::string& title) {
  if (cell_scalars && static_cast<int>(cell_scalars->size()) != mesh.cell_count())
    throw StageError("cell scalar count does not match cell count");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MeshIoError(path + ": cannot open for writing");
  out << "# vtk DataFile Version 3.0\n" << title << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << mesh.vertex_count() << " double\n";
  for (int i = 0; i < mesh.vertex_count(); ++i)
    out << fmt_double(mesh.vertices(0, i)) << ' ' << fmt_double(mesh.vertices(1, i)) << ' '
        << fmt_double(mesh.vertices(2, i)) << '\n';
  out << "CELLS " << mesh.cell_count() << ' ' << mesh.cell_count() * 9 << '\n';
  for (int c = 0; c < mesh.cell_count(); ++c) {
    out << 8;
    for (int k = 0; k < 8; ++k) out << ' ' << mesh.cells(k, c);
    out << '\n';
  }
  out << "CELL_TYPES " << mesh.cell_count() << '\n';
  for (int c = 0; c < mesh.cell_count(); ++c) out << "12\n";
  if (cell_scalars) {
    out << "CELL_DATA " << mesh.cell_count() << '\n';
    out << "SCALARS scaled_jacobian double 1\nLOOKUP_TABLE default\n";
    for (double v : *cell_scalars) out << fmt_double(v) << '\n';
  }
  if (!out) throw MeshIoError(path + ": write failed");
}

VtkHexData read_hexmesh_vtk(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MeshIoError(path + ": cannot open file");
  std::string tok;
  VtkHexData data;
  std::string header;
  std::getline(in, header);  // "# vtk DataFile Version x.y"
  if (header.rfind("# vtk DataFile", 0) != 0) throw MeshIoError(path + ": not a legacy VTK file");
  std::getline(in, header);  // title
  in >> tok;
  if (tok != "ASCII") throw MeshIoError(path + ": only ASCII VTK is supported");
  in >> tok >> tok;
  if (tok != "UNSTRUCTURED_GRID") throw MeshIoError(path + ": expected UNSTRUCTURED_GRID");

  int n_points = 0, n_cells = 0;
  while (in >> tok) {
    if (tok == "POINTS") {
      std::string type;
      in >> n_points >> type;
      data.mesh.vertices.resize(3, n_points);
      for (int i = 0; i < n_points; ++i)
        in >> data.mesh.vertices(0, i) >> data.mesh.vertices(1, i) >> data.mesh.vertices(2, i);
    } else if (tok == "CELLS") {
      int total = 0;
      in >> n_cells >> total;
      data.mesh.cells.resize(8, n_cells);
      for (int c = 0; c < n_cells; ++c) {
        int cnt;
        in >> cnt;
        if (cnt != 8) throw MeshIoError(path + ": cell " + std::to_string(c) + " is not a hexahedron");
        for (int k = 0; k < 8; ++k) in >> data.mesh.cells(k, c);
      }
    } else if (tok == "CELL_TYPES") {
      int n;
      in >> n;
      for (int c = 0; c < n; ++c) {
        int t;
        in >> t;
        if (t != 12) throw MeshIoError(path + ": unsupported cell type " + std::to_string(t));
      }
    } else if (tok == "SCALARS") {
      std::string name, type;
      in >> name >> type;
      int comps = 1;
      if (in.peek() != '\n') in >> comps;
      in >> tok >> tok;  // LOOKUP_TABLE default
      std::vector<double> vals(static_cast<std::size_t>(n_cells));
      for (double& v : vals) in >> v;
      data.cell_scalars = std::move(vals);
    }
  }
  if (!in.eof() && in.fail()) throw MeshIoError(path + ": parse error");
  if (n_points == 0 || n_cells == 0) throw MeshIoError(path + ": empty mesh");
  return data;
}

}  // namespace polydiff
