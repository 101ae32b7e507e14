#include <doctest.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "polydiff/errors.hpp"
#include "polydiff/geometry.hpp"
#include "polydiff/mesh_io.hpp"
#include "polydiff/rng.hpp"

using namespace polydiff;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

// ASCII STL of the unit cube as a 36-corner triangle soup.
std::string cube_stl_ascii() {
  const double v[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                          {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
  const int tris[12][3] = {{0, 2, 1}, {0, 3, 2}, {4, 5, 6}, {4, 6, 7}, {0, 1, 5}, {0, 5, 4},
                           {2, 3, 7}, {2, 7, 6}, {0, 4, 7}, {0, 7, 3}, {1, 2, 6}, {1, 6, 5}};
  std::ostringstream out;
  out << "solid cube\n";
  for (const auto& t : tris) {
    out << " facet normal 0 0 0\n  outer loop\n";
    for (int k = 0; k < 3; ++k)
      out << "   vertex " << v[t[k]][0] << " " << v[t[k]][1] << " " << v[t[k]][2] << "\n";
    out << "  endloop\n endfacet\n";
  }
  out << "endsolid cube\n";
  return out.str();
}

std::string cube_stl_binary() {
  const float v[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                         {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
  const int tris[12][3] = {{0, 2, 1}, {0, 3, 2}, {4, 5, 6}, {4, 6, 7}, {0, 1, 5}, {0, 5, 4},
                           {2, 3, 7}, {2, 7, 6}, {0, 4, 7}, {0, 7, 3}, {1, 2, 6}, {1, 6, 5}};
  std::string bytes(80, '\0');
  const std::uint32_t n = 12;
  bytes.append(reinterpret_cast<const char*>(&n), 4);
  for (const auto& t : tris) {
    const float normal[3] = {0, 0, 0};
    bytes.append(reinterpret_cast<const char*>(normal), 12);
    for (int k = 0; k < 3; ++k) bytes.append(reinterpret_cast<const char*>(v[t[k]]), 12);
    const std::uint16_t attr = 0;
    bytes.append(reinterpret_cast<const char*>(&attr), 2);
  }
  return bytes;
}

}  // namespace

TEST_CASE("mesh io: obj parsing handles the corner reference forms") {
  std::istringstream in(
      "# comment\n"
      "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\n"
      "vn 0 0 1\nvt 0.5 0.5\n"
      "g part\n"
      "f 1 2 3\n"
      "f 1/1 2/1 4/1\n"
      "f 1//1 3//1 4//1\n"
      "f 2/1/1 3/1/1 4/1/1\n");
  const TriMesh m = parse_obj(in, "test.obj");
  CHECK(m.vertex_count() == 4);
  CHECK(m.face_count() == 4);
  CHECK(signed_volume(m) != 0.0);
}

TEST_CASE("mesh io: obj rejects malformed input") {
  {
    std::istringstream in("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nf 1 2 3 4\n");
    CHECK_THROWS_AS(parse_obj(in, "quad.obj"), MeshIoError);
  }
  {
    std::istringstream in("v 0 0 0\nv 1 0 0\nf 1 2 9\n");
    CHECK_THROWS_AS(parse_obj(in, "range.obj"), MeshIoError);
  }
  {
    std::istringstream in("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2\n");
    CHECK_THROWS_AS(parse_obj(in, "pair.obj"), MeshIoError);
  }
  {
    std::istringstream in("# nothing here\n");
    CHECK_THROWS_AS(parse_obj(in, "empty.obj"), MeshIoError);
  }
}

TEST_CASE("mesh io: ascii stl welds the soup into a closed cube") {
  std::istringstream in(cube_stl_ascii());
  const TriMesh m = parse_stl(in, "cube.stl");
  CHECK(m.vertex_count() == 8);
  CHECK(m.face_count() == 12);
  CHECK(is_closed_manifold(m));
  CHECK(mesh_genus(m) == 0);
  CHECK(signed_volume(m) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("mesh io: binary stl matches the ascii parse") {
  std::istringstream in(cube_stl_binary());
  const TriMesh m = parse_stl(in, "cube_bin.stl");
  CHECK(m.vertex_count() == 8);
  CHECK(m.face_count() == 12);
  CHECK(signed_volume(m) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("mesh io: stl grammar violations are reported") {
  {
    std::istringstream in("solid x\nfacet normal 0 0 0\nouter loop\nvertex 0 0 0\nvertex 1 0 0\n"
                          "endloop\nendfacet\nendsolid x\n");
    CHECK_THROWS_AS(parse_stl(in, "two_vertex.stl"), MeshIoError);
  }
  {
    std::istringstream in("solid x\nfacet normal 0 0 0\n");
    CHECK_THROWS_AS(parse_stl(in, "truncated.stl"), MeshIoError);
  }
}

TEST_CASE("mesh io: extension dispatch and round trip through obj") {
  const auto stl_path = temp_path("polydiff_cube_test.stl");
  {
    std::ofstream out(stl_path, std::ios::binary);
    out << cube_stl_binary();
  }
  const TriMesh m = load_surface_mesh(stl_path.string());
  CHECK(m.vertex_count() == 8);

  const auto obj_path = temp_path("polydiff_cube_test.obj");
  write_trimesh_obj(m, obj_path.string());
  const TriMesh back = load_surface_mesh(obj_path.string());
  CHECK(back.vertex_count() == 8);
  CHECK(back.face_count() == 12);
  CHECK((back.vertices - m.vertices).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.faces - m.faces).cwiseAbs().maxCoeff() == 0);

  CHECK_THROWS_AS(load_surface_mesh("mesh.ply"), MeshIoError);
  CHECK_THROWS_AS(load_surface_mesh(temp_path("missing_polydiff.obj").string()), MeshIoError);
  std::filesystem::remove(stl_path);
  std::filesystem::remove(obj_path);
}

TEST_CASE("mesh io: vtk hex writer round trips bitwise") {
  HexMesh hm;
  hm.vertices.resize(3, 12);
  Rng rng(8);
  for (int i = 0; i < 12; ++i)
    hm.vertices.col(i) = Vec3(rng.uniform(-1, 1), rng.uniform(0, 2), rng.uniform(3, 4));
  hm.cells.resize(8, 2);
  hm.cells.col(0) << 0, 1, 2, 3, 4, 5, 6, 7;
  hm.cells.col(1) << 4, 5, 6, 7, 8, 9, 10, 11;
  const std::vector<double> sj = {0.123456789012345, -0.5};

  const auto path = temp_path("polydiff_hex_test.vtk");
  write_hexmesh_vtk(hm, path.string(), sj);
  const VtkHexData data = read_hexmesh_vtk(path.string());
  CHECK(data.mesh.vertex_count() == 12);
  CHECK(data.mesh.cell_count() == 2);
  CHECK((data.mesh.vertices - hm.vertices).cwiseAbs().maxCoeff() == 0.0);
  CHECK((data.mesh.cells - hm.cells).cwiseAbs().maxCoeff() == 0);
  REQUIRE(data.cell_scalars.has_value());
  CHECK(data.cell_scalars->size() == 2);
  CHECK((*data.cell_scalars)[0] == sj[0]);
  CHECK((*data.cell_scalars)[1] == sj[1]);

  // Without scalars the field is absent.
  write_hexmesh_vtk(hm, path.string());
  CHECK_FALSE(read_hexmesh_vtk(path.string()).cell_scalars.has_value());
  std::filesystem::remove(path);
}
