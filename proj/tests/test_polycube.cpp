#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include <unistd.h>

#include "polydiff/dataset.hpp"
#include "polydiff/errors.hpp"
#include "polydiff/geometry.hpp"
#include "polydiff/polycube.hpp"
#include "polydiff/rng.hpp"
#include "polydiff/smoothing.hpp"

using namespace polydiff;

namespace {

TriMesh jittered(const TriMesh& mesh, double sigma, std::uint64_t seed) {
  TriMesh out = mesh;
  Rng rng(seed);
  for (int i = 0; i < out.vertices.size(); ++i)
    out.vertices.data()[i] += sigma * rng.normal();
  return out;
}

std::filesystem::path temp_file(const char* tag) {
  return std::filesystem::temp_directory_path() /
         (std::string("polydiff_pc_") + tag + "_" + std::to_string(::getpid()) + ".json");
}

}  // namespace

TEST_CASE("smoothing with zero iterations is the identity") {
  const TriMesh cube = primitive_mesh(PrimitiveKind::Cube);
  const TriMesh same = volume_preserving_smooth(cube, 0);
  CHECK(same.vertices == cube.vertices);
  CHECK(same.faces == cube.faces);
}

TEST_CASE("smoothing preserves volume and never raises the Laplacian energy") {
  const TriMesh noisy = jittered(primitive_mesh(PrimitiveKind::Cube), 0.01, 31);
  const double volume_before = signed_volume(noisy);

  const TriMesh smoothed = volume_preserving_smooth(noisy, 50);
  CHECK(std::abs(signed_volume(smoothed) - volume_before) <=
        0.005 * std::abs(volume_before));

  TriMesh step = noisy;
  double energy = laplacian_energy(step);
  for (int it = 0; it < 50; ++it) {
    step = volume_preserving_smooth(step, 1);
    const double next = laplacian_energy(step);
    CHECK(next <= energy * (1.0 + 1e-12));
    energy = next;
  }
}

TEST_CASE("smoothing rejects bad arguments and degenerate volumes") {
  const TriMesh cube = primitive_mesh(PrimitiveKind::Cube);
  CHECK_THROWS_AS(volume_preserving_smooth(cube, -1), ConfigError);
  CHECK_THROWS_AS(volume_preserving_smooth(cube, 1, 0.0), ConfigError);
  CHECK_THROWS_AS(volume_preserving_smooth(cube, 1, 1.5), ConfigError);

  TriMesh flat;  // open unit square: zero enclosed volume
  flat.vertices.resize(3, 4);
  flat.vertices << 0, 1, 1, 0, 0, 0, 1, 1, 0, 0, 0, 0;
  flat.faces.resize(3, 2);
  flat.faces << 0, 0, 1, 2, 2, 3;
  CHECK_THROWS_AS(volume_preserving_smooth(flat, 1), StageError);
}

TEST_CASE("an exact cube snaps to one cuboid with identity projection") {
  const TriMesh cube = primitive_mesh(PrimitiveKind::Cube);
  const SnapResult snap = snap_to_polycube(cube.vertices, cube.faces);
  const PolycubeComplex& pc = snap.complex;

  REQUIRE(pc.cuboids.size() == 1);
  CHECK(pc.cuboids[0].lo == Eigen::Vector3i(0, 0, 0));
  CHECK(pc.cuboids[0].hi == Eigen::Vector3i(1, 1, 1));
  CHECK(pc.h == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pc.origin.cwiseAbs().maxCoeff() < 1e-12);
  REQUIRE(pc.facets.size() == 6);
  CHECK(pc.unit_cell_count() == 1);

  // One facet per direction, levels on the two lattice planes.
  std::set<std::pair<int, int>> dirs;
  for (const PolycubeFacet& f : pc.facets) {
    dirs.insert({f.axis, f.dir});
    CHECK(f.level == (f.dir > 0 ? 1 : 0));
    CHECK(f.s_extent() == 1);
    CHECK(f.t_extent() == 1);
  }
  CHECK(dirs.size() == 6);

  // Each cube edge joins exactly two facets.
  CHECK(pc.facet_adjacency.size() == 12);

  // Every input vertex already lies on its facet.
  const Mat3X projected = project_to_assigned_facets(pc, snap.assignment);
  CHECK((projected - cube.vertices).cwiseAbs().maxCoeff() < 1e-12);

  const PolycubeReport report = validate_polycube(pc, 0);
  CHECK(report.valid());
  CHECK(report.genus == 0);
}

TEST_CASE("snapping is idempotent on the snapped boundary") {
  const TriMesh noisy = jittered(primitive_mesh(PrimitiveKind::Cube), 0.01, 7);
  const SnapResult first = snap_to_polycube(noisy.vertices, noisy.faces);
  REQUIRE(first.complex.cuboids.size() == 1);
  CHECK(first.complex.h == doctest::Approx(1.0).epsilon(0.02));
  CHECK(first.complex.origin.cwiseAbs().maxCoeff() < 0.02);
  CHECK(first.complex.facets.size() == 6);

  const TriMesh boundary = polycube_boundary_mesh(first.complex, 3);
  const SnapResult second = snap_to_polycube(boundary.vertices, boundary.faces);
  CHECK(second.complex.h == doctest::Approx(first.complex.h).epsilon(1e-12));
  CHECK((second.complex.origin - first.complex.origin).cwiseAbs().maxCoeff() < 1e-12);
  REQUIRE(second.complex.cuboids.size() == first.complex.cuboids.size());
  for (std::size_t i = 0; i < first.complex.cuboids.size(); ++i) {
    CHECK(second.complex.cuboids[i].lo == first.complex.cuboids[i].lo);
    CHECK(second.complex.cuboids[i].hi == first.complex.cuboids[i].hi);
  }
  CHECK(second.complex.facets.size() == first.complex.facets.size());
}

TEST_CASE("a noisy two-cube stack keeps its interface plane") {
  const TriMesh stack = jittered(configuration_mesh(8), 0.01, 15);
  const SnapResult snap = snap_to_polycube(stack.vertices, stack.faces);
  const PolycubeComplex& pc = snap.complex;

  REQUIRE(pc.cuboids.size() == 2);
  CHECK(pc.cuboids[0].lo == Eigen::Vector3i(0, 0, 0));
  CHECK(pc.cuboids[0].hi == Eigen::Vector3i(1, 1, 1));
  CHECK(pc.cuboids[1].lo == Eigen::Vector3i(1, 0, 0));
  CHECK(pc.cuboids[1].hi == Eigen::Vector3i(2, 1, 1));
  CHECK(pc.h == doctest::Approx(1.0).epsilon(0.03));

  // 6 + 6 faces minus the two coincident interface faces.
  CHECK(pc.facets.size() == 10);

  const PolycubeReport report = validate_polycube(pc, 0);
  CHECK(report.valid());
  CHECK(report.genus == 0);
}

TEST_CASE("a holed cube snaps to the ring of eight cuboids at h = 1/3") {
  const TriMesh holed = primitive_mesh(PrimitiveKind::CubeHoleZ);
  const SnapResult snap = snap_to_polycube(holed.vertices, holed.faces);
  const PolycubeComplex& pc = snap.complex;

  CHECK(pc.h == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  REQUIRE(pc.cuboids.size() == 8);
  CHECK(pc.unit_cell_count() == 24);  // 3x3x3 cells minus the center column
  for (const Cuboid& c : pc.cuboids) {
    CHECK(c.hi.x() - c.lo.x() == 1);
    CHECK(c.hi.y() - c.lo.y() == 1);
    CHECK(c.hi.z() - c.lo.z() == 3);
    CHECK_FALSE((c.lo.x() == 1 && c.lo.y() == 1));
  }
  CHECK(pc.facets.size() == 32);

  const PolycubeReport report = validate_polycube(pc, 1);
  CHECK(report.valid());
  CHECK(report.genus == 1);

  // Genus preservation: complex boundary matches the input surface.
  CHECK(mesh_genus(polycube_boundary_mesh(pc)) == mesh_genus(holed));
}

TEST_CASE("snap rejects degenerate inputs") {
  const TriMesh cube = primitive_mesh(PrimitiveKind::Cube);
  CHECK_THROWS_AS(snap_to_polycube(cube.vertices.leftCols(3), cube.faces), StageError);

  FaceMat bad = cube.faces;
  bad(0, 0) = 999;
  CHECK_THROWS_AS(snap_to_polycube(cube.vertices, bad), StageError);

  SnapOptions opts;
  opts.cluster_tol = -1.0;
  CHECK_THROWS_AS(snap_to_polycube(cube.vertices, cube.faces, opts), ConfigError);

  // A flat open square has zero-normal classification nowhere but only one
  // plane along two axes.
  TriMesh flat;
  flat.vertices.resize(3, 4);
  flat.vertices << 0, 1, 1, 0, 0, 0, 1, 1, 0, 0, 0, 0;
  flat.faces.resize(3, 2);
  flat.faces << 0, 0, 1, 2, 2, 3;
  CHECK_THROWS_AS(snap_to_polycube(flat.vertices, flat.faces), StageError);
}

TEST_CASE("validation reports overlaps, bad voxel topology, and genus mismatches") {
  PolycubeComplex overlapping;
  overlapping.h = 1.0;
  overlapping.cuboids.push_back({{0, 0, 0}, {2, 1, 1}});
  overlapping.cuboids.push_back({{1, 0, 0}, {3, 1, 1}});
  const PolycubeReport overlap_report = validate_polycube(overlapping);
  REQUIRE_FALSE(overlap_report.valid());
  bool mentions_overlap = false;
  for (const auto& v : overlap_report.violations)
    mentions_overlap |= v.find("interior overlap") != std::string::npos;
  CHECK(mentions_overlap);

  PolycubeComplex edge_touch;
  edge_touch.h = 1.0;
  edge_touch.cuboids.push_back({{0, 0, 0}, {1, 1, 1}});
  edge_touch.cuboids.push_back({{1, 1, 0}, {2, 2, 1}});
  const PolycubeReport touch_report = validate_polycube(edge_touch);
  REQUIRE_FALSE(touch_report.valid());
  bool mentions_manifold = false;
  for (const auto& v : touch_report.violations)
    mentions_manifold |= v.find("non-manifold") != std::string::npos;
  CHECK(mentions_manifold);

  PolycubeComplex cube;
  cube.h = 0.5;
  cube.cuboids.push_back({{0, 0, 0}, {1, 1, 1}});
  const PolycubeReport genus_report = validate_polycube(cube, 1);
  REQUIRE_FALSE(genus_report.valid());
  CHECK(genus_report.genus == 0);
  bool mentions_genus = false;
  for (const auto& v : genus_report.violations)
    mentions_genus |= v.find("genus mismatch") != std::string::npos;
  CHECK(mentions_genus);

  const PolycubeReport ok = validate_polycube(cube, 0);
  CHECK(ok.valid());
}

TEST_CASE("polycube JSON round trip rebuilds facets") {
  const TriMesh holed = primitive_mesh(PrimitiveKind::CubeHoleZ);
  const PolycubeComplex pc = snap_to_polycube(holed.vertices, holed.faces).complex;

  const auto path = temp_file("roundtrip");
  save_polycube(path.string(), pc);
  const PolycubeComplex loaded = load_polycube(path.string());
  CHECK(loaded.h == pc.h);
  CHECK(loaded.origin == pc.origin);
  REQUIRE(loaded.cuboids.size() == pc.cuboids.size());
  for (std::size_t i = 0; i < pc.cuboids.size(); ++i) {
    CHECK(loaded.cuboids[i].lo == pc.cuboids[i].lo);
    CHECK(loaded.cuboids[i].hi == pc.cuboids[i].hi);
  }
  CHECK(loaded.facets.size() == pc.facets.size());
  CHECK(loaded.facet_adjacency == pc.facet_adjacency);
  std::filesystem::remove(path);

  CHECK_THROWS_WITH_AS(load_polycube((path.parent_path() / "absent.json").string()),
                       doctest::Contains("missing input"), StageError);

  const auto garbage = temp_file("garbage");
  {
    std::ofstream out(garbage, std::ios::binary);
    out << "definitely not json {";
  }
  CHECK_THROWS_WITH_AS(load_polycube(garbage.string()),
                       doctest::Contains("not a polycube"), StageError);
  std::filesystem::remove(garbage);

  const auto overlap_path = temp_file("overlap");
  {
    std::ofstream out(overlap_path, std::ios::binary);
    out << R"({"h": 1.0, "origin": [0, 0, 0], "cuboids": [)"
        << R"({"lo": [0, 0, 0], "hi": [2, 1, 1]}, {"lo": [1, 0, 0], "hi": [3, 1, 1]}]})";
  }
  CHECK_THROWS_WITH_AS(load_polycube(overlap_path.string()),
                       doctest::Contains("interior overlap"), StageError);
  std::filesystem::remove(overlap_path);
}

TEST_CASE("nearest facet resolves by distance to the facet rectangle") {
  const TriMesh cube = primitive_mesh(PrimitiveKind::Cube);
  const PolycubeComplex pc = snap_to_polycube(cube.vertices, cube.faces).complex;

  const int above = nearest_facet(pc, Vec3(0.5, 0.5, 1.4));
  CHECK(pc.facets[static_cast<std::size_t>(above)].axis == 2);
  CHECK(pc.facets[static_cast<std::size_t>(above)].dir == 1);
  CHECK(facet_distance(pc, above, Vec3(0.5, 0.5, 1.4)) == doctest::Approx(0.4).epsilon(1e-9));

  const int left = nearest_facet(pc, Vec3(-0.3, 0.5, 0.5));
  CHECK(pc.facets[static_cast<std::size_t>(left)].axis == 0);
  CHECK(pc.facets[static_cast<std::size_t>(left)].dir == -1);
}
