#include <doctest.h>

#include <cmath>
#include <set>

#include <polydiff/dataset.hpp>
#include <polydiff/errors.hpp>
#include <polydiff/harmonic.hpp>
#include <polydiff/hexmesh.hpp>
#include <polydiff/polycube.hpp>
#include <polydiff/quality.hpp>
#include <polydiff/rng.hpp>
#include <polydiff/segmentation.hpp>

using namespace polydiff;

namespace {

PolycubeComplex box_complex(const Eigen::Vector3i& lo, const Eigen::Vector3i& hi) {
  PolycubeComplex pc;
  pc.cuboids.push_back({lo, hi});
  rebuild_facets(pc);
  return pc;
}

PolycubeComplex unit_cube_complex() {
  return box_complex({0, 0, 0}, {1, 1, 1});
}

PolycubeComplex stacked_complex() {
  PolycubeComplex pc;
  pc.cuboids.push_back({{0, 0, 0}, {1, 1, 1}});
  pc.cuboids.push_back({{1, 0, 0}, {2, 1, 1}});
  rebuild_facets(pc);
  return pc;
}

// 3x3 grid of 1x1x3 columns with the centre column missing, h = 1/3.
PolycubeComplex holed_complex() {
  PolycubeComplex pc;
  pc.h = 1.0 / 3.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      if (i == 1 && j == 1) continue;
      pc.cuboids.push_back({{i, j, 0}, {i + 1, j + 1, 3}});
    }
  rebuild_facets(pc);
  return pc;
}

// Assignment by nearest facet, mirroring how snapping assigns vertices.
VertexFacetAssignment assign_by_nearest(const PolycubeComplex& pc, const Mat3X& points) {
  VertexFacetAssignment a;
  a.facet.resize(points.cols());
  a.uv.resize(2, points.cols());
  for (int v = 0; v < points.cols(); ++v) {
    const int f = nearest_facet(pc, points.col(v));
    a.facet[v] = f;
    const PolycubeFacet& facet = pc.facets[f];
    Eigen::Vector2d uv = facet.local_uv(pc.model_to_lattice(points.col(v)));
    uv.x() = std::clamp(uv.x(), 0.0, static_cast<double>(facet.s_extent()));
    uv.y() = std::clamp(uv.y(), 0.0, static_cast<double>(facet.t_extent()));
    a.uv.col(v) = uv;
  }
  return a;
}

// Closed uv-sphere with ring/segment grid plus two pole fans.
TriMesh uv_sphere(const Vec3& center, double radius, int rings, int segments) {
  TriMesh m;
  const int body = (rings - 1) * segments;
  m.vertices.resize(3, body + 2);
  int id = 0;
  for (int r = 1; r < rings; ++r)
    for (int s = 0; s < segments; ++s) {
      const double theta = M_PI * r / rings;
      const double phi = 2.0 * M_PI * s / segments;
      m.vertices.col(id++) =
          center + radius * Vec3(std::sin(theta) * std::cos(phi),
                                 std::sin(theta) * std::sin(phi), std::cos(theta));
    }
  const int north = id;
  m.vertices.col(id++) = center + radius * Vec3(0, 0, 1);
  const int south = id;
  m.vertices.col(id++) = center + radius * Vec3(0, 0, -1);

  std::vector<std::array<int, 3>> tris;
  auto at = [&](int r, int s) { return (r - 1) * segments + (s % segments); };
  for (int s = 0; s < segments; ++s) tris.push_back({north, at(1, s), at(1, s + 1)});
  for (int r = 1; r + 1 < rings; ++r)
    for (int s = 0; s < segments; ++s) {
      tris.push_back({at(r, s), at(r + 1, s), at(r + 1, s + 1)});
      tris.push_back({at(r, s), at(r + 1, s + 1), at(r, s + 1)});
    }
  for (int s = 0; s < segments; ++s)
    tris.push_back({south, at(rings - 1, s + 1), at(rings - 1, s)});
  m.faces.resize(3, tris.size());
  for (std::size_t t = 0; t < tris.size(); ++t)
    m.faces.col(t) = Eigen::Vector3i(tris[t][0], tris[t][1], tris[t][2]);
  return m;
}

}  // namespace

TEST_CASE("hex lattice counts match the closed forms") {
  const PolycubeComplex cube = unit_cube_complex();
  for (int d = 0; d <= 5; ++d) {
    CAPTURE(d);
    const HexMesh lat = generate_hex_lattice(cube, d);
    const long n = 1L << d;
    CHECK(lat.cell_count() == n * n * n);
    CHECK(lat.vertex_count() == (n + 1) * (n + 1) * (n + 1));
  }
  const HexMesh big = generate_hex_lattice(cube, 5);
  CHECK(big.cell_count() == 32768);
  CHECK(big.vertex_count() == 35937);

  const PolycubeComplex stack = stacked_complex();
  for (int d = 0; d <= 3; ++d) {
    CAPTURE(d);
    const HexMesh lat = generate_hex_lattice(stack, d);
    const long n = 1L << d;
    CHECK(lat.cell_count() == 2 * n * n * n);
    CHECK(lat.vertex_count() == (n + 1) * (n + 1) * (2 * n + 1));
  }

  const PolycubeComplex holed = holed_complex();
  CHECK(holed.unit_cell_count() == 24);
  for (int d = 0; d <= 2; ++d) {
    CAPTURE(d);
    const HexMesh lat = generate_hex_lattice(holed, d);
    const long n = 1L << d;
    CHECK(lat.cell_count() == 24 * n * n * n);
    // Grid nodes of a 3x3x3-cell box minus the nodes strictly inside the
    // hole column's cross-section, which exist at no z level.
    CHECK(lat.vertex_count() == (3 * n + 1) * (3 * n + 1) * (3 * n + 1) -
                                    (n - 1) * (n - 1) * (3 * n + 1));
  }

  CHECK_THROWS_AS(generate_hex_lattice(cube, -1), ConfigError);
  CHECK_THROWS_AS(generate_hex_lattice(cube, 11), ConfigError);
}

TEST_CASE("hex lattice is conforming and positively oriented") {
  const HexMesh lat = generate_hex_lattice(stacked_complex(), 2);
  const QualityReport q = scaled_jacobian(lat);
  CHECK(q.min_scaled_jacobian == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(q.inverted_count == 0);
  CHECK(q.degenerate_count == 0);

  // Deduplication: all vertex positions distinct.
  std::set<std::array<long, 3>> seen;
  for (int v = 0; v < lat.vertex_count(); ++v) {
    const std::array<long, 3> key = {std::lround(lat.vertices(0, v) * 1e9),
                                     std::lround(lat.vertices(1, v) * 1e9),
                                     std::lround(lat.vertices(2, v) * 1e9)};
    CHECK(seen.insert(key).second);
  }

  // A stacked pair at depth d exposes 10 * 4^d boundary quads.
  CHECK(boundary_quads(lat).size() == 10 * 16);
  CHECK(boundary_quads(generate_hex_lattice(unit_cube_complex(), 3)).size() == 6 * 64);
}

TEST_CASE("scaled jacobian matches a direct determinant oracle") {
  HexMesh one;
  one.vertices.resize(3, 8);
  const double corner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                               {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
  for (int k = 0; k < 8; ++k) one.vertices.col(k) = Vec3(corner[k][0], corner[k][1], corner[k][2]);
  one.cells.resize(8, 1);
  for (int k = 0; k < 8; ++k) one.cells(k, 0) = k;

  QualityReport q = scaled_jacobian(one);
  CHECK(q.min_scaled_jacobian == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(q.histogram[39] == 1);
  CHECK(q.inverted_count == 0);

  // Shear the top face by (0.5, 0, 0) and compare against determinants
  // computed from scratch.
  HexMesh sheared = one;
  for (int k = 4; k < 8; ++k) sheared.vertices(0, k) += 0.5;
  const int edges[8][3] = {{1, 3, 4}, {2, 0, 5}, {3, 1, 6}, {0, 2, 7},
                           {7, 5, 0}, {4, 6, 1}, {5, 7, 2}, {6, 4, 3}};
  double expect = 1.0;
  for (int c = 0; c < 8; ++c) {
    Eigen::Matrix3d m;
    for (int e = 0; e < 3; ++e)
      m.col(e) = (sheared.vertices.col(edges[c][e]) - sheared.vertices.col(c)).normalized();
    expect = std::min(expect, m.determinant());
  }
  q = scaled_jacobian(sheared);
  CHECK(q.per_hex_min[0] == doctest::Approx(expect).epsilon(1e-14));
  CHECK(expect < 1.0);
  CHECK(expect > 0.0);

  // Swapping two top corners inverts the element.
  HexMesh inverted = one;
  inverted.cells(6, 0) = 7;
  inverted.cells(7, 0) = 6;
  q = scaled_jacobian(inverted);
  CHECK(q.min_scaled_jacobian < 0.0);
  CHECK(q.inverted_count == 1);

  // A collapsed edge flags the hex degenerate and scores the corner zero.
  HexMesh degen = one;
  degen.vertices.col(1) = degen.vertices.col(0);
  q = scaled_jacobian(degen);
  CHECK(q.degenerate_count == 1);
  CHECK(q.min_scaled_jacobian <= 0.0);

  // Histogram counts always sum to the cell count.
  const HexMesh lat = generate_hex_lattice(holed_complex(), 1);
  q = scaled_jacobian(lat);
  long total = 0;
  for (const int c : q.histogram) total += c;
  CHECK(total == lat.cell_count());
  CHECK(q.per_hex_min.size() == static_cast<std::size_t>(lat.cell_count()));
}

TEST_CASE("pillowing inserts exactly one layer") {
  const HexMesh one = generate_hex_lattice(unit_cube_complex(), 0);
  const HexMesh pillowed = pillow_boundary(one);
  CHECK(pillowed.cell_count() == 7);
  CHECK(pillowed.vertex_count() == 16);
  const QualityReport q = scaled_jacobian(pillowed);
  CHECK(q.min_scaled_jacobian > 0.0);
  CHECK(q.inverted_count == 0);

  // Original boundary vertices keep their ids and positions.
  for (int v = 0; v < 8; ++v)
    CHECK((pillowed.vertices.col(v) - one.vertices.col(v)).norm() == 0.0);

  const HexMesh grid = generate_hex_lattice(unit_cube_complex(), 2);
  const auto quads = boundary_quads(grid);
  const HexMesh pg = pillow_boundary(grid);
  CHECK(pg.cell_count() == grid.cell_count() + static_cast<int>(quads.size()));
  CHECK(scaled_jacobian(pg).min_scaled_jacobian > 0.0);
  // Every boundary vertex was duplicated once.
  std::set<int> bverts;
  for (const auto& qd : quads) bverts.insert(qd.begin(), qd.end());
  CHECK(pg.vertex_count() == grid.vertex_count() + static_cast<int>(bverts.size()));

  CHECK_THROWS_AS(pillow_boundary(one, 0.0), ConfigError);
  CHECK_THROWS_AS(pillow_boundary(one, 1.0), ConfigError);
}

TEST_CASE("cube surface segments into six disk patches") {
  const PolycubeComplex pc = unit_cube_complex();
  const TriMesh mesh = polycube_boundary_mesh(pc, 4);
  const SnapResult snap = snap_to_polycube(mesh.vertices, mesh.faces, 0.04);
  const SegmentationLabels labels = segment_surface(mesh, snap.assignment, snap.complex);

  CHECK(labels.patches.size() == 6);
  for (const SurfacePatch& patch : labels.patches) {
    CHECK(!patch.triangles.empty());
    CHECK(patch.loop.size() >= 4);
    CHECK(patch.corner_pos[0] == 0);
    CHECK(patch.corner_pos[1] > 0);
    CHECK(patch.corner_pos[2] > patch.corner_pos[1]);
    CHECK(patch.corner_pos[3] > patch.corner_pos[2]);
    CHECK(patch.width == 1);
    CHECK(patch.height == 1);
  }
  // Labels cover all triangles and every label is used.
  std::set<int> used(labels.tri_label.begin(), labels.tri_label.end());
  CHECK(used.size() == 6);
}

TEST_CASE("sphere against a cube polycube segments into six disks") {
  const PolycubeComplex pc = unit_cube_complex();
  const TriMesh sphere = uv_sphere(Vec3(0.5, 0.5, 0.5), 0.5, 12, 16);
  const VertexFacetAssignment assignment = assign_by_nearest(pc, sphere.vertices);
  const SegmentationLabels labels = segment_surface(sphere, assignment, pc);
  CHECK(labels.patches.size() == 6);
  for (const SurfacePatch& patch : labels.patches) {
    CHECK(!patch.triangles.empty());
    CHECK(patch.loop.size() >= 4);
  }

  // Parameterizations of the curved patches stay inside the open rectangle
  // and satisfy the residual bound.
  for (int f = 0; f < 6; ++f) {
    const PatchParam param = harmonic_parameterize(sphere, labels, f);
    CHECK(param.residual < 1e-10);
    const std::set<int> boundary(labels.patches[f].loop.begin(),
                                 labels.patches[f].loop.end());
    for (const int v : param.vertices) {
      if (boundary.count(v)) continue;
      CHECK(param.uv(0, v) > 0.0);
      CHECK(param.uv(0, v) < param.width);
      CHECK(param.uv(1, v) > 0.0);
      CHECK(param.uv(1, v) < param.height);
    }
  }
}

TEST_CASE("flat patches parameterize to the scaled identity") {
  const PolycubeComplex pc = unit_cube_complex();
  const TriMesh mesh = polycube_boundary_mesh(pc, 5);
  const SnapResult snap = snap_to_polycube(mesh.vertices, mesh.faces, 0.04);
  const SegmentationLabels labels = segment_surface(mesh, snap.assignment, snap.complex);

  for (int f = 0; f < 6; ++f) {
    CAPTURE(f);
    const PatchParam param = harmonic_parameterize(mesh, labels, f);
    CHECK(param.residual < 1e-10);
    CHECK_FALSE(param.mean_value_fallback);
    const PolycubeFacet& facet = snap.complex.facets[f];
    for (const int v : param.vertices) {
      const Eigen::Vector2d expect =
          facet.local_uv(snap.complex.model_to_lattice(mesh.vertices.col(v)));
      CHECK((param.uv.col(v) - expect).norm() < 1e-9);
    }
    // Boundary vertices sit exactly on the rectangle boundary.
    for (const int v : labels.patches[f].loop) {
      const Eigen::Vector2d uv = param.uv.col(v);
      const bool on_edge = uv.x() == 0.0 || uv.y() == 0.0 ||
                           uv.x() == doctest::Approx(param.width).epsilon(1e-12) ||
                           uv.y() == doctest::Approx(param.height).epsilon(1e-12);
      CHECK(on_edge);
    }
  }
}

TEST_CASE("physical mapping is the identity on polycube boundary input") {
  for (const bool stacked : {false, true}) {
    CAPTURE(stacked);
    const PolycubeComplex pc = stacked ? stacked_complex() : unit_cube_complex();
    const TriMesh mesh = polycube_boundary_mesh(pc, 4);
    const SnapResult snap = snap_to_polycube(mesh.vertices, mesh.faces, 0.04);
    const SegmentationLabels labels = segment_surface(mesh, snap.assignment, snap.complex);
    std::vector<PatchParam> params;
    for (std::size_t f = 0; f < snap.complex.facets.size(); ++f)
      params.push_back(harmonic_parameterize(mesh, labels, static_cast<int>(f)));

    const HexMesh lattice = generate_hex_lattice(snap.complex, 2);
    const HexMesh mapped = map_to_physical(lattice, params, mesh, snap.complex);
    CHECK(mapped.vertex_count() == lattice.vertex_count());
    CHECK(mapped.cell_count() == lattice.cell_count());
    double worst = 0.0;
    for (int v = 0; v < mapped.vertex_count(); ++v)
      worst = std::max(worst, (mapped.vertices.col(v) - lattice.vertices.col(v)).norm());
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("physical mapping puts boundary nodes on a curved surface") {
  const PolycubeComplex pc = unit_cube_complex();
  const TriMesh sphere = uv_sphere(Vec3(0.5, 0.5, 0.5), 0.5, 14, 20);
  const VertexFacetAssignment assignment = assign_by_nearest(pc, sphere.vertices);
  const SegmentationLabels labels = segment_surface(sphere, assignment, pc);
  std::vector<PatchParam> params;
  for (int f = 0; f < 6; ++f) params.push_back(harmonic_parameterize(sphere, labels, f));

  const HexMesh lattice = generate_hex_lattice(pc, 3);
  const HexMesh mapped = map_to_physical(lattice, params, sphere, pc);
  const double diag = bbox_diagonal(sphere.vertices);

  // Boundary lattice nodes must land on the sphere triangulation.
  const auto quads = boundary_quads(lattice);
  std::set<int> bverts;
  for (const auto& q : quads) bverts.insert(q.begin(), q.end());
  double worst = 0.0;
  for (const int v : bverts)
    worst = std::max(worst, closest_point_on_surface(sphere, mapped.vertices.col(v)).distance);
  CHECK(worst < 1e-6 * diag);

  // Interior nodes stay strictly inside the closed surface.
  int inside = 0, interior_total = 0;
  for (int v = 0; v < mapped.vertex_count(); ++v) {
    if (bverts.count(v)) continue;
    ++interior_total;
    inside += point_inside_mesh(sphere, mapped.vertices.col(v)) ? 1 : 0;
  }
  CHECK(interior_total > 0);
  CHECK(inside == interior_total);
}

TEST_CASE("quality improvement leaves a perfect grid alone") {
  const PolycubeComplex pc = unit_cube_complex();
  const HexMesh grid = generate_hex_lattice(pc, 3);
  const TriMesh surface = polycube_boundary_mesh(pc, 2);
  const auto [out, report] = improve_quality(grid, surface);
  CHECK(report.min_scaled_jacobian == doctest::Approx(1.0).epsilon(1e-9));
  double moved = 0.0;
  for (int v = 0; v < grid.vertex_count(); ++v)
    moved = std::max(moved, (out.vertices.col(v) - grid.vertices.col(v)).norm());
  CHECK(moved < 1e-9);
}

TEST_CASE("quality improvement raises the minimum on a jittered grid") {
  const PolycubeComplex pc = unit_cube_complex();
  HexMesh grid = generate_hex_lattice(pc, 3);
  const TriMesh surface = polycube_boundary_mesh(pc, 2);

  // Jitter interior vertices by 20% of the edge length.
  const auto quads = boundary_quads(grid);
  std::vector<char> boundary(grid.vertex_count(), 0);
  for (const auto& q : quads)
    for (const int v : q) boundary[v] = 1;
  Rng rng(2024);
  const double edge = 1.0 / 8.0;
  for (int v = 0; v < grid.vertex_count(); ++v) {
    if (boundary[v]) continue;
    grid.vertices.col(v) += 0.2 * edge * rng.normal3().normalized() * rng.uniform();
  }

  const double before = scaled_jacobian(grid).min_scaled_jacobian;
  CHECK(before < 0.95);
  const auto [out, report] = improve_quality(grid, surface);
  CHECK(report.min_scaled_jacobian > before);
  CHECK(report.inverted_count == 0);

  // Boundary vertices stay within the fit-weight-controlled band.
  double worst = 0.0;
  for (int v = 0; v < out.vertex_count(); ++v)
    if (boundary[v])
      worst = std::max(worst, closest_point_on_surface(surface, out.vertices.col(v)).distance);
  CHECK(worst <= 1e-3 * bbox_diagonal(surface.vertices));

  long total = 0;
  for (const int c : report.histogram) total += c;
  CHECK(total == out.cell_count());
}
