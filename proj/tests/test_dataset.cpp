#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <unistd.h>

#include "polydiff/dataset.hpp"
#include "polydiff/diffusion.hpp"
#include "polydiff/errors.hpp"
#include "polydiff/frame.hpp"
#include "polydiff/geometry.hpp"

using namespace polydiff;

namespace {

std::filesystem::path temp_dir(const char* tag) {
  auto dir = std::filesystem::temp_directory_path() /
             (std::string("polydiff_ds_") + tag + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("primitive meshes are watertight with the expected measures") {
  const TriMesh cube = primitive_mesh(PrimitiveKind::Cube);
  CHECK(is_closed_manifold(cube));
  CHECK(mesh_genus(cube) == 0);
  CHECK(signed_volume(cube) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(surface_area(cube) == doctest::Approx(6.0).epsilon(1e-12));
  const auto box = bounding_box(cube.vertices);
  CHECK(box.min().isApprox(Vec3::Zero(), 1e-15));
  CHECK(box.max().isApprox(Vec3::Ones(), 1e-15));

  for (const PrimitiveKind kind :
       {PrimitiveKind::CubeHoleZ, PrimitiveKind::CubeHoleX, PrimitiveKind::CubeHoleY}) {
    const TriMesh holed = primitive_mesh(kind);
    CAPTURE(static_cast<int>(kind));
    CHECK(is_closed_manifold(holed));
    CHECK(mesh_genus(holed) == 1);
    CHECK(signed_volume(holed) == doctest::Approx(8.0 / 9.0).epsilon(1e-12));
    CHECK(surface_area(holed) == doctest::Approx(64.0 / 9.0).epsilon(1e-12));
    // The channel removes the center, so the centroid is hollow for every kind.
    CHECK_FALSE(point_inside_mesh(holed, Vec3(0.5, 0.5, 0.5)));
    CHECK(point_inside_mesh(holed, Vec3(1.0 / 6, 1.0 / 6, 0.5)));
  }

  // Channel direction: the point near the face center is hollow only along
  // the channel axis.
  CHECK_FALSE(point_inside_mesh(primitive_mesh(PrimitiveKind::CubeHoleZ), Vec3(0.5, 0.5, 0.97)));
  CHECK(point_inside_mesh(primitive_mesh(PrimitiveKind::CubeHoleZ), Vec3(0.97, 0.5, 0.5)));
  CHECK_FALSE(point_inside_mesh(primitive_mesh(PrimitiveKind::CubeHoleX), Vec3(0.97, 0.5, 0.5)));
  CHECK_FALSE(point_inside_mesh(primitive_mesh(PrimitiveKind::CubeHoleY), Vec3(0.5, 0.97, 0.5)));
}

TEST_CASE("configuration types decode into kind/unit parts") {
  for (int type = 0; type < 8; ++type) {
    const auto parts = configuration_units(type);
    REQUIRE(parts.size() == 1);
    CHECK(static_cast<int>(parts[0].first) == type / 2);
    CHECK(parts[0].second == type % 2);
  }
  const auto stacked = configuration_units(8);
  REQUIRE(stacked.size() == 2);
  CHECK(stacked[0] == std::pair{PrimitiveKind::Cube, 0});
  CHECK(stacked[1] == std::pair{PrimitiveKind::Cube, 1});
  CHECK_THROWS_AS(configuration_units(-1), ConfigError);
  CHECK_THROWS_AS(configuration_units(9), ConfigError);
}

TEST_CASE("configuration meshes keep per-unit closed components") {
  const TriMesh single = configuration_mesh(0);
  CHECK(mesh_genus(single) == 0);

  const TriMesh stacked = configuration_mesh(8);
  const auto genera = per_component_genus(stacked);
  REQUIRE(genera.size() == 2);
  CHECK(genera[0] == 0);
  CHECK(genera[1] == 0);
  const auto box = bounding_box(stacked.vertices);
  CHECK(box.min().x() == doctest::Approx(0.0));
  CHECK(box.max().x() == doctest::Approx(2.0));

  const TriMesh torus_like = configuration_mesh(3);  // z-hole cube in unit 1
  CHECK(mesh_genus(torus_like) == 1);
  CHECK(bounding_box(torus_like.vertices).min().x() == doctest::Approx(1.0));
}

TEST_CASE("surface sampling is deterministic, on-surface, and well spread") {
  const TriMesh cube = primitive_mesh(PrimitiveKind::Cube);
  Rng rng_a(77);
  Rng rng_b(77);
  const Mat3X a = sample_surface_points(cube, 256, 4096, rng_a);
  const Mat3X b = sample_surface_points(cube, 256, 4096, rng_b);
  REQUIRE(a.cols() == 256);
  CHECK(a == b);

  Rng rng_c(78);
  const Mat3X c = sample_surface_points(cube, 256, 4096, rng_c);
  CHECK(a != c);

  for (int i = 0; i < a.cols(); ++i)
    CHECK(closest_point_on_surface(cube, a.col(i)).distance < 1e-12);

  // Farthest-point selection covers the surface: every dense probe point has
  // a selected point nearby (spacing bound for 256 points on area 6).
  Rng probe_rng(5150);
  const Mat3X probes = sample_surface_points(cube, 2000, 2000, probe_rng);
  CHECK(hausdorff_one_sided(probes, a) < 0.30);
}

TEST_CASE("assembled configurations place units in their cells") {
  const Mat3X single = assemble_configuration(4, 123);  // x-hole cube, unit 0
  REQUIRE(single.cols() == kPointsPerUnit);
  CHECK(single.row(0).minCoeff() >= 0.0);
  CHECK(single.row(0).maxCoeff() <= 1.0);

  const Mat3X stacked = assemble_configuration(8, 123);
  REQUIRE(stacked.cols() == 2 * kPointsPerUnit);
  CHECK(stacked.leftCols(kPointsPerUnit).row(0).maxCoeff() <= 1.0);
  CHECK(stacked.rightCols(kPointsPerUnit).row(0).minCoeff() >= 1.0);
  CHECK(stacked.rightCols(kPointsPerUnit).row(0).maxCoeff() <= 2.0);

  CHECK(assemble_configuration(8, 123) == stacked);
  CHECK(assemble_configuration(8, 124) != stacked);
}

TEST_CASE("random deformations stay within their advertised bounds") {
  for (const std::uint64_t seed : {1ULL, 2ULL, 99ULL}) {
    const RbfDeformation d = random_deformation(seed, 2);
    const int bumps = static_cast<int>(d.widths.size());
    CAPTURE(seed);
    CHECK(bumps >= 3);
    CHECK(bumps <= 8);
    CHECK(d.centers.cols() == bumps);
    CHECK(d.amplitudes.cols() == bumps);
    for (int i = 0; i < bumps; ++i) {
      CHECK(d.amplitudes.col(i).norm() <= 0.15 + 1e-12);
      CHECK(d.amplitudes.col(i).norm() >= 0.03 - 1e-12);
      CHECK(d.widths[i] >= 0.25);
      CHECK(d.widths[i] <= 0.60);
    }
  }

  const RbfDeformation d = random_deformation(7, 1);
  const RbfDeformation d2 = random_deformation(7, 1);
  CHECK(d.centers == d2.centers);

  Rng rng(3);
  Mat3X pts(3, 40);
  for (int i = 0; i < pts.size(); ++i) pts.data()[i] = rng.uniform();
  const Mat3X moved = d.apply(pts);
  for (int i = 0; i < pts.cols(); ++i) {
    CHECK(moved.col(i) == d.apply(Vec3(pts.col(i))));
    CHECK((moved.col(i) - pts.col(i)).norm() < 8 * 0.15 + 1e-12);
  }
}

TEST_CASE("training pairs share slot order and satisfy the drift identity") {
  const DiffusionSchedule s = DiffusionSchedule::linear(100, 1e-4, 0.02);
  for (const int type : {0, 2, 8}) {
    CAPTURE(type);
    const TrainingPairFrames pair = synthesize_training_pair(type, 41, 42);
    const int units = type == 8 ? 2 : 1;
    CHECK(pair.live_count == units * kPointsPerUnit);
    CHECK(pair.type == type);
    CHECK(pair.context == context_vector(type));

    // Frames are float-quantized at build time.
    CHECK(pair.x0 == pair.x0.cast<float>().cast<double>());
    CHECK(pair.x_target == pair.x_target.cast<float>().cast<double>());

    // Padded slots stay zero in both frames.
    for (int slot = pair.live_count; slot < kFrameSlots; ++slot) {
      CHECK(pair.x0.col(slot) == Vec3::Zero());
      CHECK(pair.x_target.col(slot) == Vec3::Zero());
    }

    // The pair drift moves the clean frame exactly onto the target frame.
    const FrameMatrix q = drift_from_pair(pair.x0, pair.x_target, s);
    const FrameMatrix endpoint =
        std::sqrt(s.alpha_bar[s.steps]) * pair.x0 + s.c_total() * q;
    CHECK((endpoint - pair.x_target).cwiseAbs().maxCoeff() < 1e-12);
  }

  CHECK(synthesize_training_pair(0, 41, 42).x_target ==
        synthesize_training_pair(0, 41, 42).x_target);
  CHECK(synthesize_training_pair(0, 41, 43).x_target !=
        synthesize_training_pair(0, 41, 42).x_target);
}

TEST_CASE("stacked-type deformations never reorder points across units") {
  for (const std::uint64_t deform_seed : {1ULL, 5ULL, 11ULL, 27ULL}) {
    CAPTURE(deform_seed);
    const TrainingPairFrames pair = synthesize_training_pair(8, 99, deform_seed);
    const Mat3X deformed = decode_frame(pair.x_target, pair.target_meta);
    const double left_max = deformed.leftCols(kPointsPerUnit).row(0).maxCoeff();
    const double right_min = deformed.rightCols(kPointsPerUnit).row(0).minCoeff();
    CHECK(left_max < right_min);
  }
}

TEST_CASE("dataset build cycles types and derives per-item seeds") {
  DatasetSpec spec;
  spec.types = {0, 2, 8};
  spec.count = 7;
  spec.base_seed = 1234;
  const Dataset ds = build_dataset(spec);
  REQUIRE(ds.infos.size() == 7);
  REQUIRE(ds.clean.size() == 7);
  REQUIRE(ds.target.size() == 7);
  for (int i = 0; i < 7; ++i) {
    CHECK(ds.infos[static_cast<std::size_t>(i)].type == spec.types[static_cast<std::size_t>(i % 3)]);
    CHECK(ds.infos[static_cast<std::size_t>(i)].sample_seed ==
          mix_seed(spec.base_seed, static_cast<std::uint64_t>(2 * i)));
    CHECK(ds.infos[static_cast<std::size_t>(i)].deform_seed ==
          mix_seed(spec.base_seed, static_cast<std::uint64_t>(2 * i + 1)));
  }

  const Dataset again = build_dataset(spec);
  for (std::size_t i = 0; i < 7; ++i) {
    CHECK(ds.clean[i] == again.clean[i]);
    CHECK(ds.target[i] == again.target[i]);
  }

  DatasetSpec bad = spec;
  bad.types = {};
  CHECK_THROWS_AS(build_dataset(bad), ConfigError);
  bad = spec;
  bad.count = 0;
  CHECK_THROWS_AS(build_dataset(bad), ConfigError);
}

TEST_CASE("dataset round trip preserves frames bitwise and recomputes drifts") {
  DatasetSpec spec;
  spec.types = {2, 8};
  spec.count = 4;
  spec.base_seed = 777;
  const Dataset ds = build_dataset(spec);

  const auto dir = temp_dir("roundtrip");
  save_dataset(dir.string(), ds);
  const Dataset loaded = load_dataset(dir.string());
  REQUIRE(loaded.infos.size() == ds.infos.size());
  for (std::size_t i = 0; i < ds.infos.size(); ++i) {
    CHECK(loaded.infos[i].type == ds.infos[i].type);
    CHECK(loaded.infos[i].sample_seed == ds.infos[i].sample_seed);
    CHECK(loaded.infos[i].deform_seed == ds.infos[i].deform_seed);
    CHECK(loaded.infos[i].live_count == ds.infos[i].live_count);
    CHECK(loaded.clean[i] == ds.clean[i]);
    CHECK(loaded.target[i] == ds.target[i]);
  }

  const DiffusionSchedule s = DiffusionSchedule::linear(100, 1e-4, 0.02);
  const auto items_mem = ds.training_items(s);
  const auto items_disk = loaded.training_items(s);
  REQUIRE(items_mem.size() == items_disk.size());
  for (std::size_t i = 0; i < items_mem.size(); ++i) {
    CHECK(items_mem[i].x0 == items_disk[i].x0);
    CHECK(items_mem[i].q == items_disk[i].q);
    CHECK(items_mem[i].live_count == items_disk[i].live_count);
    CHECK(items_mem[i].context == items_disk[i].context);
  }

  CHECK_THROWS_AS(load_dataset((dir / "nope").string()), StageError);
  {
    std::ofstream bad(dir / "manifest.json", std::ios::binary | std::ios::trunc);
    bad << "{\"items\": \"oops\"}";
  }
  CHECK_THROWS_AS(load_dataset(dir.string()), StageError);
  std::filesystem::remove_all(dir);
}
