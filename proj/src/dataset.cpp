#include "polydiff/dataset.hpp"

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>

#include <json.hpp>

#include "polydiff/errors.hpp"

namespace polydiff {

namespace {

constexpr int kVox = 6;  // voxels per cell edge

// The hole removes the center column: voxel indices {2, 3} of 6, a square
// channel of side 1/3.  Six voxels per edge (not three) so every hole wall is
// two cells wide and has interior vertices whose normals are unambiguous.
bool voxel_filled(PrimitiveKind kind, int i, int j, int k) {
  const auto center = [](int a) { return a == kVox / 2 - 1 || a == kVox / 2; };
  switch (kind) {
    case PrimitiveKind::Cube:
      return true;
    case PrimitiveKind::CubeHoleZ:
      return !(center(i) && center(j));
    case PrimitiveKind::CubeHoleX:
      return !(center(j) && center(k));
    case PrimitiveKind::CubeHoleY:
      return !(center(i) && center(k));
  }
  return true;
}

// Cross-axis pairs (u, v) with unit(u) x unit(v) = outward normal.
struct FaceFrame {
  int axis, dir, u, v;
};

constexpr std::array<FaceFrame, 6> kFaces = {{
    {0, +1, 1, 2},  // +x: y cross z
    {0, -1, 2, 1},  // -x: z cross y
    {1, +1, 2, 0},  // +y: z cross x
    {1, -1, 0, 2},  // -y: x cross z
    {2, +1, 0, 1},  // +z: x cross y
    {2, -1, 1, 0},  // -z: y cross x
}};

}  // namespace

TriMesh primitive_mesh(PrimitiveKind kind) {
  std::map<std::array<int, 3>, int> vertex_ids;
  std::vector<std::array<int, 3>> vertex_coords;
  std::vector<Eigen::Vector3i> tris;

  const auto vertex = [&](std::array<int, 3> c) {
    const auto [it, inserted] = vertex_ids.try_emplace(c, static_cast<int>(vertex_coords.size()));
    if (inserted) vertex_coords.push_back(c);
    return it->second;
  };

  const auto filled = [&](int i, int j, int k) {
    if (i < 0 || j < 0 || k < 0 || i >= kVox || j >= kVox || k >= kVox) return false;
    return voxel_filled(kind, i, j, k);
  };

  for (int i = 0; i < kVox; ++i)
    for (int j = 0; j < kVox; ++j)
      for (int k = 0; k < kVox; ++k) {
        if (!filled(i, j, k)) continue;
        const std::array<int, 3> cell = {i, j, k};
        for (const FaceFrame& f : kFaces) {
          std::array<int, 3> n = cell;
          n[f.axis] += f.dir;
          if (filled(n[0], n[1], n[2])) continue;
          // Lattice corner of the face plane.
          std::array<int, 3> base = cell;
          if (f.dir > 0) base[f.axis] += 1;
          std::array<int, 3> pu = base, pv = base, puv = base;
          pu[f.u] += 1;
          puv[f.u] += 1;
          puv[f.v] += 1;
          pv[f.v] += 1;
          const int a = vertex(base), b = vertex(pu), c = vertex(puv), d = vertex(pv);
          tris.emplace_back(a, b, c);
          tris.emplace_back(a, c, d);
        }
      }

  TriMesh mesh;
  mesh.vertices.resize(3, static_cast<int>(vertex_coords.size()));
  for (std::size_t v = 0; v < vertex_coords.size(); ++v)
    mesh.vertices.col(static_cast<int>(v)) =
        Vec3(vertex_coords[v][0], vertex_coords[v][1], vertex_coords[v][2]) / kVox;
  mesh.faces.resize(3, static_cast<int>(tris.size()));
  for (std::size_t t = 0; t < tris.size(); ++t) mesh.faces.col(static_cast<int>(t)) = tris[t];
  return mesh;
}

std::vector<std::pair<PrimitiveKind, int>> configuration_units(int type_id) {
  if (type_id < 0 || type_id >= kConfigTypeCount)
    throw ConfigError("configuration type out of range: " + std::to_string(type_id));
  if (type_id == 8)
    return {{PrimitiveKind::Cube, 0}, {PrimitiveKind::Cube, 1}};
  return {{static_cast<PrimitiveKind>(type_id / 2), type_id % 2}};
}

Mat3X sample_surface_points(const TriMesh& mesh, int count, int candidates, Rng& rng) {
  if (count < 1 || candidates < count) throw ConfigError("bad surface sampling sizes");
  const Mat3X cross = face_cross_products(mesh);
  Eigen::VectorXd cumulative(mesh.face_count());
  double total = 0.0;
  for (int f = 0; f < mesh.face_count(); ++f) {
    total += 0.5 * cross.col(f).norm();
    cumulative[f] = total;
  }
  if (total <= 0.0) throw StageError("mesh has no area to sample");

  Mat3X cand(3, candidates);
  for (int i = 0; i < candidates; ++i) {
    const double pick = rng.uniform() * total;
    const int f = static_cast<int>(
        std::lower_bound(cumulative.data(), cumulative.data() + cumulative.size(), pick) -
        cumulative.data());
    const int fi = std::min(f, mesh.face_count() - 1);
    double r1 = rng.uniform(), r2 = rng.uniform();
    if (r1 + r2 > 1.0) {
      r1 = 1.0 - r1;
      r2 = 1.0 - r2;
    }
    const Vec3 a = mesh.vertices.col(mesh.faces(0, fi));
    const Vec3 b = mesh.vertices.col(mesh.faces(1, fi));
    const Vec3 c = mesh.vertices.col(mesh.faces(2, fi));
    cand.col(i) = a + r1 * (b - a) + r2 * (c - a);
  }

  // Farthest-point selection, seeded on the first candidate.
  Mat3X out(3, count);
  Eigen::VectorXd dist = Eigen::VectorXd::Constant(candidates, 1e30);
  int current = 0;
  for (int s = 0; s < count; ++s) {
    out.col(s) = cand.col(current);
    int next = 0;
    double best = -1.0;
    for (int i = 0; i < candidates; ++i) {
      const double d = (cand.col(i) - cand.col(current)).squaredNorm();
      if (d < dist[i]) dist[i] = d;
      if (dist[i] > best) {
        best = dist[i];
        next = i;
      }
    }
    current = next;
  }
  return out;
}

namespace {

// Drop triangles lying entirely on a local x plane (the wall shared with a
// neighboring unit): hidden geometry that a scan of the assembled shape
// would never see, so the sampled clouds skip it too.
TriMesh without_wall_faces(const TriMesh& mesh, bool left_wall, bool right_wall) {
  std::vector<int> keep;
  for (int f = 0; f < mesh.face_count(); ++f) {
    const double x0 = mesh.vertices(0, mesh.faces(0, f));
    const double x1 = mesh.vertices(0, mesh.faces(1, f));
    const double x2 = mesh.vertices(0, mesh.faces(2, f));
    const bool on_left = std::abs(x0) < 1e-12 && std::abs(x1) < 1e-12 && std::abs(x2) < 1e-12;
    const bool on_right =
        std::abs(x0 - 1) < 1e-12 && std::abs(x1 - 1) < 1e-12 && std::abs(x2 - 1) < 1e-12;
    if ((left_wall && on_left) || (right_wall && on_right)) continue;
    keep.push_back(f);
  }
  TriMesh out;
  out.vertices = mesh.vertices;
  out.faces.resize(3, static_cast<int>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i)
    out.faces.col(static_cast<int>(i)) = mesh.faces.col(keep[i]);
  return out;
}

}  // namespace

Mat3X assemble_configuration(int type_id, std::uint64_t seed) {
  const auto parts = configuration_units(type_id);
  std::array<bool, 2> occupied{false, false};
  for (const auto& [kind, unit] : parts) occupied[static_cast<std::size_t>(unit)] = true;
  Mat3X points(3, static_cast<int>(parts.size()) * kPointsPerUnit);
  int col = 0;
  for (const auto& [kind, unit] : parts) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(unit)));
    const bool left = unit > 0 && occupied[static_cast<std::size_t>(unit - 1)];
    const bool right = unit < 1 && occupied[static_cast<std::size_t>(unit + 1)];
    const TriMesh mesh = without_wall_faces(primitive_mesh(kind), left, right);
    Mat3X pts = sample_surface_points(mesh, kPointsPerUnit, kSampleCandidates, rng);
    pts.row(0).array() += static_cast<double>(unit);
    points.middleCols(col, kPointsPerUnit) = pts;
    col += kPointsPerUnit;
  }
  return points;
}

TriMesh configuration_mesh(int type_id) {
  const auto parts = configuration_units(type_id);
  TriMesh out;
  int vtotal = 0;
  int ftotal = 0;
  std::vector<TriMesh> meshes;
  for (const auto& [kind, unit] : parts) {
    TriMesh mesh = primitive_mesh(kind);
    mesh.vertices.row(0).array() += static_cast<double>(unit);
    vtotal += mesh.vertex_count();
    ftotal += mesh.face_count();
    meshes.push_back(std::move(mesh));
  }
  out.vertices.resize(3, vtotal);
  out.faces.resize(3, ftotal);
  int vbase = 0;
  int fbase = 0;
  for (const TriMesh& mesh : meshes) {
    out.vertices.middleCols(vbase, mesh.vertex_count()) = mesh.vertices;
    out.faces.middleCols(fbase, mesh.face_count()) = mesh.faces.array() + vbase;
    vbase += mesh.vertex_count();
    fbase += mesh.face_count();
  }
  return out;
}

Vec3 RbfDeformation::displacement(const Vec3& p) const {
  Vec3 d = Vec3::Zero();
  for (int i = 0; i < centers.cols(); ++i) {
    const double r2 = (p - centers.col(i)).squaredNorm();
    d += amplitudes.col(i) * std::exp(-r2 / (2.0 * widths[i] * widths[i]));
  }
  constexpr double kPinWidth = 0.15;
  for (const double plane : pinned_planes) {
    const double r = (p.x() - plane) / kPinWidth;
    d.x() *= std::min(1.0, r * r);
  }
  return d;
}

Mat3X RbfDeformation::apply(const Mat3X& points) const {
  Mat3X out(3, points.cols());
  for (int i = 0; i < points.cols(); ++i) out.col(i) = apply(Vec3(points.col(i)));
  return out;
}

RbfDeformation random_deformation(std::uint64_t seed, int units) {
  Rng rng(seed);
  const int n = rng.uniform_int(3, 8);
  RbfDeformation def;
  def.centers.resize(3, n);
  def.amplitudes.resize(3, n);
  def.widths.resize(n);
  for (int i = 0; i < n; ++i) {
    def.centers.col(i) =
        Vec3(rng.uniform(0.0, static_cast<double>(units)), rng.uniform(0, 1), rng.uniform(0, 1));
    // Direction uniform on the sphere, magnitude up to 15% of the unit size.
    Vec3 dir = rng.normal3();
    while (dir.norm() < 1e-12) dir = rng.normal3();
    def.amplitudes.col(i) = dir.normalized() * rng.uniform(0.03, 0.15);
    def.widths[i] = rng.uniform(0.25, 0.6);
  }
  for (int plane = 1; plane < units; ++plane) {
    def.pinned_planes.push_back(static_cast<double>(plane));
  }
  return def;
}

TrainingPairFrames synthesize_training_pair(int type_id, std::uint64_t sample_seed,
                                            std::uint64_t deform_seed) {
  const auto parts = configuration_units(type_id);
  const int units = static_cast<int>(parts.size());
  const Mat3X clean_points = assemble_configuration(type_id, sample_seed);

  // The deformed parts may drift, but the displacement field must not reorder
  // points across unit boundaries (the parts would interpenetrate), so redraw
  // until every unit's points stay strictly left of the next unit's.
  Mat3X deformed;
  bool ok = false;
  for (std::uint64_t attempt = 0; attempt < 64 && !ok; ++attempt) {
    const RbfDeformation def = random_deformation(mix_seed(deform_seed, attempt), units);
    deformed = def.apply(clean_points);
    ok = true;
    for (int unit = 0; unit + 1 < units && ok; ++unit) {
      const double left_max =
          deformed.row(0).segment(unit * kPointsPerUnit, kPointsPerUnit).maxCoeff();
      const double right_min =
          deformed.row(0).segment((unit + 1) * kPointsPerUnit, kPointsPerUnit).minCoeff();
      ok = left_max < right_min;
    }
  }
  if (!ok) throw StageError("could not draw an order-preserving deformation");

  const EncodedFrame target = encode_frame(deformed, units);

  // Clean frame: same slot assignment, its own normalization.
  const NormalizationTransform clean_tf = normalize_for_frame(clean_points);
  FrameMatrix x0 = zero_frame();
  for (int slot = 0; slot < target.meta.live_count; ++slot)
    x0.col(slot) = clean_tf.to_frame(clean_points.col(target.meta.slot_to_point[slot]));

  TrainingPairFrames pair;
  // Quantize to the storage precision up front so in-memory training and
  // training after a save/load round trip see identical data.
  pair.x0 = x0.cast<float>().cast<double>();
  pair.x_target = target.frame.cast<float>().cast<double>();
  pair.context = context_vector(type_id);
  pair.live_count = target.meta.live_count;
  pair.type = type_id;
  pair.target_meta = target.meta;
  return pair;
}

std::vector<TrainingItem> Dataset::training_items(const DiffusionSchedule& s) const {
  std::vector<TrainingItem> items;
  items.reserve(infos.size());
  for (std::size_t i = 0; i < infos.size(); ++i) {
    TrainingItem item;
    item.x0 = clean[i];
    item.q = drift_from_pair(clean[i], target[i], s);
    item.context = context_vector(infos[i].type);
    item.live_count = infos[i].live_count;
    items.push_back(std::move(item));
  }
  return items;
}

Dataset build_dataset(const DatasetSpec& spec) {
  if (spec.types.empty() || spec.count < 1) throw ConfigError("empty dataset specification");
  Dataset ds;
  ds.infos.reserve(static_cast<std::size_t>(spec.count));
  for (int i = 0; i < spec.count; ++i) {
    DatasetItemInfo info;
    info.type = spec.types[static_cast<std::size_t>(i) % spec.types.size()];
    info.sample_seed = mix_seed(spec.base_seed, 2 * static_cast<std::uint64_t>(i));
    info.deform_seed = mix_seed(spec.base_seed, 2 * static_cast<std::uint64_t>(i) + 1);
    const TrainingPairFrames pair =
        synthesize_training_pair(info.type, info.sample_seed, info.deform_seed);
    info.live_count = pair.live_count;
    ds.infos.push_back(info);
    ds.clean.push_back(pair.x0);
    ds.target.push_back(pair.x_target);
  }
  return ds;
}

void save_dataset(const std::string& dir, const Dataset& ds) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json items = nlohmann::json::array();
  for (const auto& info : ds.infos)
    items.push_back({{"type", info.type},
                     {"sample_seed", info.sample_seed},
                     {"deform_seed", info.deform_seed},
                     {"live_count", info.live_count}});
  const nlohmann::json manifest = {{"items", items}};
  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) throw StageError("cannot write dataset manifest in " + dir);
  out << manifest.dump(2) << "\n";
  save_frame_blob((fs::path(dir) / "clean.dpcf").string(), ds.clean);
  save_frame_blob((fs::path(dir) / "target.dpcf").string(), ds.target);
}

Dataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream in(fs::path(dir) / "manifest.json");
  if (!in) throw StageError("cannot open dataset manifest in " + dir);
  nlohmann::json manifest;
  Dataset ds;
  try {
    in >> manifest;
    for (const auto& item : manifest.at("items")) {
      DatasetItemInfo info;
      info.type = item.at("type").get<int>();
      info.sample_seed = item.at("sample_seed").get<std::uint64_t>();
      info.deform_seed = item.at("deform_seed").get<std::uint64_t>();
      info.live_count = item.at("live_count").get<int>();
      if (info.type < 0 || info.type >= kConfigTypeCount || info.live_count < 1 ||
          info.live_count > kFrameSlots)
        throw StageError("dataset manifest entry out of range");
      ds.infos.push_back(info);
    }
  } catch (const nlohmann::json::exception& e) {
    throw StageError(std::string("bad dataset manifest: ") + e.what());
  }
  ds.clean = load_frame_blob((fs::path(dir) / "clean.dpcf").string());
  ds.target = load_frame_blob((fs::path(dir) / "target.dpcf").string());
  if (ds.clean.size() != ds.infos.size() || ds.target.size() != ds.infos.size())
    throw StageError("dataset blob count does not match the manifest");
  return ds;
}

}  // namespace polydiff
