#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "polydiff/diffusion.hpp"
#include "polydiff/geometry.hpp"

namespace polydiff {

// Synthetic shape corpus.  A configuration occupies one or two axis-aligned
// unit cells ("units"): unit u spans x in [u, u+1], y and z in [0, 1].  The
// configuration type encodes primitive kind and placement:
//   type = 2 * kind + unit   for a single primitive (types 0..7)
//   type = 8                 for two plain cubes stacked along x
// with kinds ordered cube, cube with a z hole, x hole, y hole.  The hole is a
// centered square channel of side 1/3 passing all the way through.
enum class PrimitiveKind { Cube = 0, CubeHoleZ = 1, CubeHoleX = 2, CubeHoleY = 3 };

// Watertight triangle mesh of the primitive in the canonical cell [0,1]^3,
// built from a 3x3x3 voxelization (holes remove the center column).
TriMesh primitive_mesh(PrimitiveKind kind);

// The (kind, unit) parts making up a configuration type.
std::vector<std::pair<PrimitiveKind, int>> configuration_units(int type_id);

inline constexpr int kPointsPerUnit = 512;
inline constexpr int kSampleCandidates = 8192;

// Farthest-point subset of `count` points drawn from `candidates`
// area-weighted random surface points.
Mat3X sample_surface_points(const TriMesh& mesh, int count, int candidates, Rng& rng);

// Ideal (undeformed) point cloud of a configuration: kPointsPerUnit points
// per unit, each unit sampled with its own child seed and shifted to its
// cell.  Column order is unit-major.  Walls shared with a neighboring unit
// are hidden geometry and are excluded from sampling.
Mat3X assemble_configuration(int type_id, std::uint64_t seed);

// Ideal triangle mesh of a configuration: per-unit primitive meshes shifted
// to their cells and concatenated.  Units are not welded, so a multi-unit
// configuration keeps its interior interface walls (each unit stays a closed
// component); single-unit configurations are watertight meshes.
TriMesh configuration_mesh(int type_id);

// Smooth free-form deformation: a sum of Gaussian bumps with vector
// amplitudes, used to turn the ideal shapes into "scanned geometry".
struct RbfDeformation {
  Mat3X centers;
  Mat3X amplitudes;
  Eigen::VectorXd widths;
  // Interior unit boundaries (x = const).  The x-component of the field ramps
  // to zero at these planes so each unit deforms on its own side and sorting
  // by x keeps units contiguous.
  std::vector<double> pinned_planes;

  Vec3 displacement(const Vec3& p) const;
  Vec3 apply(const Vec3& p) const { return p + displacement(p); }
  Mat3X apply(const Mat3X& points) const;
};

// Deformation with 3..8 bumps, amplitudes bounded by 15% of the unit size.
RbfDeformation random_deformation(std::uint64_t seed, int units);

// A supervised pair: the clean frame is the ideal configuration, the target
// frame is its deformed counterpart, and both share slot order (taken from
// the deformed cloud, which is all that exists at inference time).  The
// deformation is redrawn with a derived seed when any deformed point crosses
// the interface between units.
struct TrainingPairFrames {
  FrameMatrix x0;
  FrameMatrix x_target;
  ContextVector context;
  int live_count = 0;
  int type = 0;
  FrameMeta target_meta;
};

TrainingPairFrames synthesize_training_pair(int type_id, std::uint64_t sample_seed,
                                            std::uint64_t deform_seed);

// On-disk dataset: manifest.json plus clean/target frame blobs.  The drift is
// never stored; it is recomputed from the (quantized) frames on load so the
// pair invariant holds bitwise for the values actually used in training.
struct DatasetSpec {
  std::vector<int> types;        // cycled to fill `count` items
  int count = 0;
  std::uint64_t base_seed = 0;
};

struct DatasetItemInfo {
  int type = 0;
  std::uint64_t sample_seed = 0;
  std::uint64_t deform_seed = 0;
  int live_count = 0;
};

struct Dataset {
  std::vector<DatasetItemInfo> infos;
  std::vector<FrameMatrix> clean;
  std::vector<FrameMatrix> target;

  std::vector<TrainingItem> training_items(const DiffusionSchedule& s) const;
};

Dataset build_dataset(const DatasetSpec& spec);
void save_dataset(const std::string& dir, const Dataset& ds);
Dataset load_dataset(const std::string& dir);

}  // namespace polydiff
