#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "polydiff/context.hpp"
#include "polydiff/dataset.hpp"
#include "polydiff/denoiser_net.hpp"
#include "polydiff/optimizer.hpp"
#include "polydiff/quality.hpp"
#include "polydiff/schedule.hpp"

namespace polydiff {

// Orchestration of the full run: optional data synthesis and training, then
// sample -> polycube -> hexmesh -> quality over a single input mesh.  Every
// stage reads and writes files under the output directory and the manifest
// records a content hash per artifact, so reruns are verifiable bit-for-bit.

struct ScheduleSettings {
  int steps = 500;
  double beta_first = 1e-4;
  double beta_last = 0.02;
  SigmaVariant variant = SigmaVariant::AlgorithmTwo;

  DiffusionSchedule build() const {
    return DiffusionSchedule::linear(steps, beta_first, beta_last, variant);
  }
};

struct TrainSettings {
  std::vector<int> types = {0, 2, 8};
  int pairs = 600;
  int epochs = 30;
  int batch = 50;
  double lr0 = 1e-3;
  int width = 64;
};

struct PolycubeSettings {
  int smooth_iterations = 50;
  double snap_tol = 0.04;
};

struct HexSettings {
  int depth = 2;
  bool pillow = true;
};

struct PipelineConfig {
  std::string input_mesh;
  std::string context_text = "0";  // type id 0..8 or a 29-character bit string
  std::string out_dir = "run";
  std::uint64_t seed = 1;
  bool deterministic = false;
  std::optional<std::string> weights_path;  // given -> gen-data and train skipped
  std::optional<std::string> dataset_dir;   // given -> gen-data skipped
  std::optional<int> expected_genus;
  ScheduleSettings schedule;
  TrainSettings training;
  PolycubeSettings polycube;
  HexSettings hexmesh;
  ImproveConfig quality;
};

// Resolved conditioning: the context vector plus how many grid units the
// configuration occupies (drives frame normalization of multi-unit shapes).
std::pair<ContextVector, int> resolve_context(const std::string& text);

// Strict parser: unknown keys anywhere in the document are rejected.
PipelineConfig parse_pipeline_config(const std::string& json_text);
PipelineConfig load_pipeline_config(const std::string& path);
std::string config_to_json(const PipelineConfig& config);

struct StageArtifact {
  std::string path;
  std::string hash;  // 16 hex digits, FNV-1a 64 of the file bytes
};

struct StageRecord {
  std::string name;
  std::vector<StageArtifact> inputs;
  std::vector<StageArtifact> outputs;
  double seconds = 0.0;
};

struct RunManifest {
  std::string config_json;  // canonical snapshot of the effective config
  std::vector<StageRecord> stages;
  std::string tool_version;
};

std::uint64_t fnv1a64_file(const std::string& path);
std::string file_hash_hex(const std::string& path);

void save_manifest(const std::string& path, const RunManifest& manifest);

// Epoch-driven training over the dataset: per epoch the learning rate decays
// by eta_k = eta_{k-1} * (1 - k / K), items are reshuffled, and the mean batch
// loss is recorded.  Deterministic for a fixed seed.
std::vector<double> train_denoiser(CondUnet<float>& net, Adam<float>& opt, const Dataset& ds,
                                   const DiffusionSchedule& schedule,
                                   const TrainSettings& settings, std::uint64_t seed,
                                   std::ostream* log = nullptr);

// Inference: encode the cloud, run the reverse chain with drift q = x_T / c_T,
// decode back to the original point order.
Mat3X regularize_cloud(CondUnet<float>& net, const Mat3X& points, const ContextVector& context,
                       int occupied_units, const DiffusionSchedule& schedule,
                       std::uint64_t seed);

// Runs the configured stages (gen-data and train only when no precomputed
// weights are supplied), writes all artifacts plus manifest.json under
// config.out_dir, and returns the manifest.  Throws ConfigError for invalid
// configuration or missing inputs (checked before any stage runs) and
// StageError, prefixed with the stage name, for failures inside a stage.
RunManifest run_pipeline(const PipelineConfig& config, std::ostream* log = nullptr);

// Runs one stage of the standard artifact layout (the per-stage subcommands).
// The stage's input artifacts must already exist under the configured paths.
RunManifest run_stage_only(const PipelineConfig& config, const std::string& stage_name,
                           std::ostream* log = nullptr);

}  // namespace polydiff
