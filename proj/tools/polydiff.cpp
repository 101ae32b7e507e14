#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "polydiff/errors.hpp"
#include "polydiff/pipeline.hpp"

using namespace polydiff;

namespace {

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool deterministic = false;
  CLI::Option* out_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* det_opt = nullptr;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "pipeline configuration JSON");
  flags.out_opt = cmd->add_option("--out", flags.out_dir, "output directory");
  flags.seed_opt = cmd->add_option("--seed", flags.seed, "base random seed");
  flags.det_opt = cmd->add_flag("--deterministic", flags.deterministic,
                                "record deterministic mode in the manifest");
}

PipelineConfig effective_config(const CommonFlags& flags) {
  PipelineConfig cfg =
      flags.config_path.empty() ? PipelineConfig{} : load_pipeline_config(flags.config_path);
  if (flags.out_opt->count() > 0) cfg.out_dir = flags.out_dir;
  if (flags.seed_opt->count() > 0) cfg.seed = flags.seed;
  if (flags.det_opt->count() > 0) cfg.deterministic = flags.deterministic;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"diffusion-driven polycube hexahedral meshing"};
  app.require_subcommand(1);

  CommonFlags gen_flags, train_flags, sample_flags, polycube_flags, hex_flags, quality_flags,
      pipeline_flags;
  std::string weights, context, input_mesh;
  int depth = 0;

  CLI::App* gen = app.add_subcommand("gen-data", "synthesize the training dataset");
  add_common(gen, gen_flags);

  CLI::App* train = app.add_subcommand("train", "train the denoiser on the dataset");
  add_common(train, train_flags);

  CLI::App* sample = app.add_subcommand("sample", "regularize an input mesh with the denoiser");
  add_common(sample, sample_flags);
  CLI::Option* weights_opt =
      sample->add_option("--weights", weights, "trained weights file (DPCW)");
  CLI::Option* context_opt =
      sample->add_option("--context", context, "configuration type id or 29-bit mask");
  CLI::Option* input_opt = sample->add_option("--input", input_mesh, "input surface mesh");

  CLI::App* polycube = app.add_subcommand("polycube", "smooth, snap, and validate the polycube");
  add_common(polycube, polycube_flags);

  CLI::App* hexmesh = app.add_subcommand("hexmesh", "build the hex mesh over the polycube");
  add_common(hexmesh, hex_flags);
  CLI::Option* depth_opt =
      hexmesh->add_option("--depth", depth, "octree subdivision depth per unit cuboid");

  CLI::App* quality = app.add_subcommand("quality", "improve and report element quality");
  add_common(quality, quality_flags);

  CLI::App* pipeline = app.add_subcommand("pipeline", "run all configured stages in order");
  add_common(pipeline, pipeline_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      run_stage_only(effective_config(gen_flags), "gen-data", &std::cout);
    } else if (train->parsed()) {
      run_stage_only(effective_config(train_flags), "train", &std::cout);
    } else if (sample->parsed()) {
      PipelineConfig cfg = effective_config(sample_flags);
      if (weights_opt->count() > 0) cfg.weights_path = weights;
      if (context_opt->count() > 0) cfg.context_text = context;
      if (input_opt->count() > 0) cfg.input_mesh = input_mesh;
      run_stage_only(cfg, "sample", &std::cout);
    } else if (polycube->parsed()) {
      run_stage_only(effective_config(polycube_flags), "polycube", &std::cout);
    } else if (hexmesh->parsed()) {
      PipelineConfig cfg = effective_config(hex_flags);
      if (depth_opt->count() > 0) cfg.hexmesh.depth = depth;
      run_stage_only(cfg, "hexmesh", &std::cout);
    } else if (quality->parsed()) {
      run_stage_only(effective_config(quality_flags), "quality", &std::cout);
    } else if (pipeline->parsed()) {
      run_pipeline(effective_config(pipeline_flags), &std::cout);
    }
  } catch (const ConfigError& e) {
    std::cout << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cout << "stage failure: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
