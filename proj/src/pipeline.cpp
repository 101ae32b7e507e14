#include "polydiff/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "polydiff/diffusion.hpp"
#include "polydiff/errors.hpp"
#include "polydiff/frame.hpp"
#include "polydiff/harmonic.hpp"
#include "polydiff/hexmesh.hpp"
#include "polydiff/mesh_io.hpp"
#include "polydiff/polycube.hpp"
#include "polydiff/segmentation.hpp"
#include "polydiff/smoothing.hpp"
#include "polydiff/trainer.hpp"
#include "polydiff/weights_io.hpp"

namespace polydiff {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

constexpr const char* kToolVersion = "polydiff 0.1.0";

void check_keys(const json& obj, const std::string& where,
                std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (std::find_if(allowed.begin(), allowed.end(),
                     [&](const char* a) { return key == a; }) == allowed.end())
      throw ConfigError("unknown config key '" + key + "' in " + where);
  }
}

std::string join_lines(const std::vector<std::string>& parts) {
  std::string out;
  for (const std::string& p : parts) {
    if (!out.empty()) out += "; ";
    out += p;
  }
  return out;
}

void save_assignment(const std::string& path, const VertexFacetAssignment& assignment) {
  ordered_json doc;
  doc["facet"] = assignment.facet;
  json uv = json::array();
  for (int v = 0; v < assignment.uv.cols(); ++v)
    uv.push_back({assignment.uv(0, v), assignment.uv(1, v)});
  doc["uv"] = std::move(uv);
  std::ofstream out(path);
  if (!out) throw StageError("cannot write " + path);
  out << doc.dump(2) << "\n";
}

VertexFacetAssignment load_assignment(const std::string& path, int vertex_count) {
  std::ifstream in(path);
  if (!in) throw StageError("cannot open " + path);
  VertexFacetAssignment assignment;
  try {
    json doc;
    in >> doc;
    assignment.facet = doc.at("facet").get<std::vector<int>>();
    const auto& uv = doc.at("uv");
    assignment.uv.resize(2, static_cast<int>(uv.size()));
    for (int v = 0; v < static_cast<int>(uv.size()); ++v) {
      assignment.uv(0, v) = uv[v].at(0).get<double>();
      assignment.uv(1, v) = uv[v].at(1).get<double>();
    }
  } catch (const json::exception& e) {
    throw StageError("bad assignment file " + path + ": " + e.what());
  }
  if (static_cast<int>(assignment.facet.size()) != vertex_count ||
      assignment.uv.cols() != vertex_count)
    throw StageError("assignment in " + path + " does not match the mesh vertex count");
  return assignment;
}

void save_quality_json(const std::string& path, const QualityReport& report) {
  ordered_json doc;
  doc["cells"] = report.per_hex_min.size();
  doc["min_scaled_jacobian"] = report.min_scaled_jacobian;
  doc["inverted"] = report.inverted_count;
  doc["degenerate"] = report.degenerate_count;
  doc["histogram"] = report.histogram;
  std::ofstream out(path);
  if (!out) throw StageError("cannot write " + path);
  out << doc.dump(2) << "\n";
}

}  // namespace

std::pair<ContextVector, int> resolve_context(const std::string& text) {
  std::string s = text;
  s.erase(std::remove_if(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); }),
          s.end());
  if (s.empty()) throw ConfigError("empty context specification");
  const bool binary = s.size() == static_cast<std::size_t>(kContextBits) &&
                      std::all_of(s.begin(), s.end(), [](char c) { return c == '0' || c == '1'; });
  if (binary) {
    ContextVector ctx = ContextVector::Zero();
    int bits = 0;
    for (int i = 0; i < kContextBits; ++i)
      if (s[static_cast<std::size_t>(i)] == '1') {
        ctx[i] = 1.0;
        ++bits;
      }
    if (bits == 0) throw ConfigError("context mask has no set bits");
    return {ctx, bits > 1 ? 2 : 1};
  }
  if (std::all_of(s.begin(), s.end(), [](char c) { return std::isdigit(c); }) && s.size() <= 2) {
    const int type = std::stoi(s);
    if (type < 0 || type >= kConfigTypeCount)
      throw ConfigError("context type id " + s + " out of range 0.." +
                        std::to_string(kConfigTypeCount - 1));
    return {context_vector(type), type == kConfigTypeCount - 1 ? 2 : 1};
  }
  throw ConfigError("context must be a type id 0.." + std::to_string(kConfigTypeCount - 1) +
                    " or a " + std::to_string(kContextBits) + "-character bit string, got '" +
                    text + "'");
}

PipelineConfig parse_pipeline_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  PipelineConfig cfg;
  try {
    check_keys(doc, "the top level",
               {"input_mesh", "context", "out", "seed", "deterministic", "weights", "dataset",
                "expected_genus", "schedule", "training", "polycube", "hexmesh", "quality"});
    cfg.input_mesh = doc.value("input_mesh", cfg.input_mesh);
    if (doc.contains("context")) {
      const json& c = doc["context"];
      cfg.context_text = c.is_string() ? c.get<std::string>() : std::to_string(c.get<int>());
    }
    cfg.out_dir = doc.value("out", cfg.out_dir);
    cfg.seed = doc.value("seed", cfg.seed);
    cfg.deterministic = doc.value("deterministic", cfg.deterministic);
    if (doc.contains("weights")) cfg.weights_path = doc["weights"].get<std::string>();
    if (doc.contains("dataset")) cfg.dataset_dir = doc["dataset"].get<std::string>();
    if (doc.contains("expected_genus")) cfg.expected_genus = doc["expected_genus"].get<int>();
    if (doc.contains("schedule")) {
      const json& s = doc["schedule"];
      check_keys(s, "schedule", {"steps", "beta_first", "beta_last", "sigma"});
      cfg.schedule.steps = s.value("steps", cfg.schedule.steps);
      cfg.schedule.beta_first = s.value("beta_first", cfg.schedule.beta_first);
      cfg.schedule.beta_last = s.value("beta_last", cfg.schedule.beta_last);
      if (s.contains("sigma"))
        cfg.schedule.variant = sigma_variant_from_string(s["sigma"].get<std::string>());
    }
    if (doc.contains("training")) {
      const json& t = doc["training"];
      check_keys(t, "training", {"types", "pairs", "epochs", "batch", "lr", "width"});
      if (t.contains("types")) cfg.training.types = t["types"].get<std::vector<int>>();
      cfg.training.pairs = t.value("pairs", cfg.training.pairs);
      cfg.training.epochs = t.value("epochs", cfg.training.epochs);
      cfg.training.batch = t.value("batch", cfg.training.batch);
      cfg.training.lr0 = t.value("lr", cfg.training.lr0);
      cfg.training.width = t.value("width", cfg.training.width);
    }
    if (doc.contains("polycube")) {
      const json& p = doc["polycube"];
      check_keys(p, "polycube", {"smooth_iterations", "snap_tol"});
      cfg.polycube.smooth_iterations = p.value("smooth_iterations", cfg.polycube.smooth_iterations);
      cfg.polycube.snap_tol = p.value("snap_tol", cfg.polycube.snap_tol);
    }
    if (doc.contains("hexmesh")) {
      const json& h = doc["hexmesh"];
      check_keys(h, "hexmesh", {"depth", "pillow"});
      cfg.hexmesh.depth = h.value("depth", cfg.hexmesh.depth);
      cfg.hexmesh.pillow = h.value("pillow", cfg.hexmesh.pillow);
    }
    if (doc.contains("quality")) {
      const json& q = doc["quality"];
      check_keys(q, "quality", {"w_fit", "w_shape", "outer_iterations", "descent_steps"});
      cfg.quality.w_fit = q.value("w_fit", cfg.quality.w_fit);
      cfg.quality.w_shape = q.value("w_shape", cfg.quality.w_shape);
      cfg.quality.outer_iterations = q.value("outer_iterations", cfg.quality.outer_iterations);
      cfg.quality.descent_steps = q.value("descent_steps", cfg.quality.descent_steps);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  resolve_context(cfg.context_text);  // fail fast on a malformed context
  if (cfg.training.pairs < 1 || cfg.training.epochs < 1 || cfg.training.batch < 1 ||
      cfg.training.width < 1)
    throw ConfigError("training counts must be positive");
  if (cfg.training.types.empty()) throw ConfigError("training.types must not be empty");
  for (const int t : cfg.training.types)
    if (t < 0 || t >= kConfigTypeCount)
      throw ConfigError("training type id " + std::to_string(t) + " out of range");
  if (cfg.polycube.smooth_iterations < 0) throw ConfigError("smooth_iterations must be >= 0");
  if (!(cfg.polycube.snap_tol > 0.0)) throw ConfigError("snap_tol must be positive");
  return cfg;
}

PipelineConfig load_pipeline_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_pipeline_config(text.str());
}

std::string config_to_json(const PipelineConfig& config) {
  ordered_json doc;
  doc["input_mesh"] = config.input_mesh;
  doc["context"] = config.context_text;
  doc["out"] = config.out_dir;
  doc["seed"] = config.seed;
  doc["deterministic"] = config.deterministic;
  if (config.weights_path) doc["weights"] = *config.weights_path;
  if (config.dataset_dir) doc["dataset"] = *config.dataset_dir;
  if (config.expected_genus) doc["expected_genus"] = *config.expected_genus;
  doc["schedule"] = {{"steps", config.schedule.steps},
                     {"beta_first", config.schedule.beta_first},
                     {"beta_last", config.schedule.beta_last},
                     {"sigma", to_string(config.schedule.variant)}};
  doc["training"] = {{"types", config.training.types}, {"pairs", config.training.pairs},
                     {"epochs", config.training.epochs}, {"batch", config.training.batch},
                     {"lr", config.training.lr0},        {"width", config.training.width}};
  doc["polycube"] = {{"smooth_iterations", config.polycube.smooth_iterations},
                     {"snap_tol", config.polycube.snap_tol}};
  doc["hexmesh"] = {{"depth", config.hexmesh.depth}, {"pillow", config.hexmesh.pillow}};
  doc["quality"] = {{"w_fit", config.quality.w_fit},
                    {"w_shape", config.quality.w_shape},
                    {"outer_iterations", config.quality.outer_iterations},
                    {"descent_steps", config.quality.descent_steps}};
  return doc.dump(2);
}

std::uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StageError("cannot hash missing file " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    const std::streamsize n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

std::string file_hash_hex(const std::string& path) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64_file(path)));
  return buf;
}

void save_manifest(const std::string& path, const RunManifest& manifest) {
  ordered_json doc;
  doc["tool"] = manifest.tool_version;
  doc["config"] = json::parse(manifest.config_json);
  ordered_json stages = ordered_json::array();
  for (const StageRecord& rec : manifest.stages) {
    ordered_json s;
    s["name"] = rec.name;
    ordered_json in_obj = ordered_json::object(), out_obj = ordered_json::object();
    for (const StageArtifact& a : rec.inputs) in_obj[a.path] = a.hash;
    for (const StageArtifact& a : rec.outputs) out_obj[a.path] = a.hash;
    s["inputs"] = std::move(in_obj);
    s["outputs"] = std::move(out_obj);
    s["seconds"] = rec.seconds;
    stages.push_back(std::move(s));
  }
  doc["stages"] = std::move(stages);
  std::ofstream out(path);
  if (!out) throw StageError("cannot write manifest " + path);
  out << doc.dump(2) << "\n";
}

std::vector<double> train_denoiser(CondUnet<float>& net, Adam<float>& opt, const Dataset& ds,
                                   const DiffusionSchedule& schedule,
                                   const TrainSettings& settings, std::uint64_t seed,
                                   std::ostream* log) {
  const std::vector<TrainingItem> items = ds.training_items(schedule);
  if (items.empty()) throw StageError("empty training dataset");
  DenoiserTrainer<float> trainer(net, opt);
  Rng rng(seed);
  std::vector<int> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> epoch_loss;
  double lr = settings.lr0;
  for (int k = 1; k <= settings.epochs; ++k) {
    lr = lr_for_epoch(lr, k, settings.epochs);
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
      std::swap(order[i], order[rng.uniform_int(0, i)]);
    double sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += settings.batch) {
      const std::size_t stop = std::min(order.size(), start + settings.batch);
      std::vector<TrainingItem> batch;
      batch.reserve(stop - start);
      for (std::size_t i = start; i < stop; ++i) batch.push_back(items[order[i]]);
      sum += training_step(trainer, batch, schedule, rng, lr);
      ++batches;
    }
    epoch_loss.push_back(sum / batches);
    if (log)
      *log << "epoch " << k << "/" << settings.epochs << "  lr " << lr << "  loss "
           << epoch_loss.back() << "\n";
  }
  return epoch_loss;
}

Mat3X regularize_cloud(CondUnet<float>& net, const Mat3X& points, const ContextVector& context,
                       int occupied_units, const DiffusionSchedule& schedule,
                       std::uint64_t seed) {
  const EncodedFrame enc = encode_frame(points, occupied_units);
  const DenoiserFn denoiser = make_denoiser(net);
  const FrameMatrix x0 =
      sample_chain(denoiser, enc.frame, context, schedule, enc.meta.live_count, seed);
  return decode_frame(x0, enc.meta);
}

namespace {

struct StagePlan {
  std::string name;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::function<void()> body;
};

// The six stages over the standard artifact layout under config.out_dir.
// Closures capture paths by value; bodies re-read their inputs from disk so
// each stage depends only on its declared artifacts.
std::vector<StagePlan> make_plan(const PipelineConfig& config, const ContextVector& context,
                                 int units, const DiffusionSchedule& schedule,
                                 std::ostream* log) {
  const std::string out = config.out_dir;
  const std::string dataset_dir = config.dataset_dir.value_or(out + "/dataset");
  const std::string weights_in = config.weights_path.value_or(out + "/weights.dpcw");
  const std::string weights_out = out + "/weights.dpcw";
  const std::string sampled_obj = out + "/sampled.obj";
  const std::string smoothed_obj = out + "/smoothed.obj";
  const std::string polycube_json = out + "/polycube.json";
  const std::string assignment_json = out + "/assignment.json";
  const std::string hex_vtk = out + "/hex.vtk";
  const std::string improved_vtk = out + "/hex_improved.vtk";
  const std::string quality_json = out + "/quality.json";
  const std::vector<std::string> dataset_files = {
      dataset_dir + "/manifest.json", dataset_dir + "/clean.dpcf", dataset_dir + "/target.dpcf"};

  std::vector<StagePlan> plan;
  plan.push_back({"gen-data", {}, dataset_files, [=] {
                    DatasetSpec spec;
                    spec.types = config.training.types;
                    spec.count = config.training.pairs;
                    spec.base_seed = mix_seed(config.seed, 101);
                    save_dataset(dataset_dir, build_dataset(spec));
                  }});
  plan.push_back({"train", dataset_files, {weights_out}, [=] {
                    const Dataset ds = load_dataset(dataset_dir);
                    NetConfig nc;
                    nc.base_width = config.training.width;
                    CondUnet<float> net(nc, mix_seed(config.seed, 102));
                    Adam<float> opt;
                    train_denoiser(net, opt, ds, schedule, config.training,
                                   mix_seed(config.seed, 103), log);
                    save_weights(weights_out, net, &opt);
                  }});
  plan.push_back({"sample", {config.input_mesh, weights_in}, {sampled_obj}, [=] {
                    const TriMesh input = load_surface_mesh(config.input_mesh);
                    CondUnet<float> net(peek_weights_config(weights_in));
                    load_weights(weights_in, net);
                    const Mat3X cloud = regularize_cloud(net, input.vertices, context, units,
                                                         schedule, mix_seed(config.seed, 104));
                    TriMesh regularized;
                    regularized.vertices = cloud;
                    regularized.faces = input.faces;  // diffusion preserves vertex order
                    write_trimesh_obj(regularized, sampled_obj);
                  }});
  plan.push_back(
      {"polycube", {sampled_obj}, {smoothed_obj, polycube_json, assignment_json}, [=] {
         const TriMesh sampled = load_surface_mesh(sampled_obj);
         const TriMesh smoothed =
             volume_preserving_smooth(sampled, config.polycube.smooth_iterations);
         const SnapResult snap =
             snap_to_polycube(smoothed.vertices, smoothed.faces, config.polycube.snap_tol);
         std::optional<int> expect = config.expected_genus;
         if (!expect) {
           try {
             expect = mesh_genus(smoothed);
           } catch (const TopologyError&) {
             // open or multi-component input: genus pin not computable
           }
         }
         const PolycubeReport report = validate_polycube(snap.complex, expect);
         if (!report.valid())
           throw StageError("polycube validation failed: " + join_lines(report.violations));
         if (log)
           *log << "polycube: " << snap.complex.cuboids.size() << " cuboids, "
                << snap.complex.facets.size() << " facets, genus " << report.genus << "\n";
         write_trimesh_obj(smoothed, smoothed_obj);
         save_polycube(polycube_json, snap.complex);
         save_assignment(assignment_json, snap.assignment);
       }});
  plan.push_back(
      {"hexmesh", {smoothed_obj, polycube_json, assignment_json}, {hex_vtk}, [=] {
         const TriMesh surface = load_surface_mesh(smoothed_obj);
         const PolycubeComplex pc = load_polycube(polycube_json);
         const VertexFacetAssignment assignment =
             load_assignment(assignment_json, surface.vertex_count());
         const SegmentationLabels labels = segment_surface(surface, assignment, pc);
         std::vector<PatchParam> params;
         params.reserve(pc.facets.size());
         for (std::size_t f = 0; f < pc.facets.size(); ++f)
           params.push_back(harmonic_parameterize(surface, labels, static_cast<int>(f)));
         const HexMesh lattice = generate_hex_lattice(pc, config.hexmesh.depth);
         HexMesh mapped = map_to_physical(lattice, params, surface, pc);
         if (config.hexmesh.pillow) mapped = pillow_boundary(mapped);
         if (log)
           *log << "hexmesh: " << mapped.cell_count() << " cells, " << mapped.vertex_count()
                << " vertices\n";
         write_hexmesh_vtk(mapped, hex_vtk);
       }});
  plan.push_back({"quality", {hex_vtk, smoothed_obj}, {improved_vtk, quality_json}, [=] {
                    const VtkHexData data = read_hexmesh_vtk(hex_vtk);
                    const TriMesh surface = load_surface_mesh(smoothed_obj);
                    const auto [improved, report] =
                        improve_quality(data.mesh, surface, config.quality);
                    write_hexmesh_vtk(improved, improved_vtk, report.per_hex_min);
                    save_quality_json(quality_json, report);
                    if (log) *log << render_sj_histogram(report);
                  }});
  return plan;
}

void execute_stage(const StagePlan& stage, RunManifest& manifest, const std::string& out,
                   std::ostream* log) {
  StageRecord rec;
  rec.name = stage.name;
  for (const std::string& p : stage.inputs) rec.inputs.push_back({p, file_hash_hex(p)});
  if (log) *log << "[" << stage.name << "] running\n";
  const auto start = std::chrono::steady_clock::now();
  try {
    stage.body();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError("stage " + stage.name + " failed: " + e.what() + " (artifacts under " +
                     out + ")");
  }
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  for (const std::string& p : stage.outputs) rec.outputs.push_back({p, file_hash_hex(p)});
  manifest.stages.push_back(std::move(rec));
  if (log) *log << "[" << stage.name << "] done in " << rec.seconds << " s\n";
}

}  // namespace

RunManifest run_pipeline(const PipelineConfig& config, std::ostream* log) {
  const auto [context, units] = resolve_context(config.context_text);
  const DiffusionSchedule schedule = config.schedule.build();

  if (config.input_mesh.empty()) throw ConfigError("missing input: no input mesh configured");
  if (!fs::exists(config.input_mesh)) throw ConfigError("missing input: " + config.input_mesh);
  if (config.weights_path && !fs::exists(*config.weights_path))
    throw ConfigError("missing input: " + *config.weights_path);
  if (config.dataset_dir && !fs::exists(fs::path(*config.dataset_dir) / "manifest.json"))
    throw ConfigError("missing input: " + *config.dataset_dir + "/manifest.json");
  fs::create_directories(config.out_dir);

  RunManifest manifest;
  manifest.config_json = config_to_json(config);
  manifest.tool_version = kToolVersion;

  for (const StagePlan& stage : make_plan(config, context, units, schedule, log)) {
    if (stage.name == "gen-data" && (config.weights_path || config.dataset_dir)) continue;
    if (stage.name == "train" && config.weights_path) continue;
    execute_stage(stage, manifest, config.out_dir, log);
  }
  save_manifest(config.out_dir + "/manifest.json", manifest);
  return manifest;
}

RunManifest run_stage_only(const PipelineConfig& config, const std::string& stage_name,
                           std::ostream* log) {
  const auto [context, units] = resolve_context(config.context_text);
  const DiffusionSchedule schedule = config.schedule.build();
  fs::create_directories(config.out_dir);

  const std::vector<StagePlan> plan = make_plan(config, context, units, schedule, log);
  const auto it = std::find_if(plan.begin(), plan.end(),
                               [&](const StagePlan& s) { return s.name == stage_name; });
  if (it == plan.end()) throw ConfigError("unknown stage '" + stage_name + "'");
  for (const std::string& p : it->inputs) {
    if (p.empty()) throw ConfigError("missing input: no input mesh configured");
    if (!fs::exists(p)) throw ConfigError("missing input: " + p);
  }

  RunManifest manifest;
  manifest.config_json = config_to_json(config);
  manifest.tool_version = kToolVersion;
  execute_stage(*it, manifest, config.out_dir, log);
  save_manifest(config.out_dir + "/manifest.json", manifest);
  return manifest;
}

}  // namespace polydiff
