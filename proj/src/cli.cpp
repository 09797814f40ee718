#include "e2v/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <functional>
#include <ostream>

#include <json.hpp>

#include "binary_io.hpp"
#include "e2v/checkpoint.hpp"
#include "e2v/dataset.hpp"

namespace e2v::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::ConfigError:
    case Errc::InvalidSceneSpec:
      return kExitConfig;
    case Errc::IoFailure:
    case Errc::BadFormat:
    case Errc::CheckpointMismatch:
    case Errc::EmptyDataset:
    case Errc::ShapeInconsistency:
    case Errc::ResolutionMismatch:
    case Errc::NonMonotoneTimestamp:
    case Errc::OutOfBoundsCoordinate:
    case Errc::InvalidPolarity:
    case Errc::TimestampOutOfRange:
    case Errc::MalformedLine:
    case Errc::IndexOutOfRange:
    case Errc::EmptyMesh:
    case Errc::DegenerateExtent:
      return kExitData;
    default:
      return kExitInternal;
  }
}

namespace {

int guarded(const char* command, std::ostream& err, const std::function<void()>& body) {
  try {
    body();
    return kExitOk;
  } catch (const Error& e) {
    err << "e2v " << command << ": " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    err << "e2v " << command << ": IoFailure: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "e2v " << command << ": internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}

void write_text(const fs::path& path, const std::string& text) {
  detail::write_file(path.string(), std::vector<std::uint8_t>(text.begin(), text.end()));
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw Error(Errc::IoFailure, "cannot create directory " + dir.string() + ": " + ec.message());
  }
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw Error(Errc::ConfigError, std::string(flag) + " is required");
}

std::string sample_id(Index i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "sample_%05td", i);
  return buf;
}

Eigen::Vector3d vec3(const json& j, const char* key, const Eigen::Vector3d& fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 3) throw Error(Errc::InvalidSceneSpec, std::string(key) + " must be [x, y, z]");
  return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
}

/// One entry of a scene spec file: a procedural category, an OBJ mesh or an
/// explicit primitive list.
struct SceneSpec {
  std::string category;
  std::string obj;
  std::vector<Primitive> primitives;
};

std::vector<SceneSpec> read_scene_specs(const std::string& path) {
  const auto bytes = detail::read_file(path);
  std::vector<SceneSpec> specs;
  try {
    const json doc = json::parse(bytes.begin(), bytes.end());
    for (const auto& j : doc.at("scenes")) {
      SceneSpec s;
      s.category = j.at("category").get<std::string>();
      if (j.contains("obj")) s.obj = (fs::path(path).parent_path() / j.at("obj").get<std::string>()).string();
      if (j.contains("primitives")) {
        for (const auto& p : j.at("primitives")) {
          const auto kind = p.at("kind").get<std::string>();
          const double albedo = p.value("albedo", 0.8);
          const auto c = vec3(p, "center", Eigen::Vector3d::Zero());
          if (kind == "sphere") {
            s.primitives.push_back(Primitive::sphere(c, p.at("radius").get<double>(), albedo));
          } else if (kind == "box") {
            s.primitives.push_back(Primitive::box(c, vec3(p, "half_extents", {0.25, 0.25, 0.25}), albedo));
          } else if (kind == "cylinder") {
            s.primitives.push_back(Primitive::cylinder(c, vec3(p, "axis", Eigen::Vector3d::UnitZ()).normalized(),
                                                       p.at("radius").get<double>(),
                                                       p.at("half_height").get<double>(), albedo));
          } else {
            throw Error(Errc::InvalidSceneSpec, "unknown primitive kind '" + kind + "'");
          }
          s.primitives.back().validate();
        }
      }
      if (!s.obj.empty() && !s.primitives.empty()) {
        throw Error(Errc::InvalidSceneSpec, "scene '" + s.category + "' gives both obj and primitives");
      }
      specs.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidSceneSpec, path + ": " + e.what());
  }
  if (specs.empty()) throw Error(Errc::InvalidSceneSpec, path + ": no scenes");
  return specs;
}

Scene scene_for(const SceneSpec& spec, std::uint64_t seed, Index index) {
  if (!spec.obj.empty()) return Scene::from_mesh(read_obj_file(spec.obj));
  if (!spec.primitives.empty()) return Scene::from_primitives(spec.primitives);
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(index)));
  return random_scene(spec.category, rng);
}

CheckpointMeta meta_for(const RunConfig& cfg) {
  return {config_hash(cfg.model), to_json_text(cfg), cfg.train.seed};
}

std::string epoch_name(Index epoch) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "epoch_%04td.ckp", epoch);
  return buf;
}

}  // namespace

RunConfig resolve_config(const Options& opts) {
  const RunConfig defaults = opts.toy ? RunConfig::toy() : RunConfig::full();
  RunConfig cfg = opts.config.empty() ? defaults : load_run_config(opts.config, defaults);
  if (opts.seed) cfg.train.seed = *opts.seed;
  cfg.validate();
  return cfg;
}

int cmd_generate(const Options& opts, std::ostream& out, std::ostream& err) {
  return guarded("generate", err, [&] {
    const RunConfig cfg = resolve_config(opts);
    require(opts.out, "--out");
    if (opts.count <= 0) throw Error(Errc::ConfigError, "--count must be positive");
    const std::uint64_t seed = opts.seed.value_or(0);

    std::vector<SceneSpec> specs;
    if (opts.scenes.empty()) {
      for (const auto& c : cfg.simulation.categories) specs.push_back({c, {}, {}});
    } else {
      specs = read_scene_specs(opts.scenes);
    }

    const fs::path root(opts.out);
    for (const char* sub : {"events", "labels", "samples"}) make_dirs(root / sub);

    json simulation = json::parse(to_json_text(cfg)).at("simulation");
    simulation.erase("categories");
    simulation.erase("split");

    Manifest m;
    m.root = root.string();
    std::vector<std::string> ids;
    for (Index i = 0; i < opts.count; ++i) {
      const auto& spec = specs[static_cast<std::size_t>(i) % specs.size()];
      const std::string id = sample_id(i);
      const Scene scene = scene_for(spec, seed, i);
      const auto g = simulate(scene, cfg, opts.threads);
      const std::string events = "events/" + id + ".evt";
      const std::string labels = "labels/" + id + ".vox";
      write_event_file((root / events).string(), g.events);
      write_voxel_file((root / labels).string(), g.labels);
      const json sidecar = {{"id", id},
                            {"category", spec.category},
                            {"index", i},
                            {"seed", seed},
                            {"video_frames", g.frame_count},
                            {"events", g.events.size()},
                            {"occupied", g.labels.count()},
                            {"resolution", g.labels.resolution()},
                            {"simulation", simulation}};
      write_text(root / "samples" / (id + ".json"), sidecar.dump(2) + "\n");
      m.entries.push_back({id, spec.category, events, labels, "", Split::train});
      ids.push_back(id);
      out << id << "  " << spec.category << "  " << g.events.size() << " events, " << g.labels.count()
          << " occupied voxels\n";
    }
    const auto splits = assign_splits(ids, seed, cfg.simulation.split);
    for (std::size_t i = 0; i < splits.size(); ++i) m.entries[i].split = splits[i];
    write_text(root / "config.json", to_json_text(cfg) + "\n");
    save_manifest((root / "manifest.json").string(), m);
    out << "wrote " << m.entries.size() << " samples to " << (root / "manifest.json").string() << "\n";
  });
}

int cmd_preprocess(const Options& opts, std::ostream& out, std::ostream& err) {
  return guarded("preprocess", err, [&] {
    const RunConfig cfg = resolve_config(opts);
    require(opts.manifest, "--manifest");
    Manifest m = load_manifest(opts.manifest);
    make_dirs(fs::path(m.root) / "frames");
    for (auto& e : m.entries) {
      const auto frames = preprocess_events(read_event_file(m.path_of(e.events)), cfg);
      e.frames = "frames/" + e.id + ".frm";
      write_frame_file(m.path_of(e.frames), frames);
    }
    save_manifest(opts.manifest, m);
    const auto shape = frame_shape(cfg);
    out << "cached " << m.entries.size() << " frame stacks (" << shape[0] << " x " << shape[1] << " x "
        << shape[2] << ")\n";
  });
}

int cmd_train(const Options& opts, std::ostream& out, std::ostream& err) {
  return guarded("train", err, [&] {
    const RunConfig cfg = resolve_config(opts);
    require(opts.manifest, "--manifest");
    require(opts.out, "--out");
    const Manifest m = load_manifest(opts.manifest);
    const auto data = load_split(m, Split::train, cfg);
    const fs::path dir(opts.out);
    make_dirs(dir);

    E2VModel<float> model(cfg.model);
    const CheckpointMeta meta = meta_for(cfg);
    TrainState state;
    if (!opts.checkpoint.empty()) {
      state = load_training_checkpoint(opts.checkpoint, model, meta.config_hash).state;
      out << "resuming after epoch " << state.epoch << "\n";
    }
    const auto hook = [&](const E2VModel<float>&, const TrainState& st) {
      const auto& row = st.log.back();
      char line[96];
      std::snprintf(line, sizeof(line), "epoch %4td  loss %.6f  iou %.4f\n", row.epoch, row.loss, row.iou);
      out << line << std::flush;
      if (cfg.train.checkpoint_every > 0 && st.epoch % cfg.train.checkpoint_every == 0) {
        save_training_checkpoint((dir / epoch_name(st.epoch)).string(), model, st, meta);
      }
    };
    train(model, data, cfg.train, cfg.optimizer, state, hook);
    save_training_checkpoint((dir / "final.ckp").string(), model, state, meta);
    write_text(dir / "metrics.csv", format_log_csv(state.log));
    out << "wrote " << (dir / "final.ckp").string() << "\n";
  });
}

int cmd_eval(const Options& opts, std::ostream& out, std::ostream& err) {
  return guarded("eval", err, [&] {
    const RunConfig cfg = resolve_config(opts);
    require(opts.manifest, "--manifest");
    require(opts.checkpoint, "--checkpoint");
    require(opts.out, "--out");
    const Manifest m = load_manifest(opts.manifest);
    E2VModel<float> model(cfg.model);
    load_training_checkpoint(opts.checkpoint, model, config_hash(cfg.model));
    const fs::path dir(opts.out);
    make_dirs(dir);

    const EvalOptions eo{cfg.metrics.threshold, cfg.metrics.distance, opts.threads};
    std::vector<std::pair<std::string, Report>> reports;
    const std::pair<Split, const char*> splits[] = {
        {Split::train, "Training Data"}, {Split::val, "Validation Data"}, {Split::test, "Testing Data"}};
    for (const auto& [split, label] : splits) {
      const auto data = load_split(m, split, cfg);
      if (data.empty()) continue;
      reports.emplace_back(label, evaluate(model, data, eo));
      write_text(dir / ("report_" + std::string(split_name(split)) + ".csv"), report_csv(reports.back().second));
    }
    if (reports.empty()) throw Error(Errc::EmptyDataset, opts.manifest + " has no samples");
    const std::string text = format_report(reports);
    write_text(dir / "report.txt", text);
    out << text;
  });
}

int cmd_export(const Options& opts, std::ostream& out, std::ostream& err) {
  return guarded("export", err, [&] {
    require(opts.out, "--out");
    VoxelGrid grid;
    if (!opts.input.empty()) {
      grid = read_voxel_file(opts.input);
    } else {
      if (opts.checkpoint.empty() || opts.manifest.empty() || opts.sample.empty()) {
        throw Error(Errc::ConfigError, "export needs --input, or --checkpoint with --manifest and --sample");
      }
      const RunConfig cfg = resolve_config(opts);
      const Manifest m = load_manifest(opts.manifest);
      const auto it = std::find_if(m.entries.begin(), m.entries.end(),
                                   [&](const ManifestEntry& e) { return e.id == opts.sample; });
      if (it == m.entries.end()) throw Error(Errc::BadFormat, opts.manifest + " has no sample '" + opts.sample + "'");
      E2VModel<float> model(cfg.model);
      load_training_checkpoint(opts.checkpoint, model, config_hash(cfg.model));
      const Sample s = load_sample(m, *it, cfg);
      grid = binarize(tensor_to_probgrid(model.predict(frames_to_tensor<float>(s.frames)), 0),
                      cfg.metrics.threshold);
    }
    const fs::path path(opts.out);
    if (path.has_parent_path()) make_dirs(path.parent_path());
    write_text(path, voxels_to_obj(grid));
    out << "wrote " << grid.count() << " cubes to " << path.string() << "\n";
  });
}

}  // namespace e2v::cli
