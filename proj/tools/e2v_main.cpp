#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "e2v/cli.hpp"

namespace {

void common_flags(CLI::App& cmd, e2v::cli::Options& o) {
  cmd.add_option("--config", o.config, "JSON config overlay");
  cmd.add_flag("--toy", o.toy, "desk-scale defaults (64^2 camera, 8^3 labels)");
  cmd.add_option("--seed", o.seed, "dataset / training seed");
  cmd.add_option("--threads", o.threads, "worker threads (default: E2V_THREADS or 1)")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  e2v::cli::Options o;
  if (const char* env = std::getenv("E2V_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) o.threads = n;
  }

  CLI::App app{"Event camera to 3D voxel reconstruction toolkit"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("generate", "render procedural scenes into an event dataset");
  common_flags(*gen, o);
  gen->add_option("--out", o.out, "dataset directory")->required();
  gen->add_option("--count", o.count, "number of samples")->check(CLI::PositiveNumber);
  gen->add_option("--scenes", o.scenes, "scene spec JSON ({\"scenes\": [...]})");

  auto* pre = app.add_subcommand("preprocess", "bin event streams into cached frame stacks");
  common_flags(*pre, o);
  pre->add_option("--manifest", o.manifest, "dataset manifest.json")->required();

  auto* tr = app.add_subcommand("train", "train on the train split");
  common_flags(*tr, o);
  tr->add_option("--manifest", o.manifest, "dataset manifest.json")->required();
  tr->add_option("--out", o.out, "run directory")->required();
  tr->add_option("--checkpoint", o.checkpoint, "resume from this checkpoint");

  auto* ev = app.add_subcommand("eval", "IoU / F-Score report for a checkpoint");
  common_flags(*ev, o);
  ev->add_option("--manifest", o.manifest, "dataset manifest.json")->required();
  ev->add_option("--checkpoint", o.checkpoint, "trained checkpoint")->required();
  ev->add_option("--out", o.out, "report directory")->required();

  auto* ex = app.add_subcommand("export", "write voxels as cube OBJ");
  common_flags(*ex, o);
  ex->add_option("--input", o.input, "VOX1 file");
  ex->add_option("--checkpoint", o.checkpoint, "checkpoint to predict with");
  ex->add_option("--manifest", o.manifest, "dataset manifest.json");
  ex->add_option("--sample", o.sample, "sample id to predict");
  ex->add_option("--out", o.out, "OBJ path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : e2v::cli::kExitConfig;
  }

  if (gen->parsed()) return e2v::cli::cmd_generate(o, std::cout, std::cerr);
  if (pre->parsed()) return e2v::cli::cmd_preprocess(o, std::cout, std::cerr);
  if (tr->parsed()) return e2v::cli::cmd_train(o, std::cout, std::cerr);
  if (ev->parsed()) return e2v::cli::cmd_eval(o, std::cout, std::cerr);
  return e2v::cli::cmd_export(o, std::cout, std::cerr);
}
