#pragma once

// Subcommands behind the e2v tool. Each returns a process exit code and writes
// diagnostics to `err`; none of them throw.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include "e2v/config.hpp"

namespace e2v::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitInternal = 4;

/// Exit code for an error category.
int exit_code_for(Errc code);

struct Options {
  std::string config;    ///< JSON overlay, empty for defaults
  bool toy = false;      ///< desk-scale defaults instead of full scale
  std::string manifest;
  std::string out;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  // generate
  Index count = 10;
  std::string scenes;    ///< optional scene spec JSON
  // train / eval / export
  std::string checkpoint;
  std::string input;     ///< VOX1 file for export
  std::string sample;    ///< sample id for export from a checkpoint
};

/// Defaults (toy or full scale) overlaid with opts.config.
RunConfig resolve_config(const Options& opts);

/// Renders `count` samples, cycling through the configured categories or the
/// entries of opts.scenes, into opts.out:
/// events/<id>.evt, labels/<id>.vox, samples/<id>.json, config.json and
/// manifest.json with seeded splits.
int cmd_generate(const Options& opts, std::ostream& out, std::ostream& err);

/// Bins every sample into frames/<id>.frm beside the manifest and records the
/// cache in the manifest.
int cmd_preprocess(const Options& opts, std::ostream& out, std::ostream& err);

/// Trains on the train split. Writes epoch_NNNN.ckp every checkpoint_every
/// epochs, final.ckp and metrics.csv into opts.out. opts.checkpoint resumes.
int cmd_train(const Options& opts, std::ostream& out, std::ostream& err);

/// Scores a checkpoint on every non-empty split; writes report.txt and
/// report_<split>.csv into opts.out and prints the tables.
int cmd_eval(const Options& opts, std::ostream& out, std::ostream& err);

/// Cube OBJ of a voxel file, or of the thresholded prediction for one sample.
int cmd_export(const Options& opts, std::ostream& out, std::ostream& err);

}  // namespace e2v::cli
