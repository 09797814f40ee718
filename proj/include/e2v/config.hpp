#pragma once

// RunConfig: every tunable of the pipeline, loaded from JSON on top of the toy
// or full-scale defaults. Unknown keys are errors.

#include <array>
#include <string>
#include <vector>

#include "e2v/events.hpp"
#include "e2v/evsim.hpp"
#include "e2v/model.hpp"
#include "e2v/optim.hpp"
#include "e2v/trainer.hpp"

namespace e2v {

struct BinningSettings {
  double window = 0.005;
  BinningMode mode = BinningMode::uniform;
  Index downscale = 2;

  BinningConfig config(Index sensor_height, Index sensor_width) const;
  bool operator==(const BinningSettings&) const = default;
};

struct MetricSettings {
  double threshold = 0.3;
  double distance = 0.2;

  bool operator==(const MetricSettings&) const = default;
};

struct SimulationSettings {
  SampleConfig sample;
  std::vector<std::string> categories = procedural_categories();
  std::array<double, 3> split{8, 1, 1};  ///< train : val : test

  bool operator==(const SimulationSettings&) const = default;
};

struct RunConfig {
  BinningSettings binning;
  ModelConfig model;
  AdamWConfig optimizer;
  TrainRun train;
  MetricSettings metrics;
  SimulationSettings simulation;

  /// Raises ConfigError on any out-of-range value or mismatched plumbing
  /// (frame size vs. encoder input, label resolution vs. decoder output).
  void validate() const;

  /// 100 x 256 x 256 frames from a 512^2 sensor, 32^3 labels, lr 1e-5.
  static RunConfig full();
  /// 10 x 32 x 32 frames from a 64^2 sensor, 8^3 labels, lr 1e-3.
  static RunConfig toy();

  bool operator==(const RunConfig&) const = default;
};

/// Overlays the JSON object in `text` on `defaults`. `context` names the
/// source in ConfigError messages, which also carry the line of the offending key.
RunConfig parse_run_config(const std::string& text, const RunConfig& defaults, const std::string& context = "config");
RunConfig load_run_config(const std::string& path, const RunConfig& defaults);

/// Canonical JSON (sorted keys, two-space indent).
std::string to_json_text(const RunConfig& cfg);
std::string to_json_text(const ModelConfig& cfg);

/// 16 hex digits of FNV-1a over the canonical model JSON. Checkpoints record it
/// so evaluation refuses weights built for another architecture.
std::string config_hash(const ModelConfig& cfg);

/// Encoder input D x H x W implied by the simulation and binning settings.
Index3 frame_shape(const RunConfig& cfg);

}  // namespace e2v
