#pragma once

#include <functional>
#include <string>
#include <vector>

#include "e2v/events.hpp"
#include "e2v/model.hpp"
#include "e2v/optim.hpp"
#include "e2v/voxel.hpp"

namespace e2v {

struct Sample {
  std::string id;
  std::string category;
  FrameStack frames;
  VoxelGrid labels;
};

struct TrainRun {
  Index epochs = 100;
  Index batch_size = 5;
  std::uint64_t seed = 0;
  Index checkpoint_every = 10;  ///< 0 keeps only the final checkpoint
  double threshold = 0.3;       ///< IoU threshold for the logged training IoU

  void validate() const;

  bool operator==(const TrainRun&) const = default;
};

struct EpochLog {
  Index epoch = 0;  ///< 1-based
  double loss = 0.0;
  double iou = 0.0;

  bool operator==(const EpochLog&) const = default;
};

/// Everything needed to continue a run: completed epochs, optimizer moments and
/// the log so far. The model is carried separately.
struct TrainState {
  Index epoch = 0;
  OptState<float> opt;
  std::vector<EpochLog> log;

  bool operator==(const TrainState&) const = default;
};

/// Visit order for one epoch: a Fisher-Yates shuffle seeded by (seed, epoch).
std::vector<Index> epoch_order(Index n, std::uint64_t seed, Index epoch);

/// Number of optimizer steps per epoch (the ragged last batch is kept).
inline Index steps_per_epoch(Index n, Index batch) { return (n + batch - 1) / batch; }

/// EmptyDataset or ShapeInconsistency; also checks the frames fit the model.
void check_dataset(const std::vector<Sample>& data);

/// Stacks samples[idx[i]] into an N x 1 x D x H x W batch and its labels.
std::pair<Tensor5<float>, Tensor5<float>> make_batch(const std::vector<Sample>& data, const std::vector<Index>& idx);

/// Called after every epoch with the updated state.
using EpochHook = std::function<void(const E2VModel<float>&, const TrainState&)>;

/// Runs epochs state.epoch + 1 .. run.epochs. Batches are forwarded as one
/// tensor in training mode, so norm statistics span the batch. Bitwise
/// reproducible from (model init, run.seed, state).
void train(E2VModel<float>& model, const std::vector<Sample>& data, const TrainRun& run, const AdamWConfig& opt,
           TrainState& state, const EpochHook& hook = {});

// Checkpoint files: CKP1 weights + "opt." moments, and a JSON sidecar at
// <path>.json with the run metadata and log.

struct CheckpointMeta {
  std::string config_hash;
  std::string config_json;  ///< serialized RunConfig, stored verbatim
  std::uint64_t seed = 0;
};

void save_training_checkpoint(const std::string& path, E2VModel<float>& model, const TrainState& state,
                              const CheckpointMeta& meta);

struct LoadedCheckpoint {
  TrainState state;
  CheckpointMeta meta;
};

/// Restores weights and buffers into `model` and returns the optimizer state.
/// CheckpointMismatch if the sidecar hash differs from `expected_hash` (when
/// non-empty) or the tensors do not fit the model.
LoadedCheckpoint load_training_checkpoint(const std::string& path, E2VModel<float>& model,
                                          const std::string& expected_hash = {});

/// Metric log as "epoch,loss,iou" rows.
std::string format_log_csv(const std::vector<EpochLog>& log);

struct EvalOptions {
  double threshold = 0.3;
  double distance = 0.2;
  int threads = 1;
};

struct SampleScore {
  std::string id;
  std::string category;
  double iou = 0.0;
  double fscore = 0.0;
};

struct ReportRow {
  std::string category;
  Index count = 0;
  double iou = 0.0;
  double fscore = 0.0;
};

struct Report {
  double threshold = 0.3;
  double distance = 0.2;
  std::vector<SampleScore> samples;
  std::vector<ReportRow> categories;  ///< sorted by name
  ReportRow overall;                  ///< sample-weighted
};

/// Aggregates per-sample metrics of ready-made predictions.
Report score_predictions(const std::vector<ProbGrid>& predictions, const std::vector<Sample>& data,
                         const EvalOptions& opt);

/// Eval-mode predictions (running statistics), scored per sample in parallel
/// and aggregated in sample order.
Report evaluate(const E2VModel<float>& model, const std::vector<Sample>& data, const EvalOptions& opt);

/// Two plain-text tables (IoU, then F-Score) with one row per labelled report:
/// Data Size, one column per category, Overall. Prints t and d.
std::string format_report(const std::vector<std::pair<std::string, Report>>& reports);

/// "category,count,iou,fscore" rows, Overall last.
std::string report_csv(const Report& report);

}  // namespace e2v
