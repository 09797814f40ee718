#include "e2v/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>

#include <json.hpp>

#include "binary_io.hpp"
#include "e2v/checkpoint.hpp"
#include "e2v/parallel.hpp"

namespace e2v {

using nlohmann::json;

void TrainRun::validate() const {
  if (epochs < 0 || batch_size <= 0 || checkpoint_every < 0 || !(threshold > 0.0 && threshold < 1.0)) {
    throw Error(Errc::ConfigError, "train run needs epochs >= 0, batch_size > 0, checkpoint_every >= 0, 0 < t < 1");
  }
}

std::vector<Index> epoch_order(Index n, std::uint64_t seed, Index epoch) {
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(epoch)));
  for (Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Index>(rng.below(static_cast<std::uint64_t>(i + 1)));
    std::swap(order[i], order[j]);
  }
  return order;
}

void check_dataset(const std::vector<Sample>& data) {
  if (data.empty()) throw Error(Errc::EmptyDataset, "no samples to train or evaluate on");
  const Sample& first = data.front();
  for (const Sample& s : data) {
    if (s.frames.depth != first.frames.depth || s.frames.height != first.frames.height ||
        s.frames.width != first.frames.width || s.labels.resolution() != first.labels.resolution()) {
      throw Error(Errc::ShapeInconsistency, "sample '" + s.id + "' differs in frame or label shape from '" +
                                                first.id + "'");
    }
  }
}

std::pair<Tensor5<float>, Tensor5<float>> make_batch(const std::vector<Sample>& data, const std::vector<Index>& idx) {
  const FrameStack& f0 = data[static_cast<std::size_t>(idx.front())].frames;
  const auto n = static_cast<Index>(idx.size());
  Tensor5<float> x({n, 1, f0.depth, f0.height, f0.width});
  std::vector<const VoxelGrid*> labels;
  const Index per = f0.depth * f0.height * f0.width;
  for (Index i = 0; i < n; ++i) {
    const Sample& s = data[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
    for (Index j = 0; j < per; ++j) x[i * per + j] = static_cast<float>(s.frames.cells[static_cast<std::size_t>(j)]);
    labels.push_back(&s.labels);
  }
  return {std::move(x), voxels_to_tensor<float>(labels)};
}

void train(E2VModel<float>& model, const std::vector<Sample>& data, const TrainRun& run, const AdamWConfig& opt,
           TrainState& state, const EpochHook& hook) {
  run.validate();
  opt.validate();
  check_dataset(data);
  if (data.front().labels.resolution() != model.config().resolution()) {
    throw Error(Errc::ShapeInconsistency, "labels are " + std::to_string(data.front().labels.resolution()) +
                                              "^3 but the model emits " +
                                              std::to_string(model.config().resolution()) + "^3");
  }
  const auto params = model.parameters();
  if (state.opt.names.empty() && state.opt.step == 0) state.opt = OptState<float>::init(params);
  state.opt.check(params);

  const auto n = static_cast<Index>(data.size());
  for (Index epoch = state.epoch + 1; epoch <= run.epochs; ++epoch) {
    const auto order = epoch_order(n, run.seed, epoch);
    double loss_sum = 0.0, iou_sum = 0.0;
    for (Index start = 0; start < n; start += run.batch_size) {
      const std::vector<Index> idx(order.begin() + start, order.begin() + std::min(n, start + run.batch_size));
      auto [x, y] = make_batch(data, idx);
      model.zero_grad();
      const auto probs = model.forward_train(x);
      const auto loss = bce_loss(probs, y);
      model.backward(loss.grad);
      adamw_step(params, state.opt, opt);
      loss_sum += loss.loss * static_cast<double>(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) {
        iou_sum += iou(tensor_to_probgrid(probs, static_cast<Index>(i)), data[static_cast<std::size_t>(idx[i])].labels,
                       run.threshold);
      }
    }
    state.log.push_back({epoch, loss_sum / static_cast<double>(n), iou_sum / static_cast<double>(n)});
    state.epoch = epoch;
    if (hook) hook(model, state);
  }
}

namespace {

const std::string kMomentPrefix[2] = {std::string(kOptimizerPrefix) + "m.", std::string(kOptimizerPrefix) + "v."};

TensorRecord vector_record(const std::string& name, const Eigen::VectorXf& v) {
  return {name, {static_cast<std::uint32_t>(v.size())}, std::vector<float>(v.data(), v.data() + v.size())};
}

}  // namespace

void save_training_checkpoint(const std::string& path, E2VModel<float>& model, const TrainState& state,
                              const CheckpointMeta& meta) {
  Checkpoint ckp = export_model(model);
  state.opt.check(model.parameters());
  for (std::size_t i = 0; i < state.opt.names.size(); ++i) {
    ckp.add(vector_record(kMomentPrefix[0] + state.opt.names[i], state.opt.m[i]));
    ckp.add(vector_record(kMomentPrefix[1] + state.opt.names[i], state.opt.v[i]));
  }
  json side;
  side["config_hash"] = meta.config_hash;
  side["config"] = meta.config_json.empty() ? json(nullptr) : json::parse(meta.config_json);
  side["seed"] = meta.seed;
  side["epoch"] = state.epoch;
  side["step"] = state.opt.step;
  side["log"] = json::array();
  for (const auto& row : state.log) side["log"].push_back({row.epoch, row.loss, row.iou});

  write_checkpoint_file(path, ckp);
  const std::string text = side.dump(2) + "\n";
  detail::write_file(path + ".json", std::vector<std::uint8_t>(text.begin(), text.end()));
}

LoadedCheckpoint load_training_checkpoint(const std::string& path, E2VModel<float>& model,
                                          const std::string& expected_hash) {
  const auto side_bytes = detail::read_file(path + ".json");
  json side;
  try {
    side = json::parse(side_bytes.begin(), side_bytes.end());
  } catch (const json::exception& e) {
    throw Error(Errc::BadFormat, path + ".json: " + e.what());
  }
  LoadedCheckpoint out;
  try {
    out.meta.config_hash = side.at("config_hash").get<std::string>();
    out.meta.config_json = side.at("config").is_null() ? std::string() : side.at("config").dump();
    out.meta.seed = side.at("seed").get<std::uint64_t>();
    out.state.epoch = side.at("epoch").get<Index>();
    out.state.opt.step = side.at("step").get<std::int64_t>();
    for (const auto& row : side.at("log")) {
      out.state.log.push_back({row.at(0).get<Index>(), row.at(1).get<double>(), row.at(2).get<double>()});
    }
  } catch (const json::exception& e) {
    throw Error(Errc::BadFormat, path + ".json: " + e.what());
  }
  if (!expected_hash.empty() && out.meta.config_hash != expected_hash) {
    throw Error(Errc::CheckpointMismatch, path + " was written for config " + out.meta.config_hash +
                                              ", current config is " + expected_hash);
  }

  const Checkpoint ckp = read_checkpoint_file(path);
  const auto params = model.parameters();
  OptState<float> opt;
  opt.step = out.state.opt.step;
  for (const auto* p : params) {
    opt.names.push_back(p->name);
    for (int k = 0; k < 2; ++k) {
      const TensorRecord& rec = ckp.at(kMomentPrefix[k] + p->name);
      if (rec.values.size() != static_cast<std::size_t>(p->value.size())) {
        throw Error(Errc::CheckpointMismatch, "optimizer moment for " + p->name + " has the wrong size");
      }
      (k == 0 ? opt.m : opt.v).push_back(Eigen::Map<const Eigen::VectorXf>(rec.values.data(), p->value.size()));
    }
  }
  import_model(model, ckp);
  out.state.opt = std::move(opt);
  return out;
}

std::string format_log_csv(const std::vector<EpochLog>& log) {
  std::string out = "epoch,loss,iou\n";
  char line[96];
  for (const auto& row : log) {
    std::snprintf(line, sizeof(line), "%td,%.9g,%.9g\n", row.epoch, row.loss, row.iou);
    out += line;
  }
  return out;
}

Report score_predictions(const std::vector<ProbGrid>& predictions, const std::vector<Sample>& data,
                         const EvalOptions& opt) {
  if (predictions.size() != data.size()) {
    throw Error(Errc::ShapeInconsistency, std::to_string(predictions.size()) + " predictions for " +
                                              std::to_string(data.size()) + " samples");
  }
  if (data.empty()) throw Error(Errc::EmptyDataset, "nothing to score");
  Report r;
  r.threshold = opt.threshold;
  r.distance = opt.distance;
  r.samples.resize(data.size());
  parallel_for(static_cast<Index>(data.size()), opt.threads, [&](Index i) {
    const auto k = static_cast<std::size_t>(i);
    const auto& s = data[k];
    const auto rec = binarize(predictions[k], opt.threshold);
    r.samples[k] = {s.id, s.category, iou(predictions[k], s.labels, opt.threshold),
                    fscore(voxel_to_points(rec), voxel_to_points(s.labels), opt.distance)};
  });
  std::map<std::string, ReportRow> rows;
  r.overall.category = "Overall";
  for (const auto& s : r.samples) {
    auto& row = rows[s.category];
    row.category = s.category;
    ++row.count;
    row.iou += s.iou;
    row.fscore += s.fscore;
    ++r.overall.count;
    r.overall.iou += s.iou;
    r.overall.fscore += s.fscore;
  }
  for (auto& [name, row] : rows) {
    row.iou /= static_cast<double>(row.count);
    row.fscore /= static_cast<double>(row.count);
    r.categories.push_back(row);
  }
  r.overall.iou /= static_cast<double>(r.overall.count);
  r.overall.fscore /= static_cast<double>(r.overall.count);
  return r;
}

Report evaluate(const E2VModel<float>& model, const std::vector<Sample>& data, const EvalOptions& opt) {
  check_dataset(data);
  if (data.front().labels.resolution() != model.config().resolution()) {
    throw Error(Errc::CheckpointMismatch, "model emits " + std::to_string(model.config().resolution()) +
                                              "^3 grids but labels are " +
                                              std::to_string(data.front().labels.resolution()) + "^3");
  }
  std::vector<ProbGrid> preds(data.size());
  parallel_for(static_cast<Index>(data.size()), opt.threads, [&](Index i) {
    const auto k = static_cast<std::size_t>(i);
    preds[k] = tensor_to_probgrid(model.predict(frames_to_tensor<float>(data[k].frames)), 0);
  });
  return score_predictions(preds, data, opt);
}

namespace {

std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

std::string table(const std::string& title, const std::vector<std::pair<std::string, Report>>& reports,
                  const std::vector<std::string>& cats, bool use_iou) {
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header{"", "Data Size"};
  header.insert(header.end(), cats.begin(), cats.end());
  header.push_back("Overall");
  cells.push_back(header);
  for (const auto& [label, rep] : reports) {
    std::vector<std::string> row{label, std::to_string(rep.overall.count)};
    for (const auto& c : cats) {
      const auto it = std::find_if(rep.categories.begin(), rep.categories.end(),
                                   [&](const ReportRow& r) { return r.category == c; });
      row.push_back(it == rep.categories.end() ? "-" : fixed3(use_iou ? it->iou : it->fscore));
    }
    row.push_back(fixed3(use_iou ? rep.overall.iou : rep.overall.fscore));
    cells.push_back(row);
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : cells)
    for (std::size_t j = 0; j < row.size(); ++j) width[j] = std::max(width[j], row[j].size());
  std::string out = title + "\n";
  for (const auto& row : cells) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      std::string cell = row[j];
      cell.resize(width[j], ' ');
      out += (j ? "  " : "") + cell;
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    out += "\n";
  }
  return out;
}

}  // namespace

std::string format_report(const std::vector<std::pair<std::string, Report>>& reports) {
  if (reports.empty()) return {};
  std::vector<std::string> cats;
  for (const auto& [label, rep] : reports)
    for (const auto& row : rep.categories)
      if (std::find(cats.begin(), cats.end(), row.category) == cats.end()) cats.push_back(row.category);
  std::sort(cats.begin(), cats.end());
  const Report& first = reports.front().second;
  char title[128];
  std::snprintf(title, sizeof(title), "IoU (voxelization threshold t = %.2f)", first.threshold);
  std::string out = table(title, reports, cats, true) + "\n";
  std::snprintf(title, sizeof(title), "F-Score@%g%% (d = %.2f of the unit cube, t = %.2f)", first.distance * 100,
                first.distance, first.threshold);
  return out + table(title, reports, cats, false);
}

std::string report_csv(const Report& report) {
  std::string out = "category,count,iou,fscore\n";
  char line[160];
  auto emit = [&](const ReportRow& r) {
    std::snprintf(line, sizeof(line), "%s,%td,%.6f,%.6f\n", r.category.c_str(), r.count, r.iou, r.fscore);
    out += line;
  };
  for (const auto& r : report.categories) emit(r);
  emit(report.overall);
  return out;
}

}  // namespace e2v
