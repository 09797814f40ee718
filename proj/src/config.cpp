#include "e2v/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <functional>
#include <set>

#include <json.hpp>

#include "binary_io.hpp"

namespace e2v {

using nlohmann::json;

BinningConfig BinningSettings::config(Index sensor_height, Index sensor_width) const {
  if (downscale <= 0 || sensor_height % downscale != 0 || sensor_width % downscale != 0) {
    throw Error(Errc::NonDivisibleDimensions, "downscale " + std::to_string(downscale) + " does not divide " +
                                                  std::to_string(sensor_width) + "x" + std::to_string(sensor_height));
  }
  return BinningConfig(window, mode, sensor_height / downscale, sensor_width / downscale);
}

RunConfig RunConfig::full() {
  RunConfig c;
  c.model = ModelConfig::full();
  c.optimizer = AdamWConfig::full();
  c.simulation.sample.camera = CameraIntrinsics::full();
  c.simulation.sample.label_resolution = 32;
  return c;
}

RunConfig RunConfig::toy() {
  RunConfig c;
  c.binning.window = 0.05;
  c.model = ModelConfig::toy();
  c.optimizer = AdamWConfig::toy();
  c.simulation.sample.camera = CameraIntrinsics{80.0, 36.0, 64, 64};
  c.simulation.sample.label_resolution = 8;
  return c;
}

Index3 frame_shape(const RunConfig& cfg) {
  const auto& cam = cfg.simulation.sample.camera;
  const Index ds = std::max<Index>(cfg.binning.downscale, 1);
  return {window_count(cfg.simulation.sample.trajectory.duration, cfg.binning.window), cam.height / ds,
          cam.width / ds};
}

void RunConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(Errc::ConfigError, what); };
  try {
    simulation.sample.trajectory.validate();
    simulation.sample.camera.validate();
  } catch (const Error& e) {
    fail(std::string("simulation: ") + e.what());
  }
  if (!(simulation.sample.contrast > 0.0)) fail("simulation.contrast must be positive");
  if (!(simulation.sample.eps_log > 0.0)) fail("simulation.eps_log must be positive");
  if (simulation.sample.label_resolution <= 0) fail("simulation.label_resolution must be positive");
  if (simulation.categories.empty()) fail("simulation.categories must not be empty");
  for (const auto& c : simulation.categories) {
    const auto& known = procedural_categories();
    if (std::find(known.begin(), known.end(), c) == known.end()) fail("simulation: unknown category '" + c + "'");
  }
  double ratio_sum = 0.0;
  for (double r : simulation.split) {
    if (!(r >= 0.0)) fail("simulation.split ratios must be non-negative");
    ratio_sum += r;
  }
  if (!(ratio_sum > 0.0)) fail("simulation.split ratios must not all be zero");

  if (!(binning.window > 0.0)) fail("binning.window must be positive");
  if (binning.downscale <= 0) fail("binning.downscale must be positive");
  const auto& cam = simulation.sample.camera;
  if (cam.width % binning.downscale != 0 || cam.height % binning.downscale != 0) {
    fail("binning.downscale " + std::to_string(binning.downscale) + " does not divide the " +
         std::to_string(cam.width) + "x" + std::to_string(cam.height) + " sensor");
  }

  const auto& enc = model.encoder;
  if (enc.in_channels != 1) fail("model.encoder.in_channels must be 1 (binary event frames)");
  if (enc.stem.out_channels <= 0) fail("model.encoder.stem.out_channels must be positive");
  for (Index k : enc.stem.kernel)
    if (k <= 0) fail("model.encoder.stem.kernel entries must be positive");
  for (Index s : enc.stem.stride)
    if (s <= 0) fail("model.encoder.stem.stride entries must be positive");
  for (const auto& st : enc.stages) {
    if (st.blocks <= 0 || st.width <= 0) fail("model.encoder.stages need blocks > 0 and width > 0");
    for (Index s : st.stride)
      if (s <= 0) fail("model.encoder.stages strides must be positive");
  }
  if (enc.hidden[0] <= 0 || enc.hidden[0] != enc.hidden[1] || enc.hidden[0] != enc.hidden[2]) {
    fail("model.encoder.hidden must be a positive cube");
  }
  if (model.decoder.channels.empty()) fail("model.decoder.channels must not be empty");
  for (Index c : model.decoder.channels)
    if (c <= 0) fail("model.decoder.channels must be positive");
  if (enc.hidden[0] % (Index{1} << model.decoder.levels()) != 0) {
    fail("model.encoder.hidden must be divisible by 2^" + std::to_string(model.decoder.levels()) +
         " for the decoder depth");
  }
  if (simulation.sample.label_resolution != model.resolution()) {
    fail("simulation.label_resolution " + std::to_string(simulation.sample.label_resolution) +
         " differs from the model output " + std::to_string(model.resolution()));
  }
  const Index3 fs = frame_shape(*this);
  if (fs[0] <= 0) fail("binning window exceeds the trajectory duration");

  try {
    optimizer.validate();
    train.validate();
  } catch (const Error& e) {
    fail(e.what());
  }
  if (!(metrics.threshold > 0.0 && metrics.threshold < 1.0)) fail("metrics.threshold must lie in (0, 1)");
  if (!(metrics.distance > 0.0 && metrics.distance <= 1.0)) fail("metrics.distance must lie in (0, 1]");
}

// ---------------------------------------------------------------------------
// JSON

namespace {

std::string norm_name(nn::NormKind k) { return k == nn::NormKind::batch ? "batch" : "none"; }
std::string mode_name(BinningMode m) { return m == BinningMode::uniform ? "uniform" : "anchored"; }

json to_json(const Index3& a) { return json::array({a[0], a[1], a[2]}); }

json to_json(const EncoderConfig& e) {
  json stages = json::array();
  for (const auto& s : e.stages) stages.push_back({{"blocks", s.blocks}, {"width", s.width}, {"stride", to_json(s.stride)}});
  return {{"in_channels", e.in_channels},
          {"stem",
           {{"kernel", to_json(e.stem.kernel)},
            {"stride", to_json(e.stem.stride)},
            {"out_channels", e.stem.out_channels},
            {"pool", e.stem.pool}}},
          {"stages", stages},
          {"hidden", to_json(e.hidden)},
          {"norm", norm_name(e.norm)}};
}

json to_json(const ModelConfig& m) {
  return {{"encoder", to_json(m.encoder)},
          {"decoder", {{"channels", m.decoder.channels}, {"norm", norm_name(m.decoder.norm)}}},
          {"seed", m.seed}};
}

json to_json(const RunConfig& c) {
  const auto& s = c.simulation.sample;
  return {
      {"binning", {{"window", c.binning.window}, {"mode", mode_name(c.binning.mode)}, {"downscale", c.binning.downscale}}},
      {"model", to_json(c.model)},
      {"optimizer",
       {{"lr", c.optimizer.lr},
        {"beta1", c.optimizer.beta1},
        {"beta2", c.optimizer.beta2},
        {"eps", c.optimizer.eps},
        {"weight_decay", c.optimizer.weight_decay}}},
      {"train",
       {{"epochs", c.train.epochs},
        {"batch_size", c.train.batch_size},
        {"seed", c.train.seed},
        {"checkpoint_every", c.train.checkpoint_every},
        {"threshold", c.train.threshold}}},
      {"metrics", {{"threshold", c.metrics.threshold}, {"distance", c.metrics.distance}}},
      {"simulation",
       {{"trajectory",
         {{"duration", s.trajectory.duration},
          {"fps", s.trajectory.fps},
          {"z_start", s.trajectory.z_start},
          {"z_end", s.trajectory.z_end},
          {"r_min", s.trajectory.r_min},
          {"r_max", s.trajectory.r_max},
          {"revolutions", s.trajectory.revolutions}}},
        {"camera",
         {{"focal_mm", s.camera.focal_mm},
          {"sensor_width_mm", s.camera.sensor_width_mm},
          {"width", s.camera.width},
          {"height", s.camera.height}}},
        {"contrast", s.contrast},
        {"eps_log", s.eps_log},
        {"label_resolution", s.label_resolution},
        {"categories", c.simulation.categories},
        {"split", c.simulation.split}}}};
}

/// Source text plus helpers to turn a key into a line number.
struct Source {
  const std::string& text;
  const std::string& name;

  Index line_of_offset(std::size_t off) const {
    off = std::min(off, text.size());
    return 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(off), '\n');
  }

  /// Line of the first `"key"` followed by a colon; 0 if not found.
  Index line_of_key(const std::string& key) const {
    const std::string quoted = "\"" + key + "\"";
    for (std::size_t pos = text.find(quoted); pos != std::string::npos; pos = text.find(quoted, pos + 1)) {
      std::size_t after = pos + quoted.size();
      while (after < text.size() && std::isspace(static_cast<unsigned char>(text[after]))) ++after;
      if (after < text.size() && text[after] == ':') return line_of_offset(pos);
    }
    return 0;
  }

  [[noreturn]] void fail(const std::string& key, const std::string& path, const std::string& what) const {
    const Index line = line_of_key(key);
    throw Error(Errc::ConfigError,
                name + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " + path + ": " + what);
  }
};

/// Reads the members of one JSON object, remembering which keys were consumed.
class Section {
 public:
  Section(const Source& src, const json& obj, std::string path) : src_(src), obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) src_.fail(leaf(), path_, "expected an object");
  }

  template <typename Fn>
  void with(const std::string& key, Fn&& fn) {
    seen_.insert(key);
    if (const auto it = obj_.find(key); it != obj_.end()) fn(*it, path_ + "." + key, key);
  }

  void number(const std::string& key, double& out) {
    with(key, [&](const json& v, const std::string& p, const std::string& k) {
      if (!v.is_number()) src_.fail(k, p, "expected a number");
      out = v.get<double>();
    });
  }

  void integer(const std::string& key, Index& out) {
    with(key, [&](const json& v, const std::string& p, const std::string& k) {
      if (!v.is_number_integer()) src_.fail(k, p, "expected an integer");
      out = v.get<Index>();
    });
  }

  void unsigned_integer(const std::string& key, std::uint64_t& out) {
    with(key, [&](const json& v, const std::string& p, const std::string& k) {
      if (!v.is_number_unsigned()) src_.fail(k, p, "expected a non-negative integer");
      out = v.get<std::uint64_t>();
    });
  }

  void boolean(const std::string& key, bool& out) {
    with(key, [&](const json& v, const std::string& p, const std::string& k) {
      if (!v.is_boolean()) src_.fail(k, p, "expected true or false");
      out = v.get<bool>();
    });
  }

  void triple(const std::string& key, Index3& out) {
    with(key, [&](const json& v, const std::string& p, const std::string& k) {
      if (!v.is_array() || v.size() != 3 || !std::all_of(v.begin(), v.end(), [](const json& x) {
            return x.is_number_integer();
          })) {
        src_.fail(k, p, "expected three integers");
      }
      for (std::size_t i = 0; i < 3; ++i) out[i] = v[i].get<Index>();
    });
  }

  template <typename Enum>
  void choice(const std::string& key, Enum& out, const std::vector<std::pair<std::string, Enum>>& options) {
    with(key, [&](const json& v, const std::string& p, const std::string& k) {
      std::string allowed;
      for (const auto& [name, value] : options) {
        if (v.is_string() && v.get<std::string>() == name) {
          out = value;
          return;
        }
        allowed += (allowed.empty() ? "" : ", ") + name;
      }
      src_.fail(k, p, "expected one of " + allowed);
    });
  }

  void sub(const std::string& key, const std::function<void(Section&)>& fn) {
    with(key, [&](const json& v, const std::string& p, const std::string&) {
      Section s(src_, v, p);
      fn(s);
      s.finish();
    });
  }

  const Source& source() const { return src_; }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.count(key)) src_.fail(key, path_, "unknown key '" + key + "'");
    }
  }

 private:
  std::string leaf() const {
    const auto dot = path_.rfind('.');
    return dot == std::string::npos ? path_ : path_.substr(dot + 1);
  }

  const Source& src_;
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_encoder(Section& s, EncoderConfig& e) {
  s.integer("in_channels", e.in_channels);
  s.sub("stem", [&](Section& t) {
    t.triple("kernel", e.stem.kernel);
    t.triple("stride", e.stem.stride);
    t.integer("out_channels", e.stem.out_channels);
    t.boolean("pool", e.stem.pool);
  });
  s.with("stages", [&](const json& v, const std::string& p, const std::string& k) {
    if (!v.is_array()) s.source().fail(k, p, "expected an array of stages");
    e.stages.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      StageConfig st;
      Section t(s.source(), v[i], p + "[" + std::to_string(i) + "]");
      t.integer("blocks", st.blocks);
      t.integer("width", st.width);
      t.triple("stride", st.stride);
      t.finish();
      e.stages.push_back(st);
    }
  });
  s.triple("hidden", e.hidden);
  s.choice<nn::NormKind>("norm", e.norm, {{"batch", nn::NormKind::batch}, {"none", nn::NormKind::none}});
}

void read_model(Section& s, ModelConfig& m) {
  s.sub("encoder", [&](Section& t) { read_encoder(t, m.encoder); });
  s.sub("decoder", [&](Section& t) {
    t.with("channels", [&](const json& v, const std::string& p, const std::string& k) {
      if (!v.is_array() ||
          !std::all_of(v.begin(), v.end(), [](const json& x) { return x.is_number_integer(); })) {
        t.source().fail(k, p, "expected an array of integers");
      }
      m.decoder.channels = v.get<std::vector<Index>>();
    });
    t.choice<nn::NormKind>("norm", m.decoder.norm, {{"batch", nn::NormKind::batch}, {"none", nn::NormKind::none}});
  });
  s.unsigned_integer("seed", m.seed);
}

void read_run(Section& root, RunConfig& c) {
  root.sub("binning", [&](Section& s) {
    s.number("window", c.binning.window);
    s.choice<BinningMode>("mode", c.binning.mode,
                          {{"uniform", BinningMode::uniform}, {"anchored", BinningMode::anchored}});
    s.integer("downscale", c.binning.downscale);
  });
  root.sub("model", [&](Section& s) { read_model(s, c.model); });
  root.sub("optimizer", [&](Section& s) {
    s.number("lr", c.optimizer.lr);
    s.number("beta1", c.optimizer.beta1);
    s.number("beta2", c.optimizer.beta2);
    s.number("eps", c.optimizer.eps);
    s.number("weight_decay", c.optimizer.weight_decay);
  });
  root.sub("train", [&](Section& s) {
    s.integer("epochs", c.train.epochs);
    s.integer("batch_size", c.train.batch_size);
    s.unsigned_integer("seed", c.train.seed);
    s.integer("checkpoint_every", c.train.checkpoint_every);
    s.number("threshold", c.train.threshold);
  });
  root.sub("metrics", [&](Section& s) {
    s.number("threshold", c.metrics.threshold);
    s.number("distance", c.metrics.distance);
  });
  root.sub("simulation", [&](Section& s) {
    auto& sc = c.simulation.sample;
    s.sub("trajectory", [&](Section& t) {
      t.number("duration", sc.trajectory.duration);
      t.number("fps", sc.trajectory.fps);
      t.number("z_start", sc.trajectory.z_start);
      t.number("z_end", sc.trajectory.z_end);
      t.number("r_min", sc.trajectory.r_min);
      t.number("r_max", sc.trajectory.r_max);
      t.number("revolutions", sc.trajectory.revolutions);
    });
    s.sub("camera", [&](Section& t) {
      t.number("focal_mm", sc.camera.focal_mm);
      t.number("sensor_width_mm", sc.camera.sensor_width_mm);
      t.integer("width", sc.camera.width);
      t.integer("height", sc.camera.height);
    });
    s.number("contrast", sc.contrast);
    s.number("eps_log", sc.eps_log);
    s.integer("label_resolution", sc.label_resolution);
    s.with("categories", [&](const json& v, const std::string& p, const std::string& k) {
      if (!v.is_array() || !std::all_of(v.begin(), v.end(), [](const json& x) { return x.is_string(); })) {
        s.source().fail(k, p, "expected an array of category names");
      }
      c.simulation.categories = v.get<std::vector<std::string>>();
    });
    s.with("split", [&](const json& v, const std::string& p, const std::string& k) {
      if (!v.is_array() || v.size() != 3 ||
          !std::all_of(v.begin(), v.end(), [](const json& x) { return x.is_number(); })) {
        s.source().fail(k, p, "expected [train, val, test] ratios");
      }
      for (std::size_t i = 0; i < 3; ++i) c.simulation.split[i] = v[i].get<double>();
    });
  });
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const RunConfig& defaults, const std::string& context) {
  const Source src{text, context};
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(Errc::ConfigError,
                context + ":" + std::to_string(src.line_of_offset(e.byte > 0 ? e.byte - 1 : 0)) + ": " + e.what());
  }
  RunConfig cfg = defaults;
  Section root(src, doc, "config");
  read_run(root, cfg);
  root.finish();
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw Error(Errc::ConfigError, context + ": " + e.what());
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path, const RunConfig& defaults) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = detail::read_file(path);
  } catch (const Error& e) {
    throw Error(Errc::ConfigError, e.what());
  }
  return parse_run_config(std::string(bytes.begin(), bytes.end()), defaults, path);
}

std::string to_json_text(const RunConfig& cfg) { return to_json(cfg).dump(2); }
std::string to_json_text(const ModelConfig& cfg) { return to_json(cfg).dump(2); }

std::string config_hash(const ModelConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : to_json(cfg).dump()) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace e2v
