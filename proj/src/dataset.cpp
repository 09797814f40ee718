#include "e2v/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>

#include <json.hpp>

#include "binary_io.hpp"

namespace e2v {

namespace fs = std::filesystem;
using nlohmann::json;

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw Error(Errc::BadFormat, "unknown split '" + name + "' (expected train, val or test)");
}

std::string Manifest::path_of(const std::string& rel) const { return (fs::path(root) / rel).string(); }

std::vector<const ManifestEntry*> Manifest::select(Split s) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries)
    if (e.split == s) out.push_back(&e);
  return out;
}

Manifest load_manifest(const std::string& path) {
  const auto bytes = detail::read_file(path);
  Manifest m;
  m.root = fs::path(path).parent_path().string();
  try {
    const json doc = json::parse(bytes.begin(), bytes.end());
    for (const auto& j : doc.at("entries")) {
      ManifestEntry e;
      e.id = j.at("id").get<std::string>();
      e.category = j.at("category").get<std::string>();
      e.events = j.at("events").get<std::string>();
      e.labels = j.at("labels").get<std::string>();
      if (j.contains("frames")) e.frames = j.at("frames").get<std::string>();
      e.split = parse_split(j.at("split").get<std::string>());
      m.entries.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw Error(Errc::BadFormat, path + ": " + e.what());
  }
  std::set<std::string> ids;
  for (const auto& e : m.entries) {
    if (!ids.insert(e.id).second) throw Error(Errc::BadFormat, path + ": duplicate sample id '" + e.id + "'");
    for (const std::string* rel : {&e.events, &e.labels, &e.frames}) {
      if (rel->empty() && rel == &e.frames) continue;
      if (!fs::is_regular_file(m.path_of(*rel))) {
        throw Error(Errc::IoFailure, path + ": sample '" + e.id + "' references missing file " + m.path_of(*rel));
      }
    }
  }
  return m;
}

void save_manifest(const std::string& path, const Manifest& m) {
  json entries = json::array();
  for (const auto& e : m.entries) {
    json j = {{"id", e.id},       {"category", e.category},        {"events", e.events},
              {"labels", e.labels}, {"split", split_name(e.split)}};
    if (!e.frames.empty()) j["frames"] = e.frames;
    entries.push_back(std::move(j));
  }
  const std::string text = json{{"entries", entries}}.dump(2) + "\n";
  detail::write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::vector<Split> assign_splits(const std::vector<std::string>& ids, std::uint64_t seed,
                                 const std::array<double, 3>& ratios) {
  const auto n = static_cast<Index>(ids.size());
  const double total = ratios[0] + ratios[1] + ratios[2];
  if (!(total > 0.0)) throw Error(Errc::ConfigError, "split ratios must not all be zero");

  // largest-remainder quotas
  std::array<Index, 3> quota{};
  std::array<double, 3> rem{};
  Index assigned = 0;
  for (int k = 0; k < 3; ++k) {
    const double exact = static_cast<double>(n) * ratios[k] / total;
    quota[k] = static_cast<Index>(std::floor(exact + 1e-9));
    rem[k] = exact - static_cast<double>(quota[k]);
    assigned += quota[k];
  }
  std::array<int, 3> by_rem{0, 1, 2};
  std::stable_sort(by_rem.begin(), by_rem.end(), [&](int a, int b) { return rem[a] > rem[b]; });
  for (int k = 0; assigned < n; k = (k + 1) % 3, ++assigned) ++quota[by_rem[k]];

  // rank by a per-id hash
  auto key = [seed](const std::string& id) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : id) h = (h ^ c) * 0x100000001b3ull;
    return mix_seed(seed, h);
  };
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::vector<std::uint64_t> keys;
  for (const auto& id : ids) keys.push_back(key(id));
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    return keys[a] != keys[b] ? keys[a] < keys[b] : ids[a] < ids[b];
  });

  std::vector<Split> out(static_cast<std::size_t>(n));
  Index pos = 0;
  for (int k = 0; k < 3; ++k)
    for (Index j = 0; j < quota[k]; ++j) out[order[pos++]] = static_cast<Split>(k);
  return out;
}

GeneratedSample simulate(const Scene& scene, const RunConfig& cfg, int threads) {
  return generate_sample(scene, cfg.simulation.sample, threads);
}

FrameStack preprocess_events(const EventStream& stream, const RunConfig& cfg) {
  return bin_to_frames(stream, cfg.binning.config(stream.height(), stream.width()));
}

Scene dataset_scene(const RunConfig& cfg, std::uint64_t seed, Index index, std::string* category) {
  const auto& cats = cfg.simulation.categories;
  const std::string& cat = cats[static_cast<std::size_t>(index) % cats.size()];
  if (category) *category = cat;
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(index)));
  return random_scene(cat, rng);
}

Sample load_sample(const Manifest& m, const ManifestEntry& e, const RunConfig& cfg) {
  Sample s;
  s.id = e.id;
  s.category = e.category;
  s.frames = e.frames.empty() ? preprocess_events(read_event_file(m.path_of(e.events)), cfg)
                              : read_frame_file(m.path_of(e.frames));
  s.labels = read_voxel_file(m.path_of(e.labels));
  return s;
}

std::vector<Sample> load_split(const Manifest& m, Split s, const RunConfig& cfg) {
  std::vector<Sample> out;
  for (const auto* e : m.select(s)) out.push_back(load_sample(m, *e, cfg));
  return out;
}

}  // namespace e2v
