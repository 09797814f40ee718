#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>

#include "e2v/dataset.hpp"
#include "e2v/voxel.hpp"
#include "fixtures.hpp"

using namespace e2v;
using e2v::testing::temp_dir;

namespace {

std::string error_text(const std::function<void()>& fn, Errc expected) {
  try {
    fn();
  } catch (const Error& e) {
    CHECK(e.code() == expected);
    return e.what();
  }
  FAIL("no error raised");
  return {};
}

void touch(const std::string& path) { std::ofstream(path) << "x"; }

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("defaults validate and round-trip through JSON") {
    for (const auto& cfg : {RunConfig::toy(), RunConfig::full()}) {
      cfg.validate();
      const auto back = parse_run_config(to_json_text(cfg), RunConfig{});
      CHECK(back == cfg);
    }
  }

  TEST_CASE("toy and full-scale plumbing") {
    const auto toy = RunConfig::toy();
    CHECK(frame_shape(toy) == Index3{10, 32, 32});
    CHECK(toy.model.resolution() == 8);
    const auto full = RunConfig::full();
    CHECK(frame_shape(full) == Index3{100, 256, 256});
    CHECK(full.model.resolution() == 32);
    CHECK(full.optimizer.lr == 1e-5);
    CHECK(full.train.batch_size == 5);
    CHECK(full.train.epochs == 100);
  }

  TEST_CASE("partial overlay keeps the other defaults") {
    const auto cfg = parse_run_config(R"({"train": {"epochs": 3}, "binning": {"mode": "anchored"}})", RunConfig::toy());
    auto expected = RunConfig::toy();
    expected.train.epochs = 3;
    expected.binning.mode = BinningMode::anchored;
    CHECK(cfg == expected);
  }

  TEST_CASE("unknown keys are rejected with file and line") {
    const std::string text = "{\n  \"train\": {\n    \"epochs\": 3,\n    \"epoks\": 4\n  }\n}\n";
    const auto msg = error_text([&] { parse_run_config(text, RunConfig::toy(), "run.json"); }, Errc::ConfigError);
    CHECK(msg.find("run.json:4") != std::string::npos);
    CHECK(msg.find("epoks") != std::string::npos);
    error_text([] { parse_run_config(R"({"trian": {}})", RunConfig::toy()); }, Errc::ConfigError);
  }

  TEST_CASE("type and range errors") {
    const auto toy = RunConfig::toy();
    for (const char* text : {R"({"train": {"epochs": "ten"}})", R"({"train": {"epochs": 2.5}})",
                             R"({"binning": {"mode": "sliding"}})", R"({"model": {"encoder": {"hidden": [8, 8]}}})",
                             R"({"optimizer": {"lr": -1}})", R"({"binning": {"downscale": 3}})",
                             R"({"metrics": {"threshold": 1.5}})", R"({"simulation": {"categories": ["teapot"]}})",
                             R"({"simulation": {"label_resolution": 16}})", "[1, 2]", "{not json"}) {
      CAPTURE(text);
      error_text([&] { parse_run_config(text, toy); }, Errc::ConfigError);
    }
  }

  TEST_CASE("missing config file") {
    error_text([] { load_run_config("/nonexistent/run.json", RunConfig::toy()); }, Errc::ConfigError);
  }

  TEST_CASE("config hash is stable and architecture-sensitive") {
    const auto a = config_hash(ModelConfig::toy());
    CHECK(a.size() == 16);
    CHECK(a == config_hash(ModelConfig::toy()));
    auto other = ModelConfig::toy();
    other.decoder.channels = {16, 16};
    CHECK(config_hash(other) != a);
    CHECK(config_hash(ModelConfig::full()) != a);
  }
}

TEST_SUITE("dataset") {
  TEST_CASE("ten samples at 8:1:1 split exactly 8/1/1") {
    std::vector<std::string> ids;
    for (int i = 0; i < 10; ++i) ids.push_back("sample_" + std::to_string(i));
    for (std::uint64_t seed : {0ull, 1ull, 42ull}) {
      const auto s = assign_splits(ids, seed, {8, 1, 1});
      std::map<Split, int> n;
      for (auto x : s) ++n[x];
      CHECK(n[Split::train] == 8);
      CHECK(n[Split::val] == 1);
      CHECK(n[Split::test] == 1);
      CHECK(assign_splits(ids, seed, {8, 1, 1}) == s);
    }
    CHECK(assign_splits(ids, 0, {8, 1, 1}) != assign_splits(ids, 1, {8, 1, 1}));
  }

  TEST_CASE("split counts stay within one of the exact share") {
    for (int n : {1, 3, 7, 23, 100}) {
      std::vector<std::string> ids;
      for (int i = 0; i < n; ++i) ids.push_back(std::to_string(i));
      const auto s = assign_splits(ids, 5, {8, 1, 1});
      std::map<Split, int> count;
      for (auto x : s) ++count[x];
      CHECK(std::abs(count[Split::train] - 0.8 * n) < 1.0);
      CHECK(std::abs(count[Split::val] - 0.1 * n) < 1.0);
      CHECK(std::abs(count[Split::test] - 0.1 * n) < 1.0);
    }
    error_text([] { assign_splits({"a"}, 0, {0, 0, 0}); }, Errc::ConfigError);
  }

  TEST_CASE("split names") {
    CHECK(parse_split("val") == Split::val);
    CHECK(std::string(split_name(Split::test)) == "test");
    error_text([] { parse_split("dev"); }, Errc::BadFormat);
  }

  TEST_CASE("manifest round-trip and fail-fast on missing files") {
    const std::string dir = temp_dir("manifest");
    std::filesystem::create_directories(dir + "/events");
    touch(dir + "/events/a.evt");
    touch(dir + "/a.vox");
    Manifest m;
    m.root = dir;
    m.entries.push_back({"a", "box", "events/a.evt", "a.vox", "", Split::val});
    save_manifest(dir + "/manifest.json", m);
    CHECK(load_manifest(dir + "/manifest.json") == m);

    m.entries.push_back({"b", "box", "events/b.evt", "a.vox", "", Split::train});
    save_manifest(dir + "/manifest.json", m);
    const auto msg = error_text([&] { load_manifest(dir + "/manifest.json"); }, Errc::IoFailure);
    CHECK(msg.find("b.evt") != std::string::npos);

    m.entries[1] = m.entries[0];
    save_manifest(dir + "/manifest.json", m);
    error_text([&] { load_manifest(dir + "/manifest.json"); }, Errc::BadFormat);
    error_text([&] { load_manifest(dir + "/nope.json"); }, Errc::IoFailure);
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("dataset scenes cycle categories and are seed-deterministic") {
    const auto cfg = RunConfig::toy();
    const auto& cats = cfg.simulation.categories;
    for (Index i = 0; i < 2 * static_cast<Index>(cats.size()); ++i) {
      std::string c;
      dataset_scene(cfg, 3, i, &c);
      CHECK(c == cats[static_cast<std::size_t>(i) % cats.size()]);
    }
    const auto a = simulate(dataset_scene(cfg, 3, 1), cfg);
    const auto b = simulate(dataset_scene(cfg, 3, 1), cfg, 2);
    CHECK(a.events == b.events);
    CHECK(a.labels == b.labels);
    CHECK(a.labels.resolution() == 8);
    const auto frames = preprocess_events(a.events, cfg);
    CHECK(frames.depth == 10);
    CHECK(frames.height == 32);
  }
}
