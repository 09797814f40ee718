#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "e2v/dataset.hpp"

namespace e2v::testing {

/// Fresh, empty scratch directory under the system temp dir.
inline std::string temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("e2v_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

/// n procedural samples under the toy pipeline (64^2 camera, 10 x 32 x 32 frames, 8^3 labels).
inline std::vector<Sample> toy_samples(Index n, std::uint64_t seed = 7) {
  const RunConfig cfg = RunConfig::toy();
  std::vector<Sample> out;
  for (Index i = 0; i < n; ++i) {
    std::string category;
    const Scene scene = dataset_scene(cfg, seed, i, &category);
    const auto g = simulate(scene, cfg);
    out.push_back({"s" + std::to_string(i), category, preprocess_events(g.events, cfg), g.labels});
  }
  return out;
}

}  // namespace e2v::testing
