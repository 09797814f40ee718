#pragma once

#include <array>
#include <string>
#include <vector>

#include "e2v/config.hpp"
#include "e2v/trainer.hpp"

namespace e2v {

enum class Split { train, val, test };

const char* split_name(Split s);
Split parse_split(const std::string& name);  ///< BadFormat on anything else

struct ManifestEntry {
  std::string id;
  std::string category;
  std::string events;  ///< EVT1 path relative to the manifest directory
  std::string labels;  ///< VOX1 path
  std::string frames;  ///< FRM1 cache, empty until preprocessed
  Split split = Split::train;

  bool operator==(const ManifestEntry&) const = default;
};

struct Manifest {
  std::string root;  ///< directory that entry paths are relative to
  std::vector<ManifestEntry> entries;

  std::string path_of(const std::string& rel) const;
  std::vector<const ManifestEntry*> select(Split s) const;

  bool operator==(const Manifest&) const = default;
};

/// Parses manifest.json, checks ids are unique and that every referenced file
/// exists before returning (IoFailure names the first missing path).
Manifest load_manifest(const std::string& path);
void save_manifest(const std::string& path, const Manifest& m);

/// Seeded split: samples are ranked by a hash of (seed, id) and the ranking is
/// cut by largest-remainder quotas, so 10 samples at 8:1:1 give exactly 8/1/1.
std::vector<Split> assign_splits(const std::vector<std::string>& ids, std::uint64_t seed,
                                 const std::array<double, 3>& ratios);

/// Renders, synthesizes events and voxelizes one scene under cfg.simulation.
GeneratedSample simulate(const Scene& scene, const RunConfig& cfg, int threads = 1);

/// Bins a stream with cfg.binning, pooled to the encoder input size.
FrameStack preprocess_events(const EventStream& stream, const RunConfig& cfg);

/// Scene for sample `index` of a generated dataset.
Scene dataset_scene(const RunConfig& cfg, std::uint64_t seed, Index index, std::string* category = nullptr);

/// Loads frames (cache if present, else binning on the fly) and labels.
Sample load_sample(const Manifest& m, const ManifestEntry& e, const RunConfig& cfg);
std::vector<Sample> load_split(const Manifest& m, Split s, const RunConfig& cfg);

}  // namespace e2v
