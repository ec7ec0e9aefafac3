#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hazegen.hpp"
#include "image.hpp"

namespace tsdn {

inline constexpr int kManifestVersion = 1;

struct VariantRecord {
  std::string hazy_path;  // relative to the manifest directory
  HazeParams params;
};

struct SceneRecord {
  std::string scene_id;
  std::string clear_path;
  std::string depth_path;
  std::vector<VariantRecord> variants;
};

struct DatasetManifest {
  int version = kManifestVersion;
  std::uint64_t seed = 0;
  std::string split = "train";
  std::filesystem::path root;  // directory holding manifest.json
  std::vector<SceneRecord> scenes;
  std::string real_list;  // optional, relative to root
  std::vector<std::string> real_paths;  // relative to root

  std::size_t num_scenes() const { return scenes.size(); }
  std::size_t variants_per_scene() const { return scenes.empty() ? 0 : scenes.front().variants.size(); }
  std::size_t num_hazy() const { return num_scenes() * variants_per_scene(); }
  std::size_t num_real() const { return real_paths.size(); }
};

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);
std::vector<std::string> read_path_list(const std::filesystem::path& list_file);

// Manifest images decoded into memory.
struct LoadedScene {
  std::string scene_id;
  Image clear;
  Image depth;
  std::vector<Image> hazy;
  std::vector<HazeParams> params;
};

struct LoadedDataset {
  DatasetManifest manifest;
  std::vector<LoadedScene> scenes;
  std::vector<Image> real;

  std::size_t index_of(const std::string& scene_id) const;
};

LoadedDataset load_dataset(const DatasetManifest& manifest);

struct CropRecord {
  std::size_t top = 0;
  std::size_t left = 0;
  bool flip = false;
  friend bool operator==(const CropRecord&, const CropRecord&) = default;
};

struct SceneBatch {
  std::vector<std::string> scene_ids;
  std::vector<std::size_t> scene_indices;
  std::vector<Image> clear;              // b
  std::vector<std::vector<Image>> hazy;  // b x n
  std::vector<std::vector<HazeParams>> variant_params;
  std::vector<std::vector<std::size_t>> variant_indices;  // b x n, manifest variant index of each hazy crop
  std::vector<CropRecord> crops;         // one window + flip per group

  std::size_t size() const { return clear.size(); }
  std::size_t variants() const { return hazy.empty() ? 0 : hazy.front().size(); }
};

struct RealBatch {
  std::vector<Image> images;
  std::vector<std::size_t> indices;
};

struct BatchOptions {
  std::size_t crop = 64;
  bool flip = true;
  std::uint64_t seed = 0;
  std::size_t batch_size = 1;
};

// Seeded per-epoch permutation of scenes; one crop window and flip per group.
class SceneBatchStream {
 public:
  SceneBatchStream(const LoadedDataset& data, const BatchOptions& opts, std::size_t epoch);
  std::optional<SceneBatch> next();
  std::size_t batches() const;

 private:
  const LoadedDataset& data_;
  BatchOptions opts_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

// scene_id -> chosen variant index.
using SubsetMap = std::map<std::string, std::size_t>;

// Pairs each epoch min(N_c, N_r) marked synthetic samples with real-domain crops.
class PairedBatchStream {
 public:
  PairedBatchStream(const LoadedDataset& data, const SubsetMap& subset, const BatchOptions& opts, std::size_t epoch);
  std::optional<std::pair<SceneBatch, RealBatch>> next();
  std::size_t pairs_per_epoch() const { return syn_order_.size(); }

 private:
  const LoadedDataset& data_;
  std::vector<std::size_t> chosen_;  // per scene index
  BatchOptions opts_;
  Rng rng_;
  std::vector<std::size_t> syn_order_;
  std::vector<std::size_t> real_order_;
  std::size_t pos_ = 0;
};

}  // namespace tsdn
