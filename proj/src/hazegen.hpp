#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "image.hpp"
#include "rng.hpp"

namespace tsdn {

// Atmospheric light A (per channel, in (0,1]) and scattering coefficient beta (> 0).
struct HazeParams {
  std::array<double, 3> atmospheric_light{1.0, 1.0, 1.0};
  double beta = 1.0;

  void validate() const;
  friend bool operator==(const HazeParams&, const HazeParams&) = default;
};

struct HazeVariant {
  HazeParams params;
  Image hazy;
};

// A clear image and its depth field with n hazy renderings.
struct SceneGroup {
  std::string scene_id;
  Image clear;
  Image depth;  // single channel, nonnegative
  std::vector<HazeVariant> variants;

  void validate() const;
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct SynthSpec {
  std::size_t height = 72;
  std::size_t width = 72;
  std::size_t variants = 4;
  std::size_t scenes = 20;
  Range beta{0.4, 2.0};
  Range airlight{0.7, 1.0};
  Range depth{0.1, 1.0};
  // Channel-wise tint applied to A; 0 keeps A grayscale.
  double airlight_tint = 0.0;
  std::uint64_t seed = 0;

  // Held-out scenes drawn from the same haze ranges.
  std::size_t test_scenes = 10;
  // Real-domain stand-in: disjoint haze ranges plus sensor noise, ground truth withheld from training.
  std::size_t real_images = 20;
  Range real_beta{2.2, 3.0};
  Range real_airlight{0.55, 0.7};
  double real_noise = 0.01;

  void validate() const;
};

Image transmission(const Image& depth, double beta);
Image apply_haze(const Image& clear, const Image& depth, const HazeParams& params);
Image invert_haze(const Image& hazy, const Image& depth, const HazeParams& params, double t_min = 1e-3);

// Procedural clear image and depth field; deterministic in (seed, scene_id).
Image synth_clear(Rng& rng, std::size_t h, std::size_t w);
Image synth_depth(Rng& rng, std::size_t h, std::size_t w, Range range);

// `beta_range`/`airlight_range` replace the synthetic ranges; the real-domain split uses this.
SceneGroup synth_scene(const SynthSpec& spec, const std::string& scene_id);
SceneGroup synth_scene(const SynthSpec& spec, const std::string& scene_id, Range beta_range, Range airlight_range,
                       std::size_t variants);

struct DatasetManifest;
// Writes train (`manifest.json`), held-out (`test/manifest.json`) and real-domain
// (`real/manifest.json` + `real.txt`) splits under out_dir; returns the train manifest.
DatasetManifest synth_dataset(const SynthSpec& spec, const std::filesystem::path& out_dir);

}  // namespace tsdn
