#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>
#include <json.hpp>

#include "data.hpp"
#include "image.hpp"
#include "train.hpp"

namespace tsdn {

// 10*log10(max^2 / MSE) over all pixels and channels; +infinity when the images are identical.
double psnr(const Image& pred, const Image& ref, double max_val = 1.0);
// Mean local SSIM of the channel-mean grayscale images: 11x11 Gaussian window (sigma 1.5),
// valid region only, K1 = 0.01, K2 = 0.03, dynamic range 1.
double ssim(const Image& pred, const Image& ref);

// Per-scene spread of variant losses, averaged over scenes.
struct Dispersion {
  double range = 0.0;
  double std = 0.0;
  std::optional<double> cv;  // empty when no scene has a nonzero mean loss
  std::size_t scenes = 0;
  std::size_t variants = 0;
};

Dispersion dispersion(const std::map<std::string, std::vector<double>>& per_scene_losses);

struct DispersionRow {
  std::size_t epoch = 0;
  Dispersion stats;
};

// Per intra epoch, the last per-variant loss vector recorded for each scene.
std::vector<DispersionRow> dispersion_from_steps(const std::vector<StepRecord>& steps);
std::vector<StepRecord> read_steps(const std::filesystem::path& jsonl);
void write_dispersion_csv(const std::vector<DispersionRow>& rows, const std::filesystem::path& path);
// Line plot of range/std/cv against epoch.
void plot_dispersion(const std::vector<DispersionRow>& rows, const std::filesystem::path& png);

struct EvalRecord {
  std::string id;
  double psnr = 0.0;
  double ssim = 0.0;
  double l1 = 0.0;
  double hazy_psnr = 0.0;
};

struct EvalSummary {
  std::vector<EvalRecord> records;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  double mean_hazy_psnr = 0.0;
  Dispersion l1_dispersion;
};

// Maps (hazy image, its scene, variant index) to a restored image.
using Dehazer = std::function<Image(const Image& hazy, const LoadedScene& scene, std::size_t variant)>;

Dehazer identity_dehazer();
// Exact inverse of the haze model with the true depth and parameters.
Dehazer oracle_dehazer(double t_min = 1e-3);
Dehazer network_dehazer(ModelBundle& models, bool use_real_extractor);

EvalSummary evaluate(const Dehazer& model, const LoadedDataset& data);
nlohmann::json to_json(const EvalSummary& s);

}  // namespace tsdn
