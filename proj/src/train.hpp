#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>
#include <json.hpp>

#include "config.hpp"
#include "data.hpp"
#include "losses.hpp"
#include "nets.hpp"
#include "optim.hpp"

namespace tsdn {

inline constexpr int kCheckpointVersion = 1;

// Lowest loss wins; ties go to the lowest index. NaN raises a divergence error.
std::size_t select_base(std::span<const double> per_variant_losses);

struct OptimalSubset {
  SubsetMap chosen;
  std::map<std::string, std::vector<double>> losses;

  bool contains(const std::string& scene_id, std::size_t variant) const;
};

nlohmann::json to_json(const OptimalSubset& s);
OptimalSubset subset_from_json(const nlohmann::json& j);
void write_subset(const OptimalSubset& s, const std::filesystem::path& path);
OptimalSubset read_subset(const std::filesystem::path& path);

struct TrainState {
  RunConfig config;
  ModelBundle models;
  Phase phase = Phase::Intra;
  std::size_t epoch = 0;        // epochs completed over both phases
  std::size_t phase_epoch = 0;  // epochs completed in the current phase
  std::size_t step = 0;         // optimization steps over both phases
  Rng rng;
  std::unique_ptr<Sgd> dehazer_opt;
  std::unique_ptr<Adam> discriminator_opt;
  // Dataset-scale adversarial sums of the last completed epoch (L_1 intra, L_2 inter).
  double last_epoch_adv_sum = 0.0;
  double last_epoch_sys_mean = 0.0;
  // Per completed epoch of the intra phase: scene -> per-variant L1 losses.
  std::vector<std::map<std::string, std::vector<double>>> variant_loss_history;

  static TrainState create(const RunConfig& cfg);
  // Switches to the inter phase with fresh optimizers. G is frozen; R stays frozen until its epochs pass.
  void begin_inter();
};

// Gradient probes filled by the step functions when requested.
struct StepDiagnostics {
  std::vector<double> adversarial_grad_norm;  // per extractor input row: norm of the adversarial feature gradient
  std::vector<std::size_t> base_rows;         // intra: rows that were the base feature
  std::vector<std::size_t> base_indices;      // intra: base variant per group
};

LossReport intra_step(const SceneBatch& batch, TrainState& state, const LossWeights& weights,
                      StepDiagnostics* diag = nullptr);
LossReport inter_step(const SceneBatch& syn, const RealBatch& real, TrainState& state, const LossWeights& weights,
                      StepDiagnostics* diag = nullptr);

struct StepRecord {
  Phase phase = Phase::Intra;
  std::size_t epoch = 0;  // 1-based within the phase
  std::size_t global_epoch = 0;
  std::size_t step = 0;
  std::vector<std::string> scene_ids;
  std::vector<std::size_t> syn_variants;  // inter: marked variant consumed per pair
  std::vector<std::size_t> real_indices;  // inter
  std::vector<std::size_t> base_indices;  // intra
  LossReport report;
  bool r_trainable = true;
};

nlohmann::json to_json(const StepRecord& r);
StepRecord step_record_from_json(const nlohmann::json& j);

struct PhaseHooks {
  std::function<void(const StepRecord&)> on_step;
  std::function<void(const TrainState&)> on_epoch_end;
};

// Runs the remaining intra epochs (state.phase_epoch .. config.intra.epochs).
void run_intra_phase(TrainState& state, const LoadedDataset& data, const PhaseHooks& hooks = {});
// Runs the remaining inter epochs; R trains only once freeze_R_epochs have passed.
void run_inter_phase(TrainState& state, const LoadedDataset& data, const OptimalSubset& subset,
                     const PhaseHooks& hooks = {});

// Deterministic pass without augmentation (center crop of `crop`, 0 = full image).
OptimalSubset mark_optimal_subset(TrainState& state, const LoadedDataset& data, std::size_t crop = 0);

// Runs the extractor (G or G') and R on one image, padding to a multiple of the downsample factor.
Image dehaze_image(ModelBundle& models, const Image& hazy, bool use_real_extractor);

void save_checkpoint(const TrainState& state, const std::filesystem::path& dir);
TrainState load_checkpoint(const std::filesystem::path& dir);
nlohmann::json read_checkpoint_meta(const std::filesystem::path& dir);

}  // namespace tsdn
