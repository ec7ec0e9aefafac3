#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "config.hpp"
#include "metrics.hpp"
#include "train.hpp"

namespace tsdn {

// Layout of a run directory.
struct RunDirectory {
  std::filesystem::path root;

  std::filesystem::path config() const { return root / "config.json"; }
  std::filesystem::path checkpoints() const { return root / "checkpoints"; }
  std::filesystem::path checkpoint(std::size_t epoch) const;
  std::filesystem::path steps() const { return root / "logs" / "steps.jsonl"; }
  std::filesystem::path subset() const { return root / "subset.json"; }
  std::filesystem::path eval() const { return root / "eval.json"; }
  std::filesystem::path dispersion_csv() const { return root / "dispersion.csv"; }
  std::filesystem::path dispersion_png() const { return root / "dispersion.png"; }

  // Most recent checkpoint of the given phase, if any.
  std::optional<std::filesystem::path> latest_checkpoint(std::optional<Phase> phase = std::nullopt) const;
};

std::filesystem::path manifest_path(const RunConfig& cfg, const std::string& split);

struct SynthResult {
  std::filesystem::path manifest;
  std::size_t scenes = 0;
  std::size_t hazy = 0;
  std::size_t real = 0;
};
SynthResult run_synth(const RunConfig& cfg, const std::filesystem::path& out_dir);

void run_train_intra(const RunConfig& cfg, const RunDirectory& run);
OptimalSubset run_mark_subset(const RunConfig& cfg, const RunDirectory& run);
void run_train_inter(const RunConfig& cfg, const RunDirectory& run);

enum class EvalModel { Network, Identity, Oracle };
enum class ExtractorChoice { Auto, Synthetic, Real };

struct EvalRequest {
  std::string split = "test";
  EvalModel model = EvalModel::Network;
  ExtractorChoice extractor = ExtractorChoice::Auto;
  std::optional<std::filesystem::path> checkpoint;  // default: latest in the run directory
};
EvalSummary run_eval(const RunConfig& cfg, const RunDirectory& run, const EvalRequest& req);

std::vector<DispersionRow> run_dispersion(const RunDirectory& run);

void run_dehaze(const std::filesystem::path& checkpoint, const std::filesystem::path& in,
                const std::filesystem::path& out, ExtractorChoice extractor);

}  // namespace tsdn
