#include "pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "errors.hpp"

namespace tsdn {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path RunDirectory::checkpoint(std::size_t epoch) const {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%04zu", epoch);
  return checkpoints() / buf;
}

std::optional<fs::path> RunDirectory::latest_checkpoint(std::optional<Phase> phase) const {
  std::optional<fs::path> best;
  std::error_code ec;
  if (!fs::is_directory(checkpoints(), ec)) return best;
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(checkpoints(), ec))
    if (e.is_directory() && e.path().filename().string().rfind("epoch_", 0) == 0 &&
        fs::exists(e.path() / "checkpoint.json"))
      dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  for (const fs::path& d : dirs) {
    if (phase) {
      const json meta = read_checkpoint_meta(d);
      if (phase_from_string(meta.at("phase").get<std::string>()) != *phase) continue;
    }
    best = d;
  }
  return best;
}

fs::path manifest_path(const RunConfig& cfg, const std::string& split) {
  const fs::path root(cfg.data_dir);
  if (split == "train") return root / "manifest.json";
  if (split == "test" || split == "real") return root / split / "manifest.json";
  fail(ErrorCode::InvalidInput, "unknown split '" + split + "' (expected train, test or real)");
}

SynthResult run_synth(const RunConfig& cfg, const fs::path& out_dir) {
  const DatasetManifest m = synth_dataset(cfg.synth, out_dir);
  return {out_dir / "manifest.json", m.num_scenes(), m.num_hazy(), m.num_real()};
}

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::Io, "cannot create directory " + dir.string() + ": " + ec.message());
}

void write_config(const RunConfig& cfg, const RunDirectory& run) {
  ensure_dir(run.root);
  std::ofstream out(run.config());
  if (!out) fail(ErrorCode::Io, "cannot write " + run.config().string());
  out << to_json(cfg).dump(2) << '\n';
}

LoadedDataset load_split(const RunConfig& cfg, const std::string& split) {
  const fs::path p = manifest_path(cfg, split);
  if (!fs::exists(p)) fail(ErrorCode::MissingPrerequisite, "missing dataset manifest " + p.string());
  return load_dataset(load_manifest(p));
}

class StepLog {
 public:
  StepLog(const fs::path& path, bool append) {
    ensure_dir(path.parent_path());
    out_.open(path, append ? std::ios::app : std::ios::trunc);
    if (!out_) fail(ErrorCode::Io, "cannot open step log " + path.string());
  }
  void write(const StepRecord& r) {
    out_ << to_json(r).dump() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

// The checkpoint's network shape must match the active configuration.
void require_same_network(const RunConfig& a, const RunConfig& b) {
  if (to_json(a)["net"] != to_json(b)["net"])
    fail(ErrorCode::InvalidConfig, "network configuration differs from the checkpoint's");
}

}  // namespace

void run_train_intra(const RunConfig& cfg, const RunDirectory& run) {
  const LoadedDataset data = load_split(cfg, "train");
  write_config(cfg, run);
  std::error_code ec;
  fs::remove_all(run.checkpoints(), ec);
  StepLog log(run.steps(), false);
  TrainState state = TrainState::create(cfg);
  PhaseHooks hooks;
  hooks.on_step = [&](const StepRecord& r) { log.write(r); };
  hooks.on_epoch_end = [&](const TrainState& s) { save_checkpoint(s, run.checkpoint(s.epoch)); };
  run_intra_phase(state, data, hooks);
}

OptimalSubset run_mark_subset(const RunConfig& cfg, const RunDirectory& run) {
  const auto ckpt = run.latest_checkpoint(Phase::Intra);
  if (!ckpt) fail(ErrorCode::MissingPrerequisite, "no intra checkpoint in " + run.checkpoints().string());
  TrainState state = load_checkpoint(*ckpt);
  require_same_network(state.config, cfg);
  const LoadedDataset data = load_split(cfg, "train");
  const OptimalSubset subset = mark_optimal_subset(state, data);
  ensure_dir(run.root);
  write_subset(subset, run.subset());
  return subset;
}

void run_train_inter(const RunConfig& cfg, const RunDirectory& run) {
  if (!fs::exists(run.subset())) fail(ErrorCode::MissingPrerequisite, "missing " + run.subset().string());
  const auto ckpt = run.latest_checkpoint(Phase::Intra);
  if (!ckpt) fail(ErrorCode::MissingPrerequisite, "no intra checkpoint in " + run.checkpoints().string());
  const OptimalSubset subset = read_subset(run.subset());
  const LoadedDataset data = load_split(cfg, "train");
  if (data.real.empty()) fail(ErrorCode::MissingPrerequisite, "dataset has no real-domain image list");

  TrainState state = load_checkpoint(*ckpt);
  require_same_network(state.config, cfg);
  state.config = cfg;
  state.begin_inter();
  write_config(cfg, run);
  StepLog log(run.steps(), true);
  PhaseHooks hooks;
  hooks.on_step = [&](const StepRecord& r) { log.write(r); };
  hooks.on_epoch_end = [&](const TrainState& s) { save_checkpoint(s, run.checkpoint(s.epoch)); };
  run_inter_phase(state, data, subset, hooks);
}

EvalSummary run_eval(const RunConfig& cfg, const RunDirectory& run, const EvalRequest& req) {
  const LoadedDataset data = load_split(cfg, req.split);
  EvalSummary summary;
  if (req.model == EvalModel::Identity) {
    summary = evaluate(identity_dehazer(), data);
  } else if (req.model == EvalModel::Oracle) {
    summary = evaluate(oracle_dehazer(), data);
  } else {
    const auto ckpt = req.checkpoint ? req.checkpoint : run.latest_checkpoint();
    if (!ckpt) fail(ErrorCode::MissingPrerequisite, "no checkpoint in " + run.checkpoints().string());
    TrainState state = load_checkpoint(*ckpt);
    bool use_real = req.extractor == ExtractorChoice::Real;
    if (req.extractor == ExtractorChoice::Auto) use_real = state.phase == Phase::Inter && req.split == "real";
    summary = evaluate(network_dehazer(state.models, use_real), data);
  }
  ensure_dir(run.root);
  std::ofstream out(run.eval());
  if (!out) fail(ErrorCode::Io, "cannot write " + run.eval().string());
  json doc = to_json(summary);
  doc["split"] = req.split;
  out << doc.dump(2) << '\n';
  return summary;
}

std::vector<DispersionRow> run_dispersion(const RunDirectory& run) {
  const std::vector<DispersionRow> rows = dispersion_from_steps(read_steps(run.steps()));
  if (rows.empty()) fail(ErrorCode::MissingPrerequisite, "no intra-phase records in " + run.steps().string());
  write_dispersion_csv(rows, run.dispersion_csv());
  plot_dispersion(rows, run.dispersion_png());
  return rows;
}

void run_dehaze(const fs::path& checkpoint, const fs::path& in, const fs::path& out, ExtractorChoice extractor) {
  TrainState state = load_checkpoint(checkpoint);
  const bool use_real = extractor == ExtractorChoice::Real ||
                        (extractor == ExtractorChoice::Auto && state.phase == Phase::Inter);
  const Image hazy = read_png(in);
  write_png(out, dehaze_image(state.models, hazy, use_real));
}

}  // namespace tsdn
