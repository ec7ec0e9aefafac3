// Command-line front end. Links only the C API.
#include <tsdn/tsdn.h>

#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"

namespace {

struct Common {
  std::string config;
  std::string run_dir = "runs/default";
  std::vector<std::string> sets;
  long long seed = -1;
  bool dry_run = false;
};

void add_common(CLI::App* sub, Common& c, bool run_dir) {
  sub->add_option("--config", c.config, "JSON config overlaid on the defaults")->check(CLI::ExistingFile);
  sub->add_option("--set", c.sets, "Override a config key, e.g. --set train.intra.epochs=5");
  sub->add_option("--seed", c.seed, "Root seed");
  sub->add_flag("--dry-run", c.dry_run, "Print the resolved config and exit");
  if (run_dir) sub->add_option("--run-dir", c.run_dir, "Run directory");
}

int report(tsdn_status s) {
  if (s != TSDN_OK) std::fprintf(stderr, "error (%s): %s\n", tsdn_status_name(s), tsdn_last_error());
  switch (s) {
    case TSDN_OK: return 0;
    case TSDN_ERR_IO: return 2;
    case TSDN_ERR_MISSING_PREREQUISITE: return 3;
    case TSDN_ERR_DIVERGENCE: return 4;
    default: return 1;
  }
}

// Owns a config handle built from the shared options.
class Config {
 public:
  ~Config() { tsdn_config_free(cfg_); }

  tsdn_status build(const Common& c) {
    tsdn_status s = tsdn_config_new(c.config.empty() ? nullptr : c.config.c_str(), &cfg_);
    if (s != TSDN_OK) return s;
    for (const std::string& kv : c.sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos || eq == 0) {
        std::fprintf(stderr, "--set expects KEY=VALUE, got '%s'\n", kv.c_str());
        return TSDN_ERR_INVALID;
      }
      s = tsdn_config_set(cfg_, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str());
      if (s != TSDN_OK) return s;
    }
    if (c.seed >= 0) s = tsdn_config_set(cfg_, "seed", std::to_string(c.seed).c_str());
    if (s != TSDN_OK) return s;
    char* json = nullptr;
    s = tsdn_config_resolved_json(cfg_, &json);
    if (s == TSDN_OK && c.dry_run) std::printf("%s\n", json);
    tsdn_string_free(json);
    return s;
  }

  const tsdn_config* get() const { return cfg_; }

 private:
  tsdn_config* cfg_ = nullptr;
};

tsdn_extractor parse_extractor(const std::string& s) {
  if (s == "synthetic") return TSDN_EXTRACTOR_SYNTHETIC;
  if (s == "real") return TSDN_EXTRACTOR_REAL;
  return TSDN_EXTRACTOR_AUTO;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-step domain adaptive dehazing"};
  app.require_subcommand(1);

  Common common;
  std::string out_dir, checkpoint, split = "test", model = "network", extractor = "auto", input, output;

  auto* synth = app.add_subcommand("synth", "Generate the synthetic dataset");
  add_common(synth, common, false);
  synth->add_option("--out", out_dir, "Output directory (default: data_dir from the config)");

  auto* intra = app.add_subcommand("train-intra", "Train with intra-domain adaptation");
  add_common(intra, common, true);

  auto* mark = app.add_subcommand("mark-subset", "Select the lowest-loss variant of each scene");
  add_common(mark, common, true);

  auto* inter = app.add_subcommand("train-inter", "Train with inter-domain adaptation");
  add_common(inter, common, true);

  auto* eval = app.add_subcommand("eval", "Score a model on a dataset split");
  add_common(eval, common, true);
  eval->add_option("--checkpoint", checkpoint, "Checkpoint directory (default: latest)");
  eval->add_option("--split", split, "Dataset split")->check(CLI::IsMember({"train", "test", "real"}));
  eval->add_option("--model", model, "What to score")->check(CLI::IsMember({"network", "identity", "oracle"}));
  eval->add_option("--extractor", extractor, "Feature extractor")->check(CLI::IsMember({"auto", "synthetic", "real"}));

  auto* disp = app.add_subcommand("dispersion", "Per-epoch loss dispersion from the step log");
  disp->add_option("--run-dir", common.run_dir, "Run directory");

  auto* dehaze = app.add_subcommand("dehaze", "Dehaze one PNG");
  dehaze->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  dehaze->add_option("--input", input, "Hazy PNG")->required();
  dehaze->add_option("--output", output, "Output PNG")->required();
  dehaze->add_option("--extractor", extractor, "Feature extractor")->check(CLI::IsMember({"auto", "synthetic", "real"}));

  CLI11_PARSE(app, argc, argv);

  if (disp->parsed()) {
    size_t epochs = 0;
    const tsdn_status s = tsdn_dispersion(common.run_dir.c_str(), &epochs);
    if (s == TSDN_OK) std::printf("dispersion: %zu epochs\n", epochs);
    return report(s);
  }
  if (dehaze->parsed()) return report(tsdn_dehaze_file(checkpoint.c_str(), input.c_str(), output.c_str(),
                                                       parse_extractor(extractor)));

  Config cfg;
  if (const tsdn_status s = cfg.build(common); s != TSDN_OK) return report(s);
  if (common.dry_run) return 0;
  const char* run = common.run_dir.c_str();

  if (synth->parsed()) {
    tsdn_synth_summary sum{};
    const tsdn_status s = tsdn_synth(cfg.get(), out_dir.empty() ? nullptr : out_dir.c_str(), &sum);
    if (s == TSDN_OK) std::printf("synth: %zu scenes, %zu hazy images, %zu real images\n", sum.scenes, sum.hazy, sum.real);
    return report(s);
  }
  if (intra->parsed()) return report(tsdn_train_intra(cfg.get(), run));
  if (mark->parsed()) {
    size_t n = 0;
    const tsdn_status s = tsdn_mark_subset(cfg.get(), run, &n);
    if (s == TSDN_OK) std::printf("subset: %zu scenes\n", n);
    return report(s);
  }
  if (inter->parsed()) return report(tsdn_train_inter(cfg.get(), run));
  if (eval->parsed()) {
    const tsdn_eval_model m = model == "identity" ? TSDN_MODEL_IDENTITY
                              : model == "oracle" ? TSDN_MODEL_ORACLE
                                                  : TSDN_MODEL_NETWORK;
    tsdn_eval_summary sum{};
    const tsdn_status s = tsdn_eval(cfg.get(), run, checkpoint.empty() ? nullptr : checkpoint.c_str(), split.c_str(), m,
                                    parse_extractor(extractor), &sum);
    if (s == TSDN_OK)
      std::printf("eval %s: n=%zu psnr=%.3f ssim=%.4f hazy_psnr=%.3f l1_cv=%.4f\n", split.c_str(), sum.count,
                  sum.mean_psnr, sum.mean_ssim, sum.mean_hazy_psnr, sum.l1_cv);
    return report(s);
  }
  return 1;
}
