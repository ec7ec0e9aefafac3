#include <tsdn/tsdn.h>

#include <cmath>
#include <cstdlib>
#include <memory>
#include <cstring>
#include <exception>
#include <string>

#include "config.hpp"
#include "errors.hpp"
#include "pipeline.hpp"
#include "train.hpp"

struct tsdn_config {
  tsdn::ConfigBuilder builder;
};

struct tsdn_model {
  explicit tsdn_model(tsdn::TrainState s) : state(std::move(s)) {}
  tsdn::TrainState state;
};

namespace {

thread_local std::string g_last_error;

tsdn_status to_status(tsdn::ErrorCode code) {
  using tsdn::ErrorCode;
  switch (code) {
    case ErrorCode::Io: return TSDN_ERR_IO;
    case ErrorCode::MissingPrerequisite: return TSDN_ERR_MISSING_PREREQUISITE;
    case ErrorCode::Divergence: return TSDN_ERR_DIVERGENCE;
    case ErrorCode::Schema: return TSDN_ERR_SCHEMA;
    case ErrorCode::Version: return TSDN_ERR_VERSION;
    case ErrorCode::Shape: return TSDN_ERR_SHAPE;
    case ErrorCode::InvalidInput:
    case ErrorCode::InvalidConfig:
    case ErrorCode::InvalidState: return TSDN_ERR_INVALID;
  }
  return TSDN_ERR_INTERNAL;
}

template <typename F>
tsdn_status guarded(F&& f) {
  g_last_error.clear();
  try {
    f();
    return TSDN_OK;
  } catch (const tsdn::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = e.what();
  } catch (...) {
    g_last_error = "unknown error";
  }
  return TSDN_ERR_INTERNAL;
}

void require_arg(const void* p, const char* name) {
  if (!p) tsdn::fail(tsdn::ErrorCode::InvalidInput, std::string(name) + " must not be NULL");
}

tsdn::ExtractorChoice to_choice(tsdn_extractor e) {
  switch (e) {
    case TSDN_EXTRACTOR_SYNTHETIC: return tsdn::ExtractorChoice::Synthetic;
    case TSDN_EXTRACTOR_REAL: return tsdn::ExtractorChoice::Real;
    default: return tsdn::ExtractorChoice::Auto;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* tsdn_last_error(void) { return g_last_error.c_str(); }

const char* tsdn_status_name(tsdn_status status) {
  switch (status) {
    case TSDN_OK: return "ok";
    case TSDN_ERR_INVALID: return "invalid argument";
    case TSDN_ERR_IO: return "i/o error";
    case TSDN_ERR_MISSING_PREREQUISITE: return "missing prerequisite";
    case TSDN_ERR_DIVERGENCE: return "training diverged";
    case TSDN_ERR_SCHEMA: return "schema error";
    case TSDN_ERR_VERSION: return "version mismatch";
    case TSDN_ERR_SHAPE: return "shape error";
    case TSDN_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

tsdn_status tsdn_config_new(const char* path, tsdn_config** out) {
  return guarded([&] {
    require_arg(out, "out");
    *out = nullptr;
    auto cfg = std::make_unique<tsdn_config>();
    if (path && *path) cfg->builder.load_file(path);
    *out = cfg.release();
  });
}

tsdn_status tsdn_config_set(tsdn_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    require_arg(cfg, "cfg");
    require_arg(key, "key");
    require_arg(value, "value");
    cfg->builder.set(key, value);
  });
}

tsdn_status tsdn_config_resolved_json(const tsdn_config* cfg, char** out_json) {
  return guarded([&] {
    require_arg(cfg, "cfg");
    require_arg(out_json, "out_json");
    *out_json = dup_string(tsdn::to_json(cfg->builder.resolve()).dump(2));
  });
}

void tsdn_config_free(tsdn_config* cfg) { delete cfg; }
void tsdn_string_free(char* s) { std::free(s); }

tsdn_status tsdn_synth(const tsdn_config* cfg, const char* out_dir, tsdn_synth_summary* out) {
  return guarded([&] {
    require_arg(cfg, "cfg");
    const tsdn::RunConfig rc = cfg->builder.resolve();
    const tsdn::SynthResult r = tsdn::run_synth(rc, out_dir && *out_dir ? out_dir : rc.data_dir);
    if (out) *out = {r.scenes, r.hazy, r.real};
  });
}

tsdn_status tsdn_train_intra(const tsdn_config* cfg, const char* run_dir) {
  return guarded([&] {
    require_arg(cfg, "cfg");
    require_arg(run_dir, "run_dir");
    tsdn::run_train_intra(cfg->builder.resolve(), {run_dir});
  });
}

tsdn_status tsdn_mark_subset(const tsdn_config* cfg, const char* run_dir, size_t* scenes_marked) {
  return guarded([&] {
    require_arg(cfg, "cfg");
    require_arg(run_dir, "run_dir");
    const tsdn::OptimalSubset s = tsdn::run_mark_subset(cfg->builder.resolve(), {run_dir});
    if (scenes_marked) *scenes_marked = s.chosen.size();
  });
}

tsdn_status tsdn_train_inter(const tsdn_config* cfg, const char* run_dir) {
  return guarded([&] {
    require_arg(cfg, "cfg");
    require_arg(run_dir, "run_dir");
    tsdn::run_train_inter(cfg->builder.resolve(), {run_dir});
  });
}

tsdn_status tsdn_eval(const tsdn_config* cfg, const char* run_dir, const char* checkpoint, const char* split,
                      tsdn_eval_model model, tsdn_extractor extractor, tsdn_eval_summary* out) {
  return guarded([&] {
    require_arg(cfg, "cfg");
    require_arg(run_dir, "run_dir");
    tsdn::EvalRequest req;
    if (split && *split) req.split = split;
    req.model = model == TSDN_MODEL_IDENTITY ? tsdn::EvalModel::Identity
                : model == TSDN_MODEL_ORACLE ? tsdn::EvalModel::Oracle
                                             : tsdn::EvalModel::Network;
    req.extractor = to_choice(extractor);
    if (checkpoint && *checkpoint) req.checkpoint = checkpoint;
    const tsdn::EvalSummary s = tsdn::run_eval(cfg->builder.resolve(), {run_dir}, req);
    if (out)
      *out = {s.records.size(), s.mean_psnr, s.mean_ssim, s.mean_hazy_psnr, s.l1_dispersion.cv.value_or(-1.0)};
  });
}

tsdn_status tsdn_dispersion(const char* run_dir, size_t* epochs) {
  return guarded([&] {
    require_arg(run_dir, "run_dir");
    const auto rows = tsdn::run_dispersion({run_dir});
    if (epochs) *epochs = rows.size();
  });
}

tsdn_status tsdn_dehaze_file(const char* checkpoint, const char* image_in, const char* image_out,
                             tsdn_extractor extractor) {
  return guarded([&] {
    require_arg(checkpoint, "checkpoint");
    require_arg(image_in, "image_in");
    require_arg(image_out, "image_out");
    tsdn::run_dehaze(checkpoint, image_in, image_out, to_choice(extractor));
  });
}

tsdn_status tsdn_model_load(const char* checkpoint, tsdn_model** out) {
  return guarded([&] {
    require_arg(checkpoint, "checkpoint");
    require_arg(out, "out");
    *out = nullptr;
    *out = new tsdn_model(tsdn::load_checkpoint(checkpoint));
  });
}

tsdn_status tsdn_model_dehaze(tsdn_model* model, const float* rgb_in, size_t height, size_t width,
                              tsdn_extractor extractor, float* rgb_out) {
  return guarded([&] {
    require_arg(model, "model");
    require_arg(rgb_in, "rgb_in");
    require_arg(rgb_out, "rgb_out");
    if (height == 0 || width == 0) tsdn::fail(tsdn::ErrorCode::InvalidInput, "empty image");
    tsdn::Image img(height, width, 3);
    for (std::size_t i = 0; i < img.size(); ++i) img.pixels[i] = rgb_in[i];
    const bool use_real = extractor == TSDN_EXTRACTOR_REAL ||
                          (extractor == TSDN_EXTRACTOR_AUTO && model->state.phase == tsdn::Phase::Inter);
    const tsdn::Image out = tsdn::dehaze_image(model->state.models, img, use_real);
    for (std::size_t i = 0; i < out.size(); ++i) rgb_out[i] = static_cast<float>(out.pixels[i]);
  });
}

void tsdn_model_free(tsdn_model* model) { delete model; }

}  // extern "C"
