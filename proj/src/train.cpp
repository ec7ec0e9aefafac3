#include "train.hpp"

#include <cmath>
#include <fstream>

#include "archive.hpp"
#include "errors.hpp"

namespace tsdn {

namespace fs = std::filesystem;
using nlohmann::json;

std::size_t select_base(std::span<const double> losses) {
  require(losses.size() >= 2, ErrorCode::InvalidInput, "select_base needs at least two losses");
  std::size_t best = 0;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    if (std::isnan(losses[i])) fail(ErrorCode::Divergence, "NaN dehazing loss for variant " + std::to_string(i));
    if (losses[i] < losses[best]) best = i;
  }
  return best;
}

bool OptimalSubset::contains(const std::string& scene_id, std::size_t variant) const {
  const auto it = chosen.find(scene_id);
  return it != chosen.end() && it->second == variant;
}

json to_json(const OptimalSubset& s) {
  json scenes = json::array();
  for (const auto& [id, idx] : s.chosen) {
    json rec = {{"scene_id", id}, {"variant", idx}};
    if (const auto it = s.losses.find(id); it != s.losses.end()) rec["losses"] = it->second;
    scenes.push_back(rec);
  }
  return {{"version", 1}, {"scenes", scenes}};
}

OptimalSubset subset_from_json(const json& j) {
  OptimalSubset s;
  try {
    for (const json& rec : j.at("scenes")) {
      const auto id = rec.at("scene_id").get<std::string>();
      s.chosen[id] = rec.at("variant").get<std::size_t>();
      if (rec.contains("losses")) s.losses[id] = rec.at("losses").get<std::vector<double>>();
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::Schema, std::string("subset: ") + e.what());
  }
  return s;
}

void write_subset(const OptimalSubset& s, const fs::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out << to_json(s).dump(2) << '\n';
}

OptimalSubset read_subset(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::MissingPrerequisite, "missing optimal subset " + path.string());
  try {
    return subset_from_json(json::parse(in));
  } catch (const json::exception& e) {
    fail(ErrorCode::Schema, "subset " + path.string() + ": " + e.what());
  }
}

TrainState TrainState::create(const RunConfig& cfg) {
  cfg.validate();
  TrainState s;
  s.config = cfg;
  s.models = ModelBundle::create(cfg.network_config());
  s.rng = Rng::derive(cfg.seed, "train");
  s.dehazer_opt = std::make_unique<Sgd>(cfg.intra.dehazer);
  s.discriminator_opt = std::make_unique<Adam>(cfg.intra.discriminator);
  return s;
}

void TrainState::begin_inter() {
  phase = Phase::Inter;
  phase_epoch = 0;
  dehazer_opt = std::make_unique<Sgd>(config.inter.dehazer);
  discriminator_opt = std::make_unique<Adam>(config.inter.discriminator);
  // G' starts from the trained G.
  models.real_extractor = clone_extractor(models.extractor, models.real_extractor.name());
  models.extractor.set_trainable(false);
  models.reconstructor.set_trainable(config.inter.freeze_R_epochs == 0);
  models.real_extractor.set_trainable(true);
  models.inter_discriminator.set_trainable(true);
}

namespace {

void check_finite(const LossReport& r, std::size_t step) {
  for (double v : {r.intra, r.inter, r.sys, r.dc, r.tv, r.real, r.total})
    if (!std::isfinite(v)) fail(ErrorCode::Divergence, "non-finite loss at step " + std::to_string(step));
}

double row_norm(const Tensor& t, std::size_t row) {
  double s = 0.0;
  for (double v : t.slice0(row)) s += v * v;
  return std::sqrt(s);
}

void copy_row(const Tensor& src, std::size_t src_row, Tensor& dst, std::size_t dst_row, double scale) {
  const auto s = src.slice0(src_row);
  auto d = dst.slice0(dst_row);
  for (std::size_t i = 0; i < s.size(); ++i) d[i] = scale * s[i];
}

}  // namespace

LossReport intra_step(const SceneBatch& batch, TrainState& state, const LossWeights& weights,
                      StepDiagnostics* diag) {
  require(state.phase == Phase::Intra, ErrorCode::InvalidState, "intra_step outside the intra phase");
  const std::size_t b = batch.size(), n = batch.variants();
  require(b >= 1 && n >= 2, ErrorCode::InvalidInput, "intra_step needs groups of at least two variants");
  ModelBundle& m = state.models;
  const NetworkConfig& cfg = m.config;
  const double grl = state.config.intra.grl_lambda;

  std::vector<const Image*> hazy, clear;
  for (std::size_t g = 0; g < b; ++g)
    for (std::size_t v = 0; v < n; ++v) {
      hazy.push_back(&batch.hazy[g][v]);
      clear.push_back(&batch.clear[g]);
    }
  const Tensor x = to_tensor(hazy);
  const Tensor y = to_tensor(clear);

  for (Network* net : {&m.extractor, &m.reconstructor, &m.intra_discriminator}) net->zero_grad();

  const Tensor features = extract(m.extractor, x, cfg);
  const Tensor pred = reconstruct(m.reconstructor, features, cfg);
  const L1Result l1 = l1_dehaze(pred, y);

  LossReport report;
  report.sys = l1.mean;
  std::vector<std::size_t> base(b);
  for (std::size_t g = 0; g < b; ++g) {
    std::vector<double> v(l1.per_image.begin() + g * n, l1.per_image.begin() + (g + 1) * n);
    base[g] = select_base(v);
    report.per_variant.push_back(std::move(v));
  }

  // Discriminator sees every feature; the generator side of the base branch is detached.
  const Tensor scores = discriminate(m.intra_discriminator, grl_forward(features), cfg);
  Tensor score_grad(scores.shape());
  for (std::size_t g = 0; g < b; ++g) {
    const std::size_t base_row = g * n + base[g];
    std::vector<std::size_t> others;
    for (std::size_t v = 0; v < n; ++v)
      if (v != base[g]) others.push_back(g * n + v);
    const AdversarialTerm term = intra_adversarial(take0(scores, base_row, 1), take0(scores, others));
    report.intra += term.value;
    copy_row(term.grad_source, 0, score_grad, base_row, 1.0);
    for (std::size_t j = 0; j < others.size(); ++j) copy_row(term.grad_target, j, score_grad, others[j], 1.0);
  }
  const Tensor feat_grad_adv = m.intra_discriminator.backward(score_grad);

  Tensor to_extractor(features.shape());
  for (std::size_t g = 0; g < b; ++g)
    for (std::size_t v = 0; v < n; ++v) {
      const std::size_t row = g * n + v;
      if (v != base[g]) {
        const Tensor reversed = grl_backward(take0(feat_grad_adv, row, 1), grl);
        copy_row(reversed, 0, to_extractor, row, weights.lambda1);
      }
    }
  if (diag) {
    diag->adversarial_grad_norm.clear();
    diag->base_rows.clear();
    for (std::size_t r = 0; r < to_extractor.dim(0); ++r) diag->adversarial_grad_norm.push_back(row_norm(to_extractor, r));
    for (std::size_t g = 0; g < b; ++g) diag->base_rows.push_back(g * n + base[g]);
    diag->base_indices = base;
  }

  Tensor pred_grad = l1_dehaze_grad(pred, y);
  pred_grad *= weights.lambda3;
  Tensor feat_grad = m.reconstructor.backward(pred_grad);
  feat_grad += to_extractor;
  m.extractor.backward(feat_grad);

  report.total = total_intra(report, weights);
  check_finite(report, state.step);

  Network* dehazer[] = {&m.extractor, &m.reconstructor};
  state.dehazer_opt->step(dehazer);
  state.discriminator_opt->step(m.intra_discriminator);
  ++state.step;
  return report;
}

LossReport inter_step(const SceneBatch& syn, const RealBatch& real, TrainState& state, const LossWeights& weights,
                      StepDiagnostics* diag) {
  require(state.phase == Phase::Inter, ErrorCode::InvalidState, "inter_step outside the inter phase");
  const std::size_t b = syn.size();
  require(b >= 1 && real.images.size() == b, ErrorCode::InvalidInput, "inter_step needs equal-size batches");
  ModelBundle& m = state.models;
  const NetworkConfig& cfg = m.config;
  const double grl = state.config.inter.grl_lambda;
  const std::size_t patch = weights.patch_for(syn.clear.front().height);

  std::vector<const Image*> xs, ys, xr;
  for (std::size_t i = 0; i < b; ++i) {
    require(syn.hazy[i].size() == 1, ErrorCode::InvalidInput, "inter_step expects one marked variant per scene");
    xs.push_back(&syn.hazy[i].front());
    ys.push_back(&syn.clear[i]);
    xr.push_back(&real.images[i]);
  }
  const Tensor x_syn = to_tensor(xs), y_syn = to_tensor(ys), x_real = to_tensor(xr);

  for (Network* net : {&m.real_extractor, &m.reconstructor, &m.inter_discriminator}) net->zero_grad();

  // G is frozen for the whole phase; its features are constants here.
  const Tensor f_syn = extract(m.extractor, x_syn, cfg);
  const Tensor f_real = extract(m.real_extractor, x_real, cfg);

  LossReport report;
  const Tensor scores = discriminate(m.inter_discriminator, concat0(f_syn, grl_forward(f_real)), cfg);
  const AdversarialTerm term = inter_adversarial(take0(scores, 0, b), take0(scores, b, b));
  report.inter = term.value;
  const Tensor feat_grad_adv = m.inter_discriminator.backward(concat0(term.grad_source, term.grad_target));
  Tensor real_adv = grl_backward(take0(feat_grad_adv, b, b), grl);
  real_adv *= weights.lambda2;

  const Tensor pred = reconstruct(m.reconstructor, concat0(f_syn, f_real), cfg);
  const Tensor pred_syn = take0(pred, 0, b), pred_real = take0(pred, b, b);
  report.sys = l1_dehaze(pred_syn, y_syn).mean;
  report.dc = dc_loss(pred_real, patch);
  report.tv = tv_loss(pred_real);
  report.real = real_loss(pred_real, weights, patch);
  report.total = total_inter(report, weights);
  check_finite(report, state.step);

  Tensor g_syn = l1_dehaze_grad(pred_syn, y_syn);
  g_syn *= weights.lambda3;
  Tensor g_real = real_loss_grad(pred_real, weights, patch);
  g_real *= weights.lambda4;
  const Tensor feat_grad = m.reconstructor.backward(concat0(g_syn, g_real));
  Tensor real_grad = take0(feat_grad, b, b);
  real_grad += real_adv;
  m.real_extractor.backward(real_grad);

  if (diag) {
    diag->adversarial_grad_norm.clear();
    for (std::size_t r = 0; r < b; ++r) diag->adversarial_grad_norm.push_back(row_norm(real_adv, r));
  }

  // G' is outside the objective when both of its loss paths are switched off.
  std::vector<Network*> dehazer{&m.reconstructor};
  if (weights.lambda2 > 0.0 || weights.lambda4 > 0.0) dehazer.push_back(&m.real_extractor);
  state.dehazer_opt->step(dehazer);
  state.discriminator_opt->step(m.inter_discriminator);
  ++state.step;
  return report;
}

json to_json(const StepRecord& r) {
  json j = {{"phase", to_string(r.phase)},
            {"epoch", r.epoch},
            {"global_epoch", r.global_epoch},
            {"step", r.step},
            {"scene_ids", r.scene_ids},
            {"L_intra", r.report.intra},
            {"L_inter", r.report.inter},
            {"L_sys", r.report.sys},
            {"L_dc", r.report.dc},
            {"L_tv", r.report.tv},
            {"L_real", r.report.real},
            {"total", r.report.total}};
  if (r.phase == Phase::Intra) {
    j["per_variant"] = r.report.per_variant;
    j["base"] = r.base_indices;
  } else {
    j["syn_variants"] = r.syn_variants;
    j["real_indices"] = r.real_indices;
    j["R_trainable"] = r.r_trainable;
  }
  return j;
}

StepRecord step_record_from_json(const json& j) {
  StepRecord r;
  try {
    r.phase = phase_from_string(j.at("phase").get<std::string>());
    r.epoch = j.at("epoch").get<std::size_t>();
    r.global_epoch = j.value("global_epoch", r.epoch);
    r.step = j.value("step", std::size_t{0});
    r.scene_ids = j.at("scene_ids").get<std::vector<std::string>>();
    r.report.intra = j.value("L_intra", 0.0);
    r.report.inter = j.value("L_inter", 0.0);
    r.report.sys = j.value("L_sys", 0.0);
    r.report.dc = j.value("L_dc", 0.0);
    r.report.tv = j.value("L_tv", 0.0);
    r.report.real = j.value("L_real", 0.0);
    r.report.total = j.value("total", 0.0);
    if (j.contains("per_variant")) r.report.per_variant = j.at("per_variant").get<std::vector<std::vector<double>>>();
    if (j.contains("base")) r.base_indices = j.at("base").get<std::vector<std::size_t>>();
    if (j.contains("syn_variants")) r.syn_variants = j.at("syn_variants").get<std::vector<std::size_t>>();
    if (j.contains("real_indices")) r.real_indices = j.at("real_indices").get<std::vector<std::size_t>>();
    r.r_trainable = j.value("R_trainable", true);
  } catch (const json::exception& e) {
    fail(ErrorCode::Schema, std::string("step record: ") + e.what());
  }
  return r;
}

void run_intra_phase(TrainState& state, const LoadedDataset& data, const PhaseHooks& hooks) {
  require(state.phase == Phase::Intra, ErrorCode::InvalidState, "run_intra_phase: state is not in the intra phase");
  const RunConfig& cfg = state.config;
  const BatchOptions opts = cfg.batch_options();
  while (state.phase_epoch < cfg.intra.epochs) {
    const std::size_t epoch = state.phase_epoch + 1;
    SceneBatchStream stream(data, opts, epoch);
    std::map<std::string, std::vector<double>> variant_losses;
    double adv_sum = 0.0, sys_sum = 0.0;
    std::size_t batches = 0;
    while (auto batch = stream.next()) {
      StepDiagnostics diag;
      const LossReport rep = intra_step(*batch, state, cfg.loss, &diag);
      adv_sum += rep.intra;
      sys_sum += rep.sys;
      ++batches;
      for (std::size_t g = 0; g < batch->size(); ++g) variant_losses[batch->scene_ids[g]] = rep.per_variant[g];
      if (hooks.on_step) {
        StepRecord rec;
        rec.phase = Phase::Intra;
        rec.epoch = epoch;
        rec.global_epoch = state.epoch + 1;
        rec.step = state.step;
        rec.scene_ids = batch->scene_ids;
        rec.base_indices = diag.base_indices;
        rec.report = rep;
        hooks.on_step(rec);
      }
    }
    state.last_epoch_adv_sum = adv_sum;
    state.last_epoch_sys_mean = batches ? sys_sum / double(batches) : 0.0;
    state.variant_loss_history.push_back(std::move(variant_losses));
    ++state.phase_epoch;
    ++state.epoch;
    if (hooks.on_epoch_end) hooks.on_epoch_end(state);
  }
}

void run_inter_phase(TrainState& state, const LoadedDataset& data, const OptimalSubset& subset,
                     const PhaseHooks& hooks) {
  require(state.phase == Phase::Inter, ErrorCode::InvalidState, "run_inter_phase: call begin_inter first");
  const RunConfig& cfg = state.config;
  const BatchOptions opts = cfg.batch_options();
  while (state.phase_epoch < cfg.inter.epochs) {
    const std::size_t epoch = state.phase_epoch + 1;
    state.models.extractor.set_trainable(false);
    state.models.reconstructor.set_trainable(state.phase_epoch >= cfg.inter.freeze_R_epochs);
    PairedBatchStream stream(data, subset.chosen, opts, epoch);
    double adv_sum = 0.0, sys_sum = 0.0;
    std::size_t batches = 0;
    while (auto pair = stream.next()) {
      const auto& [syn, real] = *pair;
      for (std::size_t i = 0; i < syn.size(); ++i)
        require(subset.contains(syn.scene_ids[i], syn.variant_indices[i].front()), ErrorCode::InvalidState,
                "inter phase drew a sample outside the optimal subset");
      const LossReport rep = inter_step(syn, real, state, cfg.loss);
      adv_sum += rep.inter;
      sys_sum += rep.sys;
      ++batches;
      if (hooks.on_step) {
        StepRecord rec;
        rec.phase = Phase::Inter;
        rec.epoch = epoch;
        rec.global_epoch = state.epoch + 1;
        rec.step = state.step;
        rec.scene_ids = syn.scene_ids;
        for (const auto& v : syn.variant_indices) rec.syn_variants.push_back(v.front());
        rec.real_indices = real.indices;
        rec.report = rep;
        rec.r_trainable = state.models.reconstructor.trainable();
        hooks.on_step(rec);
      }
    }
    state.last_epoch_adv_sum = adv_sum;
    state.last_epoch_sys_mean = batches ? sys_sum / double(batches) : 0.0;
    ++state.phase_epoch;
    ++state.epoch;
    if (hooks.on_epoch_end) hooks.on_epoch_end(state);
  }
}

OptimalSubset mark_optimal_subset(TrainState& state, const LoadedDataset& data, std::size_t crop) {
  ModelBundle& m = state.models;
  OptimalSubset subset;
  for (const LoadedScene& s : data.scenes) {
    const std::size_t size = crop == 0 ? std::min(s.clear.height, s.clear.width) : crop;
    std::vector<Image> hazy;
    for (const Image& h : s.hazy) hazy.push_back(center_crop(h, size, size));
    const Image clear = center_crop(s.clear, size, size);
    std::vector<const Image*> xs, ys;
    for (const Image& h : hazy) {
      xs.push_back(&h);
      ys.push_back(&clear);
    }
    const Tensor pred = reconstruct(m.reconstructor, extract(m.extractor, to_tensor(xs), m.config), m.config);
    const L1Result l1 = l1_dehaze(pred, to_tensor(ys));
    subset.chosen[s.scene_id] = select_base(l1.per_image);
    subset.losses[s.scene_id] = l1.per_image;
  }
  return subset;
}

Image dehaze_image(ModelBundle& models, const Image& hazy, bool use_real_extractor) {
  require(hazy.channels == 3, ErrorCode::InvalidInput, "dehaze expects an RGB image");
  const std::size_t s = models.config.downsample;
  const std::size_t h = (hazy.height + s - 1) / s * s, w = (hazy.width + s - 1) / s * s;
  Image padded(h, w, 3);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        padded.at(y, x, c) = hazy.at(std::min(y, hazy.height - 1), std::min(x, hazy.width - 1), c);
  Network& g = use_real_extractor ? models.real_extractor : models.extractor;
  const Tensor pred = reconstruct(models.reconstructor, extract(g, to_tensor(padded), models.config), models.config);
  return crop(from_tensor(pred, 0), 0, 0, hazy.height, hazy.width, false);
}

namespace {

std::vector<NamedTensor> network_entries(const Network& net) {
  std::vector<NamedTensor> out;
  for (const nn::Parameter* p : net.parameters()) out.push_back({p->name, p->value});
  return out;
}

void load_network(Network& net, const fs::path& file) {
  const std::vector<NamedTensor> entries = read_archive(file);
  auto& params = net.parameters();
  require(entries.size() == params.size(), ErrorCode::Schema,
          "checkpoint " + file.string() + " has " + std::to_string(entries.size()) + " tensors, expected " +
              std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(entries[i].name == params[i]->name && entries[i].tensor.same_shape(params[i]->value),
            ErrorCode::Schema, "checkpoint " + file.string() + ": tensor " + entries[i].name + " does not match " +
                                   params[i]->name + " " + params[i]->value.shape_str());
    params[i]->value = entries[i].tensor;
    params[i]->grad = Tensor(params[i]->value.shape());
  }
}

}  // namespace

void save_checkpoint(const TrainState& state, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::Io, "cannot create checkpoint directory " + dir.string() + ": " + ec.message());
  auto& models = const_cast<ModelBundle&>(state.models);
  json trainable = json::object();
  for (Network* n : models.networks()) {
    write_archive(dir / (n->name() + ".bin"), network_entries(*n));
    trainable[n->name()] = n->trainable();
  }
  write_archive(dir / "opt_dehazer.bin", state.dehazer_opt->state());
  write_archive(dir / "opt_discriminator.bin", state.discriminator_opt->state());
  const std::string rng_state = state.rng.state();
  {
    std::ofstream out(dir / "rng_state.txt");
    out << rng_state << '\n';
    if (!out) fail(ErrorCode::Io, "cannot write rng state in " + dir.string());
  }
  json history = json::array();
  for (const auto& epoch : state.variant_loss_history) history.push_back(epoch);
  const json meta = {{"version", kCheckpointVersion},
                     {"phase", to_string(state.phase)},
                     {"epoch", state.epoch},
                     {"phase_epoch", state.phase_epoch},
                     {"step", state.step},
                     {"config", to_json(state.config)},
                     {"rng_state_digest", digest_hex(rng_state)},
                     {"trainable", trainable},
                     {"last_epoch_adv_sum", state.last_epoch_adv_sum},
                     {"last_epoch_sys_mean", state.last_epoch_sys_mean},
                     {"variant_loss_history", history}};
  std::ofstream out(dir / "checkpoint.json");
  out << meta.dump(2) << '\n';
  if (!out) fail(ErrorCode::Io, "cannot write " + (dir / "checkpoint.json").string());
}

json read_checkpoint_meta(const fs::path& dir) {
  const fs::path file = dir / "checkpoint.json";
  std::ifstream in(file);
  if (!in) fail(ErrorCode::MissingPrerequisite, "missing checkpoint " + file.string());
  json meta;
  try {
    meta = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::Schema, "corrupt checkpoint metadata " + file.string() + ": " + e.what());
  }
  const int version = meta.value("version", -1);
  if (version != kCheckpointVersion)
    fail(ErrorCode::Version, "checkpoint version " + std::to_string(version) + " unsupported (expected " +
                                 std::to_string(kCheckpointVersion) + "): " + file.string());
  return meta;
}

TrainState load_checkpoint(const fs::path& dir) {
  const json meta = read_checkpoint_meta(dir);
  TrainState s;
  try {
    s = TrainState::create(run_config_from_json(meta.at("config")));
    s.phase = phase_from_string(meta.at("phase").get<std::string>());
    s.epoch = meta.at("epoch").get<std::size_t>();
    s.phase_epoch = meta.at("phase_epoch").get<std::size_t>();
    s.step = meta.at("step").get<std::size_t>();
    s.last_epoch_adv_sum = meta.value("last_epoch_adv_sum", 0.0);
    s.last_epoch_sys_mean = meta.value("last_epoch_sys_mean", 0.0);
    for (const json& e : meta.value("variant_loss_history", json::array()))
      s.variant_loss_history.push_back(e.get<std::map<std::string, std::vector<double>>>());
  } catch (const json::exception& e) {
    fail(ErrorCode::Schema, "checkpoint " + dir.string() + ": " + e.what());
  }
  if (s.phase == Phase::Inter) {
    const std::size_t done = s.phase_epoch;
    s.begin_inter();
    s.phase_epoch = done;
  }
  for (Network* n : s.models.networks()) {
    load_network(*n, dir / (n->name() + ".bin"));
    const json& t = meta.at("trainable");
    if (t.contains(n->name())) n->set_trainable(t.at(n->name()).get<bool>());
  }
  s.dehazer_opt->load_state(read_archive(dir / "opt_dehazer.bin"));
  s.discriminator_opt->load_state(read_archive(dir / "opt_discriminator.bin"));
  std::ifstream rng_in(dir / "rng_state.txt");
  std::string rng_state;
  std::getline(rng_in, rng_state);
  if (digest_hex(rng_state) != meta.value("rng_state_digest", std::string{}))
    fail(ErrorCode::Schema, "checkpoint " + dir.string() + ": rng state digest mismatch");
  s.rng.set_state(rng_state);
  return s;
}

}  // namespace tsdn
