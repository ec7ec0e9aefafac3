#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>

#include "data.hpp"
#include "doctest.h"
#include "errors.hpp"
#include "hazegen.hpp"
#include "support.hpp"
#include "train.hpp"

using namespace tsdn;

namespace {

RunConfig tiny_run(std::size_t scenes = 4, std::size_t real = 4) {
  RunConfig cfg;
  cfg.seed = 7;
  cfg.synth.height = cfg.synth.width = 16;
  cfg.synth.scenes = scenes;
  cfg.synth.test_scenes = 1;
  cfg.synth.real_images = real;
  cfg.synth.seed = 3;
  cfg.data.crop = 16;
  cfg.net.base_channels = 4;
  cfg.net.num_residual_blocks = 1;
  cfg.net.downsample = 2;
  cfg.net.feature_channels = 4;
  cfg.net.discriminator_channels = 4;
  cfg.intra.epochs = 2;
  cfg.intra.dehazer.lr = 0.01;
  cfg.inter.epochs = 4;
  cfg.inter.freeze_R_epochs = 3;
  cfg.inter.dehazer.lr = 0.01;
  return cfg;
}

struct Fixture {
  test::TempDir dir{"train"};
  RunConfig cfg;
  LoadedDataset data;

  explicit Fixture(RunConfig c) : cfg(std::move(c)) {
    synth_dataset(cfg.synth, dir.path());
    data = load_dataset(load_manifest(dir / "manifest.json"));
  }

  SceneBatch first_batch(std::size_t epoch = 1) const {
    SceneBatchStream s(data, cfg.batch_options(), epoch);
    return *s.next();
  }
};

std::vector<Tensor> params_of(const Network& net) {
  std::vector<Tensor> v;
  for (const nn::Parameter* p : net.parameters()) v.push_back(p->value);
  return v;
}

double max_param_delta(const Network& a, const Network& b) {
  double d = 0.0;
  const auto pa = a.parameters(), pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) d = std::max(d, max_abs_diff(pa[i]->value, pb[i]->value));
  return d;
}

}  // namespace

TEST_CASE("select_base: argmin with lowest-index ties") {
  const std::vector<double> a{0.5, 0.3, 0.3, 0.9}, b{0.2, 0.4, 0.6, 0.8};
  CHECK(select_base(a) == 1);
  CHECK(select_base(b) == 0);
  const std::vector<double> v{0.7, 0.1, 0.4, 0.2};
  const std::size_t perm[] = {3, 0, 2, 1};
  std::vector<double> pv;
  for (std::size_t i : perm) pv.push_back(v[i]);
  CHECK(perm[select_base(pv)] == select_base(v));
  const std::vector<double> bad{0.1, std::nan(""), 0.2};
  try {
    select_base(bad);
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Divergence);
  }
}

TEST_CASE("intra step: parameters move and the base branch is an anchor") {
  Fixture f(tiny_run());
  TrainState st = TrainState::create(f.cfg);
  const SceneBatch batch = f.first_batch();
  const auto g0 = params_of(st.models.extractor);
  const auto r0 = params_of(st.models.reconstructor);
  const auto d0 = params_of(st.models.intra_discriminator);
  StepDiagnostics diag;
  const LossReport rep = intra_step(batch, st, f.cfg.loss, &diag);
  CHECK(params_of(st.models.extractor) != g0);
  CHECK(params_of(st.models.reconstructor) != r0);
  CHECK(params_of(st.models.intra_discriminator) != d0);
  REQUIRE(rep.per_variant.size() == 1);
  CHECK(diag.base_indices[0] == select_base(rep.per_variant[0]));
  for (std::size_t row = 0; row < diag.adversarial_grad_norm.size(); ++row) {
    if (row == diag.base_rows[0])
      CHECK(diag.adversarial_grad_norm[row] == 0.0);
    else
      CHECK(diag.adversarial_grad_norm[row] > 0.0);
  }
  CHECK(rep.total == doctest::Approx(total_intra(rep, f.cfg.loss)).epsilon(1e-12));
  // Two identical steps differ because the parameters moved.
  const LossReport again = intra_step(batch, st, f.cfg.loss);
  CHECK(again.sys != rep.sys);
}

TEST_CASE("intra step: lambda1 = 0 decouples the generator from the discriminator") {
  RunConfig cfg = tiny_run();
  cfg.loss.lambda1 = 0.0;
  Fixture f(cfg);
  TrainState st = TrainState::create(f.cfg);
  const auto d0 = params_of(st.models.intra_discriminator);
  StepDiagnostics diag;
  intra_step(f.first_batch(), st, f.cfg.loss, &diag);
  CHECK(params_of(st.models.intra_discriminator) != d0);
  for (double n : diag.adversarial_grad_norm) CHECK(n == 0.0);
}

TEST_CASE("intra step: the discriminator learns base = 1, others = 0") {
  RunConfig cfg = tiny_run();
  cfg.loss.lambda1 = 0.0;
  cfg.intra.discriminator.lr = 1e-2;
  Fixture f(cfg);
  TrainState st = TrainState::create(f.cfg);
  // With the dehazer frozen the base choice cannot move, so only D learns.
  st.models.extractor.set_trainable(false);
  st.models.reconstructor.set_trainable(false);
  const SceneBatch batch = f.first_batch();
  StepDiagnostics diag;
  for (int i = 0; i < 60; ++i) intra_step(batch, st, f.cfg.loss, &diag);
  std::vector<const Image*> hazy;
  for (const Image& h : batch.hazy[0]) hazy.push_back(&h);
  const Tensor feats = extract(st.models.extractor, to_tensor(hazy), st.models.config);
  const Tensor s = discriminate(st.models.intra_discriminator, feats, st.models.config);
  const std::size_t per = s.stride0();
  for (std::size_t v = 0; v < batch.variants(); ++v) {
    double mean = 0.0;
    for (double x : s.slice0(v)) mean += x / double(per);
    if (v == diag.base_indices[0])
      CHECK(mean > 0.5);
    else
      CHECK(mean < 0.5);
  }
}

TEST_CASE("intra step: repeated steps on one scene reduce the reconstruction loss") {
  RunConfig cfg = tiny_run(1, 1);
  cfg.synth.variants = 2;
  cfg.data.flip = false;
  Fixture f(cfg);
  TrainState st = TrainState::create(f.cfg);
  const SceneBatch batch = f.first_batch();
  const double initial = intra_step(batch, st, f.cfg.loss).sys;
  double last = initial;
  for (int i = 0; i < 200; ++i) last = intra_step(batch, st, f.cfg.loss).sys;
  CHECK(last < initial);
}

TEST_CASE("intra phase: one epoch visits every scene once and accumulates the epoch sums") {
  RunConfig cfg = tiny_run(4, 2);
  cfg.intra.epochs = 1;
  Fixture f(cfg);
  TrainState st = TrainState::create(f.cfg);
  std::vector<StepRecord> steps;
  run_intra_phase(st, f.data, PhaseHooks{[&](const StepRecord& r) { steps.push_back(r); }, {}});
  CHECK(steps.size() == 4);
  double adv = 0.0;
  for (const StepRecord& r : steps) adv += r.report.intra;
  CHECK(st.last_epoch_adv_sum == doctest::Approx(adv).epsilon(1e-12));
  REQUIRE(st.variant_loss_history.size() == 1);
  CHECK(st.variant_loss_history[0].size() == 4);
  CHECK(st.epoch == 1);
  CHECK(st.phase_epoch == 1);
}

TEST_CASE("checkpoint: reload reproduces forward outputs and the next step") {
  Fixture f(tiny_run());
  TrainState st = TrainState::create(f.cfg);
  run_intra_phase(st, f.data);
  save_checkpoint(st, f.dir / "ckpt");
  TrainState back = load_checkpoint(f.dir / "ckpt");
  CHECK(read_checkpoint_meta(f.dir / "ckpt").at("phase") == "intra");
  CHECK(back.epoch == st.epoch);
  CHECK(back.rng.state() == st.rng.state());

  const SceneBatch batch = f.first_batch(9);
  std::vector<const Image*> hazy;
  for (const Image& h : batch.hazy[0]) hazy.push_back(&h);
  const Tensor x = to_tensor(hazy);
  CHECK(extract(st.models.extractor, x, st.models.config) == extract(back.models.extractor, x, back.models.config));

  intra_step(batch, st, f.cfg.loss);
  intra_step(batch, back, f.cfg.loss);
  for (const char* name : {"G", "R", "D_intra"})
    CHECK(max_param_delta(st.models.by_name(name), back.models.by_name(name)) < 1e-7);
}

TEST_CASE("checkpoint: resuming mid-phase gives the same loss trajectory") {
  RunConfig cfg = tiny_run();
  cfg.intra.epochs = 3;
  Fixture f(cfg);
  std::vector<double> straight, resumed;
  {
    TrainState st = TrainState::create(f.cfg);
    run_intra_phase(st, f.data, PhaseHooks{[&](const StepRecord& r) { straight.push_back(r.report.sys); }, {}});
  }
  {
    RunConfig one = f.cfg;
    one.intra.epochs = 1;
    TrainState st = TrainState::create(one);
    run_intra_phase(st, f.data, PhaseHooks{[&](const StepRecord& r) { resumed.push_back(r.report.sys); }, {}});
    save_checkpoint(st, f.dir / "mid");
    TrainState back = load_checkpoint(f.dir / "mid");
    back.config.intra.epochs = 3;
    run_intra_phase(back, f.data, PhaseHooks{[&](const StepRecord& r) { resumed.push_back(r.report.sys); }, {}});
  }
  REQUIRE(straight.size() == resumed.size());
  for (std::size_t i = 0; i < straight.size(); ++i) CHECK(std::abs(straight[i] - resumed[i]) < 1e-12);
}

TEST_CASE("checkpoint: version mismatch and missing directory") {
  Fixture f(tiny_run(2, 1));
  TrainState st = TrainState::create(f.cfg);
  save_checkpoint(st, f.dir / "ck");
  nlohmann::json meta = read_checkpoint_meta(f.dir / "ck");
  meta["version"] = kCheckpointVersion + 1;
  std::ofstream(f.dir / "ck" / "checkpoint.json") << meta.dump();
  try {
    load_checkpoint(f.dir / "ck");
    FAIL("expected a version error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Version);
  }
  try {
    load_checkpoint(f.dir / "absent");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingPrerequisite);
  }
}

TEST_CASE("optimal subset: total, deterministic and JSON round trip") {
  Fixture f(tiny_run(5, 2));
  TrainState st = TrainState::create(f.cfg);
  run_intra_phase(st, f.data);
  const OptimalSubset a = mark_optimal_subset(st, f.data);
  const OptimalSubset b = mark_optimal_subset(st, f.data);
  CHECK(a.chosen.size() == 5);
  CHECK(a.chosen == b.chosen);
  CHECK(a.losses == b.losses);
  for (const auto& [id, v] : a.chosen) {
    CHECK(v < 4);
    CHECK(v == select_base(a.losses.at(id)));
    CHECK(a.contains(id, v));
  }
  write_subset(a, f.dir / "subset.json");
  const OptimalSubset c = read_subset(f.dir / "subset.json");
  CHECK(c.chosen == a.chosen);
  try {
    read_subset(f.dir / "none.json");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingPrerequisite);
  }
}

TEST_CASE("begin_inter copies the trained G into G'") {
  Fixture f(tiny_run(2, 2));
  TrainState st = TrainState::create(f.cfg);
  run_intra_phase(st, f.data);
  CHECK(params_of(st.models.real_extractor) != params_of(st.models.extractor));
  st.begin_inter();
  CHECK(params_of(st.models.real_extractor) == params_of(st.models.extractor));
  CHECK(st.models.real_extractor.name() == "Gp");
  CHECK(st.models.real_extractor.trainable());
  CHECK_FALSE(st.models.extractor.trainable());
  Rng rng(8);
  const Image img = test::random_image(rng, 16, 16);
  const Image a = dehaze_image(st.models, img, false), b = dehaze_image(st.models, img, true);
  CHECK(a.pixels == b.pixels);
}

TEST_CASE("inter phase: G frozen, R frozen then released, subset respected") {
  Fixture f(tiny_run(4, 3));
  TrainState st = TrainState::create(f.cfg);
  run_intra_phase(st, f.data);
  const OptimalSubset subset = mark_optimal_subset(st, f.data);
  st.begin_inter();
  const auto g0 = params_of(st.models.extractor);
  auto r_prev = params_of(st.models.reconstructor);
  const auto gp0 = params_of(st.models.real_extractor);
  std::vector<std::size_t> r_changed_epochs;
  std::size_t pairs = 0;
  PhaseHooks hooks;
  hooks.on_step = [&](const StepRecord& r) {
    ++pairs;
    for (std::size_t i = 0; i < r.scene_ids.size(); ++i) CHECK(subset.contains(r.scene_ids[i], r.syn_variants[i]));
  };
  hooks.on_epoch_end = [&](const TrainState& s) {
    const auto now = params_of(s.models.reconstructor);
    if (now != r_prev) r_changed_epochs.push_back(s.phase_epoch);
    r_prev = now;
    CHECK(params_of(s.models.extractor) == g0);
  };
  run_inter_phase(st, f.data, subset, hooks);
  CHECK(pairs == 4 * 3);
  CHECK(r_changed_epochs == std::vector<std::size_t>{4});
  CHECK(params_of(st.models.real_extractor) != gp0);
  CHECK(st.epoch == f.cfg.intra.epochs + 4);
}

TEST_CASE("inter step: with lambda2 = lambda4 = 0 and R frozen, G' is stationary") {
  RunConfig cfg = tiny_run(2, 2);
  cfg.loss.lambda2 = 0.0;
  cfg.loss.lambda4 = 0.0;
  Fixture f(cfg);
  TrainState st = TrainState::create(f.cfg);
  SubsetMap chosen;
  for (const LoadedScene& s : f.data.scenes) chosen[s.scene_id] = 0;
  st.begin_inter();
  const auto gp0 = params_of(st.models.real_extractor);
  const auto r0 = params_of(st.models.reconstructor);
  const auto d0 = params_of(st.models.inter_discriminator);
  PairedBatchStream stream(f.data, chosen, f.cfg.batch_options(), 1);
  while (auto p = stream.next()) inter_step(p->first, p->second, st, f.cfg.loss);
  CHECK(params_of(st.models.real_extractor) == gp0);
  CHECK(params_of(st.models.reconstructor) == r0);
  CHECK(params_of(st.models.inter_discriminator) != d0);
}

TEST_CASE("inter step: the reversed adversarial gradient reaches only the real branch") {
  Fixture f(tiny_run(2, 2));
  TrainState st = TrainState::create(f.cfg);
  SubsetMap chosen;
  for (const LoadedScene& s : f.data.scenes) chosen[s.scene_id] = 1;
  st.begin_inter();
  PairedBatchStream stream(f.data, chosen, f.cfg.batch_options(), 1);
  auto p = stream.next();
  StepDiagnostics diag;
  const LossReport rep = inter_step(p->first, p->second, st, f.cfg.loss, &diag);
  REQUIRE(diag.adversarial_grad_norm.size() == 1);
  CHECK(diag.adversarial_grad_norm[0] > 0.0);
  CHECK(rep.total == doctest::Approx(total_inter(rep, f.cfg.loss)).epsilon(1e-12));
}

TEST_CASE("steps outside their phase are rejected") {
  Fixture f(tiny_run(2, 2));
  TrainState st = TrainState::create(f.cfg);
  st.begin_inter();
  try {
    intra_step(f.first_batch(), st, f.cfg.loss);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidState);
  }
}

TEST_CASE("non-finite losses abort with a divergence error") {
  Fixture f(tiny_run(2, 1));
  TrainState st = TrainState::create(f.cfg);
  st.models.reconstructor.parameters()[0]->value[0] = std::nan("");
  try {
    intra_step(f.first_batch(), st, f.cfg.loss);
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Divergence);
  }
}

TEST_CASE("step records round-trip through JSON") {
  StepRecord r;
  r.phase = Phase::Inter;
  r.epoch = 2;
  r.global_epoch = 7;
  r.step = 41;
  r.scene_ids = {"a", "b"};
  r.syn_variants = {1, 3};
  r.real_indices = {4, 0};
  r.report.inter = 1.25;
  r.report.sys = 0.5;
  r.r_trainable = false;
  const StepRecord back = step_record_from_json(to_json(r));
  CHECK(back.phase == Phase::Inter);
  CHECK(back.global_epoch == 7);
  CHECK(back.syn_variants == r.syn_variants);
  CHECK(back.real_indices == r.real_indices);
  CHECK(back.report.inter == 1.25);
  CHECK_FALSE(back.r_trainable);
}

TEST_CASE("dehaze_image pads odd sizes and returns the input size") {
  Fixture f(tiny_run(1, 1));
  TrainState st = TrainState::create(f.cfg);
  Rng rng(3);
  const Image img = test::random_image(rng, 13, 11);
  const Image out = dehaze_image(st.models, img, false);
  CHECK(out.height == 13);
  CHECK(out.width == 11);
  CHECK(out.channels == 3);
}
