#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "errors.hpp"
#include "hazegen.hpp"
#include "losses.hpp"
#include "nets.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace tsdn;

namespace {

const double kLn2 = std::log(2.0);

Tensor scores(std::size_t rows, std::size_t h, std::size_t w, double v) { return Tensor::nchw(rows, 1, h, w, v); }

}  // namespace

TEST_CASE("l1: identity, constant and loop oracle") {
  Rng rng(1);
  const Tensor a = test::random_tensor(rng, {3, 3, 4, 5}, 0.0, 1.0);
  CHECK(l1_dehaze(a, a).mean == 0.0);
  CHECK(l1_dehaze(Tensor::nchw(2, 3, 2, 2, 0.0), Tensor::nchw(2, 3, 2, 2, 0.5)).mean == doctest::Approx(0.5));
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor p = test::random_tensor(rng, {3, 3, 4, 5}, 0.0, 1.0);
    const Tensor c = test::random_tensor(rng, {3, 3, 4, 5}, 0.0, 1.0);
    const L1Result r = l1_dehaze(p, c);
    double mean = 0.0;
    for (std::size_t n = 0; n < 3; ++n) {
      CHECK(std::abs(r.per_image[n] - oracle::l1(p, c, n)) < 1e-7);
      mean += oracle::l1(p, c, n) / 3.0;
    }
    CHECK(std::abs(r.mean - mean) < 1e-7);
  }
  CHECK_THROWS_AS(l1_dehaze(Tensor::nchw(1, 3, 2, 2), Tensor::nchw(1, 3, 2, 3)), Error);
}

TEST_CASE("intra adversarial: constant one-half scores give 8 ln 2") {
  const AdversarialTerm t = intra_adversarial(scores(1, 2, 2, 0.5), scores(3, 2, 2, 0.5));
  CHECK(std::abs(t.value - 8.0 * kLn2) < 1e-6);
  CHECK(std::abs(t.value - 5.545177444479562) < 1e-6);
}

TEST_CASE("intra adversarial: perfect discriminator limit, ordering and empty input") {
  const AdversarialTerm perfect = intra_adversarial(scores(1, 2, 2, 1.0), scores(3, 2, 2, 0.0));
  CHECK(perfect.value >= 0.0);
  CHECK(perfect.value <= 4 * 3 * 1e-6);

  Rng rng(2);
  const Tensor base = test::random_tensor(rng, {1, 1, 3, 3}, 0.05, 0.95);
  const Tensor others = test::random_tensor(rng, {3, 1, 3, 3}, 0.05, 0.95);
  const std::size_t perm[] = {2, 0, 1};
  CHECK(intra_adversarial(base, others).value == doctest::Approx(intra_adversarial(base, take0(others, perm)).value));
  CHECK_THROWS_AS(intra_adversarial(base, Tensor::nchw(0, 1, 3, 3)), Error);
}

TEST_CASE("inter adversarial: constant value, limit and label symmetry") {
  CHECK(std::abs(inter_adversarial(scores(1, 2, 2, 0.5), scores(1, 2, 2, 0.5)).value - 8.0 * kLn2) < 1e-6);
  CHECK(inter_adversarial(scores(1, 2, 2, 1.0), scores(1, 2, 2, 0.0)).value < 1e-5);
  Rng rng(3);
  const Tensor s = test::random_tensor(rng, {2, 1, 3, 3}, 0.05, 0.95);
  const Tensor r = test::random_tensor(rng, {2, 1, 3, 3}, 0.05, 0.95);
  CHECK(inter_adversarial(s, r, 1).value == doctest::Approx(inter_adversarial(r, s, 0).value).epsilon(1e-14));
  CHECK_THROWS_AS(inter_adversarial(s, take0(r, 0, 1)), Error);
}

TEST_CASE("adversarial losses are bounded by the log clamp") {
  const double bound = 4.0 * 2.0 * -std::log(kLogClamp);
  const AdversarialTerm worst = intra_adversarial(scores(1, 2, 2, 0.0), scores(1, 2, 2, 1.0));
  CHECK(worst.value <= bound + 1e-9);
  CHECK(std::isfinite(worst.value));
  for (double g : worst.grad_source.values()) CHECK(g == 0.0);
}

TEST_CASE("adversarial gradients match finite differences") {
  Rng rng(4);
  const Tensor base = test::random_tensor(rng, {1, 1, 2, 3}, 0.05, 0.95);
  const Tensor others = test::random_tensor(rng, {3, 1, 2, 3}, 0.05, 0.95);
  const AdversarialTerm t = intra_adversarial(base, others);
  CHECK(test::rel_error(t.grad_source,
                        test::numeric_grad([&](const Tensor& b) { return intra_adversarial(b, others).value; }, base)) <
        1e-3);
  CHECK(test::rel_error(t.grad_target,
                        test::numeric_grad([&](const Tensor& o) { return intra_adversarial(base, o).value; }, others)) <
        1e-3);

  const Tensor s = test::random_tensor(rng, {2, 1, 2, 2}, 0.05, 0.95);
  const Tensor r = test::random_tensor(rng, {2, 1, 2, 2}, 0.05, 0.95);
  const AdversarialTerm u = inter_adversarial(s, r);
  CHECK(test::rel_error(u.grad_source, test::numeric_grad([&](const Tensor& x) { return inter_adversarial(x, r).value; }, s)) <
        1e-3);
  CHECK(test::rel_error(u.grad_target, test::numeric_grad([&](const Tensor& x) { return inter_adversarial(s, x).value; }, r)) <
        1e-3);
}

TEST_CASE("feature-level adversarial losses agree with score-level ones") {
  NetworkConfig cfg;
  cfg.feature_channels = 4;
  cfg.discriminator_channels = 4;
  ModelBundle m = ModelBundle::create(cfg);
  Rng rng(5);
  const Tensor fb = test::random_tensor(rng, {1, 4, 3, 3});
  const std::vector<Tensor> others{test::random_tensor(rng, {1, 4, 3, 3}), test::random_tensor(rng, {1, 4, 3, 3})};
  const Tensor sb = discriminate(m.intra_discriminator, fb, cfg);
  const Tensor so = discriminate(m.intra_discriminator, concat0(others[0], others[1]), cfg);
  CHECK(intra_adv_loss(m.intra_discriminator, fb, others, cfg) == doctest::Approx(intra_adversarial(sb, so).value));
  const Tensor ss = discriminate(m.inter_discriminator, fb, cfg), sr = discriminate(m.inter_discriminator, others[0], cfg);
  CHECK(inter_adv_loss(m.inter_discriminator, fb, others[0], cfg) == doctest::Approx(inter_adversarial(ss, sr).value));
  CHECK_THROWS_AS(intra_adv_loss(m.intra_discriminator, fb, std::span<const Tensor>{}, cfg), Error);
}

TEST_CASE("dark channel: constant, min dominance and loop oracle") {
  const Tensor c = dark_channel(Tensor::nchw(1, 3, 6, 6, 0.4), 3);
  for (double v : c.values()) CHECK(v == 0.4);

  Rng rng(6);
  Tensor x = test::random_tensor(rng, {1, 3, 6, 6}, 0.2, 1.0);
  x.at(0, 1, 4, 2) = 0.0;
  CHECK(dark_channel(x, 3).at(0, 0, 1, 0) == 0.0);

  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t h = 5 + rng.below(6), w = 5 + rng.below(6), p = 2 + rng.below(3);
    const Tensor img = test::random_tensor(rng, {2, 3, h, w}, 0.0, 1.0);
    const Tensor got = dark_channel(img, p);
    const Tensor ref = oracle::dark_channel(img, p);
    REQUIRE(got.shape() == ref.shape());
    CHECK(got == ref);
  }
}

TEST_CASE("dark channel of an Image matches the tensor form") {
  Rng rng(7);
  const Image img = test::random_image(rng, 9, 7);
  CHECK(dark_channel(img, 3) == dark_channel(to_tensor(img), 3));
}

TEST_CASE("dc loss: zero, one and haze raises it") {
  CHECK(dc_loss(Tensor::nchw(1, 3, 6, 6, 0.0), 3) == 0.0);
  for (std::size_t p : {1, 2, 3, 4, 5}) CHECK(dc_loss(Tensor::nchw(2, 3, 8, 8, 1.0), p) == 1.0);

  SynthSpec spec;
  spec.height = spec.width = 32;
  for (int i = 0; i < 20; ++i) {
    const SceneGroup g = synth_scene(spec, "dc" + std::to_string(i));
    const double clear = dc_loss(to_tensor(g.clear), 3);
    for (const HazeVariant& v : g.variants) CHECK(dc_loss(to_tensor(v.hazy), 3) > clear);
  }
}

TEST_CASE("tv loss: constant, hand example, homogeneity and loop oracle") {
  CHECK(tv_loss(Tensor::nchw(1, 3, 4, 4, 0.3)) == 0.0);
  Tensor two({1, 1, 2, 2});
  two.at(0, 0, 0, 1) = 1.0;
  two.at(0, 0, 1, 1) = 1.0;
  CHECK(tv_loss(two) == doctest::Approx(1.0).epsilon(1e-15));

  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = test::random_tensor(rng, {2, 3, 3 + rng.below(4), 3 + rng.below(4)}, 0.0, 1.0);
    CHECK(std::abs(tv_loss(x) - oracle::tv(x)) < 1e-6);
    Tensor doubled = x;
    doubled *= 2.0;
    CHECK(tv_loss(doubled) == doctest::Approx(2.0 * tv_loss(x)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(tv_loss(Tensor::nchw(1, 3, 1, 1)), Error);
}

TEST_CASE("dc and tv losses are invariant to batch order") {
  Rng rng(9);
  const Tensor x = test::random_tensor(rng, {3, 3, 6, 6}, 0.0, 1.0);
  const std::size_t perm[] = {2, 0, 1};
  const Tensor y = take0(x, perm);
  CHECK(dc_loss(x, 3) == doctest::Approx(dc_loss(y, 3)).epsilon(1e-14));
  CHECK(tv_loss(x) == doctest::Approx(tv_loss(y)).epsilon(1e-14));
}

TEST_CASE("image-loss gradients match finite differences") {
  Rng rng(10);
  const Tensor x = test::random_tensor(rng, {2, 3, 5, 4}, 0.05, 0.95);
  const Tensor c = test::random_tensor(rng, {2, 3, 5, 4}, 0.05, 0.95);
  CHECK(test::rel_error(l1_dehaze_grad(x, c), test::numeric_grad([&](const Tensor& p) { return l1_dehaze(p, c).mean; }, x)) <
        1e-3);
  CHECK(test::rel_error(dc_loss_grad(x, 2), test::numeric_grad([&](const Tensor& p) { return dc_loss(p, 2); }, x)) < 1e-3);
  CHECK(test::rel_error(tv_loss_grad(x), test::numeric_grad([&](const Tensor& p) { return tv_loss(p); }, x)) < 1e-3);
  LossWeights w;
  w.lambda_dc = 0.7;
  w.lambda_tv = 0.3;
  CHECK(test::rel_error(real_loss_grad(x, w, 3), test::numeric_grad([&](const Tensor& p) { return real_loss(p, w, 3); }, x)) <
        1e-3);
}

TEST_CASE("real loss compositions") {
  LossWeights w;
  w.lambda_dc = w.lambda_tv = 0.0;
  Rng rng(11);
  CHECK(real_loss(test::random_tensor(rng, {1, 3, 6, 6}, 0.0, 1.0), w, 3) == 0.0);
  w.lambda_dc = 0.01;
  w.lambda_tv = 0.001;
  CHECK(real_loss(Tensor::nchw(1, 3, 6, 6, 0.37), w, 3) == doctest::Approx(0.01 * 0.37).epsilon(1e-14));
  w.lambda_dc = w.lambda_tv = 1.0;
  CHECK(real_loss(Tensor::nchw(1, 3, 6, 6, 1.0), w, 3) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("phase totals are linear in the weights") {
  LossReport r;
  r.intra = 2.5;
  r.inter = 1.5;
  r.sys = 0.25;
  r.real = 0.125;
  LossWeights w;
  w.lambda1 = 0;
  w.lambda3 = 1;
  CHECK(total_intra(r, w) == r.sys);
  w.lambda1 = 1;
  w.lambda3 = 0;
  CHECK(total_intra(r, w) == r.intra);
  w.lambda1 = 2;
  w.lambda3 = 3;
  CHECK(std::abs(total_intra(r, w) - (2 * r.intra + 3 * r.sys)) < 1e-7);

  w.lambda2 = 0;
  w.lambda3 = 1;
  w.lambda4 = 0;
  CHECK(total_inter(r, w) == r.sys);
  w.lambda2 = 1;
  w.lambda3 = 0;
  CHECK(total_inter(r, w) == r.inter);
  w.lambda2 = 2;
  w.lambda3 = 3;
  w.lambda4 = 4;
  CHECK(std::abs(total_inter(r, w) - (2 * r.inter + 3 * r.sys + 4 * r.real)) < 1e-7);
}

TEST_CASE("dark-channel patch size scales with the crop") {
  LossWeights w;
  CHECK(w.patch_for(256) == 15);
  CHECK(w.patch_for(64) == 3);
  CHECK(w.patch_for(128) == 7);
  w.dc_patch = 5;
  CHECK(w.patch_for(64) == 5);
}

TEST_CASE("loss weights validation") {
  LossWeights w;
  w.lambda3 = 0.0;
  CHECK_THROWS_AS(w.validate(), Error);
  w = LossWeights{};
  w.lambda_dc = -1.0;
  CHECK_THROWS_AS(w.validate(), Error);
}
