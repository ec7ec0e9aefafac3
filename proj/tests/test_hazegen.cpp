#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "data.hpp"
#include "doctest.h"
#include "errors.hpp"
#include "hazegen.hpp"
#include "support.hpp"

using namespace tsdn;

namespace {

Image constant(std::size_t h, std::size_t w, std::size_t c, double v) { return Image(h, w, c, v); }

HazeParams gray(double a, double beta) { return HazeParams{{a, a, a}, beta}; }

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("transmission: zero depth gives unit transmission") {
  const Image t = transmission(constant(3, 4, 1, 0.0), 1.0);
  for (double v : t.pixels) CHECK(v == 1.0);
}

TEST_CASE("transmission: unit depth at beta ln2 halves") {
  const Image t = transmission(constant(2, 2, 1, 1.0), std::log(2.0));
  for (double v : t.pixels) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("transmission: per-pixel scalar oracle") {
  Image d(1, 2, 1);
  d.at(0, 0, 0) = 0.0;
  d.at(0, 1, 0) = 2.0;
  const Image t = transmission(d, 0.5);
  CHECK(t.at(0, 0, 0) == 1.0);
  CHECK(t.at(0, 1, 0) == doctest::Approx(0.36787944117144233).epsilon(1e-15));
}

TEST_CASE("transmission: rejects non-finite depth and nonpositive beta") {
  Image d(2, 2, 1, 0.5);
  d.at(1, 1, 0) = std::nan("");
  CHECK_THROWS_AS(transmission(d, 1.0), Error);
  CHECK_THROWS_AS(transmission(constant(2, 2, 1, 0.5), 0.0), Error);
}

TEST_CASE("apply_haze: fixed point, scalar oracle and haze-free identity") {
  Rng rng(3);
  const Image depth = test::random_image(rng, 5, 6, 1, 0.0, 2.0);

  const Image clear_a = constant(5, 6, 3, 0.8);
  const Image fixed = apply_haze(clear_a, depth, gray(0.8, 1.3));
  for (double v : fixed.pixels) CHECK(v == doctest::Approx(0.8).epsilon(1e-15));

  // t = 0.5 everywhere: depth ln2 with beta 1.
  const Image half = apply_haze(constant(2, 2, 3, 0.5), constant(2, 2, 1, std::log(2.0)), gray(1.0, 1.0));
  for (double v : half.pixels) CHECK(v == doctest::Approx(0.75).epsilon(1e-14));

  const Image j = test::random_image(rng, 5, 6);
  CHECK(apply_haze(j, constant(5, 6, 1, 0.0), gray(0.9, 2.0)) == j);
}

TEST_CASE("apply_haze: shape mismatch is rejected") {
  CHECK_THROWS_AS(apply_haze(constant(4, 4, 3, 0.2), constant(4, 5, 1, 0.1), gray(0.9, 1.0)), Error);
}

TEST_CASE("invert_haze: fixed point of the atmospheric light") {
  const Image depth = constant(3, 3, 1, 0.7);
  const Image j = invert_haze(constant(3, 3, 3, 0.85), depth, gray(0.85, 1.1));
  for (double v : j.pixels) CHECK(v == doctest::Approx(0.85).epsilon(1e-12));
}

TEST_CASE("haze model properties over random draws") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t h = 4 + rng.below(5), w = 4 + rng.below(5);
    const Image j = test::random_image(rng, h, w);
    const Image d = test::random_image(rng, h, w, 1, 0.0, 2.0);
    HazeParams p{{rng.uniform(0.3, 1.0), rng.uniform(0.3, 1.0), rng.uniform(0.3, 1.0)}, rng.uniform(0.1, 3.0)};
    const Image hazy = apply_haze(j, d, p);
    const Image t = transmission(d, p.beta);
    const Image back = invert_haze(hazy, d, p, 1e-3);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double tv = t.at(y, x, 0);
        CHECK(tv > 0.0);
        CHECK(tv <= 1.0);
        for (std::size_t c = 0; c < 3; ++c) {
          const double jv = j.at(y, x, c), a = p.atmospheric_light[c], iv = hazy.at(y, x, c);
          // Convexity: between J and A.
          CHECK(iv >= std::min(jv, a) - 1e-15);
          CHECK(iv <= std::max(jv, a) + 1e-15);
          if (tv >= 0.05) CHECK(std::abs(back.at(y, x, c) - jv) < 1e-5);
        }
      }
  }
}

TEST_CASE("haze thickens toward A as beta grows") {
  Rng rng(5);
  const Image j = test::random_image(rng, 6, 6, 3, 0.0, 0.6);
  const Image d = test::random_image(rng, 6, 6, 1, 0.1, 1.5);
  Image prev = apply_haze(j, d, gray(0.9, 0.2));
  for (double beta : {0.5, 1.0, 2.0, 4.0}) {
    const Image cur = apply_haze(j, d, gray(0.9, beta));
    for (std::size_t i = 0; i < cur.size(); ++i) CHECK(cur.pixels[i] > prev.pixels[i]);
    prev = cur;
  }
}

TEST_CASE("synth_scene: deterministic, valid and diverse") {
  SynthSpec spec;
  spec.height = 24;
  spec.width = 32;
  spec.seed = 42;
  const SceneGroup a = synth_scene(spec, "scene0007");
  const SceneGroup b = synth_scene(spec, "scene0007");
  CHECK(a.clear == b.clear);
  CHECK(a.depth == b.depth);
  REQUIRE(a.variants.size() == 4);
  std::set<double> betas;
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(a.variants[i].params == b.variants[i].params);
    CHECK(a.variants[i].hazy == b.variants[i].hazy);
    betas.insert(a.variants[i].params.beta);
    CHECK(a.variants[i].params.beta >= spec.beta.lo);
    CHECK(a.variants[i].params.beta <= spec.beta.hi);
    const double aa = a.variants[i].params.atmospheric_light[0];
    CHECK(aa >= spec.airlight.lo);
    CHECK(aa <= spec.airlight.hi);
    // Stored hazy images follow the scattering model on the stored clear/depth.
    const Image expect = apply_haze(a.clear, a.depth, a.variants[i].params);
    for (std::size_t k = 0; k < expect.size(); ++k)
      CHECK(std::abs(expect.pixels[k] - a.variants[i].hazy.pixels[k]) <= 1e-6);
  }
  CHECK(betas.size() == 4);
  CHECK_NOTHROW(a.validate());

  const SceneGroup other = synth_scene(spec, "scene0008");
  CHECK_FALSE(other.clear == a.clear);
  spec.seed = 43;
  CHECK_FALSE(synth_scene(spec, "scene0007").clear == a.clear);
}

TEST_CASE("synth_clear contains dark pixels for the dark-channel prior") {
  Rng rng(9);
  const Image clear = synth_clear(rng, 48, 48);
  std::size_t dark = 0;
  for (std::size_t y = 0; y < 48; ++y)
    for (std::size_t x = 0; x < 48; ++x) {
      double m = 1.0;
      for (std::size_t c = 0; c < 3; ++c) m = std::min(m, clear.at(y, x, c));
      if (m <= 0.15) ++dark;
    }
  CHECK(dark > 48 * 48 / 4);
}

TEST_CASE("SceneGroup validation rejects single variants and duplicate parameters") {
  SynthSpec spec;
  spec.height = spec.width = 8;
  SceneGroup g = synth_scene(spec, "s");
  SceneGroup dup = g;
  dup.variants[1].params = dup.variants[0].params;
  CHECK_THROWS_AS(dup.validate(), Error);
  g.variants.resize(1);
  CHECK_THROWS_AS(g.validate(), Error);
}

TEST_CASE("synth_dataset: counts and byte-identical reruns") {
  test::TempDir dir("synth");
  SynthSpec spec;
  spec.height = spec.width = 16;
  spec.scenes = 5;
  spec.test_scenes = 2;
  spec.real_images = 3;
  const DatasetManifest m = synth_dataset(spec, dir / "a");
  CHECK(m.num_scenes() == 5);
  CHECK(m.variants_per_scene() == 4);
  CHECK(m.num_hazy() == 20);
  CHECK(m.num_real() == 3);

  synth_dataset(spec, dir / "b");
  for (const auto& rel : {"manifest.json", "real.txt", "test/manifest.json", "real/manifest.json"})
    CHECK(slurp(dir / "a" / rel) == slurp(dir / "b" / rel));
  for (const SceneRecord& s : m.scenes) {
    CHECK(slurp(dir / "a" / s.clear_path) == slurp(dir / "b" / s.clear_path));
    CHECK(slurp(dir / "a" / s.depth_path) == slurp(dir / "b" / s.depth_path));
    for (const VariantRecord& v : s.variants) CHECK(slurp(dir / "a" / v.hazy_path) == slurp(dir / "b" / v.hazy_path));
  }
}

TEST_CASE("real-domain split uses disjoint haze ranges") {
  test::TempDir dir("synth-real");
  SynthSpec spec;
  spec.height = spec.width = 16;
  spec.scenes = 2;
  spec.test_scenes = 1;
  spec.real_images = 6;
  synth_dataset(spec, dir.path());
  const DatasetManifest real = load_manifest(dir / "real/manifest.json");
  REQUIRE(real.num_scenes() == 6);
  for (const SceneRecord& s : real.scenes) {
    REQUIRE(s.variants.size() == 1);
    CHECK(s.variants[0].params.beta >= spec.real_beta.lo);
    CHECK(s.variants[0].params.beta <= spec.real_beta.hi);
    CHECK(s.variants[0].params.atmospheric_light[0] < spec.airlight.lo);
  }
}

TEST_CASE("synth_dataset: unwritable destination raises an I/O error") {
  test::TempDir dir("synth-ro");
  std::ofstream(dir / "blocker") << "x";
  SynthSpec spec;
  spec.height = spec.width = 8;
  spec.scenes = 1;
  try {
    synth_dataset(spec, dir / "blocker" / "sub");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Io);
    CHECK(std::string(e.what()).find("blocker") != std::string::npos);
  }
}
