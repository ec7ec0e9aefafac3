#include "hazegen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "data.hpp"
#include "errors.hpp"

namespace tsdn {

void HazeParams::validate() const {
  for (double a : atmospheric_light)
    require(a > 0.0 && a <= 1.0 && std::isfinite(a), ErrorCode::InvalidInput, "atmospheric light must be in (0,1]");
  require(beta > 0.0 && std::isfinite(beta), ErrorCode::InvalidInput, "beta must be > 0");
}

void SceneGroup::validate() const {
  require(variants.size() >= 2, ErrorCode::InvalidInput, "scene group needs at least two variants");
  require(clear.channels == 3 && depth.channels == 1, ErrorCode::Shape, "scene group channel layout");
  require(depth.height == clear.height && depth.width == clear.width, ErrorCode::Shape, "depth/clear size mismatch");
  for (std::size_t i = 0; i < variants.size(); ++i) {
    variants[i].params.validate();
    require(variants[i].hazy.same_shape(clear), ErrorCode::Shape, "hazy/clear size mismatch");
    for (std::size_t j = 0; j < i; ++j)
      require(!(variants[i].params == variants[j].params), ErrorCode::InvalidInput, "duplicate variant params");
  }
}

void SynthSpec::validate() const {
  require(beta.lo > 0.0 && beta.hi >= beta.lo, ErrorCode::InvalidConfig, "beta range must satisfy 0 < lo <= hi");
  require(airlight.lo > 0.0 && airlight.hi <= 1.0 && airlight.hi >= airlight.lo, ErrorCode::InvalidConfig,
          "A range must lie in (0,1]");
  require(depth.lo >= 0.0 && depth.hi >= depth.lo, ErrorCode::InvalidConfig, "depth range must be nonnegative");
  require(variants >= 2, ErrorCode::InvalidConfig, "need at least two variants per scene");
  require(scenes >= 1, ErrorCode::InvalidConfig, "need at least one scene");
  require(height >= 2 && width >= 2, ErrorCode::InvalidConfig, "image size too small");
  if (real_images > 0) {
    require(real_beta.lo > 0.0 && real_beta.hi >= real_beta.lo, ErrorCode::InvalidConfig, "real beta range");
    require(real_airlight.lo > 0.0 && real_airlight.hi <= 1.0, ErrorCode::InvalidConfig, "real A range");
  }
}

namespace {

void check_depth(const Image& depth) {
  require(depth.channels == 1, ErrorCode::Shape, "depth must be single-channel");
  for (double d : depth.pixels)
    require(std::isfinite(d) && d >= 0.0, ErrorCode::InvalidInput, "depth must be finite and nonnegative");
}

}  // namespace

Image transmission(const Image& depth, double beta) {
  require(beta > 0.0, ErrorCode::InvalidInput, "beta must be > 0");
  check_depth(depth);
  Image t(depth.height, depth.width, 1);
  for (std::size_t i = 0; i < t.pixels.size(); ++i) t.pixels[i] = std::exp(-beta * depth.pixels[i]);
  return t;
}

Image apply_haze(const Image& clear, const Image& depth, const HazeParams& params) {
  params.validate();
  require(clear.channels == 3 && clear.height == depth.height && clear.width == depth.width, ErrorCode::InvalidInput,
          "apply_haze: clear/depth shape mismatch");
  const Image t = transmission(depth, params.beta);
  Image out(clear.height, clear.width, 3);
  for (std::size_t p = 0; p < t.pixels.size(); ++p)
    for (std::size_t c = 0; c < 3; ++c) {
      const double a = params.atmospheric_light[c];
      out.pixels[p * 3 + c] = clear.pixels[p * 3 + c] * t.pixels[p] + a * (1.0 - t.pixels[p]);
    }
  return out;
}

Image invert_haze(const Image& hazy, const Image& depth, const HazeParams& params, double t_min) {
  require(t_min > 0.0 && t_min < 1.0, ErrorCode::InvalidInput, "t_min must be in (0,1)");
  require(hazy.channels == 3 && hazy.height == depth.height && hazy.width == depth.width, ErrorCode::InvalidInput,
          "invert_haze: hazy/depth shape mismatch");
  const Image t = transmission(depth, params.beta);
  Image out(hazy.height, hazy.width, 3);
  for (std::size_t p = 0; p < t.pixels.size(); ++p) {
    const double tt = std::max(t.pixels[p], t_min);
    for (std::size_t c = 0; c < 3; ++c) {
      const double a = params.atmospheric_light[c];
      out.pixels[p * 3 + c] = std::clamp((hazy.pixels[p * 3 + c] - a * (1.0 - tt)) / tt, 0.0, 1.0);
    }
  }
  return out;
}

namespace {

// Saturated albedo: one channel near zero so haze-free patches have a dark channel.
std::array<double, 3> random_albedo(Rng& rng) {
  std::array<double, 3> c{rng.uniform(0.2, 0.95), rng.uniform(0.2, 0.95), rng.uniform(0.2, 0.95)};
  c[rng.below(3)] = rng.uniform(0.0, 0.1);
  return c;
}

}  // namespace

Image synth_clear(Rng& rng, std::size_t h, std::size_t w) {
  Image img(h, w, 3);
  const auto c0 = random_albedo(rng);
  const auto c1 = random_albedo(rng);
  const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double dx = std::cos(angle), dy = std::sin(angle);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double u = 0.5 + 0.5 * ((x / double(w) - 0.5) * dx + (y / double(h) - 0.5) * dy) * std::numbers::sqrt2;
      for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) = c0[c] * (1.0 - u) + c1[c] * u;
    }

  const std::size_t shapes = 6 + rng.below(7);
  for (std::size_t s = 0; s < shapes; ++s) {
    const auto col = random_albedo(rng);
    const bool ellipse = rng.coin();
    const double cx = rng.uniform(0.0, double(w)), cy = rng.uniform(0.0, double(h));
    const double rx = rng.uniform(0.08, 0.3) * double(w), ry = rng.uniform(0.08, 0.3) * double(h);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double ux = (double(x) + 0.5 - cx) / rx, uy = (double(y) + 0.5 - cy) / ry;
        const bool inside = ellipse ? ux * ux + uy * uy <= 1.0 : std::abs(ux) <= 1.0 && std::abs(uy) <= 1.0;
        if (inside)
          for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) = col[c];
      }
  }

  // Fine texture so the scene has high-frequency detail to recover.
  for (double& v : img.pixels) v = std::clamp(v + 0.02 * rng.normal(), 0.0, 1.0);
  return quantize8(img);
}

Image synth_depth(Rng& rng, std::size_t h, std::size_t w, Range range) {
  Image d(h, w, 1);
  const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double gx = std::cos(angle), gy = std::sin(angle);
  struct Wave {
    double fx, fy, phase, amp;
  };
  std::vector<Wave> waves;
  for (int k = 0; k < 3; ++k)
    waves.push_back({rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0), rng.uniform(0.0, 6.283185307179586),
                     rng.uniform(0.05, 0.2)});
  double lo = 1e300, hi = -1e300;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double u = x / double(w), v = y / double(h);
      double z = u * gx + v * gy;
      for (const Wave& wv : waves)
        z += wv.amp * std::sin(2.0 * std::numbers::pi * (wv.fx * u + wv.fy * v) + wv.phase);
      d.at(y, x, 0) = z;
      lo = std::min(lo, z);
      hi = std::max(hi, z);
    }
  const double span = hi > lo ? hi - lo : 1.0;
  for (double& z : d.pixels) {
    z = range.lo + (range.hi - range.lo) * (z - lo) / span;
    z = static_cast<double>(static_cast<float>(z));  // depth is stored as 32-bit float on disk
  }
  return d;
}

SceneGroup synth_scene(const SynthSpec& spec, const std::string& scene_id) {
  return synth_scene(spec, scene_id, spec.beta, spec.airlight, spec.variants);
}

SceneGroup synth_scene(const SynthSpec& spec, const std::string& scene_id, Range beta_range, Range airlight_range,
                       std::size_t variants) {
  spec.validate();
  Rng rng = Rng::derive(spec.seed, "scene:" + scene_id);
  SceneGroup g;
  g.scene_id = scene_id;
  g.clear = synth_clear(rng, spec.height, spec.width);
  g.depth = synth_depth(rng, spec.height, spec.width, spec.depth);

  // Stratified log-uniform betas so variants span thin to thick haze; order shuffled.
  std::vector<double> betas(variants);
  const double llo = std::log(beta_range.lo), lhi = std::log(beta_range.hi);
  for (std::size_t i = 0; i < variants; ++i)
    betas[i] = std::exp(llo + (lhi - llo) * (double(i) + rng.uniform()) / double(variants));
  rng.shuffle(betas.begin(), betas.end());

  for (std::size_t i = 0; i < variants; ++i) {
    HazeParams p;
    const double a = rng.uniform(airlight_range.lo, airlight_range.hi);
    for (double& ch : p.atmospheric_light)
      ch = std::clamp(a + spec.airlight_tint * rng.uniform(-1.0, 1.0), 1e-3, 1.0);
    p.beta = betas[i];
    g.variants.push_back({p, apply_haze(g.clear, g.depth, p)});
  }
  if (variants >= 2) g.validate();
  return g;
}

namespace {

namespace fs = std::filesystem;

std::string scene_name(const std::string& prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%04zu", prefix.c_str(), i);
  return buf;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::Io, "cannot create directory " + dir.string() + ": " + ec.message());
}

DatasetManifest write_split(const SynthSpec& spec, const fs::path& dir, const std::string& split,
                            const std::string& prefix, std::size_t count, Range beta, Range airlight,
                            std::size_t variants, double noise) {
  ensure_dir(dir / "clear");
  ensure_dir(dir / "depth");
  ensure_dir(dir / "hazy");
  DatasetManifest m;
  m.seed = spec.seed;
  m.split = split;
  m.root = dir;
  for (std::size_t i = 0; i < count; ++i) {
    const std::string id = scene_name(prefix, i);
    SceneGroup g = synth_scene(spec, id, beta, airlight, variants);
    SceneRecord rec{id, "clear/" + id + ".png", "depth/" + id + ".pfm", {}};
    write_png(dir / rec.clear_path, g.clear);
    write_pfm(dir / rec.depth_path, g.depth);
    Rng noise_rng = Rng::derive(spec.seed, "sensor:" + id);
    for (std::size_t v = 0; v < g.variants.size(); ++v) {
      Image hazy = g.variants[v].hazy;
      if (noise > 0.0)
        for (double& px : hazy.pixels) px = std::clamp(px + noise * noise_rng.normal(), 0.0, 1.0);
      const std::string path = "hazy/" + id + "_" + std::to_string(v) + ".png";
      write_png(dir / path, hazy);
      rec.variants.push_back({path, g.variants[v].params});
    }
    m.scenes.push_back(std::move(rec));
  }
  return m;
}

}  // namespace

DatasetManifest synth_dataset(const SynthSpec& spec, const fs::path& out_dir) {
  spec.validate();
  ensure_dir(out_dir);

  DatasetManifest train = write_split(spec, out_dir, "train", "scene", spec.scenes, spec.beta, spec.airlight,
                                      spec.variants, 0.0);
  if (spec.test_scenes > 0) {
    DatasetManifest test = write_split(spec, out_dir / "test", "test", "test", spec.test_scenes, spec.beta,
                                       spec.airlight, spec.variants, 0.0);
    write_manifest(test, out_dir / "test" / "manifest.json");
  }
  if (spec.real_images > 0) {
    DatasetManifest real = write_split(spec, out_dir / "real", "real", "real", spec.real_images, spec.real_beta,
                                       spec.real_airlight, 1, spec.real_noise);
    write_manifest(real, out_dir / "real" / "manifest.json");
    train.real_list = "real.txt";
    for (const SceneRecord& s : real.scenes) train.real_paths.push_back("real/" + s.variants.front().hazy_path);
    std::ofstream list(out_dir / train.real_list);
    for (const std::string& p : train.real_paths) list << p << '\n';
    if (!list) fail(ErrorCode::Io, "cannot write " + (out_dir / train.real_list).string());
  }
  write_manifest(train, out_dir / "manifest.json");
  return train;
}

}  // namespace tsdn
