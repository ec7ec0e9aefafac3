#include "metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>

#include "errors.hpp"
#include "hazegen.hpp"

namespace tsdn {

using nlohmann::json;

double psnr(const Image& pred, const Image& ref, double max_val) {
  require(pred.same_shape(ref), ErrorCode::Shape, "psnr: image shapes differ");
  require(!pred.pixels.empty(), ErrorCode::InvalidInput, "psnr: empty image");
  double mse = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.pixels[i] - ref.pixels[i];
    mse += d * d;
  }
  mse /= double(pred.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_val * max_val / mse);
}

namespace {

constexpr std::size_t kWindow = 11;
constexpr double kSigma = 1.5;

std::array<double, kWindow> gaussian_window() {
  std::array<double, kWindow> g{};
  double s = 0.0;
  for (std::size_t i = 0; i < kWindow; ++i) {
    const double x = double(i) - double(kWindow / 2);
    g[i] = std::exp(-x * x / (2.0 * kSigma * kSigma));
    s += g[i];
  }
  for (double& v : g) v /= s;
  return g;
}

std::vector<double> to_gray(const Image& img) {
  std::vector<double> g(img.height * img.width);
  for (std::size_t p = 0; p < g.size(); ++p) {
    double s = 0.0;
    for (std::size_t c = 0; c < img.channels; ++c) s += img.pixels[p * img.channels + c];
    g[p] = s / double(img.channels);
  }
  return g;
}

}  // namespace

double ssim(const Image& pred, const Image& ref) {
  require(pred.same_shape(ref), ErrorCode::Shape, "ssim: image shapes differ");
  require(pred.height >= kWindow && pred.width >= kWindow, ErrorCode::InvalidInput,
          "ssim: image smaller than the 11x11 window");
  constexpr double c1 = (0.01 * 1.0) * (0.01 * 1.0);
  constexpr double c2 = (0.03 * 1.0) * (0.03 * 1.0);
  const auto g = gaussian_window();
  const std::vector<double> x = to_gray(pred), y = to_gray(ref);
  const std::size_t w = pred.width, oh = pred.height - kWindow + 1, ow = pred.width - kWindow + 1;
  double total = 0.0;
  for (std::size_t oy = 0; oy < oh; ++oy)
    for (std::size_t ox = 0; ox < ow; ++ox) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (std::size_t i = 0; i < kWindow; ++i)
        for (std::size_t j = 0; j < kWindow; ++j) {
          const double wt = g[i] * g[j];
          const double a = x[(oy + i) * w + ox + j], b = y[(oy + i) * w + ox + j];
          mx += wt * a;
          my += wt * b;
          sxx += wt * a * a;
          syy += wt * b * b;
          sxy += wt * a * b;
        }
      const double vx = sxx - mx * mx, vy = syy - my * my, cov = sxy - mx * my;
      total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
  return total / double(oh * ow);
}

Dispersion dispersion(const std::map<std::string, std::vector<double>>& per_scene_losses) {
  require(!per_scene_losses.empty(), ErrorCode::InvalidInput, "dispersion of no scenes");
  Dispersion d;
  d.scenes = per_scene_losses.size();
  d.variants = per_scene_losses.begin()->second.size();
  double cv_sum = 0.0;
  std::size_t cv_count = 0;
  for (const auto& [id, losses] : per_scene_losses) {
    require(losses.size() == d.variants && !losses.empty(), ErrorCode::InvalidInput,
            "dispersion: scene " + id + " has a different variant count");
    double mean = 0.0;
    for (double v : losses) {
      require(std::isfinite(v), ErrorCode::InvalidInput, "dispersion: non-finite loss in scene " + id);
      mean += v;
    }
    mean /= double(losses.size());
    double var = 0.0;
    for (double v : losses) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / double(losses.size()));
    const auto [lo, hi] = std::minmax_element(losses.begin(), losses.end());
    d.range += *hi - *lo;
    d.std += sd;
    if (mean != 0.0) {
      cv_sum += sd / mean;
      ++cv_count;
    }
  }
  d.range /= double(d.scenes);
  d.std /= double(d.scenes);
  if (cv_count > 0) d.cv = cv_sum / double(cv_count);
  return d;
}

std::vector<StepRecord> read_steps(const std::filesystem::path& jsonl) {
  std::ifstream in(jsonl);
  if (!in) fail(ErrorCode::MissingPrerequisite, "missing step log " + jsonl.string());
  std::vector<StepRecord> out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(step_record_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      fail(ErrorCode::Schema, jsonl.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<DispersionRow> dispersion_from_steps(const std::vector<StepRecord>& steps) {
  std::map<std::size_t, std::map<std::string, std::vector<double>>> by_epoch;
  for (const StepRecord& r : steps) {
    if (r.phase != Phase::Intra) continue;
    require(r.report.per_variant.size() == r.scene_ids.size(), ErrorCode::Schema,
            "step record without per-variant losses for every scene");
    for (std::size_t i = 0; i < r.scene_ids.size(); ++i) by_epoch[r.epoch][r.scene_ids[i]] = r.report.per_variant[i];
  }
  std::vector<DispersionRow> rows;
  for (const auto& [epoch, scenes] : by_epoch) rows.push_back({epoch, dispersion(scenes)});
  return rows;
}

void write_dispersion_csv(const std::vector<DispersionRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out.precision(10);
  out << "epoch,range,std,cv\n";
  for (const DispersionRow& r : rows) {
    out << r.epoch << ',' << r.stats.range << ',' << r.stats.std << ',';
    if (r.stats.cv) out << *r.stats.cv;
    out << '\n';
  }
  if (!out) fail(ErrorCode::Io, "write failed: " + path.string());
}

void plot_dispersion(const std::vector<DispersionRow>& rows, const std::filesystem::path& png) {
  constexpr std::size_t W = 640, H = 400, margin = 40;
  Image img(H, W, 3, 1.0);
  auto put = [&](long x, long y, const std::array<double, 3>& c) {
    if (x < 0 || y < 0 || x >= long(W) || y >= long(H)) return;
    for (std::size_t ch = 0; ch < 3; ++ch) img.at(std::size_t(y), std::size_t(x), ch) = c[ch];
  };
  auto line = [&](double x0, double y0, double x1, double y1, const std::array<double, 3>& c) {
    const int steps = int(std::max(std::abs(x1 - x0), std::abs(y1 - y0))) + 1;
    for (int i = 0; i <= steps; ++i) {
      const double t = double(i) / steps;
      const long x = std::lround(x0 + t * (x1 - x0)), y = std::lround(y0 + t * (y1 - y0));
      put(x, y, c);
      put(x, y + 1, c);
    }
  };
  const std::array<double, 3> black{0, 0, 0};
  line(margin, H - margin, W - margin, H - margin, black);
  line(margin, margin, margin, H - margin, black);

  double ymax = 0.0;
  for (const auto& r : rows) ymax = std::max({ymax, r.stats.range, r.stats.std, r.stats.cv.value_or(0.0)});
  if (ymax <= 0.0) ymax = 1.0;
  const std::size_t n = rows.size();
  auto px = [&](std::size_t i) { return margin + (n > 1 ? double(i) / double(n - 1) : 0.5) * (W - 2 * margin); };
  auto py = [&](double v) { return (H - margin) - v / ymax * (H - 2 * margin); };
  for (std::size_t t = 1; t <= 4; ++t) line(margin - 5, py(ymax * t / 4), margin, py(ymax * t / 4), black);

  const std::array<std::array<double, 3>, 3> colors{{{0.85, 0.2, 0.2}, {0.2, 0.5, 0.85}, {0.2, 0.65, 0.3}}};
  auto value = [](const DispersionRow& r, int series) {
    return series == 0 ? r.stats.range : series == 1 ? r.stats.std : r.stats.cv.value_or(0.0);
  };
  for (int s = 0; s < 3; ++s) {
    for (std::size_t i = 0; i + 1 < n; ++i)
      line(px(i), py(value(rows[i], s)), px(i + 1), py(value(rows[i + 1], s)), colors[s]);
    if (n == 1) line(px(0) - 3, py(value(rows[0], s)), px(0) + 3, py(value(rows[0], s)), colors[s]);
    // legend swatch
    for (long y = 0; y < 8; ++y)
      for (long x = 0; x < 20; ++x) put(long(W - margin - 30) + x, long(margin + 14 * s) + y, colors[s]);
  }
  write_png(png, img);
}

Dehazer identity_dehazer() {
  return [](const Image& hazy, const LoadedScene&, std::size_t) { return hazy; };
}

Dehazer oracle_dehazer(double t_min) {
  return [t_min](const Image& hazy, const LoadedScene& scene, std::size_t variant) {
    return invert_haze(hazy, scene.depth, scene.params.at(variant), t_min);
  };
}

Dehazer network_dehazer(ModelBundle& models, bool use_real_extractor) {
  return [&models, use_real_extractor](const Image& hazy, const LoadedScene&, std::size_t) {
    return dehaze_image(models, hazy, use_real_extractor);
  };
}

EvalSummary evaluate(const Dehazer& model, const LoadedDataset& data) {
  require(!data.scenes.empty(), ErrorCode::InvalidInput, "evaluate: dataset has no scenes");
  EvalSummary s;
  std::map<std::string, std::vector<double>> l1_by_scene;
  for (const LoadedScene& scene : data.scenes)
    for (std::size_t v = 0; v < scene.hazy.size(); ++v) {
      const Image out = model(scene.hazy[v], scene, v);
      require(out.same_shape(scene.clear), ErrorCode::Shape, "evaluate: model output shape differs from reference");
      EvalRecord r;
      r.id = scene.scene_id + "_" + std::to_string(v);
      r.psnr = psnr(out, scene.clear);
      r.ssim = ssim(out, scene.clear);
      r.hazy_psnr = psnr(scene.hazy[v], scene.clear);
      double l1 = 0.0;
      for (std::size_t i = 0; i < out.size(); ++i) l1 += std::abs(out.pixels[i] - scene.clear.pixels[i]);
      r.l1 = l1 / double(out.size());
      l1_by_scene[scene.scene_id].push_back(r.l1);
      s.records.push_back(r);
    }
  for (const EvalRecord& r : s.records) {
    s.mean_psnr += r.psnr;
    s.mean_ssim += r.ssim;
    s.mean_hazy_psnr += r.hazy_psnr;
  }
  const double n = double(s.records.size());
  s.mean_psnr /= n;
  s.mean_ssim /= n;
  s.mean_hazy_psnr /= n;
  s.l1_dispersion = dispersion(l1_by_scene);
  return s;
}

namespace {

// JSON has no infinity; identical images are reported with the string "inf".
json db_json(double v) { return std::isinf(v) ? json("inf") : json(v); }

}  // namespace

json to_json(const EvalSummary& s) {
  json records = json::array();
  for (const EvalRecord& r : s.records)
    records.push_back({{"id", r.id},
                       {"psnr", db_json(r.psnr)},
                       {"ssim", r.ssim},
                       {"l1", r.l1},
                       {"hazy_psnr", db_json(r.hazy_psnr)}});
  json disp = {{"range", s.l1_dispersion.range},
               {"std", s.l1_dispersion.std},
               {"cv", s.l1_dispersion.cv ? json(*s.l1_dispersion.cv) : json(nullptr)},
               {"scenes", s.l1_dispersion.scenes},
               {"variants", s.l1_dispersion.variants}};
  return {{"records", records},
          {"summary",
           {{"mean_psnr", db_json(s.mean_psnr)},
            {"mean_ssim", s.mean_ssim},
            {"mean_hazy_psnr", db_json(s.mean_hazy_psnr)},
            {"count", s.records.size()},
            {"l1_dispersion", disp}}}};
}

}  // namespace tsdn
