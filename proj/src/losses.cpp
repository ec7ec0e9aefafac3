#include "losses.hpp"

#include <algorithm>
#include <cmath>

#include "errors.hpp"

namespace tsdn {

void LossWeights::validate() const {
  for (double v : {lambda1, lambda2, lambda3, lambda4, lambda_dc, lambda_tv})
    require(v >= 0.0 && std::isfinite(v), ErrorCode::InvalidConfig, "loss weights must be finite and >= 0");
  require(lambda3 > 0.0, ErrorCode::InvalidConfig, "lambda3 must be > 0 (reconstruction must stay active)");
}

std::size_t LossWeights::patch_for(std::size_t crop) const {
  if (dc_patch > 0) return dc_patch;
  return std::max<std::size_t>(3, crop * 15 / 256);
}

L1Result l1_dehaze(const Tensor& pred, const Tensor& clear) {
  require(pred.same_shape(clear) && pred.rank() >= 1, ErrorCode::Shape,
          "l1_dehaze: " + pred.shape_str() + " vs " + clear.shape_str());
  L1Result r;
  const std::size_t n = pred.dim(0), m = pred.stride0();
  r.per_image.assign(n, 0.0);
  for (std::size_t b = 0; b < n; ++b) {
    double s = 0.0;
    for (std::size_t i = b * m; i < (b + 1) * m; ++i) s += std::abs(pred[i] - clear[i]);
    r.per_image[b] = s / double(m);
    r.mean += r.per_image[b];
  }
  r.mean /= double(n);
  return r;
}

Tensor l1_dehaze_grad(const Tensor& pred, const Tensor& clear) {
  require(pred.same_shape(clear), ErrorCode::Shape, "l1_dehaze_grad: shape mismatch");
  Tensor g(pred.shape());
  const double scale = 1.0 / double(pred.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double d = pred[i] - clear[i];
    g[i] = d > 0.0 ? scale : (d < 0.0 ? -scale : 0.0);
  }
  return g;
}

namespace {

// -log(max(p, eps)) and its derivative.
double neg_log(double p, double& dp) {
  if (p > kLogClamp) {
    dp = -1.0 / p;
    return -std::log(p);
  }
  dp = 0.0;
  return -std::log(kLogClamp);
}

// Sum of BCE over a score tensor with a fixed label, scaled by `scale`; writes gradient.
double bce_sum(const Tensor& scores, int label, double scale, Tensor& grad) {
  grad = Tensor(scores.shape());
  double s = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double p = scores[i];
    require(std::isfinite(p), ErrorCode::Divergence, "non-finite discriminator score");
    double d = 0.0;
    if (label == 1) {
      s += neg_log(p, d);
      grad[i] = scale * d;
    } else {
      s += neg_log(1.0 - p, d);
      grad[i] = -scale * d;
    }
  }
  return scale * s;
}

}  // namespace

AdversarialTerm intra_adversarial(const Tensor& base_scores, const Tensor& other_scores) {
  require(base_scores.rank() == 4 && base_scores.dim(0) == 1, ErrorCode::Shape,
          "intra_adversarial: base must be a single score map");
  require(other_scores.rank() == 4 && other_scores.dim(0) >= 1, ErrorCode::InvalidInput,
          "intra_adversarial: need at least one non-base feature");
  require(std::equal(base_scores.shape().begin() + 1, base_scores.shape().end(), other_scores.shape().begin() + 1),
          ErrorCode::Shape, "intra_adversarial: score map shapes differ");
  const double m = double(other_scores.dim(0));
  AdversarialTerm t;
  // The base term appears once per j and is averaged by 1/(n-1), so it counts once.
  t.value = bce_sum(base_scores, 1, 1.0, t.grad_source) + bce_sum(other_scores, 0, 1.0 / m, t.grad_target);
  return t;
}

AdversarialTerm inter_adversarial(const Tensor& source_scores, const Tensor& target_scores, int source_label) {
  require(source_scores.same_shape(target_scores), ErrorCode::Shape,
          "inter_adversarial: " + source_scores.shape_str() + " vs " + target_scores.shape_str());
  require(source_label == 0 || source_label == 1, ErrorCode::InvalidInput, "labels are 0 or 1");
  AdversarialTerm t;
  t.value = bce_sum(source_scores, source_label, 1.0, t.grad_source) +
            bce_sum(target_scores, 1 - source_label, 1.0, t.grad_target);
  return t;
}

double intra_adv_loss(Network& d_intra, const Tensor& base_feature, std::span<const Tensor> others,
                      const NetworkConfig& cfg) {
  require(!others.empty(), ErrorCode::InvalidInput, "intra_adv_loss: others is empty");
  std::vector<const Tensor*> parts{&base_feature};
  for (const Tensor& o : others) {
    require(o.same_shape(base_feature), ErrorCode::Shape, "intra_adv_loss: feature shapes differ");
    parts.push_back(&o);
  }
  const Tensor scores = discriminate(d_intra, concat0(parts), cfg);
  return intra_adversarial(take0(scores, 0, 1), take0(scores, 1, others.size())).value;
}

double inter_adv_loss(Network& d_inter, const Tensor& syn_feature, const Tensor& real_feature,
                      const NetworkConfig& cfg) {
  require(syn_feature.same_shape(real_feature), ErrorCode::Shape, "inter_adv_loss: feature shapes differ");
  const Tensor scores = discriminate(d_inter, concat0(syn_feature, real_feature), cfg);
  const std::size_t b = syn_feature.dim(0);
  return inter_adversarial(take0(scores, 0, b), take0(scores, b, b)).value;
}

namespace {

std::size_t reflect(std::size_t i, std::size_t n) {
  if (i < n) return i;
  if (n == 1) return 0;
  const std::size_t period = 2 * n - 2;
  std::size_t j = i % period;
  return j < n ? j : period - j;
}

// For each output cell, the flat input index of the (first) minimum.
std::vector<std::size_t> dark_argmin(const Tensor& x, std::size_t patch, Tensor& out) {
  require(x.rank() == 4, ErrorCode::Shape, "dark_channel: expected [b,c,h,w]");
  require(patch >= 1, ErrorCode::InvalidInput, "dark_channel: patch must be >= 1");
  const std::size_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t ph = (h + patch - 1) / patch, pw = (w + patch - 1) / patch;
  out = Tensor::nchw(b, 1, ph, pw);
  std::vector<std::size_t> arg(out.size());
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t py = 0; py < ph; ++py)
      for (std::size_t px = 0; px < pw; ++px) {
        double best = HUGE_VAL;
        std::size_t best_i = 0;
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t dy = 0; dy < patch; ++dy)
            for (std::size_t dx = 0; dx < patch; ++dx) {
              const std::size_t y = reflect(py * patch + dy, h), xx = reflect(px * patch + dx, w);
              const std::size_t idx = ((n * c + ch) * h + y) * w + xx;
              if (x[idx] < best) {
                best = x[idx];
                best_i = idx;
              }
            }
        const std::size_t o = (n * ph + py) * pw + px;
        out[o] = best;
        arg[o] = best_i;
      }
  return arg;
}

}  // namespace

Tensor dark_channel(const Tensor& images, std::size_t patch) {
  Tensor out;
  dark_argmin(images, patch, out);
  return out;
}

Tensor dark_channel(const Image& image, std::size_t patch) { return dark_channel(to_tensor(image), patch); }

double dc_loss(const Tensor& images, std::size_t patch) {
  const Tensor dc = dark_channel(images, patch);
  double s = 0.0;
  for (double v : dc.values()) s += std::abs(v);
  return s / double(dc.size());
}

Tensor dc_loss_grad(const Tensor& images, std::size_t patch) {
  Tensor dc;
  const std::vector<std::size_t> arg = dark_argmin(images, patch, dc);
  Tensor g(images.shape());
  const double scale = 1.0 / double(dc.size());
  for (std::size_t o = 0; o < dc.size(); ++o) {
    const double v = dc[o];
    g[arg[o]] += v > 0.0 ? scale : (v < 0.0 ? -scale : 0.0);
  }
  return g;
}

double tv_loss(const Tensor& images) {
  require(images.rank() == 4, ErrorCode::Shape, "tv_loss: expected [b,c,h,w]");
  const std::size_t b = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
  require(h >= 2 && w >= 2, ErrorCode::InvalidInput, "tv_loss: image must be at least 2x2");
  double total = 0.0;
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t ch = 0; ch < c; ++ch) {
      double horiz = 0.0, vert = 0.0;
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          if (x + 1 < w) horiz += std::abs(images.at(n, ch, y, x + 1) - images.at(n, ch, y, x));
          if (y + 1 < h) vert += std::abs(images.at(n, ch, y + 1, x) - images.at(n, ch, y, x));
        }
      total += horiz / double(w) + vert / double(h);
    }
  return total / double(b * c);
}

Tensor tv_loss_grad(const Tensor& images) {
  require(images.rank() == 4, ErrorCode::Shape, "tv_loss_grad: expected [b,c,h,w]");
  const std::size_t b = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
  require(h >= 2 && w >= 2, ErrorCode::InvalidInput, "tv_loss: image must be at least 2x2");
  Tensor g(images.shape());
  const double norm = 1.0 / double(b * c);
  auto sgn = [](double d) { return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0); };
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          if (x + 1 < w) {
            const double s = sgn(images.at(n, ch, y, x + 1) - images.at(n, ch, y, x)) * norm / double(w);
            g.at(n, ch, y, x + 1) += s;
            g.at(n, ch, y, x) -= s;
          }
          if (y + 1 < h) {
            const double s = sgn(images.at(n, ch, y + 1, x) - images.at(n, ch, y, x)) * norm / double(h);
            g.at(n, ch, y + 1, x) += s;
            g.at(n, ch, y, x) -= s;
          }
        }
  return g;
}

double real_loss(const Tensor& pred_real, const LossWeights& w, std::size_t patch) {
  require(w.lambda_dc >= 0.0 && w.lambda_tv >= 0.0, ErrorCode::InvalidInput, "real_loss: negative weight");
  double v = 0.0;
  if (w.lambda_dc > 0.0) v += w.lambda_dc * dc_loss(pred_real, patch);
  if (w.lambda_tv > 0.0) v += w.lambda_tv * tv_loss(pred_real);
  return v;
}

Tensor real_loss_grad(const Tensor& pred_real, const LossWeights& w, std::size_t patch) {
  Tensor g(pred_real.shape());
  if (w.lambda_dc > 0.0) {
    Tensor d = dc_loss_grad(pred_real, patch);
    d *= w.lambda_dc;
    g += d;
  }
  if (w.lambda_tv > 0.0) {
    Tensor t = tv_loss_grad(pred_real);
    t *= w.lambda_tv;
    g += t;
  }
  return g;
}

double total_intra(const LossReport& r, const LossWeights& w) { return w.lambda1 * r.intra + w.lambda3 * r.sys; }

double total_inter(const LossReport& r, const LossWeights& w) {
  return w.lambda2 * r.inter + w.lambda3 * r.sys + w.lambda4 * r.real;
}

}  // namespace tsdn
