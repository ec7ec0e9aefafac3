#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "image.hpp"
#include "nets.hpp"
#include "tensor.hpp"

namespace tsdn {

inline constexpr double kLogClamp = 1e-7;

struct LossWeights {
  double lambda1 = 1e-3;     // intra adversarial
  double lambda2 = 1e-3;     // inter adversarial
  double lambda3 = 1.0;      // synthetic L1 reconstruction
  double lambda4 = 1.0;      // real-domain prior loss
  double lambda_dc = 1e-2;   // dark channel term inside the real-domain loss
  double lambda_tv = 1e-3;   // total variation term inside the real-domain loss
  std::size_t dc_patch = 0;  // 0 picks max(3, crop*15/256)

  void validate() const;
  std::size_t patch_for(std::size_t crop) const;
};

// Per-term values of one optimization step. Unused terms stay 0.
struct LossReport {
  double intra = 0.0;
  double inter = 0.0;
  double sys = 0.0;
  double dc = 0.0;
  double tv = 0.0;
  double real = 0.0;
  double total = 0.0;
  // Intra phase: per group, the L1 loss of each variant.
  std::vector<std::vector<double>> per_variant;
};

struct L1Result {
  double mean = 0.0;
  std::vector<double> per_image;
};

// Mean absolute error per image; `mean` averages the per-image values.
L1Result l1_dehaze(const Tensor& pred, const Tensor& clear);
// Gradient of the batch mean w.r.t. pred.
Tensor l1_dehaze_grad(const Tensor& pred, const Tensor& clear);

struct AdversarialTerm {
  double value = 0.0;
  Tensor grad_source;  // d value / d source scores
  Tensor grad_target;  // d value / d target scores
};

// -(1/m) sum_j sum_hw [log D(F_b) + log(1 - D(F_j))] with labels 1 (base) / 0 (others).
// base: [1,1,h,w]; others: [m,1,h,w], m >= 1.
AdversarialTerm intra_adversarial(const Tensor& base_scores, const Tensor& other_scores);
// Summed BCE over pairs: rows of `source_scores` carry label z = source_label, rows of
// `target_scores` carry 1 - z. With z = 1 this is -sum_hw [log D(F_s) + log(1 - D(F_r))].
// Both inputs are [b,1,h,w].
AdversarialTerm inter_adversarial(const Tensor& source_scores, const Tensor& target_scores, int source_label = 1);

// Feature-level forms: run the discriminator and evaluate the loss.
double intra_adv_loss(Network& d_intra, const Tensor& base_feature, std::span<const Tensor> others,
                      const NetworkConfig& cfg);
double inter_adv_loss(Network& d_inter, const Tensor& syn_feature, const Tensor& real_feature,
                      const NetworkConfig& cfg);

// Non-overlapping patch minimum over channels and pixels; sizes not divisible by `patch`
// are reflect-padded. [b,c,h,w] -> [b,1,ceil(h/p),ceil(w/p)].
Tensor dark_channel(const Tensor& images, std::size_t patch);
Tensor dark_channel(const Image& image, std::size_t patch);
double dc_loss(const Tensor& images, std::size_t patch);
Tensor dc_loss_grad(const Tensor& images, std::size_t patch);

// (1/w) sum |I[y][x+1]-I[y][x]| + (1/h) sum |I[y+1][x]-I[y][x]| per channel,
// averaged over channels and batch.
double tv_loss(const Tensor& images);
Tensor tv_loss_grad(const Tensor& images);

double real_loss(const Tensor& pred_real, const LossWeights& w, std::size_t patch);
Tensor real_loss_grad(const Tensor& pred_real, const LossWeights& w, std::size_t patch);

double total_intra(const LossReport& r, const LossWeights& w);
double total_inter(const LossReport& r, const LossWeights& w);

}  // namespace tsdn
