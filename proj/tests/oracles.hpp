#pragma once

// Direct loop implementations used as references. Written for clarity, not speed.

#include "image.hpp"
#include "tensor.hpp"

namespace tsdn::oracle {

double l1(const Tensor& a, const Tensor& b, std::size_t n);
// Non-overlapping patch minimum with mirror padding that does not repeat the edge sample.
Tensor dark_channel(const Tensor& x, std::size_t patch);
double tv(const Tensor& x);
double psnr(const Image& a, const Image& b);
// Grayscale channel mean, 11x11 Gaussian window (sigma 1.5), valid windows only.
double ssim(const Image& a, const Image& b);

}  // namespace tsdn::oracle
