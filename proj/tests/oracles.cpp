#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tsdn::oracle {

double l1(const Tensor& a, const Tensor& b, std::size_t n) {
  const std::size_t per = a.size() / a.dim(0);
  double s = 0.0;
  for (std::size_t i = 0; i < per; ++i) s += std::abs(a[n * per + i] - b[n * per + i]);
  return s / double(per);
}

namespace {
std::size_t mirror(std::size_t i, std::size_t n) { return i < n ? i : 2 * (n - 1) - i; }
}  // namespace

Tensor dark_channel(const Tensor& x, std::size_t p) {
  const std::size_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t ph = (h + p - 1) / p, pw = (w + p - 1) / p;
  Tensor out = Tensor::nchw(b, 1, ph, pw);
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t i = 0; i < ph; ++i)
      for (std::size_t j = 0; j < pw; ++j) {
        double m = std::numeric_limits<double>::infinity();
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t dy = 0; dy < p; ++dy)
            for (std::size_t dx = 0; dx < p; ++dx)
              m = std::min(m, x.at(n, ch, mirror(i * p + dy, h), mirror(j * p + dx, w)));
        out.at(n, 0, i, j) = m;
      }
  return out;
}

double tv(const Tensor& x) {
  const std::size_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  double total = 0.0;
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t ch = 0; ch < c; ++ch) {
      double hor = 0.0, ver = 0.0;
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t xx = 0; xx + 1 < w; ++xx) hor += std::abs(x.at(n, ch, y, xx + 1) - x.at(n, ch, y, xx));
      for (std::size_t y = 0; y + 1 < h; ++y)
        for (std::size_t xx = 0; xx < w; ++xx) ver += std::abs(x.at(n, ch, y + 1, xx) - x.at(n, ch, y, xx));
      total += hor / double(w) + ver / double(h);
    }
  return total / double(b * c);
}

double psnr(const Image& a, const Image& b) {
  double se = 0.0;
  for (std::size_t y = 0; y < a.height; ++y)
    for (std::size_t x = 0; x < a.width; ++x)
      for (std::size_t c = 0; c < a.channels; ++c) se += std::pow(a.at(y, x, c) - b.at(y, x, c), 2);
  return 10.0 * std::log10(1.0 / (se / double(a.size())));
}

double ssim(const Image& a, const Image& b) {
  const auto gray = [](const Image& im, std::size_t y, std::size_t x) {
    double s = 0.0;
    for (std::size_t c = 0; c < im.channels; ++c) s += im.at(y, x, c);
    return s / double(im.channels);
  };
  double w[11][11], wsum = 0.0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) wsum += w[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t y = 0; y + 11 <= a.height; ++y)
    for (std::size_t x = 0; x + 11 <= a.width; ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          const double wi = w[i][j] / wsum, va = gray(a, y + i, x + j), vb = gray(b, y + i, x + j);
          ma += wi * va;
          mb += wi * vb;
          saa += wi * va * va;
          sbb += wi * vb * vb;
          sab += wi * va * vb;
        }
      const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return total / double(count);
}

}  // namespace tsdn::oracle
