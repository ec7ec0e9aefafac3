#include "nn.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "errors.hpp"

namespace tsdn::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void check_nchw(const Tensor& x, const char* who) {
  require(x.rank() == 4, ErrorCode::Shape, std::string(who) + ": expected NCHW tensor, got " + x.shape_str());
}

std::ptrdiff_t clamp_index(std::ptrdiff_t i, std::size_t n) {
  return std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(n) - 1);
}

}  // namespace

Conv2d::Conv2d(std::string name, std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, Rng& init,
               double gain)
    : in_(in), out_(out), k_(kernel), stride_(stride), pad_(kernel / 2) {
  require(in >= 1 && out >= 1 && kernel >= 1 && stride >= 1, ErrorCode::InvalidConfig, "conv: bad geometry");
  weight_ = {name + ".weight", Tensor({out, in, kernel, kernel}), Tensor({out, in, kernel, kernel})};
  bias_ = {name + ".bias", Tensor({out}), Tensor({out})};
  const double std = gain * std::sqrt(2.0 / double(in * kernel * kernel));
  for (double& w : weight_.value.values()) w = std * init.normal();
}

std::unique_ptr<Layer> Conv2d::clone() const { return std::make_unique<Conv2d>(*this); }

void Conv2d::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

Tensor Conv2d::forward(const Tensor& x) {
  check_nchw(x, "conv");
  require(x.dim(1) == in_, ErrorCode::Shape,
          weight_.name + ": expected " + std::to_string(in_) + " input channels, got " + x.shape_str());
  const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
  require(h + 2 * pad_ >= k_ && w + 2 * pad_ >= k_, ErrorCode::Shape, weight_.name + ": input smaller than kernel");
  in_shape_ = x.shape();
  out_h_ = (h + 2 * pad_ - k_) / stride_ + 1;
  out_w_ = (w + 2 * pad_ - k_) / stride_ + 1;
  const std::size_t rows = in_ * k_ * k_, cols = out_h_ * out_w_;
  cols_.assign(n * rows * cols, 0.0);
  Tensor y = Tensor::nchw(n, out_, out_h_, out_w_);
  ConstMapMat wmat(weight_.value.data(), out_, rows);
  for (std::size_t b = 0; b < n; ++b) {
    double* col = cols_.data() + b * rows * cols;
    const double* src = x.data() + b * x.stride0();
    for (std::size_t c = 0; c < in_; ++c)
      for (std::size_t ky = 0; ky < k_; ++ky)
        for (std::size_t kx = 0; kx < k_; ++kx) {
          double* row = col + ((c * k_ + ky) * k_ + kx) * cols;
          for (std::size_t oy = 0; oy < out_h_; ++oy) {
            const auto iy = clamp_index(std::ptrdiff_t(oy * stride_ + ky) - std::ptrdiff_t(pad_), h);
            const double* srow = src + (c * h + iy) * w;
            for (std::size_t ox = 0; ox < out_w_; ++ox) {
              const auto ix = clamp_index(std::ptrdiff_t(ox * stride_ + kx) - std::ptrdiff_t(pad_), w);
              row[oy * out_w_ + ox] = srow[ix];
            }
          }
        }
    MapMat ymat(y.data() + b * y.stride0(), out_, cols);
    ymat.noalias() = wmat * ConstMapMat(col, rows, cols);
    for (std::size_t o = 0; o < out_; ++o) ymat.row(o).array() += bias_.value[o];
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& grad_out) {
  const std::size_t n = in_shape_.at(0), h = in_shape_[2], w = in_shape_[3];
  require(grad_out.rank() == 4 && grad_out.dim(0) == n && grad_out.dim(1) == out_ && grad_out.dim(2) == out_h_ &&
              grad_out.dim(3) == out_w_,
          ErrorCode::Shape, weight_.name + ": gradient shape mismatch");
  const std::size_t rows = in_ * k_ * k_, cols = out_h_ * out_w_;
  Tensor gx(in_shape_);
  ConstMapMat wmat(weight_.value.data(), out_, rows);
  MapMat gw(weight_.grad.data(), out_, rows);
  RowMat gcol(rows, cols);
  for (std::size_t b = 0; b < n; ++b) {
    ConstMapMat col(cols_.data() + b * rows * cols, rows, cols);
    ConstMapMat gy(grad_out.data() + b * grad_out.stride0(), out_, cols);
    gw.noalias() += gy * col.transpose();
    for (std::size_t o = 0; o < out_; ++o) bias_.grad[o] += gy.row(o).sum();
    gcol.noalias() = wmat.transpose() * gy;
    double* dst = gx.data() + b * gx.stride0();
    for (std::size_t c = 0; c < in_; ++c)
      for (std::size_t ky = 0; ky < k_; ++ky)
        for (std::size_t kx = 0; kx < k_; ++kx) {
          const double* row = gcol.data() + ((c * k_ + ky) * k_ + kx) * cols;
          for (std::size_t oy = 0; oy < out_h_; ++oy) {
            const auto iy = clamp_index(std::ptrdiff_t(oy * stride_ + ky) - std::ptrdiff_t(pad_), h);
            double* drow = dst + (c * h + iy) * w;
            for (std::size_t ox = 0; ox < out_w_; ++ox) {
              const auto ix = clamp_index(std::ptrdiff_t(ox * stride_ + kx) - std::ptrdiff_t(pad_), w);
              drow[ix] += row[oy * out_w_ + ox];
            }
          }
        }
  }
  return gx;
}

InstanceNorm::InstanceNorm(std::string name, std::size_t channels, double eps) : eps_(eps) {
  gamma_ = {name + ".gamma", Tensor({channels}, 1.0), Tensor({channels})};
  beta_ = {name + ".beta", Tensor({channels}), Tensor({channels})};
}

void InstanceNorm::collect(std::vector<Parameter*>& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
}

Tensor InstanceNorm::forward(const Tensor& x) {
  check_nchw(x, "instance norm");
  const std::size_t n = x.dim(0), c = x.dim(1), m = x.dim(2) * x.dim(3);
  require(c == gamma_.value.size(), ErrorCode::Shape, gamma_.name + ": channel mismatch");
  normalized_ = Tensor(x.shape());
  inv_std_.assign(n * c, 0.0);
  Tensor y(x.shape());
  for (std::size_t i = 0; i < n * c; ++i) {
    const double* src = x.data() + i * m;
    double mean = 0.0;
    for (std::size_t j = 0; j < m; ++j) mean += src[j];
    mean /= double(m);
    double var = 0.0;
    for (std::size_t j = 0; j < m; ++j) var += (src[j] - mean) * (src[j] - mean);
    var /= double(m);
    const double inv = 1.0 / std::sqrt(var + eps_);
    inv_std_[i] = inv;
    const double g = gamma_.value[i % c], bt = beta_.value[i % c];
    double* xn = normalized_.data() + i * m;
    double* dst = y.data() + i * m;
    for (std::size_t j = 0; j < m; ++j) {
      xn[j] = (src[j] - mean) * inv;
      dst[j] = g * xn[j] + bt;
    }
  }
  return y;
}

Tensor InstanceNorm::backward(const Tensor& grad_out) {
  require(grad_out.same_shape(normalized_), ErrorCode::Shape, gamma_.name + ": gradient shape mismatch");
  const std::size_t c = normalized_.dim(1), m = normalized_.dim(2) * normalized_.dim(3);
  const std::size_t count = normalized_.dim(0) * c;
  Tensor gx(normalized_.shape());
  for (std::size_t i = 0; i < count; ++i) {
    const double* gy = grad_out.data() + i * m;
    const double* xn = normalized_.data() + i * m;
    const double g = gamma_.value[i % c];
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      sum_g += gy[j];
      sum_gx += gy[j] * xn[j];
    }
    gamma_.grad[i % c] += sum_gx;
    beta_.grad[i % c] += sum_g;
    // dx = g * inv/m * (m*gy - sum(gy) - xn*sum(gy*xn))
    const double scale = g * inv_std_[i] / double(m);
    double* dst = gx.data() + i * m;
    for (std::size_t j = 0; j < m; ++j) dst[j] = scale * (double(m) * gy[j] - sum_g - xn[j] * sum_gx);
  }
  return gx;
}

Tensor ReLU::forward(const Tensor& x) {
  input_ = x;
  Tensor y = x;
  for (double& v : y.values()) v = std::max(v, 0.0);
  return y;
}

Tensor ReLU::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (input_[i] <= 0.0) g[i] = 0.0;
  return g;
}

Tensor LeakyReLU::forward(const Tensor& x) {
  input_ = x;
  Tensor y = x;
  for (double& v : y.values())
    if (v < 0.0) v *= slope_;
  return y;
}

Tensor LeakyReLU::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (input_[i] < 0.0) g[i] *= slope_;
  return g;
}

Tensor Sigmoid::forward(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.values()) v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  output_ = y;
  return y;
}

Tensor Sigmoid::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= output_[i] * (1.0 - output_[i]);
  return g;
}

Tensor Upsample2x::forward(const Tensor& x) {
  check_nchw(x, "upsample");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor y = Tensor::nchw(n, c, 2 * h, 2 * w);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t yy = 0; yy < 2 * h; ++yy)
        for (std::size_t xx = 0; xx < 2 * w; ++xx) y.at(b, ch, yy, xx) = x.at(b, ch, yy / 2, xx / 2);
  return y;
}

Tensor Upsample2x::backward(const Tensor& grad_out) {
  const std::size_t n = grad_out.dim(0), c = grad_out.dim(1), h = grad_out.dim(2) / 2, w = grad_out.dim(3) / 2;
  Tensor g = Tensor::nchw(n, c, h, w);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t yy = 0; yy < 2 * h; ++yy)
        for (std::size_t xx = 0; xx < 2 * w; ++xx) g.at(b, ch, yy / 2, xx / 2) += grad_out.at(b, ch, yy, xx);
  return g;
}

Tensor GradientReversal::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  g *= -lambda_;
  return g;
}

Sequential::Sequential(const Sequential& other) {
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Sequential& Sequential::operator=(const Sequential& other) {
  if (this != &other) {
    layers_.clear();
    for (const auto& l : other.layers_) layers_.push_back(l->clone());
  }
  return *this;
}

Sequential& Sequential::add(std::unique_ptr<Layer> layer) {
  layers_.push_back(std::move(layer));
  return *this;
}

Tensor Sequential::forward(const Tensor& x) {
  Tensor h = x;
  for (auto& l : layers_) h = l->forward(h);
  return h;
}

Tensor Sequential::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

void Sequential::collect(std::vector<Parameter*>& out) {
  for (auto& l : layers_) l->collect(out);
}

Tensor Residual::forward(const Tensor& x) {
  Tensor y = body_.forward(x);
  y += x;
  return y;
}

Tensor Residual::backward(const Tensor& grad_out) {
  Tensor g = body_.backward(grad_out);
  g += grad_out;
  return g;
}

}  // namespace tsdn::nn
