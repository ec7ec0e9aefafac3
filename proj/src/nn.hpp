#pragma once

#include <memory>
#include <string>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

namespace tsdn::nn {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

// A differentiable NCHW operator. `forward` caches whatever `backward` needs,
// so each forward must be matched by at most one backward before the next forward.
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x) = 0;
  // Returns d(loss)/d(input) and accumulates parameter gradients.
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual void collect(std::vector<Parameter*>& out) { (void)out; }
  virtual std::unique_ptr<Layer> clone() const = 0;
};

// 2-D convolution with edge-replicate padding, so constant inputs stay constant.
class Conv2d final : public Layer {
 public:
  // He-normal weights scaled by gain; zero bias.
  Conv2d(std::string name, std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, Rng& init,
         double gain = 1.0);
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(std::vector<Parameter*>& out) override;
  std::unique_ptr<Layer> clone() const override;

 private:
  std::size_t in_, out_, k_, stride_, pad_;
  Parameter weight_, bias_;
  std::vector<std::size_t> in_shape_;
  std::size_t out_h_ = 0, out_w_ = 0;
  std::vector<double> cols_;  // per-sample im2col buffers, concatenated
};

class InstanceNorm final : public Layer {
 public:
  InstanceNorm(std::string name, std::size_t channels, double eps = 1e-5);
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(std::vector<Parameter*>& out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<InstanceNorm>(*this); }

 private:
  double eps_;
  Parameter gamma_, beta_;
  Tensor normalized_;
  std::vector<double> inv_std_;
};

class ReLU final : public Layer {
 public:
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ReLU>(*this); }

 private:
  Tensor input_;
};

class LeakyReLU final : public Layer {
 public:
  explicit LeakyReLU(double slope = 0.2) : slope_(slope) {}
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<LeakyReLU>(*this); }

 private:
  double slope_;
  Tensor input_;
};

class Sigmoid final : public Layer {
 public:
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Sigmoid>(*this); }

 private:
  Tensor output_;
};

// Nearest-neighbour x2 upsampling.
class Upsample2x final : public Layer {
 public:
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Upsample2x>(*this); }
};

// Identity forward; backward multiplies the incoming gradient by -lambda.
class GradientReversal final : public Layer {
 public:
  explicit GradientReversal(double lambda) : lambda_(lambda) {}
  Tensor forward(const Tensor& x) override { return x; }
  Tensor backward(const Tensor& grad_out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<GradientReversal>(*this); }
  double lambda() const { return lambda_; }

 private:
  double lambda_;
};

class Sequential : public Layer {
 public:
  Sequential() = default;
  Sequential(const Sequential& other);
  Sequential& operator=(const Sequential& other);
  Sequential(Sequential&&) = default;
  Sequential& operator=(Sequential&&) = default;

  Sequential& add(std::unique_ptr<Layer> layer);
  template <typename L, typename... Args>
  Sequential& emplace(Args&&... args) {
    return add(std::make_unique<L>(std::forward<Args>(args)...));
  }

  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(std::vector<Parameter*>& out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Sequential>(*this); }
  std::size_t layers() const { return layers_.size(); }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// y = x + body(x)
class Residual final : public Layer {
 public:
  explicit Residual(Sequential body) : body_(std::move(body)) {}
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(std::vector<Parameter*>& out) override { body_.collect(out); }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Residual>(*this); }

 private:
  Sequential body_;
};

}  // namespace tsdn::nn
