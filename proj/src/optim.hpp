#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "archive.hpp"
#include "nets.hpp"

namespace tsdn {

// Momentum SGD with L2 weight decay folded into the gradient:
//   g' = g + wd*p;  v = mu*v + g';  p -= lr*v
struct SgdConfig {
  double lr = 1.25e-4;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double clip_norm = 0.0;  // rescale the joint gradient to at most this L2 norm; 0 disables
};

// Adam with bias correction:
//   m = b1*m + (1-b1)g;  v = b2*v + (1-b2)g^2;  p -= lr * mhat / (sqrt(vhat) + eps)
struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
};

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  // Updates every parameter of each trainable network; frozen networks are untouched.
  void step(std::span<Network* const> nets);
  void step(Network& net) {
    Network* n[] = {&net};
    step(n);
  }

  std::vector<NamedTensor> state() const;
  void load_state(const std::vector<NamedTensor>& entries);

 protected:
  // Sees every parameter about to be updated before the first update.
  virtual void prepare(std::span<nn::Parameter* const>) {}
  virtual void update(nn::Parameter& p) = 0;
  std::map<std::string, std::vector<Tensor>> slots_;
  std::uint64_t steps_ = 0;
};

class Sgd final : public Optimizer {
 public:
  explicit Sgd(SgdConfig cfg) : cfg_(cfg) {}
  const SgdConfig& config() const { return cfg_; }

 private:
  void prepare(std::span<nn::Parameter* const> params) override;
  void update(nn::Parameter& p) override;
  SgdConfig cfg_;
  double grad_scale_ = 1.0;
};

class Adam final : public Optimizer {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}
  const AdamConfig& config() const { return cfg_; }

 private:
  void update(nn::Parameter& p) override;
  AdamConfig cfg_;
};

}  // namespace tsdn
