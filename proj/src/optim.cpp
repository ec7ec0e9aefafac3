#include "optim.hpp"

#include <cmath>

#include "errors.hpp"

namespace tsdn {

void Optimizer::step(std::span<Network* const> nets) {
  ++steps_;
  std::vector<nn::Parameter*> params;
  for (Network* n : nets)
    if (n->trainable())
      for (nn::Parameter* p : n->parameters()) params.push_back(p);
  prepare(params);
  for (nn::Parameter* p : params) update(*p);
}

std::vector<NamedTensor> Optimizer::state() const {
  std::vector<NamedTensor> out;
  out.push_back({"__steps__", Tensor({1}, static_cast<double>(steps_))});
  for (const auto& [name, slots] : slots_)
    for (std::size_t i = 0; i < slots.size(); ++i) out.push_back({name + "#" + std::to_string(i), slots[i]});
  return out;
}

void Optimizer::load_state(const std::vector<NamedTensor>& entries) {
  slots_.clear();
  steps_ = 0;
  for (const NamedTensor& e : entries) {
    if (e.name == "__steps__") {
      steps_ = static_cast<std::uint64_t>(e.tensor[0]);
      continue;
    }
    const auto hash = e.name.rfind('#');
    require(hash != std::string::npos, ErrorCode::Schema, "optimizer state entry without slot index: " + e.name);
    const std::string name = e.name.substr(0, hash);
    const std::size_t slot = std::stoul(e.name.substr(hash + 1));
    auto& slots = slots_[name];
    if (slots.size() <= slot) slots.resize(slot + 1);
    slots[slot] = e.tensor;
  }
}

void Sgd::prepare(std::span<nn::Parameter* const> params) {
  grad_scale_ = 1.0;
  if (cfg_.clip_norm <= 0.0) return;
  double sq = 0.0;
  for (const nn::Parameter* p : params)
    for (double g : p->grad.values()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > cfg_.clip_norm) grad_scale_ = cfg_.clip_norm / norm;
}

void Sgd::update(nn::Parameter& p) {
  auto& slots = slots_[p.name];
  if (slots.empty()) slots.emplace_back(p.value.shape());
  Tensor& v = slots[0];
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    const double g = grad_scale_ * p.grad[i] + cfg_.weight_decay * p.value[i];
    v[i] = cfg_.momentum * v[i] + g;
    p.value[i] -= cfg_.lr * v[i];
  }
}

void Adam::update(nn::Parameter& p) {
  auto& slots = slots_[p.name];
  if (slots.empty()) {
    slots.emplace_back(p.value.shape());
    slots.emplace_back(p.value.shape());
    slots.emplace_back(Tensor({1}));  // per-parameter step count
  }
  Tensor& m = slots[0];
  Tensor& v = slots[1];
  const double t = (slots[2][0] += 1.0);
  const double c1 = 1.0 - std::pow(cfg_.beta1, t), c2 = 1.0 - std::pow(cfg_.beta2, t);
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    const double g = p.grad[i];
    m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
    v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
    p.value[i] -= cfg_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
  }
}

}  // namespace tsdn
