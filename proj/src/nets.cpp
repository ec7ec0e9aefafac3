#include "nets.hpp"

#include "errors.hpp"

namespace tsdn {

void NetworkConfig::validate() const {
  require(base_channels >= 1 && num_residual_blocks >= 1 && feature_channels >= 1 && discriminator_channels >= 1,
          ErrorCode::InvalidConfig, "network channel and block counts must be >= 1");
  require(downsample == 1 || downsample == 2 || downsample == 4 || downsample == 8, ErrorCode::InvalidConfig,
          "downsample factor must be 1, 2, 4 or 8");
  require(grl_lambda >= 0.0, ErrorCode::InvalidConfig, "grl_lambda must be >= 0");
}

std::size_t NetworkConfig::stride2_stages() const {
  std::size_t n = 0;
  for (std::size_t s = downsample; s > 1; s /= 2) ++n;
  return n;
}

Network::Network(std::string name, nn::Sequential body) : name_(std::move(name)), body_(std::move(body)) { rebind(); }

Network::Network(const Network& other) : name_(other.name_), body_(other.body_), trainable_(other.trainable_) {
  rebind();
}

Network& Network::operator=(const Network& other) {
  if (this != &other) {
    name_ = other.name_;
    body_ = other.body_;
    trainable_ = other.trainable_;
    rebind();
  }
  return *this;
}

void Network::rebind() {
  params_.clear();
  body_.collect(params_);
}

void Network::rename(const std::string& name) {
  for (nn::Parameter* p : params_)
    if (p->name.rfind(name_ + ".", 0) == 0) p->name = name + p->name.substr(name_.size());
  name_ = name;
}

std::vector<const nn::Parameter*> Network::parameters() const { return {params_.begin(), params_.end()}; }

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const nn::Parameter* p : params_) n += p->value.size();
  return n;
}

void Network::zero_grad() {
  for (nn::Parameter* p : params_) p->grad.fill(0.0);
}

namespace {

void add_stage(nn::Sequential& seq, const std::string& name, std::size_t in, std::size_t out, std::size_t stride,
               bool norm, Rng& init) {
  seq.emplace<nn::Conv2d>(name + ".conv", in, out, 3, stride, init);
  if (norm) seq.emplace<nn::InstanceNorm>(name + ".norm", out);
  seq.emplace<nn::ReLU>();
}

void add_residual_blocks(nn::Sequential& seq, const std::string& name, const NetworkConfig& cfg, Rng& init) {
  const std::size_t k = cfg.feature_channels;
  for (std::size_t i = 0; i < cfg.num_residual_blocks; ++i) {
    const std::string p = name + ".res" + std::to_string(i);
    nn::Sequential body;
    body.emplace<nn::Conv2d>(p + ".conv0", k, k, 3, 1, init);
    if (cfg.instance_norm) body.emplace<nn::InstanceNorm>(p + ".norm0", k);
    body.emplace<nn::ReLU>();
    // Small residual branches keep the identity path dominant at initialization.
    body.emplace<nn::Conv2d>(p + ".conv1", k, k, 3, 1, init, 0.1);
    if (cfg.instance_norm) body.emplace<nn::InstanceNorm>(p + ".norm1", k);
    seq.emplace<nn::Residual>(std::move(body));
  }
}

}  // namespace

// Three convolution stages (the last log2(s) of them stride 2) then residual blocks.
Network make_extractor(const NetworkConfig& cfg, const std::string& name, Rng& init) {
  cfg.validate();
  const std::size_t c = cfg.base_channels;
  const std::size_t widths[] = {3, c, 2 * c, cfg.feature_channels};
  const std::size_t first_down = 3 - cfg.stride2_stages();
  nn::Sequential seq;
  for (std::size_t i = 0; i < 3; ++i)
    add_stage(seq, name + ".enc" + std::to_string(i), widths[i], widths[i + 1], i >= first_down ? 2 : 1,
              cfg.instance_norm && i > 0, init);
  add_residual_blocks(seq, name, cfg, init);
  return Network(name, std::move(seq));
}

// Mirror of the extractor, ending in a sigmoid.
Network make_reconstructor(const NetworkConfig& cfg, const std::string& name, Rng& init) {
  cfg.validate();
  const std::size_t c = cfg.base_channels;
  nn::Sequential seq;
  add_residual_blocks(seq, name, cfg, init);
  const std::size_t widths[] = {cfg.feature_channels, 2 * c, c};
  const std::size_t ups = cfg.stride2_stages();
  // Stages 0..2; stage i upsamples when i < ups. Stage 2 is the output projection.
  for (std::size_t i = 0; i < 2; ++i) {
    if (i < ups) seq.emplace<nn::Upsample2x>();
    add_stage(seq, name + ".dec" + std::to_string(i), widths[i], widths[i + 1], 1, cfg.instance_norm, init);
  }
  if (ups == 3) seq.emplace<nn::Upsample2x>();
  seq.emplace<nn::Conv2d>(name + ".out", c, 3, 3, 1, init, 0.1);
  seq.emplace<nn::Sigmoid>();
  return Network(name, std::move(seq));
}

// Stride-1 leaky-ReLU convolutions with a sigmoid head; one score per feature pixel.
Network make_discriminator(const NetworkConfig& cfg, const std::string& name, Rng& init) {
  cfg.validate();
  const std::size_t d = cfg.discriminator_channels;
  nn::Sequential seq;
  seq.emplace<nn::Conv2d>(name + ".conv0", cfg.feature_channels, d, 3, 1, init);
  seq.emplace<nn::LeakyReLU>(0.2);
  seq.emplace<nn::Conv2d>(name + ".conv1", d, d, 3, 1, init);
  seq.emplace<nn::LeakyReLU>(0.2);
  seq.emplace<nn::Conv2d>(name + ".conv2", d, d, 3, 1, init);
  seq.emplace<nn::LeakyReLU>(0.2);
  seq.emplace<nn::Conv2d>(name + ".head", d, 1, 3, 1, init);
  seq.emplace<nn::Sigmoid>();
  return Network(name, std::move(seq));
}

ModelBundle ModelBundle::create(const NetworkConfig& cfg) {
  cfg.validate();
  ModelBundle b;
  b.config = cfg;
  Rng g_init = Rng::derive(cfg.init_seed, "init:G");
  Rng r_init = Rng::derive(cfg.init_seed, "init:R");
  Rng di_init = Rng::derive(cfg.init_seed, "init:D_intra");
  Rng de_init = Rng::derive(cfg.init_seed, "init:D_inter");
  b.extractor = make_extractor(cfg, "G", g_init);
  b.real_extractor = clone_extractor(b.extractor, "Gp");
  b.reconstructor = make_reconstructor(cfg, "R", r_init);
  b.intra_discriminator = make_discriminator(cfg, "D_intra", di_init);
  b.inter_discriminator = make_discriminator(cfg, "D_inter", de_init);
  return b;
}

std::vector<Network*> ModelBundle::networks() {
  return {&extractor, &real_extractor, &reconstructor, &intra_discriminator, &inter_discriminator};
}

Network& ModelBundle::by_name(const std::string& name) {
  for (Network* n : networks())
    if (n->name() == name) return *n;
  fail(ErrorCode::InvalidInput, "no network named " + name);
}

Tensor extract(Network& extractor, const Tensor& images, const NetworkConfig& cfg) {
  require(images.rank() == 4 && images.dim(1) == 3, ErrorCode::Shape, "extract: expected [b,3,h,w] images");
  require(images.dim(2) % cfg.downsample == 0 && images.dim(3) % cfg.downsample == 0, ErrorCode::Shape,
          "extract: spatial size " + images.shape_str() + " not divisible by " + std::to_string(cfg.downsample));
  return extractor.forward(images);
}

Tensor reconstruct(Network& reconstructor, const Tensor& features, const NetworkConfig& cfg) {
  require(features.rank() == 4 && features.dim(1) == cfg.feature_channels, ErrorCode::Shape,
          "reconstruct: expected " + std::to_string(cfg.feature_channels) + " feature channels, got " +
              features.shape_str());
  return reconstructor.forward(features);
}

Tensor discriminate(Network& discriminator, const Tensor& features, const NetworkConfig& cfg) {
  require(features.rank() == 4 && features.dim(1) == cfg.feature_channels, ErrorCode::Shape,
          "discriminate: expected " + std::to_string(cfg.feature_channels) + " feature channels, got " +
              features.shape_str());
  return discriminator.forward(features);
}

Tensor grl_forward(const Tensor& features) { return features; }

Tensor grl_backward(const Tensor& grad, double lambda) {
  require(lambda >= 0.0, ErrorCode::InvalidInput, "grl lambda must be >= 0");
  return nn::GradientReversal(lambda).backward(grad);
}

Network clone_extractor(const Network& extractor, const std::string& name) {
  Network copy(extractor);
  copy.rename(name);
  copy.set_trainable(true);
  return copy;
}

void set_trainable(Network& net, bool flag) { net.set_trainable(flag); }

}  // namespace tsdn
