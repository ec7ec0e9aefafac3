#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nn.hpp"

namespace tsdn {

struct NetworkConfig {
  std::size_t base_channels = 32;
  std::size_t num_residual_blocks = 4;
  std::size_t downsample = 4;  // spatial factor s between image and feature; power of two, at most 8
  std::size_t feature_channels = 64;
  std::size_t discriminator_channels = 64;
  bool instance_norm = true;
  double grl_lambda = 0.1;
  std::uint64_t init_seed = 0;

  void validate() const;
  std::size_t stride2_stages() const;
};

// A named differentiable network with a trainability flag.
class Network {
 public:
  Network() = default;
  Network(std::string name, nn::Sequential body);
  Network(const Network& other);
  Network& operator=(const Network& other);

  const std::string& name() const { return name_; }
  Tensor forward(const Tensor& x) { return body_.forward(x); }
  Tensor backward(const Tensor& g) { return body_.backward(g); }

  std::vector<nn::Parameter*>& parameters() { return params_; }
  std::vector<const nn::Parameter*> parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();

  // Renames the network and re-prefixes its parameter names.
  void rename(const std::string& name);

  bool trainable() const { return trainable_; }
  void set_trainable(bool flag) { trainable_ = flag; }

 private:
  void rebind();

  std::string name_;
  nn::Sequential body_;
  std::vector<nn::Parameter*> params_;
  bool trainable_ = true;
};

Network make_extractor(const NetworkConfig& cfg, const std::string& name, Rng& init);
Network make_reconstructor(const NetworkConfig& cfg, const std::string& name, Rng& init);
Network make_discriminator(const NetworkConfig& cfg, const std::string& name, Rng& init);

// Every network of a run.
struct ModelBundle {
  NetworkConfig config;
  Network extractor;
  Network real_extractor;
  Network reconstructor;
  Network intra_discriminator;
  Network inter_discriminator;

  static ModelBundle create(const NetworkConfig& cfg);
  std::vector<Network*> networks();
  Network& by_name(const std::string& name);
};

// Image batch [b,3,h,w] -> feature batch [b,k,h/s,w/s].
Tensor extract(Network& extractor, const Tensor& images, const NetworkConfig& cfg);
// Feature batch [b,k,h',w'] -> image batch [b,3,h'*s,w'*s] in [0,1].
Tensor reconstruct(Network& reconstructor, const Tensor& features, const NetworkConfig& cfg);
// Feature batch -> score maps [b,1,h',w'] strictly inside (0,1).
Tensor discriminate(Network& discriminator, const Tensor& features, const NetworkConfig& cfg);

// Forward identity of the gradient reversal layer; backward scales by -lambda.
Tensor grl_forward(const Tensor& features);
Tensor grl_backward(const Tensor& grad, double lambda);

Network clone_extractor(const Network& extractor, const std::string& name);
void set_trainable(Network& net, bool flag);

}  // namespace tsdn
