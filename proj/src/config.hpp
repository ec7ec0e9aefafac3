#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <json.hpp>

#include "data.hpp"
#include "hazegen.hpp"
#include "losses.hpp"
#include "nets.hpp"
#include "optim.hpp"

namespace tsdn {

enum class Phase { Intra, Inter };
std::string to_string(Phase p);
Phase phase_from_string(const std::string& s);

struct PhaseConfig {
  Phase phase = Phase::Intra;
  std::size_t epochs = 30;
  SgdConfig dehazer;
  AdamConfig discriminator;
  double grl_lambda = 0.1;
  std::size_t freeze_R_epochs = 0;  // inter only

  void validate() const;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string data_dir = "data";
  SynthSpec synth;
  BatchOptions data{64, true, 0, 1};
  NetworkConfig net;
  LossWeights loss;
  PhaseConfig intra;
  PhaseConfig inter;

  RunConfig();
  void validate() const;
  // Options with the root seed applied to every derived stream.
  BatchOptions batch_options() const;
  NetworkConfig network_config() const;
};

nlohmann::json to_json(const RunConfig& cfg);
// Strict: unknown keys and missing sections are rejected with the offending key named.
RunConfig run_config_from_json(const nlohmann::json& doc);

// Loads a config file (or the built-in defaults for an empty path) and applies
// dotted-key overrides such as "train.intra.epochs=5". Values parse as JSON,
// falling back to a plain string.
class ConfigBuilder {
 public:
  ConfigBuilder();
  void load_file(const std::filesystem::path& path);
  void set(const std::string& dotted_key, const std::string& value);
  RunConfig resolve() const;
  const nlohmann::json& document() const { return doc_; }

 private:
  nlohmann::json doc_;
};

}  // namespace tsdn
