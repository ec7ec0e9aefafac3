#include "config.hpp"

#include <fstream>
#include <set>

#include "errors.hpp"

namespace tsdn {

using nlohmann::json;

std::string to_string(Phase p) { return p == Phase::Intra ? "intra" : "inter"; }

Phase phase_from_string(const std::string& s) {
  if (s == "intra") return Phase::Intra;
  if (s == "inter") return Phase::Inter;
  fail(ErrorCode::InvalidConfig, "unknown phase '" + s + "'");
}

void PhaseConfig::validate() const {
  const std::string p = to_string(phase);
  require(epochs >= 1, ErrorCode::InvalidConfig, "train." + p + ".epochs must be >= 1");
  require(freeze_R_epochs <= epochs, ErrorCode::InvalidConfig, "train." + p + ".freeze_R_epochs exceeds epochs");
  require(dehazer.lr > 0.0 && discriminator.lr > 0.0, ErrorCode::InvalidConfig, "train." + p + ": lr must be > 0");
  require(dehazer.momentum >= 0.0 && dehazer.weight_decay >= 0.0 && dehazer.clip_norm >= 0.0,
          ErrorCode::InvalidConfig, "train." + p + ": momentum, weight decay and clip_norm must be >= 0");
  require(discriminator.beta1 >= 0.0 && discriminator.beta1 < 1.0 && discriminator.beta2 >= 0.0 &&
              discriminator.beta2 < 1.0,
          ErrorCode::InvalidConfig, "train." + p + ": adam betas must be in [0,1)");
  require(grl_lambda >= 0.0, ErrorCode::InvalidConfig, "train." + p + ".grl_lambda must be >= 0");
}

RunConfig::RunConfig() {
  intra.phase = Phase::Intra;
  intra.epochs = 200;
  intra.dehazer = {1.25e-4, 0.9, 5e-4};
  intra.discriminator = {1e-4, 0.9, 0.99, 1e-8};
  inter.phase = Phase::Inter;
  inter.epochs = 20;
  inter.freeze_R_epochs = 15;
  inter.dehazer = {1e-4, 0.9, 5e-4};
  inter.discriminator = {1e-4, 0.9, 0.99, 1e-8};
}

void RunConfig::validate() const {
  synth.validate();
  net.validate();
  loss.validate();
  intra.validate();
  inter.validate();
  require(data.crop >= 1 && data.batch_size >= 1, ErrorCode::InvalidConfig, "data.crop and data.batch_size >= 1");
  require(data.crop % net.downsample == 0, ErrorCode::InvalidConfig,
          "data.crop must be divisible by net.downsample");
  require(data.crop <= synth.height && data.crop <= synth.width, ErrorCode::InvalidConfig,
          "data.crop exceeds synth image size");
  require(synth.height % net.downsample == 0 && synth.width % net.downsample == 0, ErrorCode::InvalidConfig,
          "synth image size must be divisible by net.downsample");
}

BatchOptions RunConfig::batch_options() const {
  BatchOptions o = data;
  o.seed = seed;
  return o;
}

NetworkConfig RunConfig::network_config() const {
  NetworkConfig n = net;
  n.init_seed = seed;
  n.grl_lambda = intra.grl_lambda;
  return n;
}

namespace {

json range_json(Range r) { return json::array({r.lo, r.hi}); }

json phase_json(const PhaseConfig& p) {
  json j = {{"epochs", p.epochs},
            {"grl_lambda", p.grl_lambda},
            {"dehazer",
             {{"kind", "sgd"},
              {"lr", p.dehazer.lr},
              {"momentum", p.dehazer.momentum},
              {"weight_decay", p.dehazer.weight_decay},
              {"clip_norm", p.dehazer.clip_norm}}},
            {"discriminator",
             {{"kind", "adam"},
              {"lr", p.discriminator.lr},
              {"beta1", p.discriminator.beta1},
              {"beta2", p.discriminator.beta2},
              {"eps", p.discriminator.eps}}}};
  if (p.phase == Phase::Inter) j["freeze_R_epochs"] = p.freeze_R_epochs;
  return j;
}

// Reads keys from one JSON object, tracking which were consumed so leftovers are rejected.
class Section {
 public:
  Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) fail(ErrorCode::InvalidConfig, "config: " + path_ + " must be an object");
  }
  void done() const {
    for (const auto& [k, v] : obj_.items())
      if (!seen_.count(k)) fail(ErrorCode::InvalidConfig, "config: unknown key " + key(k));
  }

  const json& at(const std::string& k) {
    seen_.insert(k);
    if (!obj_.contains(k)) fail(ErrorCode::InvalidConfig, "config: missing key " + key(k));
    return obj_.at(k);
  }
  bool has(const std::string& k) const { return obj_.contains(k); }
  std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

  template <typename T>
  void get(const std::string& k, T& out) {
    const json& v = at(k);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw std::runtime_error("expected boolean");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw std::runtime_error("expected integer");
        if constexpr (std::is_unsigned_v<T>)
          if (v.get<long long>() < 0) throw std::runtime_error("expected nonnegative integer");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw std::runtime_error("expected number");
      }
      out = v.get<T>();
    } catch (const std::exception& e) {
      fail(ErrorCode::InvalidConfig, "config: " + key(k) + ": " + e.what());
    }
  }
  void get_range(const std::string& k, Range& r) {
    const json& v = at(k);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
      fail(ErrorCode::InvalidConfig, "config: " + key(k) + " must be [lo, hi]");
    r = {v[0].get<double>(), v[1].get<double>()};
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_phase(Section& parent, const std::string& name, PhaseConfig& p) {
  Section s(parent.at(name), parent.key(name));
  s.get("epochs", p.epochs);
  s.get("grl_lambda", p.grl_lambda);
  if (p.phase == Phase::Inter) s.get("freeze_R_epochs", p.freeze_R_epochs);
  {
    Section d(s.at("dehazer"), s.key("dehazer"));
    std::string kind;
    d.get("kind", kind);
    require(kind == "sgd", ErrorCode::InvalidConfig, "config: " + d.key("kind") + " must be \"sgd\"");
    d.get("lr", p.dehazer.lr);
    d.get("momentum", p.dehazer.momentum);
    d.get("weight_decay", p.dehazer.weight_decay);
    d.get("clip_norm", p.dehazer.clip_norm);
    d.done();
  }
  {
    Section d(s.at("discriminator"), s.key("discriminator"));
    std::string kind;
    d.get("kind", kind);
    require(kind == "adam", ErrorCode::InvalidConfig, "config: " + d.key("kind") + " must be \"adam\"");
    d.get("lr", p.discriminator.lr);
    d.get("beta1", p.discriminator.beta1);
    d.get("beta2", p.discriminator.beta2);
    d.get("eps", p.discriminator.eps);
    d.done();
  }
  s.done();
}

}  // namespace

json to_json(const RunConfig& c) {
  return {
      {"seed", c.seed},
      {"data_dir", c.data_dir},
      {"synth",
       {{"height", c.synth.height},
        {"width", c.synth.width},
        {"variants", c.synth.variants},
        {"scenes", c.synth.scenes},
        {"beta", range_json(c.synth.beta)},
        {"A", range_json(c.synth.airlight)},
        {"A_tint", c.synth.airlight_tint},
        {"depth", range_json(c.synth.depth)},
        {"seed", c.synth.seed},
        {"test_scenes", c.synth.test_scenes},
        {"real_images", c.synth.real_images},
        {"real_beta", range_json(c.synth.real_beta)},
        {"real_A", range_json(c.synth.real_airlight)},
        {"real_noise", c.synth.real_noise}}},
      {"data", {{"crop", c.data.crop}, {"flip", c.data.flip}, {"batch_size", c.data.batch_size}}},
      {"net",
       {{"base_channels", c.net.base_channels},
        {"num_residual_blocks", c.net.num_residual_blocks},
        {"downsample", c.net.downsample},
        {"feature_channels", c.net.feature_channels},
        {"discriminator_channels", c.net.discriminator_channels},
        {"instance_norm", c.net.instance_norm}}},
      {"loss",
       {{"lambda1", c.loss.lambda1},
        {"lambda2", c.loss.lambda2},
        {"lambda3", c.loss.lambda3},
        {"lambda4", c.loss.lambda4},
        {"lambda_dc", c.loss.lambda_dc},
        {"lambda_tv", c.loss.lambda_tv},
        {"dc_patch", c.loss.dc_patch}}},
      {"train", {{"intra", phase_json(c.intra)}, {"inter", phase_json(c.inter)}}},
  };
}

RunConfig run_config_from_json(const json& doc) {
  RunConfig c;
  {
    Section root(doc, "");
    root.get("seed", c.seed);
    root.get("data_dir", c.data_dir);
    {
      Section s(root.at("synth"), "synth");
      s.get("height", c.synth.height);
      s.get("width", c.synth.width);
      s.get("variants", c.synth.variants);
      s.get("scenes", c.synth.scenes);
      s.get_range("beta", c.synth.beta);
      s.get_range("A", c.synth.airlight);
      s.get("A_tint", c.synth.airlight_tint);
      s.get_range("depth", c.synth.depth);
      s.get("seed", c.synth.seed);
      s.get("test_scenes", c.synth.test_scenes);
      s.get("real_images", c.synth.real_images);
      s.get_range("real_beta", c.synth.real_beta);
      s.get_range("real_A", c.synth.real_airlight);
      s.get("real_noise", c.synth.real_noise);
      s.done();
    }
    {
      Section s(root.at("data"), "data");
      s.get("crop", c.data.crop);
      s.get("flip", c.data.flip);
      s.get("batch_size", c.data.batch_size);
      s.done();
    }
    {
      Section s(root.at("net"), "net");
      s.get("base_channels", c.net.base_channels);
      s.get("num_residual_blocks", c.net.num_residual_blocks);
      s.get("downsample", c.net.downsample);
      s.get("feature_channels", c.net.feature_channels);
      s.get("discriminator_channels", c.net.discriminator_channels);
      s.get("instance_norm", c.net.instance_norm);
      s.done();
    }
    {
      Section s(root.at("loss"), "loss");
      s.get("lambda1", c.loss.lambda1);
      s.get("lambda2", c.loss.lambda2);
      s.get("lambda3", c.loss.lambda3);
      s.get("lambda4", c.loss.lambda4);
      s.get("lambda_dc", c.loss.lambda_dc);
      s.get("lambda_tv", c.loss.lambda_tv);
      s.get("dc_patch", c.loss.dc_patch);
      s.done();
    }
    {
      Section s(root.at("train"), "train");
      read_phase(s, "intra", c.intra);
      read_phase(s, "inter", c.inter);
      s.done();
    }
    root.done();
  }
  c.validate();
  return c;
}

ConfigBuilder::ConfigBuilder() : doc_(to_json(RunConfig{})) {}

namespace {

// Recursively overlays `patch` onto `base`; keys absent from base are rejected.
void overlay(json& base, const json& patch, const std::string& path) {
  for (const auto& [k, v] : patch.items()) {
    const std::string key = path.empty() ? k : path + "." + k;
    if (!base.contains(k)) fail(ErrorCode::InvalidConfig, "config: unknown key " + key);
    if (base[k].is_object() && v.is_object())
      overlay(base[k], v, key);
    else
      base[k] = v;
  }
}

}  // namespace

void ConfigBuilder::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open config " + path.string());
  json patch;
  try {
    patch = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidConfig, "config " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!patch.is_object()) fail(ErrorCode::InvalidConfig, "config " + path.string() + " must be a JSON object");
  overlay(doc_, patch, "");
}

void ConfigBuilder::set(const std::string& dotted_key, const std::string& value) {
  json* node = &doc_;
  std::string walked;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted_key.find('.', start);
    const std::string part = dotted_key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    walked += (walked.empty() ? "" : ".") + part;
    if (!node->is_object() || !node->contains(part))
      fail(ErrorCode::InvalidConfig, "config: unknown key " + walked);
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::exception&) {
    parsed = value;
  }
  *node = parsed;
}

RunConfig ConfigBuilder::resolve() const { return run_config_from_json(doc_); }

}  // namespace tsdn
