#include "data.hpp"

#include <fstream>
#include <json.hpp>
#include <numeric>

#include "errors.hpp"

namespace tsdn {

namespace fs = std::filesystem;
using nlohmann::json;

void write_manifest(const DatasetManifest& m, const fs::path& path) {
  json scenes = json::array();
  for (const SceneRecord& s : m.scenes) {
    json variants = json::array();
    for (const VariantRecord& v : s.variants)
      variants.push_back({{"hazy_path", v.hazy_path},
                          {"A", {v.params.atmospheric_light[0], v.params.atmospheric_light[1],
                                 v.params.atmospheric_light[2]}},
                          {"beta", v.params.beta}});
    scenes.push_back(
        {{"scene_id", s.scene_id}, {"clear_path", s.clear_path}, {"depth_path", s.depth_path}, {"variants", variants}});
  }
  json doc = {{"version", m.version}, {"seed", m.seed}, {"split", m.split}, {"scenes", scenes}};
  if (!m.real_list.empty()) doc["real_list"] = m.real_list;
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write manifest " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) fail(ErrorCode::Io, "write failed: " + path.string());
}

std::vector<std::string> read_path_list(const fs::path& list_file) {
  std::ifstream in(list_file);
  if (!in) fail(ErrorCode::Io, "cannot open path list " + list_file.string());
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty() && line.front() != '#') out.push_back(line);
  }
  return out;
}

namespace {

const json& field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) fail(ErrorCode::Schema, "manifest: missing field " + where + key);
  return obj.at(key);
}

std::string string_field(const json& obj, const char* key, const std::string& where) {
  const json& v = field(obj, key, where);
  if (!v.is_string()) fail(ErrorCode::Schema, "manifest: field " + where + key + " must be a string");
  return v.get<std::string>();
}

void require_file(const fs::path& root, const std::string& rel, const std::string& field_name) {
  if (!fs::is_regular_file(root / rel))
    fail(ErrorCode::Io, "manifest: " + field_name + " refers to missing file " + (root / rel).string());
}

}  // namespace

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open manifest " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::Schema, "manifest " + path.string() + " is not valid JSON: " + e.what());
  }

  DatasetManifest m;
  m.root = path.parent_path();
  const json& version = field(doc, "version", "");
  if (!version.is_number_integer()) fail(ErrorCode::Schema, "manifest: field version must be an integer");
  m.version = version.get<int>();
  if (m.version != kManifestVersion)
    fail(ErrorCode::Version, "manifest: unsupported version " + std::to_string(m.version));
  const json& seed = field(doc, "seed", "");
  if (!seed.is_number_unsigned() && !seed.is_number_integer()) fail(ErrorCode::Schema, "manifest: field seed");
  m.seed = seed.get<std::uint64_t>();
  if (doc.contains("split")) m.split = doc.at("split").get<std::string>();

  const json& scenes = field(doc, "scenes", "");
  if (!scenes.is_array() || scenes.empty()) fail(ErrorCode::Schema, "manifest: field scenes must be a non-empty array");
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const std::string where = "scenes[" + std::to_string(i) + "].";
    const json& s = scenes[i];
    SceneRecord rec;
    rec.scene_id = string_field(s, "scene_id", where);
    rec.clear_path = string_field(s, "clear_path", where);
    rec.depth_path = string_field(s, "depth_path", where);
    require_file(m.root, rec.clear_path, where + "clear_path");
    require_file(m.root, rec.depth_path, where + "depth_path");
    const json& variants = field(s, "variants", where);
    if (!variants.is_array() || variants.empty()) fail(ErrorCode::Schema, "manifest: " + where + "variants is empty");
    for (std::size_t j = 0; j < variants.size(); ++j) {
      const std::string vw = where + "variants[" + std::to_string(j) + "].";
      VariantRecord v;
      v.hazy_path = string_field(variants[j], "hazy_path", vw);
      require_file(m.root, v.hazy_path, vw + "hazy_path");
      const json& a = field(variants[j], "A", vw);
      if (!a.is_array() || a.size() != 3) fail(ErrorCode::Schema, "manifest: " + vw + "A must have 3 entries");
      for (std::size_t c = 0; c < 3; ++c) v.params.atmospheric_light[c] = a[c].get<double>();
      const json& beta = field(variants[j], "beta", vw);
      if (!beta.is_number()) fail(ErrorCode::Schema, "manifest: " + vw + "beta must be a number");
      v.params.beta = beta.get<double>();
      try {
        v.params.validate();
      } catch (const Error& e) {
        fail(ErrorCode::Schema, "manifest: " + vw + " " + e.what());
      }
      rec.variants.push_back(std::move(v));
    }
    if (!m.scenes.empty() && rec.variants.size() != m.scenes.front().variants.size())
      fail(ErrorCode::Schema, "manifest: " + where + "variants has " + std::to_string(rec.variants.size()) +
                                  " entries, expected " + std::to_string(m.scenes.front().variants.size()));
    m.scenes.push_back(std::move(rec));
  }

  if (doc.contains("real_list")) {
    m.real_list = doc.at("real_list").get<std::string>();
    m.real_paths = read_path_list(m.root / m.real_list);
    for (std::size_t i = 0; i < m.real_paths.size(); ++i)
      require_file(m.root, m.real_paths[i], m.real_list + ":" + std::to_string(i + 1));
  }
  return m;
}

std::size_t LoadedDataset::index_of(const std::string& scene_id) const {
  for (std::size_t i = 0; i < scenes.size(); ++i)
    if (scenes[i].scene_id == scene_id) return i;
  fail(ErrorCode::InvalidState, "unknown scene " + scene_id);
}

LoadedDataset load_dataset(const DatasetManifest& manifest) {
  LoadedDataset d;
  d.manifest = manifest;
  for (const SceneRecord& s : manifest.scenes) {
    LoadedScene ls;
    ls.scene_id = s.scene_id;
    ls.clear = read_png(manifest.root / s.clear_path);
    ls.depth = read_pfm(manifest.root / s.depth_path);
    for (const VariantRecord& v : s.variants) {
      ls.hazy.push_back(read_png(manifest.root / v.hazy_path));
      require(ls.hazy.back().same_shape(ls.clear), ErrorCode::Shape, "hazy/clear size mismatch in " + v.hazy_path);
      ls.params.push_back(v.params);
    }
    d.scenes.push_back(std::move(ls));
  }
  for (const std::string& p : manifest.real_paths) d.real.push_back(read_png(manifest.root / p));
  return d;
}

namespace {

CropRecord draw_crop(Rng& rng, const Image& img, const BatchOptions& opts) {
  require(opts.crop <= img.height && opts.crop <= img.width, ErrorCode::InvalidConfig,
          "crop " + std::to_string(opts.crop) + " exceeds image size " + std::to_string(img.height) + "x" +
              std::to_string(img.width));
  CropRecord c;
  c.top = rng.below(img.height - opts.crop + 1);
  c.left = rng.below(img.width - opts.crop + 1);
  c.flip = opts.flip && rng.coin();
  return c;
}

Image apply_crop(const Image& img, const CropRecord& c, std::size_t size) {
  return crop(img, c.top, c.left, size, size, c.flip);
}

std::vector<std::size_t> iota_vec(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

void check_batch_opts(const LoadedDataset& data, const BatchOptions& opts) {
  require(opts.batch_size >= 1, ErrorCode::InvalidConfig, "batch size must be >= 1");
  require(opts.crop >= 1, ErrorCode::InvalidConfig, "crop must be >= 1");
  require(!data.scenes.empty(), ErrorCode::InvalidState, "dataset has no scenes");
  const Image& img = data.scenes.front().clear;
  require(opts.crop <= img.height && opts.crop <= img.width, ErrorCode::InvalidConfig,
          "crop " + std::to_string(opts.crop) + " exceeds image size");
}

}  // namespace

SceneBatchStream::SceneBatchStream(const LoadedDataset& data, const BatchOptions& opts, std::size_t epoch)
    : data_(data), opts_(opts), rng_(Rng::derive(opts.seed, "scene-batches", epoch)) {
  check_batch_opts(data, opts);
  order_ = iota_vec(data.scenes.size());
  rng_.shuffle(order_.begin(), order_.end());
}

std::size_t SceneBatchStream::batches() const { return (order_.size() + opts_.batch_size - 1) / opts_.batch_size; }

std::optional<SceneBatch> SceneBatchStream::next() {
  if (pos_ >= order_.size()) return std::nullopt;
  SceneBatch b;
  const std::size_t end = std::min(order_.size(), pos_ + opts_.batch_size);
  for (; pos_ < end; ++pos_) {
    const LoadedScene& s = data_.scenes[order_[pos_]];
    const CropRecord c = draw_crop(rng_, s.clear, opts_);
    b.scene_ids.push_back(s.scene_id);
    b.scene_indices.push_back(order_[pos_]);
    b.clear.push_back(apply_crop(s.clear, c, opts_.crop));
    std::vector<Image> hazy;
    for (const Image& h : s.hazy) hazy.push_back(apply_crop(h, c, opts_.crop));
    b.hazy.push_back(std::move(hazy));
    b.variant_params.push_back(s.params);
    b.variant_indices.push_back(iota_vec(s.hazy.size()));
    b.crops.push_back(c);
  }
  return b;
}

PairedBatchStream::PairedBatchStream(const LoadedDataset& data, const SubsetMap& subset, const BatchOptions& opts,
                                     std::size_t epoch)
    : data_(data), opts_(opts), rng_(Rng::derive(opts.seed, "paired-batches", epoch)) {
  check_batch_opts(data, opts);
  require(!data.real.empty(), ErrorCode::InvalidState, "no real-domain images to pair with");
  for (const LoadedScene& s : data.scenes) {
    const auto it = subset.find(s.scene_id);
    if (it == subset.end()) fail(ErrorCode::InvalidState, "optimal subset is missing scene " + s.scene_id);
    require(it->second < s.hazy.size(), ErrorCode::InvalidState, "optimal subset index out of range for " + s.scene_id);
    chosen_.push_back(it->second);
  }
  const std::size_t pairs = std::min(data.scenes.size(), data.real.size());
  syn_order_ = iota_vec(data.scenes.size());
  real_order_ = iota_vec(data.real.size());
  rng_.shuffle(syn_order_.begin(), syn_order_.end());
  rng_.shuffle(real_order_.begin(), real_order_.end());
  syn_order_.resize(pairs);
  real_order_.resize(pairs);
}

std::optional<std::pair<SceneBatch, RealBatch>> PairedBatchStream::next() {
  if (pos_ >= syn_order_.size()) return std::nullopt;
  SceneBatch sb;
  RealBatch rb;
  const std::size_t end = std::min(syn_order_.size(), pos_ + opts_.batch_size);
  for (; pos_ < end; ++pos_) {
    const std::size_t si = syn_order_[pos_];
    const LoadedScene& s = data_.scenes[si];
    const std::size_t v = chosen_[si];
    const CropRecord c = draw_crop(rng_, s.clear, opts_);
    sb.scene_ids.push_back(s.scene_id);
    sb.scene_indices.push_back(si);
    sb.clear.push_back(apply_crop(s.clear, c, opts_.crop));
    sb.hazy.push_back({apply_crop(s.hazy[v], c, opts_.crop)});
    sb.variant_params.push_back({s.params[v]});
    sb.variant_indices.push_back({v});
    sb.crops.push_back(c);

    const std::size_t ri = real_order_[pos_];
    const CropRecord rc = draw_crop(rng_, data_.real[ri], opts_);
    rb.images.push_back(apply_crop(data_.real[ri], rc, opts_.crop));
    rb.indices.push_back(ri);
  }
  return std::make_pair(std::move(sb), std::move(rb));
}

}  // namespace tsdn
