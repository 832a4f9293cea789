#include "cxr/extractor.hpp"
#include "cxr/error.hpp"
#include "cxr/hashing.hpp"

#include <opencv2/core.hpp>
#include <opencv2/dnn.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>

namespace cxr {

static_assert(std::endian::native == std::endian::little, "feature files assume a little-endian host");

void to_json(nlohmann::json& j, const BackboneSpec& s) {
  j = nlohmann::json{{"name", s.name},
                     {"input_side", s.input_side},
                     {"feature_dim", s.feature_dim},
                     {"norm_mean", s.norm_mean},
                     {"norm_std", s.norm_std},
                     {"sha256", s.sha256}};
  if (!s.model_path.empty()) j["model_file"] = s.model_path.filename().string();
}

BackboneSpec backbone_spec_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  BackboneSpec s;
  try {
    j.at("name").get_to(s.name);
    j.at("input_side").get_to(s.input_side);
    j.at("feature_dim").get_to(s.feature_dim);
    j.at("norm_mean").get_to(s.norm_mean);
    j.at("norm_std").get_to(s.norm_std);
    j.at("sha256").get_to(s.sha256);
    const std::string file = j.value("model_file", s.name + ".onnx");
    s.model_path = base_dir / file;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("backbone metadata: ") + e.what());
  }
  if (s.feature_dim == 0) throw Error(ErrorKind::Parse, "backbone metadata: feature_dim must be > 0");
  if (s.input_side != 224 && s.input_side != 299)
    throw Error(ErrorKind::Parse, "backbone metadata: input_side must be 224 or 299");
  for (float v : s.norm_std)
    if (!(v > 0.0f)) throw Error(ErrorKind::Parse, "backbone metadata: norm_std must be > 0");
  return s;
}

void FeatureMatrix::validate() const {
  if (sample_ids.size() != rows) throw Error(ErrorKind::ShapeMismatch, "feature rows != number of sample ids");
  if (values.size() != rows * dim) throw Error(ErrorKind::ShapeMismatch, "feature values != rows*dim");
  if (!std::all_of(values.begin(), values.end(), [](float v) { return std::isfinite(v); }))
    throw Error(ErrorKind::NonFinite, "feature matrix contains non-finite values");
}

FeatureMatrix FeatureMatrix::select(std::span<const std::size_t> indices) const {
  FeatureMatrix out;
  out.rows = indices.size();
  out.dim = dim;
  out.values.reserve(out.rows * dim);
  out.sample_ids.reserve(out.rows);
  for (auto i : indices) {
    if (i >= rows) throw Error(ErrorKind::InvalidArgument, "feature row index out of range");
    auto r = row(i);
    out.values.insert(out.values.end(), r.begin(), r.end());
    out.sample_ids.push_back(sample_ids[i]);
  }
  return out;
}

FeatureMatrix Backbone::extract(std::span<const ImageTensor> batch, std::span<const std::string> ids) const {
  const auto& s = spec();
  if (batch.empty()) throw Error(ErrorKind::InvalidArgument, "extract: empty batch");
  if (!ids.empty() && ids.size() != batch.size())
    throw Error(ErrorKind::InvalidArgument, "extract: ids/batch length mismatch");
  for (const auto& img : batch) {
    if (img.height() != s.input_side || img.width() != s.input_side)
      throw Error(ErrorKind::ShapeMismatch, "extract: expected " + std::to_string(s.input_side) + "x" +
                                                std::to_string(s.input_side) + " input, got " +
                                                std::to_string(img.height()) + "x" + std::to_string(img.width()));
  }
  FeatureMatrix fm;
  fm.rows = batch.size();
  fm.dim = s.feature_dim;
  fm.values = run(batch);
  if (fm.values.size() != fm.rows * fm.dim)
    throw Error(ErrorKind::ShapeMismatch, s.name + ": backbone produced an unexpected number of features");
  if (!std::all_of(fm.values.begin(), fm.values.end(), [](float v) { return std::isfinite(v); }))
    throw Error(ErrorKind::NonFinite, s.name + ": backbone produced non-finite features (corrupt model?)");
  if (ids.empty()) {
    for (std::size_t i = 0; i < batch.size(); ++i) fm.sample_ids.push_back(std::to_string(i));
  } else {
    fm.sample_ids.assign(ids.begin(), ids.end());
  }
  return fm;
}

namespace {

class ToyPoolBackbone final : public Backbone {
 public:
  ToyPoolBackbone(int side, int grid) : grid_(grid) {
    if (side <= 0 || grid <= 0 || side % grid != 0)
      throw Error(ErrorKind::InvalidArgument, "toypool: side must be a positive multiple of grid");
    spec_.name = "toypool";
    spec_.input_side = side;
    spec_.feature_dim = static_cast<std::size_t>(grid) * grid * ImageTensor::kChannels;
    spec_.norm_mean = {0.5f, 0.5f, 0.5f};
    spec_.norm_std = {0.5f, 0.5f, 0.5f};
    spec_.sha256 = sha256_hex("toypool-v1:side=" + std::to_string(side) + ":grid=" + std::to_string(grid));
  }

  const BackboneSpec& spec() const override { return spec_; }
  std::string model_hash() const override { return spec_.sha256; }

 protected:
  std::vector<float> run(std::span<const ImageTensor> batch) const override {
    const int cell = spec_.input_side / grid_;
    const double inv = 1.0 / (static_cast<double>(cell) * cell);
    std::vector<float> out;
    out.reserve(batch.size() * spec_.feature_dim);
    for (const auto& img : batch) {
      for (int c = 0; c < ImageTensor::kChannels; ++c) {
        for (int gy = 0; gy < grid_; ++gy) {
          for (int gx = 0; gx < grid_; ++gx) {
            double sum = 0.0;
            for (int y = gy * cell; y < (gy + 1) * cell; ++y)
              for (int x = gx * cell; x < (gx + 1) * cell; ++x) sum += img.at(y, x, c);
            out.push_back(static_cast<float>(sum * inv));
          }
        }
      }
    }
    return out;
  }

 private:
  int grid_;
  BackboneSpec spec_;
};

class OnnxBackbone final : public Backbone {
 public:
  explicit OnnxBackbone(BackboneSpec spec) : spec_(std::move(spec)) {
    if (!std::filesystem::exists(spec_.model_path))
      throw Error(ErrorKind::Io, "model file not found: " + spec_.model_path.string());
    const auto bytes = read_file_bytes(spec_.model_path);
    const auto actual = sha256_hex(bytes);
    if (actual != spec_.sha256)
      throw Error(ErrorKind::HashMismatch, spec_.name + ": model sha256 " + actual + " does not match metadata " +
                                               spec_.sha256);
    try {
      net_ = cv::dnn::readNetFromONNX(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    } catch (const cv::Exception& e) {
      throw Error(ErrorKind::Parse, spec_.name + ": cannot parse ONNX graph: " + e.what());
    }
    if (net_.empty()) throw Error(ErrorKind::Parse, spec_.name + ": empty ONNX graph");
    net_.setPreferableBackend(cv::dnn::DNN_BACKEND_OPENCV);
    net_.setPreferableTarget(cv::dnn::DNN_TARGET_CPU);

    // Probe once so a metadata/graph disagreement fails at load time.
    const ImageTensor probe(spec_.input_side, spec_.input_side, 0.0f);
    std::size_t produced = 0;
    try {
      produced = forward(std::span(&probe, 1)).size();
    } catch (const cv::Exception& e) {
      throw Error(ErrorKind::ShapeMismatch, spec_.name + ": graph rejected a 1x3x" +
                                                std::to_string(spec_.input_side) + "x" +
                                                std::to_string(spec_.input_side) + " input: " + e.what());
    }
    if (produced != spec_.feature_dim)
      throw Error(ErrorKind::ShapeMismatch, spec_.name + ": metadata declares feature_dim " +
                                                std::to_string(spec_.feature_dim) + " but the graph emits " +
                                                std::to_string(produced));
  }

  const BackboneSpec& spec() const override { return spec_; }
  std::string model_hash() const override { return spec_.sha256; }

 protected:
  std::vector<float> run(std::span<const ImageTensor> batch) const override {
    try {
      return forward(batch);
    } catch (const cv::Exception& e) {
      throw Error(ErrorKind::ShapeMismatch, spec_.name + ": inference failed: " + e.what());
    }
  }

 private:
  std::vector<float> forward(std::span<const ImageTensor> batch) const {
    const int n = static_cast<int>(batch.size());
    const int s = spec_.input_side;
    const int dims[] = {n, 3, s, s};
    cv::Mat blob(4, dims, CV_32F);
    auto* dst = blob.ptr<float>();
    const std::size_t plane = static_cast<std::size_t>(s) * s;
    for (int i = 0; i < n; ++i) {
      const auto& img = batch[i];
      for (int c = 0; c < 3; ++c) {
        float* p = dst + (static_cast<std::size_t>(i) * 3 + c) * plane;
        for (int y = 0; y < s; ++y)
          for (int x = 0; x < s; ++x) p[static_cast<std::size_t>(y) * s + x] = img.at(y, x, c);
      }
    }
    std::lock_guard lock(mu_);
    net_.setInput(blob);
    cv::Mat out = net_.forward();
    if (out.type() != CV_32F || out.dims < 2 || out.size[0] != n)
      throw Error(ErrorKind::ShapeMismatch, spec_.name + ": graph output is not N x D float32");
    const std::size_t total = out.total();
    const auto* src = out.ptr<float>();
    return {src, src + total};
  }

  BackboneSpec spec_;
  mutable std::mutex mu_;
  mutable cv::dnn::Net net_;
};

}  // namespace

std::unique_ptr<Backbone> make_toypool(int input_side, int grid) {
  return std::make_unique<ToyPoolBackbone>(input_side, grid);
}

std::unique_ptr<Backbone> load_backbone(const std::string& spec_path) {
  if (spec_path == "toypool") return make_toypool();
  const std::filesystem::path p(spec_path);
  std::ifstream in(p);
  if (!in) throw Error(ErrorKind::Io, "cannot open backbone metadata " + spec_path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Parse, spec_path + ": " + e.what());
  }
  try {
    return std::make_unique<OnnxBackbone>(backbone_spec_from_json(j, p.parent_path()));
  } catch (Error& e) {
    e.with_context(spec_path);
    throw;
  }
}

void save_features(const std::filesystem::path& path, const FeatureMatrix& fm) {
  fm.validate();
  const nlohmann::json header{
      {"format", "cxr-features-v1"}, {"rows", fm.rows}, {"dim", fm.dim}, {"sample_ids", fm.sample_ids}};
  std::string text = header.dump() + '\n';
  std::vector<std::uint8_t> bytes(text.begin(), text.end());
  const auto* raw = reinterpret_cast<const std::uint8_t*>(fm.values.data());
  bytes.insert(bytes.end(), raw, raw + fm.values.size() * sizeof(float));
  write_file_atomic(path, bytes);
}

FeatureMatrix load_features(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  const auto nl = std::find(bytes.begin(), bytes.end(), std::uint8_t{'\n'});
  if (nl == bytes.end()) throw Error(ErrorKind::Parse, path.string() + ": missing feature header");
  FeatureMatrix fm;
  try {
    const auto header = nlohmann::json::parse(bytes.begin(), nl);
    if (header.value("format", "") != "cxr-features-v1")
      throw Error(ErrorKind::Parse, path.string() + ": unknown feature file format");
    header.at("rows").get_to(fm.rows);
    header.at("dim").get_to(fm.dim);
    header.at("sample_ids").get_to(fm.sample_ids);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Parse, path.string() + ": " + e.what());
  }
  const std::size_t payload = static_cast<std::size_t>(bytes.end() - (nl + 1));
  if (payload != fm.rows * fm.dim * sizeof(float))
    throw Error(ErrorKind::Parse, path.string() + ": payload size does not match rows*dim");
  fm.values.resize(fm.rows * fm.dim);
  std::memcpy(fm.values.data(), &*(nl + 1), payload);
  fm.validate();
  return fm;
}

std::filesystem::path FeatureCache::path_for(const std::string& key) const { return dir_ / (key + ".feat"); }

std::optional<FeatureMatrix> FeatureCache::get(const std::string& key) const {
  const auto p = path_for(key);
  if (!std::filesystem::exists(p)) return std::nullopt;
  try {
    return load_features(p);
  } catch (const Error&) {
    return std::nullopt;  // unreadable entries are recomputed and overwritten
  }
}

void FeatureCache::put(const std::string& key, const FeatureMatrix& fm) const { save_features(path_for(key), fm); }

FeatureMatrix extract_manifest(const Backbone& backbone, const Manifest& manifest, const ExtractRequest& req,
                               const FeatureCache* cache) {
  if (req.indices.empty()) throw Error(ErrorKind::InvalidArgument, "extract: no samples requested");
  if (req.batch_size == 0) throw Error(ErrorKind::InvalidArgument, "extract: batch_size must be > 0");
  if (req.augment) req.augment->validate();
  const auto& spec = backbone.spec();

  std::vector<std::vector<std::uint8_t>> encoded;
  encoded.reserve(req.indices.size());
  std::vector<std::string> ids;
  nlohmann::json key_doc{{"model", backbone.model_hash()},
                         {"side", spec.input_side},
                         {"mean", spec.norm_mean},
                         {"std", spec.norm_std}};
  auto& images = key_doc["images"] = nlohmann::json::array();
  for (auto idx : req.indices) {
    if (idx >= manifest.size()) throw Error(ErrorKind::InvalidArgument, "extract: manifest index out of range");
    const auto& s = manifest.samples()[idx];
    encoded.push_back(read_file_bytes(manifest.resolve(s)));
    images.push_back(sha256_hex(encoded.back()));
    ids.push_back(s.id);
  }
  if (req.augment && req.augment->enabled) {
    const auto& a = *req.augment;
    key_doc["augment"] = {{"flip_x", a.flip_x_prob}, {"flip_y", a.flip_y_prob},
                          {"rotation", a.rotation_range_deg}, {"shear", a.shear_range},
                          {"seed", req.augment_seed}};
  }
  const std::string key = sha256_hex(key_doc.dump());

  if (cache) {
    if (auto hit = cache->get(key); hit && hit->sample_ids == ids && hit->dim == spec.feature_dim) return *hit;
  }

  FeatureMatrix out;
  out.dim = spec.feature_dim;
  for (std::size_t start = 0; start < req.indices.size(); start += req.batch_size) {
    const std::size_t end = std::min(start + req.batch_size, req.indices.size());
    std::vector<ImageTensor> batch;
    batch.reserve(end - start);
    for (std::size_t i = start; i < end; ++i) {
      ImageTensor img;
      try {
        img = decode_resize(encoded[i], spec.input_side);
      } catch (Error& e) {
        e.with_context("sample " + ids[i]);
        throw;
      }
      if (req.augment && req.augment->enabled) {
        SplitMix64 rng(derive_seed(req.augment_seed, {static_cast<std::uint64_t>(i)}));
        img = augment(img, *req.augment, rng);
      }
      batch.push_back(normalize(img, spec.norm_mean, spec.norm_std));
    }
    auto part = backbone.extract(batch, std::span(ids).subspan(start, end - start));
    out.values.insert(out.values.end(), part.values.begin(), part.values.end());
    out.sample_ids.insert(out.sample_ids.end(), part.sample_ids.begin(), part.sample_ids.end());
    out.rows += part.rows;
  }
  if (cache) cache->put(key, out);
  return out;
}

}  // namespace cxr
