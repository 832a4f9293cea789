#pragma once

#include "cxr/imageproc.hpp"
#include "cxr/manifest.hpp"

#include "json.hpp"

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cxr {

struct BackboneSpec {
  std::string name;
  int input_side = 224;
  std::size_t feature_dim = 0;
  ChannelStats norm_mean{0.485f, 0.456f, 0.406f};
  ChannelStats norm_std{0.229f, 0.224f, 0.225f};
  std::filesystem::path model_path;  // empty for built-in backbones
  std::string sha256;                // content hash of the model file
};

void to_json(nlohmann::json& j, const BackboneSpec& s);
/// Parses a metadata sidecar. `model_file` (optional) is resolved
/// relative to `base_dir`; it defaults to "<name>.onnx".
BackboneSpec backbone_spec_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);

/// Row-major rows x dim float matrix with one sample id per row.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<float> values;
  std::vector<std::string> sample_ids;

  std::span<const float> row(std::size_t r) const { return {values.data() + r * dim, dim}; }
  std::span<float> row(std::size_t r) { return {values.data() + r * dim, dim}; }

  /// Throws Error{ShapeMismatch|NonFinite} if the invariants do not hold.
  void validate() const;
  /// Rows selected (in order) by index.
  FeatureMatrix select(std::span<const std::size_t> indices) const;
  bool operator==(const FeatureMatrix&) const = default;
};

/// Frozen feature extractor. Implementations are immutable after
/// construction and safe to call from several threads.
class Backbone {
 public:
  virtual ~Backbone() = default;
  virtual const BackboneSpec& spec() const = 0;
  /// Identifies the weights for cache keys; the model file hash for
  /// exported graphs.
  virtual std::string model_hash() const = 0;

  /// One row per input image, in input order. Inputs must already be
  /// normalized and sized input_side x input_side.
  FeatureMatrix extract(std::span<const ImageTensor> batch, std::span<const std::string> ids = {}) const;

 protected:
  virtual std::vector<float> run(std::span<const ImageTensor> batch) const = 0;
};

/// Mean-pools each channel over a grid x grid layout of equal cells,
/// giving grid*grid*3 features laid out channel-major.
std::unique_ptr<Backbone> make_toypool(int input_side = 224, int grid = 16);

/// "toypool" selects the built-in backbone; anything else is a path to a
/// JSON metadata sidecar next to an ONNX graph. Shapes and the model hash
/// are checked eagerly. Throws Error{Io|Parse|HashMismatch|ShapeMismatch}.
std::unique_ptr<Backbone> load_backbone(const std::string& spec_path);

/// Feature file: one JSON header line {"format","rows","dim","sample_ids"}
/// followed by rows*dim little-endian float32 values.
void save_features(const std::filesystem::path& path, const FeatureMatrix& fm);
FeatureMatrix load_features(const std::filesystem::path& path);

/// Content-addressed feature store; writes are atomic renames.
class FeatureCache {
 public:
  explicit FeatureCache(std::filesystem::path dir) : dir_(std::move(dir)) {}
  std::optional<FeatureMatrix> get(const std::string& key) const;
  void put(const std::string& key, const FeatureMatrix& fm) const;
  std::filesystem::path path_for(const std::string& key) const;

 private:
  std::filesystem::path dir_;
};

/// Which samples to featurize and whether to augment them first.
struct ExtractRequest {
  std::vector<std::size_t> indices;        // manifest rows, in output order
  std::optional<AugmentConfig> augment;    // nullopt => no augmentation
  std::uint64_t augment_seed = 0;          // sample i uses derive_seed(seed, {i})
  std::size_t batch_size = 32;
};

/// decode -> resize -> (augment) -> normalize -> extract, consulting the
/// cache (if given) under a key built from the model hash, image content
/// hashes, preprocessing parameters and augmentation seed.
FeatureMatrix extract_manifest(const Backbone& backbone, const Manifest& manifest, const ExtractRequest& req,
                               const FeatureCache* cache = nullptr);

}  // namespace cxr
