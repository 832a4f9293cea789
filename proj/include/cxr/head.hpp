#pragma once

#include "cxr/extractor.hpp"
#include "cxr/label.hpp"

#include "json.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cxr {

struct TrainConfig {
  int epochs = 15;
  int batch_size = 8;
  double learning_rate = 5e-5;
  std::uint64_t seed = 0;
  bool shuffle = true;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// Fully connected layer + softmax over the two classes, in class order
/// {POSITIVE, NEGATIVE}. Weights are row-major kNumClasses x dim.
struct SoftmaxHead {
  std::size_t dim = 0;
  std::vector<double> weights;
  std::array<double, kNumClasses> bias{};
  std::uint64_t init_seed = 0;
  std::optional<TrainConfig> train_config;
  std::optional<double> final_loss;

  double& w(int cls, std::size_t j) { return weights[cls * dim + j]; }
  double w(int cls, std::size_t j) const { return weights[cls * dim + j]; }
  bool all_finite() const;
};

struct Prediction {
  std::string sample_id;
  std::array<double, kNumClasses> probs{};
  Label label = Label::Positive;
  double score = 0.0;  // POSITIVE probability
};

/// Glorot-uniform weights in +-sqrt(6/(dim+2)) and zero bias.
SoftmaxHead init_head(std::size_t dim, std::uint64_t seed);

/// softmax(W x + b) with max subtraction. A (0.5, 0.5) tie predicts
/// POSITIVE.
std::vector<Prediction> forward(const SoftmaxHead& head, const FeatureMatrix& features);
Prediction predict_row(const SoftmaxHead& head, std::span<const float> x, std::string sample_id = {});

/// Mean cross-entropy and its gradient with respect to (weights, bias).
struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad_weights;
  std::array<double, kNumClasses> grad_bias{};
};

LossGrad loss_and_grad(const SoftmaxHead& head, const FeatureMatrix& features, std::span<const Label> labels);
/// Same, restricted to the listed rows.
LossGrad loss_and_grad(const SoftmaxHead& head, const FeatureMatrix& features, std::span<const Label> labels,
                       std::span<const std::size_t> rows);

struct TrainResult {
  SoftmaxHead head;
  std::vector<double> epoch_loss;  // mean mini-batch loss per epoch
  std::vector<std::string> warnings;
};

/// Plain mini-batch SGD from init_head(dim, init_seed). The sample order is
/// reshuffled every epoch from cfg.seed when cfg.shuffle is set.
/// Throws Error{Divergence} on a non-finite loss.
TrainResult train(const FeatureMatrix& features, std::span<const Label> labels, const TrainConfig& cfg,
                  std::uint64_t init_seed);

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const SoftmaxHead& h);
void from_json(const nlohmann::json& j, SoftmaxHead& h);
void to_json(nlohmann::json& j, const Prediction& p);

SoftmaxHead load_head(const std::filesystem::path& path);
void save_head(const std::filesystem::path& path, const SoftmaxHead& head);

}  // namespace cxr
