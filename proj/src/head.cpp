#include "cxr/head.hpp"
#include "cxr/error.hpp"
#include "cxr/hashing.hpp"
#include "cxr/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace cxr {

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(ErrorKind::InvalidArgument, "train: epochs must be >= 1");
  if (batch_size < 1) throw Error(ErrorKind::InvalidArgument, "train: batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw Error(ErrorKind::InvalidArgument, "train: learning_rate must be > 0");
}

bool SoftmaxHead::all_finite() const {
  auto fin = [](double v) { return std::isfinite(v); };
  return std::all_of(weights.begin(), weights.end(), fin) && std::all_of(bias.begin(), bias.end(), fin);
}

SoftmaxHead init_head(std::size_t dim, std::uint64_t seed) {
  if (dim == 0) throw Error(ErrorKind::InvalidArgument, "init_head: dim must be > 0");
  SoftmaxHead h;
  h.dim = dim;
  h.init_seed = seed;
  h.weights.resize(kNumClasses * dim);
  const double limit = std::sqrt(6.0 / static_cast<double>(dim + kNumClasses));
  SplitMix64 rng(seed);
  for (auto& w : h.weights) w = rng.uniform(-limit, limit);
  return h;
}

namespace {

void check_dim(const SoftmaxHead& head, const FeatureMatrix& f) {
  if (f.dim != head.dim)
    throw Error(ErrorKind::ShapeMismatch, "head expects " + std::to_string(head.dim) + "-dim features, got " +
                                              std::to_string(f.dim));
}

std::array<double, kNumClasses> logits(const SoftmaxHead& head, std::span<const float> x) {
  std::array<double, kNumClasses> z = head.bias;
  for (int c = 0; c < kNumClasses; ++c) {
    const double* wr = head.weights.data() + c * head.dim;
    double acc = 0.0;
    for (std::size_t j = 0; j < head.dim; ++j) acc += wr[j] * x[j];
    z[c] += acc;
  }
  return z;
}

/// Softmax probabilities and log-sum-exp of the logits.
std::pair<std::array<double, kNumClasses>, double> softmax(const std::array<double, kNumClasses>& z) {
  const double m = *std::max_element(z.begin(), z.end());
  std::array<double, kNumClasses> p{};
  double sum = 0.0;
  for (int c = 0; c < kNumClasses; ++c) sum += (p[c] = std::exp(z[c] - m));
  for (auto& v : p) v /= sum;
  return {p, m + std::log(sum)};
}

}  // namespace

Prediction predict_row(const SoftmaxHead& head, std::span<const float> x, std::string sample_id) {
  if (x.size() != head.dim) throw Error(ErrorKind::ShapeMismatch, "predict: feature length != head dim");
  Prediction p;
  p.sample_id = std::move(sample_id);
  p.probs = softmax(logits(head, x)).first;
  p.score = p.probs[class_index(Label::Positive)];
  p.label = p.probs[class_index(Label::Positive)] >= p.probs[class_index(Label::Negative)] ? Label::Positive
                                                                                            : Label::Negative;
  return p;
}

std::vector<Prediction> forward(const SoftmaxHead& head, const FeatureMatrix& features) {
  check_dim(head, features);
  std::vector<Prediction> out;
  out.reserve(features.rows);
  for (std::size_t r = 0; r < features.rows; ++r)
    out.push_back(predict_row(head, features.row(r), features.sample_ids.at(r)));
  return out;
}

LossGrad loss_and_grad(const SoftmaxHead& head, const FeatureMatrix& features, std::span<const Label> labels,
                       std::span<const std::size_t> rows) {
  check_dim(head, features);
  if (labels.size() != features.rows) throw Error(ErrorKind::ShapeMismatch, "labels length != feature rows");
  if (rows.empty()) throw Error(ErrorKind::InvalidArgument, "loss: empty batch");

  LossGrad g;
  g.grad_weights.assign(head.weights.size(), 0.0);
  for (auto r : rows) {
    const auto x = features.row(r);
    const auto z = logits(head, x);
    const auto [p, lse] = softmax(z);
    const int y = class_index(labels[r]);
    g.loss += lse - z[y];
    for (int c = 0; c < kNumClasses; ++c) {
      const double delta = p[c] - (c == y ? 1.0 : 0.0);
      g.grad_bias[c] += delta;
      double* gw = g.grad_weights.data() + c * head.dim;
      for (std::size_t j = 0; j < head.dim; ++j) gw[j] += delta * x[j];
    }
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  g.loss *= inv;
  for (auto& v : g.grad_weights) v *= inv;
  for (auto& v : g.grad_bias) v *= inv;
  return g;
}

LossGrad loss_and_grad(const SoftmaxHead& head, const FeatureMatrix& features, std::span<const Label> labels) {
  std::vector<std::size_t> rows(features.rows);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return loss_and_grad(head, features, labels, rows);
}

TrainResult train(const FeatureMatrix& features, std::span<const Label> labels, const TrainConfig& cfg,
                  std::uint64_t init_seed) {
  cfg.validate();
  features.validate();
  if (features.rows == 0) throw Error(ErrorKind::InvalidArgument, "train: no samples");
  if (labels.size() != features.rows) throw Error(ErrorKind::ShapeMismatch, "labels length != feature rows");

  TrainResult result;
  const auto n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), Label::Positive));
  if (n_pos == 0 || n_pos == labels.size())
    result.warnings.push_back("training set contains a single class; the head cannot learn a decision boundary");

  SoftmaxHead head = init_head(features.dim, init_seed);
  SplitMix64 rng(cfg.seed);
  std::vector<std::size_t> order(features.rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto bs = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle) fisher_yates(std::span(order), rng);
    double weighted = 0.0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const auto batch = std::span(order).subspan(start, std::min(bs, order.size() - start));
      const auto g = loss_and_grad(head, features, labels, batch);
      if (!std::isfinite(g.loss))
        throw Error(ErrorKind::Divergence, "non-finite loss at epoch " + std::to_string(epoch + 1) +
                                               " (learning_rate " + std::to_string(cfg.learning_rate) +
                                               " too large?)");
      weighted += g.loss * static_cast<double>(batch.size());
      for (std::size_t i = 0; i < head.weights.size(); ++i) head.weights[i] -= cfg.learning_rate * g.grad_weights[i];
      for (int c = 0; c < kNumClasses; ++c) head.bias[c] -= cfg.learning_rate * g.grad_bias[c];
    }
    result.epoch_loss.push_back(weighted / static_cast<double>(order.size()));
  }
  if (!head.all_finite()) throw Error(ErrorKind::Divergence, "training produced non-finite parameters");
  head.train_config = cfg;
  head.final_loss = result.epoch_loss.back();
  result.head = std::move(head);
  return result;
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"learning_rate", c.learning_rate},
                     {"seed", c.seed},
                     {"shuffle", c.shuffle}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  j.at("epochs").get_to(c.epochs);
  j.at("batch_size").get_to(c.batch_size);
  j.at("learning_rate").get_to(c.learning_rate);
  j.at("seed").get_to(c.seed);
  c.shuffle = j.value("shuffle", true);
}

void to_json(nlohmann::json& j, const SoftmaxHead& h) {
  j = nlohmann::json{{"dim", h.dim},
                     {"classes", {label_name(Label::Positive), label_name(Label::Negative)}},
                     {"weights", h.weights},
                     {"bias", h.bias},
                     {"init_seed", h.init_seed}};
  j["train_config"] = h.train_config ? nlohmann::json(*h.train_config) : nlohmann::json(nullptr);
  j["final_loss"] = h.final_loss ? nlohmann::json(*h.final_loss) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, SoftmaxHead& h) {
  j.at("dim").get_to(h.dim);
  const auto classes = j.at("classes").get<std::vector<std::string>>();
  if (classes.size() != 2 || classes[0] != label_name(Label::Positive) || classes[1] != label_name(Label::Negative))
    throw Error(ErrorKind::Parse, "head: class order must be [covid, normal]");
  j.at("weights").get_to(h.weights);
  j.at("bias").get_to(h.bias);
  j.at("init_seed").get_to(h.init_seed);
  if (h.weights.size() != kNumClasses * h.dim) throw Error(ErrorKind::Parse, "head: weights length != 2*dim");
  h.train_config.reset();
  h.final_loss.reset();
  if (j.contains("train_config") && !j["train_config"].is_null()) h.train_config = j["train_config"].get<TrainConfig>();
  if (j.contains("final_loss") && !j["final_loss"].is_null()) h.final_loss = j["final_loss"].get<double>();
  if (!h.all_finite()) throw Error(ErrorKind::NonFinite, "head: non-finite parameters");
}

void to_json(nlohmann::json& j, const Prediction& p) {
  j = nlohmann::json{
      {"sample_id", p.sample_id}, {"probs", p.probs}, {"label", label_name(p.label)}, {"score", p.score}};
}

SoftmaxHead load_head(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open head file " + path.string());
  try {
    return nlohmann::json::parse(in).get<SoftmaxHead>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Parse, path.string() + ": " + e.what());
  }
}

void save_head(const std::filesystem::path& path, const SoftmaxHead& head) {
  write_file_atomic(path, nlohmann::json(head).dump(2) + "\n");
}

}  // namespace cxr
