#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "tabadv/data_pipeline.hpp"

namespace tabadv {

enum class ModelKind { LR, LinearSVM, MLP };

std::string_view to_string(ModelKind kind);
ModelKind model_kind_from_string(std::string_view name);

struct TrainingConfig {
  // Full-batch gradient descent for the linear models.
  double learning_rate = 0.5;
  double l2 = 1e-4;
  int max_iter = 2000;
  double tolerance = 1e-8;

  // Adam for the MLP.
  double mlp_learning_rate = 3e-3;
  int epochs = 10;
  int batch_size = 64;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-7;
  std::vector<int> hidden = {24, 12, 12, 12, 12};

  nlohmann::json to_json() const;
  static TrainingConfig from_json(const nlohmann::json& j);
};

struct BinaryMetrics {
  double accuracy = 0.0;
  double precision = 0.0;  // 0 when nothing is predicted positive
  double recall = 0.0;     // 0 when there are no positives
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

BinaryMetrics binary_metrics(const Eigen::Ref<const Eigen::VectorXi>& truth,
                             const Eigen::Ref<const Eigen::VectorXi>& predicted);

struct TrainingMetrics {
  BinaryMetrics test;
  int iterations = 0;  // GD iterations or MLP epochs actually run
  double final_loss = 0.0;
  bool converged = false;
};

struct ModelOutput {
  Eigen::Vector2d scores;
  std::optional<Eigen::Vector2d> probabilities;
  int label = 0;
};

class Classifier {
 public:
  struct Layer {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;
  };

  static Classifier linear(ModelKind kind, Eigen::VectorXd w, double b);
  static Classifier mlp(std::vector<Layer> layers);

  ModelKind kind() const { return kind_; }
  std::size_t dim() const { return dim_; }
  bool has_probabilities() const { return kind_ != ModelKind::LinearSVM; }

  ModelOutput predict(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  int predict_label(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  Eigen::VectorXi predict_labels(const Eigen::Ref<const RowMatrix>& x) const;

  /// Per-example training loss: log-loss, hinge, or softmax cross-entropy.
  double loss(const Eigen::Ref<const Eigen::VectorXd>& x, int y) const;
  /// Gradient of loss() with respect to the input; the hinge subgradient is 0 at margin >= 1.
  Eigen::VectorXd input_gradient(const Eigen::Ref<const Eigen::VectorXd>& x, int y) const;
  /// Direction used by the gradient attacks. For the SVM this is the gradient of the
  /// linear piece of the hinge, so points beyond the margin still get a direction.
  Eigen::VectorXd attack_gradient(const Eigen::Ref<const Eigen::VectorXd>& x, int y) const;

  /// Z_g(x) - Z_other(x) over scores (logits, or +-s for linear models).
  double score_margin(const Eigen::Ref<const Eigen::VectorXd>& x, int g, Eigen::VectorXd* grad) const;
  /// p_g(x) - p_other(x) over class outputs. The SVM has no probabilities, so its
  /// output is the one-hot decision with zero gradient.
  double output_margin(const Eigen::Ref<const Eigen::VectorXd>& x, int g, Eigen::VectorXd* grad) const;

  const Eigen::VectorXd& weights() const { return w_; }
  double bias() const { return b_; }
  const std::vector<Layer>& layers() const { return layers_; }

  TrainingConfig config;
  std::uint64_t seed = 0;
  TrainingMetrics metrics;

  nlohmann::json to_json() const;
  static Classifier from_json(const nlohmann::json& j);

 private:
  struct Trace {
    std::vector<Eigen::VectorXd> pre;  // pre-activations per layer
    std::vector<Eigen::VectorXd> act;  // act[0] = input
  };

  void check_dim(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  double linear_score(const Eigen::Ref<const Eigen::VectorXd>& x) const { return w_.dot(x) + b_; }
  Eigen::Vector2d logits(const Eigen::Ref<const Eigen::VectorXd>& x, Trace* trace) const;
  Eigen::VectorXd backprop(const Trace& trace, const Eigen::Vector2d& upstream) const;

  ModelKind kind_ = ModelKind::LR;
  std::size_t dim_ = 0;
  Eigen::VectorXd w_;
  double b_ = 0.0;
  std::vector<Layer> layers_;
};

Classifier train(const Eigen::Ref<const RowMatrix>& x, const Eigen::Ref<const Eigen::VectorXi>& y, ModelKind kind,
                 const TrainingConfig& cfg, std::uint64_t seed);
/// Trains on the training split and attaches test-split metrics.
Classifier train(const EncodedDataset& data, ModelKind kind, const TrainingConfig& cfg, std::uint64_t seed);

BinaryMetrics evaluate(const Classifier& model, const EncodedDataset& data);

void save_checkpoint(const Classifier& model, const std::filesystem::path& path);
Classifier load_checkpoint(const std::filesystem::path& path);

}  // namespace tabadv
