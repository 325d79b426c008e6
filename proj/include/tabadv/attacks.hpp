#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "tabadv/data_pipeline.hpp"
#include "tabadv/models.hpp"

namespace tabadv {

enum class AttackKind { FGSM, PGD, DeepFool, CW, LowProFool };
enum class NormKind { Linf, L2 };

/// Which label the attack pushes away from. Success is always judged against
/// the true label.
enum class LabelSource { Predicted, True };

std::string_view to_string(AttackKind kind);
AttackKind attack_kind_from_string(std::string_view name);
std::string_view to_string(LabelSource source);

struct AttackConfig {
  AttackKind kind = AttackKind::FGSM;
  double epsilon = 0.3;
  double step_size = 0.1;  // PGD
  int max_iter = 1;        // PGD steps, DeepFool/LowProFool iterations, CW inner steps
  bool early_stop = false;  // PGD only
  double overshoot = 1e-6;
  double initial_constant = 0.01;
  int search_steps = 10;
  double confidence = 0.0;
  double learning_rate = 0.05;  // CW inner gradient descent
  double tradeoff = 0.5;        // LowProFool lambda
  double lpf_step = 0.05;       // LowProFool step size
  LabelSource label_source = LabelSource::Predicted;

  NormKind norm() const;
  bool bounded() const { return kind == AttackKind::FGSM || kind == AttackKind::PGD; }

  /// Defaults for one kind: PGD runs 2 * ceil(epsilon / step) + 1 steps.
  static AttackConfig defaults(AttackKind kind);
  /// Throws ConfigError when a hyperparameter is out of range.
  void validate() const;

  nlohmann::json to_json() const;
  /// Starts from defaults(kind) and applies any overrides present.
  static AttackConfig from_json(const nlohmann::json& j);
};

struct AdversarialExample {
  std::size_t row_id = 0;
  Eigen::VectorXd original;
  Eigen::VectorXd perturbed;
  int true_label = 0;
  int original_pred = 0;
  int adversarial_pred = 0;
  bool success = false;  // adversarial_pred != true_label
  AttackKind kind = AttackKind::FGSM;
  int iterations_used = 0;
  bool aborted = false;  // DeepFool hit a zero gradient
};

AdversarialExample fgsm(const Classifier& model, const Eigen::VectorXd& x, int y, const AttackConfig& cfg);
AdversarialExample pgd(const Classifier& model, const Eigen::VectorXd& x, int y, const AttackConfig& cfg);
AdversarialExample deepfool(const Classifier& model, const Eigen::VectorXd& x, int y, const AttackConfig& cfg);
AdversarialExample carlini_wagner_l2(const Classifier& model, const Eigen::VectorXd& x, int y,
                                     const AttackConfig& cfg);
/// importance has one weight per encoded column; the schema must be numerical only.
AdversarialExample lowprofool(const Classifier& model, const Eigen::VectorXd& x, int y,
                              const Eigen::VectorXd& importance, const AttackConfig& cfg,
                              const FeatureSchema& schema);

/// |Pearson correlation| of each numerical column with the label over training
/// rows, scaled to unit l2 norm. Constant columns get weight 0. The result has
/// length D with zeros on one-hot columns.
Eigen::VectorXd pearson_importance(const EncodedDataset& data);

/// Attacks every test row of the dataset.
std::vector<AdversarialExample> run_attack(const Classifier& model, const EncodedDataset& data,
                                           const AttackConfig& cfg);

}  // namespace tabadv
