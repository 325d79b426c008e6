#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "tabadv/attacks.hpp"
#include "tabadv/data_pipeline.hpp"

namespace tabadv {

enum class LpNorm { L1, L2, Linf };

struct FeatureStats {
  std::vector<std::size_t> numerical_columns;  // encoded column of each numerical feature
  Eigen::VectorXd mean;                        // per numerical feature, population form
  Eigen::VectorXd sdv;
  Eigen::MatrixXd covariance;  // over all encoded columns, divisor m - 1
  Eigen::MatrixXd pinv;        // pseudo-inverse of covariance + ridge * I
  double ridge = 0.0;
  std::vector<std::size_t> constant_features;  // indices into numerical_columns with SDV < 1e-12

  std::size_t dim() const { return static_cast<std::size_t>(covariance.rows()); }
};

FeatureStats fit_feature_stats(const Eigen::Ref<const RowMatrix>& x_train,
                               const std::vector<std::size_t>& numerical_columns, double ridge = 1e-6);
FeatureStats fit_feature_stats(const EncodedDataset& data, double ridge = 1e-6);

double proximity_lp(const Eigen::Ref<const Eigen::VectorXd>& x_adv, const Eigen::Ref<const Eigen::VectorXd>& x,
                    LpNorm p);

/// Number of original features that changed: numerical coordinates by more
/// than tol, categorical blocks by their decoded level.
int sparsity(const Eigen::Ref<const Eigen::VectorXd>& x_adv, const Eigen::Ref<const Eigen::VectorXd>& x,
             const EncoderState& enc, double tol = 1e-8);

/// Indices of the original features counted by sparsity().
std::vector<std::size_t> changed_features(const Eigen::Ref<const Eigen::VectorXd>& x_adv,
                                          const Eigen::Ref<const Eigen::VectorXd>& x, const EncoderState& enc,
                                          double tol = 1e-8);

double mahalanobis_deviation(const Eigen::Ref<const Eigen::VectorXd>& x_adv,
                             const Eigen::Ref<const Eigen::VectorXd>& x, const FeatureStats& stats);

/// Sum of |delta| / SDV over numerical columns. Constant columns are skipped.
double sensitivity(const Eigen::Ref<const Eigen::VectorXd>& x_adv, const Eigen::Ref<const Eigen::VectorXd>& x,
                   const FeatureStats& stats);

/// Fraction of examples whose adversarial prediction differs from the true label.
double success_rate(const std::vector<AdversarialExample>& examples);

struct MetricRecord {
  double l1 = 0.0;
  double l2 = 0.0;
  double linf = 0.0;
  int sparsity = 0;
  double deviation = 0.0;
  double sensitivity = 0.0;
  bool success = false;
};

MetricRecord measure(const AdversarialExample& ex, const EncoderState& enc, const FeatureStats& stats);
std::vector<MetricRecord> measure_all(const std::vector<AdversarialExample>& examples, const EncoderState& enc,
                                      const FeatureStats& stats);

struct FiveNumber {
  std::size_t n = 0;
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
};

/// Quartiles by linear interpolation between order statistics. Empty input gives n = 0.
FiveNumber five_number_summary(std::vector<double> values);

struct MetricMeans {
  std::size_t n = 0;
  double sparsity = 0.0;
  double l1 = 0.0;
  double l2 = 0.0;
  double linf = 0.0;
  double deviation = 0.0;
  double sensitivity = 0.0;
};

/// Means over all records, or over one group when success is given.
MetricMeans mean_metrics(const std::vector<MetricRecord>& records);
MetricMeans mean_metrics(const std::vector<MetricRecord>& records, bool success);

}  // namespace tabadv
