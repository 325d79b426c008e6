#include "tabadv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "tabadv/errors.hpp"

namespace tabadv {

namespace {

constexpr double kConstantSdv = 1e-12;

void check_pair(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b) {
  if (a.size() != b.size()) {
    throw ContractError(fmt::format("vector lengths differ: {} vs {}", a.size(), b.size()));
  }
}

}  // namespace

FeatureStats fit_feature_stats(const Eigen::Ref<const RowMatrix>& x_train,
                               const std::vector<std::size_t>& numerical_columns, double ridge) {
  const Eigen::Index m = x_train.rows();
  const Eigen::Index d = x_train.cols();
  if (m < 2) throw ContractError("feature statistics need at least 2 training rows");
  if (!(ridge >= 0.0)) throw ContractError("ridge must be nonnegative");

  FeatureStats stats;
  stats.numerical_columns = numerical_columns;
  stats.ridge = ridge;

  const Eigen::RowVectorXd col_mean = x_train.colwise().mean();
  const Eigen::MatrixXd centered = x_train.rowwise() - col_mean;

  const std::size_t n = numerical_columns.size();
  stats.mean.resize(static_cast<Eigen::Index>(n));
  stats.sdv.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<Eigen::Index>(numerical_columns[i]);
    if (c >= d) throw ContractError(fmt::format("numerical column {} out of range", c));
    const auto k = static_cast<Eigen::Index>(i);
    stats.mean(k) = col_mean(c);
    stats.sdv(k) = std::sqrt(centered.col(c).squaredNorm() / static_cast<double>(m));
    if (stats.sdv(k) < kConstantSdv) stats.constant_features.push_back(i);
  }

  stats.covariance = (centered.transpose() * centered) / static_cast<double>(m - 1);
  stats.covariance = 0.5 * (stats.covariance + stats.covariance.transpose()).eval();

  Eigen::MatrixXd reg = stats.covariance;
  reg.diagonal().array() += ridge;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(reg);
  const Eigen::VectorXd& values = eig.eigenvalues();
  const double cutoff = std::max<double>(values.cwiseAbs().maxCoeff(), 1.0) * static_cast<double>(d) *
                        std::numeric_limits<double>::epsilon();
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    if (values(i) > cutoff) inv(i) = 1.0 / values(i);
  }
  stats.pinv = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
  stats.pinv = 0.5 * (stats.pinv + stats.pinv.transpose()).eval();
  return stats;
}

FeatureStats fit_feature_stats(const EncodedDataset& data, double ridge) {
  return fit_feature_stats(data.x_train, data.encoder.numerical_columns(), ridge);
}

double proximity_lp(const Eigen::Ref<const Eigen::VectorXd>& x_adv, const Eigen::Ref<const Eigen::VectorXd>& x,
                    LpNorm p) {
  check_pair(x_adv, x);
  if (x.size() == 0) return 0.0;
  const Eigen::VectorXd delta = x_adv - x;
  switch (p) {
    case LpNorm::L1:
      return delta.lpNorm<1>();
    case LpNorm::L2:
      return delta.norm();
    case LpNorm::Linf:
      return delta.lpNorm<Eigen::Infinity>();
  }
  return 0.0;
}

std::vector<std::size_t> changed_features(const Eigen::Ref<const Eigen::VectorXd>& x_adv,
                                          const Eigen::Ref<const Eigen::VectorXd>& x, const EncoderState& enc,
                                          double tol) {
  check_pair(x_adv, x);
  if (static_cast<std::size_t>(x.size()) != enc.dim()) {
    throw ContractError(fmt::format("expected {} encoded columns, got {}", enc.dim(), x.size()));
  }
  std::vector<std::size_t> out;
  for (std::size_t f = 0; f < enc.feature_count(); ++f) {
    const auto& b = enc.block(f);
    if (b.kind == FeatureKind::Numerical) {
      const auto c = static_cast<Eigen::Index>(b.offset);
      if (std::abs(x_adv(c) - x(c)) > tol) out.push_back(f);
    } else if (enc.decode_level(f, x_adv) != enc.decode_level(f, x)) {
      out.push_back(f);
    }
  }
  return out;
}

int sparsity(const Eigen::Ref<const Eigen::VectorXd>& x_adv, const Eigen::Ref<const Eigen::VectorXd>& x,
             const EncoderState& enc, double tol) {
  return static_cast<int>(changed_features(x_adv, x, enc, tol).size());
}

double mahalanobis_deviation(const Eigen::Ref<const Eigen::VectorXd>& x_adv,
                             const Eigen::Ref<const Eigen::VectorXd>& x, const FeatureStats& stats) {
  check_pair(x_adv, x);
  if (static_cast<std::size_t>(x.size()) != stats.dim()) {
    throw ContractError(fmt::format("statistics fitted on {} columns, got {}", stats.dim(), x.size()));
  }
  const Eigen::VectorXd delta = x_adv - x;
  const double q = delta.dot(stats.pinv * delta);
  return std::sqrt(std::max(q, 0.0));
}

double sensitivity(const Eigen::Ref<const Eigen::VectorXd>& x_adv, const Eigen::Ref<const Eigen::VectorXd>& x,
                   const FeatureStats& stats) {
  check_pair(x_adv, x);
  double total = 0.0;
  for (std::size_t i = 0; i < stats.numerical_columns.size(); ++i) {
    const double s = stats.sdv(static_cast<Eigen::Index>(i));
    if (s < kConstantSdv) continue;
    const auto c = static_cast<Eigen::Index>(stats.numerical_columns[i]);
    if (c >= x.size()) throw ContractError("statistics do not match the vector length");
    total += std::abs(x_adv(c) - x(c)) / s;
  }
  return total;
}

double success_rate(const std::vector<AdversarialExample>& examples) {
  if (examples.empty()) throw ContractError("success rate of an empty example set");
  std::size_t hits = 0;
  for (const auto& ex : examples) {
    if (ex.adversarial_pred != ex.true_label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(examples.size());
}

MetricRecord measure(const AdversarialExample& ex, const EncoderState& enc, const FeatureStats& stats) {
  MetricRecord r;
  r.l1 = proximity_lp(ex.perturbed, ex.original, LpNorm::L1);
  r.l2 = proximity_lp(ex.perturbed, ex.original, LpNorm::L2);
  r.linf = proximity_lp(ex.perturbed, ex.original, LpNorm::Linf);
  r.sparsity = sparsity(ex.perturbed, ex.original, enc);
  r.deviation = mahalanobis_deviation(ex.perturbed, ex.original, stats);
  r.sensitivity = sensitivity(ex.perturbed, ex.original, stats);
  r.success = ex.adversarial_pred != ex.true_label;
  return r;
}

std::vector<MetricRecord> measure_all(const std::vector<AdversarialExample>& examples, const EncoderState& enc,
                                      const FeatureStats& stats) {
  std::vector<MetricRecord> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(measure(ex, enc, stats));
  return out;
}

FiveNumber five_number_summary(std::vector<double> values) {
  FiveNumber s;
  s.n = values.size();
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  auto at = [&](double q) {
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
  };
  s.min = values.front();
  s.q1 = at(0.25);
  s.median = at(0.5);
  s.q3 = at(0.75);
  s.max = values.back();
  return s;
}

namespace {

MetricMeans accumulate(const std::vector<MetricRecord>& records, const bool* group) {
  MetricMeans m;
  for (const auto& r : records) {
    if (group && r.success != *group) continue;
    ++m.n;
    m.sparsity += r.sparsity;
    m.l1 += r.l1;
    m.l2 += r.l2;
    m.linf += r.linf;
    m.deviation += r.deviation;
    m.sensitivity += r.sensitivity;
  }
  if (m.n > 0) {
    const auto n = static_cast<double>(m.n);
    m.sparsity /= n;
    m.l1 /= n;
    m.l2 /= n;
    m.linf /= n;
    m.deviation /= n;
    m.sensitivity /= n;
  }
  return m;
}

}  // namespace

MetricMeans mean_metrics(const std::vector<MetricRecord>& records) { return accumulate(records, nullptr); }

MetricMeans mean_metrics(const std::vector<MetricRecord>& records, bool success) {
  return accumulate(records, &success);
}

}  // namespace tabadv
