#include <cmath>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "tabadv/errors.hpp"
#include "tabadv/metrics.hpp"

namespace tabadv {
namespace {

std::vector<std::size_t> all_columns(std::size_t d) {
  std::vector<std::size_t> c(d);
  for (std::size_t i = 0; i < d; ++i) c[i] = i;
  return c;
}

// Rows +-a_i e_i give zero mean and sample covariance diag(2 a_i^2 / (2d - 1)).
RowMatrix diagonal_data(const Eigen::VectorXd& variances) {
  const Eigen::Index d = variances.size();
  RowMatrix x = RowMatrix::Zero(2 * d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const double a = std::sqrt(variances[i] * static_cast<double>(2 * d - 1) / 2.0);
    x(2 * i, i) = a;
    x(2 * i + 1, i) = -a;
  }
  return x;
}

TEST(Proximity, HandComputedNorms) {
  const Eigen::Vector3d x(0.5, 0.5, 0.5);
  const Eigen::Vector3d adv = x + Eigen::Vector3d(0.3, -0.4, 0.0);
  EXPECT_NEAR(proximity_lp(adv, x, LpNorm::L1), 0.7, 1e-12);
  EXPECT_NEAR(proximity_lp(adv, x, LpNorm::L2), 0.5, 1e-12);
  EXPECT_NEAR(proximity_lp(adv, x, LpNorm::Linf), 0.4, 1e-12);
  EXPECT_EQ(proximity_lp(x, x, LpNorm::L2), 0.0);
  EXPECT_THROW(proximity_lp(Eigen::Vector2d::Zero(), x, LpNorm::L1), ContractError);
}

TEST(Proximity, NormOrdering) {
  Rng rng(12);
  for (int t = 0; t < 10000; ++t) {
    const auto d = static_cast<Eigen::Index>(1 + rng.below(20));
    const auto x = testing::random_vector(rng, d);
    const auto adv = testing::random_vector(rng, d);
    const double l1 = proximity_lp(adv, x, LpNorm::L1);
    const double l2 = proximity_lp(adv, x, LpNorm::L2);
    const double li = proximity_lp(adv, x, LpNorm::Linf);
    ASSERT_LE(li, l2 + 1e-12);
    ASSERT_LE(l2, l1 + 1e-12);
    ASSERT_LE(l1, std::sqrt(static_cast<double>(d)) * l2 + 1e-12);
    ASSERT_LE(l2, std::sqrt(static_cast<double>(d)) * li + 1e-12);
  }
}

TEST(FeatureStats, TwoPointMeanAndSpread) {
  RowMatrix x(2, 2);
  x << 0, 0, 2, 2;
  const auto s = fit_feature_stats(x, {0, 1}, 0.0);
  EXPECT_EQ(s.mean, Eigen::Vector2d(1, 1));
  EXPECT_EQ(s.sdv, Eigen::Vector2d(1, 1));
  EXPECT_EQ(s.covariance, (Eigen::Matrix2d() << 2, 2, 2, 2).finished());
}

TEST(FeatureStats, LargeSampleCovarianceIsIdentity) {
  Rng rng(31);
  RowMatrix x(10000, 3);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  const auto s = fit_feature_stats(x, all_columns(3));
  EXPECT_LE((s.covariance - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 0.05);
}

TEST(FeatureStats, PseudoInverseIdentities) {
  Rng rng(2);
  // Two numerical columns and a three-level one-hot block: the block makes V singular.
  RowMatrix x(50, 5);
  for (Eigen::Index i = 0; i < 50; ++i) {
    x(i, 0) = rng.uniform();
    x(i, 1) = rng.uniform();
    x.row(i).tail(3).setZero();
    x(i, 2 + static_cast<Eigen::Index>(rng.below(3))) = 1.0;
  }
  for (double ridge : {0.0, 1e-6, 1e-2}) {
    SCOPED_TRACE(ridge);
    const auto s = fit_feature_stats(x, {0, 1}, ridge);
    Eigen::MatrixXd r = s.covariance;
    r.diagonal().array() += ridge;
    EXPECT_LE((r * s.pinv * r - r).cwiseAbs().maxCoeff(), 1e-8);
    const double scale = s.pinv.cwiseAbs().maxCoeff();
    EXPECT_LE((s.pinv * r * s.pinv - s.pinv).cwiseAbs().maxCoeff(), 1e-8 * scale);
    EXPECT_LE((s.pinv - s.pinv.transpose()).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(FeatureStats, RejectsTooFewRowsAndNegativeRidge) {
  EXPECT_THROW(fit_feature_stats(RowMatrix::Zero(1, 2), {0, 1}), ContractError);
  EXPECT_THROW(fit_feature_stats(RowMatrix::Zero(3, 2), {0, 1}, -1.0), ContractError);
}

TEST(Mahalanobis, DiagonalCovariance) {
  const auto s = fit_feature_stats(diagonal_data(Eigen::Vector3d(4.0, 1.0, 0.25)), all_columns(3), 0.0);
  ASSERT_LE((s.covariance - Eigen::Vector3d(4.0, 1.0, 0.25).asDiagonal().toDenseMatrix()).norm(), 1e-12);
  const Eigen::Vector3d x = Eigen::Vector3d::Zero();
  EXPECT_NEAR(mahalanobis_deviation(Eigen::Vector3d(2.0, 1.0, 0.5), x, s), std::sqrt(3.0), 1e-12);
}

TEST(Mahalanobis, IdentityCovarianceIsEuclidean) {
  const auto s = fit_feature_stats(diagonal_data(Eigen::Vector4d::Ones()), all_columns(4), 0.0);
  Rng rng(6);
  for (int t = 0; t < 100; ++t) {
    const auto a = testing::random_vector(rng, 4);
    const auto b = testing::random_vector(rng, 4);
    ASSERT_NEAR(mahalanobis_deviation(a, b, s), (a - b).norm(), 1e-9);
  }
}

TEST(Mahalanobis, NonNegativeAndZeroOnIdentity) {
  Rng rng(9);
  RowMatrix x(30, 4);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform();
  x.col(3) = x.col(0) + x.col(1);  // collinear
  const auto s = fit_feature_stats(x, all_columns(4));
  for (int t = 0; t < 200; ++t) {
    const auto a = testing::random_vector(rng, 4);
    ASSERT_GE(mahalanobis_deviation(a, testing::random_vector(rng, 4), s), 0.0);
    ASSERT_EQ(mahalanobis_deviation(a, a, s), 0.0);
  }
  EXPECT_THROW(mahalanobis_deviation(Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero(), s), ContractError);
}

TEST(Sensitivity, HandComputed) {
  RowMatrix x(2, 2);
  x << 0.3, 0.45, 0.7, 0.65;
  const auto s = fit_feature_stats(x, {0, 1});
  EXPECT_NEAR(s.sdv[0], 0.2, 1e-12);
  EXPECT_NEAR(s.sdv[1], 0.1, 1e-12);
  const Eigen::Vector2d a(0.5, 0.5);
  EXPECT_NEAR(sensitivity(a + Eigen::Vector2d(0.1, -0.05), a, s), 1.0, 1e-12);
}

TEST(Sensitivity, ScaleInvariant) {
  Rng rng(10);
  RowMatrix x(40, 3);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform();
  const auto base = fit_feature_stats(x, all_columns(3));
  const double k = 3.7;
  const auto scaled = fit_feature_stats(k * x, all_columns(3));
  for (int t = 0; t < 50; ++t) {
    const auto a = testing::random_vector(rng, 3);
    const auto b = testing::random_vector(rng, 3);
    ASSERT_NEAR(sensitivity(k * a, k * b, scaled), sensitivity(a, b, base), 1e-9);
  }
}

TEST(Sensitivity, SkipsConstantAndCategoricalColumns) {
  RowMatrix x(3, 3);
  x << 0.0, 0.5, 1.0, 1.0, 0.5, 0.0, 0.5, 0.5, 1.0;
  const auto s = fit_feature_stats(x, {0, 1});
  EXPECT_EQ(s.constant_features, (std::vector<std::size_t>{1}));
  const Eigen::Vector3d a(0.5, 0.5, 1.0);
  const Eigen::Vector3d b(0.5, 0.9, 0.0);
  EXPECT_EQ(sensitivity(b, a, s), 0.0);
}

TEST(Sparsity, NumericToleranceAndCategoricalLevels) {
  const auto enc = testing::make_encoder({testing::numerical("n"), testing::categorical("c", {"a", "b", "c"})});
  const Eigen::Vector4d x(0.5, 1.0, 0.0, 0.0);
  EXPECT_EQ(sparsity(x, x, enc), 0);
  EXPECT_EQ(sparsity(Eigen::Vector4d(0.5 + 1e-9, 1.0, 0.0, 0.0), x, enc), 0);
  EXPECT_EQ(sparsity(Eigen::Vector4d(0.5 + 1e-6, 1.0, 0.0, 0.0), x, enc), 1);
  EXPECT_EQ(sparsity(Eigen::Vector4d(0.5, 0.7, 0.3, 0.0), x, enc), 0);
  EXPECT_EQ(sparsity(Eigen::Vector4d(0.5, 0.3, 0.7, 0.0), x, enc), 1);
  EXPECT_EQ(sparsity(Eigen::Vector4d(0.6, 0.3, 0.7, 0.0), x, enc), 2);
  EXPECT_EQ(changed_features(Eigen::Vector4d(0.5, 0.0, 0.0, 1.0), x, enc), (std::vector<std::size_t>{1}));
  EXPECT_THROW(sparsity(Eigen::Vector3d::Zero(), Eigen::Vector3d::Zero(), enc), ContractError);
}

TEST(Sparsity, MonotoneInChangedCoordinates) {
  const auto enc = testing::make_encoder(
      {testing::numerical("a"), testing::numerical("b"), testing::numerical("c"), testing::numerical("d")});
  Rng rng(15);
  for (int t = 0; t < 200; ++t) {
    const auto x = testing::random_vector(rng, 4);
    Eigen::VectorXd adv = x;
    int last = 0;
    for (Eigen::Index i = 0; i < 4; ++i) {
      adv[i] = 1.0 - x[i] + 0.01;
      const int s = sparsity(adv, x, enc);
      ASSERT_GE(s, last);
      last = s;
    }
    ASSERT_EQ(last, 4);
  }
}

AdversarialExample example(int truth, int adv_pred) {
  AdversarialExample ex;
  ex.true_label = truth;
  ex.adversarial_pred = adv_pred;
  return ex;
}

TEST(SuccessRate, CountsFlipsAgainstTruth) {
  EXPECT_DOUBLE_EQ(success_rate({example(0, 1), example(1, 0), example(1, 1), example(0, 1)}), 0.75);
  EXPECT_THROW(success_rate({}), ContractError);
}

TEST(FiveNumber, LinearInterpolation) {
  const auto s = five_number_summary({4.0, 1.0, 3.0, 2.0});
  EXPECT_EQ(s.n, 4u);
  EXPECT_DOUBLE_EQ(s.min, 1.0);
  EXPECT_DOUBLE_EQ(s.q1, 1.75);
  EXPECT_DOUBLE_EQ(s.median, 2.5);
  EXPECT_DOUBLE_EQ(s.q3, 3.25);
  EXPECT_DOUBLE_EQ(s.max, 4.0);

  const auto five = five_number_summary({10, 20, 30, 40, 50});
  EXPECT_DOUBLE_EQ(five.q1, 20.0);
  EXPECT_DOUBLE_EQ(five.median, 30.0);

  const auto one = five_number_summary({7.0});
  EXPECT_EQ(one.min, 7.0);
  EXPECT_EQ(one.median, 7.0);
  EXPECT_EQ(one.max, 7.0);
  EXPECT_EQ(five_number_summary({}).n, 0u);
}

TEST(Measure, RecordAndGroupMeans) {
  const auto enc = testing::make_encoder({testing::numerical("a"), testing::numerical("b")});
  const auto stats = fit_feature_stats(diagonal_data(Eigen::Vector2d::Ones()), {0, 1}, 0.0);
  std::vector<AdversarialExample> examples;
  for (int i = 0; i < 3; ++i) {
    AdversarialExample ex = example(0, i < 2 ? 1 : 0);
    ex.original = Eigen::Vector2d(0.5, 0.5);
    ex.perturbed = ex.original + Eigen::Vector2d(0.3 * (i + 1), 0.0);
    examples.push_back(ex);
  }
  const auto records = measure_all(examples, enc, stats);
  ASSERT_EQ(records.size(), 3u);
  EXPECT_NEAR(records[1].l2, 0.6, 1e-12);
  EXPECT_NEAR(records[1].deviation, 0.6, 1e-9);
  EXPECT_EQ(records[1].sparsity, 1);
  EXPECT_FALSE(records[2].success);

  const auto all = mean_metrics(records);
  EXPECT_EQ(all.n, 3u);
  EXPECT_NEAR(all.l1, 0.6, 1e-12);
  const auto hit = mean_metrics(records, true);
  EXPECT_EQ(hit.n, 2u);
  EXPECT_NEAR(hit.l1, 0.45, 1e-12);
  const auto miss = mean_metrics(records, false);
  EXPECT_EQ(miss.n, 1u);
  EXPECT_NEAR(miss.linf, 0.9, 1e-12);
  EXPECT_EQ(mean_metrics({}).n, 0u);
}

}  // namespace
}  // namespace tabadv
