#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "tabadv/errors.hpp"
#include "tabadv/models.hpp"

namespace tabadv {
namespace {

// Two Gaussian blobs centred at 0.25 and 0.75 in every coordinate.
struct Blobs {
  RowMatrix x;
  Eigen::VectorXi y;
};

Blobs make_blobs(std::size_t n, Eigen::Index d, std::uint64_t seed) {
  Rng rng(seed);
  Blobs b{RowMatrix(static_cast<Eigen::Index>(n), d), Eigen::VectorXi(static_cast<Eigen::Index>(n))};
  for (Eigen::Index i = 0; i < b.x.rows(); ++i) {
    const int label = i % 2;
    b.y[i] = label;
    for (Eigen::Index j = 0; j < d; ++j) {
      b.x(i, j) = std::clamp((label ? 0.75 : 0.25) + 0.08 * rng.normal(), 0.0, 1.0);
    }
  }
  return b;
}

Classifier small_mlp(std::uint64_t seed, Eigen::Index d) {
  Rng rng(seed);
  std::vector<Classifier::Layer> layers;
  Eigen::Index in = d;
  for (Eigen::Index out : {6, 4, 2}) {
    Classifier::Layer l{Eigen::MatrixXd(out, in), Eigen::VectorXd(out)};
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = rng.uniform(-1.0, 1.0);
    for (Eigen::Index i = 0; i < out; ++i) l.bias[i] = rng.uniform(-0.2, 0.2);
    layers.push_back(std::move(l));
    in = out;
  }
  return Classifier::mlp(std::move(layers));
}

double sigmoid(double s) { return 1.0 / (1.0 + std::exp(-s)); }

TEST(Classifier, ZeroWeightLogisticIsUndecided) {
  const auto m = Classifier::linear(ModelKind::LR, Eigen::VectorXd::Zero(3), 0.0);
  const auto out = m.predict(Eigen::Vector3d(0.2, 0.5, 0.9));
  ASSERT_TRUE(out.probabilities);
  EXPECT_DOUBLE_EQ((*out.probabilities)[0], 0.5);
  EXPECT_DOUBLE_EQ((*out.probabilities)[1], 0.5);
  EXPECT_EQ(out.label, 0);
}

TEST(Classifier, LogisticHandCase) {
  const auto m = Classifier::linear(ModelKind::LR, Eigen::Vector2d(2.0, -1.0), 0.5);
  const Eigen::Vector2d x(0.5, 0.25);
  const double s = 2.0 * 0.5 - 0.25 + 0.5;
  const auto out = m.predict(x);
  EXPECT_NEAR((*out.probabilities)[1], sigmoid(s), 1e-15);
  EXPECT_EQ(out.label, 1);
  EXPECT_NEAR(m.loss(x, 0), -std::log(1.0 - sigmoid(s)), 1e-12);
  EXPECT_NEAR(m.loss(x, 1), -std::log(sigmoid(s)), 1e-12);
}

TEST(Classifier, SvmHasNoProbabilities) {
  const auto m = Classifier::linear(ModelKind::LinearSVM, Eigen::Vector2d(1.0, 1.0), -1.0);
  EXPECT_FALSE(m.predict(Eigen::Vector2d(0.2, 0.2)).probabilities);
  EXPECT_EQ(m.predict_label(Eigen::Vector2d(0.2, 0.2)), 0);
  EXPECT_EQ(m.predict_label(Eigen::Vector2d(0.9, 0.9)), 1);
  EXPECT_FALSE(m.has_probabilities());
}

TEST(Classifier, ZeroMlpPredictsClassZero) {
  std::vector<Classifier::Layer> layers;
  layers.push_back({Eigen::MatrixXd::Zero(3, 4), Eigen::VectorXd::Zero(3)});
  layers.push_back({Eigen::MatrixXd::Zero(2, 3), Eigen::VectorXd::Zero(2)});
  const auto m = Classifier::mlp(std::move(layers));
  const auto out = m.predict(Eigen::Vector4d(0.1, 0.2, 0.3, 0.4));
  EXPECT_EQ(out.label, 0);
  EXPECT_DOUBLE_EQ((*out.probabilities)[1], 0.5);
}

TEST(Classifier, RejectsBadShapes) {
  EXPECT_THROW(Classifier::linear(ModelKind::MLP, Eigen::VectorXd::Zero(2), 0.0), ContractError);
  std::vector<Classifier::Layer> bad;
  bad.push_back({Eigen::MatrixXd::Zero(3, 4), Eigen::VectorXd::Zero(3)});
  bad.push_back({Eigen::MatrixXd::Zero(2, 5), Eigen::VectorXd::Zero(2)});
  EXPECT_THROW(Classifier::mlp(std::move(bad)), ContractError);
  const auto m = Classifier::linear(ModelKind::LR, Eigen::VectorXd::Zero(3), 0.0);
  EXPECT_THROW(m.predict(Eigen::Vector2d::Zero()), ContractError);
}

double central_difference(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x, Eigen::Index i,
                          double h) {
  const double v = x[i];
  x[i] = v + h;
  const double up = f(x);
  x[i] = v - h;
  const double down = f(x);
  return (up - down) / (2.0 * h);
}

void expect_gradient(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                     const Eigen::VectorXd& analytic) {
  const double h = 1e-4;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double fd = central_difference(f, x, i, h);
    EXPECT_NEAR(analytic[i], fd, 1e-4 * std::max(1.0, std::abs(fd))) << "coordinate " << i;
  }
}

TEST(Gradients, MatchFiniteDifferences) {
  Rng rng(5);
  const Eigen::Index d = 5;
  std::vector<Classifier> models;
  models.push_back(Classifier::linear(ModelKind::LR, testing::random_vector(rng, d, -2, 2), 0.3));
  models.push_back(Classifier::linear(ModelKind::LinearSVM, testing::random_vector(rng, d, -0.3, 0.3), 0.1));
  models.push_back(small_mlp(9, d));
  for (const auto& m : models) {
    SCOPED_TRACE(std::string(to_string(m.kind())));
    for (int trial = 0; trial < 10; ++trial) {
      const Eigen::VectorXd x = testing::random_vector(rng, d, 0.05, 0.95);
      for (int y : {0, 1}) {
        const double margin = (y == 1 ? 1.0 : -1.0) * m.predict(x).scores[1] / 2.0;
        if (m.kind() == ModelKind::LinearSVM && std::abs(1.0 - margin) < 1e-3) continue;
        expect_gradient([&](const Eigen::VectorXd& v) { return m.loss(v, y); }, x, m.input_gradient(x, y));
        Eigen::VectorXd g;
        m.score_margin(x, y, &g);
        expect_gradient([&](const Eigen::VectorXd& v) { return m.score_margin(v, y, nullptr); }, x, g);
        if (m.has_probabilities()) {
          m.output_margin(x, y, &g);
          expect_gradient([&](const Eigen::VectorXd& v) { return m.output_margin(v, y, nullptr); }, x, g);
        }
      }
    }
  }
}

TEST(Gradients, HingeIsFlatBeyondTheMargin) {
  const auto m = Classifier::linear(ModelKind::LinearSVM, Eigen::Vector2d(2.0, 2.0), -1.0);
  const Eigen::Vector2d x(0.9, 0.9);  // score 2.6
  EXPECT_EQ(m.loss(x, 1), 0.0);
  EXPECT_TRUE(m.input_gradient(x, 1).isZero());
  EXPECT_EQ(m.attack_gradient(x, 1), Eigen::Vector2d(-2.0, -2.0));
}

TEST(Gradients, LogisticAttackGradientIsLossGradient) {
  const auto m = Classifier::linear(ModelKind::LR, Eigen::Vector2d(1.5, -0.5), 0.2);
  const Eigen::Vector2d x(0.3, 0.6);
  EXPECT_EQ(m.attack_gradient(x, 1), m.input_gradient(x, 1));
  const double p = sigmoid(1.5 * 0.3 - 0.5 * 0.6 + 0.2);
  EXPECT_NEAR(m.input_gradient(x, 0)[0], p * 1.5, 1e-15);
}

TEST(BinaryMetrics, SixRowFixture) {
  Eigen::VectorXi truth(6), pred(6);
  truth << 1, 1, 1, 0, 0, 0;
  pred << 1, 1, 0, 1, 0, 0;
  const auto m = binary_metrics(truth, pred);
  EXPECT_DOUBLE_EQ(m.accuracy, 4.0 / 6.0);
  EXPECT_DOUBLE_EQ(m.precision, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.recall, 2.0 / 3.0);
  EXPECT_EQ(m.tp, 2u);
  EXPECT_EQ(m.fp, 1u);
  EXPECT_EQ(m.tn, 2u);
  EXPECT_EQ(m.fn, 1u);
}

TEST(BinaryMetrics, DegenerateCases) {
  Eigen::VectorXi zeros = Eigen::VectorXi::Zero(4);
  const auto m = binary_metrics(zeros, zeros);
  EXPECT_EQ(m.accuracy, 1.0);
  EXPECT_EQ(m.precision, 0.0);
  EXPECT_EQ(m.recall, 0.0);
  EXPECT_THROW(binary_metrics(Eigen::VectorXi(0), Eigen::VectorXi(0)), ContractError);
  EXPECT_THROW(binary_metrics(zeros, Eigen::VectorXi::Zero(3)), ContractError);
}

class Training : public ::testing::TestWithParam<ModelKind> {};

TEST_P(Training, SeparatesBlobs) {
  const auto train_set = make_blobs(400, 6, 1);
  const auto test_set = make_blobs(200, 6, 2);
  TrainingConfig cfg;
  cfg.epochs = 30;
  const auto m = train(train_set.x, train_set.y, GetParam(), cfg, 42);
  const auto metrics = binary_metrics(test_set.y, m.predict_labels(test_set.x));
  EXPECT_GE(metrics.accuracy, 0.95);
  EXPECT_GT(m.metrics.iterations, 0);
}

TEST_P(Training, DeterministicAndCheckpointExact) {
  const auto data = make_blobs(200, 4, 3);
  TrainingConfig cfg;
  cfg.epochs = 5;
  cfg.max_iter = 200;
  const auto a = train(data.x, data.y, GetParam(), cfg, 7);
  const auto b = train(data.x, data.y, GetParam(), cfg, 7);
  EXPECT_EQ(a.to_json(), b.to_json());

  const auto path = std::filesystem::temp_directory_path() /
                    ("tabadv_ckpt_" + std::string(to_string(GetParam())) + ".json");
  save_checkpoint(a, path);
  const auto c = load_checkpoint(path);
  std::filesystem::remove(path);
  EXPECT_EQ(c.kind(), a.kind());
  EXPECT_EQ(c.seed, 7u);
  for (Eigen::Index i = 0; i < data.x.rows(); ++i) {
    const Eigen::VectorXd x = data.x.row(i).transpose();
    ASSERT_EQ(c.predict(x).scores, a.predict(x).scores);
  }
}

INSTANTIATE_TEST_SUITE_P(Kinds, Training,
                         ::testing::Values(ModelKind::LR, ModelKind::LinearSVM, ModelKind::MLP),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(Training, RejectsMismatchedLabels) {
  const auto data = make_blobs(10, 2, 1);
  EXPECT_THROW(train(data.x, Eigen::VectorXi::Zero(9), ModelKind::LR, TrainingConfig{}, 1), ContractError);
}

TEST(Checkpoint, MissingFileIsIoError) {
  EXPECT_THROW(load_checkpoint("/nonexistent/model.json"), IoError);
}

TEST(ModelKind, NamesRoundTrip) {
  for (auto k : {ModelKind::LR, ModelKind::LinearSVM, ModelKind::MLP}) {
    EXPECT_EQ(model_kind_from_string(to_string(k)), k);
  }
  EXPECT_THROW(model_kind_from_string("Tree"), ConfigError);
}

}  // namespace
}  // namespace tabadv
