#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "tabadv/errors.hpp"
#include "tabadv/metrics.hpp"
#include "tabadv/qualitative.hpp"

namespace tabadv {
namespace {

class Compas : public ::testing::Test {
 protected:
  void SetUp() override {
    schema = load_schema(testing::schema_path("compas"));
    std::vector<std::pair<double, double>> ranges;
    for (const auto& f : schema.features) {
      if (f.numerical()) ranges.emplace_back(f.name == "age" ? std::pair{18.0, 96.0} : std::pair{0.0, 10.0});
    }
    enc = testing::make_encoder(schema.features, ranges);
  }

  OriginalRow row(double age, const std::string& age_cat) const {
    OriginalRow r;
    for (const auto& f : schema.features) {
      if (f.name == "age") r.emplace_back(age);
      else if (f.name == "age_cat") r.emplace_back(age_cat);
      else if (f.numerical()) r.emplace_back(5.0);
      else r.emplace_back(f.levels.front());
    }
    return r;
  }

  AdversarialExample example(const OriginalRow& original, const OriginalRow& perturbed) const {
    AdversarialExample ex;
    ex.original = enc.encode(original);
    ex.perturbed = enc.encode(perturbed);
    return ex;
  }

  void set(OriginalRow& r, const std::string& name, Value v) const { r[*schema.index_of(name)] = std::move(v); }

  FeatureSchema schema;
  EncoderState enc;
};

TEST_F(Compas, AgeDropWithStaleBracketBreaksTheRule) {
  const auto ex = example(row(80, "Greater than 45"), row(18, "Greater than 45"));
  const auto broken = check_interdependency(ex, schema.interdependencies, schema, enc);
  ASSERT_EQ(broken.size(), 1u);
  EXPECT_EQ(broken[0]->derived, "age_cat");
}

TEST_F(Compas, AgeDropWithMatchingBracketIsConsistent) {
  const auto ex = example(row(80, "Greater than 45"), row(18, "Less than 25"));
  EXPECT_TRUE(check_interdependency(ex, schema.interdependencies, schema, enc).empty());
}

TEST_F(Compas, BracketFlipAloneBreaksTheRule) {
  const auto ex = example(row(30, "25 - 45"), row(30, "Less than 25"));
  EXPECT_EQ(check_interdependency(ex, schema.interdependencies, schema, enc).size(), 1u);
}

TEST_F(Compas, UntouchedInconsistentRowIsNotFlagged) {
  const auto r = row(30, "Less than 25");
  auto moved = r;
  set(moved, "priors_count", 7.0);
  EXPECT_TRUE(check_interdependency(example(r, moved), schema.interdependencies, schema, enc).empty());
}

TEST_F(Compas, RaceFlipIsImmutabilityViolation) {
  const auto r = row(30, "25 - 45");
  auto moved = r;
  set(moved, "race", std::string("Caucasian"));
  EXPECT_EQ(check_immutability(example(r, moved), schema, enc), (std::vector<std::string>{"race"}));
}

TEST_F(Compas, MutableOnlyChangeIsClean) {
  const auto r = row(30, "25 - 45");
  auto moved = r;
  set(moved, "priors_count", 2.0);
  set(moved, "c_charge_degree", std::string("M"));
  const auto ex = example(r, moved);
  EXPECT_TRUE(check_immutability(ex, schema, enc).empty());
  EXPECT_TRUE(check_interdependency(ex, schema.interdependencies, schema, enc).empty());
  const auto report = violation_report({ex}, schema, enc);
  EXPECT_EQ(report.immutability_total(), 0u);
  EXPECT_EQ(report.interdependency, 0u);
  EXPECT_EQ(report.immutability.size(), 2u);
}

TEST_F(Compas, SubThresholdOneHotNoiseNeverFlipsALevel) {
  Rng rng(21);
  for (int t = 0; t < 2000; ++t) {
    const auto& race = schema.feature("race");
    auto r = row(18.0 + 78.0 * rng.uniform(), "25 - 45");
    set(r, "race", race.levels[rng.below(race.levels.size())]);
    AdversarialExample ex;
    ex.original = enc.encode(r);
    const Eigen::VectorXd noise = testing::random_vector(rng, ex.original.size(), -0.4999, 0.4999);
    ex.perturbed = (ex.original + noise).cwiseMax(0.0).cwiseMin(1.0);
    ASSERT_TRUE(check_immutability(ex, schema, enc).empty());
  }
}

TEST_F(Compas, ReportCountsAcrossExamples) {
  const auto r = row(30, "25 - 45");
  auto race = r;
  set(race, "race", std::string("Other"));
  auto both = race;
  set(both, "sex", std::string("Male"));
  auto stale = r;
  set(stale, "age", 60.0);
  const auto report = violation_report({example(r, race), example(r, both), example(r, stale)}, schema, enc);
  EXPECT_EQ(report.n_examples, 3u);
  EXPECT_EQ(report.immutability_total(), 3u);
  EXPECT_EQ(report.interdependency, 1u);
  for (const auto& [name, count] : report.immutability) EXPECT_EQ(count, name == "race" ? 2u : 1u) << name;
}

TEST_F(Compas, CaseReportMarksChangedFeatures) {
  const auto r = row(80, "Greater than 45");
  auto moved = r;
  set(moved, "age", 18.0);
  const auto text = format_case_report("row 1", schema, enc, enc.encode(r), {{"DeepFool", enc.encode(moved)}});
  EXPECT_NE(text.find("row 1"), std::string::npos);
  EXPECT_NE(text.find("DeepFool"), std::string::npos);
  EXPECT_NE(text.find("18.00 *"), std::string::npos);
  EXPECT_NE(text.find("80.00"), std::string::npos);
  EXPECT_EQ(text.find("Male *"), std::string::npos);
}

TEST_F(Compas, LayoutMismatchIsContractError) {
  const auto small = testing::make_encoder({testing::numerical("age")});
  AdversarialExample ex;
  ex.original = ex.perturbed = Eigen::VectorXd::Zero(1);
  EXPECT_THROW(check_immutability(ex, schema, small), ContractError);
}

class Diabetes : public ::testing::Test {
 protected:
  void SetUp() override {
    schema = load_schema(testing::schema_path("diabetes"));
    std::vector<std::pair<double, double>> ranges;
    for (const auto& f : schema.features) ranges.emplace_back(f.name == "Insulin" ? std::pair{0.0, 256.0}
                                                                                  : std::pair{0.0, 64.0});
    enc = testing::make_encoder(schema.features, ranges);
  }

  OriginalRow row(double skin, double insulin) const {
    OriginalRow r(schema.features.size(), Value(30.0));
    r[*schema.index_of("SkinThickness")] = skin;
    r[*schema.index_of("Insulin")] = insulin;
    return r;
  }

  const FeasibilityVerdict& verdict(const std::vector<FeasibilityVerdict>& all, const std::string& name) const {
    for (const auto& v : all) {
      if (v.feature == name) return v;
    }
    throw std::out_of_range(name);
  }

  AdversarialExample example(const OriginalRow& a, const OriginalRow& b) const {
    AdversarialExample ex;
    ex.original = enc.encode(a);
    ex.perturbed = enc.encode(b);
    return ex;
  }

  FeatureSchema schema;
  EncoderState enc;
};

TEST_F(Diabetes, OutOfRangeValuesAreViolations) {
  const auto ex = example(row(20.0, 80.0), row(32.81, 80.0));
  const auto verdicts = check_feasibility(ex, schema, enc);
  EXPECT_EQ(verdicts.size(), 4u);
  const auto& skin = verdict(verdicts, "SkinThickness");
  EXPECT_TRUE(skin.changed);
  EXPECT_TRUE(skin.violated);
  EXPECT_NEAR(skin.perturbed, 32.81, 1e-9);
  EXPECT_FALSE(verdict(verdicts, "Insulin").changed);

  const auto low = check_feasibility(example(row(20.0, 80.0), row(20.0, 2.65)), schema, enc);
  const auto& insulin = verdict(low, "Insulin");
  EXPECT_TRUE(insulin.violated);
  EXPECT_NEAR(insulin.perturbed, 2.65, 1e-9);
}

TEST_F(Diabetes, RangeBoundariesAreClosed) {
  const auto verdicts = check_feasibility(example(row(20.0, 80.0), row(20.0, 16.0)), schema, enc);
  EXPECT_TRUE(verdict(verdicts, "Insulin").changed);
  EXPECT_FALSE(verdict(verdicts, "Insulin").violated);
  const auto top = check_feasibility(example(row(20.0, 80.0), row(20.0, 166.0)), schema, enc);
  EXPECT_FALSE(verdict(top, "Insulin").violated);
}

TEST_F(Diabetes, UnchangedOutOfRangeValueIsNotAViolation) {
  const auto verdicts = check_feasibility(example(row(0.0, 16.0), row(0.0, 16.0)), schema, enc);
  EXPECT_FALSE(verdict(verdicts, "SkinThickness").violated);
}

TEST_F(Diabetes, DescribeValueAppendsBand) {
  EXPECT_EQ(describe_value(schema.feature("BMI"), 32.81), "32.81 (obese class I)");
  EXPECT_EQ(describe_value(schema.feature("Pregnancies"), 3.0), "3.00");
  EXPECT_EQ(describe_value(schema.feature("Pregnancies"), std::string("x")), "x");
}

TEST(PerturbationCounts, ThreeExampleFixture) {
  const auto enc = testing::make_encoder(
      {testing::numerical("a"), testing::numerical("b"), testing::categorical("c", {"x", "y"})});
  const Eigen::Vector4d x(0.5, 0.5, 1.0, 0.0);
  std::vector<AdversarialExample> examples(3);
  for (auto& ex : examples) ex.original = x;
  examples[0].perturbed = Eigen::Vector4d(0.7, 0.5, 1.0, 0.0);
  examples[1].perturbed = Eigen::Vector4d(0.2, 0.5, 0.0, 1.0);
  examples[2].perturbed = Eigen::Vector4d(0.5, 0.5, 0.6, 0.4);
  const auto counts = perturbation_counts(examples, enc);
  EXPECT_EQ(counts.features, (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(counts.counts, (std::vector<std::size_t>{2, 0, 1}));
  EXPECT_EQ(counts.n_examples, 3u);
  EXPECT_THROW(perturbation_counts({}, enc), ContractError);
}

TEST(PerturbationCounts, TotalEqualsSummedSparsity) {
  const auto enc = testing::make_encoder(
      {testing::numerical("a"), testing::categorical("c", {"x", "y", "z"}), testing::numerical("b")});
  Rng rng(33);
  std::vector<AdversarialExample> examples;
  int total = 0;
  for (int t = 0; t < 300; ++t) {
    AdversarialExample ex;
    ex.original = testing::random_vector(rng, 5);
    ex.perturbed = ex.original;
    for (Eigen::Index i = 0; i < 5; ++i) {
      if (rng.uniform() < 0.4) ex.perturbed[i] = rng.uniform();
    }
    total += sparsity(ex.perturbed, ex.original, enc);
    examples.push_back(ex);
  }
  const auto counts = perturbation_counts(examples, enc);
  std::size_t sum = 0;
  for (auto c : counts.counts) sum += c;
  EXPECT_EQ(sum, static_cast<std::size_t>(total));
}

}  // namespace
}  // namespace tabadv
