#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "tabadv/attacks.hpp"
#include "tabadv/data_pipeline.hpp"
#include "tabadv/schema.hpp"

namespace tabadv {

/// Names of immutable features whose decoded value changed.
std::vector<std::string> check_immutability(const AdversarialExample& ex, const FeatureSchema& schema,
                                            const EncoderState& enc, double tol = 1e-8);

struct FeasibilityVerdict {
  std::string feature;
  double original = 0.0;   // original units
  double perturbed = 0.0;  // original units
  bool changed = false;
  bool violated = false;  // changed and outside the feasible range
};

/// One verdict per feature that declares a feasible range.
std::vector<FeasibilityVerdict> check_feasibility(const AdversarialExample& ex, const FeatureSchema& schema,
                                                  const EncoderState& enc, double tol = 1e-8);

/// Rules broken by the perturbed example. A rule is only checked when the
/// example changed its source or derived feature.
std::vector<const InterdependencyRule*> check_interdependency(const AdversarialExample& ex,
                                                              const std::vector<InterdependencyRule>& rules,
                                                              const FeatureSchema& schema, const EncoderState& enc,
                                                              double tol = 1e-8);

struct PerturbationCounts {
  std::vector<std::string> features;  // schema order
  std::vector<std::size_t> counts;
  std::size_t n_examples = 0;
};

PerturbationCounts perturbation_counts(const std::vector<AdversarialExample>& examples, const EncoderState& enc,
                                       double tol = 1e-8);

struct ViolationReport {
  std::size_t n_examples = 0;
  std::vector<std::pair<std::string, std::size_t>> immutability;  // every immutable feature
  std::vector<std::pair<std::string, std::size_t>> feasibility;   // every feature with a range
  std::size_t interdependency = 0;

  std::size_t immutability_total() const;
  std::size_t feasibility_total() const;
};

ViolationReport violation_report(const std::vector<AdversarialExample>& examples, const FeatureSchema& schema,
                                 const EncoderState& enc, double tol = 1e-8);

/// Decoded value as display text, with the band label appended for numerical
/// features that declare bands, e.g. "32.8 (obese class I)".
std::string describe_value(const FeatureSpec& spec, const Value& v);

/// Plain-text block comparing an original row with one perturbed version per
/// attack, all in original units.
std::string format_case_report(const std::string& title, const FeatureSchema& schema, const EncoderState& enc,
                               const Eigen::VectorXd& original,
                               const std::vector<std::pair<std::string, Eigen::VectorXd>>& perturbed);

}  // namespace tabadv
