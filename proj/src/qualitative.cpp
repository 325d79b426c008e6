#include "tabadv/qualitative.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <fmt/format.h>

#include "tabadv/errors.hpp"
#include "tabadv/metrics.hpp"

namespace tabadv {

namespace {

void check_layout(const FeatureSchema& schema, const EncoderState& enc) {
  if (schema.features.size() != enc.feature_count()) {
    throw ContractError(fmt::format("schema has {} features, encoder {}", schema.features.size(),
                                    enc.feature_count()));
  }
}

bool feature_changed(const AdversarialExample& ex, const EncoderState& enc, std::size_t f, double tol) {
  const auto& b = enc.block(f);
  if (b.kind == FeatureKind::Numerical) {
    const auto c = static_cast<Eigen::Index>(b.offset);
    return std::abs(ex.perturbed(c) - ex.original(c)) > tol;
  }
  return enc.decode_level(f, ex.perturbed) != enc.decode_level(f, ex.original);
}

}  // namespace

std::vector<std::string> check_immutability(const AdversarialExample& ex, const FeatureSchema& schema,
                                            const EncoderState& enc, double tol) {
  check_layout(schema, enc);
  std::vector<std::string> out;
  for (std::size_t f = 0; f < schema.features.size(); ++f) {
    if (schema.features[f].immutable && feature_changed(ex, enc, f, tol)) out.push_back(schema.features[f].name);
  }
  return out;
}

std::vector<FeasibilityVerdict> check_feasibility(const AdversarialExample& ex, const FeatureSchema& schema,
                                                  const EncoderState& enc, double tol) {
  check_layout(schema, enc);
  std::vector<FeasibilityVerdict> out;
  for (std::size_t f = 0; f < schema.features.size(); ++f) {
    const auto& spec = schema.features[f];
    if (!spec.numerical() || !spec.feasible_range) continue;
    const auto c = static_cast<Eigen::Index>(enc.block(f).offset);
    FeasibilityVerdict v;
    v.feature = spec.name;
    v.original = enc.unscale(f, ex.original(c));
    v.perturbed = enc.unscale(f, ex.perturbed(c));
    v.changed = std::abs(ex.perturbed(c) - ex.original(c)) > tol;
    v.violated = v.changed && !spec.feasible_range->contains(v.perturbed);
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<const InterdependencyRule*> check_interdependency(const AdversarialExample& ex,
                                                              const std::vector<InterdependencyRule>& rules,
                                                              const FeatureSchema& schema, const EncoderState& enc,
                                                              double tol) {
  check_layout(schema, enc);
  std::vector<const InterdependencyRule*> out;
  for (const auto& rule : rules) {
    const auto src = schema.index_of(rule.source);
    const auto dst = schema.index_of(rule.derived);
    if (!src || !dst) throw ContractError(fmt::format("rule {} -> {} names unknown features", rule.source, rule.derived));
    if (!feature_changed(ex, enc, *src, tol) && !feature_changed(ex, enc, *dst, tol)) continue;
    const auto c = static_cast<Eigen::Index>(enc.block(*src).offset);
    const double value = enc.unscale(*src, ex.perturbed(c));
    const auto& level = enc.block(*dst).levels[enc.decode_level(*dst, ex.perturbed)];
    const auto expected = rule.level_for(value);
    if (!expected || *expected != level) out.push_back(&rule);
  }
  return out;
}

PerturbationCounts perturbation_counts(const std::vector<AdversarialExample>& examples, const EncoderState& enc,
                                       double tol) {
  if (examples.empty()) throw ContractError("perturbation counts of an empty example set");
  PerturbationCounts out;
  out.n_examples = examples.size();
  out.counts.assign(enc.feature_count(), 0);
  for (const auto& b : enc.blocks()) out.features.push_back(b.name);
  for (const auto& ex : examples) {
    for (std::size_t f : changed_features(ex.perturbed, ex.original, enc, tol)) ++out.counts[f];
  }
  return out;
}

std::size_t ViolationReport::immutability_total() const {
  std::size_t n = 0;
  for (const auto& [name, count] : immutability) n += count;
  return n;
}

std::size_t ViolationReport::feasibility_total() const {
  std::size_t n = 0;
  for (const auto& [name, count] : feasibility) n += count;
  return n;
}

ViolationReport violation_report(const std::vector<AdversarialExample>& examples, const FeatureSchema& schema,
                                 const EncoderState& enc, double tol) {
  check_layout(schema, enc);
  ViolationReport report;
  report.n_examples = examples.size();
  for (const auto& spec : schema.features) {
    if (spec.immutable) report.immutability.emplace_back(spec.name, 0);
    if (spec.numerical() && spec.feasible_range) report.feasibility.emplace_back(spec.name, 0);
  }
  auto bump = [](auto& list, const std::string& name) {
    for (auto& [n, count] : list) {
      if (n == name) ++count;
    }
  };
  for (const auto& ex : examples) {
    for (const auto& name : check_immutability(ex, schema, enc, tol)) bump(report.immutability, name);
    for (const auto& v : check_feasibility(ex, schema, enc, tol)) {
      if (v.violated) bump(report.feasibility, v.feature);
    }
    if (!check_interdependency(ex, schema.interdependencies, schema, enc, tol).empty()) ++report.interdependency;
  }
  return report;
}

std::string describe_value(const FeatureSpec& spec, const Value& v) {
  const auto* d = std::get_if<double>(&v);
  if (!d) return std::get<std::string>(v);
  std::string text = fmt::format("{:.2f}", *d);
  for (const auto& band : spec.bands) {
    if (band.range.contains(*d)) return fmt::format("{} ({})", text, band.label);
  }
  return text;
}

std::string format_case_report(const std::string& title, const FeatureSchema& schema, const EncoderState& enc,
                               const Eigen::VectorXd& original,
                               const std::vector<std::pair<std::string, Eigen::VectorXd>>& perturbed) {
  check_layout(schema, enc);
  const OriginalRow base = enc.decode(original);
  std::vector<OriginalRow> rows;
  for (const auto& [name, vec] : perturbed) rows.push_back(enc.decode(vec));

  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> head{"feature", "original"};
  for (const auto& [name, vec] : perturbed) head.push_back(name);
  cells.push_back(head);
  for (std::size_t f = 0; f < schema.features.size(); ++f) {
    const auto& spec = schema.features[f];
    std::vector<std::string> line{spec.name, describe_value(spec, base[f])};
    for (std::size_t a = 0; a < rows.size(); ++a) {
      std::string text = describe_value(spec, rows[a][f]);
      if (feature_changed(AdversarialExample{.original = original, .perturbed = perturbed[a].second}, enc, f, 1e-8)) {
        text += " *";
      }
      line.push_back(std::move(text));
    }
    cells.push_back(std::move(line));
  }

  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
  }
  std::ostringstream out;
  out << title << '\n';
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) {
      out << fmt::format("{:<{}}", line[i], width[i]) << (i + 1 < line.size() ? "  " : "\n");
    }
  }
  return out.str();
}

}  // namespace tabadv
