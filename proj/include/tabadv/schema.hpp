#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace tabadv {

enum class FeatureKind { Numerical, Categorical };

/// Real interval with optional (infinite) ends; ends are closed unless marked open.
struct Interval {
  std::optional<double> lo;
  std::optional<double> hi;
  bool lo_inclusive = true;
  bool hi_inclusive = true;

  bool contains(double v) const;
};

struct Band {
  Interval range;
  std::string label;
};

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::Numerical;
  std::vector<std::string> levels;  // categorical only, in encoding order
  bool immutable = false;
  std::optional<Interval> feasible_range;  // numerical only, original units
  std::vector<Band> bands;                 // informational labels for case reports

  bool numerical() const { return kind == FeatureKind::Numerical; }
  std::optional<std::size_t> level_index(std::string_view level) const;
};

/// Binning of a numerical source feature onto the levels of a categorical one,
/// e.g. exact age onto an age bracket.
struct InterdependencyRule {
  struct Bin {
    Interval interval;
    std::string level;
  };
  std::string source;
  std::string derived;
  std::vector<Bin> binning;

  /// Level mapped from a source value; empty when no bin contains it.
  std::optional<std::string> level_for(double source_value) const;
};

struct TargetSpec {
  std::string column;
  std::vector<std::string> positive;
  std::vector<std::string> negative;  // empty means "anything not positive"

  /// 1 for positive, 0 for negative, nullopt for values outside both lists.
  std::optional<int> label_for(std::string_view value) const;
};

struct FeatureSchema {
  std::string dataset_name;
  std::filesystem::path csv_path;  // resolved against the schema file's directory
  std::vector<FeatureSpec> features;
  TargetSpec target;
  std::vector<InterdependencyRule> interdependencies;

  /// Throws SchemaError on any invariant violation.
  void validate() const;

  std::optional<std::size_t> index_of(std::string_view name) const;
  const FeatureSpec& feature(std::string_view name) const;
  std::size_t numerical_count() const;
  bool numerical_only() const { return numerical_count() == features.size(); }
};

FeatureSchema schema_from_json(const nlohmann::json& doc,
                               const std::filesystem::path& base_dir = {});
FeatureSchema load_schema(const std::filesystem::path& path);

}  // namespace tabadv
