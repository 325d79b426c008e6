#include "tabadv/schema.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <set>

#include <fmt/format.h>

#include "tabadv/errors.hpp"

namespace tabadv {

using nlohmann::json;

bool Interval::contains(double v) const {
  if (lo) {
    if (lo_inclusive ? v < *lo : v <= *lo) return false;
  }
  if (hi) {
    if (hi_inclusive ? v > *hi : v >= *hi) return false;
  }
  return true;
}

std::optional<std::size_t> FeatureSpec::level_index(std::string_view level) const {
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (levels[i] == level) return i;
  }
  return std::nullopt;
}

std::optional<std::string> InterdependencyRule::level_for(double source_value) const {
  for (const auto& bin : binning) {
    if (bin.interval.contains(source_value)) return bin.level;
  }
  return std::nullopt;
}

std::optional<int> TargetSpec::label_for(std::string_view value) const {
  if (std::find(positive.begin(), positive.end(), value) != positive.end()) return 1;
  if (negative.empty()) return 0;
  if (std::find(negative.begin(), negative.end(), value) != negative.end()) return 0;
  return std::nullopt;
}

std::optional<std::size_t> FeatureSchema::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].name == name) return i;
  }
  return std::nullopt;
}

const FeatureSpec& FeatureSchema::feature(std::string_view name) const {
  auto idx = index_of(name);
  if (!idx) throw SchemaError(fmt::format("{}: unknown feature '{}'", dataset_name, name));
  return features[*idx];
}

std::size_t FeatureSchema::numerical_count() const {
  return static_cast<std::size_t>(
      std::count_if(features.begin(), features.end(), [](const auto& f) { return f.numerical(); }));
}

namespace {

// Intervals never overlap when, ordered by lower end, each one ends before the
// next begins (touching ends must have at least one open side).
bool disjoint(std::vector<Interval> items) {
  auto lower = [](const Interval& i) { return i.lo.value_or(-std::numeric_limits<double>::infinity()); };
  std::sort(items.begin(), items.end(),
            [&](const Interval& a, const Interval& b) { return lower(a) < lower(b); });
  for (std::size_t i = 1; i < items.size(); ++i) {
    const Interval& a = items[i - 1];
    const Interval& b = items[i];
    if (!a.hi || !b.lo) return false;
    if (*a.hi > *b.lo) return false;
    if (*a.hi == *b.lo && a.hi_inclusive && b.lo_inclusive) return false;
  }
  return true;
}

}  // namespace

void FeatureSchema::validate() const {
  auto fail = [&](const std::string& msg) { throw SchemaError(fmt::format("{}: {}", dataset_name, msg)); };

  if (features.empty()) fail("schema declares no features");
  if (target.column.empty()) fail("target column missing");
  if (target.positive.empty()) fail("target has no positive label");

  std::set<std::string> names;
  for (const auto& f : features) {
    if (f.name.empty()) fail("feature with empty name");
    if (!names.insert(f.name).second) fail(fmt::format("duplicate feature '{}'", f.name));
    if (f.name == target.column) fail(fmt::format("target '{}' listed among features", f.name));
    if (f.kind == FeatureKind::Categorical) {
      if (f.levels.empty()) fail(fmt::format("categorical '{}' has no levels", f.name));
      std::set<std::string> lv(f.levels.begin(), f.levels.end());
      if (lv.size() != f.levels.size()) fail(fmt::format("categorical '{}' repeats a level", f.name));
      if (f.feasible_range) fail(fmt::format("feasible range on categorical '{}'", f.name));
    }
    if (f.feasible_range) {
      const auto& r = *f.feasible_range;
      if (r.lo && r.hi && *r.lo > *r.hi) fail(fmt::format("feasible range of '{}' has lo > hi", f.name));
    }
  }

  for (const auto& rule : interdependencies) {
    auto src = index_of(rule.source);
    auto dst = index_of(rule.derived);
    if (!src) fail(fmt::format("interdependency source '{}' is not a feature", rule.source));
    if (!dst) fail(fmt::format("interdependency derived '{}' is not a feature", rule.derived));
    if (!features[*src].numerical()) fail(fmt::format("interdependency source '{}' must be numerical", rule.source));
    if (features[*dst].numerical()) fail(fmt::format("interdependency derived '{}' must be categorical", rule.derived));
    if (rule.binning.empty()) fail("interdependency without bins");
    std::vector<Interval> intervals;
    for (const auto& bin : rule.binning) {
      if (!features[*dst].level_index(bin.level)) {
        fail(fmt::format("bin level '{}' not a level of '{}'", bin.level, rule.derived));
      }
      intervals.push_back(bin.interval);
    }
    if (!disjoint(intervals)) fail(fmt::format("bins of '{}' -> '{}' overlap", rule.source, rule.derived));
  }
}

namespace {

Interval interval_from_json(const json& j) {
  Interval out;
  if (j.is_array()) {
    if (j.size() != 2) throw SchemaError("interval array must be [lo, hi]");
    if (!j[0].is_null()) out.lo = j[0].get<double>();
    if (!j[1].is_null()) out.hi = j[1].get<double>();
    return out;
  }
  if (j.contains("lo") && !j["lo"].is_null()) out.lo = j["lo"].get<double>();
  if (j.contains("hi") && !j["hi"].is_null()) out.hi = j["hi"].get<double>();
  out.lo_inclusive = j.value("lo_inclusive", true);
  out.hi_inclusive = j.value("hi_inclusive", true);
  return out;
}

}  // namespace

FeatureSchema schema_from_json(const json& doc, const std::filesystem::path& base_dir) {
  FeatureSchema s;
  try {
    s.dataset_name = doc.at("dataset").get<std::string>();
    if (doc.contains("csv")) {
      std::filesystem::path p = doc["csv"].get<std::string>();
      s.csv_path = p.is_absolute() || base_dir.empty() ? p : (base_dir / p).lexically_normal();
    }
    const auto& t = doc.at("target");
    s.target.column = t.at("column").get<std::string>();
    s.target.positive = t.at("positive").get<std::vector<std::string>>();
    if (t.contains("negative")) s.target.negative = t["negative"].get<std::vector<std::string>>();

    for (const auto& jf : doc.at("features")) {
      FeatureSpec f;
      f.name = jf.at("name").get<std::string>();
      const auto kind = jf.at("kind").get<std::string>();
      if (kind == "numerical") {
        f.kind = FeatureKind::Numerical;
      } else if (kind == "categorical") {
        f.kind = FeatureKind::Categorical;
        f.levels = jf.at("levels").get<std::vector<std::string>>();
      } else {
        throw SchemaError(fmt::format("feature '{}': unknown kind '{}'", f.name, kind));
      }
      f.immutable = jf.value("immutable", false);
      if (jf.contains("feasible_range")) f.feasible_range = interval_from_json(jf["feasible_range"]);
      if (jf.contains("bands")) {
        for (const auto& jb : jf["bands"]) {
          f.bands.push_back({interval_from_json(jb), jb.at("label").get<std::string>()});
        }
      }
      s.features.push_back(std::move(f));
    }

    if (doc.contains("interdependencies")) {
      for (const auto& jr : doc["interdependencies"]) {
        InterdependencyRule r;
        r.source = jr.at("source").get<std::string>();
        r.derived = jr.at("derived").get<std::string>();
        for (const auto& jb : jr.at("bins")) {
          r.binning.push_back({interval_from_json(jb), jb.at("level").get<std::string>()});
        }
        s.interdependencies.push_back(std::move(r));
      }
    }
  } catch (const json::exception& e) {
    throw SchemaError(fmt::format("malformed schema: {}", e.what()));
  }
  s.validate();
  return s;
}

FeatureSchema load_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError(fmt::format("cannot open schema {}", path.string()));
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw SchemaError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return schema_from_json(doc, path.parent_path());
}

}  // namespace tabadv
