#include "tabadv/data_pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

#include <fmt/format.h>

#include "tabadv/errors.hpp"
#include "tabadv/rng.hpp"

namespace tabadv {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace

std::string value_to_string(const Value& v) {
  if (const auto* d = std::get_if<double>(&v)) return csv::format_double(*d);
  return std::get<std::string>(v);
}

RawTable table_from_csv(const csv::Table& data, const FeatureSchema& schema) {
  auto column = [&](const std::string& name) -> std::size_t {
    auto it = std::find(data.header.begin(), data.header.end(), name);
    if (it == data.header.end()) {
      throw SchemaError(fmt::format("{}: column '{}' missing from CSV header", schema.dataset_name, name));
    }
    return static_cast<std::size_t>(it - data.header.begin());
  };

  std::vector<std::size_t> cols;
  for (const auto& f : schema.features) cols.push_back(column(f.name));
  const std::size_t target_col = column(schema.target.column);

  RawTable out;
  out.dataset_name = schema.dataset_name;
  for (const auto& f : schema.features) out.feature_names.push_back(f.name);

  for (std::size_t r = 0; r < data.rows.size(); ++r) {
    const auto& rec = data.rows[r];
    if (rec.size() != data.header.size()) {
      ++out.dropped;
      continue;
    }
    auto label = schema.target.label_for(trim(rec[target_col]));
    if (!label) {
      ++out.dropped;
      continue;
    }
    OriginalRow row;
    row.reserve(cols.size());
    bool ok = true;
    for (std::size_t j = 0; j < cols.size() && ok; ++j) {
      const auto& spec = schema.features[j];
      std::string_view cell = trim(rec[cols[j]]);
      if (spec.numerical()) {
        auto v = parse_number(cell);
        if (v) row.emplace_back(*v); else ok = false;
      } else {
        if (!cell.empty() && spec.level_index(cell)) row.emplace_back(std::string(cell)); else ok = false;
      }
    }
    if (!ok) {
      ++out.dropped;
      continue;
    }
    out.rows.push_back(std::move(row));
    out.labels.push_back(*label);
    out.source_rows.push_back(r);
  }

  if (out.rows.empty()) throw DataError(fmt::format("{}: no usable rows", schema.dataset_name));

  for (const auto& rule : schema.interdependencies) {
    const std::size_t src = *schema.index_of(rule.source);
    for (const auto& row : out.rows) {
      const double v = std::get<double>(row[src]);
      if (!rule.level_for(v)) {
        throw SchemaError(fmt::format("{}: bins of '{}' do not cover observed value {}",
                                      schema.dataset_name, rule.source, v));
      }
    }
  }
  return out;
}

RawTable load_dataset(const std::filesystem::path& csv_path, const FeatureSchema& schema) {
  if (!std::filesystem::exists(csv_path)) {
    throw DataError(fmt::format("dataset file {} not found", csv_path.string()));
  }
  return table_from_csv(csv::read_file(csv_path), schema);
}

RawTable load_dataset(const FeatureSchema& schema) { return load_dataset(schema.csv_path, schema); }

Split stratified_split(const std::vector<int>& labels, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw SplitError(fmt::format("train fraction {} outside (0, 1)", train_fraction));
  }
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw SplitError("labels must be binary");
    by_class[labels[i]].push_back(i);
  }
  for (int c = 0; c < 2; ++c) {
    if (by_class[c].size() < 2) throw SplitError(fmt::format("class {} has fewer than 2 rows", c));
  }

  const std::size_t n = labels.size();
  const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n)));
  std::size_t quota[2];
  double remainder[2];
  std::size_t assigned = 0;
  for (int c = 0; c < 2; ++c) {
    const double exact = static_cast<double>(by_class[c].size()) * static_cast<double>(n_train) / static_cast<double>(n);
    quota[c] = static_cast<std::size_t>(std::floor(exact));
    remainder[c] = exact - static_cast<double>(quota[c]);
    assigned += quota[c];
  }
  while (assigned < n_train) {
    const int c = remainder[1] > remainder[0] ? 1 : 0;
    ++quota[c];
    remainder[c] = -1.0;
    ++assigned;
  }
  for (int c = 0; c < 2; ++c) {
    if (quota[c] == 0) throw SplitError(fmt::format("class {} absent from the training split", c));
    if (quota[c] >= by_class[c].size()) throw SplitError(fmt::format("class {} absent from the test split", c));
  }

  Rng rng(derive_seed(seed, "split"));
  Split split;
  for (int c = 0; c < 2; ++c) {
    auto& idx = by_class[c];
    rng.shuffle(idx);
    split.train.insert(split.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(quota[c]));
    split.test.insert(split.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(quota[c]), idx.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

EncoderState::EncoderState(std::vector<Block> blocks) : blocks_(std::move(blocks)) {
  dim_ = 0;
  for (auto& b : blocks_) {
    b.offset = dim_;
    b.width = b.kind == FeatureKind::Numerical ? 1 : b.levels.size();
    if (b.kind == FeatureKind::Categorical && b.levels.empty()) {
      throw SchemaError(fmt::format("categorical '{}' has no levels", b.name));
    }
    if (b.kind == FeatureKind::Numerical && !(b.min <= b.max)) {
      throw EncodingError(fmt::format("feature '{}' has min > max", b.name));
    }
    dim_ += b.width;
  }
}

std::vector<std::size_t> EncoderState::numerical_columns() const {
  std::vector<std::size_t> out;
  for (const auto& b : blocks_) {
    if (b.kind == FeatureKind::Numerical) out.push_back(b.offset);
  }
  return out;
}

std::vector<std::string> EncoderState::column_names() const {
  std::vector<std::string> out;
  out.reserve(dim_);
  for (const auto& b : blocks_) {
    if (b.kind == FeatureKind::Numerical) {
      out.push_back(b.name);
    } else {
      for (const auto& level : b.levels) out.push_back(b.name + "=" + level);
    }
  }
  return out;
}

double EncoderState::scale(std::size_t feature, double value) const {
  const auto& b = blocks_.at(feature);
  const double range = b.max - b.min;
  if (range <= 0.0) return 0.0;
  return std::clamp((value - b.min) / range, 0.0, 1.0);
}

double EncoderState::unscale(std::size_t feature, double encoded) const {
  const auto& b = blocks_.at(feature);
  return b.min + encoded * (b.max - b.min);
}

Eigen::VectorXd EncoderState::encode(const OriginalRow& row) const {
  if (row.size() != blocks_.size()) {
    throw EncodingError(fmt::format("row has {} values, encoder expects {}", row.size(), blocks_.size()));
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim_));
  for (std::size_t j = 0; j < blocks_.size(); ++j) {
    const auto& b = blocks_[j];
    if (b.kind == FeatureKind::Numerical) {
      const auto* v = std::get_if<double>(&row[j]);
      if (!v) throw EncodingError(fmt::format("feature '{}' expects a number", b.name));
      out[static_cast<Eigen::Index>(b.offset)] = scale(j, *v);
    } else {
      const auto* s = std::get_if<std::string>(&row[j]);
      if (!s) throw EncodingError(fmt::format("feature '{}' expects a level", b.name));
      auto it = std::find(b.levels.begin(), b.levels.end(), *s);
      if (it == b.levels.end()) throw EncodingError(fmt::format("unknown level '{}' for '{}'", *s, b.name));
      out[static_cast<Eigen::Index>(b.offset + static_cast<std::size_t>(it - b.levels.begin()))] = 1.0;
    }
  }
  return out;
}

std::size_t EncoderState::decode_level(std::size_t feature, const Eigen::Ref<const Eigen::VectorXd>& vec) const {
  const auto& b = blocks_.at(feature);
  std::size_t best = 0;
  for (std::size_t k = 1; k < b.width; ++k) {
    if (vec[static_cast<Eigen::Index>(b.offset + k)] > vec[static_cast<Eigen::Index>(b.offset + best)]) best = k;
  }
  return best;
}

OriginalRow EncoderState::decode(const Eigen::Ref<const Eigen::VectorXd>& vec) const {
  if (static_cast<std::size_t>(vec.size()) != dim_) {
    throw ContractError(fmt::format("decode: vector length {} != {}", vec.size(), dim_));
  }
  OriginalRow out;
  out.reserve(blocks_.size());
  for (std::size_t j = 0; j < blocks_.size(); ++j) {
    const auto& b = blocks_[j];
    if (b.kind == FeatureKind::Numerical) {
      out.emplace_back(unscale(j, vec[static_cast<Eigen::Index>(b.offset)]));
    } else {
      out.emplace_back(b.levels[decode_level(j, vec)]);
    }
  }
  return out;
}

EncoderState fit_encoder_state(const RawTable& table, const FeatureSchema& schema,
                               const std::vector<std::size_t>& train_rows) {
  if (train_rows.empty()) throw SplitError("no training rows to fit the encoder");
  std::vector<EncoderState::Block> blocks;
  for (std::size_t j = 0; j < schema.features.size(); ++j) {
    const auto& f = schema.features[j];
    EncoderState::Block b;
    b.name = f.name;
    b.kind = f.kind;
    b.levels = f.levels;
    if (f.numerical()) {
      b.min = std::numeric_limits<double>::infinity();
      b.max = -std::numeric_limits<double>::infinity();
      for (std::size_t r : train_rows) {
        const double v = std::get<double>(table.rows.at(r)[j]);
        b.min = std::min(b.min, v);
        b.max = std::max(b.max, v);
      }
    }
    blocks.push_back(std::move(b));
  }
  return EncoderState(std::move(blocks));
}

Eigen::VectorXd encode_row(const OriginalRow& row, const EncoderState& enc) { return enc.encode(row); }

OriginalRow decode_row(const Eigen::Ref<const Eigen::VectorXd>& vec, const EncoderState& enc) {
  return enc.decode(vec);
}

EncodedDataset encode_split(const RawTable& table, const FeatureSchema& schema, const Split& split,
                            std::uint64_t seed) {
  EncodedDataset ds;
  ds.schema = schema;
  ds.seed = seed;
  ds.encoder = fit_encoder_state(table, schema, split.train);
  ds.train_rows = split.train;
  ds.test_rows = split.test;

  auto fill = [&](const std::vector<std::size_t>& rows, RowMatrix& x, Eigen::VectorXi& y) {
    x.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(ds.encoder.dim()));
    y.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      x.row(static_cast<Eigen::Index>(i)) = ds.encoder.encode(table.rows.at(rows[i])).transpose();
      y[static_cast<Eigen::Index>(i)] = table.labels.at(rows[i]);
    }
  };
  fill(split.train, ds.x_train, ds.y_train);
  fill(split.test, ds.x_test, ds.y_test);
  return ds;
}

EncodedDataset fit_encoder(const RawTable& table, const FeatureSchema& schema, double train_fraction,
                           std::uint64_t seed) {
  return encode_split(table, schema, stratified_split(table.labels, train_fraction, seed), seed);
}

}  // namespace tabadv
