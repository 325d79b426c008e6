#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "tabadv/csv.hpp"
#include "tabadv/schema.hpp"

namespace tabadv {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A feature value in original units: a number or a categorical level.
using Value = std::variant<double, std::string>;
using OriginalRow = std::vector<Value>;

struct RawTable {
  std::string dataset_name;
  std::vector<std::string> feature_names;  // schema order
  std::vector<OriginalRow> rows;
  std::vector<int> labels;
  std::vector<std::size_t> source_rows;  // 0-based data-line index in the CSV
  std::size_t dropped = 0;

  std::size_t size() const { return rows.size(); }
};

/// Keeps the schema's feature and target columns. Rows with a missing or
/// unparsable cell, an unknown categorical level, or an unmapped target value
/// are dropped and counted.
RawTable load_dataset(const std::filesystem::path& csv_path, const FeatureSchema& schema);
RawTable load_dataset(const FeatureSchema& schema);
RawTable table_from_csv(const csv::Table& csv, const FeatureSchema& schema);

struct Split {
  std::vector<std::size_t> train;  // ascending row indices
  std::vector<std::size_t> test;
};

/// Stratified split with floor(fraction * N) training rows overall, allotted
/// to classes by largest remainder. Each class is shuffled with its own draw
/// sequence from one seeded generator.
Split stratified_split(const std::vector<int>& labels, double train_fraction, std::uint64_t seed);

class EncoderState {
 public:
  struct Block {
    std::string name;
    FeatureKind kind = FeatureKind::Numerical;
    std::vector<std::string> levels;
    std::size_t offset = 0;
    std::size_t width = 1;
    double min = 0.0;  // numerical only, train statistics in original units
    double max = 0.0;
  };

  EncoderState() = default;
  EncoderState(std::vector<Block> blocks);

  std::size_t dim() const { return dim_; }
  const std::vector<Block>& blocks() const { return blocks_; }
  const Block& block(std::size_t feature) const { return blocks_.at(feature); }
  std::size_t feature_count() const { return blocks_.size(); }

  /// Encoded column indices that hold scaled numerical features, in feature order.
  std::vector<std::size_t> numerical_columns() const;
  /// Column labels: the feature name for numerics, "name=level" for one-hot columns.
  std::vector<std::string> column_names() const;

  double scale(std::size_t feature, double value) const;
  double unscale(std::size_t feature, double encoded) const;

  Eigen::VectorXd encode(const OriginalRow& row) const;
  OriginalRow decode(const Eigen::Ref<const Eigen::VectorXd>& vec) const;
  /// Level index selected by argmax over a categorical block; ties go to the lowest index.
  std::size_t decode_level(std::size_t feature, const Eigen::Ref<const Eigen::VectorXd>& vec) const;

 private:
  std::vector<Block> blocks_;
  std::size_t dim_ = 0;
};

/// Numerical min/max are taken over the given training rows only.
EncoderState fit_encoder_state(const RawTable& table, const FeatureSchema& schema,
                               const std::vector<std::size_t>& train_rows);

Eigen::VectorXd encode_row(const OriginalRow& row, const EncoderState& enc);
OriginalRow decode_row(const Eigen::Ref<const Eigen::VectorXd>& vec, const EncoderState& enc);

struct EncodedDataset {
  FeatureSchema schema;
  EncoderState encoder;
  RowMatrix x_train;
  RowMatrix x_test;
  Eigen::VectorXi y_train;
  Eigen::VectorXi y_test;
  std::vector<std::size_t> train_rows;  // indices into the RawTable
  std::vector<std::size_t> test_rows;
  std::uint64_t seed = 0;

  std::size_t dim() const { return encoder.dim(); }
};

EncodedDataset encode_split(const RawTable& table, const FeatureSchema& schema, const Split& split,
                            std::uint64_t seed = 0);
EncodedDataset fit_encoder(const RawTable& table, const FeatureSchema& schema,
                           double train_fraction, std::uint64_t seed);

std::string value_to_string(const Value& v);

}  // namespace tabadv
