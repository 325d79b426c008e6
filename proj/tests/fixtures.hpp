#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tabadv/data_pipeline.hpp"
#include "tabadv/rng.hpp"
#include "tabadv/schema.hpp"

namespace tabadv::testing {

inline std::filesystem::path schema_path(const std::string& name) {
  return std::filesystem::path(TABADV_DATA_DIR) / "schemas" / (name + ".json");
}

inline FeatureSpec numerical(std::string name) {
  FeatureSpec f;
  f.name = std::move(name);
  return f;
}

inline FeatureSpec categorical(std::string name, std::vector<std::string> levels) {
  FeatureSpec f;
  f.name = std::move(name);
  f.kind = FeatureKind::Categorical;
  f.levels = std::move(levels);
  return f;
}

/// Encoder with one block per feature; numerics get the given ranges.
inline EncoderState make_encoder(const std::vector<FeatureSpec>& features,
                                 const std::vector<std::pair<double, double>>& ranges = {}) {
  std::vector<EncoderState::Block> blocks;
  std::size_t r = 0;
  for (const auto& f : features) {
    EncoderState::Block b;
    b.name = f.name;
    b.kind = f.kind;
    b.levels = f.levels;
    if (f.numerical()) {
      std::tie(b.min, b.max) = r < ranges.size() ? ranges[r] : std::pair{0.0, 1.0};
      ++r;
    }
    blocks.push_back(std::move(b));
  }
  return EncoderState(std::move(blocks));
}

inline Eigen::VectorXd random_vector(Rng& rng, Eigen::Index n, double lo = 0.0, double hi = 1.0) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.uniform(lo, hi);
  return v;
}

}  // namespace tabadv::testing
