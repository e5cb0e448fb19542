#pragma once

#include <cstddef>

#include "json.hpp"

namespace spatial_prompt {

struct SelectionConfig {
  double alpha = 5.0;  // weight of the semantic dissimilarity term
  double beta = 1.0;   // weight of image sharpness in the quality score
  std::size_t n_max = 30;
  double ridge_epsilon = 1e-6;
  std::size_t max_points = 4096;  // per-frame cap on back-projected points
  bool normalize_quality = false;

  bool operator==(const SelectionConfig&) const = default;
};

// Throws InvalidArgument on n_max == 0, negative weights, non-positive ridge
// or max_points == 0.
void validate(const SelectionConfig& config);

nlohmann::json to_json(const SelectionConfig& config);
// Missing keys keep the defaults.
SelectionConfig selection_config_from_json(const nlohmann::json& j);

}  // namespace spatial_prompt
