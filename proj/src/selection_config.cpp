#include "spatial_prompt/selection_config.hpp"

#include "spatial_prompt/error.hpp"

namespace spatial_prompt {

void validate(const SelectionConfig& config) {
  if (config.n_max < 1) throw Error(ErrorKind::InvalidArgument, "n_max must be >= 1");
  if (!(config.alpha >= 0.0)) throw Error(ErrorKind::InvalidArgument, "alpha must be >= 0");
  if (!(config.beta >= 0.0)) throw Error(ErrorKind::InvalidArgument, "beta must be >= 0");
  if (!(config.ridge_epsilon > 0.0)) throw Error(ErrorKind::InvalidArgument, "ridge_epsilon must be > 0");
  if (config.max_points < 1) throw Error(ErrorKind::InvalidArgument, "max_points must be >= 1");
}

nlohmann::json to_json(const SelectionConfig& config) {
  return {{"alpha", config.alpha},
          {"beta", config.beta},
          {"max_frames", config.n_max},
          {"ridge_epsilon", config.ridge_epsilon},
          {"max_points", config.max_points},
          {"normalize_quality", config.normalize_quality}};
}

SelectionConfig selection_config_from_json(const nlohmann::json& j) {
  SelectionConfig c;
  try {
    c.alpha = j.value("alpha", c.alpha);
    c.beta = j.value("beta", c.beta);
    c.n_max = j.value("max_frames", c.n_max);
    c.ridge_epsilon = j.value("ridge_epsilon", c.ridge_epsilon);
    c.max_points = j.value("max_points", c.max_points);
    c.normalize_quality = j.value("normalize_quality", c.normalize_quality);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("selection config: ") + e.what());
  }
  return c;
}

}  // namespace spatial_prompt
