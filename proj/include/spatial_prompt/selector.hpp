#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "spatial_prompt/embeddings.hpp"
#include "spatial_prompt/features.hpp"
#include "spatial_prompt/selection_config.hpp"

namespace spatial_prompt {

// Above this many frames the pair table no longer fits comfortably in memory;
// callers must decimate first.
inline constexpr std::size_t kMaxSelectableFrames = 5000;

// Pooled covariance is regularized when its condition number exceeds this.
inline constexpr double kRidgeConditionThreshold = 1e12;

struct RemovalStep {
  std::int64_t removed = 0;
  std::int64_t survivor = 0;
  double d_prime = 0.0;
  std::size_t step = 0;

  bool operator==(const RemovalStep&) const = default;
};

struct SelectionResult {
  std::vector<std::int64_t> kept;  // timestamp order
  std::vector<RemovalStep> removal_log;
  std::size_t pair_count_evaluated = 0;

  bool operator==(const SelectionResult&) const = default;
};

// Squared-form Mahalanobis distance under the pooled covariance
// (cov_a + cov_b) / 2. No square root is taken. Throws DegenerateStats.
double mahalanobis(const PointCloudStats& a, const PointCloudStats& b, double ridge);

inline double fused_distance(double d, double s, double alpha) { return d + alpha * (1.0 - s); }

// Spatial term of the fused distance. Pairs touching a degenerate frame have
// no usable geometry and contribute 0.
double spatial_distance(const FrameFeatures& a, const FrameFeatures& b, double ridge);

// Greedy closest-pair pruning down to config.n_max frames. `features` must be
// in timestamp order; every frame needs a row in `store`.
SelectionResult select_keyframes(std::span<const FrameFeatures> features, const EmbeddingMatrix& store,
                                 const SelectionConfig& config, unsigned jobs = 1);

// Every floor(N / n_max)-th id starting at index 0, n_max ids total.
std::vector<std::int64_t> uniform_selection(std::span<const std::int64_t> ids_in_time_order,
                                            std::size_t n_max);

nlohmann::json keyframes_to_json(const std::string& scene_id, const SelectionConfig& config,
                                 const SelectionResult& result, bool include_removals);

struct KeyframesFile {
  std::string scene_id;
  SelectionConfig config;
  SelectionResult result;
};

KeyframesFile read_keyframes(const std::filesystem::path& path);

}  // namespace spatial_prompt
