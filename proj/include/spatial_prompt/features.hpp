#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "spatial_prompt/scene.hpp"
#include "spatial_prompt/selection_config.hpp"

namespace spatial_prompt {

// Frames with fewer valid depth points than this are degenerate and get
// quality -inf.
inline constexpr std::size_t kMinValidPoints = 100;

// Below this many points the covariance is not meaningful.
inline constexpr std::size_t kMinStatsPoints = 4;

struct PointCloudStats {
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  Eigen::Matrix3d covariance = Eigen::Matrix3d::Zero();
  std::size_t point_count = 0;
  double spread = 0.0;  // det(covariance), m^6
  bool degenerate = true;
};

struct FrameFeatures {
  std::int64_t frame_id = 0;
  PointCloudStats stats;
  double sharpness = 0.0;  // variance of the Laplacian of luma
  double quality = 0.0;
  std::size_t embedding_ref = 0;  // row in the embedding store
};

using Points = std::vector<Eigen::Vector3d>;

// Pixels on the (u % stride == 0, v % stride == 0) lattice with valid depth,
// lifted to the camera frame.
Points back_project(const DepthMap& depth, const CameraIntrinsics& intr, int stride);

Points to_world(std::span<const Eigen::Vector3d> points, const CameraPose& pose);

// Population mean/covariance. Fewer than kMinStatsPoints points flags the
// result degenerate with spread 0.
PointCloudStats cloud_stats(std::span<const Eigen::Vector3d> points);

// Population variance of the 5-point Laplacian over interior pixels of the
// Rec.601 luma. Throws ImageTooSmall below 3x3.
double laplacian_variance(const ColorImage& image);

// Smallest stride keeping at most ~max_points samples:
// ceil(sqrt(valid_pixels / max_points)), at least 1.
int sampling_stride(std::size_t valid_pixels, std::size_t max_points);

double quality_score(double spread, double sharpness, double beta);

FrameFeatures compute_frame_features(const SceneManifest& scene, std::int64_t frame_id,
                                     const SelectionConfig& config);

// Features for every frame in manifest order, computed on up to `jobs`
// threads. Applies quality normalization when the config requests it.
std::vector<FrameFeatures> compute_scene_features(const SceneManifest& scene,
                                                  const SelectionConfig& config,
                                                  unsigned jobs = 1);

// Replaces quality with z(spread) + beta * z(sharpness) over non-degenerate
// frames.
void normalize_qualities(std::vector<FrameFeatures>& features, double beta);

void write_features_cache(const std::string& scene_id, std::span<const FrameFeatures> features,
                          const std::filesystem::path& path);
std::vector<FrameFeatures> read_features_cache(const std::filesystem::path& path);

}  // namespace spatial_prompt
