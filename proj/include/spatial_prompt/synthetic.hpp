#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "spatial_prompt/embeddings.hpp"
#include "spatial_prompt/scene.hpp"

namespace spatial_prompt {

enum class PathKind { Circle, Line, RandomWalk };

PathKind parse_path_kind(const std::string& name);
std::string to_string(PathKind kind);

struct SyntheticSpec {
  std::uint64_t seed = 0;
  PathKind path_kind = PathKind::Circle;
  int frame_count = 8;
  Eigen::Vector3d room{6.0, 5.0, 3.0};  // box [0, room] in meters, z up
  int embedding_dim = 32;
  int width = 80;
  int height = 60;
  double focal_px = 60.0;
  double blur_fraction = 0.2;     // share of frames rendered out of focus
  double dropout_fraction = 0.02; // share of depth pixels stored as 0
  DepthFormat depth_format = DepthFormat::Png16;
  std::string scene_id;  // defaults to "synth_<seed>"
};

// Validates frame_count >= 2, positive room extents and image size.
void validate(const SyntheticSpec& spec);

// Camera-to-world pose at `eye` looking at `target` with world z up
// (camera x right, y down, z forward).
CameraPose look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target);

std::vector<CameraPose> synthetic_trajectory(const SyntheticSpec& spec);

// Smooth function of the viewing direction: nearby views get nearby
// embeddings. Entries are strictly positive.
Eigen::VectorXd pose_bucket_embedding(const CameraPose& pose, int dim);

struct GeneratedScene {
  SceneManifest manifest;
  EmbeddingMatrix embeddings;
  std::filesystem::path manifest_path;
  std::filesystem::path embeddings_path;
};

// Writes scene.json, color/*.png, depth/*, embeddings.json/.bin into out_dir.
// Output is byte-identical for identical specs.
GeneratedScene generate_scene(const SyntheticSpec& spec, const std::filesystem::path& out_dir);
GeneratedScene generate_scene(const SyntheticSpec& spec, std::span<const CameraPose> poses,
                              const std::filesystem::path& out_dir);

inline constexpr double kCoverageVoxel = 0.25;

// Voxelizes the bounding box of every frame's back-projected points and
// records which cells each frame observes.
class CoverageGrid {
 public:
  explicit CoverageGrid(const SceneManifest& scene, double voxel = kCoverageVoxel);

  // Fraction of grid cells observed by at least one kept frame.
  double score(std::span<const std::int64_t> kept) const;
  std::size_t cell_count() const { return cell_count_; }

 private:
  std::vector<std::int64_t> frame_ids_;
  std::vector<std::vector<std::uint32_t>> observed_;  // sorted cell indices per frame
  std::size_t cell_count_ = 0;
};

double coverage_score(const SceneManifest& scene, std::span<const std::int64_t> kept);

}  // namespace spatial_prompt
