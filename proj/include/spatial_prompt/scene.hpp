#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"

namespace spatial_prompt {

struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;
  double depth_scale = 0.001;  // stored depth unit -> meters

  bool operator==(const CameraIntrinsics&) const = default;
};

// Camera-to-world rigid transform, row-major 4x4, translation in meters.
struct CameraPose {
  Eigen::Matrix4d matrix = Eigen::Matrix4d::Identity();

  Eigen::Matrix3d rotation() const { return matrix.topLeftCorner<3, 3>(); }
  Eigen::Vector3d translation() const { return matrix.topRightCorner<3, 1>(); }

  static CameraPose from_parts(const Eigen::Matrix3d& rotation,
                               const Eigen::Vector3d& translation);

  bool operator==(const CameraPose& other) const { return matrix == other.matrix; }
};

enum class DepthFormat { Png16, Raw16Le };

std::string to_string(DepthFormat format);

struct FrameRecord {
  std::int64_t frame_id = 0;
  std::string color_ref;  // as written in the manifest
  std::string depth_ref;
  std::filesystem::path color_path;  // resolved against the manifest directory
  std::filesystem::path depth_path;
  CameraPose pose;
  double timestamp = 0.0;

  bool operator==(const FrameRecord&) const = default;
};

struct SceneManifest {
  std::string scene_id;
  DepthFormat depth_format = DepthFormat::Png16;
  double max_depth_m = 10.0;
  CameraIntrinsics intrinsics;
  std::vector<FrameRecord> frames;
  std::filesystem::path root;  // directory containing the manifest

  const FrameRecord* find(std::int64_t frame_id) const;
  // Throws UnknownFrame.
  const FrameRecord& frame(std::int64_t frame_id) const;

  bool operator==(const SceneManifest&) const = default;
};

// Depth in meters; invalid pixels hold kInvalidDepth (NaN).
struct DepthMap {
  static constexpr double kInvalidDepth = std::numeric_limits<double>::quiet_NaN();

  int width = 0;
  int height = 0;
  std::vector<double> values;

  double at(int u, int v) const { return values[static_cast<std::size_t>(v) * width + u]; }
  static bool is_valid(double depth) { return depth == depth; }
  std::size_t valid_count() const;
};

// 8-bit RGB, row-major, channels interleaved.
struct ColorImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  ColorImage() = default;
  ColorImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, fill) {}

  std::array<std::uint8_t, 3> pixel(int u, int v) const {
    const std::size_t i = (static_cast<std::size_t>(v) * width + u) * 3;
    return {rgb[i], rgb[i + 1], rgb[i + 2]};
  }
  void set_pixel(int u, int v, std::array<std::uint8_t, 3> value) {
    const std::size_t i = (static_cast<std::size_t>(v) * width + u) * 3;
    rgb[i] = value[0];
    rgb[i + 1] = value[1];
    rgb[i + 2] = value[2];
  }
  bool empty() const { return width == 0 || height == 0; }

  bool operator==(const ColorImage&) const = default;
};

// Throws NonRigidPose naming frame_id when the rotation block is not
// orthonormal with det +1 (tolerance 1e-4) or the bottom row is not 0 0 0 1.
void validate_pose(const CameraPose& pose, std::int64_t frame_id);

SceneManifest parse_manifest(const nlohmann::json& doc, const std::filesystem::path& root);
SceneManifest load_manifest(const std::filesystem::path& path);

nlohmann::json manifest_to_json(const SceneManifest& scene);
void write_manifest(const SceneManifest& scene, const std::filesystem::path& path);

DepthMap load_depth(const FrameRecord& record, const CameraIntrinsics& intr,
                    DepthFormat format, double max_depth_m);
DepthMap load_depth(const SceneManifest& scene, const FrameRecord& record);

ColorImage load_color(const FrameRecord& record);

// Writers used by fixture generation; the depth raster holds stored units.
void write_color_png(const ColorImage& image, const std::filesystem::path& path);
void write_depth(const std::vector<std::uint16_t>& stored, int width, int height,
                 DepthFormat format, const std::filesystem::path& path);

}  // namespace spatial_prompt
