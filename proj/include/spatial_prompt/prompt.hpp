#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"
#include "spatial_prompt/scene.hpp"

namespace spatial_prompt {

inline constexpr std::string_view kPreamble =
    "You will be provided with images captured from specific camera positions and orientations as follows:";

inline constexpr std::string_view kDefaultAnnotation =
    "Note that the user does not know the images that you have. Therefore, you should answer the question as "
    "concisely as possible without directly referring to the image with words such as “image” or "
    "“photo.”";

inline constexpr std::string_view kZeroShotAnnotation = "The answer should be a phrase or a single word.";

inline constexpr int kDefaultImageHeight = 336;
inline constexpr int kJpegQuality = 90;

// Intrinsic Z-Y-X: R = Rz(yaw) * Ry(pitch) * Rx(roll). Degrees in (-180, 180].
struct EulerAngles {
  double roll_deg = 0.0;
  double pitch_deg = 0.0;
  double yaw_deg = 0.0;
};

// |cos(pitch)| below this is treated as gimbal lock: roll is pinned to 0 and
// yaw absorbs the free angle.
inline constexpr double kGimbalLockCos = 1e-7;

EulerAngles rotation_to_euler(const Eigen::Matrix3d& rotation);
inline EulerAngles rotation_to_euler(const CameraPose& pose) { return rotation_to_euler(pose.rotation()); }
Eigen::Matrix3d euler_to_rotation(const EulerAngles& angles);
bool in_gimbal_lock(const Eigen::Matrix3d& rotation);

// Maps any angle into (-180, 180].
double canonical_degrees(double degrees);

// Fixed-point formatting rounded half away from zero on the exact binary
// value; "-0.00" is normalized to "0.00".
std::string format_fixed(double value, int decimals);

struct PoseText {
  std::string position;
  std::string rotation;
};

PoseText format_pose_block(const CameraPose& pose);

// Bilinear resize to target_height keeping aspect ratio; images already at
// the target height come back unchanged.
ColorImage resize_image(const ColorImage& image, int target_height);

struct ImagePayload {
  std::vector<std::uint8_t> bytes;
  std::string media_type;

  bool operator==(const ImagePayload&) const = default;
};

ImagePayload encode_jpeg(const ColorImage& image, int quality = kJpegQuality);

struct KeyframeBlock {
  std::int64_t frame_id = 0;
  std::string position_text;  // empty when poses are withheld
  std::string rotation_text;
  ImagePayload image;

  bool operator==(const KeyframeBlock&) const = default;
};

struct PromptBundle {
  std::string preamble;
  std::vector<KeyframeBlock> blocks;
  std::string annotation;
  std::string query;

  bool operator==(const PromptBundle&) const = default;
};

struct AnnotationSpec {
  enum class Kind { Default, ZeroShot, Custom, None };
  Kind kind = Kind::Default;
  std::string text;  // Custom only

  static AnnotationSpec custom(std::string text) { return {Kind::Custom, std::move(text)}; }
  std::string render() const;
};

struct PromptOptions {
  std::string role;  // prepended to the preamble when non-empty
  bool include_pose = true;
  int image_height = kDefaultImageHeight;
};

// One block per kept frame, in the scene's timestamp order regardless of the
// order of `kept`. Throws EmptyInput / UnknownFrame.
PromptBundle build_prompt(const SceneManifest& scene, std::span<const std::int64_t> kept,
                          const std::string& query, const AnnotationSpec& annotation,
                          const PromptOptions& options = {});

nlohmann::json bundle_to_json(const PromptBundle& bundle);
PromptBundle bundle_from_json(const nlohmann::json& j);
// Canonical byte form used for golden comparison.
std::string serialize_bundle(const PromptBundle& bundle);

// Plain-text rendering with "Image data: <image N>" placeholders.
std::string render_text(const PromptBundle& bundle);

}  // namespace spatial_prompt
