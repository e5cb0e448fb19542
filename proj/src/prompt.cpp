#include "spatial_prompt/prompt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <set>

#include <Eigen/Geometry>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "spatial_prompt/codec.hpp"
#include "spatial_prompt/error.hpp"

namespace spatial_prompt {

using nlohmann::json;

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;
constexpr double kDegToRad = std::numbers::pi / 180.0;

cv::Mat to_bgr(const ColorImage& image) {
  cv::Mat bgr(image.height, image.width, CV_8UC3);
  for (int v = 0; v < image.height; ++v) {
    auto* row = bgr.ptr<cv::Vec3b>(v);
    for (int u = 0; u < image.width; ++u) {
      const auto p = image.pixel(u, v);
      row[u] = cv::Vec3b(p[2], p[1], p[0]);
    }
  }
  return bgr;
}

ColorImage from_bgr(const cv::Mat& bgr) {
  ColorImage out(bgr.cols, bgr.rows);
  for (int v = 0; v < bgr.rows; ++v) {
    const auto* row = bgr.ptr<cv::Vec3b>(v);
    for (int u = 0; u < bgr.cols; ++u) out.set_pixel(u, v, {row[u][2], row[u][1], row[u][0]});
  }
  return out;
}

}  // namespace

double canonical_degrees(double degrees) {
  double d = std::fmod(degrees, 360.0);
  if (d <= -180.0) d += 360.0;
  if (d > 180.0) d -= 360.0;
  return d;
}

bool in_gimbal_lock(const Eigen::Matrix3d& r) {
  return std::hypot(r(0, 0), r(1, 0)) < kGimbalLockCos;
}

EulerAngles rotation_to_euler(const Eigen::Matrix3d& r) {
  EulerAngles e;
  const double cos_pitch = std::hypot(r(0, 0), r(1, 0));
  if (cos_pitch < kGimbalLockCos) {
    // R20 = -sin(pitch); only yaw - roll (or yaw + roll) is observable.
    e.pitch_deg = r(2, 0) < 0.0 ? 90.0 : -90.0;
    e.roll_deg = 0.0;
    e.yaw_deg = canonical_degrees(std::atan2(-r(0, 1), r(1, 1)) * kRadToDeg);
    return e;
  }
  e.pitch_deg = std::atan2(-r(2, 0), cos_pitch) * kRadToDeg;
  e.yaw_deg = canonical_degrees(std::atan2(r(1, 0), r(0, 0)) * kRadToDeg);
  e.roll_deg = canonical_degrees(std::atan2(r(2, 1), r(2, 2)) * kRadToDeg);
  return e;
}

Eigen::Matrix3d euler_to_rotation(const EulerAngles& e) {
  const Eigen::AngleAxisd rz(e.yaw_deg * kDegToRad, Eigen::Vector3d::UnitZ());
  const Eigen::AngleAxisd ry(e.pitch_deg * kDegToRad, Eigen::Vector3d::UnitY());
  const Eigen::AngleAxisd rx(e.roll_deg * kDegToRad, Eigen::Vector3d::UnitX());
  return (rz * ry * rx).toRotationMatrix();
}

std::string format_fixed(double value, int decimals) {
  if (!std::isfinite(value)) throw Error(ErrorKind::InvalidArgument, "cannot format non-finite value");
  // glibc prints the exact binary expansion; 1100 places covers every double.
  char buf[1500];
  std::snprintf(buf, sizeof buf, "%.1100f", std::abs(value));
  const std::string exact(buf);
  const auto dot = exact.find('.');
  std::string digits = exact.substr(0, dot) + exact.substr(dot + 1, static_cast<std::size_t>(decimals));
  const bool round_up = exact[dot + 1 + static_cast<std::size_t>(decimals)] >= '5';
  if (round_up) {
    int i = static_cast<int>(digits.size()) - 1;
    for (; i >= 0 && digits[static_cast<std::size_t>(i)] == '9'; --i) digits[static_cast<std::size_t>(i)] = '0';
    if (i < 0) {
      digits.insert(digits.begin(), '1');
    } else {
      ++digits[static_cast<std::size_t>(i)];
    }
  }
  const std::size_t int_len = digits.size() - static_cast<std::size_t>(decimals);
  std::string out = digits.substr(0, int_len);
  if (decimals > 0) out += "." + digits.substr(int_len);
  const bool all_zero = std::all_of(digits.begin(), digits.end(), [](char c) { return c == '0'; });
  if (value < 0.0 && !all_zero) out.insert(out.begin(), '-');
  return out;
}

PoseText format_pose_block(const CameraPose& pose) {
  const Eigen::Vector3d t = pose.translation();
  const EulerAngles e = rotation_to_euler(pose);
  auto angle = [](double deg) {
    std::string s = format_fixed(deg, 1);
    // Keep the printed value inside (-180, 180] after rounding.
    return s == "-180.0" ? std::string("180.0") : s;
  };
  PoseText text;
  text.position = "Camera position: [x=" + format_fixed(t.x(), 2) + "m, y=" + format_fixed(t.y(), 2) +
                  "m, z=" + format_fixed(t.z(), 2) + "m]";
  text.rotation = "Camera rotation: [x=" + angle(e.roll_deg) + "°, y=" + angle(e.pitch_deg) + "°, z=" +
                  angle(e.yaw_deg) + "°]";
  return text;
}

ColorImage resize_image(const ColorImage& image, int target_height) {
  if (image.empty()) throw Error(ErrorKind::InvalidArgument, "cannot resize an empty image");
  if (target_height < 1) throw Error(ErrorKind::InvalidArgument, "target height must be >= 1");
  if (image.height == target_height) return image;
  const double scale = static_cast<double>(target_height) / image.height;
  const int width = std::max(1, static_cast<int>(std::lround(image.width * scale)));
  cv::Mat resized;
  cv::resize(to_bgr(image), resized, cv::Size(width, target_height), 0.0, 0.0, cv::INTER_LINEAR);
  return from_bgr(resized);
}

ImagePayload encode_jpeg(const ColorImage& image, int quality) {
  std::vector<std::uint8_t> buf;
  if (!cv::imencode(".jpg", to_bgr(image), buf, {cv::IMWRITE_JPEG_QUALITY, quality})) {
    throw Error(ErrorKind::IoError, "JPEG encoding failed");
  }
  return {std::move(buf), "image/jpeg"};
}

std::string AnnotationSpec::render() const {
  switch (kind) {
    case Kind::Default: return std::string(kDefaultAnnotation);
    case Kind::ZeroShot: return std::string(kZeroShotAnnotation);
    case Kind::Custom: return text;
    case Kind::None: return {};
  }
  return {};
}

PromptBundle build_prompt(const SceneManifest& scene, std::span<const std::int64_t> kept,
                          const std::string& query, const AnnotationSpec& annotation,
                          const PromptOptions& options) {
  if (kept.empty()) throw Error(ErrorKind::EmptyInput, "no keyframes to build a prompt from");
  if (query.empty()) throw Error(ErrorKind::InvalidArgument, "query must not be empty");
  const std::set<std::int64_t> wanted(kept.begin(), kept.end());
  for (std::int64_t id : wanted) scene.frame(id);

  PromptBundle bundle;
  bundle.preamble = options.role.empty() ? std::string(kPreamble) : options.role + "\n" + std::string(kPreamble);
  for (const auto& record : scene.frames) {
    if (!wanted.count(record.frame_id)) continue;
    KeyframeBlock block;
    block.frame_id = record.frame_id;
    if (options.include_pose) {
      PoseText text = format_pose_block(record.pose);
      block.position_text = std::move(text.position);
      block.rotation_text = std::move(text.rotation);
    }
    block.image = encode_jpeg(resize_image(load_color(record), options.image_height));
    bundle.blocks.push_back(std::move(block));
  }
  bundle.annotation = annotation.render();
  bundle.query = query;
  return bundle;
}

json bundle_to_json(const PromptBundle& bundle) {
  json blocks = json::array();
  for (const auto& b : bundle.blocks) {
    blocks.push_back({{"frame_id", b.frame_id},
                      {"position", b.position_text},
                      {"rotation", b.rotation_text},
                      {"image_b64", base64_encode(b.image.bytes)},
                      {"media_type", b.image.media_type}});
  }
  return {{"version", 1},
          {"preamble", bundle.preamble},
          {"blocks", std::move(blocks)},
          {"annotation", bundle.annotation},
          {"query", bundle.query}};
}

PromptBundle bundle_from_json(const json& j) {
  PromptBundle bundle;
  try {
    bundle.preamble = j.at("preamble").get<std::string>();
    for (const auto& b : j.at("blocks")) {
      KeyframeBlock block;
      block.frame_id = b.value("frame_id", std::int64_t{0});
      block.position_text = b.at("position").get<std::string>();
      block.rotation_text = b.at("rotation").get<std::string>();
      block.image.bytes = base64_decode(b.at("image_b64").get<std::string>());
      block.image.media_type = b.at("media_type").get<std::string>();
      bundle.blocks.push_back(std::move(block));
    }
    bundle.annotation = j.at("annotation").get<std::string>();
    bundle.query = j.at("query").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("prompt bundle: ") + e.what());
  }
  return bundle;
}

std::string serialize_bundle(const PromptBundle& bundle) {
  return bundle_to_json(bundle).dump(2) + "\n";
}

std::string render_text(const PromptBundle& bundle) {
  std::string out = bundle.preamble + "\n";
  for (std::size_t i = 0; i < bundle.blocks.size(); ++i) {
    const auto& b = bundle.blocks[i];
    if (!b.position_text.empty()) out += b.position_text + "\n";
    if (!b.rotation_text.empty()) out += b.rotation_text + "\n";
    out += "Image data: <image " + std::to_string(i + 1) + ">\n";
  }
  if (!bundle.annotation.empty()) out += bundle.annotation + "\n";
  out += bundle.query + "\n";
  return out;
}

}  // namespace spatial_prompt
