#include "spatial_prompt/scene.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <Eigen/LU>
#include <opencv2/imgcodecs.hpp>

#include "spatial_prompt/error.hpp"

namespace spatial_prompt {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MalformedManifest: return "MalformedManifest";
    case ErrorKind::NonRigidPose: return "NonRigidPose";
    case ErrorKind::MissingFile: return "MissingFile";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::UnsupportedDepthEncoding: return "UnsupportedDepthEncoding";
    case ErrorKind::UnsupportedColorEncoding: return "UnsupportedColorEncoding";
    case ErrorKind::ImageTooSmall: return "ImageTooSmall";
    case ErrorKind::HeaderMismatch: return "HeaderMismatch";
    case ErrorKind::FrameCoverageError: return "FrameCoverageError";
    case ErrorKind::NonFiniteEmbedding: return "NonFiniteEmbedding";
    case ErrorKind::UnknownFrame: return "UnknownFrame";
    case ErrorKind::DegenerateStats: return "DegenerateStats";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::EmptyBank: return "EmptyBank";
    case ErrorKind::BackendUnavailable: return "BackendUnavailable";
    case ErrorKind::ReplayMiss: return "ReplayMiss";
    case ErrorKind::ProviderError: return "ProviderError";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

std::string to_string(DepthFormat format) {
  return format == DepthFormat::Png16 ? "png16" : "raw16le";
}

CameraPose CameraPose::from_parts(const Eigen::Matrix3d& rotation,
                                  const Eigen::Vector3d& translation) {
  CameraPose pose;
  pose.matrix.topLeftCorner<3, 3>() = rotation;
  pose.matrix.topRightCorner<3, 1>() = translation;
  return pose;
}

const FrameRecord* SceneManifest::find(std::int64_t frame_id) const {
  for (const auto& f : frames) {
    if (f.frame_id == frame_id) return &f;
  }
  return nullptr;
}

const FrameRecord& SceneManifest::frame(std::int64_t frame_id) const {
  if (const auto* f = find(frame_id)) return *f;
  throw Error(ErrorKind::UnknownFrame,
              "frame " + std::to_string(frame_id) + " not in scene " + scene_id);
}

std::size_t DepthMap::valid_count() const {
  std::size_t n = 0;
  for (double d : values) n += is_valid(d) ? 1 : 0;
  return n;
}

void validate_pose(const CameraPose& pose, std::int64_t frame_id) {
  constexpr double kTol = 1e-4;
  const auto& m = pose.matrix;
  const std::string where = "frame " + std::to_string(frame_id);
  if (!m.allFinite()) throw Error(ErrorKind::NonRigidPose, where + ": non-finite pose entries");
  if (m(3, 0) != 0.0 || m(3, 1) != 0.0 || m(3, 2) != 0.0 || m(3, 3) != 1.0) {
    throw Error(ErrorKind::NonRigidPose, where + ": bottom row must be (0, 0, 0, 1)");
  }
  const Eigen::Matrix3d r = pose.rotation();
  const double ortho_err = (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (ortho_err > kTol) {
    throw Error(ErrorKind::NonRigidPose,
                where + ": rotation not orthonormal (max |R^T R - I| = " + std::to_string(ortho_err) + ")");
  }
  if (std::abs(r.determinant() - 1.0) > kTol) {
    throw Error(ErrorKind::NonRigidPose,
                where + ": rotation determinant " + std::to_string(r.determinant()) + " != +1");
  }
}

namespace {

[[noreturn]] void malformed(const std::string& path, const std::string& what) {
  throw Error(ErrorKind::MalformedManifest, path + ": " + what);
}

const json& require(const json& obj, const char* key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) malformed(path + "." + key, "missing");
  return *it;
}

double require_number(const json& obj, const char* key, const std::string& path) {
  const json& v = require(obj, key, path);
  if (!v.is_number()) malformed(path + "." + key, "expected number");
  return v.get<double>();
}

std::int64_t require_int(const json& obj, const char* key, const std::string& path) {
  const json& v = require(obj, key, path);
  if (!v.is_number_integer()) malformed(path + "." + key, "expected integer");
  return v.get<std::int64_t>();
}

std::string require_string(const json& obj, const char* key, const std::string& path) {
  const json& v = require(obj, key, path);
  if (!v.is_string()) malformed(path + "." + key, "expected string");
  return v.get<std::string>();
}

CameraIntrinsics parse_intrinsics(const json& j) {
  const std::string path = "intrinsics";
  if (!j.is_object()) malformed(path, "expected object");
  CameraIntrinsics k;
  k.fx = require_number(j, "fx", path);
  k.fy = require_number(j, "fy", path);
  k.cx = require_number(j, "cx", path);
  k.cy = require_number(j, "cy", path);
  k.width = static_cast<int>(require_int(j, "width", path));
  k.height = static_cast<int>(require_int(j, "height", path));
  k.depth_scale = require_number(j, "depth_scale", path);
  if (!(k.fx > 0.0)) malformed(path + ".fx", "must be > 0");
  if (!(k.fy > 0.0)) malformed(path + ".fy", "must be > 0");
  if (k.width <= 0) malformed(path + ".width", "must be > 0");
  if (k.height <= 0) malformed(path + ".height", "must be > 0");
  if (!(k.cx >= 0.0 && k.cx < k.width)) malformed(path + ".cx", "must lie in [0, width)");
  if (!(k.cy >= 0.0 && k.cy < k.height)) malformed(path + ".cy", "must lie in [0, height)");
  if (!(k.depth_scale > 0.0)) malformed(path + ".depth_scale", "must be > 0");
  return k;
}

CameraPose parse_pose(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 16) malformed(path, "expected 16 numbers");
  CameraPose pose;
  for (int i = 0; i < 16; ++i) {
    if (!j[i].is_number()) malformed(path + "[" + std::to_string(i) + "]", "expected number");
    pose.matrix(i / 4, i % 4) = j[i].get<double>();
  }
  return pose;
}

}  // namespace

SceneManifest parse_manifest(const json& doc, const fs::path& root) {
  if (!doc.is_object()) malformed("$", "expected object");
  SceneManifest scene;
  scene.root = root;
  scene.scene_id = require_string(doc, "scene_id", "$");

  const std::string format = require_string(doc, "depth_format", "$");
  if (format == "png16") {
    scene.depth_format = DepthFormat::Png16;
  } else if (format == "raw16le") {
    scene.depth_format = DepthFormat::Raw16Le;
  } else {
    malformed("$.depth_format", "expected \"png16\" or \"raw16le\"");
  }

  if (doc.contains("max_depth_m")) {
    scene.max_depth_m = require_number(doc, "max_depth_m", "$");
    if (!(scene.max_depth_m > 0.0)) malformed("$.max_depth_m", "must be > 0");
  }

  scene.intrinsics = parse_intrinsics(require(doc, "intrinsics", "$"));

  const json& frames = require(doc, "frames", "$");
  if (!frames.is_array()) malformed("$.frames", "expected array");
  if (frames.empty()) malformed("$.frames", "at least one frame required");

  std::set<std::int64_t> seen;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const std::string path = "frames[" + std::to_string(i) + "]";
    const json& jf = frames[i];
    if (!jf.is_object()) malformed(path, "expected object");
    FrameRecord rec;
    rec.frame_id = require_int(jf, "frame_id", path);
    if (rec.frame_id < 0) malformed(path + ".frame_id", "must be non-negative");
    if (!seen.insert(rec.frame_id).second) {
      malformed(path + ".frame_id", "duplicate frame_id " + std::to_string(rec.frame_id));
    }
    rec.color_ref = require_string(jf, "color", path);
    rec.depth_ref = require_string(jf, "depth", path);
    rec.color_path = root / rec.color_ref;
    rec.depth_path = root / rec.depth_ref;
    rec.timestamp = require_number(jf, "timestamp", path);
    if (!scene.frames.empty() && rec.timestamp < scene.frames.back().timestamp) {
      malformed(path + ".timestamp", "timestamps must be non-decreasing");
    }
    rec.pose = parse_pose(require(jf, "pose", path), path + ".pose");
    validate_pose(rec.pose, rec.frame_id);
    for (const auto& p : {rec.color_path, rec.depth_path}) {
      if (!fs::is_regular_file(p)) {
        throw Error(ErrorKind::MissingFile,
                    path + ": frame " + std::to_string(rec.frame_id) + " references missing file " + p.string());
      }
    }
    scene.frames.push_back(std::move(rec));
  }
  return scene;
}

SceneManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingFile, "cannot open manifest " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    malformed("$", std::string("invalid JSON: ") + e.what());
  }
  return parse_manifest(doc, path.parent_path());
}

json manifest_to_json(const SceneManifest& scene) {
  const auto& k = scene.intrinsics;
  json frames = json::array();
  for (const auto& f : scene.frames) {
    json pose = json::array();
    for (int i = 0; i < 16; ++i) pose.push_back(f.pose.matrix(i / 4, i % 4));
    frames.push_back({{"frame_id", f.frame_id},
                      {"color", f.color_ref},
                      {"depth", f.depth_ref},
                      {"timestamp", f.timestamp},
                      {"pose", std::move(pose)}});
  }
  return {{"scene_id", scene.scene_id},
          {"depth_format", to_string(scene.depth_format)},
          {"max_depth_m", scene.max_depth_m},
          {"intrinsics",
           {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy},
            {"width", k.width}, {"height", k.height}, {"depth_scale", k.depth_scale}}},
          {"frames", std::move(frames)}};
}

void write_manifest(const SceneManifest& scene, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << manifest_to_json(scene).dump(2) << '\n';
}

DepthMap load_depth(const FrameRecord& record, const CameraIntrinsics& intr,
                    DepthFormat format, double max_depth_m) {
  const std::size_t pixels = static_cast<std::size_t>(intr.width) * intr.height;
  std::vector<std::uint16_t> raw(pixels);

  if (format == DepthFormat::Png16) {
    cv::Mat img = cv::imread(record.depth_path.string(), cv::IMREAD_UNCHANGED);
    if (img.empty() || img.type() != CV_16UC1) {
      throw Error(ErrorKind::UnsupportedDepthEncoding,
                  "frame " + std::to_string(record.frame_id) + ": " + record.depth_path.string() +
                      " is not a 16-bit single-channel image");
    }
    if (img.cols != intr.width || img.rows != intr.height) {
      throw Error(ErrorKind::DimensionMismatch,
                  "frame " + std::to_string(record.frame_id) + ": depth is " + std::to_string(img.cols) +
                      "x" + std::to_string(img.rows) + ", intrinsics declare " +
                      std::to_string(intr.width) + "x" + std::to_string(intr.height));
    }
    for (int v = 0; v < img.rows; ++v) {
      const auto* row = img.ptr<std::uint16_t>(v);
      std::copy(row, row + img.cols, raw.begin() + static_cast<std::ptrdiff_t>(v) * img.cols);
    }
  } else {
    std::ifstream in(record.depth_path, std::ios::binary);
    if (!in) throw Error(ErrorKind::MissingFile, "cannot open " + record.depth_path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() != pixels * 2) {
      throw Error(ErrorKind::DimensionMismatch,
                  "frame " + std::to_string(record.frame_id) + ": raw depth holds " +
                      std::to_string(bytes.size()) + " bytes, expected " + std::to_string(pixels * 2));
    }
    for (std::size_t i = 0; i < pixels; ++i) {
      raw[i] = static_cast<std::uint16_t>(bytes[2 * i] | (bytes[2 * i + 1] << 8));
    }
  }

  DepthMap depth;
  depth.width = intr.width;
  depth.height = intr.height;
  depth.values.resize(pixels);
  for (std::size_t i = 0; i < pixels; ++i) {
    const double meters = raw[i] * intr.depth_scale;
    depth.values[i] = (raw[i] == 0 || meters > max_depth_m) ? DepthMap::kInvalidDepth : meters;
  }
  return depth;
}

DepthMap load_depth(const SceneManifest& scene, const FrameRecord& record) {
  return load_depth(record, scene.intrinsics, scene.depth_format, scene.max_depth_m);
}

ColorImage load_color(const FrameRecord& record) {
  cv::Mat img = cv::imread(record.color_path.string(), cv::IMREAD_UNCHANGED);
  if (img.empty() || img.type() != CV_8UC3) {
    throw Error(ErrorKind::UnsupportedColorEncoding,
                "frame " + std::to_string(record.frame_id) + ": " + record.color_path.string() +
                    " is not an 8-bit 3-channel image");
  }
  ColorImage out(img.cols, img.rows);
  for (int v = 0; v < img.rows; ++v) {
    const auto* row = img.ptr<cv::Vec3b>(v);
    for (int u = 0; u < img.cols; ++u) {
      // OpenCV decodes as BGR.
      out.set_pixel(u, v, {row[u][2], row[u][1], row[u][0]});
    }
  }
  return out;
}

void write_color_png(const ColorImage& image, const fs::path& path) {
  cv::Mat bgr(image.height, image.width, CV_8UC3);
  for (int v = 0; v < image.height; ++v) {
    auto* row = bgr.ptr<cv::Vec3b>(v);
    for (int u = 0; u < image.width; ++u) {
      const auto p = image.pixel(u, v);
      row[u] = cv::Vec3b(p[2], p[1], p[0]);
    }
  }
  if (!cv::imwrite(path.string(), bgr)) throw Error(ErrorKind::IoError, "cannot write " + path.string());
}

void write_depth(const std::vector<std::uint16_t>& stored, int width, int height,
                 DepthFormat format, const fs::path& path) {
  if (stored.size() != static_cast<std::size_t>(width) * height) {
    throw Error(ErrorKind::DimensionMismatch, "depth raster size does not match dimensions");
  }
  if (format == DepthFormat::Png16) {
    cv::Mat img(height, width, CV_16UC1, const_cast<std::uint16_t*>(stored.data()));
    if (!cv::imwrite(path.string(), img)) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  for (std::uint16_t value : stored) {
    const char bytes[2] = {static_cast<char>(value & 0xff), static_cast<char>(value >> 8)};
    out.write(bytes, 2);
  }
}

}  // namespace spatial_prompt
