#include "spatial_prompt/features.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include <Eigen/LU>

#include "spatial_prompt/error.hpp"
#include "spatial_prompt/parallel.hpp"

namespace spatial_prompt {

using nlohmann::json;

Points back_project(const DepthMap& depth, const CameraIntrinsics& intr, int stride) {
  if (stride < 1) throw Error(ErrorKind::InvalidArgument, "stride must be >= 1");
  Points out;
  for (int v = 0; v < depth.height; v += stride) {
    for (int u = 0; u < depth.width; u += stride) {
      const double d = depth.at(u, v);
      if (!DepthMap::is_valid(d)) continue;
      out.emplace_back((u - intr.cx) * d / intr.fx, (v - intr.cy) * d / intr.fy, d);
    }
  }
  return out;
}

Points to_world(std::span<const Eigen::Vector3d> points, const CameraPose& pose) {
  const Eigen::Matrix3d r = pose.rotation();
  const Eigen::Vector3d t = pose.translation();
  Points out;
  out.reserve(points.size());
  for (const auto& q : points) out.push_back(r * q + t);
  return out;
}

PointCloudStats cloud_stats(std::span<const Eigen::Vector3d> points) {
  PointCloudStats stats;
  stats.point_count = points.size();
  if (points.empty()) return stats;

  const double n = static_cast<double>(points.size());
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  for (const auto& p : points) sum += p;
  stats.mean = sum / n;

  Eigen::Matrix3d acc = Eigen::Matrix3d::Zero();
  for (const auto& p : points) {
    const Eigen::Vector3d d = p - stats.mean;
    for (int r = 0; r < 3; ++r) {
      for (int c = r; c < 3; ++c) acc(r, c) += d[r] * d[c];
    }
  }
  for (int r = 0; r < 3; ++r) {
    for (int c = r; c < 3; ++c) {
      stats.covariance(r, c) = acc(r, c) / n;
      stats.covariance(c, r) = stats.covariance(r, c);
    }
  }

  stats.degenerate = points.size() < kMinStatsPoints;
  stats.spread = stats.degenerate ? 0.0 : stats.covariance.determinant();
  return stats;
}

double laplacian_variance(const ColorImage& image) {
  if (image.width < 3 || image.height < 3) {
    throw Error(ErrorKind::ImageTooSmall, "image must be at least 3x3, got " +
                                              std::to_string(image.width) + "x" +
                                              std::to_string(image.height));
  }
  const int w = image.width;
  const int h = image.height;
  std::vector<double> luma(static_cast<std::size_t>(w) * h);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const auto p = image.pixel(u, v);
      luma[static_cast<std::size_t>(v) * w + u] = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
    }
  }
  auto at = [&](int u, int v) { return luma[static_cast<std::size_t>(v) * w + u]; };

  std::vector<double> response;
  response.reserve(static_cast<std::size_t>(w - 2) * (h - 2));
  for (int v = 1; v < h - 1; ++v) {
    for (int u = 1; u < w - 1; ++u) {
      response.push_back(at(u, v - 1) + at(u - 1, v) + at(u + 1, v) + at(u, v + 1) - 4.0 * at(u, v));
    }
  }
  double mean = 0.0;
  for (double r : response) mean += r;
  mean /= static_cast<double>(response.size());
  double var = 0.0;
  for (double r : response) var += (r - mean) * (r - mean);
  return var / static_cast<double>(response.size());
}

int sampling_stride(std::size_t valid_pixels, std::size_t max_points) {
  if (max_points == 0) throw Error(ErrorKind::InvalidArgument, "max_points must be >= 1");
  if (valid_pixels <= max_points) return 1;
  return static_cast<int>(std::ceil(std::sqrt(static_cast<double>(valid_pixels) /
                                              static_cast<double>(max_points))));
}

double quality_score(double spread, double sharpness, double beta) {
  return spread + beta * sharpness;
}

FrameFeatures compute_frame_features(const SceneManifest& scene, std::int64_t frame_id,
                                     const SelectionConfig& config) {
  const FrameRecord& record = scene.frame(frame_id);
  const DepthMap depth = load_depth(scene, record);
  const std::size_t valid = depth.valid_count();
  const int stride = sampling_stride(valid, config.max_points);
  const Points world = to_world(back_project(depth, scene.intrinsics, stride), record.pose);

  FrameFeatures f;
  f.frame_id = frame_id;
  f.embedding_ref = static_cast<std::size_t>(&record - scene.frames.data());
  f.stats = cloud_stats(world);
  f.sharpness = laplacian_variance(load_color(record));
  if (valid < kMinValidPoints) {
    f.stats.degenerate = true;
    f.stats.spread = 0.0;
  }
  f.quality = f.stats.degenerate ? -std::numeric_limits<double>::infinity()
                                 : quality_score(f.stats.spread, f.sharpness, config.beta);
  return f;
}

std::vector<FrameFeatures> compute_scene_features(const SceneManifest& scene,
                                                  const SelectionConfig& config, unsigned jobs) {
  std::vector<FrameFeatures> out(scene.frames.size());
  parallel_for(out.size(), jobs, [&](std::size_t i) {
    out[i] = compute_frame_features(scene, scene.frames[i].frame_id, config);
  });
  if (config.normalize_quality) normalize_qualities(out, config.beta);
  return out;
}

void normalize_qualities(std::vector<FrameFeatures>& features, double beta) {
  auto zscores = [&](auto term) {
    double mean = 0.0;
    std::size_t n = 0;
    for (const auto& f : features) {
      if (!f.stats.degenerate) {
        mean += term(f);
        ++n;
      }
    }
    std::vector<double> z(features.size(), 0.0);
    if (n == 0) return z;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (const auto& f : features) {
      if (!f.stats.degenerate) var += (term(f) - mean) * (term(f) - mean);
    }
    const double sd = std::sqrt(var / static_cast<double>(n));
    if (sd == 0.0) return z;
    for (std::size_t i = 0; i < features.size(); ++i) z[i] = (term(features[i]) - mean) / sd;
    return z;
  };
  const auto zs = zscores([](const FrameFeatures& f) { return f.stats.spread; });
  const auto zl = zscores([](const FrameFeatures& f) { return f.sharpness; });
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (!features[i].stats.degenerate) features[i].quality = quality_score(zs[i], zl[i], beta);
  }
}

void write_features_cache(const std::string& scene_id, std::span<const FrameFeatures> features,
                          const std::filesystem::path& path) {
  json frames = json::array();
  for (const auto& f : features) {
    json cov = json::array();
    for (int i = 0; i < 9; ++i) cov.push_back(f.stats.covariance(i / 3, i % 3));
    frames.push_back({{"frame_id", f.frame_id},
                      {"mean", {f.stats.mean[0], f.stats.mean[1], f.stats.mean[2]}},
                      {"covariance", std::move(cov)},
                      {"point_count", f.stats.point_count},
                      {"spread", f.stats.spread},
                      {"degenerate", f.stats.degenerate},
                      {"sharpness", f.sharpness},
                      // -inf has no JSON spelling; degenerate frames store null.
                      {"quality", f.stats.degenerate ? json(nullptr) : json(f.quality)},
                      {"embedding_ref", f.embedding_ref}});
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << json{{"version", 1}, {"scene_id", scene_id}, {"frames", std::move(frames)}}.dump(2) << '\n';
}

std::vector<FrameFeatures> read_features_cache(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingFile, "cannot open " + path.string());
  std::vector<FrameFeatures> out;
  try {
    const json doc = json::parse(in);
    for (const auto& j : doc.at("frames")) {
      FrameFeatures f;
      f.frame_id = j.at("frame_id").get<std::int64_t>();
      for (int i = 0; i < 3; ++i) f.stats.mean[i] = j.at("mean").at(i).get<double>();
      for (int i = 0; i < 9; ++i) f.stats.covariance(i / 3, i % 3) = j.at("covariance").at(i).get<double>();
      f.stats.point_count = j.at("point_count").get<std::size_t>();
      f.stats.spread = j.at("spread").get<double>();
      f.stats.degenerate = j.at("degenerate").get<bool>();
      f.sharpness = j.at("sharpness").get<double>();
      f.quality = j.at("quality").is_null() ? -std::numeric_limits<double>::infinity()
                                            : j.at("quality").get<double>();
      f.embedding_ref = j.at("embedding_ref").get<std::size_t>();
      out.push_back(f);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedManifest, path.string() + ": " + e.what());
  }
  return out;
}

}  // namespace spatial_prompt
