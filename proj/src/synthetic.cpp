#include "spatial_prompt/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <unordered_set>

#include <Eigen/Geometry>

#include "spatial_prompt/error.hpp"
#include "spatial_prompt/features.hpp"

namespace spatial_prompt {

namespace fs = std::filesystem;

PathKind parse_path_kind(const std::string& name) {
  if (name == "circle") return PathKind::Circle;
  if (name == "line") return PathKind::Line;
  if (name == "random-walk") return PathKind::RandomWalk;
  throw Error(ErrorKind::InvalidArgument, "unknown path kind '" + name + "' (expected circle|line|random-walk)");
}

std::string to_string(PathKind kind) {
  switch (kind) {
    case PathKind::Circle: return "circle";
    case PathKind::Line: return "line";
    case PathKind::RandomWalk: return "random-walk";
  }
  return "circle";
}

void validate(const SyntheticSpec& spec) {
  if (spec.frame_count < 2) throw Error(ErrorKind::InvalidArgument, "frame_count must be >= 2");
  if (!(spec.room.minCoeff() > 0.0)) throw Error(ErrorKind::InvalidArgument, "room extents must be positive");
  if (spec.room.x() < 2.5 || spec.room.y() < 2.5 || spec.room.z() < 2.0) {
    throw Error(ErrorKind::InvalidArgument, "room must be at least 2.5 x 2.5 x 2.0 m");
  }
  if (spec.width < 3 || spec.height < 3) throw Error(ErrorKind::InvalidArgument, "image must be at least 3x3");
  if (spec.embedding_dim < 1) throw Error(ErrorKind::InvalidArgument, "embedding_dim must be >= 1");
  if (!(spec.focal_px > 0.0)) throw Error(ErrorKind::InvalidArgument, "focal_px must be > 0");
}

CameraPose look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target) {
  const Eigen::Vector3d forward = (target - eye).normalized();
  const Eigen::Vector3d right = forward.cross(Eigen::Vector3d::UnitZ()).normalized();
  const Eigen::Vector3d down = forward.cross(right);
  Eigen::Matrix3d r;
  r.col(0) = right;
  r.col(1) = down;
  r.col(2) = forward;
  return CameraPose::from_parts(r, eye);
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kCameraHeight = 1.4;
constexpr double kTargetHeight = 1.0;

Eigen::Vector3d heading(double yaw, double pitch) {
  return {std::cos(pitch) * std::cos(yaw), std::cos(pitch) * std::sin(yaw), std::sin(pitch)};
}

}  // namespace

std::vector<CameraPose> synthetic_trajectory(const SyntheticSpec& spec) {
  validate(spec);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const Eigen::Vector3d center(spec.room.x() / 2, spec.room.y() / 2, kTargetHeight);
  const auto n = static_cast<std::size_t>(spec.frame_count);
  std::vector<CameraPose> poses;
  poses.reserve(n);

  switch (spec.path_kind) {
    case PathKind::Circle: {
      // Uneven angular speed: the camera lingers in some directions, as
      // handheld captures do.
      const double radius = 0.35 * std::min(spec.room.x(), spec.room.y());
      std::vector<double> speed(n);
      double level = gauss(rng);
      for (auto& s : speed) {
        level = 0.8 * level + 0.6 * gauss(rng);
        s = std::exp(1.2 * level);
      }
      double total = 0.0;
      for (double s : speed) total += s;
      const double start = kTwoPi * uni(rng);
      double angle = start;
      for (std::size_t k = 0; k < n; ++k) {
        const Eigen::Vector3d eye(center.x() + radius * std::cos(angle), center.y() + radius * std::sin(angle),
                                  kCameraHeight);
        poses.push_back(look_at(eye, center));
        angle += kTwoPi * (static_cast<double>(n - 1) / static_cast<double>(n)) * speed[k] / total;
      }
      break;
    }
    case PathKind::Line: {
      const Eigen::Vector3d a(1.0, 1.0, kCameraHeight);
      const Eigen::Vector3d b(spec.room.x() - 1.0, spec.room.y() - 1.0, kCameraHeight);
      double yaw = kTwoPi * uni(rng);
      for (std::size_t k = 0; k < n; ++k) {
        const double t = static_cast<double>(k) / static_cast<double>(n - 1);
        const Eigen::Vector3d eye = a + t * (b - a);
        yaw += 0.25 + 0.1 * gauss(rng);
        poses.push_back(look_at(eye, eye + heading(yaw, -0.2)));
      }
      break;
    }
    case PathKind::RandomWalk: {
      Eigen::Vector3d eye(1.0 + uni(rng) * (spec.room.x() - 2.0), 1.0 + uni(rng) * (spec.room.y() - 2.0),
                          kCameraHeight);
      double yaw = kTwoPi * uni(rng);
      for (std::size_t k = 0; k < n; ++k) {
        const double pitch = -0.2 + 0.05 * gauss(rng);
        poses.push_back(look_at(eye, eye + heading(yaw, pitch)));
        eye.x() = std::clamp(eye.x() + 0.1 * gauss(rng), 1.0, spec.room.x() - 1.0);
        eye.y() = std::clamp(eye.y() + 0.1 * gauss(rng), 1.0, spec.room.y() - 1.0);
        eye.z() = std::clamp(eye.z() + 0.02 * gauss(rng), 1.2, 1.6);
        yaw += 0.3 * gauss(rng);
      }
      break;
    }
  }
  return poses;
}

Eigen::VectorXd pose_bucket_embedding(const CameraPose& pose, int dim) {
  // Anchor directions are a fixed function of dim so the same view direction
  // embeds identically in every scene.
  std::mt19937_64 rng(0x9e3779b97f4a7c15ULL ^ static_cast<std::uint64_t>(dim));
  std::normal_distribution<double> gauss(0.0, 1.0);
  const Eigen::Vector3d view = pose.rotation().col(2);
  constexpr double kSharpness = 4.0;
  Eigen::VectorXd out(dim);
  for (int k = 0; k < dim; ++k) {
    Eigen::Vector3d anchor(gauss(rng), gauss(rng), gauss(rng));
    anchor.normalize();
    out[k] = std::exp(kSharpness * (view.dot(anchor) - 1.0));
  }
  return out;
}

namespace {

struct Box {
  Eigen::Vector3d lo;
  Eigen::Vector3d hi;
};

constexpr std::array<std::array<std::uint8_t, 3>, 9> kPalette = {{
    {200, 180, 150},  // wall x=0
    {170, 190, 210},  // wall x=max
    {210, 200, 170},  // wall y=0
    {180, 210, 180},  // wall y=max
    {120, 100, 80},   // floor
    {235, 235, 235},  // ceiling
    {150, 60, 50},    // furniture
    {60, 90, 150},
    {70, 130, 70},
}};

std::vector<Box> furniture(const SyntheticSpec& spec) {
  std::mt19937_64 rng(spec.seed + 0x51ed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<Box> boxes;
  for (int k = 0; k < 3; ++k) {
    const int wall = static_cast<int>(uni(rng) * 4.0) % 4;
    const double length = 0.5 + 0.7 * uni(rng);
    const double depth = 0.4 + 0.4 * uni(rng);
    const double height = 0.5 + 0.5 * uni(rng);
    const double gap = 0.05 + 0.1 * uni(rng);
    const bool along_x = wall >= 2;
    const double span = along_x ? spec.room.x() : spec.room.y();
    const double offset = 0.2 + uni(rng) * (span - length - 0.4);
    Box b;
    if (along_x) {
      const double y0 = wall == 2 ? gap : spec.room.y() - gap - depth;
      b.lo = {offset, y0, 0.0};
      b.hi = {offset + length, y0 + depth, height};
    } else {
      const double x0 = wall == 0 ? gap : spec.room.x() - gap - depth;
      b.lo = {x0, offset, 0.0};
      b.hi = {x0 + depth, offset + length, height};
    }
    boxes.push_back(b);
  }
  return boxes;
}

// Distance along `dir` to the first surface, and that surface's palette index.
std::pair<double, int> cast_ray(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                                const Eigen::Vector3d& room, const std::vector<Box>& boxes) {
  double best = std::numeric_limits<double>::infinity();
  int surface = 0;
  for (int axis = 0; axis < 3; ++axis) {
    if (dir[axis] == 0.0) continue;
    const bool positive = dir[axis] > 0.0;
    const double t = ((positive ? room[axis] : 0.0) - origin[axis]) / dir[axis];
    if (t > 0.0 && t < best) {
      best = t;
      surface = 2 * axis + (positive ? 1 : 0);
    }
  }
  for (std::size_t k = 0; k < boxes.size(); ++k) {
    double t_near = -std::numeric_limits<double>::infinity();
    double t_far = std::numeric_limits<double>::infinity();
    bool miss = false;
    for (int axis = 0; axis < 3 && !miss; ++axis) {
      if (dir[axis] == 0.0) {
        miss = origin[axis] < boxes[k].lo[axis] || origin[axis] > boxes[k].hi[axis];
        continue;
      }
      double t0 = (boxes[k].lo[axis] - origin[axis]) / dir[axis];
      double t1 = (boxes[k].hi[axis] - origin[axis]) / dir[axis];
      if (t0 > t1) std::swap(t0, t1);
      t_near = std::max(t_near, t0);
      t_far = std::min(t_far, t1);
      miss = t_near > t_far;
    }
    if (!miss && t_near > 0.0 && t_near < best) {
      best = t_near;
      surface = 6 + static_cast<int>(k % 3);
    }
  }
  return {best, surface};
}

ColorImage box_blur(const ColorImage& image, int radius) {
  ColorImage out(image.width, image.height);
  for (int v = 0; v < image.height; ++v) {
    for (int u = 0; u < image.width; ++u) {
      std::array<int, 3> sum{};
      int count = 0;
      for (int dv = -radius; dv <= radius; ++dv) {
        for (int du = -radius; du <= radius; ++du) {
          const int x = std::clamp(u + du, 0, image.width - 1);
          const int y = std::clamp(v + dv, 0, image.height - 1);
          const auto p = image.pixel(x, y);
          for (int c = 0; c < 3; ++c) sum[static_cast<std::size_t>(c)] += p[static_cast<std::size_t>(c)];
          ++count;
        }
      }
      out.set_pixel(u, v, {static_cast<std::uint8_t>(sum[0] / count), static_cast<std::uint8_t>(sum[1] / count),
                           static_cast<std::uint8_t>(sum[2] / count)});
    }
  }
  return out;
}

}  // namespace

GeneratedScene generate_scene(const SyntheticSpec& spec, const fs::path& out_dir) {
  const auto poses = synthetic_trajectory(spec);
  return generate_scene(spec, poses, out_dir);
}

GeneratedScene generate_scene(const SyntheticSpec& spec, std::span<const CameraPose> poses, const fs::path& out_dir) {
  validate(spec);
  if (poses.empty()) throw Error(ErrorKind::InvalidArgument, "at least one pose required");
  try {
    fs::create_directories(out_dir / "color");
    fs::create_directories(out_dir / "depth");
  } catch (const fs::filesystem_error& e) {
    throw Error(ErrorKind::IoError, e.what());
  }

  SceneManifest scene;
  scene.scene_id = spec.scene_id.empty() ? "synth_" + std::to_string(spec.seed) : spec.scene_id;
  scene.depth_format = spec.depth_format;
  scene.max_depth_m = 10.0;
  scene.root = out_dir;
  auto& k = scene.intrinsics;
  k.fx = k.fy = spec.focal_px;
  k.cx = (spec.width - 1) / 2.0;
  k.cy = (spec.height - 1) / 2.0;
  k.width = spec.width;
  k.height = spec.height;
  k.depth_scale = 0.001;

  const std::vector<Box> boxes = furniture(spec);
  std::mt19937_64 rng(spec.seed ^ 0xc0ffeeULL);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const std::string depth_ext = spec.depth_format == DepthFormat::Png16 ? ".png" : ".raw";

  Eigen::MatrixXd embedding_rows(static_cast<Eigen::Index>(poses.size()), spec.embedding_dim);
  std::vector<std::int64_t> ids;

  for (std::size_t f = 0; f < poses.size(); ++f) {
    validate_pose(poses[f], static_cast<std::int64_t>(f));
    const Eigen::Matrix3d r = poses[f].rotation();
    const Eigen::Vector3d origin = poses[f].translation();
    ColorImage color(spec.width, spec.height);
    std::vector<std::uint16_t> depth(static_cast<std::size_t>(spec.width) * spec.height);
    for (int v = 0; v < spec.height; ++v) {
      for (int u = 0; u < spec.width; ++u) {
        const Eigen::Vector3d ray_cam((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
        const Eigen::Vector3d ray = r * ray_cam;
        const auto [t, surface] = cast_ray(origin, ray, spec.room, boxes);
        const Eigen::Vector3d hit = origin + t * ray;
        const auto cell = static_cast<long>(std::floor(hit.x() / 0.25) + std::floor(hit.y() / 0.25) +
                                            std::floor(hit.z() / 0.25));
        const double shade = (cell & 1) ? 0.65 : 1.0;
        const auto& base = kPalette[static_cast<std::size_t>(surface)];
        color.set_pixel(u, v, {static_cast<std::uint8_t>(base[0] * shade), static_cast<std::uint8_t>(base[1] * shade),
                               static_cast<std::uint8_t>(base[2] * shade)});
        const double mm = std::round(t * 1000.0);
        depth[static_cast<std::size_t>(v) * spec.width + u] =
            uni(rng) < spec.dropout_fraction ? 0 : static_cast<std::uint16_t>(std::clamp(mm, 1.0, 65535.0));
      }
    }
    if (uni(rng) < spec.blur_fraction) color = box_blur(color, 2);

    char name[24];
    std::snprintf(name, sizeof name, "%06zu", f);
    FrameRecord rec;
    rec.frame_id = static_cast<std::int64_t>(f);
    rec.color_ref = std::string("color/") + name + ".png";
    rec.depth_ref = std::string("depth/") + name + depth_ext;
    rec.color_path = out_dir / rec.color_ref;
    rec.depth_path = out_dir / rec.depth_ref;
    rec.pose = poses[f];
    rec.timestamp = static_cast<double>(f) / 30.0;
    write_color_png(color, rec.color_path);
    write_depth(depth, spec.width, spec.height, spec.depth_format, rec.depth_path);
    scene.frames.push_back(rec);

    embedding_rows.row(static_cast<Eigen::Index>(f)) = pose_bucket_embedding(poses[f], spec.embedding_dim).transpose();
    ids.push_back(rec.frame_id);
  }

  GeneratedScene out{std::move(scene),
                     EmbeddingMatrix(ids, embedding_rows, "pose-bucket-" + std::to_string(spec.embedding_dim)),
                     out_dir / "scene.json", out_dir / "embeddings.json"};
  write_manifest(out.manifest, out.manifest_path);
  write_embeddings(out.embeddings, out.embeddings_path);
  // Reload so the in-memory store matches the float32 payload on disk.
  out.embeddings = load_embeddings(out.embeddings_path, out.manifest);
  return out;
}

CoverageGrid::CoverageGrid(const SceneManifest& scene, double voxel) {
  std::vector<Points> clouds;
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector3d hi = -lo;
  for (const auto& f : scene.frames) {
    clouds.push_back(to_world(back_project(load_depth(scene, f), scene.intrinsics, 1), f.pose));
    for (const auto& p : clouds.back()) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    frame_ids_.push_back(f.frame_id);
  }
  if (!(lo.array() <= hi.array()).all()) return;  // no valid depth anywhere

  std::array<std::size_t, 3> dims{};
  for (int a = 0; a < 3; ++a) {
    dims[static_cast<std::size_t>(a)] = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((hi[a] - lo[a]) / voxel)));
  }
  cell_count_ = dims[0] * dims[1] * dims[2];
  for (const auto& cloud : clouds) {
    std::vector<std::uint32_t> cells;
    cells.reserve(cloud.size());
    for (const auto& p : cloud) {
      std::array<std::size_t, 3> idx{};
      for (int a = 0; a < 3; ++a) {
        const auto i = static_cast<std::size_t>(std::floor((p[a] - lo[a]) / voxel));
        idx[static_cast<std::size_t>(a)] = std::min(i, dims[static_cast<std::size_t>(a)] - 1);
      }
      cells.push_back(static_cast<std::uint32_t>((idx[2] * dims[1] + idx[1]) * dims[0] + idx[0]));
    }
    std::sort(cells.begin(), cells.end());
    cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
    observed_.push_back(std::move(cells));
  }
}

double CoverageGrid::score(std::span<const std::int64_t> kept) const {
  if (cell_count_ == 0) return 0.0;
  std::unordered_set<std::uint32_t> seen;
  for (std::int64_t id : kept) {
    const auto it = std::find(frame_ids_.begin(), frame_ids_.end(), id);
    if (it == frame_ids_.end()) throw Error(ErrorKind::UnknownFrame, "frame " + std::to_string(id) + " not in scene");
    const auto& cells = observed_[static_cast<std::size_t>(it - frame_ids_.begin())];
    seen.insert(cells.begin(), cells.end());
  }
  return static_cast<double>(seen.size()) / static_cast<double>(cell_count_);
}

double coverage_score(const SceneManifest& scene, std::span<const std::int64_t> kept) {
  if (kept.empty()) throw Error(ErrorKind::EmptyInput, "coverage needs at least one kept frame");
  return CoverageGrid(scene).score(kept);
}

}  // namespace spatial_prompt
