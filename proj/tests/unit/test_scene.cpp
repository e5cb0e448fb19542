#include <cmath>
#include <fstream>

#include "doctest.h"
#include "spatial_prompt/error.hpp"
#include "spatial_prompt/scene.hpp"
#include "test_support.hpp"

using namespace spatial_prompt;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json identity_pose() { return json::array({1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1}); }

// Writes `count` 4x3 frames and returns the matching manifest document.
json tiny_scene(const fs::path& dir, int count, int w = 4, int h = 3) {
  json frames = json::array();
  for (int i = 0; i < count; ++i) {
    const std::string stem = std::to_string(i);
    ColorImage img(w, h, static_cast<std::uint8_t>(10 * i));
    write_color_png(img, dir / ("c" + stem + ".png"));
    write_depth(std::vector<std::uint16_t>(static_cast<std::size_t>(w * h), 1500), w, h, DepthFormat::Png16,
                dir / ("d" + stem + ".png"));
    frames.push_back({{"frame_id", i},
                      {"color", "c" + stem + ".png"},
                      {"depth", "d" + stem + ".png"},
                      {"timestamp", 0.1 * i},
                      {"pose", identity_pose()}});
  }
  return {{"scene_id", "tiny"},
          {"depth_format", "png16"},
          {"max_depth_m", 10.0},
          {"intrinsics", {{"fx", 2.0}, {"fy", 2.0}, {"cx", 1.5}, {"cy", 1.0}, {"width", w}, {"height", h},
                          {"depth_scale", 0.001}}},
          {"frames", frames}};
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error thrown");
  return ErrorKind::IoError;
}

}  // namespace

TEST_CASE("valid 3-frame manifest") {
  sp_test::TempDir dir("scene");
  const json doc = tiny_scene(dir.path(), 3);
  sp_test::write_file(dir / "scene.json", doc.dump());
  const SceneManifest s = load_manifest(dir / "scene.json");
  REQUIRE(s.frames.size() == 3);
  CHECK(s.frames[0].frame_id == 0);
  CHECK(s.frames[2].frame_id == 2);
  CHECK(s.scene_id == "tiny");
  CHECK(s.intrinsics.width == 4);
  CHECK(s.frame(1).timestamp == doctest::Approx(0.1));
  CHECK(s.find(9) == nullptr);
  CHECK(kind_of([&] { s.frame(9); }) == ErrorKind::UnknownFrame);
}

TEST_CASE("manifest round trips through json") {
  sp_test::TempDir dir("scene");
  const SceneManifest s = parse_manifest(tiny_scene(dir.path(), 2), dir.path());
  write_manifest(s, dir / "again.json");
  CHECK(load_manifest(dir / "again.json") == s);
}

TEST_CASE("pose bottom row must be 0 0 0 1") {
  sp_test::TempDir dir("scene");
  json doc = tiny_scene(dir.path(), 3);
  doc["frames"][1]["pose"][15] = 2;
  try {
    parse_manifest(doc, dir.path());
    FAIL("expected NonRigidPose");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NonRigidPose);
    CHECK(std::string(e.what()).find("1") != std::string::npos);
  }
}

TEST_CASE("rotation must be proper and orthonormal") {
  CameraPose p;
  p.matrix(0, 0) = -1.0;  // reflection
  CHECK(kind_of([&] { validate_pose(p, 0); }) == ErrorKind::NonRigidPose);
  CameraPose q;
  q.matrix(0, 1) = 1e-3;
  CHECK(kind_of([&] { validate_pose(q, 0); }) == ErrorKind::NonRigidPose);
  CameraPose r;
  r.matrix(0, 1) = 1e-6;  // inside tolerance
  CHECK_NOTHROW(validate_pose(r, 0));
}

TEST_CASE("manifest structural errors") {
  sp_test::TempDir dir("scene");
  const json good = tiny_scene(dir.path(), 3);

  json dup = good;
  dup["frames"][2]["frame_id"] = 0;
  CHECK(kind_of([&] { parse_manifest(dup, dir.path()); }) == ErrorKind::MalformedManifest);

  json missing_key = good;
  missing_key["intrinsics"].erase("fx");
  CHECK(kind_of([&] { parse_manifest(missing_key, dir.path()); }) == ErrorKind::MalformedManifest);

  json no_frames = good;
  no_frames["frames"] = json::array();
  CHECK(kind_of([&] { parse_manifest(no_frames, dir.path()); }) == ErrorKind::MalformedManifest);

  json backwards = good;
  backwards["frames"][2]["timestamp"] = 0.0;
  CHECK(kind_of([&] { parse_manifest(backwards, dir.path()); }) == ErrorKind::MalformedManifest);

  json bad_format = good;
  bad_format["depth_format"] = "exr";
  CHECK(kind_of([&] { parse_manifest(bad_format, dir.path()); }) == ErrorKind::MalformedManifest);

  json absent = good;
  absent["frames"][0]["color"] = "nope.png";
  CHECK(kind_of([&] { parse_manifest(absent, dir.path()); }) == ErrorKind::MissingFile);

  sp_test::write_file(dir / "broken.json", "{not json");
  CHECK(kind_of([&] { load_manifest(dir / "broken.json"); }) == ErrorKind::MalformedManifest);
  CHECK(kind_of([&] { load_manifest(dir / "absent.json"); }) == ErrorKind::MissingFile);
}

TEST_CASE("depth scale, invalid zero and range cutoff") {
  sp_test::TempDir dir("depth");
  for (DepthFormat format : {DepthFormat::Png16, DepthFormat::Raw16Le}) {
    const fs::path path = dir / (format == DepthFormat::Png16 ? "d.png" : "d.raw");
    write_depth({1500, 0, 10000, 10001}, 2, 2, format, path);
    FrameRecord rec;
    rec.depth_path = path;
    CameraIntrinsics k;
    k.width = 2;
    k.height = 2;
    k.depth_scale = 0.001;
    const DepthMap d = load_depth(rec, k, format, 10.0);
    CHECK(d.at(0, 0) == doctest::Approx(1.5));
    CHECK_FALSE(DepthMap::is_valid(d.at(1, 0)));
    CHECK(d.at(0, 1) == doctest::Approx(10.0));
    CHECK_FALSE(DepthMap::is_valid(d.at(1, 1)));
    CHECK(d.valid_count() == 2);
  }
}

TEST_CASE("depth raster must match intrinsics") {
  sp_test::TempDir dir("depth");
  write_depth(std::vector<std::uint16_t>(640 * 480, 1000), 640, 480, DepthFormat::Png16, dir / "d.png");
  FrameRecord rec;
  rec.depth_path = dir / "d.png";
  CameraIntrinsics k;
  k.width = 320;
  k.height = 240;
  CHECK(kind_of([&] { load_depth(rec, k, DepthFormat::Png16, 10.0); }) == ErrorKind::DimensionMismatch);

  sp_test::write_file(dir / "short.raw", std::string(10, '\0'));
  rec.depth_path = dir / "short.raw";
  k.width = 4;
  k.height = 4;
  CHECK(kind_of([&] { load_depth(rec, k, DepthFormat::Raw16Le, 10.0); }) == ErrorKind::DimensionMismatch);
}

TEST_CASE("8-bit depth png is rejected") {
  sp_test::TempDir dir("depth");
  write_color_png(ColorImage(2, 2), dir / "c.png");
  FrameRecord rec;
  rec.depth_path = dir / "c.png";
  CameraIntrinsics k;
  k.width = 2;
  k.height = 2;
  CHECK(kind_of([&] { load_depth(rec, k, DepthFormat::Png16, 10.0); }) == ErrorKind::UnsupportedDepthEncoding);
}

TEST_CASE("color images read back as RGB") {
  sp_test::TempDir dir("color");
  ColorImage black(4, 4);
  write_color_png(black, dir / "black.png");
  FrameRecord rec;
  rec.color_path = dir / "black.png";
  const ColorImage got = load_color(rec);
  CHECK(got.width == 4);
  CHECK(got.height == 4);
  CHECK(got == black);

  ColorImage red(3, 2, 0);
  red.set_pixel(0, 0, {255, 0, 0});
  write_color_png(red, dir / "red.png");
  rec.color_path = dir / "red.png";
  CHECK(load_color(rec).pixel(0, 0) == std::array<std::uint8_t, 3>{255, 0, 0});
}

TEST_CASE("truncated color file") {
  sp_test::TempDir dir("color");
  write_color_png(ColorImage(16, 16, 99), dir / "ok.png");
  const std::string bytes = sp_test::read_file(dir / "ok.png");
  sp_test::write_file(dir / "cut.png", bytes.substr(0, bytes.size() / 3));
  FrameRecord rec;
  rec.color_path = dir / "cut.png";
  CHECK(kind_of([&] { load_color(rec); }) == ErrorKind::UnsupportedColorEncoding);
  rec.color_path = dir / "gone.png";
  CHECK(kind_of([&] { load_color(rec); }) == ErrorKind::UnsupportedColorEncoding);
}
