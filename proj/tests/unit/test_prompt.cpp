#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Geometry>

#include "doctest.h"
#include "spatial_prompt/codec.hpp"
#include "spatial_prompt/error.hpp"
#include "spatial_prompt/prompt.hpp"
#include "spatial_prompt/scene.hpp"
#include "spatial_prompt/selector.hpp"
#include "test_support.hpp"

using namespace spatial_prompt;

namespace {

Eigen::Matrix3d rot(double yaw, double pitch, double roll) {
  const double d = std::numbers::pi / 180.0;
  return (Eigen::AngleAxisd(yaw * d, Eigen::Vector3d::UnitZ()) *
          Eigen::AngleAxisd(pitch * d, Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(roll * d, Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

SceneManifest fixture_scene(const std::string& name) {
  return load_manifest(sp_test::fixture_dir() / "scenes" / name / "scene.json");
}

std::vector<std::int64_t> fixture_kept(const std::string& name) {
  return read_keyframes(sp_test::fixture_dir() / "scenes" / name / "keyframes.json").result.kept;
}

std::string golden(const std::string& rel) { return sp_test::read_file(sp_test::fixture_dir() / "golden" / rel); }

}  // namespace

TEST_CASE("euler angles of simple rotations") {
  const EulerAngles id = rotation_to_euler(Eigen::Matrix3d::Identity());
  CHECK(id.roll_deg == 0.0);
  CHECK(id.pitch_deg == 0.0);
  CHECK(id.yaw_deg == 0.0);
  const EulerAngles yaw = rotation_to_euler(rot(90, 0, 0));
  CHECK(yaw.roll_deg == doctest::Approx(0.0));
  CHECK(yaw.pitch_deg == doctest::Approx(0.0));
  CHECK(yaw.yaw_deg == doctest::Approx(90.0));
  const EulerAngles all = rotation_to_euler(rot(-120, 30, 170));
  CHECK(all.roll_deg == doctest::Approx(170.0));
  CHECK(all.pitch_deg == doctest::Approx(30.0));
  CHECK(all.yaw_deg == doctest::Approx(-120.0));
}

TEST_CASE("euler round trip over random rotations") {
  std::mt19937_64 rng(99);
  int locked = 0;
  for (int i = 0; i < 10000; ++i) {
    const Eigen::Matrix3d r = sp_test::random_rotation(rng);
    locked += in_gimbal_lock(r) ? 1 : 0;
    const EulerAngles e = rotation_to_euler(r);
    CHECK(e.roll_deg > -180.0);
    CHECK(e.roll_deg <= 180.0);
    CHECK(e.pitch_deg >= -90.0);
    CHECK(e.pitch_deg <= 90.0);
    CHECK((euler_to_rotation(e) - r).norm() < 1e-6);
  }
  CHECK(locked == 0);
}

TEST_CASE("gimbal lock pins roll to zero") {
  for (double pitch : {90.0, -90.0}) {
    for (double roll : {-60.0, 0.0, 25.0}) {
      const Eigen::Matrix3d r = rot(40, pitch, roll);
      REQUIRE(in_gimbal_lock(r));
      const EulerAngles e = rotation_to_euler(r);
      CHECK(e.roll_deg == 0.0);
      CHECK(e.pitch_deg == pitch);
      CHECK((euler_to_rotation(e) - r).norm() < 1e-6);
    }
  }
  // pitch +90: yaw absorbs yaw - roll
  CHECK(rotation_to_euler(rot(40, 90, 25)).yaw_deg == doctest::Approx(15.0));
  // pitch -90: yaw absorbs yaw + roll
  CHECK(rotation_to_euler(rot(40, -90, 25)).yaw_deg == doctest::Approx(65.0));
}

TEST_CASE("canonical degrees") {
  CHECK(canonical_degrees(180.0) == 180.0);
  CHECK(canonical_degrees(-180.0) == 180.0);
  CHECK(canonical_degrees(190.0) == doctest::Approx(-170.0));
  CHECK(canonical_degrees(-190.0) == doctest::Approx(170.0));
  CHECK(canonical_degrees(720.0) == 0.0);
}

TEST_CASE("fixed formatting rounds half away from zero on the binary value") {
  CHECK(format_fixed(1.23456, 2) == "1.23");
  CHECK(format_fixed(-0.005, 2) == "-0.01");  // -0.005000000000000000104...
  CHECK(format_fixed(0.125, 2) == "0.13");    // exact tie
  CHECK(format_fixed(-0.125, 2) == "-0.13");
  CHECK(format_fixed(2.675, 2) == "2.67");  // 2.67499999999999982...
  CHECK(format_fixed(1.005, 2) == "1.00");  // 1.00499999999999989...
  CHECK(format_fixed(0.05, 1) == "0.1");    // 0.05000000000000000277...
  CHECK(format_fixed(0.25, 1) == "0.3");
  CHECK(format_fixed(-0.004, 2) == "0.00");
  CHECK(format_fixed(-0.0, 2) == "0.00");
  CHECK(format_fixed(-1e-300, 1) == "0.0");
  CHECK(format_fixed(99.995, 2) == "100.00");  // 99.99500000000000454... carries
  CHECK(format_fixed(9.95, 1) == "9.9");       // 9.949999999999999289...
  CHECK(format_fixed(9.75, 1) == "9.8");
  CHECK(format_fixed(123456.5, 0) == "123457");
}

TEST_CASE("pose block text") {
  const PoseText t = format_pose_block(CameraPose::from_parts(Eigen::Matrix3d::Identity(), {1.23456, -0.005, 2.0}));
  CHECK(t.position == "Camera position: [x=1.23m, y=-0.01m, z=2.00m]");
  CHECK(t.rotation == "Camera rotation: [x=0.0°, y=0.0°, z=0.0°]");
  CHECK(format_pose_block(CameraPose::from_parts(rot(90, 0, 0), Eigen::Vector3d::Zero())).rotation ==
        "Camera rotation: [x=0.0°, y=0.0°, z=90.0°]");
  // Yaw just above -180 prints as 180.0 rather than -180.0.
  CHECK(format_pose_block(CameraPose::from_parts(rot(-179.96, 0, 0), Eigen::Vector3d::Zero())).rotation ==
        "Camera rotation: [x=0.0°, y=0.0°, z=180.0°]");
}

TEST_CASE("pose text is idempotent under parse and reformat") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int i = 0; i < 500; ++i) {
    const Eigen::Vector3d t(u(rng), u(rng), u(rng));
    const PoseText a = format_pose_block(CameraPose::from_parts(Eigen::Matrix3d::Identity(), t));
    double x, y, z;
    REQUIRE(std::sscanf(a.position.c_str(), "Camera position: [x=%lfm, y=%lfm, z=%lfm]", &x, &y, &z) == 3);
    const PoseText b = format_pose_block(CameraPose::from_parts(Eigen::Matrix3d::Identity(), {x, y, z}));
    CHECK(a.position == b.position);
  }
}

TEST_CASE("resize keeps aspect ratio") {
  const ColorImage wide = resize_image(ColorImage(1344, 672, 9), 336);
  CHECK(wide.width == 672);
  CHECK(wide.height == 336);

  ColorImage small(100, 50, 0);
  for (int v = 0; v < 50; ++v) {
    for (int u = 0; u < 100; ++u) small.set_pixel(u, v, {12, 200, 77});
  }
  const ColorImage up = resize_image(small, 336);
  CHECK(up.width == 672);
  CHECK(up.height == 336);
  bool constant = true;
  for (int v = 0; v < up.height; ++v) {
    for (int u = 0; u < up.width; ++u) constant = constant && up.pixel(u, v) == std::array<std::uint8_t, 3>{12, 200, 77};
  }
  CHECK(constant);

  ColorImage same(10, 336, 0);
  same.set_pixel(3, 3, {1, 2, 3});
  CHECK(resize_image(same, 336) == same);
}

TEST_CASE("jpeg payload") {
  const ImagePayload p = encode_jpeg(ColorImage(8, 8, 200));
  CHECK(p.media_type == "image/jpeg");
  REQUIRE(p.bytes.size() > 4);
  CHECK(p.bytes[0] == 0xFF);
  CHECK(p.bytes[1] == 0xD8);
  CHECK(encode_jpeg(ColorImage(8, 8, 200)) == p);
}

TEST_CASE("default annotation carries the required sentence") {
  const std::string a = AnnotationSpec{}.render();
  CHECK(a.find("Note that the user does not know the images that you have.") != std::string::npos);
  CHECK(AnnotationSpec{AnnotationSpec::Kind::ZeroShot, {}}.render() ==
        "The answer should be a phrase or a single word.");
  CHECK(AnnotationSpec{AnnotationSpec::Kind::None, {}}.render().empty());
  CHECK(AnnotationSpec::custom("x").render() == "x");
}

TEST_CASE("blocks follow timestamp order whatever the kept order") {
  const SceneManifest scene = fixture_scene("gimbal_lock");
  PromptOptions small;
  small.image_height = 24;
  const std::vector<std::int64_t> shuffled{9, 3, 7};
  const PromptBundle b = build_prompt(scene, shuffled, "q", AnnotationSpec{}, small);
  REQUIRE(b.blocks.size() == 3);
  CHECK(b.blocks[0].frame_id == 3);
  CHECK(b.blocks[1].frame_id == 7);
  CHECK(b.blocks[2].frame_id == 9);
}

TEST_CASE("prompt input errors") {
  const SceneManifest scene = fixture_scene("sofa_room");
  auto kind = [&](std::vector<std::int64_t> kept, std::string query) {
    try {
      build_prompt(scene, kept, query, AnnotationSpec{});
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::IoError;
  };
  CHECK(kind({}, "q") == ErrorKind::EmptyInput);
  CHECK(kind({42}, "q") == ErrorKind::UnknownFrame);
  CHECK(kind({0}, "") == ErrorKind::InvalidArgument);
}

TEST_CASE("role precedes the preamble") {
  PromptOptions options;
  options.role = "You are an excellent home assistant system.";
  options.image_height = 24;
  const PromptBundle b = build_prompt(fixture_scene("sofa_room"), std::vector<std::int64_t>{0}, "q", AnnotationSpec{}, options);
  CHECK(b.preamble ==
        "You are an excellent home assistant system.\nYou will be provided with images captured from specific "
        "camera positions and orientations as follows:");
}

TEST_CASE("no-pose option leaves pose text empty") {
  PromptOptions options;
  options.include_pose = false;
  options.image_height = 24;
  const PromptBundle b = build_prompt(fixture_scene("gimbal_lock"), std::vector<std::int64_t>{3, 7}, "q", AnnotationSpec{}, options);
  for (const auto& block : b.blocks) {
    CHECK(block.position_text.empty());
    CHECK(block.rotation_text.empty());
  }
  CHECK(render_text(b).find("Camera position") == std::string::npos);
}

TEST_CASE("bundle json round trip") {
  const PromptBundle b = build_prompt(fixture_scene("negative_zero"), std::vector<std::int64_t>{0, 1}, "What color is the chair?",
                                      AnnotationSpec{});
  const PromptBundle back = bundle_from_json(bundle_to_json(b));
  CHECK(back == b);
  CHECK(bundle_to_json(b).at("version") == 1);
}

TEST_CASE("serialized prompts match the committed goldens") {
  struct Case {
    const char* scene;
    const char* query;
    const char* role;
    const char* golden;
  };
  const Case cases[] = {
      {"sofa_room", "How many sofas are there in this room?", "", "sofa_room.prompt.json"},
      {"gimbal_lock", "Where is the lamp?", "You are an excellent home assistant system.", "gimbal_lock.prompt.json"},
      {"negative_zero", "What color is the chair?", "", "negative_zero.prompt.json"},
  };
  for (const auto& c : cases) {
    CAPTURE(c.golden);
    PromptOptions options;
    options.role = c.role;
    const PromptBundle b = build_prompt(fixture_scene(c.scene), fixture_kept(c.scene), c.query, AnnotationSpec{}, options);
    CHECK(serialize_bundle(b) == golden(c.golden));
  }
}

TEST_CASE("render text layout") {
  PromptOptions options;
  options.image_height = 24;
  const PromptBundle b = build_prompt(fixture_scene("sofa_room"), std::vector<std::int64_t>{0}, "How many sofas are there in this room?",
                                      AnnotationSpec{}, options);
  const std::string text = render_text(b);
  CHECK(text.rfind(std::string(kPreamble) + "\nCamera position: [x=0.00m, y=0.00m, z=0.00m]\n"
                                            "Camera rotation: [x=0.0°, y=0.0°, z=0.0°]\n",
                   0) == 0);
  CHECK(text.size() > b.query.size());
  CHECK(text.substr(text.size() - b.query.size() - 1) == b.query + "\n");
}
