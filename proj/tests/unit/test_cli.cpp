#include <fstream>

#include "doctest.h"
#include "json.hpp"
#include "spatial_prompt/features.hpp"
#include "spatial_prompt/scene.hpp"
#include "spatial_prompt/synthetic.hpp"
#include "test_support.hpp"

using namespace spatial_prompt;
using nlohmann::json;
using sp_test::run_cli;

namespace {

std::string fixture(const std::string& rel) { return (sp_test::fixture_dir() / rel).string(); }

std::string scenes_root() { return fixture("scenes"); }

void write_questions(const std::filesystem::path& path) {
  std::ofstream out(path);
  out << R"({"question_id": "q1", "scene_id": "sofa_room", "question": "What color is the sofa?", "answers": ["What color is the sofa?"]})" << '\n'
      << R"({"question_id": "q2", "scene_id": "sofa_room", "question": "How many sofas?", "answers": ["2"]})" << '\n'
      << R"({"question_id": "q3", "scene_id": "gimbal_lock", "question": "Where is the lamp?", "answers": ["desk"]})" << '\n'
      << R"({"question_id": "q4", "scene_id": "gimbal_lock", "question": "What is on the bed?", "answers": ["pillow"]})" << '\n';
}

}  // namespace

TEST_CASE("synth then extract matches the slow oracle") {
  sp_test::TempDir dir("cli");
  auto r = run_cli({"synth", "--out", (dir / "s").string(), "--frames", "8", "--seed", "3"});
  REQUIRE(r.exit_code == 0);
  CHECK(json::parse(r.out).at("frames") == 8);

  r = run_cli({"extract", "--scene", (dir / "s" / "scene.json").string(), "--max-frames", "3"});
  REQUIRE(r.exit_code == 0);
  const auto out = json::parse(r.out);
  CHECK(out.at("method") == "greedy");

  const auto manifest = load_manifest(dir / "s" / "scene.json");
  sp_test::SelectionInstance inst;
  inst.config.n_max = 3;
  inst.features = compute_scene_features(manifest, inst.config);
  inst.store = load_embeddings(dir / "s" / "embeddings.json", manifest);
  CHECK(out.at("kept").get<std::vector<std::int64_t>>() == sp_test::naive_select(inst));

  r = run_cli({"extract", "--scene", (dir / "s" / "scene.json").string(), "--max-frames", "0"});
  CHECK(r.exit_code == 2);
  r = run_cli({"extract", "--scene", (dir / "missing.json").string()});
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("error: MissingFile") != std::string::npos);
}

TEST_CASE("print-config round trips through a config file") {
  sp_test::TempDir dir("cli");
  auto r = run_cli({"extract", "--print-config"});
  REQUIRE(r.exit_code == 0);
  const auto cfg = json::parse(r.out);
  CHECK(cfg.at("selection").at("alpha") == 5.0);
  CHECK(cfg.at("selection").at("beta") == 1.0);
  CHECK(cfg.at("selection").at("max_frames") == 30);

  sp_test::write_file(dir / "cfg.json", r.out);
  const auto again = run_cli({"extract", "--config", (dir / "cfg.json").string(), "--print-config"});
  CHECK(again.out == r.out);

  json patched = cfg;
  patched["selection"]["alpha"] = 2.5;
  patched["backend"]["kind"] = "echo";
  sp_test::write_file(dir / "cfg.json", patched.dump());
  // file < env < flags
  const auto layered = json::parse(run_cli({"ask", "--config", (dir / "cfg.json").string(), "--max-frames", "7",
                                            "--print-config"},
                                           "", {{"SPATIAL_PROMPT_BACKEND", "replay"}})
                                       .out);
  CHECK(layered.at("selection").at("alpha") == 2.5);
  CHECK(layered.at("selection").at("max_frames") == 7);
  CHECK(layered.at("backend").at("kind") == "replay");
  const auto flag_wins = json::parse(run_cli({"ask", "--backend", "echo", "--print-config"}, "",
                                             {{"SPATIAL_PROMPT_BACKEND", "replay"}})
                                         .out);
  CHECK(flag_wins.at("backend").at("kind") == "echo");
}

TEST_CASE("config files cannot carry credentials or unknown keys") {
  sp_test::TempDir dir("cli");
  sp_test::write_file(dir / "key.json", R"({"backend": {"api_key": "sk-nope"}})");
  auto r = run_cli({"ask", "--config", (dir / "key.json").string(), "--print-config"});
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("SPATIAL_PROMPT_API_KEY") != std::string::npos);
  sp_test::write_file(dir / "typo.json", R"({"selection": {"alhpa": 1}})");
  CHECK(run_cli({"ask", "--config", (dir / "typo.json").string(), "--print-config"}).exit_code == 2);
  CHECK(run_cli({"ask", "--api-key", "sk-nope", "--print-config"}).exit_code == 2);
}

TEST_CASE("prompt golden check") {
  sp_test::TempDir dir("cli");
  const std::vector<std::string> base{"prompt", "--scene", fixture("scenes/sofa_room/scene.json"), "--keyframes",
                                      fixture("scenes/sofa_room/keyframes.json")};
  auto args = base;
  args.insert(args.end(), {"--query", "How many sofas are there in this room?", "--golden-check",
                           fixture("golden/sofa_room.prompt.json")});
  auto r = run_cli(args);
  CHECK(r.exit_code == 0);

  args = base;
  args.insert(args.end(), {"--query", "How many chairs are there in this room?", "--golden-check",
                           fixture("golden/sofa_room.prompt.json")});
  r = run_cli(args);
  CHECK(r.exit_code == 1);
  CHECK(r.err.find("GoldenMismatch") != std::string::npos);
  CHECK(r.err.find("at byte") != std::string::npos);

  args = base;
  args.insert(args.end(), {"--query", "Where is the lamp?", "--role", "You are a careful assistant.", "--format", "text"});
  r = run_cli(args);
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.rfind("You are a careful assistant.\n", 0) == 0);
  CHECK(r.out.find("Where is the lamp?") != std::string::npos);

  CHECK(run_cli(base).exit_code == 2);  // --query is required
  args = base;
  args.insert(args.end(), {"--query", "x", "--ablation", "uniform-kf"});
  CHECK(run_cli(args).exit_code == 2);
}

TEST_CASE("ask with replay, http and the interactive loop") {
  sp_test::TempDir dir("cli");
  const std::vector<std::string> base{"ask", "--scene", fixture("scenes/sofa_room/scene.json"), "--keyframes",
                                      fixture("scenes/sofa_room/keyframes.json")};
  auto args = base;
  args.insert(args.end(), {"--query", "What color is the sofa?", "--backend", "echo", "--record",
                           (dir / "rec.jsonl").string()});
  REQUIRE(run_cli(args).exit_code == 0);
  auto entry = json::parse(sp_test::read_file(dir / "rec.jsonl"));
  entry["response"] = "brown";
  sp_test::write_file(dir / "replay.jsonl", entry.dump() + "\n");

  args = base;
  args.insert(args.end(), {"--query", "What color is the sofa?", "--backend", "replay", "--replay",
                           (dir / "replay.jsonl").string()});
  auto r = run_cli(args);
  CHECK(r.exit_code == 0);
  CHECK(r.out == "brown\n");

  args = base;
  args.insert(args.end(), {"--query", "What color is the rug?", "--replay", (dir / "replay.jsonl").string()});
  r = run_cli(args);
  CHECK(r.exit_code == 3);
  CHECK(r.err.find("ReplayMiss") != std::string::npos);

  args = base;
  args.insert(args.end(), {"--query", "x", "--backend", "http"});
  r = run_cli(args, "", {{"SPATIAL_PROMPT_API_KEY", ""}});
  CHECK(r.exit_code == 3);
  CHECK(r.err.find("SPATIAL_PROMPT_API_KEY") != std::string::npos);

  args = base;
  args.insert(args.end(), {"--interactive", "--backend", "echo", "-v"});
  r = run_cli(args, "Where is the lamp?\nWhat is on the sofa?\n");
  CHECK(r.exit_code == 0);
  CHECK(r.out == "Where is the lamp?\nWhat is on the sofa?\n");
  std::size_t fps = 0;
  for (std::size_t at = r.err.find("fingerprint "); at != std::string::npos; at = r.err.find("fingerprint ", at + 1)) ++fps;
  CHECK(fps == 2);
}

TEST_CASE("eval with replay") {
  sp_test::TempDir dir("cli");
  write_questions(dir / "q.jsonl");
  const std::vector<std::string> base{"eval", "--questions", (dir / "q.jsonl").string(), "--scenes-root", scenes_root(),
                                      "--max-frames", "2"};
  auto args = base;
  args.insert(args.end(), {"--out", (dir / "r0.json").string(), "--backend", "echo", "--record",
                           (dir / "rec.jsonl").string(), "--jobs", "1"});
  auto r = run_cli(args);
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.find("EM@1") == 0);

  args = base;
  args.insert(args.end(), {"--out", (dir / "r1.json").string(), "--replay", (dir / "rec.jsonl").string(), "--csv"});
  r = run_cli(args);
  REQUIRE(r.exit_code == 0);
  const auto report = json::parse(sp_test::read_file(dir / "r1.json"));
  CHECK(report.at("aggregates").at("em1") == 0.25);
  CHECK(report.at("aggregates").at("scored") == 4);
  CHECK(r.out.find("\n0.2500,") != std::string::npos);

  // Drop one recording: strict runs fail, lenient runs report partial.
  std::string rec = sp_test::read_file(dir / "rec.jsonl");
  rec = rec.substr(rec.find('\n') + 1);
  sp_test::write_file(dir / "short.jsonl", rec);
  args = base;
  args.insert(args.end(), {"--out", (dir / "r2.json").string(), "--replay", (dir / "short.jsonl").string()});
  r = run_cli(args);
  CHECK(r.exit_code == 0);
  CHECK(json::parse(sp_test::read_file(dir / "r2.json")).at("partial") == true);
  args.push_back("--strict");
  CHECK(run_cli(args).exit_code == 4);
}

TEST_CASE("inspect summarizes a scene") {
  const auto r = run_cli({"inspect", "--scene", fixture("scenes/sofa_room/scene.json")});
  REQUIRE(r.exit_code == 0);
  const auto j = json::parse(r.out);
  CHECK(j.at("scene_id") == "sofa_room");
  CHECK(j.at("frames").size() == j.at("frame_count").get<std::size_t>());
}
