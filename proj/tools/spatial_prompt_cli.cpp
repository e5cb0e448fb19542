// spatial-prompt: keyframe extraction, prompt building, question answering and
// benchmark evaluation over RGB-D scenes.
//
// Exit codes: 0 ok, 1 golden mismatch or internal failure, 2 usage or
// validation error, 3 backend unavailable or replay miss, 4 --strict eval with
// unscored items.

#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "spatial_prompt/embeddings.hpp"
#include "spatial_prompt/error.hpp"
#include "spatial_prompt/eval.hpp"
#include "spatial_prompt/features.hpp"
#include "spatial_prompt/llm_client.hpp"
#include "spatial_prompt/parallel.hpp"
#include "spatial_prompt/prompt.hpp"
#include "spatial_prompt/scene.hpp"
#include "spatial_prompt/selector.hpp"
#include "spatial_prompt/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace spatial_prompt;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitMismatch = 1;
constexpr int kExitUsage = 2;
constexpr int kExitBackend = 3;
constexpr int kExitStrict = 4;

// Everything that shapes a run apart from the input files.
struct CliConfig {
  SelectionConfig selection;
  BackendConfig backend;
  std::string role;
  int image_height = kDefaultImageHeight;
  std::string annotation = "default";  // default | zero-shot | none
  std::string ablation = "none";
  std::string dataset = "scanqa";
  unsigned jobs = default_jobs();
};

json config_to_json(const CliConfig& c) {
  return {{"version", 1},
          {"selection", to_json(c.selection)},
          {"backend",
           {{"kind", c.backend.kind},
            {"replay", c.backend.replay_path.string()},
            {"record", c.backend.record_path ? json(c.backend.record_path->string()) : json(nullptr)},
            {"model", c.backend.model},
            {"base_url", c.backend.base_url},
            {"temperature", c.backend.temperature},
            {"max_output_tokens", c.backend.max_output_tokens},
            {"max_retries", c.backend.max_retries},
            {"max_in_flight", c.backend.max_in_flight}}},
          {"prompt", {{"role", c.role}, {"image_height", c.image_height}, {"annotation", c.annotation}}},
          {"eval", {{"dataset", c.dataset}, {"ablation", c.ablation}}},
          {"jobs", c.jobs}};
}

void reject_unknown_keys(const json& j, const json& known, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorKind::InvalidArgument, where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (key == "api_key") {
      throw Error(ErrorKind::InvalidArgument,
                  std::string("credentials are read only from the environment variable ") + kApiKeyEnv);
    }
    if (!known.contains(key)) throw Error(ErrorKind::InvalidArgument, "unknown config key " + where + "." + key);
    if (value.is_object() && known[key].is_object()) reject_unknown_keys(value, known[key], where + "." + key);
  }
}

CliConfig config_from_json(const json& j) {
  CliConfig c;
  try {
    c.selection = selection_config_from_json(j.at("selection"));
    const json& b = j.at("backend");
    c.backend.kind = b.at("kind").get<std::string>();
    c.backend.replay_path = b.at("replay").get<std::string>();
    // merge_patch drops keys set to null
    if (b.contains("record") && !b.at("record").is_null()) {
      c.backend.record_path = b.at("record").get<std::string>();
    } else {
      c.backend.record_path.reset();
    }
    c.backend.model = b.at("model").get<std::string>();
    c.backend.base_url = b.at("base_url").get<std::string>();
    c.backend.temperature = b.at("temperature").get<double>();
    c.backend.max_output_tokens = b.at("max_output_tokens").get<int>();
    c.backend.max_retries = b.at("max_retries").get<int>();
    c.backend.max_in_flight = b.at("max_in_flight").get<int>();
    c.role = j.at("prompt").at("role").get<std::string>();
    c.image_height = j.at("prompt").at("image_height").get<int>();
    c.annotation = j.at("prompt").at("annotation").get<std::string>();
    c.dataset = j.at("eval").at("dataset").get<std::string>();
    c.ablation = j.at("eval").at("ablation").get<std::string>();
    c.jobs = j.at("jobs").get<unsigned>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("config: ") + e.what());
  }
  return c;
}

// Layers a partial config document over `base`.
CliConfig merge_config(const CliConfig& base, const json& overlay) {
  json merged = config_to_json(base);
  reject_unknown_keys(overlay, merged, "config");
  merged.merge_patch(overlay);
  return config_from_json(merged);
}

CliConfig apply_environment(CliConfig c) {
  auto env = [](const char* name) -> const char* {
    const char* v = std::getenv(name);
    return v != nullptr && *v != '\0' ? v : nullptr;
  };
  if (const char* v = env("SPATIAL_PROMPT_BACKEND")) c.backend.kind = v;
  if (const char* v = env("SPATIAL_PROMPT_REPLAY")) c.backend.replay_path = v;
  if (const char* v = env("SPATIAL_PROMPT_MODEL")) c.backend.model = v;
  if (const char* v = env("SPATIAL_PROMPT_BASE_URL")) c.backend.base_url = v;
  if (const char* v = env("SPATIAL_PROMPT_JOBS")) {
    try {
      c.jobs = static_cast<unsigned>(std::stoul(v));
    } catch (const std::exception&) {
      throw Error(ErrorKind::InvalidArgument, std::string("SPATIAL_PROMPT_JOBS is not a number: ") + v);
    }
  }
  return c;
}

void validate(const CliConfig& c) {
  validate(c.selection);
  if (c.jobs == 0) throw Error(ErrorKind::InvalidArgument, "jobs must be >= 1");
  if (c.image_height < 1) throw Error(ErrorKind::InvalidArgument, "image height must be >= 1");
  if (c.backend.max_in_flight < 1) throw Error(ErrorKind::InvalidArgument, "max_in_flight must be >= 1");
  if (c.annotation != "default" && c.annotation != "zero-shot" && c.annotation != "none") {
    throw Error(ErrorKind::InvalidArgument, "annotation must be default|zero-shot|none");
  }
  parse_ablation(c.ablation);
  parse_dataset(c.dataset);
}

// Flags registered on one subcommand; only flags actually given override the
// lower-precedence layers.
class ConfigFlags {
 public:
  explicit ConfigFlags(CLI::App* app) : app_(app) {
    app_->add_option("--config", config_file_, "JSON config file (as printed by --print-config)");
    app_->add_flag("--print-config", print_config_, "Print the effective config as JSON and exit");
    app_->add_flag("-v,--verbose", verbose_, "Diagnostics on stderr");
    add<unsigned>("--jobs", "Worker threads", [](CliConfig& c, unsigned v) { c.jobs = v; });
  }

  template <class T, class Set>
  void add(const std::string& name, const std::string& description, Set set) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app_->add_option(name, *value, description);
    appliers_.push_back([opt, value, set](CliConfig& c) {
      if (opt->count() > 0) set(c, *value);
    });
  }

  void add_switch(const std::string& name, const std::string& description, std::function<void(CliConfig&)> set) {
    CLI::Option* opt = app_->add_flag(name, description);
    appliers_.push_back([opt, set](CliConfig& c) {
      if (opt->count() > 0) set(c);
    });
  }

  void add_selection() {
    add<double>("--alpha", "Weight of semantic dissimilarity", [](CliConfig& c, double v) { c.selection.alpha = v; });
    add<double>("--beta", "Weight of sharpness in frame quality", [](CliConfig& c, double v) { c.selection.beta = v; });
    add<std::size_t>("--max-frames", "Keyframes to keep", [](CliConfig& c, std::size_t v) { c.selection.n_max = v; });
    add<double>("--ridge", "Ridge factor for ill-conditioned covariances",
                [](CliConfig& c, double v) { c.selection.ridge_epsilon = v; });
    add<std::size_t>("--max-points", "Per-frame point budget",
                     [](CliConfig& c, std::size_t v) { c.selection.max_points = v; });
    add_switch("--normalize-quality", "Z-score spread and sharpness before mixing",
               [](CliConfig& c) { c.selection.normalize_quality = true; });
  }

  void add_prompt() {
    add<std::string>("--role", "Sentence placed before the preamble", [](CliConfig& c, std::string v) { c.role = v; });
    add<int>("--image-height", "Resize keyframes to this height", [](CliConfig& c, int v) { c.image_height = v; });
    add<std::string>("--annotation", "default|zero-shot|none", [](CliConfig& c, std::string v) { c.annotation = v; });
  }

  void add_ablation() {
    add<std::string>("--ablation", "none|no-pose|uniform-kf|zero-shot-annotation",
                     [](CliConfig& c, std::string v) { c.ablation = v; });
  }

  void add_backend() {
    add<std::string>("--backend", "replay|http|echo", [](CliConfig& c, std::string v) { c.backend.kind = v; });
    add<std::string>("--replay", "Replay JSONL file", [](CliConfig& c, std::string v) { c.backend.replay_path = v; });
    add<std::string>("--record", "Append answered requests to this JSONL file",
                     [](CliConfig& c, std::string v) { c.backend.record_path = fs::path(v); });
    add<std::string>("--model", "Model tag", [](CliConfig& c, std::string v) { c.backend.model = v; });
    add<std::string>("--base-url", "OpenAI-compatible endpoint", [](CliConfig& c, std::string v) { c.backend.base_url = v; });
    add<double>("--temperature", "Sampling temperature", [](CliConfig& c, double v) { c.backend.temperature = v; });
    add<int>("--max-tokens", "Max output tokens", [](CliConfig& c, int v) { c.backend.max_output_tokens = v; });
    add<int>("--max-retries", "HTTP retries", [](CliConfig& c, int v) { c.backend.max_retries = v; });
    add<int>("--max-in-flight", "Concurrent requests", [](CliConfig& c, int v) { c.backend.max_in_flight = v; });
  }

  void add_dataset() {
    add<std::string>("--dataset", "scanqa|sqa3d", [](CliConfig& c, std::string v) { c.dataset = v; });
  }

  // Defaults, then config file, then environment, then flags.
  CliConfig resolve() const {
    CliConfig c;
    if (!config_file_.empty()) {
      std::ifstream in(config_file_);
      if (!in) throw Error(ErrorKind::MissingFile, "cannot open config " + config_file_);
      json doc;
      try {
        doc = json::parse(in);
      } catch (const json::exception& e) {
        throw Error(ErrorKind::InvalidArgument, config_file_ + ": " + e.what());
      }
      c = merge_config(c, doc);
    }
    c = apply_environment(std::move(c));
    for (const auto& apply : appliers_) apply(c);
    validate(c);
    if (verbose_) std::cerr << "effective config: " << config_to_json(c).dump() << '\n';
    return c;
  }

  bool print_config() const { return print_config_; }
  bool verbose() const { return verbose_; }

 private:
  CLI::App* app_;
  std::string config_file_;
  bool print_config_ = false;
  bool verbose_ = false;
  std::vector<std::function<void(CliConfig&)>> appliers_;
};

void write_output(const std::string& text, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << text;
    std::cout.flush();
    return;
  }
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::MissingFile, "cannot open " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path embeddings_path_for(const std::string& scene_path, const std::string& given) {
  if (!given.empty()) return given;
  return fs::path(scene_path).parent_path() / "embeddings.json";
}

SceneManifest decimate(SceneManifest scene, std::size_t every) {
  if (every <= 1) return scene;
  std::vector<FrameRecord> kept;
  for (std::size_t i = 0; i < scene.frames.size(); i += every) kept.push_back(scene.frames[i]);
  scene.frames = std::move(kept);
  return scene;
}

SelectionResult run_selection(const SceneManifest& scene, const fs::path& embeddings, const CliConfig& cfg,
                              bool decimated) {
  if (parse_ablation(cfg.ablation) == Ablation::UniformKeyframes) {
    std::vector<std::int64_t> ids;
    for (const auto& f : scene.frames) ids.push_back(f.frame_id);
    return {uniform_selection(ids, cfg.selection.n_max), {}, 0};
  }
  if (scene.frames.size() > kMaxSelectableFrames) {
    throw Error(ErrorKind::InvalidArgument, std::to_string(scene.frames.size()) + " frames exceed " +
                                                std::to_string(kMaxSelectableFrames) + "; pass --decimate K");
  }
  // A decimated scene legitimately leaves rows of the store unused.
  const EmbeddingMatrix store = decimated ? load_embeddings(embeddings) : load_embeddings(embeddings, scene);
  const auto features = compute_scene_features(scene, cfg.selection, cfg.jobs);
  return select_keyframes(features, store, cfg.selection, cfg.jobs);
}

AnnotationSpec annotation_for(const CliConfig& cfg, const std::string& annotation_file) {
  if (parse_ablation(cfg.ablation) == Ablation::ZeroShotAnnotation) return {AnnotationSpec::Kind::ZeroShot, {}};
  if (!annotation_file.empty()) return AnnotationSpec::custom(read_text(annotation_file));
  if (cfg.annotation == "zero-shot") return {AnnotationSpec::Kind::ZeroShot, {}};
  if (cfg.annotation == "none") return {AnnotationSpec::Kind::None, {}};
  return {};
}

PromptOptions prompt_options_for(const CliConfig& cfg, bool no_pose) {
  PromptOptions options;
  options.role = cfg.role;
  options.include_pose = !no_pose && parse_ablation(cfg.ablation) != Ablation::NoPose;
  options.image_height = cfg.image_height;
  return options;
}

std::vector<std::int64_t> kept_from_file(const std::string& path, const SceneManifest& scene) {
  const KeyframesFile kf = read_keyframes(path);
  if (kf.scene_id != scene.scene_id) {
    throw Error(ErrorKind::InvalidArgument,
                "keyframes belong to scene '" + kf.scene_id + "', not '" + scene.scene_id + "'");
  }
  return kf.result.kept;
}

// Returns the byte offset of the first difference, or npos.
std::size_t first_difference(const std::string& a, const std::string& b) {
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (a[i] != b[i]) return i;
  }
  return a.size() == b.size() ? std::string::npos : n;
}

std::string format_error(const Error& e) { return "error: " + std::string(to_string(e.kind())) + ": " + e.what(); }

int exit_code_for(const Error& e) {
  return e.kind() == ErrorKind::BackendUnavailable || e.kind() == ErrorKind::ReplayMiss ? kExitBackend : kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Keyframe-driven prompt generation for spatial question answering"};
  app.require_subcommand(1);
  int exit_code = kExitOk;
  std::function<int()> run;

  // synth
  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic RGB-D scene with pose-derived embeddings");
  SyntheticSpec spec;
  std::string synth_out, synth_path = "circle", synth_depth = "png16";
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--seed", spec.seed, "Random seed");
  synth->add_option("--frames", spec.frame_count, "Frame count");
  synth->add_option("--path", synth_path, "circle|line|random-walk");
  synth->add_option("--width", spec.width, "Image width");
  synth->add_option("--height", spec.height, "Image height");
  synth->add_option("--focal", spec.focal_px, "Focal length in pixels");
  synth->add_option("--embedding-dim", spec.embedding_dim, "Embedding dimension");
  synth->add_option("--blur-fraction", spec.blur_fraction, "Share of blurred frames");
  synth->add_option("--dropout-fraction", spec.dropout_fraction, "Share of missing depth pixels");
  synth->add_option("--depth-format", synth_depth, "png16|raw16le");
  synth->add_option("--scene-id", spec.scene_id, "Scene id (default synth_<seed>)");
  synth->callback([&] {
    run = [&] {
      spec.path_kind = parse_path_kind(synth_path);
      if (synth_depth == "png16") {
        spec.depth_format = DepthFormat::Png16;
      } else if (synth_depth == "raw16le") {
        spec.depth_format = DepthFormat::Raw16Le;
      } else {
        throw Error(ErrorKind::UnsupportedDepthEncoding, "unknown depth format '" + synth_depth + "'");
      }
      const GeneratedScene g = generate_scene(spec, synth_out);
      const json summary{{"version", 1},
                         {"scene_id", g.manifest.scene_id},
                         {"frames", g.manifest.frames.size()},
                         {"manifest", g.manifest_path.string()},
                         {"embeddings", g.embeddings_path.string()}};
      std::cout << summary.dump(2) << '\n';
      return kExitOk;
    };
  });

  // extract
  CLI::App* extract = app.add_subcommand("extract", "Select keyframes from a scene");
  ConfigFlags extract_flags(extract);
  extract_flags.add_selection();
  extract_flags.add_ablation();
  std::string ex_scene, ex_embeddings, ex_out;
  std::size_t ex_decimate = 1;
  bool ex_log_removals = false;
  extract->add_option("--scene", ex_scene, "scene.json");
  extract->add_option("--embeddings", ex_embeddings, "embeddings.json (default: next to scene.json)");
  extract->add_option("--out", ex_out, "keyframes.json (default stdout)");
  extract->add_option("--decimate", ex_decimate, "Keep every K-th frame before selection")->check(CLI::PositiveNumber);
  extract->add_flag("--log-removals", ex_log_removals, "Include the full removal log");
  extract->callback([&] {
    run = [&] {
      const CliConfig cfg = extract_flags.resolve();
      if (extract_flags.print_config()) {
        std::cout << config_to_json(cfg).dump(2) << '\n';
        return kExitOk;
      }
      if (ex_scene.empty()) throw Error(ErrorKind::InvalidArgument, "--scene is required");
      const SceneManifest scene = decimate(load_manifest(ex_scene), ex_decimate);
      const SelectionResult result =
          run_selection(scene, embeddings_path_for(ex_scene, ex_embeddings), cfg, ex_decimate > 1);
      json out = keyframes_to_json(scene.scene_id, cfg.selection, result, ex_log_removals);
      out["method"] = parse_ablation(cfg.ablation) == Ablation::UniformKeyframes ? "uniform" : "greedy";
      write_output(out.dump(2) + "\n", ex_out);
      if (extract_flags.verbose()) {
        std::cerr << "kept " << result.kept.size() << " of " << scene.frames.size() << " frames\n";
      }
      return kExitOk;
    };
  });

  // prompt
  CLI::App* prompt = app.add_subcommand("prompt", "Build the prompt for a query over selected keyframes");
  ConfigFlags prompt_flags(prompt);
  prompt_flags.add_prompt();
  prompt_flags.add_ablation();
  std::string pr_scene, pr_keyframes, pr_query, pr_annotation_file, pr_out, pr_golden, pr_format = "json";
  bool pr_no_pose = false;
  prompt->add_option("--scene", pr_scene, "scene.json");
  prompt->add_option("--keyframes", pr_keyframes, "keyframes.json from extract");
  prompt->add_option("--query", pr_query, "User question");
  prompt->add_option("--annotation-file", pr_annotation_file, "Use this file's text as the annotation");
  prompt->add_flag("--no-pose", pr_no_pose, "Omit camera pose lines");
  prompt->add_option("--out", pr_out, "Output file (default stdout)");
  prompt->add_option("--golden-check", pr_golden, "Fail unless output matches this file byte for byte");
  prompt->add_option("--format", pr_format, "json|text")->check(CLI::IsMember({"json", "text"}));
  prompt->callback([&] {
    run = [&] {
      const CliConfig cfg = prompt_flags.resolve();
      if (prompt_flags.print_config()) {
        std::cout << config_to_json(cfg).dump(2) << '\n';
        return kExitOk;
      }
      if (pr_scene.empty() || pr_keyframes.empty()) {
        throw Error(ErrorKind::InvalidArgument, "--scene and --keyframes are required");
      }
      if (pr_query.empty()) throw Error(ErrorKind::InvalidArgument, "--query is required");
      if (parse_ablation(cfg.ablation) == Ablation::UniformKeyframes) {
        throw Error(ErrorKind::InvalidArgument, "uniform-kf applies to extract and eval");
      }
      const SceneManifest scene = load_manifest(pr_scene);
      const auto kept = kept_from_file(pr_keyframes, scene);
      const PromptBundle bundle = build_prompt(scene, kept, pr_query, annotation_for(cfg, pr_annotation_file),
                                               prompt_options_for(cfg, pr_no_pose));
      const std::string text = pr_format == "json" ? serialize_bundle(bundle) : render_text(bundle);
      if (!pr_golden.empty()) {
        const std::string golden = read_text(pr_golden);
        const std::size_t at = first_difference(text, golden);
        if (at != std::string::npos) {
          std::cerr << "error: GoldenMismatch: output differs from " << pr_golden << " at byte " << at << '\n';
          return kExitMismatch;
        }
        if (prompt_flags.verbose()) std::cerr << "matches " << pr_golden << '\n';
        if (pr_out.empty()) return kExitOk;
      }
      write_output(text, pr_out);
      return kExitOk;
    };
  });

  // ask
  CLI::App* ask = app.add_subcommand("ask", "Answer a question (or a stream of them) about a scene");
  ConfigFlags ask_flags(ask);
  ask_flags.add_selection();
  ask_flags.add_prompt();
  ask_flags.add_ablation();
  ask_flags.add_backend();
  std::string ak_scene, ak_embeddings, ak_keyframes, ak_query, ak_annotation_file;
  bool ak_interactive = false, ak_no_pose = false;
  ask->add_option("--scene", ak_scene, "scene.json");
  ask->add_option("--embeddings", ak_embeddings, "embeddings.json (default: next to scene.json)");
  ask->add_option("--keyframes", ak_keyframes, "Reuse a keyframes.json instead of selecting");
  ask->add_option("--query", ak_query, "User question");
  ask->add_option("--annotation-file", ak_annotation_file, "Use this file's text as the annotation");
  ask->add_flag("--no-pose", ak_no_pose, "Omit camera pose lines");
  ask->add_flag("--interactive", ak_interactive, "Read one question per line from stdin until EOF");
  ask->callback([&] {
    run = [&] {
      const CliConfig cfg = ask_flags.resolve();
      if (ask_flags.print_config()) {
        std::cout << config_to_json(cfg).dump(2) << '\n';
        return kExitOk;
      }
      if (ak_scene.empty()) throw Error(ErrorKind::InvalidArgument, "--scene is required");
      if (!ak_interactive && ak_query.empty()) throw Error(ErrorKind::InvalidArgument, "--query is required");
      auto backend = make_backend(cfg.backend);
      const SceneManifest scene = load_manifest(ak_scene);
      const auto kept = ak_keyframes.empty()
                            ? run_selection(scene, embeddings_path_for(ak_scene, ak_embeddings), cfg, false).kept
                            : kept_from_file(ak_keyframes, scene);
      PromptBundle base = build_prompt(scene, kept, "?", annotation_for(cfg, ak_annotation_file),
                                       prompt_options_for(cfg, ak_no_pose));
      const ChatParams params{cfg.backend.temperature, cfg.backend.max_output_tokens};

      auto answer = [&](const std::string& query) {
        PromptBundle bundle = base;
        bundle.query = query;
        const ChatRequest request = to_chat_request(bundle, cfg.backend.model, params);
        if (ask_flags.verbose()) std::cerr << "fingerprint " << fingerprint(request) << '\n';
        const ChatResponse response = backend->send(request);
        std::cout << response.answer_text << '\n';
        std::cout.flush();
      };

      if (!ak_interactive) {
        answer(ak_query);
        return kExitOk;
      }
      int status = kExitOk;
      if (!ak_query.empty()) answer(ak_query);
      std::string line;
      while (std::getline(std::cin, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
          answer(line);
        } catch (const Error& e) {
          std::cerr << format_error(e) << '\n';
          status = exit_code_for(e);
        }
      }
      return status;
    };
  });

  // eval
  CLI::App* eval = app.add_subcommand("eval", "Run a question set through the pipeline and score the answers");
  ConfigFlags eval_flags(eval);
  eval_flags.add_selection();
  eval_flags.add_prompt();
  eval_flags.add_ablation();
  eval_flags.add_backend();
  eval_flags.add_dataset();
  std::string ev_questions, ev_scenes_root, ev_train, ev_annotation_file, ev_out, ev_cache, ev_dump;
  bool ev_strict = false, ev_csv = false;
  eval->add_option("--questions", ev_questions, "Questions JSONL");
  eval->add_option("--scenes-root", ev_scenes_root, "Directory holding <scene_id>/scene.json");
  eval->add_option("--train", ev_train, "Training JSONL for the few-shot answer bank");
  eval->add_option("--annotation-file", ev_annotation_file, "Use this file's text as the annotation");
  eval->add_option("--out", ev_out, "Report JSON path");
  eval->add_option("--cache-dir", ev_cache, "Cache selected keyframes here");
  eval->add_option("--dump-prompts", ev_dump, "Write each scene's prompt here");
  eval->add_flag("--strict", ev_strict, "Exit 4 when any item is unscored");
  eval->add_flag("--csv", ev_csv, "Comma-separated aggregate row");
  eval->callback([&] {
    run = [&] {
      const CliConfig cfg = eval_flags.resolve();
      if (eval_flags.print_config()) {
        std::cout << config_to_json(cfg).dump(2) << '\n';
        return kExitOk;
      }
      if (ev_questions.empty() || ev_scenes_root.empty() || ev_out.empty()) {
        throw Error(ErrorKind::InvalidArgument, "--questions, --scenes-root and --out are required");
      }
      if (!ev_train.empty() && !ev_annotation_file.empty()) {
        throw Error(ErrorKind::InvalidArgument, "--train and --annotation-file are mutually exclusive");
      }
      EvalConfig ec;
      ec.dataset = parse_dataset(cfg.dataset);
      ec.selection = cfg.selection;
      ec.ablation = parse_ablation(cfg.ablation);
      ec.role = cfg.role;
      ec.image_height = cfg.image_height;
      ec.model = cfg.backend.model;
      ec.params = {cfg.backend.temperature, cfg.backend.max_output_tokens};
      ec.jobs = cfg.jobs;
      if (!ev_cache.empty()) ec.cache_dir = fs::path(ev_cache);
      if (!ev_dump.empty()) ec.prompt_dump_dir = fs::path(ev_dump);
      if (!ev_train.empty()) {
        const auto training = read_qa_items(ev_train);
        ec.annotation = render_benchmark_annotation(build_answer_bank(training, ec.dataset));
      } else if (!ev_annotation_file.empty()) {
        ec.annotation = read_text(ev_annotation_file);
      } else if (cfg.annotation == "zero-shot") {
        ec.annotation = std::string(kZeroShotAnnotation);
      } else if (cfg.annotation == "none") {
        throw Error(ErrorKind::InvalidArgument, "eval always carries an annotation; use default or zero-shot");
      }

      const auto items = read_qa_items(ev_questions);
      auto backend = make_backend(cfg.backend);
      const EvalReport report = run_eval(items, directory_scene_resolver(ev_scenes_root), *backend, ec);
      write_output(report_to_json(report).dump(2) + "\n", ev_out);
      std::cout << aggregate_table(report, ev_csv ? ',' : '\t');
      std::cout.flush();
      if (report.partial()) {
        std::cerr << report.excluded << " of " << report.items.size() << " items unscored\n";
        for (const auto& item : report.items) {
          if (!item.scores) std::cerr << "  " << item.question_id << ": " << item.error << '\n';
        }
        if (ev_strict) return kExitStrict;
      }
      return kExitOk;
    };
  });

  // inspect
  CLI::App* inspect = app.add_subcommand("inspect", "Report per-frame statistics for a scene");
  ConfigFlags inspect_flags(inspect);
  inspect_flags.add_selection();
  std::string in_scene, in_embeddings;
  inspect->add_option("--scene", in_scene, "scene.json");
  inspect->add_option("--embeddings", in_embeddings, "embeddings.json (default: next to scene.json)");
  inspect->callback([&] {
    run = [&] {
      const CliConfig cfg = inspect_flags.resolve();
      if (inspect_flags.print_config()) {
        std::cout << config_to_json(cfg).dump(2) << '\n';
        return kExitOk;
      }
      if (in_scene.empty()) throw Error(ErrorKind::InvalidArgument, "--scene is required");
      const SceneManifest scene = load_manifest(in_scene);
      const auto features = compute_scene_features(scene, cfg.selection, cfg.jobs);
      json frames = json::array();
      std::size_t degenerate = 0;
      for (std::size_t i = 0; i < features.size(); ++i) {
        const FrameFeatures& f = features[i];
        degenerate += f.stats.degenerate ? 1 : 0;
        frames.push_back({{"frame_id", f.frame_id},
                          {"timestamp", scene.frames[i].timestamp},
                          {"sampled_points", f.stats.point_count},
                          {"spread", f.stats.spread},
                          {"sharpness", f.sharpness},
                          {"quality", std::isfinite(f.quality) ? json(f.quality) : json(nullptr)},
                          {"degenerate", f.stats.degenerate}});
      }
      const auto& k = scene.intrinsics;
      json report{{"version", 1},
                  {"scene_id", scene.scene_id},
                  {"frame_count", scene.frames.size()},
                  {"degenerate_frames", degenerate},
                  {"depth_format", to_string(scene.depth_format)},
                  {"intrinsics", {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy},
                                  {"width", k.width}, {"height", k.height}, {"depth_scale", k.depth_scale}}},
                  {"duration_s", scene.frames.empty() ? 0.0
                                                      : scene.frames.back().timestamp - scene.frames.front().timestamp},
                  {"frames", frames}};
      const fs::path emb = embeddings_path_for(in_scene, in_embeddings);
      if (fs::exists(emb)) {
        const EmbeddingMatrix store = load_embeddings(emb, scene);
        report["embeddings"] = {{"dim", store.dim()}, {"model_tag", store.model_tag()}};
      }
      std::cout << report.dump(2) << '\n';
      return kExitOk;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) return app.exit(e);
    std::cerr << "error: Usage: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << format_error(e) << '\n';
    return exit_code_for(e);
  }

  try {
    exit_code = run ? run() : kExitUsage;
  } catch (const Error& e) {
    std::cerr << format_error(e) << '\n';
    return exit_code_for(e);
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: IoError: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: Internal: " << e.what() << '\n';
    return kExitMismatch;
  }
  return exit_code;
}
