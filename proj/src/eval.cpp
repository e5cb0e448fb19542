#include "spatial_prompt/eval.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <mutex>
#include <sstream>
#include <unordered_map>

#include "spatial_prompt/codec.hpp"
#include "spatial_prompt/embeddings.hpp"
#include "spatial_prompt/error.hpp"
#include "spatial_prompt/features.hpp"
#include "spatial_prompt/parallel.hpp"
#include "spatial_prompt/selector.hpp"

namespace spatial_prompt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<QuestionType> kScanQaTypes = {
    {"where", "Where"},
    {"how_many", "How many"},
    {"what_color", "What color, What is the color"},
    {"what_shape", "What shape, What type, What kind"},
    {"what_is", "What is"},
    {"others", "others"},
};

const std::vector<QuestionType> kSqa3dTypes = {
    {"what", "What"}, {"is", "Is"}, {"how", "How"}, {"can", "Can"}, {"which", "Which"}, {"others", "Others"},
};

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n\f\v");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n\f\v");
  return std::string(s.substr(b, e - b + 1));
}

bool starts_with_any(const std::string& text, std::initializer_list<std::string_view> prefixes) {
  return std::any_of(prefixes.begin(), prefixes.end(), [&](std::string_view p) { return text.starts_with(p); });
}

}  // namespace

Dataset parse_dataset(std::string_view name) {
  const std::string n = lower(name);
  if (n == "scanqa") return Dataset::ScanQA;
  if (n == "sqa3d") return Dataset::SQA3D;
  throw Error(ErrorKind::InvalidArgument, "unknown dataset '" + std::string(name) + "' (expected scanqa|sqa3d)");
}

std::string to_string(Dataset dataset) { return dataset == Dataset::ScanQA ? "scanqa" : "sqa3d"; }

std::span<const QuestionType> question_types(Dataset dataset) {
  return dataset == Dataset::ScanQA ? std::span<const QuestionType>(kScanQaTypes)
                                    : std::span<const QuestionType>(kSqa3dTypes);
}

std::string classify_question(std::string_view question, Dataset dataset) {
  const std::string q = lower(trim(question));
  if (dataset == Dataset::ScanQA) {
    if (q.starts_with("where")) return "where";
    if (q.starts_with("how many")) return "how_many";
    if (starts_with_any(q, {"what color", "what is the color"})) return "what_color";
    if (starts_with_any(q, {"what shape", "what type", "what kind"})) return "what_shape";
    if (q.starts_with("what is")) return "what_is";
    return "others";
  }
  std::size_t end = 0;
  while (end < q.size() && std::isalpha(static_cast<unsigned char>(q[end]))) ++end;
  const std::string first = q.substr(0, end);
  for (const auto& t : kSqa3dTypes) {
    if (t.id != "others" && first == t.id) return t.id;
  }
  return "others";
}

QaItem qa_item_from_json(const json& j) {
  QaItem item;
  item.question_id = j.at("question_id").is_string() ? j.at("question_id").get<std::string>()
                                                     : j.at("question_id").dump();
  item.scene_id = j.at("scene_id").get<std::string>();
  if (j.contains("situation") && !j.at("situation").is_null()) item.situation = j.at("situation").get<std::string>();
  item.question = j.at("question").get<std::string>();
  item.references = j.at("answers").get<std::vector<std::string>>();
  if (item.references.empty()) {
    throw Error(ErrorKind::InvalidArgument, "question " + item.question_id + " has no reference answers");
  }
  return item;
}

std::vector<QaItem> read_qa_items(const fs::path& jsonl_path) {
  std::ifstream in(jsonl_path);
  if (!in) throw Error(ErrorKind::MissingFile, "cannot open " + jsonl_path.string());
  std::vector<QaItem> items;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      items.push_back(qa_item_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::InvalidArgument, jsonl_path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return items;
}

const std::vector<std::string>& AnswerBank::for_type(std::string_view type_id) const {
  for (const auto& [id, list] : answers) {
    if (id == type_id) return list;
  }
  throw Error(ErrorKind::InvalidArgument, "unknown question type '" + std::string(type_id) + "'");
}

AnswerBank build_answer_bank(std::span<const QaItem> training_items, Dataset dataset) {
  if (training_items.empty()) throw Error(ErrorKind::EmptyInput, "no training items for the answer bank");
  struct Tally {
    std::size_t count = 0;
    std::size_t first_seen = 0;
  };
  std::map<std::string, std::unordered_map<std::string, Tally>> tallies;
  std::size_t seen = 0;
  for (const auto& item : training_items) {
    auto& table = tallies[classify_question(item.question, dataset)];
    for (const auto& raw : item.references) {
      std::string answer = trim(raw);
      if (answer.empty()) continue;
      auto [it, inserted] = table.try_emplace(std::move(answer), Tally{0, seen});
      ++it->second.count;
      ++seen;
    }
  }

  AnswerBank bank;
  bank.dataset = dataset;
  for (const auto& type : question_types(dataset)) {
    std::vector<std::pair<std::string, Tally>> ranked;
    if (auto it = tallies.find(type.id); it != tallies.end()) ranked.assign(it->second.begin(), it->second.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.second.count != b.second.count) return a.second.count > b.second.count;
      return a.second.first_seen < b.second.first_seen;
    });
    if (ranked.size() > kAnswerBankSize) ranked.resize(kAnswerBankSize);
    std::vector<std::string> list;
    for (auto& [answer, tally] : ranked) list.push_back(answer);
    bank.answers.emplace_back(type.id, std::move(list));
  }
  return bank;
}

std::string render_benchmark_annotation(const AnswerBank& bank) {
  std::string out = bank.dataset == Dataset::ScanQA
                        ? "Note that the answer for the question is as short as possible such as:"
                        : "Note that the answer for the question based on the situation is as short as possible such as:";
  bool any = false;
  const auto types = question_types(bank.dataset);
  for (const auto& [id, list] : bank.answers) {
    if (list.empty()) continue;
    any = true;
    const auto type = std::find_if(types.begin(), types.end(), [&](const QuestionType& t) { return t.id == id; });
    out += "\n\nIf question is start with " + (type != types.end() ? type->label : id) + "\nExample of answers:";
    for (const auto& a : list) out += " " + a + ",";
  }
  if (!any) throw Error(ErrorKind::EmptyBank, "answer bank has no entries");
  return out;
}

std::string compose_query(const QaItem& item) {
  if (item.situation && !item.situation->empty()) {
    return "Situation: " + *item.situation + "\nQuestion: " + item.question;
  }
  return item.question;
}

Ablation parse_ablation(std::string_view name) {
  if (name.empty() || name == "none") return Ablation::None;
  if (name == "no-pose") return Ablation::NoPose;
  if (name == "uniform-kf") return Ablation::UniformKeyframes;
  if (name == "zero-shot-annotation") return Ablation::ZeroShotAnnotation;
  throw Error(ErrorKind::InvalidArgument, "unknown ablation '" + std::string(name) + "'");
}

std::string to_string(Ablation ablation) {
  switch (ablation) {
    case Ablation::None: return "none";
    case Ablation::NoPose: return "no-pose";
    case Ablation::UniformKeyframes: return "uniform-kf";
    case Ablation::ZeroShotAnnotation: return "zero-shot-annotation";
  }
  return "none";
}

SceneResolver directory_scene_resolver(fs::path root) {
  return [root = std::move(root)](const std::string& scene_id) {
    return SceneLocation{root / scene_id / "scene.json", root / scene_id / "embeddings.json"};
  };
}

namespace {

struct PreparedScene {
  PromptBundle base;  // query left empty
};

std::vector<std::int64_t> select_for_scene(const SceneManifest& scene, const SceneLocation& where,
                                           const EvalConfig& config) {
  std::optional<fs::path> cache_file;
  if (config.cache_dir) {
    json key = to_json(config.selection);
    key["ablation"] = to_string(config.ablation);
    cache_file = *config.cache_dir / (scene.scene_id + "." + sha256_hex(key.dump()).substr(0, 16) + ".keyframes.json");
    if (fs::exists(*cache_file)) return read_keyframes(*cache_file).result.kept;
  }

  SelectionResult result;
  if (config.ablation == Ablation::UniformKeyframes) {
    std::vector<std::int64_t> ids;
    for (const auto& f : scene.frames) ids.push_back(f.frame_id);
    result.kept = uniform_selection(ids, config.selection.n_max);
  } else {
    const EmbeddingMatrix store = load_embeddings(where.embeddings, scene);
    const auto features = compute_scene_features(scene, config.selection, config.jobs);
    result = select_keyframes(features, store, config.selection, config.jobs);
  }
  if (cache_file) {
    fs::create_directories(cache_file->parent_path());
    std::ofstream out(*cache_file);
    out << keyframes_to_json(scene.scene_id, config.selection, result, false).dump(2) << '\n';
  }
  return result.kept;
}

}  // namespace

void aggregate(EvalReport& report) {
  report.overall = {};
  report.excluded = 0;
  report.category_accuracy.clear();
  std::map<std::string, std::pair<double, std::size_t>> per_type;
  for (const auto& item : report.items) {
    if (!item.scores) {
      ++report.excluded;
      continue;
    }
    const ItemScores& s = *item.scores;
    ++report.overall.scored;
    report.overall.em += s.em;
    for (std::size_t k = 0; k < 4; ++k) report.overall.bleu[k] += s.bleu[k];
    report.overall.rouge_l += s.rouge_l;
    auto& [sum, count] = per_type[item.type];
    sum += s.em;
    ++count;
  }
  if (report.overall.scored > 0) {
    const double n = static_cast<double>(report.overall.scored);
    report.overall.em /= n;
    for (auto& b : report.overall.bleu) b /= n;
    report.overall.rouge_l /= n;
  }
  double total = 0.0;
  for (const auto& [type, acc] : per_type) {
    report.category_accuracy[type] = acc.first / static_cast<double>(acc.second);
    total += report.category_accuracy[type];
  }
  report.category_average = per_type.empty() ? 0.0 : total / static_cast<double>(per_type.size());
}

EvalReport run_eval(std::span<const QaItem> items, const SceneResolver& scenes, ChatBackend& backend,
                    const EvalConfig& config) {
  validate(config.selection);
  EvalReport report;
  report.dataset = config.dataset;

  std::map<std::string, PreparedScene> prepared;
  for (const auto& item : items) {
    if (prepared.count(item.scene_id)) continue;
    const SceneLocation where = scenes(item.scene_id);
    const SceneManifest scene = load_manifest(where.manifest);
    const auto kept = select_for_scene(scene, where, config);

    AnnotationSpec annotation;
    if (config.ablation == Ablation::ZeroShotAnnotation) {
      annotation.kind = AnnotationSpec::Kind::ZeroShot;
    } else if (!config.annotation.empty()) {
      annotation = AnnotationSpec::custom(config.annotation);
    }
    PromptOptions options;
    options.role = config.role;
    options.include_pose = config.ablation != Ablation::NoPose;
    options.image_height = config.image_height;
    PreparedScene ps{build_prompt(scene, kept, "?", annotation, options)};
    ps.base.query.clear();
    if (config.prompt_dump_dir) {
      fs::create_directories(*config.prompt_dump_dir);
      std::ofstream out(*config.prompt_dump_dir / (item.scene_id + ".prompt.json"), std::ios::binary);
      out << serialize_bundle(ps.base);
      if (!out) throw Error(ErrorKind::IoError, "cannot write prompt dump for " + item.scene_id);
    }
    prepared.emplace(item.scene_id, std::move(ps));
  }

  report.items.resize(items.size());
  parallel_for(items.size(), config.jobs, [&](std::size_t i) {
    const QaItem& item = items[i];
    ItemRecord& rec = report.items[i];
    rec.question_id = item.question_id;
    rec.scene_id = item.scene_id;
    rec.type = classify_question(item.question, config.dataset);

    PromptBundle bundle = prepared.at(item.scene_id).base;
    bundle.query = compose_query(item);
    const ChatRequest request = to_chat_request(bundle, config.model, config.params);
    rec.fingerprint = fingerprint(request);
    try {
      rec.prediction = backend.send(request).answer_text;
      rec.scores = score_item(rec.prediction, item.references);
    } catch (const Error& e) {
      rec.error = std::string(to_string(e.kind())) + ": " + e.what();
    }
  });
  aggregate(report);
  return report;
}

json report_to_json(const EvalReport& report) {
  json items = json::array();
  for (const auto& r : report.items) {
    json j{{"question_id", r.question_id},
           {"scene_id", r.scene_id},
           {"type", r.type},
           {"fingerprint", r.fingerprint},
           {"prediction", r.prediction}};
    if (r.scores) {
      j["scores"] = {{"em", r.scores->em},
                     {"bleu1", r.scores->bleu[0]},
                     {"bleu2", r.scores->bleu[1]},
                     {"bleu3", r.scores->bleu[2]},
                     {"bleu4", r.scores->bleu[3]},
                     {"rouge_l", r.scores->rouge_l}};
    } else {
      j["error"] = r.error;
    }
    items.push_back(std::move(j));
  }
  json categories = json::object();
  for (const auto& [type, acc] : report.category_accuracy) categories[type] = acc;
  return {{"version", 1},
          {"dataset", to_string(report.dataset)},
          {"partial", report.partial()},
          {"excluded", report.excluded},
          {"aggregates",
           {{"scored", report.overall.scored},
            {"em1", report.overall.em},
            {"bleu1", report.overall.bleu[0]},
            {"bleu2", report.overall.bleu[1]},
            {"bleu3", report.overall.bleu[2]},
            {"bleu4", report.overall.bleu[3]},
            {"rouge_l", report.overall.rouge_l}}},
          {"categories", std::move(categories)},
          {"category_average", report.category_average},
          {"items", std::move(items)}};
}

EvalReport report_from_json(const json& j) {
  EvalReport report;
  try {
    report.dataset = parse_dataset(j.at("dataset").get<std::string>());
    for (const auto& ji : j.at("items")) {
      ItemRecord r;
      r.question_id = ji.at("question_id").get<std::string>();
      r.scene_id = ji.value("scene_id", std::string());
      r.type = ji.at("type").get<std::string>();
      r.fingerprint = ji.value("fingerprint", std::string());
      r.prediction = ji.value("prediction", std::string());
      if (ji.contains("scores")) {
        const json& s = ji.at("scores");
        r.scores = ItemScores{s.at("em").get<double>(),
                              {s.at("bleu1").get<double>(), s.at("bleu2").get<double>(),
                               s.at("bleu3").get<double>(), s.at("bleu4").get<double>()},
                              s.at("rouge_l").get<double>()};
      } else {
        r.error = ji.value("error", std::string());
      }
      report.items.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("eval report: ") + e.what());
  }
  aggregate(report);
  return report;
}

std::string aggregate_table(const EvalReport& report, char separator) {
  std::ostringstream header;
  std::ostringstream row;
  row.setf(std::ios::fixed);
  row.precision(4);
  auto col = [&, first = true](const std::string& name, double value) mutable {
    if (!first) {
      header << separator;
      row << separator;
    }
    first = false;
    header << name;
    row << value;
  };
  if (report.dataset == Dataset::ScanQA) {
    col("EM@1", report.overall.em);
    col("ROUGE-L", report.overall.rouge_l);
    for (int k = 0; k < 4; ++k) col("BLEU-" + std::to_string(k + 1), report.overall.bleu[static_cast<std::size_t>(k)]);
  } else {
    for (const auto& t : kSqa3dTypes) {
      auto it = report.category_accuracy.find(t.id);
      col(t.label, it == report.category_accuracy.end() ? 0.0 : it->second);
    }
    col("Avg.", report.category_average);
    col("EM@1", report.overall.em);
  }
  return header.str() + "\n" + row.str() + "\n";
}

}  // namespace spatial_prompt
