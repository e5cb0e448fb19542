#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "spatial_prompt/llm_client.hpp"
#include "spatial_prompt/metrics.hpp"
#include "spatial_prompt/prompt.hpp"
#include "spatial_prompt/selection_config.hpp"

namespace spatial_prompt {

enum class Dataset { ScanQA, SQA3D };

Dataset parse_dataset(std::string_view name);
std::string to_string(Dataset dataset);

struct QuestionType {
  std::string id;     // stable key, e.g. "how_many"
  std::string label;  // as shown in the few-shot annotation
};

// Question types in classification/annotation order; "others" is last.
std::span<const QuestionType> question_types(Dataset dataset);

// Returns a QuestionType::id. ScanQA matches case-insensitive prefixes in a
// fixed order; SQA3D looks at the first word of the question only.
std::string classify_question(std::string_view question, Dataset dataset);

struct QaItem {
  std::string question_id;
  std::string scene_id;
  std::optional<std::string> situation;
  std::string question;
  std::vector<std::string> references;
};

QaItem qa_item_from_json(const nlohmann::json& j);
std::vector<QaItem> read_qa_items(const std::filesystem::path& jsonl_path);

inline constexpr std::size_t kAnswerBankSize = 20;

struct AnswerBank {
  Dataset dataset = Dataset::ScanQA;
  // One entry per question type, in question_types() order.
  std::vector<std::pair<std::string, std::vector<std::string>>> answers;

  const std::vector<std::string>& for_type(std::string_view type_id) const;
};

// Counts every trimmed reference answer per question type; ties keep first
// occurrence order.
AnswerBank build_answer_bank(std::span<const QaItem> training_items, Dataset dataset);

// Few-shot annotation listing up to 20 frequent answers per type. Throws
// EmptyBank when no type has any answers.
std::string render_benchmark_annotation(const AnswerBank& bank);

// "Situation: {s}\nQuestion: {q}" when a situation is present.
std::string compose_query(const QaItem& item);

enum class Ablation { None, NoPose, UniformKeyframes, ZeroShotAnnotation };

Ablation parse_ablation(std::string_view name);
std::string to_string(Ablation ablation);

struct SceneLocation {
  std::filesystem::path manifest;
  std::filesystem::path embeddings;
};

using SceneResolver = std::function<SceneLocation(const std::string& scene_id)>;

// {root}/{scene_id}/scene.json and {root}/{scene_id}/embeddings.json.
SceneResolver directory_scene_resolver(std::filesystem::path root);

struct EvalConfig {
  Dataset dataset = Dataset::ScanQA;
  SelectionConfig selection;
  Ablation ablation = Ablation::None;
  // Benchmark annotation; empty falls back to the default annotation.
  std::string annotation;
  std::string role;
  int image_height = kDefaultImageHeight;
  std::string model = "gpt-4o-2024-11-20";
  ChatParams params;
  unsigned jobs = 1;
  std::optional<std::filesystem::path> cache_dir;
  // When set, each scene's prompt (query left empty) is written here as
  // {scene_id}.prompt.json.
  std::optional<std::filesystem::path> prompt_dump_dir;
};

struct ItemRecord {
  std::string question_id;
  std::string scene_id;
  std::string type;
  std::string fingerprint;
  std::string prediction;
  std::optional<ItemScores> scores;  // empty when the item could not be scored
  std::string error;
};

struct Aggregates {
  std::size_t scored = 0;
  double em = 0.0;
  std::array<double, 4> bleu{};
  double rouge_l = 0.0;
};

struct EvalReport {
  Dataset dataset = Dataset::ScanQA;
  std::vector<ItemRecord> items;
  Aggregates overall;
  // Per question type EM accuracy, keyed by type id (types with items only).
  std::map<std::string, double> category_accuracy;
  // Unweighted mean of category accuracies.
  double category_average = 0.0;
  std::size_t excluded = 0;

  bool partial() const { return excluded > 0; }
};

// Recomputes overall and per-category aggregates from item records.
void aggregate(EvalReport& report);

EvalReport run_eval(std::span<const QaItem> items, const SceneResolver& scenes, ChatBackend& backend,
                    const EvalConfig& config);

nlohmann::json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);

// Header and one row; ScanQA columns follow EM@1, ROUGE-L, then BLEU-1..4,
// SQA3D columns are the six categories and their average.
std::string aggregate_table(const EvalReport& report, char separator);

}  // namespace spatial_prompt
