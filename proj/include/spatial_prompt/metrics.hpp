#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace spatial_prompt {

// ROUGE-L recall weight, following the COCO caption evaluation tooling.
inline constexpr double kRougeBeta = 1.2;

// Lowercase (ASCII), trim, collapse internal whitespace runs to one space.
std::string normalize_answer(std::string_view text);

// Lowercased whitespace tokens.
std::vector<std::string> tokenize(std::string_view text);

int em_at_1(std::string_view prediction, std::span<const std::string> references);

// Longest-common-subsequence F-measure, maximized over references.
double rouge_l(std::string_view prediction, std::span<const std::string> references);

// Cumulative BLEU-n (uniform weights over orders 1..n) with per-reference
// max clipping and brevity penalty against the closest reference length.
// Unsmoothed: any zero-precision order gives 0. A prediction that equals a
// reference after normalization scores 1.
double bleu_n(std::string_view prediction, std::span<const std::string> references, int n);

struct ItemScores {
  double em = 0.0;
  std::array<double, 4> bleu{};  // BLEU-1..4
  double rouge_l = 0.0;
};

ItemScores score_item(std::string_view prediction, std::span<const std::string> references);

}  // namespace spatial_prompt
