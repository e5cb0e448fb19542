#include "spatial_prompt/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <map>

#include "spatial_prompt/error.hpp"

namespace spatial_prompt {

namespace {

void require_references(std::span<const std::string> references) {
  if (references.empty()) throw Error(ErrorKind::InvalidArgument, "at least one reference answer is required");
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

using NgramCounts = std::map<std::vector<std::string>, int>;

NgramCounts ngrams(const std::vector<std::string>& tokens, int order) {
  NgramCounts counts;
  const auto k = static_cast<std::size_t>(order);
  for (std::size_t i = 0; i + k <= tokens.size(); ++i) {
    ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                      tokens.begin() + static_cast<std::ptrdiff_t>(i + k))];
  }
  return counts;
}

}  // namespace

std::string normalize_answer(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  const std::string norm = normalize_answer(text);
  std::size_t start = 0;
  while (start < norm.size()) {
    const std::size_t end = norm.find(' ', start);
    tokens.push_back(norm.substr(start, end == std::string::npos ? std::string::npos : end - start));
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return tokens;
}

int em_at_1(std::string_view prediction, std::span<const std::string> references) {
  require_references(references);
  const std::string pred = normalize_answer(prediction);
  for (const auto& r : references) {
    if (normalize_answer(r) == pred) return 1;
  }
  return 0;
}

double rouge_l(std::string_view prediction, std::span<const std::string> references) {
  require_references(references);
  const auto pred = tokenize(prediction);
  double best = 0.0;
  for (const auto& r : references) {
    const auto ref = tokenize(r);
    if (pred.empty() || ref.empty()) continue;
    const double lcs = static_cast<double>(lcs_length(pred, ref));
    const double precision = lcs / static_cast<double>(pred.size());
    const double recall = lcs / static_cast<double>(ref.size());
    if (precision == 0.0 && recall == 0.0) continue;
    const double b2 = kRougeBeta * kRougeBeta;
    best = std::max(best, (1.0 + b2) * precision * recall / (recall + b2 * precision));
  }
  return best;
}

double bleu_n(std::string_view prediction, std::span<const std::string> references, int n) {
  require_references(references);
  if (n < 1 || n > 4) throw Error(ErrorKind::InvalidArgument, "BLEU order must be in 1..4");
  if (em_at_1(prediction, references) == 1) return 1.0;

  const auto pred = tokenize(prediction);
  if (pred.empty()) return 0.0;
  std::vector<std::vector<std::string>> refs;
  for (const auto& r : references) refs.push_back(tokenize(r));

  double log_sum = 0.0;
  for (int order = 1; order <= n; ++order) {
    const NgramCounts cand = ngrams(pred, order);
    int total = 0;
    int clipped = 0;
    for (const auto& [gram, count] : cand) {
      int max_ref = 0;
      for (const auto& ref : refs) {
        const NgramCounts rc = ngrams(ref, order);
        auto it = rc.find(gram);
        if (it != rc.end()) max_ref = std::max(max_ref, it->second);
      }
      clipped += std::min(count, max_ref);
      total += count;
    }
    if (total == 0 || clipped == 0) return 0.0;
    log_sum += std::log(static_cast<double>(clipped) / static_cast<double>(total));
  }

  // Closest reference length; ties go to the shorter reference.
  const auto c = static_cast<long>(pred.size());
  long r = static_cast<long>(refs.front().size());
  for (const auto& ref : refs) {
    const long len = static_cast<long>(ref.size());
    if (std::labs(len - c) < std::labs(r - c) || (std::labs(len - c) == std::labs(r - c) && len < r)) r = len;
  }
  const double bp = c < r ? std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c)) : 1.0;
  return bp * std::exp(log_sum / n);
}

ItemScores score_item(std::string_view prediction, std::span<const std::string> references) {
  ItemScores s;
  s.em = em_at_1(prediction, references);
  for (int k = 1; k <= 4; ++k) s.bleu[static_cast<std::size_t>(k - 1)] = bleu_n(prediction, references, k);
  s.rouge_l = rouge_l(prediction, references);
  return s;
}

}  // namespace spatial_prompt
