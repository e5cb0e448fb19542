#include "spatial_prompt/selector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "spatial_prompt/error.hpp"
#include "spatial_prompt/parallel.hpp"

namespace spatial_prompt {

using nlohmann::json;

double mahalanobis(const PointCloudStats& a, const PointCloudStats& b, double ridge) {
  if (a.degenerate || b.degenerate) {
    throw Error(ErrorKind::DegenerateStats, "mahalanobis distance needs non-degenerate point statistics");
  }
  Eigen::Matrix3d pooled = 0.5 * (a.covariance + b.covariance);
  const Eigen::Vector3d delta = a.mean - b.mean;

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(pooled, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  const bool ill_conditioned = !(lo > 0.0) || hi / lo > kRidgeConditionThreshold;
  if (ill_conditioned) {
    const double mean_trace = 0.5 * (a.covariance.trace() + b.covariance.trace());
    const double scale = mean_trace > 0.0 ? mean_trace / 3.0 : 1.0;
    pooled.diagonal().array() += ridge * scale;
  }
  const Eigen::Vector3d x = pooled.ldlt().solve(delta);
  return delta.dot(x);
}

double spatial_distance(const FrameFeatures& a, const FrameFeatures& b, double ridge) {
  if (a.stats.degenerate || b.stats.degenerate) return 0.0;
  return mahalanobis(a.stats, b.stats, ridge);
}

namespace {

// Positions index frames sorted by frame_id, so comparing (d, a, b) orders
// exact ties lexicographically by frame id.
struct PairEntry {
  double d_prime;
  std::uint32_t a;
  std::uint32_t b;
};

struct LaterFirst {
  bool operator()(const PairEntry& x, const PairEntry& y) const {
    if (x.d_prime != y.d_prime) return x.d_prime > y.d_prime;
    if (x.a != y.a) return x.a > y.a;
    return x.b > y.b;
  }
};

}  // namespace

SelectionResult select_keyframes(std::span<const FrameFeatures> features, const EmbeddingMatrix& store,
                                 const SelectionConfig& config, unsigned jobs) {
  validate(config);
  if (features.empty()) throw Error(ErrorKind::EmptyInput, "no frames to select from");
  const std::size_t n = features.size();
  if (n > kMaxSelectableFrames) {
    throw Error(ErrorKind::InvalidArgument, std::to_string(n) + " frames exceed the " +
                                                std::to_string(kMaxSelectableFrames) +
                                                "-frame limit; decimate the trajectory first");
  }
  for (const auto& f : features) store.row_of(f.frame_id);

  SelectionResult result;
  if (n <= config.n_max) {
    for (const auto& f : features) result.kept.push_back(f.frame_id);
    return result;
  }

  std::vector<std::uint32_t> by_id(n);
  std::iota(by_id.begin(), by_id.end(), 0u);
  std::sort(by_id.begin(), by_id.end(),
            [&](std::uint32_t x, std::uint32_t y) { return features[x].frame_id < features[y].frame_id; });

  // Row a of the condensed upper triangle starts at a*n - a*(a+1)/2.
  std::vector<PairEntry> heap(n * (n - 1) / 2);
  parallel_for(n - 1, jobs, [&](std::size_t a) {
    std::size_t k = a * n - a * (a + 1) / 2;
    const FrameFeatures& fa = features[by_id[a]];
    for (std::size_t b = a + 1; b < n; ++b, ++k) {
      const FrameFeatures& fb = features[by_id[b]];
      const double d = spatial_distance(fa, fb, config.ridge_epsilon);
      const double s = store.cosine_similarity(fa.frame_id, fb.frame_id);
      heap[k] = {fused_distance(d, s, config.alpha), static_cast<std::uint32_t>(a),
                 static_cast<std::uint32_t>(b)};
    }
  });
  result.pair_count_evaluated = heap.size();
  std::make_heap(heap.begin(), heap.end(), LaterFirst{});

  std::vector<bool> alive(n, true);
  std::size_t remaining = n;
  while (remaining > config.n_max) {
    std::pop_heap(heap.begin(), heap.end(), LaterFirst{});
    const PairEntry top = heap.back();
    heap.pop_back();
    if (!alive[top.a] || !alive[top.b]) continue;

    const FrameFeatures& fi = features[by_id[top.a]];
    const FrameFeatures& fj = features[by_id[top.b]];
    const bool keep_i = fi.quality > fj.quality;
    const std::uint32_t removed = keep_i ? top.b : top.a;
    alive[removed] = false;
    --remaining;
    result.removal_log.push_back({keep_i ? fj.frame_id : fi.frame_id, keep_i ? fi.frame_id : fj.frame_id,
                                  top.d_prime, result.removal_log.size()});
  }

  std::vector<bool> alive_by_input(n, false);
  for (std::size_t p = 0; p < n; ++p) alive_by_input[by_id[p]] = alive[p];
  for (std::size_t i = 0; i < n; ++i) {
    if (alive_by_input[i]) result.kept.push_back(features[i].frame_id);
  }
  return result;
}

std::vector<std::int64_t> uniform_selection(std::span<const std::int64_t> ids_in_time_order,
                                            std::size_t n_max) {
  if (n_max < 1) throw Error(ErrorKind::InvalidArgument, "n_max must be >= 1");
  const std::size_t n = ids_in_time_order.size();
  if (n <= n_max) return {ids_in_time_order.begin(), ids_in_time_order.end()};
  const std::size_t step = n / n_max;
  std::vector<std::int64_t> kept;
  for (std::size_t k = 0; k < n_max; ++k) kept.push_back(ids_in_time_order[k * step]);
  return kept;
}

json keyframes_to_json(const std::string& scene_id, const SelectionConfig& config,
                       const SelectionResult& result, bool include_removals) {
  json log = json::array();
  if (include_removals) {
    for (const auto& r : result.removal_log) {
      log.push_back({{"removed", r.removed}, {"survivor", r.survivor}, {"d_prime", r.d_prime}, {"step", r.step}});
    }
  }
  return {{"version", 1},
          {"scene_id", scene_id},
          {"config", to_json(config)},
          {"kept", result.kept},
          {"pair_count_evaluated", result.pair_count_evaluated},
          {"removal_log", std::move(log)}};
}

KeyframesFile read_keyframes(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingFile, "cannot open " + path.string());
  KeyframesFile file;
  try {
    const json doc = json::parse(in);
    file.scene_id = doc.at("scene_id").get<std::string>();
    file.config = selection_config_from_json(doc.value("config", json::object()));
    file.result.kept = doc.at("kept").get<std::vector<std::int64_t>>();
    file.result.pair_count_evaluated = doc.value("pair_count_evaluated", std::size_t{0});
    for (const auto& r : doc.value("removal_log", json::array())) {
      file.result.removal_log.push_back({r.at("removed").get<std::int64_t>(), r.at("survivor").get<std::int64_t>(),
                                         r.at("d_prime").get<double>(), r.at("step").get<std::size_t>()});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedManifest, path.string() + ": " + e.what());
  }
  return file;
}

}  // namespace spatial_prompt
