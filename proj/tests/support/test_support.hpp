#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spatial_prompt/embeddings.hpp"
#include "spatial_prompt/features.hpp"
#include "spatial_prompt/selection_config.hpp"
#include "spatial_prompt/selector.hpp"

namespace sp_test {

std::filesystem::path fixture_dir();
std::filesystem::path cli_path();

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

struct CommandResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

// Runs the CLI with the given arguments (each shell-quoted). `stdin_text` is
// fed on standard input.
CommandResult run_cli(const std::vector<std::string>& args, const std::string& stdin_text = "",
                      const std::vector<std::pair<std::string, std::string>>& env = {});

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& text);

// Random symmetric positive definite matrix with eigenvalues in [lo, hi].
Eigen::Matrix3d random_spd(std::mt19937_64& rng, double lo, double hi);
Eigen::Matrix3d random_rotation(std::mt19937_64& rng);

struct SelectionInstance {
  std::vector<spatial_prompt::FrameFeatures> features;  // timestamp order
  spatial_prompt::EmbeddingMatrix store;
  spatial_prompt::SelectionConfig config;
};

// Random selector input with N in [2, max_frames]: shuffled frame ids, some
// degenerate frames, near-singular covariances, duplicated embeddings and
// repeated qualities so that ties occur.
SelectionInstance random_instance(std::mt19937_64& rng, std::size_t max_frames);

// Greedy closest-pair pruning written the slow way: every step rescans all
// surviving pairs and solves with an explicit inverse.
std::vector<std::int64_t> naive_select(const SelectionInstance& instance);

}  // namespace sp_test
