#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "spatial_prompt/scene.hpp"

namespace spatial_prompt {

// Per-frame vision-language embeddings, one row per frame id. Read-only after
// construction.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  // Throws NonFiniteEmbedding / HeaderMismatch on bad rows or duplicate ids.
  EmbeddingMatrix(std::vector<std::int64_t> frame_ids, Eigen::MatrixXd data, std::string model_tag);

  std::size_t dim() const { return static_cast<std::size_t>(data_.cols()); }
  std::size_t count() const { return frame_ids_.size(); }
  const std::vector<std::int64_t>& frame_ids() const { return frame_ids_; }
  const Eigen::MatrixXd& data() const { return data_; }
  const std::string& model_tag() const { return model_tag_; }

  bool contains(std::int64_t frame_id) const { return index_.count(frame_id) != 0; }
  // Throws UnknownFrame.
  std::size_t row_of(std::int64_t frame_id) const;

  // Cosine similarity; symmetric bit-for-bit because arguments are put in
  // (min, max) order before evaluation.
  double cosine_similarity(std::int64_t i, std::int64_t j) const;

 private:
  std::vector<std::int64_t> frame_ids_;
  Eigen::MatrixXd data_;
  Eigen::VectorXd norms_;
  std::string model_tag_;
  std::unordered_map<std::int64_t, std::size_t> index_;
};

// `header_path` names embeddings.json; the float payload is the sibling file
// with the same stem and a .bin extension.
EmbeddingMatrix load_embeddings(const std::filesystem::path& header_path, const SceneManifest& scene);
EmbeddingMatrix load_embeddings(const std::filesystem::path& header_path);

void write_embeddings(const EmbeddingMatrix& store, const std::filesystem::path& header_path);

}  // namespace spatial_prompt
