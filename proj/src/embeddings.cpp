#include "spatial_prompt/embeddings.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "json.hpp"
#include "spatial_prompt/error.hpp"

namespace spatial_prompt {

namespace fs = std::filesystem;
using nlohmann::json;

EmbeddingMatrix::EmbeddingMatrix(std::vector<std::int64_t> frame_ids, Eigen::MatrixXd data,
                                 std::string model_tag)
    : frame_ids_(std::move(frame_ids)), data_(std::move(data)), model_tag_(std::move(model_tag)) {
  if (static_cast<std::size_t>(data_.rows()) != frame_ids_.size()) {
    throw Error(ErrorKind::HeaderMismatch, "embedding rows (" + std::to_string(data_.rows()) +
                                               ") != frame id count (" +
                                               std::to_string(frame_ids_.size()) + ")");
  }
  if (data_.cols() < 1) throw Error(ErrorKind::HeaderMismatch, "embedding dim must be >= 1");
  norms_.resize(data_.rows());
  for (std::size_t r = 0; r < frame_ids_.size(); ++r) {
    const std::int64_t id = frame_ids_[r];
    if (!index_.emplace(id, r).second) {
      throw Error(ErrorKind::HeaderMismatch, "duplicate frame_id " + std::to_string(id));
    }
    const auto row = data_.row(static_cast<Eigen::Index>(r));
    if (!row.allFinite()) {
      throw Error(ErrorKind::NonFiniteEmbedding, "frame " + std::to_string(id) + " has non-finite entries");
    }
    norms_[r] = row.norm();
    if (norms_[r] == 0.0) {
      throw Error(ErrorKind::NonFiniteEmbedding, "frame " + std::to_string(id) + " has an all-zero embedding");
    }
  }
}

std::size_t EmbeddingMatrix::row_of(std::int64_t frame_id) const {
  auto it = index_.find(frame_id);
  if (it == index_.end()) {
    throw Error(ErrorKind::UnknownFrame, "no embedding for frame " + std::to_string(frame_id));
  }
  return it->second;
}

double EmbeddingMatrix::cosine_similarity(std::int64_t i, std::int64_t j) const {
  const std::size_t a = row_of(std::min(i, j));
  const std::size_t b = row_of(std::max(i, j));
  const double dot = data_.row(static_cast<Eigen::Index>(a)).dot(data_.row(static_cast<Eigen::Index>(b)));
  return std::clamp(dot / (norms_[a] * norms_[b]), -1.0, 1.0);
}

namespace {

fs::path payload_path(const fs::path& header_path) {
  fs::path p = header_path;
  p.replace_extension(".bin");
  return p;
}

}  // namespace

EmbeddingMatrix load_embeddings(const fs::path& header_path) {
  std::ifstream hin(header_path);
  if (!hin) throw Error(ErrorKind::MissingFile, "cannot open " + header_path.string());
  std::int64_t dim = 0;
  std::int64_t count = 0;
  std::string model;
  std::vector<std::int64_t> ids;
  try {
    const json header = json::parse(hin);
    dim = header.at("dim").get<std::int64_t>();
    count = header.at("count").get<std::int64_t>();
    model = header.at("model").get<std::string>();
    ids = header.at("frame_ids").get<std::vector<std::int64_t>>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::HeaderMismatch, header_path.string() + ": " + e.what());
  }
  if (dim < 1 || count < 1) throw Error(ErrorKind::HeaderMismatch, "dim and count must be positive");
  if (static_cast<std::int64_t>(ids.size()) != count) {
    throw Error(ErrorKind::HeaderMismatch, "header count " + std::to_string(count) + " but " +
                                               std::to_string(ids.size()) + " frame_ids");
  }

  const fs::path bin = payload_path(header_path);
  std::ifstream in(bin, std::ios::binary);
  if (!in) throw Error(ErrorKind::MissingFile, "cannot open " + bin.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t expected = static_cast<std::size_t>(count) * static_cast<std::size_t>(dim) * 4;
  if (bytes.size() != expected) {
    throw Error(ErrorKind::HeaderMismatch, bin.string() + " holds " + std::to_string(bytes.size()) +
                                               " bytes, header implies " + std::to_string(count) + "x" +
                                               std::to_string(dim) + " floats (" +
                                               std::to_string(expected) + " bytes)");
  }

  Eigen::MatrixXd data(count, dim);
  for (std::int64_t r = 0; r < count; ++r) {
    for (std::int64_t c = 0; c < dim; ++c) {
      const std::size_t off = static_cast<std::size_t>(r * dim + c) * 4;
      const std::uint32_t bits = static_cast<std::uint32_t>(bytes[off]) |
                                 (static_cast<std::uint32_t>(bytes[off + 1]) << 8) |
                                 (static_cast<std::uint32_t>(bytes[off + 2]) << 16) |
                                 (static_cast<std::uint32_t>(bytes[off + 3]) << 24);
      float value;
      std::memcpy(&value, &bits, sizeof value);
      data(r, c) = value;
    }
  }
  return EmbeddingMatrix(std::move(ids), std::move(data), std::move(model));
}

EmbeddingMatrix load_embeddings(const fs::path& header_path, const SceneManifest& scene) {
  EmbeddingMatrix store = load_embeddings(header_path);
  std::set<std::int64_t> scene_ids;
  for (const auto& f : scene.frames) scene_ids.insert(f.frame_id);

  std::string missing;
  for (std::int64_t id : scene_ids) {
    if (!store.contains(id)) missing += (missing.empty() ? "" : ",") + std::to_string(id);
  }
  std::string extra;
  for (std::int64_t id : store.frame_ids()) {
    if (!scene_ids.count(id)) extra += (extra.empty() ? "" : ",") + std::to_string(id);
  }
  if (!missing.empty() || !extra.empty()) {
    std::string msg = "embeddings do not cover scene " + scene.scene_id + ":";
    if (!missing.empty()) msg += " missing frames [" + missing + "]";
    if (!extra.empty()) msg += " extra frames [" + extra + "]";
    throw Error(ErrorKind::FrameCoverageError, msg);
  }
  return store;
}

void write_embeddings(const EmbeddingMatrix& store, const fs::path& header_path) {
  {
    std::ofstream out(header_path);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + header_path.string());
    const json header{{"dim", store.dim()},
                      {"count", store.count()},
                      {"model", store.model_tag()},
                      {"frame_ids", store.frame_ids()}};
    out << header.dump(2) << '\n';
  }
  const fs::path bin = payload_path(header_path);
  std::ofstream out(bin, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + bin.string());
  const auto& data = store.data();
  for (Eigen::Index r = 0; r < data.rows(); ++r) {
    for (Eigen::Index c = 0; c < data.cols(); ++c) {
      const float value = static_cast<float>(data(r, c));
      std::uint32_t bits;
      std::memcpy(&bits, &value, sizeof bits);
      const char bytes[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                             static_cast<char>((bits >> 16) & 0xff), static_cast<char>(bits >> 24)};
      out.write(bytes, 4);
    }
  }
}

}  // namespace spatial_prompt
