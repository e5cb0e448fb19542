#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace spatial_prompt {

enum class ErrorKind {
  MalformedManifest,
  NonRigidPose,
  MissingFile,
  DimensionMismatch,
  UnsupportedDepthEncoding,
  UnsupportedColorEncoding,
  ImageTooSmall,
  HeaderMismatch,
  FrameCoverageError,
  NonFiniteEmbedding,
  UnknownFrame,
  DegenerateStats,
  EmptyInput,
  EmptyBank,
  BackendUnavailable,
  ReplayMiss,
  ProviderError,
  IoError,
  InvalidArgument,
};

std::string_view to_string(ErrorKind kind);

// Every failure surfaced by the library carries a kind so the CLI can map it
// onto a stable exit code and a machine-parsable prefix.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace spatial_prompt
