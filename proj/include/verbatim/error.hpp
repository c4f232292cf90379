#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace verbatim {

// Domain error kinds. Each maps to one named failure in the public contracts.
enum class Errc {
  // record store
  DuplicateId,
  MissingField,
  UndecodableStream,
  UnknownDimension,
  UnknownId,
  LabelNotInSet,
  InvalidRecord,
  // gateway
  CassetteMiss,
  ProviderError,
  Timeout,
  // embedding index
  DimensionMismatch,
  ZeroVector,
  // classification
  EmptyPool,
  UnparseableLabel,
  // topic modeling
  EmptyTopicOutput,
  IncompleteReview,
  // agent
  PlanParseError,
  DependencyUnmet,
  ReplanBudgetExhausted,
  NoCodeBlock,
  AttemptsExhausted,
  DuplicatePlugin,
  // kernel
  SnapshotMissing,
  PluginLoadError,
  UnknownSession,
  ProtocolError,
  // general
  InvalidArgument,
  Io,
  Cancelled,
};

constexpr std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::DuplicateId: return "DuplicateId";
    case Errc::MissingField: return "MissingField";
    case Errc::UndecodableStream: return "UndecodableStream";
    case Errc::UnknownDimension: return "UnknownDimension";
    case Errc::UnknownId: return "UnknownId";
    case Errc::LabelNotInSet: return "LabelNotInSet";
    case Errc::InvalidRecord: return "InvalidRecord";
    case Errc::CassetteMiss: return "CassetteMiss";
    case Errc::ProviderError: return "ProviderError";
    case Errc::Timeout: return "Timeout";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::ZeroVector: return "ZeroVector";
    case Errc::EmptyPool: return "EmptyPool";
    case Errc::UnparseableLabel: return "UnparseableLabel";
    case Errc::EmptyTopicOutput: return "EmptyTopicOutput";
    case Errc::IncompleteReview: return "IncompleteReview";
    case Errc::PlanParseError: return "PlanParseError";
    case Errc::DependencyUnmet: return "DependencyUnmet";
    case Errc::ReplanBudgetExhausted: return "ReplanBudgetExhausted";
    case Errc::NoCodeBlock: return "NoCodeBlock";
    case Errc::AttemptsExhausted: return "AttemptsExhausted";
    case Errc::DuplicatePlugin: return "DuplicatePlugin";
    case Errc::SnapshotMissing: return "SnapshotMissing";
    case Errc::PluginLoadError: return "PluginLoadError";
    case Errc::UnknownSession: return "UnknownSession";
    case Errc::ProtocolError: return "ProtocolError";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::Io: return "Io";
    case Errc::Cancelled: return "Cancelled";
  }
  return "Unknown";
}

// Inverse of to_string; nullopt for unknown names.
constexpr std::optional<Errc> errc_from_string(std::string_view name) {
  for (int i = 0; i <= static_cast<int>(Errc::Cancelled); ++i) {
    const auto code = static_cast<Errc>(i);
    if (to_string(code) == name) return code;
  }
  return std::nullopt;
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail),
        code_(code),
        detail_(detail) {}

  [[nodiscard]] Errc code() const noexcept { return code_; }
  [[nodiscard]] const std::string& detail() const noexcept { return detail_; }

 private:
  Errc code_;
  std::string detail_;
};

// Raised by the live backend; carries the HTTP status and body.
class ProviderError : public Error {
 public:
  ProviderError(int status, std::string body)
      : Error(Errc::ProviderError,
              "status " + std::to_string(status) + ": " + body),
        status_(status),
        body_(std::move(body)) {}

  [[nodiscard]] int status() const noexcept { return status_; }
  [[nodiscard]] const std::string& body() const noexcept { return body_; }

 private:
  int status_;
  std::string body_;
};

}  // namespace verbatim
