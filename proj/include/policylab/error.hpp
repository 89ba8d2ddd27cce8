#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace policylab {

enum class ErrorCode {
  // registry
  DuplicateName,
  UnknownBuiltin,
  MissingComplianceDoc,
  InvalidCompliance,
  UnknownFunction,
  InvalidRetention,
  InvalidSpec,
  NotFound,
  InUse,
  ReadOnly,
  // access
  AccessDenied,
  Unauthenticated,
  MalformedRule,
  ParseError,
  // cleaning
  ConflictingRules,
  InvalidRule,
  // pipeline
  UnknownDataset,
  WrongSourceKind,
  SourceParseError,
  FunctionFailure,
  SchemaViolation,
  // simulation / models
  InfeasibleDegree,
  DomainError,
  UnknownModel,
  // metasim
  StructureError,
  IdError,
  CriterionParseError,
  MissingRequired,
  UnknownAttribute,
  UnknownParameter,
  // gateway
  BadRequest,
  UnknownRun,
  RunNotFinished,
  Internal,
};

std::string_view to_string(ErrorCode code);

/// Domain error carrying a machine-readable code. `detail` holds optional
/// positional context (line number, field path, parse offset).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message, std::string detail = {})
      : std::runtime_error(std::move(message)), code_(code), detail_(std::move(detail)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace policylab
