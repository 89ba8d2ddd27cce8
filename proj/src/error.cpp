#include "policylab/error.hpp"

namespace policylab {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DuplicateName: return "DuplicateName";
    case ErrorCode::UnknownBuiltin: return "UnknownBuiltin";
    case ErrorCode::MissingComplianceDoc: return "MissingComplianceDoc";
    case ErrorCode::InvalidCompliance: return "InvalidCompliance";
    case ErrorCode::UnknownFunction: return "UnknownFunction";
    case ErrorCode::InvalidRetention: return "InvalidRetention";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::InUse: return "InUse";
    case ErrorCode::ReadOnly: return "ReadOnly";
    case ErrorCode::AccessDenied: return "AccessDenied";
    case ErrorCode::Unauthenticated: return "Unauthenticated";
    case ErrorCode::MalformedRule: return "MalformedRule";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ConflictingRules: return "ConflictingRules";
    case ErrorCode::InvalidRule: return "InvalidRule";
    case ErrorCode::UnknownDataset: return "UnknownDataset";
    case ErrorCode::WrongSourceKind: return "WrongSourceKind";
    case ErrorCode::SourceParseError: return "SourceParseError";
    case ErrorCode::FunctionFailure: return "FunctionFailure";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::InfeasibleDegree: return "InfeasibleDegree";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::UnknownModel: return "UnknownModel";
    case ErrorCode::StructureError: return "StructureError";
    case ErrorCode::IdError: return "IdError";
    case ErrorCode::CriterionParseError: return "CriterionParseError";
    case ErrorCode::MissingRequired: return "MissingRequired";
    case ErrorCode::UnknownAttribute: return "UnknownAttribute";
    case ErrorCode::UnknownParameter: return "UnknownParameter";
    case ErrorCode::BadRequest: return "BadRequest";
    case ErrorCode::UnknownRun: return "UnknownRun";
    case ErrorCode::RunNotFinished: return "RunNotFinished";
    case ErrorCode::Internal: return "Internal";
  }
  return "Unknown";
}

}  // namespace policylab
