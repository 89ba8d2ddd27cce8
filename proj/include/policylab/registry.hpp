#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "policylab/json_util.hpp"
#include "policylab/schema.hpp"

namespace policylab::registry {

struct BiasStatistic {
  std::string statement;
  double fraction = 0.0;

  bool operator==(const BiasStatistic&) const = default;
};

struct ConceptNote {
  std::string field;
  std::string definition;

  bool operator==(const ConceptNote&) const = default;
};

struct ComplianceDoc {
  std::string bias_measures;
  std::vector<BiasStatistic> bias_statistics;
  std::string legal_constraints;
  std::string tradeoffs;
  std::vector<ConceptNote> concept_notes;

  bool has_bias_documentation() const { return !bias_measures.empty() || !bias_statistics.empty(); }
  bool operator==(const ComplianceDoc&) const = default;
};

/// Missing keys read as empty. Throws Error(InvalidCompliance) on shape errors.
ComplianceDoc compliance_from_json(const Json& node, const std::string& path);
Json to_json(const ComplianceDoc& doc);

/// Fractions in [0, 1] (InvalidCompliance) and at least one bias field
/// filled (MissingComplianceDoc).
void check_compliance(const ComplianceDoc& doc);

enum class FunctionKind { ingest, analytic };
enum class SourceKind { stream, at_rest };

std::string_view to_string(FunctionKind kind);
std::string_view to_string(SourceKind kind);

struct FunctionSpec {
  std::string id;
  std::string name;
  FunctionKind kind = FunctionKind::ingest;
  std::string builtin;
  Json params = Json::object();
  std::optional<std::string> input_schema;
  std::optional<std::string> output_schema;
  std::optional<ComplianceDoc> compliance;
  std::string owner;
  std::optional<std::string> previous;
  std::optional<std::string> superseded_by;
};

struct DatasetSpec {
  std::string id;
  std::string name;
  SourceKind source_kind = SourceKind::stream;
  Schema schema;
  std::vector<std::string> ingest_chain;     // function ids
  std::optional<std::int64_t> retention_days;  // nullopt: unlimited
  std::optional<std::string> domain_hint;
  std::optional<ComplianceDoc> compliance;
  std::string owner;
  std::optional<std::string> previous;
  std::optional<std::string> superseded_by;
};

/// Wire form: `{name, kind, builtin, params, input_schema, output_schema, compliance}`.
/// System fields (`id`, `owner`, `previous`, `superseded_by`) are read when present.
FunctionSpec function_from_json(const Json& node);
Json to_json(const FunctionSpec& spec);

/// Wire form: `{name, source_kind, schema, ingest_chain, retention_days (int |
/// "unlimited"), domain_hint, compliance}`. Throws Error(ParseError) with the
/// field path, or Error(InvalidRetention).
DatasetSpec dataset_from_json(const Json& node);
Json to_json(const DatasetSpec& spec);

struct ArtifactSummary {
  std::string id;
  std::string name;
  std::string type;  // "function" | "dataset"
  std::string kind;  // ingest | analytic | stream | at_rest
  std::string owner;
  ComplianceDoc compliance;
  std::optional<std::string> superseded_by;
};

Json to_json(const ArtifactSummary& summary);

struct ListFilter {
  std::optional<std::string> type;  // "function" | "dataset"
  std::optional<std::string> kind;
  std::optional<std::string> name_substring;
};

/// Registry extension points supplied by the execution layer.
struct Hooks {
  /// True if `builtin` names an implementation of the given kind.
  std::function<bool(FunctionKind, std::string_view builtin)> is_builtin;
  /// Validates builtin parameters; throws Error(InvalidSpec).
  std::function<void(const FunctionSpec&)> check_params;
};

/// Artifact catalogue. Writes are serialized, reads take a shared lock.
/// With a non-empty `state_dir`, every artifact lives at
/// `<state_dir>/registry/<functions|datasets>/<id>.json` next to an `index.json`.
class Registry {
 public:
  explicit Registry(std::filesystem::path state_dir = {}, Hooks hooks = {});

  std::string register_function(FunctionSpec spec, const std::string& owner);
  std::string register_dataset(DatasetSpec spec, const std::string& owner);

  /// Versioned replace: the new version receives a fresh id and `previous`;
  /// the old one is kept read-only with `superseded_by`. Throws
  /// Error(ReadOnly) when `id` is already superseded.
  std::string update_function(const std::string& id, FunctionSpec spec, const std::string& owner);
  std::string update_dataset(const std::string& id, DatasetSpec spec, const std::string& owner);

  /// Throws Error(NotFound) or Error(InUse). Returns "function" or "dataset".
  std::string remove(const std::string& id);

  std::vector<ArtifactSummary> list(const ListFilter& filter = {}) const;
  std::optional<FunctionSpec> function(const std::string& id) const;
  std::optional<DatasetSpec> dataset(const std::string& id) const;
  std::vector<DatasetSpec> datasets() const;

  /// Chain functions of a dataset, in order.
  std::vector<FunctionSpec> resolve_chain(const DatasetSpec& dataset) const;

  static bool is_function_id(std::string_view id) { return id.starts_with("fn-"); }
  static bool is_dataset_id(std::string_view id) { return id.starts_with("ds-"); }

 private:
  void validate_function(const FunctionSpec& spec, const std::string* replacing) const;
  void validate_dataset(const DatasetSpec& spec, const std::string* replacing) const;
  std::string next_id(bool function);
  void load();
  void persist_function(const FunctionSpec& spec) const;
  void persist_dataset(const DatasetSpec& spec) const;
  void persist_index() const;

  std::filesystem::path dir_;
  Hooks hooks_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, FunctionSpec> functions_;
  std::map<std::string, DatasetSpec> datasets_;
  std::uint64_t next_function_ = 1;
  std::uint64_t next_dataset_ = 1;
};

}  // namespace policylab::registry
