#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "policylab/cleaning.hpp"
#include "policylab/json_util.hpp"
#include "policylab/registry.hpp"
#include "policylab/sentiment.hpp"
#include "policylab/timestamp.hpp"

namespace policylab::pipeline {

struct Record {
  std::uint64_t record_id = 0;
  TimestampMs ingest_time = 0;
  Json fields = Json::object();
  Json annotations = Json::object();

  bool operator==(const Record&) const = default;
};

/// `{record_id, ingest_time (RFC 3339), fields, annotations}`.
Json to_json(const Record& record);
Record record_from_json(const Json& node);

/// Configuration shared by the built-in functions.
struct Environment {
  sentiment::Lexicon sentiment;
  std::vector<cleaning::DomainLexicon> domains;
  cleaning::RulePackSet overlays;
  std::filesystem::path rulesets_dir;
  double domain_min_score = 0.1;
};

/// Reads `sentiment.tsv`, `domains/`, `rules/` and `rulesets/` under
/// `config_dir`. Missing parts stay empty.
Environment load_environment(const std::filesystem::path& config_dir);

// Standalone built-in bodies. The chain runner calls exactly these.

/// Removes `drop_fields` and, with `drop_identifier_class`, every schema
/// field classed as a direct identifier.
Json minimize(const Json& fields, const Json& params, std::span<const FieldSchema> schema);

/// Lexicon score of `fields[field]`; 0 when the field is absent or not text.
double sentiment_of(const Json& fields, const std::string& field, const sentiment::Lexicon& lexicon);

/// `{avg, min, max, n}` over numeric values; null aggregates when n = 0.
Json summarize(std::span<const double> values);

inline constexpr std::string_view kMinimize = "minimize";
inline constexpr std::string_view kClean = "clean";
inline constexpr std::string_view kSentiment = "sentiment";
inline constexpr std::string_view kSentimentSummary = "sentiment_summary";
inline constexpr std::string_view kFieldSummary = "field_summary";
inline constexpr std::string_view kRecordCount = "record_count";

/// Name under which an annotating function writes its result.
std::string annotation_key(const registry::FunctionSpec& fn);

class Builtins {
 public:
  explicit Builtins(Environment env = {});

  bool is_builtin(registry::FunctionKind kind, std::string_view name) const;
  /// Throws Error(InvalidSpec) or Error(InvalidRule) naming the offending parameter.
  void check_params(const registry::FunctionSpec& fn) const;
  registry::Hooks hooks() const;

  /// Rules of a clean function: inline `params.rules` or the named `params.ruleset`.
  std::vector<cleaning::ValidationRule> clean_rules(const Json& params) const;

  /// Domain is `params.domain`, else the dataset hint, else identified from the record text.
  cleaning::ConstraintPlan clean_plan(const registry::FunctionSpec& fn, const registry::DatasetSpec& dataset,
                                      const Json& fields) const;

  /// Applies an ingest built-in in place. Returns false when the record is dropped.
  bool apply_ingest(const registry::FunctionSpec& fn, const registry::DatasetSpec& dataset, Record& record,
                    cleaning::CleaningState& state) const;

  /// `params` are merged over the function's registered params.
  Json apply_analytic(const registry::FunctionSpec& fn, const Json& params, std::span<const Record> records) const;

  const Environment& environment() const { return env_; }

 private:
  Environment env_;
  mutable std::mutex mutex_;
  mutable std::map<std::string, std::vector<cleaning::ValidationRule>> rulesets_;
  mutable std::map<std::string, cleaning::ConstraintPlan> plans_;
};

}  // namespace policylab::pipeline
