#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "policylab/builtins.hpp"
#include "policylab/registry.hpp"

namespace policylab::pipeline {

struct FunctionStats {
  std::string function_id;
  std::size_t applied = 0;
  std::size_t dropped = 0;
  std::size_t errors = 0;
};

struct IngestReport {
  std::size_t records_in = 0;
  std::size_t stored = 0;
  std::size_t dropped = 0;
  std::vector<FunctionStats> per_function;
  std::vector<std::uint64_t> record_ids;
};

Json to_json(const IngestReport& report);

struct PushAck {
  std::optional<std::uint64_t> record_id;
  std::string drop_reason;  // set when dropped
};

Json to_json(const PushAck& ack);

struct DeadLetter {
  TimestampMs time = 0;
  std::string function_id;  // empty for schema failures
  std::string reason;
  Json record;
};

Json to_json(const DeadLetter& letter);

inline constexpr TimestampMs kDeadLetterRetention = 7 * kMillisPerDay;

enum class EraseMode { remove, anonymize };

/// "delete" | "anonymize". Throws Error(BadRequest).
EraseMode parse_erase_mode(std::string_view text);

struct AnalyticResult {
  std::string run_id;
  std::string function_id;
  std::string dataset_id;
  std::uint64_t dataset_version = 0;
  Json result;
  bool cached = false;
};

Json to_json(const AnalyticResult& result);

/// Clean-function state per function id.
using ChainState = std::map<std::string, cleaning::CleaningState, std::less<>>;

struct ChainOutcome {
  std::optional<Record> record;    // nullopt: dropped
  std::optional<std::size_t> stopped_at;  // chain index that dropped or failed
  std::optional<std::string> failure;     // FunctionFailure message
};

/// Applies `chain` in order. A throwing built-in stops the chain with a failure.
ChainOutcome apply_chain(Record record, std::span<const registry::FunctionSpec> chain,
                         const registry::DatasetSpec& dataset, const Builtins& builtins, ChainState& state);

/// Object holding only schema fields. Returns the first offending path.
std::optional<std::string> schema_precheck(const Json& fields, std::span<const FieldSchema> schema);
/// Every field in the schema and null or of its declared type.
std::optional<std::string> schema_conformance(const Json& fields, std::span<const FieldSchema> schema);

using Clock = std::function<TimestampMs()>;
TimestampMs system_now();

/// Ingest orchestration and the retention-aware datastore. With a non-empty
/// `state_dir`, records live at `<state_dir>/data/<dataset>.ndjson` and dead
/// letters at `<state_dir>/deadletter/<dataset>.ndjson`.
class Pipeline {
 public:
  Pipeline(const registry::Registry& registry, const Builtins& builtins, std::filesystem::path state_dir = {},
           Clock clock = system_now);
  ~Pipeline();

  /// NDJSON source, parsed fully before anything is stored. Throws
  /// Error(SourceParseError) with detail `line N`.
  IngestReport ingest_at_rest(const std::string& dataset_id, std::string_view ndjson);
  IngestReport ingest_records(const std::string& dataset_id, std::span<const Json> sources);

  /// Throws Error(SchemaViolation) when the record fails the schema pre-check.
  PushAck push(const std::string& dataset_id, const Json& fields);

  AnalyticResult apply_analytic(const std::string& function_id, const std::string& dataset_id,
                                const Json& params = Json::object());

  /// Exact match on `field`, or on an annotation with the `annotations.` prefix.
  /// A text query also matches a non-text value whose JSON form equals it.
  std::vector<Record> find(const std::string& dataset_id, const std::string& field, const Json& value) const;
  std::vector<Record> records(const std::string& dataset_id) const;
  std::size_t count(const std::string& dataset_id) const;
  std::uint64_t version(const std::string& dataset_id) const;

  /// Removes matches, or sets their direct-identifier fields to null. Returns the match count.
  std::size_t erase_subject(const std::string& dataset_id, const std::string& field, const Json& value,
                            EraseMode mode);

  /// Purges records past their dataset's retention bound and dead letters
  /// older than seven days. Returns the purged record count per bounded dataset.
  std::map<std::string, std::size_t> enforce_retention(TimestampMs now);

  /// Drops every stored record of a dataset. Returns the number removed.
  std::size_t purge(const std::string& dataset_id);

  std::vector<DeadLetter> dead_letters(const std::string& dataset_id) const;

 private:
  struct Store;
  Store& store(const std::string& dataset_id) const;
  registry::DatasetSpec require_dataset(const std::string& dataset_id) const;
  void check_writable(const registry::DatasetSpec& dataset) const;
  void rebuild_state(Store& s, const registry::DatasetSpec& dataset,
                     std::span<const registry::FunctionSpec> chain) const;
  std::optional<Record> process(Store& s, const registry::DatasetSpec& dataset,
                                std::span<const registry::FunctionSpec> chain, const Json& source,
                                IngestReport& report, std::string* drop_reason);
  void load(Store& s) const;
  void persist_append(Store& s, std::span<const Record> added) const;
  void persist_rewrite(Store& s) const;
  void persist_meta(const Store& s) const;
  void persist_dead_letters(Store& s, std::span<const DeadLetter> added, bool rewrite) const;

  const registry::Registry& registry_;
  const Builtins& builtins_;
  std::filesystem::path dir_;
  Clock clock_;
  mutable std::mutex stores_mutex_;
  mutable std::map<std::string, std::unique_ptr<Store>> stores_;
  mutable std::mutex cache_mutex_;
  std::map<std::string, AnalyticResult> cache_;
};

}  // namespace policylab::pipeline
