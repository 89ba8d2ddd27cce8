#pragma once

#include <array>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "policylab/abac.hpp"
#include "policylab/builtins.hpp"
#include "policylab/error.hpp"
#include "policylab/metasim.hpp"
#include "policylab/pipeline.hpp"
#include "policylab/registry.hpp"

namespace policylab::gateway {

/// Every protected action. Each gateway operation checks exactly one.
inline constexpr std::array<std::string_view, 12> kActions = {
    "register_function", "register_dataset", "delete_artifact", "ingest",         "push",        "apply_analytic",
    "find_records",      "erase_subject",    "enforce_retention", "run_policy",   "read_results", "list"};

// ---------------------------------------------------------------------------
// Configuration

using TokenMap = std::map<std::string, abac::SubjectAttrs, std::less<>>;

/// `{"tokens": [{"token", "subject", "attributes": {..}}]}`. Duplicate tokens are rejected.
TokenMap parse_tokens(const Json& document);
TokenMap load_tokens(const std::filesystem::path& path);

struct ServerConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path state_dir = "state";
  std::filesystem::path config_dir = "config";
  std::filesystem::path tokens_file = "config/tokens.json";
  std::filesystem::path abac_file = "config/abac.json";
  std::size_t run_workers = 0;  // 0: available parallelism
  std::size_t sim_threads = 1;
};

/// Relative paths in the file resolve against the file's directory.
ServerConfig load_server_config(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Error mapping

/// HTTP status for a domain error. `registration` maps a dangling chain
/// reference to 422 instead of 404.
int http_status(ErrorCode code, bool registration = false);

/// `{"error": {code, message, detail}}` plus `rule` (403) or `offset` (criterion errors).
Json error_body(const Error& error);

// ---------------------------------------------------------------------------
// Policy runs

enum class RunStatus { pending, running, done, failed };
std::string_view to_string(RunStatus status);

struct RunRecord {
  std::string run_id;
  RunStatus status = RunStatus::pending;
  std::uint64_t seed = 0;
  std::string owner;
  std::string error;
  Json results;  // results document once done
};

/// Bounded worker pool executing policy trees. Finished runs are written to
/// `<state_dir>/runs/<run_id>.json` and reloaded on start; runs left
/// unfinished by a previous process are marked failed.
class RunManager {
 public:
  RunManager(std::filesystem::path state_dir, std::size_t workers, std::size_t sim_threads);
  ~RunManager();
  RunManager(const RunManager&) = delete;
  RunManager& operator=(const RunManager&) = delete;

  std::string submit(metasim::PolicyTree tree, std::uint64_t seed, std::string owner);
  std::optional<RunRecord> get(const std::string& run_id) const;
  /// Blocks until the run is done or failed. Throws Error(UnknownRun).
  RunRecord wait(const std::string& run_id) const;

 private:
  struct Job {
    std::string run_id;
    metasim::PolicyTree tree;
  };
  void work();
  void persist(const RunRecord& record) const;
  void load();

  std::filesystem::path dir_;
  std::size_t sim_threads_;
  mutable std::mutex mutex_;
  mutable std::condition_variable changed_;
  std::condition_variable queued_;
  std::deque<Job> queue_;
  std::map<std::string, RunRecord> runs_;
  std::uint64_t next_ = 1;
  bool stopping_ = false;
  std::vector<std::thread> workers_;
};

// ---------------------------------------------------------------------------
// Workbench: the operation layer shared by the HTTP API and the CLI

struct WorkbenchOptions {
  std::filesystem::path state_dir;  // empty: in memory only
  std::filesystem::path config_dir = "config";
  std::vector<abac::AbacRule> policy;
  std::size_t run_workers = 0;
  std::size_t sim_threads = 1;
  pipeline::Clock clock = pipeline::system_now;
};

struct FindQuery {
  std::optional<std::string> field;  // absent: every record
  Json value;
};

/// Each call authorizes `subject` for its action (Error(AccessDenied) on
/// deny) before validating the request, then returns a response document.
class Workbench {
 public:
  explicit Workbench(WorkbenchOptions options);

  Json register_function(const abac::SubjectAttrs& subject, const Json& body);
  /// An at-rest body may carry `records` (array) or `source` (NDJSON text),
  /// ingested right after registration under the `ingest` action.
  Json register_dataset(const abac::SubjectAttrs& subject, const Json& body);
  Json update_artifact(const abac::SubjectAttrs& subject, const std::string& id, const Json& body);
  Json delete_artifact(const abac::SubjectAttrs& subject, const std::string& id);
  Json list(const abac::SubjectAttrs& subject, const registry::ListFilter& filter);
  Json artifact(const abac::SubjectAttrs& subject, const std::string& id);

  Json ingest(const abac::SubjectAttrs& subject, const std::string& dataset_id, std::string_view ndjson);
  Json push(const abac::SubjectAttrs& subject, const std::string& dataset_id, const Json& record);
  Json apply_analytic(const abac::SubjectAttrs& subject, const std::string& function_id, const std::string& dataset_id,
                      const Json& params);
  Json find_records(const abac::SubjectAttrs& subject, const std::string& dataset_id, const FindQuery& query);
  Json erase_subject(const abac::SubjectAttrs& subject, const std::string& dataset_id, const std::string& field,
                     const Json& value, std::string_view mode);
  Json enforce_retention(const abac::SubjectAttrs& subject, std::optional<TimestampMs> now);

  /// Body `{tree, seed}`. The tree is loaded and its parameters resolved
  /// before the run is queued, so structural errors surface immediately.
  Json start_run(const abac::SubjectAttrs& subject, const Json& body);
  Json run_status(const abac::SubjectAttrs& subject, const std::string& run_id);
  Json run_results(const abac::SubjectAttrs& subject, const std::string& run_id);
  Json run_ranking(const abac::SubjectAttrs& subject, const std::string& run_id);
  /// Blocks until the run finishes; returns the results document.
  Json wait_results(const abac::SubjectAttrs& subject, const std::string& run_id);

  const registry::Registry& registry() const { return registry_; }
  const pipeline::Pipeline& pipeline() const { return pipeline_; }

 private:
  abac::AttributeMap resource_of(const std::string& id) const;
  RunRecord require_run(const abac::SubjectAttrs& subject, const std::string& run_id) const;

  pipeline::Builtins builtins_;
  registry::Registry registry_;
  pipeline::Pipeline pipeline_;
  abac::Authorizer authorizer_;
  pipeline::Clock clock_;
  RunManager runs_;
};

}  // namespace policylab::gateway
