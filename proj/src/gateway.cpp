#include "policylab/gateway.hpp"

#include <algorithm>
#include <cstdio>

#include "policylab/criterion.hpp"

namespace policylab::gateway {

using abac::AttributeMap;
using abac::SubjectAttrs;
using registry::Registry;

// ---------------------------------------------------------------------------
// Configuration

TokenMap parse_tokens(const Json& document) {
  const auto& list = require_field(document, "tokens", "");
  if (!list.is_array()) throw Error(ErrorCode::ParseError, "tokens: expected list", "tokens");
  TokenMap tokens;
  for (std::size_t i = 0; i < list.size(); ++i) {
    const auto path = "tokens[" + std::to_string(i) + "]";
    const auto& entry = list[i];
    if (!entry.is_object()) throw Error(ErrorCode::ParseError, path + ": expected object", path);
    SubjectAttrs subject;
    const auto token = require_string(entry, "token", path);
    subject.subject_id = require_string(entry, "subject", path);
    if (const auto it = entry.find("attributes"); it != entry.end()) {
      if (!it->is_object()) throw Error(ErrorCode::ParseError, path + ".attributes: expected object", path + ".attributes");
      for (const auto& [key, value] : it->items()) {
        if (!value.is_string()) {
          throw Error(ErrorCode::ParseError, path + ".attributes." + key + ": expected text", path + ".attributes." + key);
        }
        subject.attributes[key] = value.get<std::string>();
      }
    }
    if (token.empty() || !tokens.emplace(token, std::move(subject)).second) {
      throw Error(ErrorCode::ParseError, path + ".token: empty or duplicate token", path + ".token");
    }
  }
  return tokens;
}

TokenMap load_tokens(const std::filesystem::path& path) {
  return parse_tokens(parse_json(read_file(path), path.string()));
}

ServerConfig load_server_config(const std::filesystem::path& path) {
  const auto doc = parse_json(read_file(path), path.string());
  if (!doc.is_object()) throw Error(ErrorCode::ParseError, path.string() + ": expected object", "$");
  const auto base = path.parent_path();
  auto resolve = [&](const char* key, const std::filesystem::path& fallback) {
    const auto p = std::filesystem::path(optional_string(doc, key, key, fallback.string()));
    return p.is_absolute() ? p : base / p;
  };
  ServerConfig cfg;
  cfg.host = optional_string(doc, "host", "host", cfg.host);
  if (doc.contains("port")) {
    if (!doc["port"].is_number_integer() || doc["port"].get<int>() < 0 || doc["port"].get<int>() > 65535) {
      throw Error(ErrorCode::ParseError, "port: expected integer in [0, 65535]", "port");
    }
    cfg.port = doc["port"].get<int>();
  }
  cfg.state_dir = resolve("state_dir", "../state");
  cfg.config_dir = resolve("config_dir", ".");
  cfg.tokens_file = resolve("tokens", "tokens.json");
  cfg.abac_file = resolve("abac", "abac.json");
  cfg.run_workers = doc.value("run_workers", std::size_t{0});
  cfg.sim_threads = std::max<std::size_t>(1, doc.value("sim_threads", std::size_t{1}));
  return cfg;
}

// ---------------------------------------------------------------------------
// Error mapping

int http_status(ErrorCode code, bool registration) {
  switch (code) {
    case ErrorCode::ParseError:
    case ErrorCode::BadRequest:
    case ErrorCode::SchemaViolation:
    case ErrorCode::SourceParseError:
      return 400;
    case ErrorCode::Unauthenticated:
      return 401;
    case ErrorCode::AccessDenied:
      return 403;
    case ErrorCode::UnknownFunction:
      return registration ? 422 : 404;
    case ErrorCode::NotFound:
    case ErrorCode::UnknownDataset:
    case ErrorCode::UnknownRun:
      return 404;
    case ErrorCode::DuplicateName:
    case ErrorCode::InUse:
    case ErrorCode::WrongSourceKind:
    case ErrorCode::ReadOnly:
    case ErrorCode::RunNotFinished:
      return 409;
    case ErrorCode::UnknownBuiltin:
    case ErrorCode::MissingComplianceDoc:
    case ErrorCode::InvalidCompliance:
    case ErrorCode::InvalidRetention:
    case ErrorCode::InvalidSpec:
    case ErrorCode::MalformedRule:
    case ErrorCode::ConflictingRules:
    case ErrorCode::InvalidRule:
    case ErrorCode::InfeasibleDegree:
    case ErrorCode::DomainError:
    case ErrorCode::UnknownModel:
    case ErrorCode::StructureError:
    case ErrorCode::IdError:
    case ErrorCode::CriterionParseError:
    case ErrorCode::MissingRequired:
    case ErrorCode::UnknownAttribute:
    case ErrorCode::UnknownParameter:
      return 422;
    case ErrorCode::FunctionFailure:
    case ErrorCode::Internal:
      return 500;
  }
  return 500;
}

Json error_body(const Error& error) {
  Json e{{"code", std::string(to_string(error.code()))}, {"message", error.what()}, {"detail", error.detail()}};
  if (error.code() == ErrorCode::AccessDenied) {
    e["rule"] = error.detail().empty() ? Json(nullptr) : Json(error.detail());
  }
  if (const auto* parse = dynamic_cast<const metasim::CriterionParseError*>(&error)) e["offset"] = parse->offset();
  return Json{{"error", std::move(e)}};
}

// ---------------------------------------------------------------------------
// Runs

std::string_view to_string(RunStatus status) {
  switch (status) {
    case RunStatus::pending: return "pending";
    case RunStatus::running: return "running";
    case RunStatus::done: return "done";
    case RunStatus::failed: return "failed";
  }
  return "failed";
}

namespace {

std::optional<RunStatus> parse_status(std::string_view s) {
  for (auto st : {RunStatus::pending, RunStatus::running, RunStatus::done, RunStatus::failed}) {
    if (to_string(st) == s) return st;
  }
  return std::nullopt;
}

Json run_to_json(const RunRecord& r) {
  return Json{{"run_id", r.run_id}, {"status", std::string(to_string(r.status))}, {"seed", r.seed},
              {"owner", r.owner},   {"error", r.error},                           {"results", r.results}};
}

}  // namespace

RunManager::RunManager(std::filesystem::path state_dir, std::size_t workers, std::size_t sim_threads)
    : dir_(std::move(state_dir)), sim_threads_(std::max<std::size_t>(1, sim_threads)) {
  if (!dir_.empty()) load();
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  for (std::size_t i = 0; i < workers; ++i) workers_.emplace_back([this] { work(); });
}

RunManager::~RunManager() {
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
  }
  queued_.notify_all();
  for (auto& t : workers_) t.join();
}

void RunManager::load() {
  const auto dir = dir_ / "runs";
  if (!std::filesystem::is_directory(dir)) return;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& path : files) {
    const auto doc = parse_json(read_file(path), path.string());
    RunRecord r;
    r.run_id = doc.value("run_id", std::string{});
    r.status = parse_status(doc.value("status", std::string{})).value_or(RunStatus::failed);
    r.seed = doc.value("seed", std::uint64_t{0});
    r.owner = doc.value("owner", std::string{});
    r.error = doc.value("error", std::string{});
    r.results = doc.value("results", Json{});
    if (r.status == RunStatus::pending || r.status == RunStatus::running) {
      r.status = RunStatus::failed;
      r.error = "interrupted before completion";
      persist(r);
    }
    unsigned long long n = 0;
    if (std::sscanf(r.run_id.c_str(), "run-%llu", &n) == 1) next_ = std::max<std::uint64_t>(next_, n + 1);
    runs_[r.run_id] = std::move(r);
  }
}

void RunManager::persist(const RunRecord& record) const {
  if (dir_.empty()) return;
  std::filesystem::create_directories(dir_ / "runs");
  write_file_atomic(dir_ / "runs" / (record.run_id + ".json"), run_to_json(record).dump() + "\n");
}

std::string RunManager::submit(metasim::PolicyTree tree, std::uint64_t seed, std::string owner) {
  std::unique_lock lock(mutex_);
  char id[32];
  std::snprintf(id, sizeof id, "run-%06llu", static_cast<unsigned long long>(next_++));
  RunRecord r;
  r.run_id = id;
  r.seed = seed;
  r.owner = std::move(owner);
  persist(r);
  runs_[r.run_id] = r;
  queue_.push_back({r.run_id, std::move(tree)});
  lock.unlock();
  queued_.notify_one();
  return id;
}

std::optional<RunRecord> RunManager::get(const std::string& run_id) const {
  std::lock_guard lock(mutex_);
  const auto it = runs_.find(run_id);
  if (it == runs_.end()) return std::nullopt;
  return it->second;
}

RunRecord RunManager::wait(const std::string& run_id) const {
  std::unique_lock lock(mutex_);
  const auto it = runs_.find(run_id);
  if (it == runs_.end()) throw Error(ErrorCode::UnknownRun, "no run with id '" + run_id + "'", run_id);
  changed_.wait(lock, [&] { return it->second.status == RunStatus::done || it->second.status == RunStatus::failed; });
  return it->second;
}

void RunManager::work() {
  for (;;) {
    Job job;
    std::uint64_t seed = 0;
    {
      std::unique_lock lock(mutex_);
      queued_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (queue_.empty()) return;
      job = std::move(queue_.front());
      queue_.pop_front();
      auto& r = runs_.at(job.run_id);
      r.status = RunStatus::running;
      seed = r.seed;
      persist(r);
    }
    changed_.notify_all();
    RunStatus status = RunStatus::done;
    Json results;
    std::string error;
    try {
      results = metasim::to_json(metasim::execute(job.tree, seed, {sim_threads_}));
    } catch (const std::exception& e) {
      status = RunStatus::failed;
      error = e.what();
    }
    {
      std::lock_guard lock(mutex_);
      auto& r = runs_.at(job.run_id);
      r.status = status;
      r.results = std::move(results);
      r.error = std::move(error);
      persist(r);
    }
    changed_.notify_all();
  }
}

// ---------------------------------------------------------------------------
// Workbench

namespace {

std::string kind_hint(const Json& body, const char* key) {
  if (body.is_object()) {
    const auto it = body.find(key);
    if (it != body.end() && it->is_string()) return it->get<std::string>();
  }
  return {};
}

Json summary_with_spec(const registry::ArtifactSummary& s, const Registry& reg) {
  auto out = registry::to_json(s);
  if (s.type == "function") {
    out["spec"] = registry::to_json(*reg.function(s.id));
  } else {
    out["spec"] = registry::to_json(*reg.dataset(s.id));
  }
  return out;
}

}  // namespace

Workbench::Workbench(WorkbenchOptions options)
    : builtins_(pipeline::load_environment(options.config_dir)),
      registry_(options.state_dir, builtins_.hooks()),
      pipeline_(registry_, builtins_, options.state_dir, options.clock),
      authorizer_(std::move(options.policy)),
      clock_(options.clock),
      runs_(options.state_dir, options.run_workers, options.sim_threads) {}

AttributeMap Workbench::resource_of(const std::string& id) const {
  AttributeMap attrs{{"id", id}};
  if (const auto f = registry_.function(id)) {
    attrs["type"] = "function";
    attrs["kind"] = std::string(registry::to_string(f->kind));
    attrs["owner"] = f->owner;
  } else if (const auto d = registry_.dataset(id)) {
    attrs["type"] = "dataset";
    attrs["kind"] = std::string(registry::to_string(d->source_kind));
    attrs["owner"] = d->owner;
  }
  return attrs;
}

Json Workbench::register_function(const SubjectAttrs& subject, const Json& body) {
  authorizer_.require(subject, "register_function", {{"type", "function"}, {"kind", kind_hint(body, "kind")}});
  const auto id = registry_.register_function(registry::function_from_json(body), subject.subject_id);
  return Json{{"id", id}, {"function", registry::to_json(*registry_.function(id))}};
}

Json Workbench::register_dataset(const SubjectAttrs& subject, const Json& body) {
  authorizer_.require(subject, "register_dataset", {{"type", "dataset"}, {"kind", kind_hint(body, "source_kind")}});
  auto spec = registry::dataset_from_json(body);
  const bool has_records = body.contains("records");
  const bool has_source = body.contains("source");
  if (has_records || has_source) {
    if (spec.source_kind != registry::SourceKind::at_rest) {
      throw Error(ErrorCode::WrongSourceKind, "only at_rest datasets accept records at registration", "source_kind");
    }
    if (has_records && !body["records"].is_array()) throw Error(ErrorCode::ParseError, "records: expected list", "records");
    if (has_source && !body["source"].is_string()) throw Error(ErrorCode::ParseError, "source: expected NDJSON text", "source");
    authorizer_.require(subject, "ingest", {{"type", "dataset"}, {"kind", "at_rest"}});
  }
  const auto id = registry_.register_dataset(std::move(spec), subject.subject_id);
  Json out{{"id", id}, {"dataset", registry::to_json(*registry_.dataset(id))}};
  if (has_records) {
    const auto& records = body["records"];
    out["ingest"] = pipeline::to_json(pipeline_.ingest_records(id, std::vector<Json>(records.begin(), records.end())));
  } else if (has_source) {
    out["ingest"] = pipeline::to_json(pipeline_.ingest_at_rest(id, body["source"].get<std::string>()));
  }
  return out;
}

Json Workbench::update_artifact(const SubjectAttrs& subject, const std::string& id, const Json& body) {
  if (Registry::is_function_id(id)) {
    auto attrs = resource_of(id);
    authorizer_.require(subject, "register_function", attrs);
    const auto next = registry_.update_function(id, registry::function_from_json(body), subject.subject_id);
    return Json{{"id", next}, {"previous", id}, {"function", registry::to_json(*registry_.function(next))}};
  }
  if (Registry::is_dataset_id(id)) {
    authorizer_.require(subject, "register_dataset", resource_of(id));
    const auto next = registry_.update_dataset(id, registry::dataset_from_json(body), subject.subject_id);
    return Json{{"id", next}, {"previous", id}, {"dataset", registry::to_json(*registry_.dataset(next))}};
  }
  throw Error(ErrorCode::NotFound, "no artifact with id '" + id + "'", id);
}

Json Workbench::delete_artifact(const SubjectAttrs& subject, const std::string& id) {
  authorizer_.require(subject, "delete_artifact", resource_of(id));
  const auto type = registry_.remove(id);
  std::size_t purged = 0;
  if (type == "dataset") purged = pipeline_.purge(id);
  return Json{{"id", id}, {"type", type}, {"removed", true}, {"purged_records", purged}};
}

Json Workbench::list(const SubjectAttrs& subject, const registry::ListFilter& filter) {
  AttributeMap attrs;
  if (filter.type) attrs["type"] = *filter.type;
  authorizer_.require(subject, "list", attrs);
  Json items = Json::array();
  for (const auto& s : registry_.list(filter)) items.push_back(summary_with_spec(s, registry_));
  return Json{{"artifacts", std::move(items)}};
}

Json Workbench::artifact(const SubjectAttrs& subject, const std::string& id) {
  authorizer_.require(subject, "list", resource_of(id));
  if (const auto f = registry_.function(id)) return registry::to_json(*f);
  if (const auto d = registry_.dataset(id)) return registry::to_json(*d);
  throw Error(ErrorCode::NotFound, "no artifact with id '" + id + "'", id);
}

Json Workbench::ingest(const SubjectAttrs& subject, const std::string& dataset_id, std::string_view ndjson) {
  authorizer_.require(subject, "ingest", resource_of(dataset_id));
  return pipeline::to_json(pipeline_.ingest_at_rest(dataset_id, ndjson));
}

Json Workbench::push(const SubjectAttrs& subject, const std::string& dataset_id, const Json& record) {
  authorizer_.require(subject, "push", resource_of(dataset_id));
  return pipeline::to_json(pipeline_.push(dataset_id, record));
}

Json Workbench::apply_analytic(const SubjectAttrs& subject, const std::string& function_id,
                               const std::string& dataset_id, const Json& params) {
  auto attrs = resource_of(function_id);
  attrs["dataset"] = dataset_id;
  authorizer_.require(subject, "apply_analytic", attrs);
  return pipeline::to_json(pipeline_.apply_analytic(function_id, dataset_id, params));
}

Json Workbench::find_records(const SubjectAttrs& subject, const std::string& dataset_id, const FindQuery& query) {
  authorizer_.require(subject, "find_records", resource_of(dataset_id));
  const auto found = query.field ? pipeline_.find(dataset_id, *query.field, query.value) : pipeline_.records(dataset_id);
  Json records = Json::array();
  for (const auto& r : found) records.push_back(pipeline::to_json(r));
  return Json{{"dataset_id", dataset_id}, {"count", found.size()}, {"records", std::move(records)}};
}

Json Workbench::erase_subject(const SubjectAttrs& subject, const std::string& dataset_id, const std::string& field,
                              const Json& value, std::string_view mode) {
  authorizer_.require(subject, "erase_subject", resource_of(dataset_id));
  const auto parsed = pipeline::parse_erase_mode(mode);
  if (field.empty()) throw Error(ErrorCode::BadRequest, "field is required", "field");
  const auto n = pipeline_.erase_subject(dataset_id, field, value, parsed);
  return Json{{"dataset_id", dataset_id}, {"mode", std::string(mode)}, {"count", n}};
}

Json Workbench::enforce_retention(const SubjectAttrs& subject, std::optional<TimestampMs> now) {
  authorizer_.require(subject, "enforce_retention", {});
  const auto at = now.value_or(clock_());
  Json purged = Json::object();
  for (const auto& [id, n] : pipeline_.enforce_retention(at)) purged[id] = n;
  return Json{{"now", format_rfc3339(at)}, {"purged", std::move(purged)}};
}

Json Workbench::start_run(const SubjectAttrs& subject, const Json& body) {
  authorizer_.require(subject, "run_policy", {{"type", "run"}});
  if (!body.is_object()) throw Error(ErrorCode::ParseError, "request body: expected object", "$");
  const auto& tree_doc = require_field(body, "tree", "");
  const auto& seed = require_field(body, "seed", "");
  if (!seed.is_number_integer() || seed.get<std::int64_t>() < 0) throw Error(ErrorCode::ParseError, "seed: expected non-negative integer", "seed");
  auto tree = metasim::load_tree(tree_doc);
  metasim::propagate(tree);
  const auto id = runs_.submit(std::move(tree), seed.get<std::uint64_t>(), subject.subject_id);
  return Json{{"run_id", id}, {"status", std::string(to_string(runs_.get(id)->status))}};
}

RunRecord Workbench::require_run(const SubjectAttrs& subject, const std::string& run_id) const {
  const auto run = runs_.get(run_id);
  authorizer_.require(subject, "read_results",
                      {{"type", "run"}, {"id", run_id}, {"owner", run ? run->owner : std::string{}}});
  if (!run) throw Error(ErrorCode::UnknownRun, "no run with id '" + run_id + "'", run_id);
  return *run;
}

Json Workbench::run_status(const SubjectAttrs& subject, const std::string& run_id) {
  const auto run = require_run(subject, run_id);
  Json out{{"run_id", run.run_id}, {"status", std::string(to_string(run.status))}, {"seed", run.seed}};
  if (run.status == RunStatus::failed) out["error"] = run.error;
  return out;
}

Json Workbench::run_results(const SubjectAttrs& subject, const std::string& run_id) {
  const auto run = require_run(subject, run_id);
  if (run.status != RunStatus::done) {
    const std::string status(to_string(run.status));
    throw Error(ErrorCode::RunNotFinished,
                "run " + run_id + " is " + status + (run.error.empty() ? "" : ": " + run.error), status);
  }
  return run.results;
}

Json Workbench::run_ranking(const SubjectAttrs& subject, const std::string& run_id) {
  const auto results = run_results(subject, run_id);
  Json goals = Json::array();
  for (const auto& g : results["goals"]) {
    goals.push_back(Json{{"id", g["id"]}, {"no_criteria", g["no_criteria"]}, {"ranking", g["ranking"]}});
  }
  return Json{{"run_id", run_id}, {"goals", std::move(goals)}};
}

Json Workbench::wait_results(const SubjectAttrs& subject, const std::string& run_id) {
  require_run(subject, run_id);
  runs_.wait(run_id);
  return run_results(subject, run_id);
}

}  // namespace policylab::gateway
