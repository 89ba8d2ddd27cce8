#include "policylab/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>

#include "policylab/error.hpp"
#include "policylab/simengine.hpp"

namespace policylab::pipeline {

using registry::DatasetSpec;
using registry::FunctionKind;
using registry::FunctionSpec;
using registry::SourceKind;

struct Pipeline::Store {
  std::string id;
  std::mutex mutex;
  bool loaded = false;
  std::vector<Record> records;
  std::uint64_t next_id = 1;
  std::uint64_t version = 0;
  ChainState state;
  bool state_valid = false;
  std::vector<DeadLetter> dead;
};

namespace {

constexpr std::string_view kAnnotationPrefix = "annotations.";

std::string state_key(const FunctionSpec& fn, std::size_t index) {
  return fn.id.empty() ? "#" + std::to_string(index) : fn.id;
}

bool value_matches(const Json& stored, const Json& query) {
  if (stored == query) return true;
  return query.is_string() && !stored.is_string() && !stored.is_null() && stored.dump() == query.get<std::string>();
}

const Json* lookup(const Record& r, const std::string& field) {
  const bool annotation = field.starts_with(kAnnotationPrefix);
  const Json& source = annotation ? r.annotations : r.fields;
  const auto key = annotation ? field.substr(kAnnotationPrefix.size()) : field;
  const auto it = source.find(key);
  return it == source.end() ? nullptr : &*it;
}

DeadLetter dead_letter_from_json(const Json& node) {
  DeadLetter d;
  d.time = parse_rfc3339(require_string(node, "time", "")).value_or(0);
  d.function_id = node.value("function_id", std::string{});
  d.reason = node.value("reason", std::string{});
  d.record = node.value("record", Json{});
  return d;
}

void append_lines(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app | std::ios::binary);
  out << text;
  out.flush();
  if (!out) throw Error(ErrorCode::Internal, "cannot append to " + path.string());
}

}  // namespace

Json to_json(const IngestReport& report) {
  Json per = Json::array();
  for (const auto& f : report.per_function) {
    per.push_back(Json{{"function_id", f.function_id}, {"applied", f.applied}, {"dropped", f.dropped}, {"errors", f.errors}});
  }
  return Json{{"records_in", report.records_in},
              {"records_stored", report.stored},
              {"records_dropped", report.dropped},
              {"per_function", std::move(per)},
              {"record_ids", report.record_ids}};
}

Json to_json(const PushAck& ack) {
  Json out{{"record_id", ack.record_id ? Json(*ack.record_id) : Json(nullptr)}, {"dropped", !ack.record_id}};
  if (!ack.record_id) out["reason"] = ack.drop_reason;
  return out;
}

Json to_json(const DeadLetter& d) {
  return Json{{"time", format_rfc3339(d.time)}, {"function_id", d.function_id}, {"reason", d.reason}, {"record", d.record}};
}

Json to_json(const AnalyticResult& r) {
  return Json{{"run_id", r.run_id},
              {"function_id", r.function_id},
              {"dataset_id", r.dataset_id},
              {"dataset_version", r.dataset_version},
              {"cached", r.cached},
              {"result", r.result}};
}

EraseMode parse_erase_mode(std::string_view text) {
  if (text == "delete") return EraseMode::remove;
  if (text == "anonymize") return EraseMode::anonymize;
  throw Error(ErrorCode::BadRequest, "mode must be delete or anonymize", "mode");
}

ChainOutcome apply_chain(Record record, std::span<const FunctionSpec> chain, const DatasetSpec& dataset,
                         const Builtins& builtins, ChainState& state) {
  for (std::size_t i = 0; i < chain.size(); ++i) {
    bool kept = false;
    try {
      kept = builtins.apply_ingest(chain[i], dataset, record, state[state_key(chain[i], i)]);
    } catch (const std::exception& e) {
      return {std::nullopt, i, std::string(e.what())};
    }
    if (!kept) return {std::nullopt, i, std::nullopt};
  }
  return {std::move(record), std::nullopt, std::nullopt};
}

std::optional<std::string> schema_precheck(const Json& fields, std::span<const FieldSchema> schema) {
  if (!fields.is_object()) return "$";
  for (const auto& [key, value] : fields.items()) {
    if (!find_field(schema, key)) return key;
  }
  return std::nullopt;
}

std::optional<std::string> schema_conformance(const Json& fields, std::span<const FieldSchema> schema) {
  for (const auto& [key, value] : fields.items()) {
    const auto* f = find_field(schema, key);
    if (!f) return key;
    if (!value.is_null() && !value_conforms(value, f->value_type)) return key;
  }
  return std::nullopt;
}

TimestampMs system_now() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

// ---------------------------------------------------------------------------

Pipeline::Pipeline(const registry::Registry& registry, const Builtins& builtins, std::filesystem::path state_dir,
                   Clock clock)
    : registry_(registry), builtins_(builtins), dir_(std::move(state_dir)), clock_(std::move(clock)) {}

Pipeline::~Pipeline() = default;


Pipeline::Store& Pipeline::store(const std::string& dataset_id) const {
  std::lock_guard lock(stores_mutex_);
  auto& slot = stores_[dataset_id];
  if (!slot) {
    slot = std::make_unique<Store>();
    slot->id = dataset_id;
  }
  return *slot;
}

DatasetSpec Pipeline::require_dataset(const std::string& dataset_id) const {
  auto ds = registry_.dataset(dataset_id);
  if (!ds) throw Error(ErrorCode::UnknownDataset, "no dataset with id '" + dataset_id + "'", dataset_id);
  return *ds;
}

void Pipeline::check_writable(const DatasetSpec& dataset) const {
  if (dataset.superseded_by) {
    throw Error(ErrorCode::ReadOnly, "dataset " + dataset.id + " was superseded by " + *dataset.superseded_by, dataset.id);
  }
}

void Pipeline::load(Store& s) const {
  if (s.loaded) return;
  s.loaded = true;
  if (dir_.empty()) return;
  auto for_each_line = [](const std::filesystem::path& path, auto&& fn) {
    if (!std::filesystem::exists(path)) return;
    const auto text = read_file(path);
    std::size_t pos = 0;
    while (pos < text.size()) {
      auto nl = text.find('\n', pos);
      if (nl == std::string::npos) nl = text.size();
      const auto line = std::string_view(text).substr(pos, nl - pos);
      if (!line.empty()) fn(parse_json(line, path.string()));
      pos = nl + 1;
    }
  };
  for_each_line(dir_ / "data" / (s.id + ".ndjson"), [&](const Json& j) { s.records.push_back(record_from_json(j)); });
  for_each_line(dir_ / "deadletter" / (s.id + ".ndjson"), [&](const Json& j) { s.dead.push_back(dead_letter_from_json(j)); });
  const auto meta = dir_ / "data" / (s.id + ".meta.json");
  if (std::filesystem::exists(meta)) {
    const auto m = parse_json(read_file(meta), meta.string());
    s.next_id = m.value("next_record_id", std::uint64_t{1});
    s.version = m.value("version", std::uint64_t{0});
  }
  // An append that landed without its meta update still reserves its ids.
  if (!s.records.empty()) s.next_id = std::max(s.next_id, s.records.back().record_id + 1);
}

void Pipeline::persist_meta(const Store& s) const {
  if (dir_.empty()) return;
  std::filesystem::create_directories(dir_ / "data");
  const Json meta{{"next_record_id", s.next_id}, {"version", s.version}};
  write_file_atomic(dir_ / "data" / (s.id + ".meta.json"), meta.dump() + "\n");
}

void Pipeline::persist_append(Store& s, std::span<const Record> added) const {
  if (!dir_.empty() && !added.empty()) {
    std::string text;
    for (const auto& r : added) text += to_json(r).dump() + "\n";
    append_lines(dir_ / "data" / (s.id + ".ndjson"), text);
  }
  persist_meta(s);
}

void Pipeline::persist_rewrite(Store& s) const {
  if (!dir_.empty()) {
    std::filesystem::create_directories(dir_ / "data");
    std::string text;
    for (const auto& r : s.records) text += to_json(r).dump() + "\n";
    write_file_atomic(dir_ / "data" / (s.id + ".ndjson"), text);
  }
  persist_meta(s);
}

void Pipeline::persist_dead_letters(Store& s, std::span<const DeadLetter> added, bool rewrite) const {
  if (dir_.empty()) return;
  const auto path = dir_ / "deadletter" / (s.id + ".ndjson");
  std::string text;
  for (const auto& d : rewrite ? std::span<const DeadLetter>(s.dead) : added) text += to_json(d).dump() + "\n";
  if (rewrite) {
    std::filesystem::create_directories(path.parent_path());
    write_file_atomic(path, text);
  } else if (!text.empty()) {
    append_lines(path, text);
  }
}

void Pipeline::rebuild_state(Store& s, const DatasetSpec& dataset, std::span<const FunctionSpec> chain) const {
  s.state.clear();
  for (std::size_t i = 0; i < chain.size(); ++i) {
    if (chain[i].builtin != kClean) continue;
    auto& state = s.state[state_key(chain[i], i)];
    for (const auto& r : s.records) {
      try {
        state.commit(r.fields, builtins_.clean_plan(chain[i], dataset, r.fields));
      } catch (const Error&) {
        // The record could not have passed this function under its current rules.
      }
    }
  }
  s.state_valid = true;
}

std::optional<Record> Pipeline::process(Store& s, const DatasetSpec& dataset, std::span<const FunctionSpec> chain,
                                        const Json& source, IngestReport& report, std::string* drop_reason) {
  ++report.records_in;
  auto drop = [&](std::string reason, std::string function_id, bool dead_letter) -> std::optional<Record> {
    ++report.dropped;
    if (dead_letter) s.dead.push_back({clock_(), std::move(function_id), reason, source});
    if (drop_reason) *drop_reason = std::move(reason);
    return std::nullopt;
  };
  if (const auto bad = schema_precheck(source, dataset.schema)) {
    return drop("schema: field '" + *bad + "' is not in the dataset schema", "", true);
  }
  Record record;
  record.fields = source;
  auto outcome = apply_chain(std::move(record), chain, dataset, builtins_, s.state);
  const std::size_t reached = outcome.stopped_at.value_or(chain.size());
  for (std::size_t i = 0; i < reached; ++i) ++report.per_function[i].applied;
  if (outcome.failure) {
    ++report.per_function[reached].errors;
    return drop("function failure: " + *outcome.failure, chain[reached].id, true);
  }
  if (!outcome.record) {
    ++report.per_function[reached].applied;
    ++report.per_function[reached].dropped;
    return drop("dropped by " + chain[reached].id, chain[reached].id, false);
  }
  if (const auto bad = schema_conformance(outcome.record->fields, dataset.schema)) {
    return drop("schema: field '" + *bad + "' does not match its declared type", "", true);
  }
  outcome.record->record_id = s.next_id++;
  outcome.record->ingest_time = clock_();
  s.records.push_back(*outcome.record);
  ++report.stored;
  report.record_ids.push_back(outcome.record->record_id);
  return outcome.record;
}

IngestReport Pipeline::ingest_at_rest(const std::string& dataset_id, std::string_view ndjson) {
  require_dataset(dataset_id);
  std::vector<Json> sources;
  std::size_t line_no = 0;
  while (!ndjson.empty()) {
    const auto nl = ndjson.find('\n');
    auto line = ndjson.substr(0, nl);
    ndjson = nl == std::string_view::npos ? std::string_view{} : ndjson.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    const auto where = "line " + std::to_string(line_no);
    Json parsed = Json::parse(line, nullptr, false);
    if (parsed.is_discarded()) throw Error(ErrorCode::SourceParseError, where + ": malformed JSON", where);
    if (!parsed.is_object()) throw Error(ErrorCode::SourceParseError, where + ": expected a JSON object", where);
    sources.push_back(std::move(parsed));
  }
  return ingest_records(dataset_id, sources);
}

IngestReport Pipeline::ingest_records(const std::string& dataset_id, std::span<const Json> sources) {
  const auto dataset = require_dataset(dataset_id);
  if (dataset.source_kind != SourceKind::at_rest) {
    throw Error(ErrorCode::WrongSourceKind, "dataset " + dataset_id + " is a stream; push records instead", dataset_id);
  }
  check_writable(dataset);
  const auto chain = registry_.resolve_chain(dataset);
  IngestReport report;
  for (const auto& fn : chain) report.per_function.push_back({fn.id});

  auto& s = store(dataset_id);
  std::lock_guard lock(s.mutex);
  load(s);
  if (!s.state_valid) rebuild_state(s, dataset, chain);
  const auto records_before = s.records.size();
  const auto dead_before = s.dead.size();
  for (const auto& source : sources) process(s, dataset, chain, source, report, nullptr);
  if (s.records.size() != records_before) ++s.version;
  persist_append(s, std::span<const Record>(s.records).subspan(records_before));
  persist_dead_letters(s, std::span<const DeadLetter>(s.dead).subspan(dead_before), false);
  return report;
}

PushAck Pipeline::push(const std::string& dataset_id, const Json& fields) {
  const auto dataset = require_dataset(dataset_id);
  if (dataset.source_kind != SourceKind::stream) {
    throw Error(ErrorCode::WrongSourceKind, "dataset " + dataset_id + " is at rest; ingest a source instead", dataset_id);
  }
  check_writable(dataset);
  if (const auto bad = schema_precheck(fields, dataset.schema)) {
    throw Error(ErrorCode::SchemaViolation,
                *bad == "$" ? "record must be an object" : "field '" + *bad + "' is not in the dataset schema", *bad);
  }
  const auto chain = registry_.resolve_chain(dataset);
  IngestReport report;
  for (const auto& fn : chain) report.per_function.push_back({fn.id});

  auto& s = store(dataset_id);
  std::lock_guard lock(s.mutex);
  load(s);
  if (!s.state_valid) rebuild_state(s, dataset, chain);
  const auto dead_before = s.dead.size();
  PushAck ack;
  if (const auto stored = process(s, dataset, chain, fields, report, &ack.drop_reason)) {
    ack.record_id = stored->record_id;
    ++s.version;
    persist_append(s, std::span<const Record>(&s.records.back(), 1));
  }
  persist_dead_letters(s, std::span<const DeadLetter>(s.dead).subspan(dead_before), false);
  return ack;
}

AnalyticResult Pipeline::apply_analytic(const std::string& function_id, const std::string& dataset_id,
                                        const Json& params) {
  const auto fn = registry_.function(function_id);
  if (!fn) throw Error(ErrorCode::UnknownFunction, "no function with id '" + function_id + "'", function_id);
  if (fn->kind != FunctionKind::analytic) {
    throw Error(ErrorCode::UnknownFunction, "function " + function_id + " is not an analytic function", function_id);
  }
  require_dataset(dataset_id);
  if (!params.is_object()) throw Error(ErrorCode::BadRequest, "params must be an object", "params");

  std::vector<Record> snapshot;
  std::uint64_t version = 0;
  {
    auto& s = store(dataset_id);
    std::lock_guard lock(s.mutex);
    load(s);
    snapshot = s.records;
    version = s.version;
  }
  Json effective = fn->params;
  for (const auto& [key, value] : params.items()) effective[key] = value;
  const Json key{{"function", function_id}, {"builtin", fn->builtin}, {"params", effective},
                 {"dataset", dataset_id}, {"version", version}};
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(sim::hash_text(key.dump())));
  const std::string run_id = hex;
  {
    std::lock_guard lock(cache_mutex_);
    if (const auto it = cache_.find(run_id); it != cache_.end()) {
      auto hit = it->second;
      hit.cached = true;
      return hit;
    }
  }
  AnalyticResult result{run_id, function_id, dataset_id, version, builtins_.apply_analytic(*fn, params, snapshot), false};
  std::lock_guard lock(cache_mutex_);
  cache_.emplace(run_id, result);
  return result;
}

std::vector<Record> Pipeline::find(const std::string& dataset_id, const std::string& field, const Json& value) const {
  require_dataset(dataset_id);
  auto& s = store(dataset_id);
  std::lock_guard lock(s.mutex);
  load(s);
  std::vector<Record> out;
  for (const auto& r : s.records) {
    const auto* v = lookup(r, field);
    if (v && value_matches(*v, value)) out.push_back(r);
  }
  return out;
}

std::vector<Record> Pipeline::records(const std::string& dataset_id) const {
  require_dataset(dataset_id);
  auto& s = store(dataset_id);
  std::lock_guard lock(s.mutex);
  load(s);
  return s.records;
}

std::size_t Pipeline::count(const std::string& dataset_id) const {
  auto& s = store(dataset_id);
  std::lock_guard lock(s.mutex);
  load(s);
  return s.records.size();
}

std::uint64_t Pipeline::version(const std::string& dataset_id) const {
  auto& s = store(dataset_id);
  std::lock_guard lock(s.mutex);
  load(s);
  return s.version;
}

std::size_t Pipeline::erase_subject(const std::string& dataset_id, const std::string& field, const Json& value,
                                    EraseMode mode) {
  const auto dataset = require_dataset(dataset_id);
  auto& s = store(dataset_id);
  std::lock_guard lock(s.mutex);
  load(s);
  std::size_t count = 0;
  if (mode == EraseMode::remove) {
    const auto before = s.records.size();
    std::erase_if(s.records, [&](const Record& r) {
      const auto* v = lookup(r, field);
      return v && value_matches(*v, value);
    });
    count = before - s.records.size();
  } else {
    for (auto& r : s.records) {
      const auto* v = lookup(r, field);
      if (!v || !value_matches(*v, value)) continue;
      ++count;
      for (const auto& f : dataset.schema) {
        if (f.identifier_class == IdentifierClass::direct_identifier && r.fields.contains(f.name)) r.fields[f.name] = nullptr;
      }
    }
  }
  // Raw copies held for debugging are erased as well.
  const auto dead_before = s.dead.size();
  if (!field.starts_with(kAnnotationPrefix)) {
    std::erase_if(s.dead, [&](const DeadLetter& d) {
      if (!d.record.is_object()) return false;
      const auto it = d.record.find(field);
      return it != d.record.end() && value_matches(*it, value);
    });
  }
  if (count > 0) {
    ++s.version;
    s.state_valid = false;
    persist_rewrite(s);
  }
  if (s.dead.size() != dead_before) persist_dead_letters(s, {}, true);
  return count;
}

std::map<std::string, std::size_t> Pipeline::enforce_retention(TimestampMs now) {
  std::map<std::string, std::size_t> purged;
  for (const auto& dataset : registry_.datasets()) {
    auto& s = store(dataset.id);
    std::lock_guard lock(s.mutex);
    load(s);
    const auto dead_before = s.dead.size();
    std::erase_if(s.dead, [&](const DeadLetter& d) { return d.time + kDeadLetterRetention < now; });
    if (s.dead.size() != dead_before) persist_dead_letters(s, {}, true);
    if (!dataset.retention_days) continue;
    const TimestampMs bound = *dataset.retention_days * kMillisPerDay;
    const auto before = s.records.size();
    std::erase_if(s.records, [&](const Record& r) { return r.ingest_time + bound < now; });
    const auto n = before - s.records.size();
    purged[dataset.id] = n;
    if (n > 0) {
      ++s.version;
      s.state_valid = false;
      persist_rewrite(s);
    }
  }
  return purged;
}

std::size_t Pipeline::purge(const std::string& dataset_id) {
  auto& s = store(dataset_id);
  std::lock_guard lock(s.mutex);
  load(s);
  const auto n = s.records.size();
  s.records.clear();
  s.dead.clear();
  s.state.clear();
  s.state_valid = false;
  ++s.version;
  if (!dir_.empty()) {
    std::filesystem::remove(dir_ / "data" / (dataset_id + ".ndjson"));
    std::filesystem::remove(dir_ / "data" / (dataset_id + ".meta.json"));
    std::filesystem::remove(dir_ / "deadletter" / (dataset_id + ".ndjson"));
  }
  return n;
}

std::vector<DeadLetter> Pipeline::dead_letters(const std::string& dataset_id) const {
  auto& s = store(dataset_id);
  std::lock_guard lock(s.mutex);
  load(s);
  return s.dead;
}

}  // namespace policylab::pipeline
