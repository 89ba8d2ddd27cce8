#include "policylab/registry.hpp"
#include <cctype>

#include <algorithm>
#include <cstdio>
#include <mutex>

#include "policylab/error.hpp"

namespace policylab::registry {

namespace {

[[noreturn]] void bad_compliance(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::InvalidCompliance, path + ": " + what, path);
}

[[noreturn]] void bad_field(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::ParseError, path + ": " + what, path);
}

std::string text_or_empty(const Json& node, const char* key, const std::string& path) {
  const auto it = node.find(key);
  if (it == node.end() || it->is_null()) return {};
  if (!it->is_string()) bad_compliance(path + "." + key, "expected text");
  return it->get<std::string>();
}

std::optional<std::string> optional_text(const Json& node, const char* key) {
  const auto it = node.find(key);
  if (it == node.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) bad_field(key, "expected text");
  return it->get<std::string>();
}

std::string format_id(const char* prefix, std::uint64_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s-%06llu", prefix, static_cast<unsigned long long>(n));
  return buf;
}

bool contains_ci(std::string_view haystack, std::string_view needle) {
  if (needle.empty()) return true;
  auto lower = [](char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); };
  return std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end(),
                     [&](char a, char b) { return lower(a) == lower(b); }) != haystack.end();
}

void put_optional(Json& out, const char* key, const std::optional<std::string>& value) {
  if (value) out[key] = *value;
}

}  // namespace

ComplianceDoc compliance_from_json(const Json& node, const std::string& path) {
  if (!node.is_object()) bad_compliance(path, "expected object");
  ComplianceDoc doc;
  doc.bias_measures = text_or_empty(node, "bias_measures", path);
  doc.legal_constraints = text_or_empty(node, "legal_constraints", path);
  doc.tradeoffs = text_or_empty(node, "tradeoffs", path);
  if (const auto it = node.find("bias_statistics"); it != node.end() && !it->is_null()) {
    if (!it->is_array()) bad_compliance(path + ".bias_statistics", "expected list");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const auto& s = (*it)[i];
      const auto p = path + ".bias_statistics[" + std::to_string(i) + "]";
      if (!s.is_object()) bad_compliance(p, "expected object");
      const auto statement = s.find("statement");
      const auto fraction = s.find("fraction");
      if (statement == s.end() || !statement->is_string()) bad_compliance(p + ".statement", "expected text");
      if (fraction == s.end() || !fraction->is_number()) bad_compliance(p + ".fraction", "expected number");
      doc.bias_statistics.push_back({statement->get<std::string>(), fraction->get<double>()});
    }
  }
  if (const auto it = node.find("concept_notes"); it != node.end() && !it->is_null()) {
    if (!it->is_array()) bad_compliance(path + ".concept_notes", "expected list");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const auto& n = (*it)[i];
      const auto p = path + ".concept_notes[" + std::to_string(i) + "]";
      if (!n.is_object()) bad_compliance(p, "expected object");
      const auto field = n.find("field");
      const auto definition = n.find("definition");
      if (field == n.end() || !field->is_string()) bad_compliance(p + ".field", "expected text");
      if (definition == n.end() || !definition->is_string()) bad_compliance(p + ".definition", "expected text");
      doc.concept_notes.push_back({field->get<std::string>(), definition->get<std::string>()});
    }
  }
  return doc;
}

Json to_json(const ComplianceDoc& doc) {
  Json stats = Json::array();
  for (const auto& s : doc.bias_statistics) stats.push_back(Json{{"statement", s.statement}, {"fraction", s.fraction}});
  Json notes = Json::array();
  for (const auto& n : doc.concept_notes) notes.push_back(Json{{"field", n.field}, {"definition", n.definition}});
  return Json{{"bias_measures", doc.bias_measures},
              {"bias_statistics", std::move(stats)},
              {"legal_constraints", doc.legal_constraints},
              {"tradeoffs", doc.tradeoffs},
              {"concept_notes", std::move(notes)}};
}

void check_compliance(const ComplianceDoc& doc) {
  for (std::size_t i = 0; i < doc.bias_statistics.size(); ++i) {
    const double f = doc.bias_statistics[i].fraction;
    if (!(f >= 0.0 && f <= 1.0)) {
      const auto path = "compliance.bias_statistics[" + std::to_string(i) + "].fraction";
      throw Error(ErrorCode::InvalidCompliance, path + ": fraction must lie in [0, 1]", path);
    }
  }
  if (!doc.has_bias_documentation()) {
    throw Error(ErrorCode::MissingComplianceDoc, "compliance documentation must describe bias measures or statistics",
                "compliance");
  }
}

std::string_view to_string(FunctionKind kind) { return kind == FunctionKind::ingest ? "ingest" : "analytic"; }
std::string_view to_string(SourceKind kind) { return kind == SourceKind::stream ? "stream" : "at_rest"; }

FunctionSpec function_from_json(const Json& node) {
  if (!node.is_object()) bad_field("$", "expected object");
  FunctionSpec spec;
  spec.name = require_string(node, "name", "name");
  if (spec.name.empty()) bad_field("name", "must not be empty");
  const auto kind = require_string(node, "kind", "kind");
  if (kind == "ingest") spec.kind = FunctionKind::ingest;
  else if (kind == "analytic") spec.kind = FunctionKind::analytic;
  else bad_field("kind", "expected ingest or analytic");
  spec.builtin = require_string(node, "builtin", "builtin");
  if (const auto it = node.find("params"); it != node.end() && !it->is_null()) {
    if (!it->is_object()) bad_field("params", "expected object");
    spec.params = *it;
  }
  spec.input_schema = optional_text(node, "input_schema");
  spec.output_schema = optional_text(node, "output_schema");
  if (const auto it = node.find("compliance"); it != node.end() && !it->is_null()) {
    spec.compliance = compliance_from_json(*it, "compliance");
  }
  spec.id = optional_text(node, "id").value_or("");
  spec.owner = optional_text(node, "owner").value_or("");
  spec.previous = optional_text(node, "previous");
  spec.superseded_by = optional_text(node, "superseded_by");
  return spec;
}

Json to_json(const FunctionSpec& spec) {
  Json out = Json::object();
  if (!spec.id.empty()) out["id"] = spec.id;
  out["name"] = spec.name;
  out["kind"] = std::string(to_string(spec.kind));
  out["builtin"] = spec.builtin;
  out["params"] = spec.params;
  out["input_schema"] = spec.input_schema ? Json(*spec.input_schema) : Json(nullptr);
  out["output_schema"] = spec.output_schema ? Json(*spec.output_schema) : Json(nullptr);
  out["compliance"] = spec.compliance ? to_json(*spec.compliance) : Json(nullptr);
  if (!spec.owner.empty()) out["owner"] = spec.owner;
  put_optional(out, "previous", spec.previous);
  put_optional(out, "superseded_by", spec.superseded_by);
  return out;
}

DatasetSpec dataset_from_json(const Json& node) {
  if (!node.is_object()) bad_field("$", "expected object");
  DatasetSpec spec;
  spec.name = require_string(node, "name", "name");
  if (spec.name.empty()) bad_field("name", "must not be empty");
  const auto kind = require_string(node, "source_kind", "source_kind");
  if (kind == "stream") spec.source_kind = SourceKind::stream;
  else if (kind == "at_rest") spec.source_kind = SourceKind::at_rest;
  else bad_field("source_kind", "expected stream or at_rest");

  const auto& schema = require_field(node, "schema", "schema");
  if (!schema.is_array()) bad_field("schema", "expected list");
  for (std::size_t i = 0; i < schema.size(); ++i) {
    spec.schema.push_back(field_schema_from_json(schema[i], "schema[" + std::to_string(i) + "]"));
  }
  if (const auto it = node.find("ingest_chain"); it != node.end() && !it->is_null()) {
    if (!it->is_array()) bad_field("ingest_chain", "expected list");
    for (std::size_t i = 0; i < it->size(); ++i) {
      if (!(*it)[i].is_string()) bad_field("ingest_chain[" + std::to_string(i) + "]", "expected function id");
      spec.ingest_chain.push_back((*it)[i].get<std::string>());
    }
  }
  const auto retention = node.find("retention_days");
  if (retention == node.end() || retention->is_null() ||
      (retention->is_string() && retention->get<std::string>() == "unlimited")) {
    spec.retention_days = std::nullopt;
  } else if (retention->is_number_integer() && retention->get<std::int64_t>() > 0) {
    spec.retention_days = retention->get<std::int64_t>();
  } else {
    throw Error(ErrorCode::InvalidRetention, "retention_days must be a positive integer or \"unlimited\"",
                "retention_days");
  }
  spec.domain_hint = optional_text(node, "domain_hint");
  if (const auto it = node.find("compliance"); it != node.end() && !it->is_null()) {
    spec.compliance = compliance_from_json(*it, "compliance");
  }
  spec.id = optional_text(node, "id").value_or("");
  spec.owner = optional_text(node, "owner").value_or("");
  spec.previous = optional_text(node, "previous");
  spec.superseded_by = optional_text(node, "superseded_by");
  return spec;
}

Json to_json(const DatasetSpec& spec) {
  Json out = Json::object();
  if (!spec.id.empty()) out["id"] = spec.id;
  out["name"] = spec.name;
  out["source_kind"] = std::string(to_string(spec.source_kind));
  Json schema = Json::array();
  for (const auto& f : spec.schema) schema.push_back(policylab::to_json(f));
  out["schema"] = std::move(schema);
  out["ingest_chain"] = spec.ingest_chain;
  out["retention_days"] = spec.retention_days ? Json(*spec.retention_days) : Json("unlimited");
  out["domain_hint"] = spec.domain_hint ? Json(*spec.domain_hint) : Json(nullptr);
  out["compliance"] = spec.compliance ? to_json(*spec.compliance) : Json(nullptr);
  if (!spec.owner.empty()) out["owner"] = spec.owner;
  put_optional(out, "previous", spec.previous);
  put_optional(out, "superseded_by", spec.superseded_by);
  return out;
}

Json to_json(const ArtifactSummary& s) {
  Json out{{"id", s.id}, {"name", s.name}, {"type", s.type}, {"kind", s.kind}, {"owner", s.owner},
           {"compliance", to_json(s.compliance)}};
  out["superseded_by"] = s.superseded_by ? Json(*s.superseded_by) : Json(nullptr);
  return out;
}

// ---------------------------------------------------------------------------

Registry::Registry(std::filesystem::path state_dir, Hooks hooks) : dir_(std::move(state_dir)), hooks_(std::move(hooks)) {
  if (!dir_.empty()) load();
}

void Registry::validate_function(const FunctionSpec& spec, const std::string* replacing) const {
  if (spec.name.empty()) throw Error(ErrorCode::InvalidSpec, "function name must not be empty", "name");
  for (const auto& [id, f] : functions_) {
    if (f.superseded_by || (replacing && id == *replacing)) continue;
    if (f.name == spec.name && f.kind == spec.kind) {
      throw Error(ErrorCode::DuplicateName, "a " + std::string(to_string(spec.kind)) + " function named '" + spec.name +
                                                "' already exists",
                  "name");
    }
  }
  if (hooks_.is_builtin && !hooks_.is_builtin(spec.kind, spec.builtin)) {
    throw Error(ErrorCode::UnknownBuiltin,
                "no " + std::string(to_string(spec.kind)) + " builtin named '" + spec.builtin + "'", "builtin");
  }
  if (!spec.compliance) throw Error(ErrorCode::MissingComplianceDoc, "compliance documentation is required", "compliance");
  check_compliance(*spec.compliance);
  if (hooks_.check_params) hooks_.check_params(spec);
}

void Registry::validate_dataset(const DatasetSpec& spec, const std::string* replacing) const {
  if (spec.name.empty()) throw Error(ErrorCode::InvalidSpec, "dataset name must not be empty", "name");
  for (const auto& [id, d] : datasets_) {
    if (d.superseded_by || (replacing && id == *replacing)) continue;
    if (d.name == spec.name) throw Error(ErrorCode::DuplicateName, "a dataset named '" + spec.name + "' already exists", "name");
  }
  std::set<std::string> names;
  for (std::size_t i = 0; i < spec.schema.size(); ++i) {
    if (!names.insert(spec.schema[i].name).second) {
      const auto path = "schema[" + std::to_string(i) + "].name";
      throw Error(ErrorCode::InvalidSpec, "duplicate schema field '" + spec.schema[i].name + "'", path);
    }
  }
  for (std::size_t i = 0; i < spec.ingest_chain.size(); ++i) {
    const auto it = functions_.find(spec.ingest_chain[i]);
    const auto path = "ingest_chain[" + std::to_string(i) + "]";
    if (it == functions_.end()) {
      throw Error(ErrorCode::UnknownFunction, "no function with id '" + spec.ingest_chain[i] + "'", path);
    }
    if (it->second.kind != FunctionKind::ingest) {
      throw Error(ErrorCode::UnknownFunction, "function '" + spec.ingest_chain[i] + "' is not an ingest function", path);
    }
  }
  if (spec.retention_days && *spec.retention_days <= 0) {
    throw Error(ErrorCode::InvalidRetention, "retention_days must be positive", "retention_days");
  }
  if (!spec.compliance) throw Error(ErrorCode::MissingComplianceDoc, "compliance documentation is required", "compliance");
  check_compliance(*spec.compliance);
  for (std::size_t i = 0; i < spec.compliance->concept_notes.size(); ++i) {
    const auto& field = spec.compliance->concept_notes[i].field;
    if (!names.contains(field)) {
      const auto path = "compliance.concept_notes[" + std::to_string(i) + "].field";
      throw Error(ErrorCode::InvalidCompliance, "concept note refers to unknown field '" + field + "'", path);
    }
  }
}

std::string Registry::next_id(bool function) {
  return function ? format_id("fn", next_function_++) : format_id("ds", next_dataset_++);
}

std::string Registry::register_function(FunctionSpec spec, const std::string& owner) {
  std::unique_lock lock(mutex_);
  validate_function(spec, nullptr);
  const auto saved_counter = next_function_;
  spec.id = next_id(true);
  spec.owner = owner;
  spec.previous.reset();
  spec.superseded_by.reset();
  functions_.emplace(spec.id, spec);
  try {
    persist_function(spec);
    persist_index();
  } catch (...) {
    functions_.erase(spec.id);
    next_function_ = saved_counter;
    throw;
  }
  return spec.id;
}

std::string Registry::register_dataset(DatasetSpec spec, const std::string& owner) {
  std::unique_lock lock(mutex_);
  validate_dataset(spec, nullptr);
  const auto saved_counter = next_dataset_;
  spec.id = next_id(false);
  spec.owner = owner;
  spec.previous.reset();
  spec.superseded_by.reset();
  datasets_.emplace(spec.id, spec);
  try {
    persist_dataset(spec);
    persist_index();
  } catch (...) {
    datasets_.erase(spec.id);
    next_dataset_ = saved_counter;
    throw;
  }
  return spec.id;
}

std::string Registry::update_function(const std::string& id, FunctionSpec spec, const std::string& owner) {
  std::unique_lock lock(mutex_);
  const auto it = functions_.find(id);
  if (it == functions_.end()) throw Error(ErrorCode::NotFound, "no function with id '" + id + "'", id);
  if (it->second.superseded_by) {
    throw Error(ErrorCode::ReadOnly, "function " + id + " was superseded by " + *it->second.superseded_by, id);
  }
  validate_function(spec, &id);
  const auto saved_counter = next_function_;
  const auto old = it->second;
  spec.id = next_id(true);
  spec.owner = owner;
  spec.previous = id;
  spec.superseded_by.reset();
  it->second.superseded_by = spec.id;
  functions_.emplace(spec.id, spec);
  try {
    persist_function(spec);
    persist_function(functions_.at(id));
    persist_index();
  } catch (...) {
    functions_.erase(spec.id);
    functions_.at(id) = old;
    next_function_ = saved_counter;
    throw;
  }
  return spec.id;
}

std::string Registry::update_dataset(const std::string& id, DatasetSpec spec, const std::string& owner) {
  std::unique_lock lock(mutex_);
  const auto it = datasets_.find(id);
  if (it == datasets_.end()) throw Error(ErrorCode::NotFound, "no dataset with id '" + id + "'", id);
  if (it->second.superseded_by) {
    throw Error(ErrorCode::ReadOnly, "dataset " + id + " was superseded by " + *it->second.superseded_by, id);
  }
  validate_dataset(spec, &id);
  const auto saved_counter = next_dataset_;
  const auto old = it->second;
  spec.id = next_id(false);
  spec.owner = owner;
  spec.previous = id;
  spec.superseded_by.reset();
  it->second.superseded_by = spec.id;
  datasets_.emplace(spec.id, spec);
  try {
    persist_dataset(spec);
    persist_dataset(datasets_.at(id));
    persist_index();
  } catch (...) {
    datasets_.erase(spec.id);
    datasets_.at(id) = old;
    next_dataset_ = saved_counter;
    throw;
  }
  return spec.id;
}

std::string Registry::remove(const std::string& id) {
  std::unique_lock lock(mutex_);
  if (const auto it = functions_.find(id); it != functions_.end()) {
    for (const auto& [ds_id, ds] : datasets_) {
      if (std::find(ds.ingest_chain.begin(), ds.ingest_chain.end(), id) != ds.ingest_chain.end()) {
        throw Error(ErrorCode::InUse, "function " + id + " is used by dataset " + ds_id, ds_id);
      }
    }
    const auto old = it->second;
    functions_.erase(it);
    try {
      persist_index();
    } catch (...) {
      functions_.emplace(id, old);
      throw;
    }
    if (!dir_.empty()) std::filesystem::remove(dir_ / "registry" / "functions" / (id + ".json"));
    return "function";
  }
  if (const auto it = datasets_.find(id); it != datasets_.end()) {
    const auto old = it->second;
    datasets_.erase(it);
    try {
      persist_index();
    } catch (...) {
      datasets_.emplace(id, old);
      throw;
    }
    if (!dir_.empty()) std::filesystem::remove(dir_ / "registry" / "datasets" / (id + ".json"));
    return "dataset";
  }
  throw Error(ErrorCode::NotFound, "no artifact with id '" + id + "'", id);
}

std::vector<ArtifactSummary> Registry::list(const ListFilter& filter) const {
  std::shared_lock lock(mutex_);
  std::vector<ArtifactSummary> out;
  auto keep = [&](const ArtifactSummary& s) {
    if (filter.type && *filter.type != s.type) return false;
    if (filter.kind && *filter.kind != s.kind) return false;
    if (filter.name_substring && !contains_ci(s.name, *filter.name_substring)) return false;
    return true;
  };
  for (const auto& [id, f] : functions_) {
    ArtifactSummary s{id, f.name, "function", std::string(to_string(f.kind)), f.owner, f.compliance.value_or(ComplianceDoc{}),
                      f.superseded_by};
    if (keep(s)) out.push_back(std::move(s));
  }
  for (const auto& [id, d] : datasets_) {
    ArtifactSummary s{id, d.name, "dataset", std::string(to_string(d.source_kind)), d.owner,
                      d.compliance.value_or(ComplianceDoc{}), d.superseded_by};
    if (keep(s)) out.push_back(std::move(s));
  }
  return out;
}

std::optional<FunctionSpec> Registry::function(const std::string& id) const {
  std::shared_lock lock(mutex_);
  const auto it = functions_.find(id);
  if (it == functions_.end()) return std::nullopt;
  return it->second;
}

std::optional<DatasetSpec> Registry::dataset(const std::string& id) const {
  std::shared_lock lock(mutex_);
  const auto it = datasets_.find(id);
  if (it == datasets_.end()) return std::nullopt;
  return it->second;
}

std::vector<DatasetSpec> Registry::datasets() const {
  std::shared_lock lock(mutex_);
  std::vector<DatasetSpec> out;
  for (const auto& [id, d] : datasets_) out.push_back(d);
  return out;
}

std::vector<FunctionSpec> Registry::resolve_chain(const DatasetSpec& dataset) const {
  std::shared_lock lock(mutex_);
  std::vector<FunctionSpec> chain;
  for (const auto& id : dataset.ingest_chain) {
    const auto it = functions_.find(id);
    if (it == functions_.end()) throw Error(ErrorCode::UnknownFunction, "no function with id '" + id + "'", id);
    chain.push_back(it->second);
  }
  return chain;
}

void Registry::persist_function(const FunctionSpec& spec) const {
  if (dir_.empty()) return;
  const auto dir = dir_ / "registry" / "functions";
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / (spec.id + ".json"), to_json(spec).dump(2) + "\n");
}

void Registry::persist_dataset(const DatasetSpec& spec) const {
  if (dir_.empty()) return;
  const auto dir = dir_ / "registry" / "datasets";
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / (spec.id + ".json"), to_json(spec).dump(2) + "\n");
}

void Registry::persist_index() const {
  if (dir_.empty()) return;
  Json functions = Json::array();
  for (const auto& [id, f] : functions_) functions.push_back(id);
  Json datasets = Json::array();
  for (const auto& [id, d] : datasets_) datasets.push_back(id);
  const Json index{{"next_function", next_function_},
                   {"next_dataset", next_dataset_},
                   {"functions", std::move(functions)},
                   {"datasets", std::move(datasets)}};
  std::filesystem::create_directories(dir_ / "registry");
  write_file_atomic(dir_ / "registry" / "index.json", index.dump(2) + "\n");
}

void Registry::load() {
  const auto index_path = dir_ / "registry" / "index.json";
  if (!std::filesystem::exists(index_path)) return;
  const auto index = parse_json(read_file(index_path), index_path.string());
  next_function_ = index.value("next_function", std::uint64_t{1});
  next_dataset_ = index.value("next_dataset", std::uint64_t{1});
  // Only indexed artifacts count: a file written by an interrupted registration is ignored.
  for (const auto& id : index.value("functions", Json::array())) {
    const auto path = dir_ / "registry" / "functions" / (id.get<std::string>() + ".json");
    auto spec = function_from_json(parse_json(read_file(path), path.string()));
    functions_.emplace(spec.id, std::move(spec));
  }
  for (const auto& id : index.value("datasets", Json::array())) {
    const auto path = dir_ / "registry" / "datasets" / (id.get<std::string>() + ".json");
    auto spec = dataset_from_json(parse_json(read_file(path), path.string()));
    datasets_.emplace(spec.id, std::move(spec));
  }
}

}  // namespace policylab::registry
