#include "policylab/builtins.hpp"

#include <algorithm>
#include <limits>

#include "policylab/error.hpp"

namespace policylab::pipeline {

using registry::DatasetSpec;
using registry::FunctionKind;
using registry::FunctionSpec;

namespace {

[[noreturn]] void bad_param(const std::string& key, const std::string& what) {
  const auto path = "params." + key;
  throw Error(ErrorCode::InvalidSpec, path + ": " + what, path);
}

void allow_only(const Json& params, std::initializer_list<std::string_view> keys) {
  for (const auto& [key, value] : params.items()) {
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) bad_param(key, "unknown parameter");
  }
}

void expect_string(const Json& params, const char* key, bool required) {
  const auto it = params.find(key);
  if (it == params.end()) {
    if (required) bad_param(key, "required");
    return;
  }
  if (!it->is_string() || it->get<std::string>().empty()) bad_param(key, "expected non-empty text");
}

bool valid_ruleset_name(std::string_view name) {
  return !name.empty() && std::all_of(name.begin(), name.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
  });
}

Json merged(const Json& base, const Json& overrides) {
  Json out = base.is_object() ? base : Json::object();
  if (overrides.is_object()) {
    for (const auto& [key, value] : overrides.items()) out[key] = value;
  }
  return out;
}

}  // namespace

Json to_json(const Record& record) {
  return Json{{"record_id", record.record_id},
              {"ingest_time", format_rfc3339(record.ingest_time)},
              {"fields", record.fields},
              {"annotations", record.annotations}};
}

Record record_from_json(const Json& node) {
  Record r;
  const auto& id = require_field(node, "record_id", "");
  if (!id.is_number_unsigned()) throw Error(ErrorCode::ParseError, "record_id: expected unsigned integer", "record_id");
  r.record_id = id.get<std::uint64_t>();
  const auto time = parse_rfc3339(require_string(node, "ingest_time", ""));
  if (!time) throw Error(ErrorCode::ParseError, "ingest_time: expected RFC 3339 timestamp", "ingest_time");
  r.ingest_time = *time;
  r.fields = require_field(node, "fields", "");
  if (!r.fields.is_object()) throw Error(ErrorCode::ParseError, "fields: expected object", "fields");
  if (const auto it = node.find("annotations"); it != node.end()) r.annotations = *it;
  if (!r.annotations.is_object()) throw Error(ErrorCode::ParseError, "annotations: expected object", "annotations");
  return r;
}

Environment load_environment(const std::filesystem::path& config_dir) {
  namespace fs = std::filesystem;
  Environment env;
  if (fs::exists(config_dir / "sentiment.tsv")) env.sentiment = sentiment::load_lexicon(config_dir / "sentiment.tsv");
  if (fs::is_directory(config_dir / "domains")) env.domains = cleaning::load_lexicons(config_dir / "domains");
  if (fs::is_directory(config_dir / "rules")) env.overlays = cleaning::load_rule_packs(config_dir / "rules");
  env.rulesets_dir = config_dir / "rulesets";
  return env;
}

Json minimize(const Json& fields, const Json& params, std::span<const FieldSchema> schema) {
  Json out = fields;
  if (const auto it = params.find("drop_fields"); it != params.end()) {
    for (const auto& name : *it) out.erase(name.get<std::string>());
  }
  if (params.value("drop_identifier_class", false)) {
    for (const auto& f : schema) {
      if (f.identifier_class == IdentifierClass::direct_identifier) out.erase(f.name);
    }
  }
  return out;
}

double sentiment_of(const Json& fields, const std::string& field, const sentiment::Lexicon& lexicon) {
  const auto it = fields.find(field);
  if (it == fields.end() || !it->is_string()) return 0.0;
  return sentiment::score(it->get_ref<const std::string&>(), lexicon);
}

Json summarize(std::span<const double> values) {
  if (values.empty()) return Json{{"avg", nullptr}, {"min", nullptr}, {"max", nullptr}, {"n", 0}};
  double sum = 0.0;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (double v : values) {
    sum += v;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double avg = std::clamp(sum / static_cast<double>(values.size()), lo, hi);
  return Json{{"avg", avg}, {"min", lo}, {"max", hi}, {"n", values.size()}};
}

std::string annotation_key(const FunctionSpec& fn) {
  const auto it = fn.params.find("annotation");
  if (it != fn.params.end() && it->is_string()) return it->get<std::string>();
  return fn.name;
}

Builtins::Builtins(Environment env) : env_(std::move(env)) {}

bool Builtins::is_builtin(FunctionKind kind, std::string_view name) const {
  if (kind == FunctionKind::ingest) return name == kMinimize || name == kClean || name == kSentiment;
  return name == kSentimentSummary || name == kFieldSummary || name == kRecordCount;
}

registry::Hooks Builtins::hooks() const {
  registry::Hooks h;
  h.is_builtin = [this](FunctionKind kind, std::string_view name) { return is_builtin(kind, name); };
  h.check_params = [this](const FunctionSpec& fn) { check_params(fn); };
  return h;
}

void Builtins::check_params(const FunctionSpec& fn) const {
  const Json& p = fn.params;
  if (!p.is_object()) throw Error(ErrorCode::InvalidSpec, "params: expected object", "params");
  if (fn.builtin == kMinimize) {
    allow_only(p, {"drop_fields", "drop_identifier_class"});
    if (const auto it = p.find("drop_fields"); it != p.end()) {
      if (!it->is_array() || !std::all_of(it->begin(), it->end(), [](const Json& v) { return v.is_string(); })) {
        bad_param("drop_fields", "expected list of field names");
      }
    }
    if (const auto it = p.find("drop_identifier_class"); it != p.end() && !it->is_boolean()) {
      bad_param("drop_identifier_class", "expected boolean");
    }
  } else if (fn.builtin == kClean) {
    allow_only(p, {"rules", "ruleset", "domain", "window"});
    if (p.contains("rules") == p.contains("ruleset")) bad_param("ruleset", "exactly one of rules or ruleset is required");
    expect_string(p, "domain", false);
    if (const auto it = p.find("window"); it != p.end() && !(it->is_number_integer() && it->get<std::int64_t>() > 0)) {
      bad_param("window", "expected positive integer");
    }
    const auto rules = clean_rules(p);
    cleaning::compile_rules(rules, p.value("domain", std::string(cleaning::kGenericDomain)), env_.overlays);
  } else if (fn.builtin == kSentiment) {
    allow_only(p, {"field", "annotation"});
    expect_string(p, "field", true);
    expect_string(p, "annotation", false);
  } else if (fn.builtin == kSentimentSummary) {
    allow_only(p, {"annotation"});
    expect_string(p, "annotation", false);
  } else if (fn.builtin == kFieldSummary) {
    allow_only(p, {"field"});
    expect_string(p, "field", true);
  } else if (fn.builtin == kRecordCount) {
    allow_only(p, {});
  } else {
    throw Error(ErrorCode::UnknownBuiltin, "no builtin named '" + fn.builtin + "'", "builtin");
  }
}

std::vector<cleaning::ValidationRule> Builtins::clean_rules(const Json& params) const {
  if (const auto it = params.find("rules"); it != params.end()) {
    if (!it->is_array()) bad_param("rules", "expected list");
    return cleaning::rules_from_json(*it, "params.rules");
  }
  const auto it = params.find("ruleset");
  if (it == params.end() || !it->is_string() || !valid_ruleset_name(it->get<std::string>())) {
    bad_param("ruleset", "expected ruleset name");
  }
  const auto name = it->get<std::string>();
  std::lock_guard lock(mutex_);
  if (const auto cached = rulesets_.find(name); cached != rulesets_.end()) return cached->second;
  const auto path = env_.rulesets_dir / (name + ".json");
  if (!std::filesystem::exists(path)) bad_param("ruleset", "unknown ruleset '" + name + "'");
  auto rules = cleaning::rules_from_json(parse_json(read_file(path), path.string()), name);
  rulesets_.emplace(name, rules);
  return rules;
}

cleaning::ConstraintPlan Builtins::clean_plan(const FunctionSpec& fn, const DatasetSpec& dataset,
                                              const Json& fields) const {
  std::string domain;
  if (const auto it = fn.params.find("domain"); it != fn.params.end() && it->is_string()) {
    domain = it->get<std::string>();
  } else if (dataset.domain_hint) {
    domain = *dataset.domain_hint;
  } else {
    const auto tokens = cleaning::text_tokens(fields);
    domain = cleaning::identify_domain(tokens, env_.domains, env_.domain_min_score).domain;
  }
  const auto window = static_cast<std::size_t>(fn.params.value("window", std::int64_t{0}));
  const auto key = fn.params.dump() + '\x1f' + domain;
  {
    std::lock_guard lock(mutex_);
    if (const auto it = plans_.find(key); it != plans_.end()) return it->second;
  }
  auto plan = cleaning::compile_rules(clean_rules(fn.params), domain, env_.overlays, window);
  std::lock_guard lock(mutex_);
  plans_.emplace(key, plan);
  return plan;
}

bool Builtins::apply_ingest(const FunctionSpec& fn, const DatasetSpec& dataset, Record& record,
                            cleaning::CleaningState& state) const {
  if (fn.builtin == kMinimize) {
    record.fields = minimize(record.fields, fn.params, dataset.schema);
    return true;
  }
  if (fn.builtin == kClean) {
    const auto plan = clean_plan(fn, dataset, record.fields);
    auto run = cleaning::run_workflow(record.fields, plan, dataset.schema, state);
    if (!run.kept()) return false;
    record.fields = std::move(run.outcome.record);
    return true;
  }
  if (fn.builtin == kSentiment) {
    record.annotations[annotation_key(fn)] = sentiment_of(record.fields, fn.params.at("field").get<std::string>(),
                                                          env_.sentiment);
    return true;
  }
  throw Error(ErrorCode::UnknownBuiltin, "no ingest builtin named '" + fn.builtin + "'", "builtin");
}

Json Builtins::apply_analytic(const FunctionSpec& fn, const Json& params, std::span<const Record> records) const {
  FunctionSpec effective = fn;
  effective.params = merged(fn.params, params);
  check_params(effective);
  const Json& p = effective.params;
  if (fn.builtin == kSentimentSummary) {
    const auto key = p.value("annotation", std::string(kSentiment));
    std::vector<double> values;
    for (const auto& r : records) {
      const auto it = r.annotations.find(key);
      if (it != r.annotations.end() && it->is_number()) values.push_back(it->get<double>());
    }
    return summarize(values);
  }
  if (fn.builtin == kFieldSummary) {
    const auto field = p.at("field").get<std::string>();
    std::vector<double> values;
    for (const auto& r : records) {
      const auto it = r.fields.find(field);
      if (it != r.fields.end() && it->is_number()) values.push_back(it->get<double>());
    }
    auto out = summarize(values);
    out["missing"] = records.size() - values.size();
    return out;
  }
  if (fn.builtin == kRecordCount) return Json{{"n", records.size()}};
  throw Error(ErrorCode::UnknownFunction, "function " + fn.id + " is not an analytic function", fn.id);
}

}  // namespace policylab::pipeline
