#include "policylab/cleaning.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <optional>

#include "policylab/error.hpp"
#include "policylab/timestamp.hpp"

namespace policylab::cleaning {

// ---------------------------------------------------------------------------
// Domain identification

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (const char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) {
      current.push_back(static_cast<char>(std::tolower(u)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

DomainMatch identify_domain(std::span<const std::string> tokens, std::span<const DomainLexicon> lexicons,
                            double min_score) {
  std::set<std::string> unique;
  for (const auto& token : tokens) {
    std::string lowered = token;
    std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    unique.insert(std::move(lowered));
  }
  if (unique.empty()) return {std::string(kGenericDomain), 0.0};

  std::optional<DomainMatch> best;
  for (const auto& lexicon : lexicons) {
    std::size_t hits = 0;
    for (const auto& token : unique) {
      if (lexicon.words.count(token)) ++hits;
    }
    const double score = static_cast<double>(hits) / static_cast<double>(unique.size());
    if (!best || score > best->score || (score == best->score && lexicon.domain < best->domain)) {
      best = DomainMatch{lexicon.domain, score};
    }
  }
  if (!best) return {std::string(kGenericDomain), 0.0};
  if (best->score < min_score || best->score == 0.0) return {std::string(kGenericDomain), best->score};
  return *best;
}

std::vector<std::string> text_tokens(const Json& fields) {
  std::vector<std::string> tokens;
  if (!fields.is_object()) return tokens;
  for (const auto& [name, value] : fields.items()) {
    if (!value.is_string()) continue;
    auto part = tokenize(value.get_ref<const std::string&>());
    tokens.insert(tokens.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return tokens;
}

DomainLexicon load_lexicon_file(const std::filesystem::path& path, std::string domain) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::NotFound, "cannot open lexicon " + path.string());
  DomainLexicon lexicon{std::move(domain), {}};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.front() == '#') continue;
    for (auto& token : tokenize(line)) lexicon.words.insert(std::move(token));
  }
  if (lexicon.words.empty()) {
    throw Error(ErrorCode::ParseError, "lexicon " + path.string() + " has no words", path.string());
  }
  return lexicon;
}

std::vector<DomainLexicon> load_lexicons(const std::filesystem::path& dir) {
  std::vector<DomainLexicon> out;
  if (!std::filesystem::is_directory(dir)) return out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".txt") continue;
    out.push_back(load_lexicon_file(entry.path(), entry.path().stem().string()));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.domain < b.domain; });
  return out;
}

// ---------------------------------------------------------------------------
// Rule documents

std::string_view to_string(ConstraintKind kind) {
  switch (kind) {
    case ConstraintKind::required: return "required";
    case ConstraintKind::value_type: return "value_type";
    case ConstraintKind::length: return "length";
    case ConstraintKind::range: return "range";
    case ConstraintKind::uniqueness: return "uniqueness";
    case ConstraintKind::uniformity: return "uniformity";
    case ConstraintKind::cross_field: return "cross_field";
  }
  return "required";
}

std::string_view to_string(ActionKind kind) {
  switch (kind) {
    case ActionKind::delete_record: return "delete_record";
    case ActionKind::delete_field: return "delete_field";
    case ActionKind::replace: return "replace";
    case ActionKind::predict: return "predict";
  }
  return "delete_record";
}

std::string_view to_string(Severity severity) {
  return severity == Severity::mandatory ? "mandatory" : "optional";
}

namespace {

std::string_view to_string(Relation relation) {
  switch (relation) {
    case Relation::lt: return "lt";
    case Relation::le: return "le";
    case Relation::gt: return "gt";
    case Relation::ge: return "ge";
    case Relation::eq: return "eq";
    case Relation::neq: return "neq";
  }
  return "eq";
}

[[noreturn]] void invalid(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::InvalidRule, path + ": " + what, path);
}

double number_field(const Json& node, const char* key, const std::string& path) {
  const auto it = node.find(key);
  if (it == node.end() || !it->is_number()) invalid(path + "." + key, "expected number");
  return it->get<double>();
}

std::string string_field(const Json& node, const char* key, const std::string& path) {
  const auto it = node.find(key);
  if (it == node.end() || !it->is_string()) invalid(path + "." + key, "expected string");
  return it->get<std::string>();
}

}  // namespace

ValidationRule rule_from_json(const Json& node, const std::string& path) {
  if (!node.is_object()) invalid(path, "expected object");
  ValidationRule rule;
  rule.id = node.contains("id") && node["id"].is_string() ? node["id"].get<std::string>() : std::string{};
  rule.field = string_field(node, "field", path);
  if (rule.field.empty()) invalid(path + ".field", "empty field name");

  const auto kind = string_field(node, "constraint", path);
  auto& c = rule.constraint;
  if (kind == "required") {
    c.kind = ConstraintKind::required;
  } else if (kind == "value_type") {
    c.kind = ConstraintKind::value_type;
    const auto type = parse_value_type(string_field(node, "type", path));
    if (!type) invalid(path + ".type", "unknown value type");
    c.type = *type;
  } else if (kind == "length" || kind == "range") {
    c.kind = kind == "length" ? ConstraintKind::length : ConstraintKind::range;
    c.min = number_field(node, "min", path);
    c.max = number_field(node, "max", path);
  } else if (kind == "uniqueness") {
    c.kind = ConstraintKind::uniqueness;
  } else if (kind == "uniformity") {
    c.kind = ConstraintKind::uniformity;
    const auto it = node.find("allowed");
    if (it == node.end() || !it->is_array() || it->empty()) invalid(path + ".allowed", "expected non-empty array");
    c.allowed.assign(it->begin(), it->end());
  } else if (kind == "cross_field") {
    c.kind = ConstraintKind::cross_field;
    c.other_field = string_field(node, "other", path);
    const auto rel = string_field(node, "relation", path);
    if (rel == "lt") c.relation = Relation::lt;
    else if (rel == "le") c.relation = Relation::le;
    else if (rel == "gt") c.relation = Relation::gt;
    else if (rel == "ge") c.relation = Relation::ge;
    else if (rel == "eq") c.relation = Relation::eq;
    else if (rel == "neq") c.relation = Relation::neq;
    else invalid(path + ".relation", "unknown relation '" + rel + "'");
  } else {
    invalid(path + ".constraint", "unknown constraint '" + kind + "'");
  }

  const auto severity = node.contains("severity") ? string_field(node, "severity", path) : std::string("mandatory");
  if (severity == "mandatory") rule.severity = Severity::mandatory;
  else if (severity == "optional") rule.severity = Severity::optional;
  else invalid(path + ".severity", "expected mandatory or optional");

  const auto action = string_field(node, "action", path);
  if (action == "delete_record") {
    rule.action.kind = ActionKind::delete_record;
  } else if (action == "delete_field") {
    rule.action.kind = ActionKind::delete_field;
  } else if (action == "replace") {
    rule.action.kind = ActionKind::replace;
    if (!node.contains("default")) invalid(path + ".default", "replace needs a default");
    rule.action.default_value = node["default"];
  } else if (action == "predict") {
    rule.action.kind = ActionKind::predict;
    const auto strategy = node.contains("strategy") ? string_field(node, "strategy", path) : std::string("mean");
    if (strategy == "mean") rule.action.strategy = PredictStrategy::mean;
    else if (strategy == "mode") rule.action.strategy = PredictStrategy::mode;
    else invalid(path + ".strategy", "expected mean or mode");
    if (node.contains("default")) rule.action.default_value = node["default"];
  } else {
    invalid(path + ".action", "unknown action '" + action + "'");
  }
  try {
    check_rule(rule);
  } catch (const Error& e) {
    invalid(path, e.what());
  }
  return rule;
}

std::vector<ValidationRule> rules_from_json(const Json& array, const std::string& path) {
  if (!array.is_array()) invalid(path, "expected array of rules");
  std::vector<ValidationRule> rules;
  for (std::size_t i = 0; i < array.size(); ++i) {
    rules.push_back(rule_from_json(array[i], path + "[" + std::to_string(i) + "]"));
  }
  return rules;
}

Json to_json(const ValidationRule& rule) {
  Json out = Json::object();
  if (!rule.id.empty()) out["id"] = rule.id;
  out["field"] = rule.field;
  out["constraint"] = to_string(rule.constraint.kind);
  switch (rule.constraint.kind) {
    case ConstraintKind::value_type: out["type"] = to_string(rule.constraint.type); break;
    case ConstraintKind::length:
    case ConstraintKind::range:
      out["min"] = rule.constraint.min;
      out["max"] = rule.constraint.max;
      break;
    case ConstraintKind::uniformity: out["allowed"] = rule.constraint.allowed; break;
    case ConstraintKind::cross_field:
      out["other"] = rule.constraint.other_field;
      out["relation"] = to_string(rule.constraint.relation);
      break;
    default: break;
  }
  out["severity"] = to_string(rule.severity);
  out["action"] = to_string(rule.action.kind);
  if (rule.action.kind == ActionKind::predict) {
    out["strategy"] = rule.action.strategy == PredictStrategy::mean ? "mean" : "mode";
  }
  if (!rule.action.default_value.is_null() || rule.action.kind == ActionKind::replace) {
    out["default"] = rule.action.default_value;
  }
  return out;
}

void check_rule(const ValidationRule& rule) {
  const auto& c = rule.constraint;
  if ((c.kind == ConstraintKind::length || c.kind == ConstraintKind::range) && !(c.min <= c.max)) {
    throw Error(ErrorCode::InvalidRule, "bounds out of order for field " + rule.field, rule.field);
  }
  if (c.kind == ConstraintKind::length && c.min < 0) {
    throw Error(ErrorCode::InvalidRule, "negative length bound for field " + rule.field, rule.field);
  }
  const auto& dflt = rule.action.default_value;
  if (dflt.is_null()) {
    if (rule.action.kind == ActionKind::replace && c.kind != ConstraintKind::required) {
      // Replacing with null blanks the field, which is legal for optional fields.
      return;
    }
    if (rule.action.kind == ActionKind::replace && c.kind == ConstraintKind::required) {
      throw Error(ErrorCode::InvalidRule, "null default cannot satisfy `required` on " + rule.field, rule.field);
    }
    return;
  }
  bool compatible = true;
  switch (c.kind) {
    case ConstraintKind::value_type: compatible = value_conforms(dflt, c.type); break;
    case ConstraintKind::range: compatible = dflt.is_number(); break;
    case ConstraintKind::length: compatible = dflt.is_string(); break;
    default: break;
  }
  if (!compatible) {
    throw Error(ErrorCode::InvalidRule, "default value type-incompatible with constraint on " + rule.field, rule.field);
  }
}

RulePackSet load_rule_packs(const std::filesystem::path& dir) {
  RulePackSet packs;
  if (!std::filesystem::is_directory(dir)) return packs;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".json") continue;
    const auto doc = parse_json(read_file(entry.path()), entry.path().string());
    packs[entry.path().stem().string()] = rules_from_json(doc, entry.path().filename().string());
  }
  return packs;
}

// ---------------------------------------------------------------------------
// Plan compilation

ConstraintPlan compile_rules(std::span<const ValidationRule> rules, std::string_view domain,
                             const RulePackSet& overlays, std::size_t window) {
  ConstraintPlan plan;
  plan.domain = std::string(domain);
  plan.window = window == 0 ? kDefaultWindow : window;

  auto key_of = [](const ValidationRule& r) { return std::make_pair(r.field, r.constraint.kind); };
  std::map<std::pair<std::string, ConstraintKind>, std::size_t> index;
  for (const auto& rule : rules) {
    check_rule(rule);
    const auto key = key_of(rule);
    const auto it = index.find(key);
    if (it != index.end()) {
      const auto& existing = plan.entries[it->second];
      if (existing.action != rule.action || existing.constraint != rule.constraint ||
          existing.severity != rule.severity) {
        throw Error(ErrorCode::ConflictingRules,
                    "conflicting rules for " + rule.field + "/" + std::string(to_string(rule.constraint.kind)),
                    rule.field);
      }
      continue;
    }
    index.emplace(key, plan.entries.size());
    plan.entries.push_back(rule);
  }
  if (const auto overlay = overlays.find(domain); overlay != overlays.end()) {
    for (const auto& rule : overlay->second) {
      if (index.emplace(key_of(rule), plan.entries.size()).second) plan.entries.push_back(rule);
    }
  }
  return plan;
}

// ---------------------------------------------------------------------------
// State

bool CleaningState::seen(const std::string& field, const Json& value) const {
  const auto it = unique_.find(field);
  return it != unique_.end() && it->second.count(value.dump()) > 0;
}

std::span<const Json> CleaningState::history(const std::string& field) const {
  const auto it = history_.find(field);
  if (it == history_.end()) return {};
  return it->second;
}

void CleaningState::commit(const Json& fields, const ConstraintPlan& plan) {
  for (const auto& entry : plan.entries) {
    const auto it = fields.find(entry.field);
    if (it == fields.end() || it->is_null()) continue;
    if (entry.constraint.kind == ConstraintKind::uniqueness) unique_[entry.field].insert(it->dump());
  }
  // One history sample per field per record, even if several predict rules target it.
  std::set<std::string> predicted;
  for (const auto& entry : plan.entries) {
    if (entry.action.kind == ActionKind::predict) predicted.insert(entry.field);
  }
  for (const auto& field : predicted) {
    const auto it = fields.find(field);
    if (it == fields.end() || it->is_null()) continue;
    auto& window = history_[field];
    window.push_back(*it);
    if (window.size() > plan.window) window.erase(window.begin(), window.end() - static_cast<std::ptrdiff_t>(plan.window));
  }
}

void CleaningState::clear() {
  history_.clear();
  unique_.clear();
}

// ---------------------------------------------------------------------------
// Validation

namespace {

std::size_t utf8_length(const std::string& s) {
  std::size_t n = 0;
  for (const unsigned char c : s) {
    if ((c & 0xC0) != 0x80) ++n;
  }
  return n;
}

/// Three-way comparison for cross-field checks; nullopt when incomparable.
std::optional<int> compare_values(const Json& a, const Json& b) {
  auto sign = [](auto x, auto y) { return x < y ? -1 : (y < x ? 1 : 0); };
  if (a.is_number() && b.is_number()) {
    if (a.is_number_integer() && b.is_number_integer()) return sign(a.get<std::int64_t>(), b.get<std::int64_t>());
    return sign(a.get<double>(), b.get<double>());
  }
  if (a.is_string() && b.is_string()) {
    const auto& sa = a.get_ref<const std::string&>();
    const auto& sb = b.get_ref<const std::string&>();
    const auto ta = parse_rfc3339(sa);
    const auto tb = parse_rfc3339(sb);
    if (ta && tb) return sign(*ta, *tb);
    return sign(sa, sb);
  }
  if (a.is_boolean() && b.is_boolean()) return sign(a.get<bool>(), b.get<bool>());
  return std::nullopt;
}

bool relation_holds(Relation relation, int cmp) {
  switch (relation) {
    case Relation::lt: return cmp < 0;
    case Relation::le: return cmp <= 0;
    case Relation::gt: return cmp > 0;
    case Relation::ge: return cmp >= 0;
    case Relation::eq: return cmp == 0;
    case Relation::neq: return cmp != 0;
  }
  return false;
}

bool entry_satisfied(const ValidationRule& entry, const Json& fields, const CleaningState* state) {
  const auto it = fields.find(entry.field);
  const bool present = it != fields.end() && !it->is_null();
  const auto& c = entry.constraint;
  if (c.kind == ConstraintKind::required) return present;
  if (!present) return true;
  const Json& value = *it;
  switch (c.kind) {
    case ConstraintKind::required: return true;
    case ConstraintKind::value_type: return value_conforms(value, c.type);
    case ConstraintKind::length: {
      if (!value.is_string()) return false;
      const auto n = static_cast<double>(utf8_length(value.get_ref<const std::string&>()));
      return n >= c.min && n <= c.max;
    }
    case ConstraintKind::range: {
      if (!value.is_number()) return false;
      const double v = value.get<double>();
      return v >= c.min && v <= c.max;
    }
    case ConstraintKind::uniqueness: return state == nullptr || !state->seen(entry.field, value);
    case ConstraintKind::uniformity:
      return std::find(c.allowed.begin(), c.allowed.end(), value) != c.allowed.end();
    case ConstraintKind::cross_field: {
      const auto other = fields.find(c.other_field);
      if (other == fields.end() || other->is_null()) return true;
      const auto cmp = compare_values(value, *other);
      return cmp && relation_holds(c.relation, *cmp);
    }
  }
  return true;
}

std::optional<Json> predict_value(const ValidationRule& entry, const CleaningState* state) {
  if (!state) return std::nullopt;
  const auto window = state->history(entry.field);
  if (window.empty()) return std::nullopt;
  if (entry.action.strategy == PredictStrategy::mean) {
    double sum = 0.0;
    std::size_t n = 0;
    bool all_integer = true;
    for (const auto& v : window) {
      if (!v.is_number()) continue;
      sum += v.get<double>();
      ++n;
      all_integer = all_integer && v.is_number_integer();
    }
    if (n == 0) return std::nullopt;
    const double mean = sum / static_cast<double>(n);
    if (all_integer) return Json(static_cast<std::int64_t>(std::llround(mean)));
    return Json(mean);
  }
  // Mode; ties resolve to the smallest value in JSON ordering.
  std::map<Json, std::size_t> counts;
  for (const auto& v : window) ++counts[v];
  const auto best = std::max_element(counts.begin(), counts.end(),
                                     [](const auto& a, const auto& b) { return a.second < b.second; });
  return best->first;
}

}  // namespace

std::vector<Violation> validate(const Json& fields, const ConstraintPlan& plan, const CleaningState* state) {
  std::vector<Violation> out;
  for (std::size_t i = 0; i < plan.entries.size(); ++i) {
    const auto& entry = plan.entries[i];
    if (entry_satisfied(entry, fields, state)) continue;
    const auto it = fields.find(entry.field);
    out.push_back(Violation{entry.field, entry.constraint.kind, it == fields.end() ? Json() : *it, entry.severity, i});
  }
  return out;
}

CleanOutcome clean(const Json& fields, std::span<const Violation> violations, const ConstraintPlan& plan,
                   const CleaningState* state) {
  CleanOutcome outcome;
  outcome.record = fields;
  for (const auto& violation : violations) {
    if (violation.entry >= plan.entries.size()) continue;
    const auto& entry = plan.entries[violation.entry];
    switch (entry.action.kind) {
      case ActionKind::delete_record:
        outcome.applied.push_back({entry.field, ActionKind::delete_record, Json()});
        outcome.status = CleanStatus::dropped;
        return outcome;
      case ActionKind::delete_field:
        outcome.record.erase(entry.field);
        outcome.applied.push_back({entry.field, ActionKind::delete_field, Json()});
        break;
      case ActionKind::replace:
        outcome.record[entry.field] = entry.action.default_value;
        outcome.applied.push_back({entry.field, ActionKind::replace, entry.action.default_value});
        break;
      case ActionKind::predict: {
        auto value = predict_value(entry, state);
        if (!value && !entry.action.default_value.is_null()) value = entry.action.default_value;
        if (value) {
          outcome.record[entry.field] = *value;
          outcome.applied.push_back({entry.field, ActionKind::predict, *value});
        }
        break;
      }
    }
  }
  if (!violations.empty()) {
    for (const auto& residual : validate(outcome.record, plan, state)) {
      if (residual.severity == Severity::mandatory) {
        outcome.status = CleanStatus::dropped;
        return outcome;
      }
    }
  }
  return outcome;
}

VerifyReport verify(const CleanOutcome& outcome, const ConstraintPlan& plan, std::span<const FieldSchema> schema,
                    const CleaningState* state) {
  VerifyReport report;
  if (!outcome.kept()) return report;
  report.residual = validate(outcome.record, plan, state);
  for (const auto& [name, value] : outcome.record.items()) {
    if (value.is_null()) continue;
    const auto* field = find_field(schema, name);
    if (field && !value_conforms(value, field->value_type)) {
      report.residual.push_back(Violation{name, ConstraintKind::value_type, value, Severity::mandatory, plan.entries.size()});
    }
  }
  report.pass = std::none_of(report.residual.begin(), report.residual.end(),
                             [](const Violation& v) { return v.severity == Severity::mandatory; });
  return report;
}

CleaningRun run_workflow(const Json& fields, const ConstraintPlan& plan, std::span<const FieldSchema> schema,
                         CleaningState& state) {
  CleaningRun run;
  run.violations = validate(fields, plan, &state);
  run.outcome = clean(fields, run.violations, plan, &state);
  run.report = verify(run.outcome, plan, schema, &state);
  if (run.kept()) state.commit(run.outcome.record, plan);
  return run;
}

}  // namespace policylab::cleaning
