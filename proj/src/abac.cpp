#include "policylab/abac.hpp"

#include <algorithm>
#include <cctype>

#include "policylab/error.hpp"
#include "policylab/json_util.hpp"

namespace policylab::abac {

namespace {

std::optional<std::string_view> lookup(const AttributeMap& attrs, std::string_view key) {
  const auto it = attrs.find(key);
  if (it == attrs.end()) return std::nullopt;
  return std::string_view(it->second);
}

bool condition_holds(const Condition& cond, std::optional<std::string_view> value, std::string_view rule_id) {
  switch (cond.op) {
    case ConditionOp::eq:
    case ConditionOp::neq:
      if (cond.values.size() != 1) {
        throw Error(ErrorCode::MalformedRule, "rule " + std::string(rule_id) + ": eq/neq needs exactly one value",
                    std::string(rule_id));
      }
      if (!value) return false;
      return (*value == cond.values.front()) == (cond.op == ConditionOp::eq);
    case ConditionOp::in:
      if (cond.values.empty()) {
        throw Error(ErrorCode::MalformedRule, "rule " + std::string(rule_id) + ": `in` needs at least one value",
                    std::string(rule_id));
      }
      if (!value) return false;
      return std::find(cond.values.begin(), cond.values.end(), *value) != cond.values.end();
  }
  throw Error(ErrorCode::MalformedRule, "rule " + std::string(rule_id) + ": unknown operator", std::string(rule_id));
}

ConditionOp parse_op(std::string_view op, const std::string& path) {
  if (op == "eq") return ConditionOp::eq;
  if (op == "neq") return ConditionOp::neq;
  if (op == "in") return ConditionOp::in;
  throw Error(ErrorCode::ParseError, path + ": unsupported operator '" + std::string(op) + "'", path);
}

std::vector<std::string> parse_values(const Json& node, const std::string& path) {
  std::vector<std::string> values;
  if (node.is_string()) {
    values.push_back(node.get<std::string>());
  } else if (node.is_array()) {
    for (std::size_t i = 0; i < node.size(); ++i) {
      if (!node[i].is_string()) {
        throw Error(ErrorCode::ParseError, path + "[" + std::to_string(i) + "]: expected string", path);
      }
      values.push_back(node[i].get<std::string>());
    }
  } else {
    throw Error(ErrorCode::ParseError, path + ": expected string or array of strings", path);
  }
  return values;
}

Condition make_condition(std::string attr, ConditionOp op, std::vector<std::string> values, const std::string& path) {
  if ((op == ConditionOp::eq || op == ConditionOp::neq) && values.size() != 1) {
    throw Error(ErrorCode::ParseError, path + ": eq/neq takes exactly one value", path);
  }
  if (op == ConditionOp::in && values.empty()) {
    throw Error(ErrorCode::ParseError, path + ": `in` takes at least one value", path);
  }
  return Condition{std::move(attr), op, std::move(values)};
}

std::vector<Condition> parse_conditions(const Json& block, const std::string& path) {
  std::vector<Condition> out;
  if (block.is_null()) return out;
  if (block.is_object()) {
    for (const auto& [attr, spec] : block.items()) {
      const auto field = path + "." + attr;
      if (spec.is_object()) {
        const auto op = parse_op(require_string(spec, "op", field), field + ".op");
        const Json* values = nullptr;
        if (spec.contains("values")) values = &spec["values"];
        else if (spec.contains("value")) values = &spec["value"];
        if (!values) throw Error(ErrorCode::ParseError, field + ": missing value", field);
        out.push_back(make_condition(attr, op, parse_values(*values, field), field));
      } else if (spec.is_array()) {
        out.push_back(make_condition(attr, ConditionOp::in, parse_values(spec, field), field));
      } else {
        out.push_back(make_condition(attr, ConditionOp::eq, parse_values(spec, field), field));
      }
    }
    return out;
  }
  if (block.is_array()) {
    for (std::size_t i = 0; i < block.size(); ++i) {
      const auto field = path + "[" + std::to_string(i) + "]";
      const auto& spec = block[i];
      auto attr = require_string(spec, "attr", field);
      const auto op = parse_op(optional_string(spec, "op", field, "eq"), field + ".op");
      const Json* values = nullptr;
      if (spec.contains("values")) values = &spec["values"];
      else if (spec.contains("value")) values = &spec["value"];
      if (!values) throw Error(ErrorCode::ParseError, field + ": missing value", field);
      out.push_back(make_condition(std::move(attr), op, parse_values(*values, field), field));
    }
    return out;
  }
  throw Error(ErrorCode::ParseError, path + ": expected object or array", path);
}

}  // namespace

bool rule_matches(const AbacRule& rule, const SubjectAttrs& subject, std::string_view action,
                  const AttributeMap& resource) {
  const bool action_ok = rule.action_pattern == "*" || rule.action_pattern == action;
  // Conditions are still checked on a non-matching action so malformed rules
  // surface regardless of the request.
  bool subject_ok = true;
  for (const auto& cond : rule.subject_conditions) {
    std::optional<std::string_view> value =
        cond.attribute == "subject_id" ? std::optional<std::string_view>(subject.subject_id)
                                       : lookup(subject.attributes, cond.attribute);
    subject_ok = condition_holds(cond, value, rule.id) && subject_ok;
  }
  bool resource_ok = true;
  for (const auto& cond : rule.resource_conditions) {
    resource_ok = condition_holds(cond, lookup(resource, cond.attribute), rule.id) && resource_ok;
  }
  return action_ok && subject_ok && resource_ok;
}

Decision evaluate(const SubjectAttrs& subject, std::string_view action, const AttributeMap& resource,
                  std::span<const AbacRule> policy_set) {
  const AbacRule* first_permit = nullptr;
  for (const auto& rule : policy_set) {
    if (!rule_matches(rule, subject, action, resource)) continue;
    if (rule.effect == Effect::deny) return Decision{Outcome::Deny, rule.id};
    if (!first_permit) first_permit = &rule;
  }
  if (first_permit) return Decision{Outcome::Permit, first_permit->id};
  return Decision{Outcome::Deny, std::nullopt};
}

std::vector<AbacRule> load_policy_set(std::string_view document) {
  if (std::all_of(document.begin(), document.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); })) {
    return {};
  }
  const Json root = parse_json(document, "policy set");
  if (!root.is_array()) throw Error(ErrorCode::ParseError, "policy set: expected a JSON array", "$");
  std::vector<AbacRule> rules;
  rules.reserve(root.size());
  for (std::size_t i = 0; i < root.size(); ++i) {
    const auto path = "[" + std::to_string(i) + "]";
    const auto& node = root[i];
    if (!node.is_object()) throw Error(ErrorCode::ParseError, path + ": expected object", path);
    AbacRule rule;
    rule.id = optional_string(node, "id", path, "rule-" + std::to_string(i));
    const auto effect = require_string(node, "effect", path);
    if (effect == "permit") rule.effect = Effect::permit;
    else if (effect == "deny") rule.effect = Effect::deny;
    else throw Error(ErrorCode::ParseError, path + ".effect: expected permit or deny", path + ".effect");
    rule.action_pattern = optional_string(node, "action", path, "*");
    if (node.contains("subject")) rule.subject_conditions = parse_conditions(node["subject"], path + ".subject");
    if (node.contains("resource")) rule.resource_conditions = parse_conditions(node["resource"], path + ".resource");
    if (rule.action_pattern == "*" && rule.subject_conditions.empty() && rule.resource_conditions.empty()) {
      throw Error(ErrorCode::ParseError, path + ": rule has neither an action nor any condition", path);
    }
    rules.push_back(std::move(rule));
  }
  return rules;
}

std::vector<AbacRule> load_policy_file(const std::filesystem::path& path) {
  return load_policy_set(read_file(path));
}

Decision Authorizer::check(const SubjectAttrs& subject, std::string_view action, const AttributeMap& resource) const {
  return evaluate(subject, action, resource, rules_);
}

void Authorizer::require(const SubjectAttrs& subject, std::string_view action, const AttributeMap& resource) const {
  const auto decision = check(subject, action, resource);
  if (!decision.permitted()) {
    throw Error(ErrorCode::AccessDenied,
                "access denied: " + subject.subject_id + " may not " + std::string(action),
                decision.matched_rule.value_or(""));
  }
}

}  // namespace policylab::abac
