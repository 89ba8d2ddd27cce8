#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace policylab::abac {

using AttributeMap = std::map<std::string, std::string, std::less<>>;

struct SubjectAttrs {
  std::string subject_id;
  AttributeMap attributes;
};

enum class Effect { permit, deny };
enum class ConditionOp { eq, neq, in };

/// A single attribute test. `eq`/`neq` carry exactly one value, `in` one or more.
/// A condition on an attribute the request does not carry never holds.
struct Condition {
  std::string attribute;
  ConditionOp op = ConditionOp::eq;
  std::vector<std::string> values;

  bool operator==(const Condition&) const = default;
};

struct AbacRule {
  std::string id;
  Effect effect = Effect::permit;
  std::string action_pattern = "*";  // "*" matches every action
  std::vector<Condition> subject_conditions;
  std::vector<Condition> resource_conditions;

  bool operator==(const AbacRule&) const = default;
};

enum class Outcome { Permit, Deny };

struct Decision {
  Outcome outcome = Outcome::Deny;
  std::optional<std::string> matched_rule;

  bool permitted() const { return outcome == Outcome::Permit; }
};

/// True if every part of `rule` (action pattern and all conditions) matches.
/// `subject_id` is visible to subject conditions as the attribute `subject_id`.
bool rule_matches(const AbacRule& rule, const SubjectAttrs& subject, std::string_view action,
                  const AttributeMap& resource);

/// Deny-overrides, then first-applicable among permits; default deny.
/// Throws Error(MalformedRule) for a condition whose operator or arity is invalid.
Decision evaluate(const SubjectAttrs& subject, std::string_view action, const AttributeMap& resource,
                  std::span<const AbacRule> policy_set);

/// Parses a policy document: a JSON array of rule objects with keys
/// `effect`, `action`, `subject`, `resource` (and optional `id`).
/// Condition blocks are either objects (`{"role": "analyst"}`, `{"org": ["a","b"]}`,
/// `{"role": {"op": "neq", "value": "guest"}}`) or arrays of
/// `{"attr", "op", "value"|"values"}`. Blank documents yield an empty set.
std::vector<AbacRule> load_policy_set(std::string_view document);
std::vector<AbacRule> load_policy_file(const std::filesystem::path& path);

/// Immutable policy set plus convenience checks used by the service layer.
class Authorizer {
 public:
  Authorizer() = default;
  explicit Authorizer(std::vector<AbacRule> rules) : rules_(std::move(rules)) {}

  Decision check(const SubjectAttrs& subject, std::string_view action, const AttributeMap& resource = {}) const;
  /// Throws Error(AccessDenied) on deny; the error detail carries the matched rule id, if any.
  void require(const SubjectAttrs& subject, std::string_view action, const AttributeMap& resource = {}) const;

  const std::vector<AbacRule>& rules() const { return rules_; }

 private:
  std::vector<AbacRule> rules_;
};

}  // namespace policylab::abac
