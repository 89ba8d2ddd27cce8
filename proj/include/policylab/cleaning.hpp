#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "policylab/json_util.hpp"
#include "policylab/schema.hpp"

namespace policylab::cleaning {

// ---------------------------------------------------------------------------
// Domain identification (bag of words)

struct DomainLexicon {
  std::string domain;
  std::set<std::string> words;
};

inline constexpr std::string_view kGenericDomain = "generic";

/// Splits on every non-alphanumeric byte and lowercases. No stemming.
std::vector<std::string> tokenize(std::string_view text);

struct DomainMatch {
  std::string domain;
  double score = 0.0;

  bool operator==(const DomainMatch&) const = default;
};

/// score(d) = |tokens ∩ words(d)| / |tokens| over lowercased, deduplicated
/// tokens. Highest score wins, ties go to the lexicographically smallest
/// domain name. Below `min_score` (or with no tokens) the result is "generic".
DomainMatch identify_domain(std::span<const std::string> tokens, std::span<const DomainLexicon> lexicons,
                            double min_score);

/// Tokens of every string-valued field of a record, in field order.
std::vector<std::string> text_tokens(const Json& fields);

DomainLexicon load_lexicon_file(const std::filesystem::path& path, std::string domain);
/// Loads every `<domain>.txt` in `dir`, sorted by domain name.
std::vector<DomainLexicon> load_lexicons(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Rules

enum class ConstraintKind { required, value_type, length, range, uniqueness, uniformity, cross_field };
enum class Relation { lt, le, gt, ge, eq, neq };
enum class Severity { mandatory, optional };
enum class ActionKind { delete_record, delete_field, replace, predict };
enum class PredictStrategy { mean, mode };

std::string_view to_string(ConstraintKind kind);
std::string_view to_string(ActionKind kind);
std::string_view to_string(Severity severity);

struct Constraint {
  ConstraintKind kind = ConstraintKind::required;
  ValueType type = ValueType::text;  // value_type
  double min = 0.0;                  // length / range
  double max = 0.0;
  std::vector<Json> allowed;         // uniformity
  std::string other_field;           // cross_field
  Relation relation = Relation::eq;

  bool operator==(const Constraint&) const = default;
};

struct Action {
  ActionKind kind = ActionKind::delete_record;
  Json default_value;  // replace value; predict fallback (may be null for predict)
  PredictStrategy strategy = PredictStrategy::mean;

  bool operator==(const Action&) const = default;
};

struct ValidationRule {
  std::string id;
  std::string field;
  Constraint constraint;
  Severity severity = Severity::mandatory;
  Action action;

  bool operator==(const ValidationRule&) const = default;
};

/// Rule document form:
/// `{"id","field","constraint","severity","action", ...}` with constraint
/// parameters `type` | `min`,`max` | `allowed` | `other`,`relation` and action
/// parameters `default`, `strategy`. Throws Error(InvalidRule).
ValidationRule rule_from_json(const Json& node, const std::string& path);
std::vector<ValidationRule> rules_from_json(const Json& array, const std::string& path);
Json to_json(const ValidationRule& rule);

/// Checks the rule invariants: ordered bounds, defaults compatible with the constraint.
void check_rule(const ValidationRule& rule);

using RulePackSet = std::map<std::string, std::vector<ValidationRule>, std::less<>>;

/// Loads every `<domain>.json` rule pack in `dir`.
RulePackSet load_rule_packs(const std::filesystem::path& dir);

struct ConstraintPlan {
  std::string domain{kGenericDomain};
  std::vector<ValidationRule> entries;
  std::size_t window = 50;

  bool operator==(const ConstraintPlan&) const = default;
};

inline constexpr std::size_t kDefaultWindow = 50;

/// User rules in declaration order, followed by the domain overlay's rules
/// for any (field, constraint) pair the user did not already cover.
/// Duplicated pairs with identical actions collapse to one entry; differing
/// actions throw Error(ConflictingRules).
ConstraintPlan compile_rules(std::span<const ValidationRule> rules, std::string_view domain,
                             const RulePackSet& overlays = {}, std::size_t window = kDefaultWindow);

// ---------------------------------------------------------------------------
// Per-dataset state and the validate / clean / verify workflow

/// Trailing windows of kept values (for prediction) and the set of kept
/// values of every uniqueness-constrained field.
class CleaningState {
 public:
  bool seen(const std::string& field, const Json& value) const;
  std::span<const Json> history(const std::string& field) const;

  /// Records the fields of a kept record.
  void commit(const Json& fields, const ConstraintPlan& plan);
  void clear();

 private:
  std::unordered_map<std::string, std::vector<Json>> history_;
  std::unordered_map<std::string, std::unordered_set<std::string>> unique_;
};

struct Violation {
  std::string field;
  ConstraintKind constraint = ConstraintKind::required;
  Json observed;
  Severity severity = Severity::mandatory;
  std::size_t entry = 0;  // index into ConstraintPlan::entries

  bool operator==(const Violation&) const = default;
};

struct AppliedAction {
  std::string field;
  ActionKind action = ActionKind::replace;
  Json value;  // value written, if any

  bool operator==(const AppliedAction&) const = default;
};

enum class CleanStatus { kept, dropped };

struct CleanOutcome {
  CleanStatus status = CleanStatus::kept;
  Json record = Json::object();
  std::vector<AppliedAction> applied;

  bool kept() const { return status == CleanStatus::kept; }
  bool operator==(const CleanOutcome&) const = default;
};

struct VerifyReport {
  bool pass = false;
  std::vector<Violation> residual;
};

/// One violation per violated plan entry, in plan order. Non-`required`
/// constraints hold vacuously on absent or null values.
std::vector<Violation> validate(const Json& fields, const ConstraintPlan& plan, const CleaningState* state = nullptr);

/// Applies the violated entries' actions in plan order. `delete_record` drops
/// immediately; `predict` uses the mean (numeric) or mode (otherwise) of the
/// field's trailing window and falls back to the rule default. A record that
/// still violates a mandatory entry afterwards is dropped.
CleanOutcome clean(const Json& fields, std::span<const Violation> violations, const ConstraintPlan& plan,
                   const CleaningState* state = nullptr);

/// Re-validates a kept outcome and checks schema type conformance.
/// pass ⇔ no mandatory residual.
VerifyReport verify(const CleanOutcome& outcome, const ConstraintPlan& plan, std::span<const FieldSchema> schema,
                    const CleaningState* state = nullptr);

struct CleaningRun {
  std::vector<Violation> violations;
  CleanOutcome outcome;
  VerifyReport report;

  bool kept() const { return outcome.kept() && report.pass; }
};

/// validate → clean → verify; commits the record to `state` when it survives.
CleaningRun run_workflow(const Json& fields, const ConstraintPlan& plan, std::span<const FieldSchema> schema,
                         CleaningState& state);

}  // namespace policylab::cleaning
