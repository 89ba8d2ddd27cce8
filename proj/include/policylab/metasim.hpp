#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "policylab/criterion.hpp"
#include "policylab/json_util.hpp"
#include "policylab/simengine.hpp"

namespace policylab::metasim {

enum class NodeKind { goal, objective, step };

std::string_view to_string(NodeKind kind);

struct PolicyNode {
  std::string id;  // dash path, e.g. "0-1-0"
  NodeKind kind = NodeKind::goal;
  std::string title;
  Json params = Json::object();
  std::vector<Criterion> criteria;  // goals only
  std::string model;                // steps only
  Json model_params = Json::object();
  std::vector<PolicyNode> children;
};

struct PolicyTree {
  std::string name;
  Json params = Json::object();  // policy-level layer, provenance "policy"
  std::vector<PolicyNode> goals;
};

inline constexpr std::string_view kPolicyProvenance = "policy";

/// Document: `{name, params, nodes: [goal...]}`, each node
/// `{id, kind, title, params, criteria, model, model_params, children}`.
/// Throws Error(StructureError), Error(IdError) or CriterionParseError.
PolicyTree load_tree(const Json& document);
PolicyTree load_tree_text(std::string_view text);
Json to_json(const PolicyTree& tree);

struct ResolvedParams {
  Json values = Json::object();
  std::map<std::string, std::string> provenance;  // key -> node id or "policy"
};

/// Nearest-ancestor-wins view of the params visible at `node_id`.
ResolvedParams resolve_params(const PolicyTree& tree, std::string_view node_id);

/// Resolved params for every step, keyed by step id. Throws
/// Error(MissingRequired) when a step lacks `population`, `rounds`, or a
/// population size (`population_sizes` list or scalar `population_size`).
std::map<std::string, ResolvedParams> propagate(const PolicyTree& tree);

struct RoundResult {
  std::size_t round = 0;
  std::size_t population_size = 0;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, double>> attributes;  // final cycle
  std::vector<sim::CycleAttributes> trace;
};

struct StepResults {
  std::string step_id;
  std::string model;
  ResolvedParams params;
  std::size_t cycles = 0;
  std::vector<RoundResult> rounds;
};

struct ObjectiveResults {
  std::string id;
  std::string title;
  std::vector<StepResults> steps;
  AggregateSet aggregates;
  ResolvedParams params;
  std::vector<bool> verdicts;  // one per goal criterion
};

struct Ranking {
  std::vector<std::pair<std::string, double>> proportions;  // objective id -> satisfied / total
  bool no_criteria = false;
};

struct GoalResults {
  std::string id;
  std::string title;
  std::vector<std::string> criteria;
  std::vector<ObjectiveResults> objectives;
  Ranking ranking;
};

struct ResultsTree {
  std::string name;
  std::uint64_t seed = 0;
  std::vector<GoalResults> goals;
};

/// Pools every round of every step into {avg, min, max} per attribute.
AggregateSet aggregate(const std::vector<StepResults>& steps);

Ranking rank(const GoalResults& goal);

/// Runs every step's rounds (round r: size population_sizes[r], seed
/// mix(seed, hash(step id), r)), aggregates per objective, evaluates each
/// goal criterion per objective and ranks. Deterministic for (tree, seed)
/// regardless of `options.threads`.
ResultsTree execute(const PolicyTree& tree, std::uint64_t seed, const sim::ExecutionOptions& options = {});

/// Results document. With `include_traces` each round carries its per-cycle
/// attribute trace.
Json to_json(const ResultsTree& results, bool include_traces = true);

}  // namespace policylab::metasim
