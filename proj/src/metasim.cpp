#include "policylab/metasim.hpp"

#include <algorithm>

#include "policylab/error.hpp"
#include "policylab/models.hpp"

namespace policylab::metasim {

namespace {

NodeKind kind_from_text(const std::string& text, const std::string& id) {
  if (text == "goal") return NodeKind::goal;
  if (text == "objective") return NodeKind::objective;
  if (text == "step") return NodeKind::step;
  throw Error(ErrorCode::StructureError, "node " + id + ": unknown kind '" + text + "'", id);
}

const Json* children_of(const Json& node) {
  if (const auto it = node.find("children"); it != node.end()) return &*it;
  if (const auto it = node.find("nodes"); it != node.end()) return &*it;
  return nullptr;
}

PolicyNode load_node(const Json& doc, const std::string& expected_id, NodeKind expected_kind) {
  if (!doc.is_object()) {
    throw Error(ErrorCode::StructureError, "node at position " + expected_id + " is not an object", expected_id);
  }
  PolicyNode node;
  const auto id_it = doc.find("id");
  if (id_it == doc.end() || !id_it->is_string()) {
    throw Error(ErrorCode::IdError, "node at position " + expected_id + " has no id", expected_id);
  }
  node.id = id_it->get<std::string>();
  if (node.id != expected_id) {
    throw Error(ErrorCode::IdError, "node id '" + node.id + "' does not match its position " + expected_id,
                expected_id);
  }
  const auto kind_it = doc.find("kind");
  if (kind_it == doc.end() || !kind_it->is_string()) {
    throw Error(ErrorCode::StructureError, "node " + node.id + " has no kind", node.id);
  }
  node.kind = kind_from_text(kind_it->get<std::string>(), node.id);
  if (node.kind != expected_kind) {
    throw Error(ErrorCode::StructureError,
                "node " + node.id + " is a " + std::string(to_string(node.kind)) + ", expected " +
                    std::string(to_string(expected_kind)),
                node.id);
  }
  node.title = optional_string(doc, "title", node.id + ".title");
  if (const auto it = doc.find("params"); it != doc.end() && !it->is_null()) {
    if (!it->is_object()) throw Error(ErrorCode::StructureError, "node " + node.id + ": params must be an object", node.id);
    node.params = *it;
  }

  if (const auto it = doc.find("criteria"); it != doc.end() && !it->is_null()) {
    if (!it->is_array()) throw Error(ErrorCode::StructureError, "node " + node.id + ": criteria must be a list", node.id);
    if (!it->empty() && node.kind != NodeKind::goal) {
      throw Error(ErrorCode::StructureError, "node " + node.id + ": criteria are only allowed on goals", node.id);
    }
    for (const auto& c : *it) {
      if (!c.is_string()) throw Error(ErrorCode::StructureError, "node " + node.id + ": criterion must be text", node.id);
      node.criteria.push_back(parse_criterion(c.get<std::string>()));
    }
  }

  const auto model_it = doc.find("model");
  const bool has_model = model_it != doc.end() && !model_it->is_null();
  if (node.kind == NodeKind::step) {
    if (!has_model || !model_it->is_string()) {
      throw Error(ErrorCode::StructureError, "step " + node.id + " has no model", node.id);
    }
    node.model = model_it->get<std::string>();
    if (node.model != "rad" && node.model != "wine") {
      throw Error(ErrorCode::UnknownModel, "step " + node.id + ": unknown model '" + node.model + "'", node.id);
    }
    if (const auto it = doc.find("model_params"); it != doc.end() && !it->is_null()) {
      if (!it->is_object()) {
        throw Error(ErrorCode::StructureError, "step " + node.id + ": model_params must be an object", node.id);
      }
      node.model_params = *it;
    }
  } else if (has_model || doc.contains("model_params")) {
    throw Error(ErrorCode::StructureError, "node " + node.id + ": a model is only allowed on steps", node.id);
  }

  const Json* children = children_of(doc);
  if (children && !children->is_null()) {
    if (!children->is_array()) {
      throw Error(ErrorCode::StructureError, "node " + node.id + ": children must be a list", node.id);
    }
    if (node.kind == NodeKind::step && !children->empty()) {
      throw Error(ErrorCode::StructureError, "step " + node.id + " cannot have children", node.id);
    }
    const NodeKind child_kind = node.kind == NodeKind::goal ? NodeKind::objective : NodeKind::step;
    for (std::size_t i = 0; i < children->size(); ++i) {
      node.children.push_back(load_node((*children)[i], node.id + "-" + std::to_string(i), child_kind));
    }
  }
  if (node.kind == NodeKind::objective && node.children.empty()) {
    throw Error(ErrorCode::StructureError, "objective " + node.id + " has no steps", node.id);
  }
  return node;
}

Json node_to_json(const PolicyNode& node) {
  Json out = Json::object();
  out["id"] = node.id;
  out["kind"] = std::string(to_string(node.kind));
  out["title"] = node.title;
  out["params"] = node.params;
  if (node.kind == NodeKind::goal) {
    Json criteria = Json::array();
    for (const auto& c : node.criteria) criteria.push_back(c.source);
    out["criteria"] = std::move(criteria);
  }
  if (node.kind == NodeKind::step) {
    out["model"] = node.model;
    out["model_params"] = node.model_params;
  }
  Json children = Json::array();
  for (const auto& child : node.children) children.push_back(node_to_json(child));
  out["children"] = std::move(children);
  return out;
}

void apply_layer(ResolvedParams& resolved, const Json& layer, const std::string& origin) {
  for (const auto& [key, value] : layer.items()) {
    resolved.values[key] = value;
    resolved.provenance[key] = origin;
  }
}

// Nodes from the root down to `id`, inclusive. Empty if the id is unknown.
std::vector<const PolicyNode*> path_to(const PolicyTree& tree, std::string_view id) {
  std::vector<const PolicyNode*> path;
  const std::vector<PolicyNode>* level = &tree.goals;
  std::size_t pos = 0;
  while (pos <= id.size()) {
    const auto dash = id.find('-', pos);
    const auto part = id.substr(pos, dash == std::string_view::npos ? std::string_view::npos : dash - pos);
    std::size_t index = 0;
    if (part.empty()) return {};
    for (const char c : part) {
      if (c < '0' || c > '9') return {};
      index = index * 10 + static_cast<std::size_t>(c - '0');
    }
    if (index >= level->size()) return {};
    const PolicyNode* node = &(*level)[index];
    path.push_back(node);
    level = &node->children;
    if (dash == std::string_view::npos) break;
    pos = dash + 1;
  }
  return path;
}

struct StepPlan {
  const PolicyNode* step = nullptr;
  ResolvedParams params;
  models::ModelInstance model;
  sim::PopulationModel population;
  std::vector<std::size_t> sizes;
  std::size_t cycles = 0;
};

std::size_t positive_count(const Json& value, const std::string& what, const std::string& step_id) {
  if (!value.is_number_integer() || value.get<std::int64_t>() <= 0) {
    throw Error(ErrorCode::MissingRequired, "step " + step_id + ": " + what + " must be a positive integer", step_id);
  }
  return static_cast<std::size_t>(value.get<std::int64_t>());
}

std::vector<std::size_t> round_sizes(const ResolvedParams& params, std::size_t rounds, const std::string& step_id) {
  const auto& v = params.values;
  std::vector<std::size_t> sizes;
  if (const auto it = v.find("population_sizes"); it != v.end()) {
    if (!it->is_array() || it->empty()) {
      throw Error(ErrorCode::MissingRequired, "step " + step_id + ": population_sizes must be a non-empty list", step_id);
    }
    for (const auto& s : *it) sizes.push_back(positive_count(s, "population_sizes entry", step_id));
  } else if (const auto it2 = v.find("population_size"); it2 != v.end()) {
    sizes.push_back(positive_count(*it2, "population_size", step_id));
  } else {
    throw Error(ErrorCode::MissingRequired, "step " + step_id + " has no population_sizes", step_id);
  }
  if (sizes.size() == 1) sizes.assign(rounds, sizes.front());
  if (sizes.size() < rounds) {
    throw Error(ErrorCode::MissingRequired,
                "step " + step_id + ": population_sizes has " + std::to_string(sizes.size()) + " entries for " +
                    std::to_string(rounds) + " rounds",
                step_id);
  }
  sizes.resize(rounds);
  return sizes;
}

void check_required(const ResolvedParams& params, const std::string& step_id) {
  for (const char* key : {"population", "rounds"}) {
    if (!params.values.contains(key)) {
      throw Error(ErrorCode::MissingRequired, "step " + step_id + " has no " + key, step_id);
    }
  }
  if (!params.values.contains("population_sizes") && !params.values.contains("population_size")) {
    throw Error(ErrorCode::MissingRequired, "step " + step_id + " has no population_sizes", step_id);
  }
}

StepPlan plan_step(const PolicyNode& step, ResolvedParams params) {
  StepPlan plan;
  plan.step = &step;
  const auto& v = params.values;
  if (!v.at("population").is_object()) {
    throw Error(ErrorCode::MissingRequired, "step " + step.id + ": population must be a population model", step.id);
  }
  plan.population = sim::population_model_from_json(v.at("population"), step.id + ".population");
  const std::size_t rounds = positive_count(v.at("rounds"), "rounds", step.id);
  plan.sizes = round_sizes(params, rounds, step.id);
  plan.model = models::make_model(step.model, v);
  plan.cycles = plan.model.default_cycles;
  if (const auto it = v.find("cycles"); it != v.end()) {
    if (!it->is_number_integer() || it->get<std::int64_t>() < 0) {
      throw Error(ErrorCode::InvalidSpec, "step " + step.id + ": cycles must be a non-negative integer", step.id);
    }
    plan.cycles = static_cast<std::size_t>(it->get<std::int64_t>());
  }
  plan.params = std::move(params);
  return plan;
}

Json params_to_json(const ResolvedParams& params) {
  Json provenance = Json::object();
  for (const auto& [k, origin] : params.provenance) provenance[k] = origin;
  return Json{{"values", params.values}, {"provenance", std::move(provenance)}};
}

Json attributes_to_json(const std::vector<std::pair<std::string, double>>& attrs) {
  Json out = Json::object();
  for (const auto& [k, v] : attrs) out[k] = v;
  return out;
}

}  // namespace

std::string_view to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::goal: return "goal";
    case NodeKind::objective: return "objective";
    case NodeKind::step: return "step";
  }
  return "goal";
}

PolicyTree load_tree(const Json& document) {
  if (!document.is_object()) throw Error(ErrorCode::StructureError, "policy tree must be an object");
  PolicyTree tree;
  tree.name = optional_string(document, "name", "name");
  if (const auto it = document.find("params"); it != document.end() && !it->is_null()) {
    if (!it->is_object()) throw Error(ErrorCode::StructureError, "policy params must be an object", "params");
    tree.params = *it;
  }
  const auto nodes = document.find("nodes");
  if (nodes == document.end() || !nodes->is_array()) {
    throw Error(ErrorCode::StructureError, "policy tree has no nodes list", "nodes");
  }
  for (std::size_t i = 0; i < nodes->size(); ++i) {
    tree.goals.push_back(load_node((*nodes)[i], std::to_string(i), NodeKind::goal));
  }
  return tree;
}

PolicyTree load_tree_text(std::string_view text) { return load_tree(parse_json(text, "policy tree")); }

Json to_json(const PolicyTree& tree) {
  Json nodes = Json::array();
  for (const auto& goal : tree.goals) nodes.push_back(node_to_json(goal));
  return Json{{"name", tree.name}, {"params", tree.params}, {"nodes", std::move(nodes)}};
}

ResolvedParams resolve_params(const PolicyTree& tree, std::string_view node_id) {
  const auto path = path_to(tree, node_id);
  if (path.empty()) throw Error(ErrorCode::NotFound, "no node " + std::string(node_id), std::string(node_id));
  ResolvedParams resolved;
  apply_layer(resolved, tree.params, std::string(kPolicyProvenance));
  for (const auto* node : path) {
    apply_layer(resolved, node->params, node->id);
    apply_layer(resolved, node->model_params, node->id);
  }
  return resolved;
}

std::map<std::string, ResolvedParams> propagate(const PolicyTree& tree) {
  std::map<std::string, ResolvedParams> out;
  for (const auto& goal : tree.goals) {
    for (const auto& objective : goal.children) {
      for (const auto& step : objective.children) {
        auto resolved = resolve_params(tree, step.id);
        check_required(resolved, step.id);
        out.emplace(step.id, std::move(resolved));
      }
    }
  }
  return out;
}

AggregateSet aggregate(const std::vector<StepResults>& steps) {
  struct Acc {
    double sum = 0.0;
    double min = 0.0;
    double max = 0.0;
    std::size_t n = 0;
  };
  std::map<std::string, Acc, std::less<>> acc;
  for (const auto& step : steps) {
    for (const auto& round : step.rounds) {
      for (const auto& [name, value] : round.attributes) {
        auto& a = acc[name];
        if (a.n == 0) {
          a.min = a.max = value;
        } else {
          a.min = std::min(a.min, value);
          a.max = std::max(a.max, value);
        }
        a.sum += value;
        ++a.n;
      }
    }
  }
  AggregateSet out;
  for (const auto& [name, a] : acc) {
    // Rounding in the sum can push the mean a few ulps past the extremes.
    const double avg = std::clamp(a.sum / static_cast<double>(a.n), a.min, a.max);
    out.emplace(name, AggregateStats{avg, a.min, a.max});
  }
  return out;
}

Ranking rank(const GoalResults& goal) {
  Ranking ranking;
  ranking.no_criteria = goal.criteria.empty();
  const double total = static_cast<double>(goal.criteria.size());
  for (const auto& objective : goal.objectives) {
    double proportion = 0.0;
    if (!ranking.no_criteria) {
      const auto satisfied = std::count(objective.verdicts.begin(), objective.verdicts.end(), true);
      proportion = static_cast<double>(satisfied) / total;
    }
    ranking.proportions.emplace_back(objective.id, proportion);
  }
  return ranking;
}

ResultsTree execute(const PolicyTree& tree, std::uint64_t seed, const sim::ExecutionOptions& options) {
  auto resolved = propagate(tree);

  std::vector<StepPlan> plans;
  for (const auto& goal : tree.goals) {
    for (const auto& objective : goal.children) {
      for (const auto& step : objective.children) plans.push_back(plan_step(step, resolved.at(step.id)));
    }
  }

  struct Task {
    std::size_t plan;
    std::size_t round;
  };
  std::vector<Task> tasks;
  for (std::size_t p = 0; p < plans.size(); ++p) {
    for (std::size_t r = 0; r < plans[p].sizes.size(); ++r) tasks.push_back({p, r});
  }
  std::vector<RoundResult> outcomes(tasks.size());
  sim::parallel_for(tasks.size(), options.threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t t = begin; t < end; ++t) {
      const auto& plan = plans[tasks[t].plan];
      const std::size_t r = tasks[t].round;
      auto population = plan.model.with_defaults(plan.population);
      population.size = plan.sizes[r];
      const std::uint64_t sub_seed = sim::mix(seed, sim::hash_text(plan.step->id), r);
      auto trace = sim::run_simulation(population, plan.model.rules, plan.cycles, sub_seed);
      auto& out = outcomes[t];
      out.round = r;
      out.population_size = plan.sizes[r];
      out.seed = sub_seed;
      out.attributes = trace.cycles.back().values;
      out.trace = std::move(trace.cycles);
    }
  });

  ResultsTree results;
  results.name = tree.name;
  results.seed = seed;
  std::size_t task = 0;
  std::size_t plan_index = 0;
  for (const auto& goal : tree.goals) {
    GoalResults g;
    g.id = goal.id;
    g.title = goal.title;
    for (const auto& c : goal.criteria) g.criteria.push_back(c.source);
    for (const auto& objective : goal.children) {
      ObjectiveResults o;
      o.id = objective.id;
      o.title = objective.title;
      for (std::size_t s = 0; s < objective.children.size(); ++s, ++plan_index) {
        auto& plan = plans[plan_index];
        StepResults step;
        step.step_id = plan.step->id;
        step.model = plan.step->model;
        step.params = std::move(plan.params);
        step.cycles = plan.cycles;
        for (std::size_t r = 0; r < plan.sizes.size(); ++r) step.rounds.push_back(std::move(outcomes[task++]));
        o.steps.push_back(std::move(step));
      }
      o.aggregates = aggregate(o.steps);
      o.params = resolve_params(tree, objective.id);
      for (const auto& criterion : goal.criteria) {
        o.verdicts.push_back(evaluate_criterion(criterion, o.aggregates, o.params.values));
      }
      g.objectives.push_back(std::move(o));
    }
    g.ranking = rank(g);
    results.goals.push_back(std::move(g));
  }
  return results;
}

Json to_json(const ResultsTree& results, bool include_traces) {
  Json goals = Json::array();
  for (const auto& g : results.goals) {
    Json ranking = Json::object();
    for (const auto& [id, p] : g.ranking.proportions) ranking[id] = p;
    Json objectives = Json::array();
    for (std::size_t oi = 0; oi < g.objectives.size(); ++oi) {
      const auto& o = g.objectives[oi];
      Json aggregates = Json::object();
      for (const auto& [name, a] : o.aggregates) aggregates[name] = Json{{"avg", a.avg}, {"min", a.min}, {"max", a.max}};
      Json steps = Json::array();
      for (const auto& s : o.steps) {
        Json rounds = Json::array();
        for (const auto& r : s.rounds) {
          Json round{{"round", r.round},
                     {"population_size", r.population_size},
                     {"seed", r.seed},
                     {"attributes", attributes_to_json(r.attributes)}};
          if (include_traces) {
            Json trace = Json::array();
            for (const auto& c : r.trace) trace.push_back(Json{{"index", c.index}, {"attributes", attributes_to_json(c.values)}});
            round["trace"] = std::move(trace);
          }
          rounds.push_back(std::move(round));
        }
        steps.push_back(Json{{"id", s.step_id},
                             {"model", s.model},
                             {"cycles", s.cycles},
                             {"params", params_to_json(s.params)},
                             {"rounds", std::move(rounds)}});
      }
      Json verdicts = Json::array();
      for (const bool v : o.verdicts) verdicts.push_back(v);
      objectives.push_back(Json{{"id", o.id},
                                {"title", o.title},
                                {"aggregates", std::move(aggregates)},
                                {"verdicts", std::move(verdicts)},
                                {"proportion", g.ranking.proportions[oi].second},
                                {"steps", std::move(steps)}});
    }
    Json criteria = Json::array();
    for (const auto& c : g.criteria) criteria.push_back(c);
    goals.push_back(Json{{"id", g.id},
                         {"title", g.title},
                         {"criteria", std::move(criteria)},
                         {"no_criteria", g.ranking.no_criteria},
                         {"ranking", std::move(ranking)},
                         {"objectives", std::move(objectives)}});
  }
  return Json{{"name", results.name}, {"seed", results.seed}, {"goals", std::move(goals)}};
}

}  // namespace policylab::metasim
