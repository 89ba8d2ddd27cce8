#include "policylab/simengine.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <thread>
#include <unordered_set>

#include "policylab/error.hpp"

namespace policylab::sim {

namespace {

constexpr std::uint64_t kGenerationTag = 0x67656E6572617465ULL;  // "generate"
constexpr std::uint64_t kEdgeTag = 0x65646765ULL;                // "edge"

std::uint64_t finalize(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  return finalize(finalize(a + 0x9E3779B97F4A7C15ULL) ^ (b + 0x632BE59BD9B4E019ULL));
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c) { return mix(mix(a, b), c); }

std::uint64_t hash_text(std::string_view text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// ---------------------------------------------------------------------------

Graph::Graph(std::vector<Individual> nodes, std::vector<Connection> edges)
    : nodes_(std::move(nodes)), edges_(std::move(edges)), incoming_(nodes_.size()), outgoing_(nodes_.size()) {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].id != i) throw Error(ErrorCode::DomainError, "node id must equal its index");
  }
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    const auto& edge = edges_[e];
    if (edge.from >= nodes_.size() || edge.to >= nodes_.size()) {
      throw Error(ErrorCode::DomainError, "edge endpoint out of range");
    }
    if (edge.from == edge.to) throw Error(ErrorCode::DomainError, "self-loop on node " + std::to_string(edge.from));
    outgoing_[edge.from].push_back(e);
    incoming_[edge.to].push_back(e);
  }
}

Graph relabel(const Graph& graph, std::span<const std::uint64_t> permutation) {
  std::vector<Individual> nodes(graph.size());
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const auto target = permutation[i];
    nodes[target] = Individual{target, graph.nodes()[i].attrs};
  }
  std::vector<Connection> edges;
  edges.reserve(graph.edges().size());
  for (const auto& e : graph.edges()) edges.push_back(Connection{permutation[e.from], permutation[e.to], e.attrs});
  return Graph(std::move(nodes), std::move(edges));
}

// ---------------------------------------------------------------------------
// Population models

namespace {

Distribution distribution_from_json(const Json& value, const std::string& path) {
  if (value.is_number()) return Distribution::constant(value.get<double>());
  if (value.is_object() && value.contains("uniform")) {
    const auto& range = value["uniform"];
    if (range.is_array() && range.size() == 2 && range[0].is_number() && range[1].is_number()) {
      const double lo = range[0].get<double>();
      const double hi = range[1].get<double>();
      if (lo > hi) throw Error(ErrorCode::ParseError, path + ": uniform bounds out of order", path);
      return Distribution::uniform(lo, hi);
    }
  }
  if (value.is_object() && value.contains("constant") && value["constant"].is_number()) {
    return Distribution::constant(value["constant"].get<double>());
  }
  throw Error(ErrorCode::ParseError, path + ": expected number, {\"constant\": v} or {\"uniform\": [a, b]}", path);
}

Json distribution_to_json(const Distribution& d) {
  if (d.kind == Distribution::Kind::constant) return d.a;
  Json out = Json::object();
  out["uniform"] = Json::array({d.a, d.b});
  return out;
}

std::size_t size_field(const Json& node, const char* key, const std::string& path, std::size_t fallback,
                       bool required) {
  const auto it = node.find(key);
  if (it == node.end()) {
    if (required) throw Error(ErrorCode::ParseError, path + "." + key + ": missing", path + "." + key);
    return fallback;
  }
  if (!it->is_number_integer() || it->get<std::int64_t>() < 0) {
    throw Error(ErrorCode::ParseError, path + "." + key + ": expected non-negative integer", path + "." + key);
  }
  return static_cast<std::size_t>(it->get<std::int64_t>());
}

}  // namespace

PopulationModel population_model_from_json(const Json& node, const std::string& path) {
  if (!node.is_object()) throw Error(ErrorCode::ParseError, path + ": expected object", path);
  PopulationModel model;
  model.size = size_field(node, "size", path, 1, false);
  model.min_degree = size_field(node, "min_degree", path, 0, false);
  model.max_degree = size_field(node, "max_degree", path, model.min_degree, false);
  const auto method = optional_string(node, "method", path, "random");
  if (method == "random") model.method = GenerationMethod::random;
  else if (method == "power_law") model.method = GenerationMethod::power_law;
  else throw Error(ErrorCode::ParseError, path + ".method: expected random or power_law", path + ".method");
  for (const char* key : {"node_attributes", "edge_attributes"}) {
    if (!node.contains(key)) continue;
    const auto& block = node[key];
    if (!block.is_object()) throw Error(ErrorCode::ParseError, path + "." + key + ": expected object", path + "." + key);
    auto& target = std::string_view(key) == "node_attributes" ? model.node_attributes : model.edge_attributes;
    for (const auto& [name, spec] : block.items()) {
      target[name] = distribution_from_json(spec, path + "." + key + "." + name);
    }
  }
  return model;
}

Json to_json(const PopulationModel& model) {
  Json out = Json::object();
  out["size"] = model.size;
  out["min_degree"] = model.min_degree;
  out["max_degree"] = model.max_degree;
  out["method"] = model.method == GenerationMethod::random ? "random" : "power_law";
  Json nodes = Json::object();
  for (const auto& [name, d] : model.node_attributes) nodes[name] = distribution_to_json(d);
  Json edges = Json::object();
  for (const auto& [name, d] : model.edge_attributes) edges[name] = distribution_to_json(d);
  out["node_attributes"] = std::move(nodes);
  out["edge_attributes"] = std::move(edges);
  return out;
}

Graph generate_population(const PopulationModel& model, std::uint64_t seed) {
  if (model.size == 0) throw Error(ErrorCode::InfeasibleDegree, "population size must be positive");
  if (model.min_degree > model.max_degree) {
    throw Error(ErrorCode::InfeasibleDegree, "min_degree exceeds max_degree");
  }
  if (model.max_degree >= model.size) {
    throw Error(ErrorCode::InfeasibleDegree,
                "max_degree " + std::to_string(model.max_degree) + " must be below population size " +
                    std::to_string(model.size));
  }
  Rng rng(mix(seed, kGenerationTag));
  const std::size_t n = model.size;
  const std::size_t span = model.max_degree - model.min_degree + 1;

  std::vector<Connection> edges;
  if (model.method == GenerationMethod::random) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t degree = model.min_degree + rng.below(span);
      std::vector<std::uint64_t> chosen;
      chosen.reserve(degree);
      while (chosen.size() < degree) {
        const auto target = rng.below(n);
        if (target == i || std::find(chosen.begin(), chosen.end(), target) != chosen.end()) continue;
        chosen.push_back(target);
      }
      for (const auto target : chosen) edges.push_back(Connection{i, target, {}});
    }
  } else {
    std::vector<double> in_degree(n, 0.0);
    std::vector<char> taken(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t degree = std::min(model.min_degree + rng.below(span), i);
      std::vector<std::uint64_t> chosen;
      chosen.reserve(degree);
      while (chosen.size() < degree) {
        double total = 0.0;
        for (std::size_t j = 0; j < i; ++j) {
          if (!taken[j]) total += in_degree[j] + 1.0;
        }
        double pick = rng.uniform() * total;
        std::size_t target = i;
        for (std::size_t j = 0; j < i; ++j) {
          if (taken[j]) continue;
          target = j;
          pick -= in_degree[j] + 1.0;
          if (pick < 0.0) break;
        }
        taken[target] = 1;
        in_degree[target] += 1.0;
        chosen.push_back(target);
      }
      for (const auto target : chosen) {
        taken[target] = 0;
        edges.push_back(Connection{i, target, {}});
      }
    }
  }

  std::vector<Individual> nodes(n);
  for (std::size_t i = 0; i < n; ++i) {
    nodes[i].id = i;
    for (const auto& [name, dist] : model.node_attributes) nodes[i].attrs[name] = dist.sample(rng);
  }
  for (auto& edge : edges) {
    for (const auto& [name, dist] : model.edge_attributes) edge.attrs[name] = dist.sample(rng);
  }
  return Graph(std::move(nodes), std::move(edges));
}

// ---------------------------------------------------------------------------
// Cycles

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(threads);
  // One slot per chunk; the lowest failing chunk is rethrown, matching a sequential run.
  std::vector<std::exception_ptr> failures(threads);
  const std::size_t chunk = (n + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    workers.emplace_back([&fn, &failures, t, begin, end] {
      try {
        fn(begin, end);
      } catch (...) {
        failures[t] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (const auto& failure : failures) {
    if (failure) std::rethrow_exception(failure);
  }
}

void check_ranges(const Graph& graph, const RuleSet& rules) {
  auto check = [](const Attributes& attrs, const AttributeRange& range, const char* what, std::size_t index) {
    const auto it = attrs.find(range.name);
    if (it == attrs.end()) return;
    if (!(it->second >= range.lo && it->second <= range.hi)) {
      throw Error(ErrorCode::DomainError, std::string(what) + " " + std::to_string(index) + ": " + range.name +
                                              " = " + std::to_string(it->second) + " outside declared range");
    }
  };
  for (const auto& range : rules.node_ranges) {
    for (std::size_t i = 0; i < graph.size(); ++i) check(graph.nodes()[i].attrs, range, "node", i);
  }
  for (const auto& range : rules.edge_ranges) {
    for (std::size_t e = 0; e < graph.edges().size(); ++e) check(graph.edges()[e].attrs, range, "edge", e);
  }
}

Graph run_cycle(const Graph& graph, const RuleSet& rules, std::uint64_t seed, std::size_t cycle_index,
                const ExecutionOptions& options) {
  const auto& nodes = graph.nodes();
  const auto& edges = graph.edges();
  const CycleContext ctx{cycle_index, seed, graph};

  // Stage 1: influences from the pre-cycle state.
  std::vector<double> influence(edges.size(), 0.0);
  if (rules.influence) {
    parallel_for(edges.size(), options.threads, [&](std::size_t begin, std::size_t end) {
      for (std::size_t e = begin; e < end; ++e) influence[e] = rules.influence(nodes[edges[e].from], edges[e]);
    });
  }

  Graph next = graph;
  // Stage 2: individual updates into the next buffer.
  if (rules.individual) {
    auto& next_nodes = next.mutable_nodes();
    parallel_for(nodes.size(), options.threads, [&](std::size_t begin, std::size_t end) {
      std::vector<double> incoming;
      for (std::size_t i = begin; i < end; ++i) {
        incoming.clear();
        for (const auto e : graph.incoming(i)) incoming.push_back(influence[e]);
        rules.individual(nodes[i], incoming, ctx, next_nodes[i].attrs);
      }
    });
  }

  // Stage 3: connection updates, seeing updated endpoints.
  if (rules.connection) {
    const auto& updated = next.nodes();
    auto& next_edges = next.mutable_edges();
    const auto edge_seed = mix(seed, kEdgeTag);
    parallel_for(edges.size(), options.threads, [&](std::size_t begin, std::size_t end) {
      for (std::size_t e = begin; e < end; ++e) {
        Rng rng(mix(edge_seed, cycle_index, e));
        rules.connection(edges[e], updated[edges[e].from], updated[edges[e].to], rng, ctx, next_edges[e].attrs);
      }
    });
  }
  check_ranges(next, rules);
  return next;
}

double CycleAttributes::at(std::string_view name) const {
  for (const auto& [key, value] : values) {
    if (key == name) return value;
  }
  throw Error(ErrorCode::UnknownAttribute, "no population attribute '" + std::string(name) + "'");
}

std::vector<std::pair<std::string, double>> population_attributes(const Graph& graph, const RuleSet& rules) {
  std::vector<std::pair<std::string, double>> out;
  out.reserve(rules.population_attributes.size());
  for (const auto& attr : rules.population_attributes) out.emplace_back(attr.name, attr.extract(graph));
  return out;
}

SimulationTrace simulate(Graph initial, const RuleSet& rules, std::size_t cycles, std::uint64_t seed,
                         const ExecutionOptions& options) {
  if (rules.initialize) rules.initialize(initial);
  check_ranges(initial, rules);
  SimulationTrace trace;
  trace.seed = seed;
  trace.rules_id = rules.id;
  trace.cycles.reserve(cycles + 1);
  trace.cycles.push_back(CycleAttributes{0, population_attributes(initial, rules)});
  Graph current = std::move(initial);
  for (std::size_t c = 1; c <= cycles; ++c) {
    current = run_cycle(current, rules, seed, c, options);
    trace.cycles.push_back(CycleAttributes{c, population_attributes(current, rules)});
  }
  trace.final_graph = std::move(current);
  return trace;
}

SimulationTrace run_simulation(const PopulationModel& model, const RuleSet& rules, std::size_t cycles,
                               std::uint64_t seed, const ExecutionOptions& options) {
  return simulate(generate_population(model, seed), rules, cycles, seed, options);
}

Json graph_to_json(const Graph& graph) {
  Json nodes = Json::array();
  for (const auto& node : graph.nodes()) {
    Json attrs = Json::object();
    for (const auto& [k, v] : node.attrs) attrs[k] = v;
    nodes.push_back(Json{{"id", node.id}, {"attrs", std::move(attrs)}});
  }
  Json edges = Json::array();
  for (const auto& edge : graph.edges()) {
    Json attrs = Json::object();
    for (const auto& [k, v] : edge.attrs) attrs[k] = v;
    edges.push_back(Json{{"from", edge.from}, {"to", edge.to}, {"attrs", std::move(attrs)}});
  }
  return Json{{"nodes", std::move(nodes)}, {"edges", std::move(edges)}};
}

Json trace_to_json(const SimulationTrace& trace, const PopulationModel* model, bool include_graph) {
  Json manifest = Json::object();
  if (model) manifest["model"] = to_json(*model);
  manifest["rules"] = trace.rules_id;
  manifest["seed"] = trace.seed;
  manifest["cycles"] = trace.cycles.empty() ? 0 : trace.cycles.size() - 1;
  Json cycles = Json::array();
  for (const auto& entry : trace.cycles) {
    Json attrs = Json::object();
    for (const auto& [k, v] : entry.values) attrs[k] = v;
    cycles.push_back(Json{{"index", entry.index}, {"attributes", std::move(attrs)}});
  }
  Json out = Json::object();
  out["manifest"] = std::move(manifest);
  out["cycles"] = std::move(cycles);
  if (include_graph) out["final_graph"] = graph_to_json(trace.final_graph);
  return out;
}

}  // namespace policylab::sim
