#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "policylab/json_util.hpp"

namespace policylab::sim {

/// SplitMix64. Reals use the high 53 bits, so identical seeds give identical
/// sequences on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n); n > 0.
  std::uint64_t below(std::uint64_t n) { return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)); }

 private:
  std::uint64_t state_;
};

/// Order-sensitive 64-bit mixing used to derive independent substreams.
std::uint64_t mix(std::uint64_t a, std::uint64_t b);
std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c);
/// Hashes text into the seed space (FNV-1a), e.g. for step ids.
std::uint64_t hash_text(std::string_view text);

using Attributes = std::map<std::string, double, std::less<>>;

struct Individual {
  std::uint64_t id = 0;
  Attributes attrs;

  bool operator==(const Individual&) const = default;
};

struct Connection {
  std::uint64_t from = 0;
  std::uint64_t to = 0;
  Attributes attrs;

  bool operator==(const Connection&) const = default;
};

/// Directed agent graph. Node ids equal their index; edges are simple and
/// never self-loops. Topology is fixed once built.
class Graph {
 public:
  Graph() = default;
  Graph(std::vector<Individual> nodes, std::vector<Connection> edges);

  const std::vector<Individual>& nodes() const { return nodes_; }
  const std::vector<Connection>& edges() const { return edges_; }
  std::vector<Individual>& mutable_nodes() { return nodes_; }
  std::vector<Connection>& mutable_edges() { return edges_; }

  std::size_t size() const { return nodes_.size(); }
  /// Edge indices in ascending order.
  std::span<const std::size_t> incoming(std::size_t node) const { return incoming_[node]; }
  std::span<const std::size_t> outgoing(std::size_t node) const { return outgoing_[node]; }

  bool operator==(const Graph& other) const { return nodes_ == other.nodes_ && edges_ == other.edges_; }

 private:
  std::vector<Individual> nodes_;
  std::vector<Connection> edges_;
  std::vector<std::vector<std::size_t>> incoming_;
  std::vector<std::vector<std::size_t>> outgoing_;
};

/// Relabels node i as permutation[i]; edges keep their order.
Graph relabel(const Graph& graph, std::span<const std::uint64_t> permutation);

struct Distribution {
  enum class Kind { constant, uniform };
  Kind kind = Kind::constant;
  double a = 0.0;
  double b = 0.0;

  static Distribution constant(double v) { return {Kind::constant, v, v}; }
  static Distribution uniform(double lo, double hi) { return {Kind::uniform, lo, hi}; }
  double sample(Rng& rng) const { return kind == Kind::constant ? a : rng.uniform(a, b); }
  bool operator==(const Distribution&) const = default;
};

enum class GenerationMethod { random, power_law };

struct PopulationModel {
  std::size_t size = 1;
  std::size_t min_degree = 0;  // out-degree bounds
  std::size_t max_degree = 0;
  GenerationMethod method = GenerationMethod::random;
  std::map<std::string, Distribution, std::less<>> node_attributes;
  std::map<std::string, Distribution, std::less<>> edge_attributes;

  bool operator==(const PopulationModel&) const = default;
};

/// Document form: `{size, min_degree, max_degree, method: "random"|"power_law",
/// node_attributes: {name: number | {"uniform": [a, b]}}, edge_attributes: {...}}`.
PopulationModel population_model_from_json(const Json& node, const std::string& path);
Json to_json(const PopulationModel& model);

/// `random`: each out-degree uniform in [min, max], distinct non-self targets.
/// `power_law`: node i wires uniform[min, max] (capped at i) edges to earlier
/// nodes, picked with weight in-degree + 1.
/// Throws Error(InfeasibleDegree) unless min ≤ max < size.
Graph generate_population(const PopulationModel& model, std::uint64_t seed);

struct CycleContext {
  std::size_t cycle = 0;
  std::uint64_t seed = 0;
  const Graph& previous;
};

using InfluenceRule = std::function<double(const Individual& source, const Connection& edge)>;
/// Writes the individual's next state into `next` (pre-filled with the previous attrs).
using IndividualRule = std::function<void(const Individual& previous, std::span<const double> incoming,
                                          const CycleContext& ctx, Attributes& next)>;
/// Sees the connection's previous attrs and the endpoints' updated states.
using ConnectionRule = std::function<void(const Connection& previous, const Individual& from, const Individual& to,
                                          Rng& rng, const CycleContext& ctx, Attributes& next)>;
using GraphInitializer = std::function<void(Graph& graph)>;

struct PopulationAttribute {
  std::string name;
  std::function<double(const Graph&)> extract;
};

struct AttributeRange {
  std::string name;
  double lo = 0.0;
  double hi = 0.0;
};

/// Individual, connection, and influence dynamics plus the population-level
/// attributes computed after every cycle. Empty rules are identities.
struct RuleSet {
  std::string id;
  GraphInitializer initialize;
  InfluenceRule influence;
  IndividualRule individual;
  ConnectionRule connection;
  std::vector<PopulationAttribute> population_attributes;
  std::vector<AttributeRange> node_ranges;
  std::vector<AttributeRange> edge_ranges;
};

struct ExecutionOptions {
  std::size_t threads = 1;
};

/// Throws Error(DomainError) if any declared attribute range is violated.
void check_ranges(const Graph& graph, const RuleSet& rules);

/// One synchronous cycle: influences from the pre-cycle state, then every
/// individual update, then every connection update against the updated
/// individuals. Each entity draws from its own substream
/// mix(seed, cycle, entity), so thread count never changes the result.
Graph run_cycle(const Graph& graph, const RuleSet& rules, std::uint64_t seed, std::size_t cycle_index,
                const ExecutionOptions& options = {});

struct CycleAttributes {
  std::size_t index = 0;
  std::vector<std::pair<std::string, double>> values;

  double at(std::string_view name) const;
  bool operator==(const CycleAttributes&) const = default;
};

std::vector<std::pair<std::string, double>> population_attributes(const Graph& graph, const RuleSet& rules);

struct SimulationTrace {
  std::uint64_t seed = 0;
  std::string rules_id;
  std::vector<CycleAttributes> cycles;  // cycles[0] is the initial state
  Graph final_graph;
};

/// Runs `cycles` cycles on a given initial graph (after `rules.initialize`).
SimulationTrace simulate(Graph initial, const RuleSet& rules, std::size_t cycles, std::uint64_t seed,
                         const ExecutionOptions& options = {});

/// Generates the population from (model, seed) then simulates.
SimulationTrace run_simulation(const PopulationModel& model, const RuleSet& rules, std::size_t cycles,
                               std::uint64_t seed, const ExecutionOptions& options = {});

Json graph_to_json(const Graph& graph);
/// `{manifest, cycles: [{index, attributes}], final_graph?}`.
Json trace_to_json(const SimulationTrace& trace, const PopulationModel* model, bool include_graph);

/// Runs fn(begin, end) over [0, n) split into contiguous chunks.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace policylab::sim
