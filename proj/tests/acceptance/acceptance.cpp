// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
// Expected values come from the oracles in tests/support or from independent
// re-derivations below, never from the library's own helpers.

#include <httplib.h>

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

#include "policylab/abac.hpp"
#include "policylab/cleaning.hpp"
#include "policylab/criterion.hpp"
#include "policylab/gateway.hpp"
#include "policylab/http_server.hpp"
#include "policylab/metasim.hpp"
#include "policylab/models.hpp"
#include "policylab/pipeline.hpp"
#include "policylab/registry.hpp"
#include "policylab/sentiment.hpp"
#include "policylab/simengine.hpp"
#include "support/criterion_gen.hpp"
#include "support/oracles.hpp"

using namespace policylab;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = POLICYLAB_SOURCE_DIR;

class Check {
 public:
  template <class Msg>
  void expect(bool ok, Msg&& msg) {
    ++checks_;
    if (ok) return;
    ++failed_;
    if (failures_.size() >= 3) return;
    if constexpr (std::is_invocable_v<Msg>) {
      failures_.push_back(msg());
    } else {
      failures_.push_back(std::string(msg));
    }
  }
  void note(std::string text) { note_ = std::move(text); }

  bool passed() const { return checks_ > 0 && failed_ == 0; }
  std::string detail() const {
    std::string out = std::to_string(checks_) + " checks";
    if (failed_ > 0) {
      out += ", " + std::to_string(failed_) + " failed";
      for (const auto& f : failures_) out += "; " + f;
    }
    if (!note_.empty()) out += "; " + note_;
    return out;
  }

 private:
  std::size_t checks_ = 0;
  std::size_t failed_ = 0;
  std::vector<std::string> failures_;
  std::string note_;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string join(const std::vector<double>& v) {
  std::string out = "(";
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt(v[i]);
  return out + ")";
}

Json compliance() { return Json{{"bias_measures", "stratified sample review"}, {"legal_constraints", "GDPR art. 6"}}; }

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("policylab-acceptance-" + tag + "-" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

// ---------------------------------------------------------------------------
// RAD formulas

void rad_formula_suite(Check& check) {
  using namespace models;
  std::mt19937_64 gen(20240611);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> frac(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double s = unit(gen);
    const double cs = unit(gen);
    const double inf = rad_influence(s, cs);
    worst = std::max(worst, std::fabs(inf - s * cs));
    check.expect(std::fabs(inf - s * cs) <= 1e-12, [&] { return "influence(" + fmt(s) + "," + fmt(cs) + ")"; });

    std::vector<double> incoming(gen() % 9);
    for (auto& v : incoming) v = unit(gen);
    double acc = s;
    for (const double v : incoming) acc += v;
    const double expected = acc > 1.0 ? 1.0 : (acc < -1.0 ? -1.0 : acc);
    const double got = rad_update(s, incoming);
    worst = std::max(worst, std::fabs(got - expected));
    check.expect(std::fabs(got - expected) <= 1e-12, [&] { return "update(" + fmt(s) + ", " + join(incoming) + ")"; });

    RadParams p;
    p.radical_threshold = unit(gen);
    p.conformist_threshold = -1.0 + (p.radical_threshold + 1.0) * frac(gen);
    // Every tenth input sits exactly on a threshold.
    const double x = i % 10 == 0 ? p.radical_threshold : (i % 10 == 1 ? p.conformist_threshold : unit(gen));
    const auto want = x > p.radical_threshold     ? RadClass::radical
                      : x < p.conformist_threshold ? RadClass::conformist
                                                   : RadClass::sympathizer;
    check.expect(rad_classify(x, p) == want, [&] { return "classify(" + fmt(x) + ")"; });
  }

  // Friend (cs > 0) and enemy (cs < 0) contacts of radicals (s > 0) and conformists (s < 0).
  struct Row {
    double status, cs;
    int sign;
    const char* story;
  };
  const Row table[] = {{0.8, 0.6, +1, "radical friend pulls toward radicalization"},
                       {0.8, -0.6, -1, "radical enemy pushes toward conformity"},
                       {-0.8, 0.6, -1, "conformist friend pulls toward conformity"},
                       {-0.8, -0.6, +1, "conformist enemy pushes toward radicalization"},
                       {0.0, 0.9, 0, "neutral source exerts no influence"},
                       {0.9, 0.0, 0, "no contact, no influence"}};
  for (const auto& row : table) {
    const double inf = rad_influence(row.status, row.cs);
    const int sign = (inf > 0) - (inf < 0);
    check.expect(sign == row.sign, row.story);
    const double moved = rad_update(0.0, std::vector<double>{inf});
    check.expect(((moved > 0) - (moved < 0)) == row.sign, row.story);
  }
  check.note("10000 inputs, max |err| " + fmt(worst));
}

// ---------------------------------------------------------------------------
// Synchronous update

std::vector<double> statuses(const sim::Graph& g) {
  std::vector<double> out;
  for (const auto& n : g.nodes()) out.push_back(n.attrs.at(std::string(models::kStatus)));
  return out;
}

void synchronous_update(Check& check) {
  const std::vector<std::vector<double>> expected{{1, 0, 0}, {1, 1, 0}, {1, 1, 1}};
  const auto rules = models::make_rad_rules(models::RadParams{});
  for (const std::size_t threads : {1u, 3u}) {
    sim::Graph g = oracle::chain({1, 0, 0}, 1.0);
    if (rules.initialize) rules.initialize(g);
    std::vector<std::vector<double>> trace{statuses(g)};
    for (std::size_t c = 1; c <= 2; ++c) {
      g = sim::run_cycle(g, rules, 0, c, sim::ExecutionOptions{threads});
      trace.push_back(statuses(g));
    }
    check.expect(trace == expected, [&] {
      return "engine trace with " + std::to_string(threads) + " threads: " + join(trace[0]) + " -> " + join(trace[1]) +
             " -> " + join(trace[2]);
    });
  }

  const std::vector<oracle::Edge> edges{{0, 1, 1.0}, {1, 2, 1.0}};
  std::vector<std::vector<double>> buffered{{1, 0, 0}};
  std::vector<std::vector<double>> naive{{1, 0, 0}};
  for (int c = 0; c < 2; ++c) {
    buffered.push_back(oracle::sync_step(buffered.back(), edges));
    naive.push_back(oracle::in_place_step(naive.back(), edges));
  }
  check.expect(buffered == expected, "double-buffered oracle disagrees with the hand trace");
  // The in-place variant has to diverge: node 2 sees node 1's new status within the same cycle.
  check.expect(naive != expected, "in-place update reproduced the synchronous trace");
  check.note("in-place variant rejected: " + join(naive[0]) + " -> " + join(naive[1]) + " -> " + join(naive[2]));
}

// ---------------------------------------------------------------------------
// Contact restriction

void restriction_decay(Check& check) {
  sim::PopulationModel m;
  m.size = 200;
  m.min_degree = 2;
  m.max_degree = 6;
  m.method = sim::GenerationMethod::power_law;
  m.node_attributes[std::string(models::kStatus)] = sim::Distribution::uniform(-1, 1);
  m.edge_attributes[std::string(models::kContactStrength)] = sim::Distribution::uniform(-1, 1);
  models::RadParams p;
  p.restriction_enabled = true;
  const auto rules = models::make_rad_rules(p);
  const std::string cs_key(models::kContactStrength);

  std::size_t scaled = 0;
  double ratio_sum = 0.0;
  double ratio_max = 0.0;
  std::size_t ratio_n = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    sim::Graph g = sim::generate_population(m, seed);
    if (rules.initialize) rules.initialize(g);
    const sim::Graph initial = g;
    for (std::size_t c = 1; c <= 50; ++c) {
      sim::Graph next = sim::run_cycle(g, rules, seed, c);
      for (std::size_t e = 0; e < g.edges().size(); ++e) {
        const double before = g.edges()[e].attrs.at(cs_key);
        const double after = next.edges()[e].attrs.at(cs_key);
        const double from_status = next.nodes()[g.edges()[e].from].attrs.at(std::string(models::kStatus));
        const bool restricted = before > p.friendship_threshold && from_status > p.radical_threshold;
        check.expect(std::fabs(after) <= std::fabs(before), [&] {
          return "seed " + std::to_string(seed) + " cycle " + std::to_string(c) + " edge " + std::to_string(e) +
                 ": |cs| grew " + fmt(before) + " -> " + fmt(after);
        });
        if (restricted) {
          ++scaled;
          check.expect(after >= 0.0 && after <= before, "scaled friend edge left [0, cs)");
        } else {
          check.expect(after == before, [&] {
            return "seed " + std::to_string(seed) + " cycle " + std::to_string(c) + ": unrestricted edge changed";
          });
        }
      }
      g = std::move(next);
    }
    double start = 0.0;
    double end = 0.0;
    for (std::size_t e = 0; e < g.edges().size(); ++e) {
      const double cs0 = initial.edges()[e].attrs.at(cs_key);
      const double status = g.nodes()[g.edges()[e].from].attrs.at(std::string(models::kStatus));
      if (cs0 > p.friendship_threshold && status > p.radical_threshold) {
        start += cs0;
        end += g.edges()[e].attrs.at(cs_key);
      }
    }
    if (start > 0.0) {
      const double ratio = end / start;
      ratio_sum += ratio;
      ratio_max = std::max(ratio_max, ratio);
      ++ratio_n;
    }
  }
  check.expect(ratio_n > 0, "no radical friend edges in any run");
  const double mean = ratio_n ? ratio_sum / static_cast<double>(ratio_n) : 1.0;
  check.expect(mean < 0.1, [&] { return "normalized mean friend-edge strength " + fmt(mean) + " >= 0.1"; });
  check.note(std::to_string(scaled) + " scaled edge updates; normalized mean at cycle 50 " + fmt(mean) + " (worst seed " +
             fmt(ratio_max) + ", " + std::to_string(ratio_n) + " seeds with radical friend edges)");
}

// ---------------------------------------------------------------------------
// Bundled radicalization policy tree

const char* kOrdering = "avg(radicals) < avg(sympathizers) AND avg(sympathizers) < avg(conformists)";
const char* kMonitoring = "avg(restricted) <= max_monitored_fraction";

double attribute(const metasim::RoundResult& r, const std::string& name) {
  for (const auto& [k, v] : r.attributes) {
    if (k == name) return v;
  }
  return std::nan("");
}

void bundled_policy_tree(Check& check) {
  const auto tree = metasim::load_tree(parse_json(read_file(kRoot / "samples/rad_restriction.json"), "tree"));
  check.expect(tree.goals.size() == 1, "expected one goal");
  if (tree.goals.size() != 1) return;
  const auto& goal = tree.goals[0];
  check.expect(goal.id == "0" && goal.kind == metasim::NodeKind::goal, "goal id");
  check.expect(goal.criteria.size() == 2 && goal.criteria[0].source == kOrdering && goal.criteria[1].source == kMonitoring,
               "goal criteria text");
  const std::pair<const char*, bool> layout[] = {{"0-0", false}, {"0-1", true}};
  check.expect(goal.children.size() == 2, "expected two objectives");
  if (goal.children.size() != 2) return;
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& obj = goal.children[i];
    check.expect(obj.id == layout[i].first && obj.children.size() == 1, "objective layout");
    if (obj.children.size() != 1) return;
    const auto& step = obj.children[0];
    check.expect(step.id == std::string(layout[i].first) + "-0" && step.model == "rad", "step layout");
    check.expect(step.model_params.value("restriction_enabled", !layout[i].second) == layout[i].second,
                 "restriction flag per step");
  }
  const auto resolved = metasim::propagate(tree);
  for (const auto* id : {"0-0-0", "0-1-0"}) {
    const auto& v = resolved.at(id).values;
    check.expect(v.value("rounds", 0) == 5, "5 rounds");
    check.expect(v.value("population_sizes", Json::array()) == Json::array({500}), "population 500");
  }

  const auto a = metasim::execute(tree, 42);
  const auto b = metasim::execute(tree, 42);
  const auto doc_a = metasim::to_json(a).dump();
  check.expect(doc_a == metasim::to_json(b).dump(), "two runs with seed 42 differ");

  check.expect(a.goals.size() == 1, "results carry one goal");
  if (a.goals.size() != 1) return;
  const auto& g = a.goals[0];
  const double max_monitored = tree.params.at("max_monitored_fraction").get<double>();
  check.expect(g.objectives.size() == 2, "two aggregate sets");
  check.expect(g.ranking.proportions.size() == 2 && !g.ranking.no_criteria, "complete ranking map");
  std::string ranking_note;
  for (std::size_t i = 0; i < g.objectives.size() && i < g.ranking.proportions.size(); ++i) {
    const auto& o = g.objectives[i];
    const auto& [rid, proportion] = g.ranking.proportions[i];
    check.expect(rid == o.id, "ranking key order");
    check.expect(proportion == 0.0 || proportion == 0.5 || proportion == 1.0,
                 [&] { return "proportion " + fmt(proportion) + " not in {0, 0.5, 1}"; });
    ranking_note += (i ? ", " : "") + rid + ": " + fmt(proportion);

    // Re-derive the aggregates from the per-round values.
    check.expect(o.steps.size() == 1 && o.steps[0].rounds.size() == 5, "5 rounds per step");
    if (o.steps.size() != 1) continue;
    for (const auto& round : o.steps[0].rounds) check.expect(round.population_size == 500, "round population");
    metasim::AggregateSet expect;
    for (const auto* name : {"radicals", "sympathizers", "conformists", "restricted"}) {
      double sum = 0.0, lo = INFINITY, hi = -INFINITY;
      for (const auto& round : o.steps[0].rounds) {
        const double v = attribute(round, name);
        sum += v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      expect[name] = {sum / 5.0, lo, hi};
      const auto it = o.aggregates.find(name);
      check.expect(it != o.aggregates.end(), [&] { return std::string("missing aggregate ") + name; });
      if (it == o.aggregates.end()) continue;
      check.expect(std::fabs(it->second.avg - expect[name].avg) <= 1e-12 && it->second.min == lo && it->second.max == hi,
                   [&] { return o.id + " aggregate " + name; });
    }
    const bool ordering = expect["radicals"].avg < expect["sympathizers"].avg &&
                          expect["sympathizers"].avg < expect["conformists"].avg;
    const bool monitoring = expect["restricted"].avg <= max_monitored;
    check.expect(o.verdicts == std::vector<bool>{ordering, monitoring}, [&] { return o.id + " verdicts"; });
    check.expect(proportion == (static_cast<double>(ordering) + static_cast<double>(monitoring)) / 2.0,
                 [&] { return o.id + " proportion"; });
  }
  check.note("ranking {" + ranking_note + "}");
}

// ---------------------------------------------------------------------------
// WINE

sim::PopulationModel wine_population(std::size_t size, sim::Distribution income, sim::Distribution ad,
                                     sim::Distribution social, sim::Distribution weight) {
  sim::PopulationModel m;
  m.size = size;
  m.min_degree = 1;
  m.max_degree = 4;
  m.node_attributes[std::string(models::kIncome)] = income;
  m.node_attributes[std::string(models::kAdSusceptibility)] = ad;
  m.node_attributes[std::string(models::kSocialSusceptibility)] = social;
  m.edge_attributes[std::string(models::kInfluenceWeight)] = weight;
  return m;
}

double closed_form(const models::WineParams& p, double income, double ad) {
  return oracle::wine_closed_form(income, ad, p.campaign_exposure, p.price_x, p.max_price, p.quality_x, p.avg_quality,
                                  p.max_income, p.w_price, p.w_quality, p.w_ad);
}

void wine_closed_form(Check& check) {
  using sim::Distribution;
  models::WineParams p;
  p.w_social = 0.0;
  p.iterations = 10;
  const auto homogeneous = wine_population(100, Distribution::constant(24000), Distribution::constant(0.4),
                                           Distribution::constant(0.7), Distribution::constant(0.5));
  const auto trace = models::wine_simulate(homogeneous, p, 5);
  const double expected = closed_form(p, 24000, 0.4);
  check.expect(trace.cycles.size() == p.iterations + 1, "cycle count");
  double worst = 0.0;
  for (const auto& c : trace.cycles) {
    const double err = std::fabs(c.at("avg_motivation") - expected);
    worst = std::max(worst, err);
    check.expect(err <= 1e-12, [&] { return "cycle " + std::to_string(c.index) + " off by " + fmt(err); });
  }
  // Heterogeneous agents: each one still sits at its own closed-form value.
  const auto mixed = wine_population(100, Distribution::uniform(0, 60000), Distribution::uniform(0, 1),
                                     Distribution::uniform(0, 1), Distribution::uniform(0, 1));
  const auto mixed_trace = models::wine_simulate(mixed, p, 6);
  for (const auto& n : mixed_trace.final_graph.nodes()) {
    const double want = closed_form(p, n.attrs.at(std::string(models::kIncome)), n.attrs.at(std::string(models::kAdSusceptibility)));
    check.expect(std::fabs(n.attrs.at(std::string(models::kMotivation)) - want) <= 1e-12, "per-agent closed form");
  }

  // Price sweep with default weights, social term included.
  const auto sweep_pop = wine_population(120, Distribution::uniform(5000, 60000), Distribution::uniform(0, 1),
                                         Distribution::uniform(0, 1), Distribution::uniform(0, 1));
  std::vector<std::vector<double>> sweep;
  for (const double price : {4.0, 8.0, 12.0, 16.0, 20.0}) {
    models::WineParams q;
    q.price_x = price;
    const auto t = models::wine_simulate(sweep_pop, q, 77);
    std::vector<double> v;
    for (const auto& c : t.cycles) v.push_back(c.at("avg_motivation"));
    sweep.push_back(std::move(v));
  }
  for (std::size_t i = 1; i < sweep.size(); ++i) {
    for (std::size_t c = 0; c < sweep[i].size(); ++c) {
      check.expect(sweep[i][c] <= sweep[i - 1][c], [&] { return "price sweep rises at point " + std::to_string(i); });
    }
  }

  // Argmax over two alternatives is unchanged when every weight is scaled
  // by the same positive factor: per-agent formula with all four terms, and
  // the engine's population mean without the social term.
  std::mt19937_64 gen(4242);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const auto small = wine_population(40, Distribution::uniform(5000, 60000), Distribution::uniform(0, 1),
                                     Distribution::uniform(0, 1), Distribution::uniform(0, 1));
  std::size_t ties = 0;
  for (int i = 0; i < 100; ++i) {
    models::WineParams w;
    w.w_price = -u01(gen) * 2.0;
    w.w_quality = u01(gen) * 2.0;
    w.w_ad = u01(gen) * 2.0;
    w.w_social = u01(gen) * 2.0;
    const double k = std::exp(std::uniform_real_distribution<double>(-3.0, 3.0)(gen));
    models::WineParams scaled = w;
    scaled.w_price *= k;
    scaled.w_quality *= k;
    scaled.w_ad *= k;
    scaled.w_social *= k;

    models::WineComponents alt[2];
    for (auto& c : alt) c = {u01(gen), u01(gen) * 2.0, u01(gen), u01(gen), u01(gen), u01(gen) * 2.0 - 1.0};
    const double d0 = models::wine_motivation(alt[0], w) - models::wine_motivation(alt[1], w);
    const double d1 = models::wine_motivation(alt[0], scaled) - models::wine_motivation(alt[1], scaled);
    if (std::fabs(d0) < 1e-12) {
      ++ties;
      continue;
    }
    check.expect((d0 > 0) == (d1 > 0), [&] { return "formula argmax flipped at pair " + std::to_string(i); });

    models::WineParams brand[2] = {w, w};
    for (auto& b : brand) {
      b.w_social = 0.0;
      b.iterations = 2;
      b.price_x = 1.0 + u01(gen) * 19.0;
      b.quality_x = 0.1 + u01(gen) * 0.9;
    }
    double base[2], big[2];
    for (int j = 0; j < 2; ++j) {
      base[j] = models::wine_simulate(small, brand[j], 9).cycles.back().at("avg_motivation");
      auto s = brand[j];
      s.w_price *= k;
      s.w_quality *= k;
      s.w_ad *= k;
      big[j] = models::wine_simulate(small, s, 9).cycles.back().at("avg_motivation");
    }
    if (std::fabs(base[0] - base[1]) < 1e-12) {
      ++ties;
      continue;
    }
    check.expect((base[0] > base[1]) == (big[0] > big[1]), [&] { return "engine argmax flipped at pair " + std::to_string(i); });
  }
  check.note("max |err| " + fmt(worst) + ", " + std::to_string(ties) + " ties skipped");
}

// ---------------------------------------------------------------------------
// Cleaning

const Json kCleanRules = Json::parse(R"([
  {"id": "name-required", "field": "name", "constraint": "required", "severity": "mandatory", "action": "delete_record"},
  {"id": "age-type", "field": "age", "constraint": "value_type", "type": "integer", "severity": "mandatory", "action": "replace", "default": 0},
  {"id": "age-range", "field": "age", "constraint": "range", "min": 0, "max": 120, "severity": "mandatory", "action": "delete_record"},
  {"id": "window", "field": "start", "constraint": "cross_field", "other": "end", "relation": "le", "severity": "mandatory", "action": "delete_field"},
  {"id": "score-range", "field": "score", "constraint": "range", "min": 0, "max": 1, "severity": "mandatory", "action": "predict", "strategy": "mean", "default": 0.5}
])");

const Json kCleanSchema = Json::parse(R"([
  {"name": "user", "type": "text", "identifier": "direct_identifier"},
  {"name": "name", "type": "text"},
  {"name": "text", "type": "text"},
  {"name": "age", "type": "integer"},
  {"name": "start", "type": "integer"},
  {"name": "end", "type": "integer"},
  {"name": "score", "type": "real"}
])");

/// Interprets the rule documents above directly. It reads the JSON rules,
/// not the library's compiled plan, and supports only what they use.
class RuleInterpreter {
 public:
  explicit RuleInterpreter(Json rules) : rules_(std::move(rules)) {}

  std::optional<Json> run(const Json& rec) {
    std::vector<const Json*> violated;
    for (const auto& r : rules_) {
      if (!holds(r, rec)) violated.push_back(&r);
    }
    Json out = rec;
    if (!violated.empty()) {
      for (const auto* r : violated) {
        const std::string field = (*r)["field"];
        const std::string action = (*r)["action"];
        if (action == "delete_record") return std::nullopt;
        if (action == "delete_field") out.erase(field);
        if (action == "replace") out[field] = (*r)["default"];
        if (action == "predict") out[field] = predict(field, (*r)["default"]);
      }
      for (const auto& r : rules_) {
        if (r["severity"] == "mandatory" && !holds(r, out)) return std::nullopt;
      }
    }
    if (!types_ok(out)) return std::nullopt;
    if (out.contains("score") && !out["score"].is_null()) {
      window_.push_back(out["score"]);
      if (window_.size() > 50) window_.pop_front();
    }
    return out;
  }

 private:
  static bool holds(const Json& r, const Json& rec) {
    const auto it = rec.find(r["field"].get<std::string>());
    const bool present = it != rec.end() && !it->is_null();
    const std::string c = r["constraint"];
    if (c == "required") return present;
    if (!present) return true;
    if (c == "value_type") return it->is_number_integer();
    if (c == "range") {
      return it->is_number() && it->get<double>() >= r["min"].get<double>() && it->get<double>() <= r["max"].get<double>();
    }
    if (c == "cross_field") {
      const auto other = rec.find(r["other"].get<std::string>());
      if (other == rec.end() || other->is_null()) return true;
      return it->get<double>() <= other->get<double>();
    }
    throw std::logic_error("interpreter does not support " + c);
  }

  Json predict(const std::string&, const Json& fallback) const {
    if (window_.empty()) return fallback;
    double sum = 0.0;
    bool integral = true;
    for (const auto& v : window_) {
      sum += v.get<double>();
      integral = integral && v.is_number_integer();
    }
    const double mean = sum / static_cast<double>(window_.size());
    return integral ? Json(static_cast<std::int64_t>(std::llround(mean))) : Json(mean);
  }

  static bool types_ok(const Json& rec) {
    for (const auto& [k, v] : rec.items()) {
      if (v.is_null()) continue;
      if ((k == "age" || k == "start" || k == "end") && !v.is_number_integer()) return false;
      if (k == "score" && !v.is_number()) return false;
      if ((k == "user" || k == "name" || k == "text") && !v.is_string()) return false;
    }
    return true;
  }

  Json rules_;
  std::deque<Json> window_;
};

enum Defect { none, non_integer_age, text_age, age_out_of_range, missing_name, inverted_window, score_out_of_range, null_age };
constexpr int kDefects = 8;

bool survives(Defect d) { return d != text_age && d != age_out_of_range && d != missing_name; }

const char* kWords[] = {"good", "bad", "great", "wine", "not", "service", "terrible", "excellent", "never",
                        "price", "happy", "awful", "the", "no", "love", "hate", "fine", "vintage"};

struct Corpus {
  std::vector<Json> records;
  std::vector<Defect> defects;
};

Corpus make_corpus(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  Corpus c;
  for (std::size_t i = 0; i < n; ++i) {
    std::string text;
    for (std::size_t w = 0, len = 3 + gen() % 8; w < len; ++w) text += (w ? " " : "") + std::string(kWords[gen() % 18]);
    const int end = 50 + static_cast<int>(gen() % 50);
    Json rec{{"user", "u" + std::to_string(i % 37)},
             {"name", "name-" + std::to_string(i)},
             {"text", text},
             {"age", 18 + static_cast<int>(gen() % 60)},
             {"start", static_cast<int>(gen() % 50)},
             {"end", end},
             {"score", (static_cast<double>(gen() % 999) + 0.5) / 1000.0}};
    const auto d = static_cast<Defect>(gen() % kDefects);
    switch (d) {
      case none: break;
      case non_integer_age: rec["age"] = 30.5 + static_cast<double>(gen() % 10); break;
      case text_age: rec["age"] = "unknown"; break;
      case age_out_of_range: rec["age"] = 121 + static_cast<int>(gen() % 200); break;
      case missing_name: rec.erase("name"); break;
      case inverted_window: rec["start"] = end + 1 + static_cast<int>(gen() % 20); break;
      case score_out_of_range: rec["score"] = 1.0 + static_cast<double>(gen() % 100 + 1) / 100.0; break;
      case null_age: rec["age"] = nullptr; break;
    }
    c.records.push_back(std::move(rec));
    c.defects.push_back(d);
  }
  return c;
}

std::vector<FieldSchema> clean_schema() {
  std::vector<FieldSchema> schema;
  for (const auto& f : kCleanSchema) schema.push_back(field_schema_from_json(f, "schema"));
  return schema;
}

void cleaning_convergence(Check& check) {
  const auto corpus = make_corpus(1000, 515);
  const auto schema = clean_schema();
  const auto plan = cleaning::compile_rules(cleaning::rules_from_json(kCleanRules, "rules"), "generic");
  cleaning::CleaningState state;
  RuleInterpreter oracle(kCleanRules);

  std::size_t expected_kept = 0, kept = 0, oracle_kept = 0;
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    const auto& rec = corpus.records[i];
    expected_kept += survives(corpus.defects[i]);
    const auto run = cleaning::run_workflow(rec, plan, schema, state);
    const auto want = oracle.run(rec);
    kept += run.kept();
    oracle_kept += want.has_value();
    check.expect(run.kept() == want.has_value(), [&] { return "record " + std::to_string(i) + " keep/drop differs: " + rec.dump(); });
    if (!run.kept()) continue;
    check.expect(want && run.outcome.record == *want, [&] {
      return "record " + std::to_string(i) + ": " + run.outcome.record.dump() + " vs " + (want ? want->dump() : "dropped");
    });
    for (const auto& v : run.report.residual) check.expect(v.severity != cleaning::Severity::mandatory, "mandatory residual after verify");
    for (const auto& v : cleaning::validate(run.outcome.record, plan)) {
      check.expect(v.severity != cleaning::Severity::mandatory, "kept record violates a mandatory rule");
    }
  }
  check.expect(kept == expected_kept, [&] { return "kept " + std::to_string(kept) + ", expected " + std::to_string(expected_kept); });
  check.expect(oracle_kept == expected_kept, "interpreter count disagrees with the injected defects");
  check.note("kept " + std::to_string(kept) + ", dropped " + std::to_string(corpus.records.size() - kept));
}

// ---------------------------------------------------------------------------
// Ingest chain vs standalone modules

void pipeline_equivalence(Check& check) {
  const auto env = pipeline::load_environment(kRoot / "config");
  pipeline::Builtins builtins(env);
  registry::Registry reg({}, builtins.hooks());
  pipeline::Pipeline pipe(reg, builtins, {}, [] { return TimestampMs{1'700'000'000'000}; });
  const Json minimize_params{{"drop_identifier_class", true}};
  auto fn = [&](const char* name, const char* builtin, Json params) {
    return reg.register_function(registry::function_from_json(Json{{"name", name},
                                                                   {"kind", "ingest"},
                                                                   {"builtin", builtin},
                                                                   {"params", std::move(params)},
                                                                   {"compliance", compliance()}}),
                                 "acceptance");
  };
  const auto m = fn("minimize", "minimize", minimize_params);
  const auto c = fn("clean", "clean", Json{{"rules", kCleanRules}, {"domain", "generic"}});
  const auto s = fn("sentiment", "sentiment", Json{{"field", "text"}});
  const auto ds = reg.register_dataset(registry::dataset_from_json(Json{{"name", "reviews"},
                                                                       {"source_kind", "at_rest"},
                                                                       {"schema", kCleanSchema},
                                                                       {"ingest_chain", {m, c, s}},
                                                                       {"retention_days", "unlimited"},
                                                                       {"compliance", compliance()}}),
                                       "acceptance");
  const auto corpus = make_corpus(1000, 9001);
  std::string ndjson;
  for (const auto& r : corpus.records) ndjson += r.dump() + "\n";
  const auto report = pipe.ingest_at_rest(ds, ndjson);

  // Standalone composition, record by record.
  const auto schema = reg.dataset(ds)->schema;
  const auto plan = cleaning::compile_rules(cleaning::rules_from_json(kCleanRules, "rules"), "generic", env.overlays);
  cleaning::CleaningState state;
  std::vector<std::pair<Json, double>> expected;
  for (const auto& r : corpus.records) {
    const auto minimized = pipeline::minimize(r, minimize_params, schema);
    const auto run = cleaning::run_workflow(minimized, plan, schema, state);
    if (!run.kept()) continue;
    expected.emplace_back(run.outcome.record, sentiment::score(run.outcome.record.at("text").get<std::string>(), env.sentiment));
  }

  const auto stored = pipe.records(ds);
  check.expect(report.records_in == 1000, "records_in");
  check.expect(report.stored == expected.size() && report.dropped == 1000 - expected.size(), [&] {
    return "stored " + std::to_string(report.stored) + ", standalone kept " + std::to_string(expected.size());
  });
  check.expect(stored.size() == expected.size(), "stored record count");
  for (std::size_t i = 0; i < std::min(stored.size(), expected.size()); ++i) {
    check.expect(stored[i].fields == expected[i].first, [&] { return "fields differ at survivor " + std::to_string(i); });
    check.expect(stored[i].annotations == Json{{"sentiment", expected[i].second}},
                 [&] { return "annotations differ at survivor " + std::to_string(i) + ": " + stored[i].annotations.dump(); });
    check.expect(!stored[i].fields.contains("user"), "direct identifier survived minimization");
  }
  check.note(std::to_string(expected.size()) + " survivors of 1000");
}

// ---------------------------------------------------------------------------
// Criterion parser

void criterion_parser(Check& check) {
  using namespace metasim;
  std::mt19937_64 gen(31337);
  for (int i = 0; i < 1000; ++i) {
    const auto text = criterion_gen::expression(gen, 4);
    try {
      const auto first = parse_criterion(text);
      const auto printed = print(*first.root);
      const auto second = parse_criterion(printed);
      check.expect(structurally_equal(*first.root, *second.root), [&] { return "round trip changed: " + text; });
      check.expect(print(*second.root) == printed, [&] { return "print not a fixed point: " + printed; });
    } catch (const Error& e) {
      check.expect(false, [&] { return "generated expression rejected: " + text + " (" + e.what() + ")"; });
    }
  }

  const std::pair<const char*, const char*> valid[] = {
      {kOrdering, kOrdering},
      {kMonitoring, kMonitoring},
      {"avg( radicals )<avg(sympathizers)", "avg(radicals) < avg(sympathizers)"},
      {"x < 0.10", "x < 0.1"},
      {"x >= -2.5e3", "x >= -2500"},
      {"1e-7 != x", "1e-07 != x"},
      {"((a < 1)) AND b<2", "a < 1 AND b < 2"},
      {"(a < 1 OR b < 2) AND c < 3", "(a < 1 OR b < 2) AND c < 3"},
      {"a < 1 AND (b < 2 AND c < 3)", "a < 1 AND (b < 2 AND c < 3)"},
      {"NOT (a < 1 AND b < 2)", "NOT (a < 1 AND b < 2)"},
      {"NOT NOT a == 1", "NOT NOT a == 1"},
      {"a < 1 OR b < 2 AND NOT c < 3", "a < 1 OR b < 2 AND NOT c < 3"},
      {"min(x)>max(y)", "min(x) > max(y)"},
      {"max_monitored_fraction >= 0", "max_monitored_fraction >= 0"},
      {"\tavg(_y2)\t==\t3", "avg(_y2) == 3"},
      {"0.000 < ANDROID", "0 < ANDROID"},
      {"a<=b OR c>=d OR e!=f", "a <= b OR c >= d OR e != f"},
      {"a < 1 OR (b < 2 OR c < 3)", "a < 1 OR (b < 2 OR c < 3)"},
      {"(a < 1 AND b < 2) OR c < 3", "a < 1 AND b < 2 OR c < 3"},
      {"NOT (a < 1)", "NOT a < 1"},
  };
  for (const auto& [text, canonical] : valid) {
    try {
      const auto c = parse_criterion(text);
      check.expect(print(*c.root) == canonical, [&] { return std::string("'") + text + "' printed as '" + print(*c.root) + "'"; });
    } catch (const Error& e) {
      check.expect(false, [&] { return std::string("valid golden rejected: ") + text; });
    }
  }

  const std::pair<const char*, std::size_t> invalid[] = {
      {"", 0},
      {"   ", 0},
      {"a < b < c", 6},
      {"avg x) < 1", 4},
      {"a < 1 and b < 2", 6},
      {"(a < 1", 5},
      {"a = 1", 2},
      {"avg(min) < 1", 4},
      {"a <", 2},
      {"< 1", 0},
      {"a < 1 AND", 8},
      {"a < 1 )", 6},
      {"a < 1 OR OR b < 2", 9},
      {"avg(x < 1", 6},
      {"avg() < 1", 4},
      {"x # 1", 2},
      {"(a) < 1", 2},
      {"AND a < 1", 0},
      {"a < AND", 4},
      {"min(a) <= max", 12},
  };
  for (const auto& [text, offset] : invalid) {
    try {
      parse_criterion(text);
      check.expect(false, [&] { return std::string("invalid golden accepted: '") + text + "'"; });
    } catch (const CriterionParseError& e) {
      check.expect(e.offset() == offset && e.code() == ErrorCode::CriterionParseError, [&] {
        return std::string("'") + text + "' offset " + std::to_string(e.offset()) + ", expected " + std::to_string(offset);
      });
    }
  }
  check.note("1000 round trips, 20 valid, 20 invalid");
}

// ---------------------------------------------------------------------------
// Governance

const Json kSmallTree = Json::parse(R"({
  "name": "t",
  "params": {"population": {"size": 30, "min_degree": 1, "max_degree": 3, "method": "random"},
             "population_size": 30, "rounds": 2, "cycles": 3},
  "nodes": [{"id": "0", "kind": "goal", "criteria": ["avg(radicals) <= 1"], "children": [
    {"id": "0-0", "kind": "objective", "children": [{"id": "0-0-0", "kind": "step", "model": "rad"}]}]}]
})");

Json dataset_body(const std::string& name, const std::string& kind, Json retention) {
  return Json{{"name", name},
              {"source_kind", kind},
              {"schema", Json::array({Json{{"name", "user"}, {"type", "text"}, {"identifier", "direct_identifier"}},
                                      Json{{"name", "text"}, {"type", "text"}}})},
              {"ingest_chain", Json::array()},
              {"retention_days", std::move(retention)},
              {"compliance", compliance()}};
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Internal;
}

void default_deny(Check& check, const TempDir& tmp) {
  using namespace gateway;
  for (const char* content : {"", "[]\n"}) {
    const auto file = tmp.path / "abac-empty.json";
    write_file_atomic(file, content);
    WorkbenchOptions o;
    o.config_dir = kRoot / "config";
    o.policy = abac::load_policy_file(file);
    o.run_workers = 1;
    check.expect(o.policy.empty(), "empty policy file parsed to rules");
    Workbench wb(std::move(o));
    TokenMap tokens;
    tokens.emplace("root-token", abac::SubjectAttrs{"root", {{"role", "admin"}}});
    HttpServer server(wb, tokens);
    const int port = server.bind_any_port("127.0.0.1");
    std::thread listener([&] { server.listen(); });

    httplib::Client cli("127.0.0.1", port);
    const httplib::Headers auth{{"Authorization", "Bearer root-token"}};
    const std::string fn_body = Json{{"name", "m"}, {"kind", "ingest"}, {"builtin", "minimize"}, {"params", Json::object()},
                                     {"compliance", compliance()}}.dump();
    const std::string tree_body = Json{{"tree", kSmallTree}, {"seed", 1}}.dump();
    struct Call {
      const char* action;
      std::function<httplib::Result()> send;
    };
    const std::vector<Call> calls{
        {"register_function", [&] { return cli.Post("/api/v1/functions", auth, fn_body, "application/json"); }},
        {"register_dataset", [&] { return cli.Post("/api/v1/datasets", auth, dataset_body("d", "stream", 30).dump(), "application/json"); }},
        {"delete_artifact", [&] { return cli.Delete("/api/v1/artifacts/ds-000001", auth); }},
        {"ingest", [&] { return cli.Post("/api/v1/datasets/ds-000001/ingest", auth, "{}\n", "application/x-ndjson"); }},
        {"push", [&] { return cli.Post("/api/v1/datasets/ds-000001/records", auth, "{\"user\": \"u\"}", "application/json"); }},
        {"apply_analytic", [&] { return cli.Post("/api/v1/analytics/fn-000001/apply?dataset=ds-000001", auth, "{}", "application/json"); }},
        {"find_records", [&] { return cli.Get("/api/v1/datasets/ds-000001/records", auth); }},
        {"erase_subject", [&] { return cli.Delete("/api/v1/datasets/ds-000001/subject?field=user&value=u&mode=delete", auth); }},
        {"enforce_retention", [&] { return cli.Post("/api/v1/retention/enforce", auth, "", "application/json"); }},
        {"run_policy", [&] { return cli.Post("/api/v1/policies/runs", auth, tree_body, "application/json"); }},
        {"read_results", [&] { return cli.Get("/api/v1/policies/runs/run-000001/results", auth); }},
        {"list", [&] { return cli.Get("/api/v1/artifacts", auth); }},
    };
    check.expect(calls.size() == kActions.size(), "action list incomplete");
    for (std::size_t i = 0; i < calls.size(); ++i) {
      check.expect(i < kActions.size() && calls[i].action == kActions[i], "action order");
      const auto res = calls[i].send();
      check.expect(res && res->status == 403, [&] {
        return std::string(calls[i].action) + " returned " + (res ? std::to_string(res->status) : "no response");
      });
      if (!res) continue;
      const auto body = Json::parse(res->body, nullptr, false);
      check.expect(!body.is_discarded() && body["error"]["code"] == "AccessDenied" && body["error"]["rule"].is_null(),
                   [&] { return std::string(calls[i].action) + " body " + res->body; });
    }
    server.stop();
    listener.join();
    check.expect(wb.registry().list().empty(), "denied calls left artifacts behind");
  }
}

void missing_compliance(Check& check) {
  gateway::WorkbenchOptions o;
  o.config_dir = kRoot / "config";
  o.policy = abac::load_policy_set(R"([{"id": "admin", "effect": "permit", "action": "*", "subject": {"role": "admin"}}])");
  gateway::Workbench wb(std::move(o));
  const abac::SubjectAttrs admin{"admin", {{"role", "admin"}}};
  Json fn{{"name", "m"}, {"kind", "ingest"}, {"builtin", "minimize"}, {"params", Json::object()}};
  check.expect(code_of([&] { wb.register_function(admin, fn); }) == ErrorCode::MissingComplianceDoc, "function without compliance");
  fn["compliance"] = Json::object();
  check.expect(code_of([&] { wb.register_function(admin, fn); }) == ErrorCode::MissingComplianceDoc, "function with empty compliance");
  fn["compliance"] = Json{{"legal_constraints", "GDPR"}, {"tradeoffs", "coverage"}};
  check.expect(code_of([&] { wb.register_function(admin, fn); }) == ErrorCode::MissingComplianceDoc, "function without bias documentation");
  auto ds = dataset_body("d", "stream", 30);
  ds.erase("compliance");
  check.expect(code_of([&] { wb.register_dataset(admin, ds); }) == ErrorCode::MissingComplianceDoc, "dataset without compliance");
  check.expect(wb.registry().list().empty(), "rejected registration persisted");
}

void retention_and_erasure(Check& check) {
  auto now = std::make_shared<TimestampMs>(1'700'000'000'000);
  const TimestampMs t0 = *now;
  gateway::WorkbenchOptions o;
  o.config_dir = kRoot / "config";
  o.policy = abac::load_policy_set(R"([{"id": "admin", "effect": "permit", "action": "*", "subject": {"role": "admin"}}])");
  o.clock = [now] { return *now; };
  gateway::Workbench wb(std::move(o));
  const abac::SubjectAttrs admin{"admin", {{"role", "admin"}}};
  const std::string bounded = wb.register_dataset(admin, dataset_body("events", "stream", 30))["id"];
  const std::string forever = wb.register_dataset(admin, dataset_body("archive", "stream", "unlimited"))["id"];

  struct Row {
    TimestampMs time;
    std::string user;
  };
  std::vector<Row> rows;
  for (int i = 0; i < 60; ++i) {
    *now = t0 + i * kMillisPerDay / 2;
    const std::string user = "u" + std::to_string(i % 5);
    wb.push(admin, bounded, Json{{"user", user}, {"text", "t" + std::to_string(i)}});
    wb.push(admin, forever, Json{{"user", user}, {"text", "t"}});
    rows.push_back({*now, user});
  }
  // Record 20 expires exactly at the reference time and has to be kept.
  const TimestampMs at = t0 + 40 * kMillisPerDay;
  std::size_t expired = 0;
  for (const auto& r : rows) expired += r.time + 30 * kMillisPerDay < at;
  std::erase_if(rows, [&](const Row& r) { return r.time + 30 * kMillisPerDay < at; });
  const auto purged = wb.enforce_retention(admin, at)["purged"];
  check.expect(purged.value(bounded, -1) == static_cast<int>(expired),
               [&] { return "purged " + purged.dump() + ", expected " + std::to_string(expired); });
  check.expect(purged.value(forever, 0) == 0, "unlimited dataset purged");
  check.expect(wb.find_records(admin, bounded, {})["count"] == rows.size(), "remaining after retention");
  check.expect(wb.find_records(admin, forever, {})["count"] == 60, "unlimited dataset lost records");

  const auto count_user = [&](const std::string& u) {
    return std::count_if(rows.begin(), rows.end(), [&](const Row& r) { return r.user == u; });
  };
  const auto deleted = count_user("u2");
  check.expect(wb.erase_subject(admin, bounded, "user", "u2", "delete")["count"] == deleted, "erase delete count");
  std::erase_if(rows, [](const Row& r) { return r.user == "u2"; });
  gateway::FindQuery q{"user", "u2"};
  check.expect(wb.find_records(admin, bounded, q)["count"] == 0, "erased subject still findable");
  check.expect(wb.find_records(admin, bounded, {})["count"] == rows.size(), "erase removed other subjects");

  const auto anonymized = count_user("u3");
  check.expect(wb.erase_subject(admin, bounded, "user", "u3", "anonymize")["count"] == anonymized, "erase anonymize count");
  check.expect(wb.find_records(admin, bounded, gateway::FindQuery{"user", "u3"})["count"] == 0, "anonymized subject still findable");
  check.expect(wb.find_records(admin, bounded, {})["count"] == rows.size(), "anonymize changed the record count");
  std::size_t nulls = 0;
  const auto remaining = wb.find_records(admin, bounded, {});
  for (const auto& r : remaining["records"]) nulls += r["fields"]["user"].is_null();
  check.expect(nulls == static_cast<std::size_t>(anonymized), "anonymized records keep their identifier");
  check.note("purged " + std::to_string(expired) + ", deleted " + std::to_string(deleted) + ", anonymized " +
             std::to_string(anonymized));
}

void compliance_round_trip(Check& check, const TempDir& tmp) {
  std::mt19937_64 gen(808);
  const char* pieces[] = {"bias", "Überblick", "quote\"d", "line\nbreak", "tab\t", "€ 5", "日本", "", "back\\slash"};
  auto text = [&] {
    std::string s;
    for (std::size_t i = 0, n = gen() % 4; i < n; ++i) s += pieces[gen() % 9];
    return s;
  };
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    registry::ComplianceDoc doc;
    doc.bias_measures = "measured " + text();
    for (std::size_t k = 0, n = gen() % 4; k < n; ++k) doc.bias_statistics.push_back({text(), u01(gen)});
    doc.legal_constraints = text();
    doc.tradeoffs = text();
    for (std::size_t k = 0, n = gen() % 3; k < n; ++k) doc.concept_notes.push_back({text(), text()});
    const auto dumped = registry::to_json(doc).dump();
    const auto back = registry::compliance_from_json(parse_json(dumped, "doc"), "doc");
    check.expect(back == doc, [&] { return "round trip changed " + dumped; });
    check.expect(registry::to_json(back).dump() == dumped, "serialization not stable");
  }

  // Through persisted registry state.
  const auto dir = tmp.path / "registry-state";
  pipeline::Builtins builtins;
  registry::ComplianceDoc doc;
  doc.bias_measures = "gender split reviewed";
  doc.bias_statistics = {{"87% of the records pertain to males", 0.87}, {"third", 1.0 / 3.0}};
  doc.legal_constraints = "GDPR";
  doc.concept_notes = {{"text", "free-text review, \"verbatim\""}};
  std::string id;
  {
    registry::Registry reg(dir, builtins.hooks());
    auto body = dataset_body("d", "stream", 30);
    body["compliance"] = registry::to_json(doc);
    id = reg.register_dataset(registry::dataset_from_json(body), "owner");
  }
  registry::Registry reloaded(dir, builtins.hooks());
  const auto ds = reloaded.dataset(id);
  check.expect(ds && ds->compliance && *ds->compliance == doc, "compliance changed across restart");
}

void governance(Check& check) {
  TempDir tmp("governance");
  default_deny(check, tmp);
  missing_compliance(check);
  retention_and_erasure(check);
  compliance_round_trip(check, tmp);
}

// ---------------------------------------------------------------------------
// Determinism

const Json kWineTree = Json::parse(R"({
  "name": "wine pricing",
  "params": {"population": {"size": 60, "min_degree": 1, "max_degree": 4, "method": "random"},
             "population_sizes": [60, 80], "rounds": 2, "cycles": 6},
  "nodes": [{"id": "0", "kind": "goal", "criteria": ["avg(avg_motivation) > 0"], "children": [
    {"id": "0-0", "kind": "objective", "children": [{"id": "0-0-0", "kind": "step", "model": "wine", "model_params": {"price_x": 8}}]},
    {"id": "0-1", "kind": "objective", "children": [{"id": "0-1-0", "kind": "step", "model": "wine", "model_params": {"price_x": 16}}]}]}]
})");

void determinism(Check& check) {
  const auto rad = parse_json(read_file(kRoot / "samples/rad_restriction.json"), "tree");
  std::size_t bytes = 0;
  for (const auto& [doc, seed] : {std::pair{rad, std::uint64_t{42}}, std::pair{rad, std::uint64_t{7}},
                                  std::pair{kWineTree, std::uint64_t{42}}}) {
    const auto tree = metasim::load_tree(doc);
    const auto reference = metasim::to_json(metasim::execute(tree, seed, {1})).dump();
    bytes += reference.size();
    for (const std::size_t threads : {1u, 2u, 4u}) {
      const auto again = metasim::to_json(metasim::execute(tree, seed, {threads})).dump();
      check.expect(again == reference, [&] {
        return tree.name + " seed " + std::to_string(seed) + " differs with " + std::to_string(threads) + " threads";
      });
    }
  }

  // Same run submitted through two service instances with different thread counts.
  std::vector<std::string> docs;
  for (const std::size_t threads : {1u, 4u}) {
    gateway::WorkbenchOptions o;
    o.config_dir = kRoot / "config";
    o.policy = abac::load_policy_set(R"([{"id": "admin", "effect": "permit", "action": "*", "subject": {"role": "admin"}}])");
    o.run_workers = 2;
    o.sim_threads = threads;
    gateway::Workbench wb(std::move(o));
    const abac::SubjectAttrs admin{"admin", {{"role", "admin"}}};
    const std::string run = wb.start_run(admin, Json{{"tree", kWineTree}, {"seed", 99}})["run_id"];
    docs.push_back(wb.wait_results(admin, run).dump());
  }
  check.expect(docs[0] == docs[1], "service results differ between 1 and 4 simulation threads");
  check.note(std::to_string(bytes) + " reference bytes compared");
}

struct Criterion {
  const char* name;
  double budget_seconds;  // 0: unbounded
  void (*body)(Check&);
};

}  // namespace

int main() {
  const Criterion criteria[] = {
      {"rad_formula_suite", 1.0, rad_formula_suite},
      {"synchronous_update", 1.0, synchronous_update},
      {"restriction_decay", 30.0, restriction_decay},
      {"bundled_policy_tree", 60.0, bundled_policy_tree},
      {"wine_closed_form", 10.0, wine_closed_form},
      {"cleaning_convergence", 10.0, cleaning_convergence},
      {"pipeline_equivalence", 10.0, pipeline_equivalence},
      {"criterion_parser", 0.0, criterion_parser},
      {"governance", 0.0, governance},
      {"determinism", 0.0, determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Check check;
    const auto start = std::chrono::steady_clock::now();
    try {
      c.body(check);
    } catch (const std::exception& e) {
      check.expect(false, std::string("uncaught exception: ") + e.what());
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.budget_seconds > 0) {
      check.expect(seconds < c.budget_seconds, [&] { return "runtime " + fmt(seconds) + "s over " + fmt(c.budget_seconds) + "s"; });
    }
    failed += !check.passed();
    std::printf("%s %-22s %8.3fs  %s\n", check.passed() ? "PASS" : "FAIL", c.name, seconds, check.detail().c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failed, std::size(criteria));
  return failed == 0 ? 0 : 1;
}
