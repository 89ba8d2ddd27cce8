#include "policylab/models.hpp"

#include <algorithm>
#include <cmath>

#include "policylab/error.hpp"

namespace policylab::models {

namespace {

double number_or(const Json& params, std::string_view key, double fallback) {
  if (!params.is_object()) return fallback;
  const auto it = params.find(key);
  if (it == params.end() || it->is_null()) return fallback;
  if (!it->is_number()) {
    throw Error(ErrorCode::DomainError, "parameter '" + std::string(key) + "' must be a number", std::string(key));
  }
  return it->get<double>();
}

bool bool_or(const Json& params, std::string_view key, bool fallback) {
  if (!params.is_object()) return fallback;
  const auto it = params.find(key);
  if (it == params.end() || it->is_null()) return fallback;
  if (!it->is_boolean()) {
    throw Error(ErrorCode::DomainError, "parameter '" + std::string(key) + "' must be a boolean", std::string(key));
  }
  return it->get<bool>();
}

double attr_or(const sim::Attributes& attrs, std::string_view key, double fallback) {
  const auto it = attrs.find(key);
  return it == attrs.end() ? fallback : it->second;
}

double attr(const sim::Attributes& attrs, std::string_view key) {
  const auto it = attrs.find(key);
  if (it == attrs.end()) throw Error(ErrorCode::DomainError, "missing attribute '" + std::string(key) + "'");
  return it->second;
}

void require_unit(double v, const char* name) {
  if (!(v >= -1.0 && v <= 1.0)) throw Error(ErrorCode::DomainError, std::string(name) + " must lie in [-1, 1]", name);
}

}  // namespace

// ---------------------------------------------------------------------------
// RAD

void RadParams::check() const {
  require_unit(radical_threshold, "radical_threshold");
  require_unit(conformist_threshold, "conformist_threshold");
  require_unit(friendship_threshold, "friendship_threshold");
  require_unit(restriction_threshold, "restriction_threshold");
  if (!(conformist_threshold < radical_threshold)) {
    throw Error(ErrorCode::DomainError, "conformist_threshold must be below radical_threshold");
  }
}

RadParams rad_params_from_json(const Json& params) {
  RadParams p;
  p.radical_threshold = number_or(params, "radical_threshold", p.radical_threshold);
  p.conformist_threshold = number_or(params, "conformist_threshold", p.conformist_threshold);
  p.friendship_threshold = number_or(params, "friendship_threshold", p.friendship_threshold);
  p.restriction_threshold = number_or(params, "restriction_threshold", p.restriction_threshold);
  p.restriction_enabled = bool_or(params, "restriction_enabled", p.restriction_enabled);
  p.check();
  return p;
}

Json to_json(const RadParams& p) {
  Json out = Json::object();
  out["radical_threshold"] = p.radical_threshold;
  out["conformist_threshold"] = p.conformist_threshold;
  out["friendship_threshold"] = p.friendship_threshold;
  out["restriction_threshold"] = p.restriction_threshold;
  out["restriction_enabled"] = p.restriction_enabled;
  return out;
}

double rad_influence(double status, double contact_strength) { return status * contact_strength; }

double rad_update(double status, std::span<const double> incoming_influences) {
  double sum = status;
  for (const double v : incoming_influences) sum += v;
  return std::clamp(sum, -1.0, 1.0);
}

RadClass rad_classify(double status, const RadParams& params) {
  if (status > params.radical_threshold) return RadClass::radical;
  if (status < params.conformist_threshold) return RadClass::conformist;
  return RadClass::sympathizer;
}

namespace {

bool is_restricted_friend_edge(const sim::Individual& from, double cs, const RadParams& params) {
  return rad_classify(attr(from.attrs, kStatus), params) == RadClass::radical && cs > params.friendship_threshold;
}

}  // namespace

sim::Graph rad_restrict_edges(const sim::Graph& graph, const RadParams& params, sim::Rng& rng) {
  sim::Graph out = graph;
  if (!params.restriction_enabled) return out;
  for (auto& edge : out.mutable_edges()) {
    auto it = edge.attrs.find(kContactStrength);
    if (it == edge.attrs.end()) continue;
    if (is_restricted_friend_edge(graph.nodes()[edge.from], it->second, params)) it->second *= rng.uniform();
  }
  return out;
}

RadPopulationAttrs rad_population_attrs(const sim::Graph& graph, const RadParams& params) {
  RadPopulationAttrs out;
  if (graph.size() == 0) return out;
  std::size_t radicals = 0;
  std::size_t conformists = 0;
  std::size_t sympathizers = 0;
  std::size_t isolated = 0;
  for (std::size_t i = 0; i < graph.size(); ++i) {
    switch (rad_classify(attr(graph.nodes()[i].attrs, kStatus), params)) {
      case RadClass::radical: ++radicals; break;
      case RadClass::conformist: ++conformists; break;
      case RadClass::sympathizer: ++sympathizers; break;
    }
    auto weak = [&](std::size_t e) {
      return std::abs(attr_or(graph.edges()[e].attrs, kContactStrength, 0.0)) < params.restriction_threshold;
    };
    const auto in = graph.incoming(i);
    const auto out_edges = graph.outgoing(i);
    if (std::all_of(in.begin(), in.end(), weak) && std::all_of(out_edges.begin(), out_edges.end(), weak)) ++isolated;
  }
  const double n = static_cast<double>(graph.size());
  out.radicals = static_cast<double>(radicals) / n;
  out.conformists = static_cast<double>(conformists) / n;
  out.sympathizers = static_cast<double>(sympathizers) / n;
  out.restricted = static_cast<double>(isolated) / n;
  return out;
}

sim::RuleSet make_rad_rules(const RadParams& params) {
  params.check();
  sim::RuleSet rules;
  rules.id = params.restriction_enabled ? "rad/restrict" : "rad";
  rules.influence = [](const sim::Individual& source, const sim::Connection& edge) {
    return rad_influence(attr(source.attrs, kStatus), attr(edge.attrs, kContactStrength));
  };
  rules.individual = [](const sim::Individual& previous, std::span<const double> incoming, const sim::CycleContext&,
                        sim::Attributes& next) {
    next[std::string(kStatus)] = rad_update(attr(previous.attrs, kStatus), incoming);
  };
  if (params.restriction_enabled) {
    rules.connection = [params](const sim::Connection& previous, const sim::Individual& from, const sim::Individual&,
                                sim::Rng& rng, const sim::CycleContext&, sim::Attributes& next) {
      const double cs = attr(previous.attrs, kContactStrength);
      if (is_restricted_friend_edge(from, cs, params)) next[std::string(kContactStrength)] = cs * rng.uniform();
    };
  }
  auto extractor = [params](double RadPopulationAttrs::*member) {
    return [params, member](const sim::Graph& g) { return rad_population_attrs(g, params).*member; };
  };
  rules.population_attributes = {
      {"radicals", extractor(&RadPopulationAttrs::radicals)},
      {"sympathizers", extractor(&RadPopulationAttrs::sympathizers)},
      {"conformists", extractor(&RadPopulationAttrs::conformists)},
      {"restricted", extractor(&RadPopulationAttrs::restricted)},
  };
  rules.node_ranges = {{std::string(kStatus), -1.0, 1.0}};
  rules.edge_ranges = {{std::string(kContactStrength), -1.0, 1.0}};
  return rules;
}

// ---------------------------------------------------------------------------
// WINE

void WineParams::check() const {
  if (!(price_x > 0.0) || !(max_price > 0.0) || !(avg_price > 0.0) || !(avg_quality > 0.0) || !(max_income > 0.0)) {
    throw Error(ErrorCode::DomainError, "prices, average quality and max_income must be positive");
  }
  if (price_x > max_price) throw Error(ErrorCode::DomainError, "price_X exceeds max_price");
  if (!(quality_x >= 0.0 && quality_x <= 1.0)) throw Error(ErrorCode::DomainError, "quality_X must lie in [0, 1]");
  if (!(avg_quality <= 1.0)) throw Error(ErrorCode::DomainError, "avg_quality must lie in (0, 1]");
  if (!(campaign_exposure >= 0.0 && campaign_exposure <= 1.0)) {
    throw Error(ErrorCode::DomainError, "campaign_exposure must lie in [0, 1]");
  }
}

WineParams wine_params_from_json(const Json& params) {
  WineParams p;
  p.price_x = number_or(params, "price_X", p.price_x);
  p.max_price = number_or(params, "max_price", p.max_price);
  p.avg_price = number_or(params, "avg_price", p.avg_price);
  p.avg_quality = number_or(params, "avg_quality", p.avg_quality);
  p.quality_x = number_or(params, "quality_X", p.quality_x);
  p.max_income = number_or(params, "max_income", p.max_income);
  p.campaign_exposure = number_or(params, "campaign_exposure", p.campaign_exposure);
  p.w_price = number_or(params, "w_price", p.w_price);
  p.w_quality = number_or(params, "w_quality", p.w_quality);
  p.w_ad = number_or(params, "w_ad", p.w_ad);
  p.w_social = number_or(params, "w_social", p.w_social);
  const double k = number_or(params, "iterations", static_cast<double>(p.iterations));
  if (!(k >= 0.0) || k != std::floor(k)) throw Error(ErrorCode::DomainError, "iterations must be a non-negative integer");
  p.iterations = static_cast<std::size_t>(k);
  p.check();
  return p;
}

Json to_json(const WineParams& p) {
  Json out = Json::object();
  out["price_X"] = p.price_x;
  out["max_price"] = p.max_price;
  out["avg_price"] = p.avg_price;
  out["avg_quality"] = p.avg_quality;
  out["quality_X"] = p.quality_x;
  out["max_income"] = p.max_income;
  out["campaign_exposure"] = p.campaign_exposure;
  out["w_price"] = p.w_price;
  out["w_quality"] = p.w_quality;
  out["w_ad"] = p.w_ad;
  out["w_social"] = p.w_social;
  out["iterations"] = p.iterations;
  return out;
}

double wine_income_ranking(double income, double max_income) {
  if (!(max_income > 0.0)) throw Error(ErrorCode::DomainError, "max_income must be positive");
  if (!(income >= 0.0 && income <= max_income)) {
    throw Error(ErrorCode::DomainError, "income " + std::to_string(income) + " outside [0, max_income]");
  }
  return income / max_income;
}

double wine_price_sensitivity(double income_ranking, double price_x, double max_price) {
  return (1.0 - income_ranking) * (price_x / max_price);
}

double wine_quality_sensitivity(double income_ranking, double quality_x, double avg_quality) {
  return (quality_x / avg_quality) * income_ranking;
}

double wine_perceived_influence(std::span<const double> weights, std::span<const double> motivations) {
  if (weights.size() != motivations.size()) {
    throw Error(ErrorCode::DomainError, "weights and motivations differ in length");
  }
  if (weights.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) sum += weights[i] * motivations[i];
  return sum / static_cast<double>(weights.size());
}

double wine_perceived_influence(const sim::Graph& graph, std::size_t individual) {
  if (individual >= graph.size()) throw Error(ErrorCode::DomainError, "no individual " + std::to_string(individual));
  std::vector<double> weights;
  std::vector<double> motivations;
  for (const auto e : graph.incoming(individual)) {
    const auto& edge = graph.edges()[e];
    weights.push_back(attr_or(edge.attrs, kInfluenceWeight, 0.0));
    motivations.push_back(attr(graph.nodes()[edge.from].attrs, kMotivation));
  }
  return wine_perceived_influence(weights, motivations);
}

double wine_motivation(const WineComponents& c, const WineParams& p) {
  return p.w_price * c.price_sensitivity + p.w_quality * c.quality_sensitivity +
         p.w_ad * (c.ad_susceptibility * c.exposure) + p.w_social * (c.social_susceptibility * c.perceived);
}

namespace {

WineComponents components_of(const sim::Attributes& attrs, const WineParams& p, double perceived) {
  WineComponents c;
  c.price_sensitivity = attr(attrs, kPriceSensitivity);
  c.quality_sensitivity = attr(attrs, kQualitySensitivity);
  c.ad_susceptibility = attr_or(attrs, kAdSusceptibility, 0.0);
  c.exposure = p.campaign_exposure;
  c.social_susceptibility = attr_or(attrs, kSocialSusceptibility, 0.0);
  c.perceived = perceived;
  return c;
}

}  // namespace

sim::RuleSet make_wine_rules(const WineParams& params) {
  params.check();
  sim::RuleSet rules;
  rules.id = "wine";
  rules.initialize = [params](sim::Graph& graph) {
    for (auto& node : graph.mutable_nodes()) {
      auto& a = node.attrs;
      const double ranking = wine_income_ranking(attr(a, kIncome), params.max_income);
      a[std::string(kIncomeRanking)] = ranking;
      a[std::string(kPriceSensitivity)] = wine_price_sensitivity(ranking, params.price_x, params.max_price);
      a[std::string(kQualitySensitivity)] = wine_quality_sensitivity(ranking, params.quality_x, params.avg_quality);
      a[std::string(kPerceivedInfluence)] = 0.0;
      a[std::string(kMotivation)] = wine_motivation(components_of(a, params, 0.0), params);
    }
  };
  rules.influence = [](const sim::Individual& source, const sim::Connection& edge) {
    return attr_or(edge.attrs, kInfluenceWeight, 0.0) * attr(source.attrs, kMotivation);
  };
  rules.individual = [params](const sim::Individual& previous, std::span<const double> incoming,
                              const sim::CycleContext&, sim::Attributes& next) {
    double perceived = 0.0;
    if (!incoming.empty()) {
      for (const double v : incoming) perceived += v;
      perceived /= static_cast<double>(incoming.size());
    }
    next[std::string(kPerceivedInfluence)] = perceived;
    next[std::string(kMotivation)] = wine_motivation(components_of(previous.attrs, params, perceived), params);
  };
  rules.population_attributes = {{"avg_motivation", [](const sim::Graph& g) {
                                    if (g.size() == 0) return 0.0;
                                    double sum = 0.0;
                                    for (const auto& node : g.nodes()) sum += attr(node.attrs, kMotivation);
                                    return sum / static_cast<double>(g.size());
                                  }}};
  rules.node_ranges = {{std::string(kIncomeRanking), 0.0, 1.0},
                       {std::string(kAdSusceptibility), 0.0, 1.0},
                       {std::string(kSocialSusceptibility), 0.0, 1.0}};
  return rules;
}

sim::SimulationTrace wine_simulate(const sim::PopulationModel& model, const WineParams& params, std::uint64_t seed,
                                   const sim::ExecutionOptions& options) {
  auto instance = make_model("wine", to_json(params));
  return sim::run_simulation(instance.with_defaults(model), instance.rules, params.iterations, seed, options);
}

// ---------------------------------------------------------------------------

sim::PopulationModel ModelInstance::with_defaults(sim::PopulationModel population) const {
  auto fill = [](auto& target, std::string_view key, sim::Distribution d) {
    if (target.find(key) == target.end()) target.emplace(std::string(key), d);
  };
  if (name == "rad") {
    fill(population.node_attributes, kStatus, sim::Distribution::uniform(-1.0, 1.0));
    fill(population.edge_attributes, kContactStrength, sim::Distribution::uniform(-1.0, 1.0));
  } else if (name == "wine") {
    const double max_income = params.value("max_income", WineParams{}.max_income);
    fill(population.node_attributes, kIncome, sim::Distribution::uniform(0.0, max_income));
    fill(population.node_attributes, kAdSusceptibility, sim::Distribution::uniform(0.0, 1.0));
    fill(population.node_attributes, kSocialSusceptibility, sim::Distribution::uniform(0.0, 1.0));
    fill(population.edge_attributes, kInfluenceWeight, sim::Distribution::uniform(0.0, 1.0));
  }
  return population;
}

ModelInstance make_model(std::string_view model, const Json& params) {
  ModelInstance instance;
  instance.name = std::string(model);
  if (model == "rad") {
    const auto p = rad_params_from_json(params);
    instance.rules = make_rad_rules(p);
    instance.params = to_json(p);
    instance.default_cycles = 10;
  } else if (model == "wine") {
    const auto p = wine_params_from_json(params);
    instance.rules = make_wine_rules(p);
    instance.params = to_json(p);
    instance.default_cycles = p.iterations;
  } else {
    throw Error(ErrorCode::UnknownModel, "unknown model '" + std::string(model) + "'", std::string(model));
  }
  return instance;
}

}  // namespace policylab::models
