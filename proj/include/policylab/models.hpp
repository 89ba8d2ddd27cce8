#pragma once

#include <span>
#include <string>
#include <string_view>

#include "policylab/json_util.hpp"
#include "policylab/simengine.hpp"

namespace policylab::models {

// ---------------------------------------------------------------------------
// RAD: radicalization through social influence

inline constexpr std::string_view kStatus = "radicalization_status";
inline constexpr std::string_view kContactStrength = "contact_strength";

struct RadParams {
  double radical_threshold = 0.5;
  double conformist_threshold = -0.5;
  double friendship_threshold = 0.0;
  double restriction_threshold = 0.1;
  bool restriction_enabled = false;

  /// Throws Error(DomainError) unless conformist < radical and every
  /// threshold lies in [-1, 1].
  void check() const;
};

RadParams rad_params_from_json(const Json& params);
Json to_json(const RadParams& params);

/// status × contact_strength.
double rad_influence(double status, double contact_strength);

/// clamp(status + Σ incoming, -1, 1).
double rad_update(double status, std::span<const double> incoming_influences);

enum class RadClass { radical, sympathizer, conformist };

/// Strict thresholds: values exactly on a threshold are sympathizers.
RadClass rad_classify(double status, const RadParams& params);

/// Scales every friend edge (cs > friendship_threshold) leaving a radical by
/// an independent uniform [0, 1) draw, in edge order. No-op unless
/// restriction is enabled.
sim::Graph rad_restrict_edges(const sim::Graph& graph, const RadParams& params, sim::Rng& rng);

struct RadPopulationAttrs {
  double radicals = 0.0;
  double sympathizers = 0.0;
  double conformists = 0.0;
  double restricted = 0.0;
};

/// Class fractions plus `restricted`: the fraction of individuals whose
/// every incident connection (in or out) has |cs| below restriction_threshold.
/// Individuals without connections count as isolated.
RadPopulationAttrs rad_population_attrs(const sim::Graph& graph, const RadParams& params);

/// Influence → update → classify → restrict, with population attributes
/// `radicals`, `sympathizers`, `conformists`, `restricted`. The rng is only
/// touched when restriction is enabled.
sim::RuleSet make_rad_rules(const RadParams& params);

// ---------------------------------------------------------------------------
// WINE: purchase motivation for a brand X

inline constexpr std::string_view kIncome = "income";
inline constexpr std::string_view kAdSusceptibility = "ad_susceptibility";
inline constexpr std::string_view kSocialSusceptibility = "social_susceptibility";
inline constexpr std::string_view kIncomeRanking = "income_ranking";
inline constexpr std::string_view kPriceSensitivity = "price_sensitivity";
inline constexpr std::string_view kQualitySensitivity = "quality_sensitivity";
inline constexpr std::string_view kPerceivedInfluence = "perceived_influence";
inline constexpr std::string_view kMotivation = "purchase_motivation";
inline constexpr std::string_view kInfluenceWeight = "influence_weight";

struct WineParams {
  double price_x = 10.0;
  double max_price = 20.0;
  double avg_price = 12.0;  // carried for completeness; no formula uses it
  double avg_quality = 0.5;
  double quality_x = 0.6;
  double max_income = 60000.0;
  double campaign_exposure = 0.3;
  double w_price = -1.0;
  double w_quality = 1.0;
  double w_ad = 1.0;
  double w_social = 1.0;
  std::size_t iterations = 10;

  void check() const;
};

WineParams wine_params_from_json(const Json& params);
Json to_json(const WineParams& params);

/// income / max_income; Error(DomainError) outside [0, max_income].
double wine_income_ranking(double income, double max_income);
/// (1 − income_ranking) × price_X / max_price.
double wine_price_sensitivity(double income_ranking, double price_x, double max_price);
/// quality_X / avg_quality × income_ranking.
double wine_quality_sensitivity(double income_ranking, double quality_x, double avg_quality);
/// Mean of weight × previous motivation over incoming edges; 0 without any.
double wine_perceived_influence(std::span<const double> weights, std::span<const double> motivations);
/// Same, read from a graph for one individual.
double wine_perceived_influence(const sim::Graph& graph, std::size_t individual);

struct WineComponents {
  double price_sensitivity = 0.0;
  double quality_sensitivity = 0.0;
  double ad_susceptibility = 0.0;
  double exposure = 0.0;
  double social_susceptibility = 0.0;
  double perceived = 0.0;
};

/// w_price·ps + w_quality·qs + w_ad·(ad × exposure) + w_social·(social × perceived).
double wine_motivation(const WineComponents& c, const WineParams& params);

/// Initializer derives income ranking, sensitivities, and the cycle-0
/// motivation (non-social terms); each cycle then adds the social term from
/// the previous cycle's motivations. Population attribute: `avg_motivation`.
sim::RuleSet make_wine_rules(const WineParams& params);

sim::SimulationTrace wine_simulate(const sim::PopulationModel& model, const WineParams& params, std::uint64_t seed,
                                   const sim::ExecutionOptions& options = {});

// ---------------------------------------------------------------------------
// Named model lookup used by policy trees

struct ModelInstance {
  std::string name;
  sim::RuleSet rules;
  std::size_t default_cycles = 10;
  Json params;  // normalized parameter block

  /// Fills in attribute initializers the model needs but the population
  /// model does not declare.
  sim::PopulationModel with_defaults(sim::PopulationModel population) const;
};

/// `model` is "rad" or "wine", `params` carries the typed fields above.
/// Throws Error(UnknownModel).
ModelInstance make_model(std::string_view model, const Json& params);

}  // namespace policylab::models
