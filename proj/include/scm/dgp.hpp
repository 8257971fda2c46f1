#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "scm/panel.hpp"

namespace scm {

enum class DgpCase { Stationary, I1 };

/// How the treated unit's factor loadings are drawn.
enum class TreatedLoadings {
  Independent,  // same distribution as every other unit
  DonorHull,    // Dirichlet(1, ..., 1) mixture of the donors' loadings
};

std::string_view treated_loadings_name(TreatedLoadings t);  // "independent" / "donor_hull"
TreatedLoadings parse_treated_loadings(std::string_view name);

std::string_view dgp_case_name(DgpCase c);  // "stationary" / "i1"
DgpCase parse_dgp_case(std::string_view name);

/// One cell of the simulation grid plus the seed of one replication.
struct DGPConfig {
  DgpCase dgp_case = DgpCase::Stationary;
  std::size_t pre_periods = 10;
  std::size_t post_periods = 1;
  std::size_t n_controls = 5;
  double spillover_ratio = 0.33;     // share of controls flagged
  double treatment_effect = 3.0;
  double spill_to_treat_ratio = 0.3;  // spillover effect / treatment effect
  std::uint64_t seed = 0;

  // Factor-model shape. Untreated outcomes are
  //   y_it(0) = sum_k lambda_tk * mu_ik + eps_it
  // with mu ~ N(0, loading_sd^2), eps ~ N(0, noise_sd^2) and lambda either
  // i.i.d. N(0, 1) (stationary) or a Gaussian random walk from zero (I(1)).
  // With TreatedLoadings::DonorHull the treated unit's loadings are a random
  // convex combination of the donors' loadings instead of an independent draw.
  std::size_t n_factors = 2;
  double loading_sd = 1.0;
  double noise_sd = 1.0;
  TreatedLoadings treated_loadings = TreatedLoadings::Independent;

  /// Throws InvalidArgument naming the offending field.
  void validate() const;
};

struct GeneratedDataset {
  Panel panel;                              // treated unit 0, flagged donors 1..n_spill
  Matrix untreated;                         // y(0) for every unit and period
  std::vector<double> true_y0_treated_post;  // untreated counterfactual of unit 0
  double spillover_effect = 0.0;
};

/// round-half-up(ratio * n_controls), clamped to [1, n_controls - 1] so at
/// least one clean donor remains.
std::size_t spillover_count(double ratio, std::size_t n_controls);

/// Deterministic in `config` (including its seed).
GeneratedDataset generate(const DGPConfig& config);

/// The factor paths lambda (T x K) the generator draws for `config`, exposed
/// for moment checks.
Matrix draw_factors(const DGPConfig& config);

}  // namespace scm
