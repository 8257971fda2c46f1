#include "scm/dgp.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "scm/errors.hpp"

namespace scm {
namespace {

// Draw order is part of the determinism contract: factors, loadings, noise.
Matrix draw_factor_paths(const DGPConfig& c, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t periods = c.pre_periods + c.post_periods;
  Matrix lambda(periods, c.n_factors);
  for (std::size_t t = 0; t < periods; ++t) {
    for (std::size_t k = 0; k < c.n_factors; ++k) {
      const double shock = normal(rng);
      if (c.dgp_case == DgpCase::I1) {
        lambda(t, k) = (t == 0 ? 0.0 : lambda(t - 1, k)) + shock;
      } else {
        lambda(t, k) = shock;
      }
    }
  }
  return lambda;
}

}  // namespace

std::string_view dgp_case_name(DgpCase c) {
  return c == DgpCase::Stationary ? "stationary" : "i1";
}

DgpCase parse_dgp_case(std::string_view name) {
  if (name == "stationary") return DgpCase::Stationary;
  if (name == "i1" || name == "I1" || name == "I(1)") return DgpCase::I1;
  throw InvalidArgument("unknown DGP case '" + std::string(name) + "' (expected stationary or i1)");
}

std::string_view treated_loadings_name(TreatedLoadings t) {
  return t == TreatedLoadings::Independent ? "independent" : "donor_hull";
}

TreatedLoadings parse_treated_loadings(std::string_view name) {
  if (name == "independent") return TreatedLoadings::Independent;
  if (name == "donor_hull") return TreatedLoadings::DonorHull;
  throw InvalidArgument("unknown treated_loadings '" + std::string(name) +
                        "' (expected independent or donor_hull)");
}

void DGPConfig::validate() const {
  if (pre_periods < 1) throw InvalidArgument("pre_periods must be >= 1");
  if (post_periods < 1) throw InvalidArgument("post_periods must be >= 1");
  if (n_controls < 2) throw InvalidArgument("n_controls must be >= 2");
  if (!(spillover_ratio > 0.0 && spillover_ratio < 1.0))
    throw InvalidArgument("spillover_ratio must lie in (0, 1)");
  if (!(treatment_effect > 0.0) || !std::isfinite(treatment_effect))
    throw InvalidArgument("treatment_effect must be positive");
  if (!std::isfinite(spill_to_treat_ratio)) throw InvalidArgument("spill_to_treat_ratio must be finite");
  if (n_factors < 1) throw InvalidArgument("n_factors must be >= 1");
  if (!(loading_sd >= 0.0) || !(noise_sd >= 0.0))
    throw InvalidArgument("loading_sd and noise_sd must be non-negative");
}

std::size_t spillover_count(double ratio, std::size_t n_controls) {
  const double scaled = std::floor(ratio * static_cast<double>(n_controls) + 0.5);
  const double hi = static_cast<double>(n_controls - 1);
  return static_cast<std::size_t>(std::clamp(scaled, 1.0, hi));
}

Matrix draw_factors(const DGPConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  return draw_factor_paths(config, rng);
}

GeneratedDataset generate(const DGPConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  const std::size_t units = config.n_controls + 1;
  const std::size_t periods = config.pre_periods + config.post_periods;
  const std::size_t k_max = config.n_factors;

  const Matrix lambda = draw_factor_paths(config, rng);
  Matrix loadings(units, k_max);
  for (std::size_t i = 0; i < units; ++i)
    for (std::size_t k = 0; k < k_max; ++k) loadings(i, k) = config.loading_sd * normal(rng);
  if (config.treated_loadings == TreatedLoadings::DonorHull) {
    std::exponential_distribution<double> expo(1.0);
    std::vector<double> mix(units - 1);
    double total = 0.0;
    for (double& m : mix) total += (m = expo(rng));
    for (std::size_t k = 0; k < k_max; ++k) {
      double mu = 0.0;
      for (std::size_t j = 1; j < units; ++j) mu += mix[j - 1] / total * loadings(j, k);
      loadings(0, k) = mu;
    }
  }

  GeneratedDataset out;
  out.untreated = Matrix(units, periods);
  for (std::size_t i = 0; i < units; ++i) {
    for (std::size_t t = 0; t < periods; ++t) {
      double common = 0.0;
      for (std::size_t k = 0; k < k_max; ++k) common += lambda(t, k) * loadings(i, k);
      out.untreated(i, t) = common + config.noise_sd * normal(rng);
    }
  }

  const std::size_t n_spill = spillover_count(config.spillover_ratio, config.n_controls);
  out.spillover_effect = config.spill_to_treat_ratio * config.treatment_effect;

  Panel& panel = out.panel;
  panel.outcomes = out.untreated;
  panel.treated_unit = 0;
  panel.pre_periods = config.pre_periods;
  for (std::size_t j = 1; j <= n_spill; ++j) panel.spillover_units.push_back(j);

  for (std::size_t t = config.pre_periods; t < periods; ++t) {
    out.true_y0_treated_post.push_back(out.untreated(0, t));
    panel.outcomes(0, t) += config.treatment_effect;
    for (std::size_t j : panel.spillover_units) panel.outcomes(j, t) += out.spillover_effect;
  }
  return out;
}

}  // namespace scm
