#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "scm/panel.hpp"
#include "scm/simplex.hpp"

namespace scm {

enum class Method { Unrestricted, Restricted, Iterative, Inclusive, Sp };

inline constexpr Method kAllMethods[] = {Method::Unrestricted, Method::Restricted,
                                         Method::Iterative, Method::Inclusive, Method::Sp};

std::string_view method_name(Method m);
/// Accepts the lower-case names produced by method_name. Throws InvalidArgument.
Method parse_method(std::string_view name);

/// The two switches of the iterative cleaning procedure.
struct IterativeOptions {
  bool replace_pre = true;   // cleaned donor uses its synthetic pre-period values too
  bool use_cleaned = true;   // already-cleaned donors join later cleaning pools

  bool operator==(const IterativeOptions&) const = default;
};

struct SpOptions {
  // Per flagged donor covariates for the linear spillover model, one row per
  // flagged donor in ascending unit order. Empty means intercept only.
  Matrix design;
};

/// A method plus its options; what the simulation and CLI pass around.
struct MethodSpec {
  Method method = Method::Unrestricted;
  IterativeOptions iterative{};

  /// "iterative" for default options, "iterative_yn" style otherwise
  /// (replace_pre, use_cleaned).
  std::string label() const;
  static MethodSpec parse(std::string_view label);

  bool operator==(const MethodSpec&) const = default;
};

struct Diagnostics {
  double pre_fit_objective = 0.0;  // treated unit's pre-period squared residuals
  bool converged = true;           // every simplex fit converged
  std::vector<std::size_t> donor_units;  // pool of the treated unit's final fit
  std::vector<double> weights;           // aligned with donor_units

  // Iterative: order in which flagged donors were cleaned.
  std::vector<std::size_t> cleaning_order;
  // Inclusive: affected set (treated first), per-post-period solved effects
  // [post][member] and the condition number of (I - W).
  std::vector<std::size_t> affected_units;
  std::vector<std::vector<double>> solved_effects;
  double system_condition = 0.0;
  // SP: estimated spillover coefficients [post][coefficient].
  std::vector<std::vector<double>> spillover_coefficients;

  std::vector<std::string> warnings;
};

struct EffectEstimate {
  Method method = Method::Unrestricted;
  std::string label;
  std::vector<double> counterfactual_pre;   // synthetic fit over the pre periods
  std::vector<double> counterfactual_post;  // predicted untreated outcome
  std::vector<double> effect_post;          // actual - counterfactual_post
  Diagnostics diagnostics;

  double mean_effect() const;
};

/// SCM on every donor, flagged or not.
EffectEstimate estimate_unrestricted(const Panel& panel);

/// SCM on unflagged donors only. Throws EmptyDonorPool when every donor is flagged.
EffectEstimate estimate_restricted(const Panel& panel);

/// Replace each flagged donor with its own synthetic version built from clean
/// donors, then fit the treated unit on the cleaned pool.
EffectEstimate estimate_iterative(const Panel& panel, const IterativeOptions& opts = {});

/// Fit every member of the affected set on all other units and solve the
/// cross-weight system for treatment and spillover effects jointly.
EffectEstimate estimate_inclusive(const Panel& panel);

/// Two-stage linear spillover adjustment of flagged donors' post outcomes.
EffectEstimate estimate_sp(const Panel& panel, const SpOptions& opts = {});

EffectEstimate estimate(const Panel& panel, const MethodSpec& spec);

/// Result of solving (I - W) e = g column by column.
struct SpilloverSystemSolution {
  Matrix effects;  // m x P, same layout as the gaps
  double determinant = 0.0;
  double condition = 0.0;
};

// Determinant magnitude below which (I - W) is rejected as singular.
inline constexpr double kSingularDeterminant = 1e-12;
// Condition numbers above this are reported as a warning.
inline constexpr double kConditionWarning = 1e8;

/// Solves (I - W) e = g for every column of `gaps` (m x P). `cross_weights`
/// is m x m with a zero diagonal. Throws SingularSystem.
SpilloverSystemSolution solve_spillover_system(const Matrix& cross_weights, const Matrix& gaps);

/// Ordinary least squares of `response` on the columns of `design` (n x p).
/// Throws RankDeficientDesign naming the dependent columns.
std::vector<double> least_squares(const Matrix& design, std::span<const double> response);

}  // namespace scm
