#include "scm/estimators.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "scm/errors.hpp"

namespace scm {
namespace {

struct PoolFit {
  std::vector<std::size_t> units;
  SimplexWeights weights;
  std::vector<double> synthetic;  // all periods
};

// Fits `target` (full trajectory) on rows `units` of `trajectories` using the
// leading `pre` periods, and synthesises every period.
PoolFit fit_on_pool(std::span<const double> target, const Matrix& trajectories,
                    std::vector<std::size_t> units, std::size_t pre) {
  Matrix pool(units.size(), trajectories.cols());
  for (std::size_t i = 0; i < units.size(); ++i) {
    auto src = trajectories.row(units[i]);
    std::copy(src.begin(), src.end(), pool.row(i).begin());
  }
  PoolFit fit;
  fit.weights = solve_simplex_ls(target.first(pre), pool.leading_cols(pre));
  fit.synthetic = synthesize(fit.weights.weights, pool);
  fit.units = std::move(units);
  return fit;
}

EffectEstimate from_fit(const Panel& panel, Method method, PoolFit fit) {
  EffectEstimate est;
  est.method = method;
  est.label = std::string(method_name(method));
  const auto pre = static_cast<std::ptrdiff_t>(panel.pre_periods);
  est.counterfactual_pre.assign(fit.synthetic.begin(), fit.synthetic.begin() + pre);
  est.counterfactual_post.assign(fit.synthetic.begin() + pre, fit.synthetic.end());
  est.effect_post = gap(panel.post(panel.treated_unit), est.counterfactual_post);
  est.diagnostics.pre_fit_objective = fit.weights.objective;
  est.diagnostics.converged = fit.weights.converged;
  est.diagnostics.donor_units = std::move(fit.units);
  est.diagnostics.weights = std::move(fit.weights.weights);
  return est;
}

std::vector<std::size_t> require_clean(const Panel& panel) {
  auto clean = panel.clean_donors();
  if (clean.empty())
    throw EmptyDonorPool("every donor is flagged as spillover-affected; no clean donor remains");
  return clean;
}

std::string format_number(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace

std::string_view method_name(Method m) {
  switch (m) {
    case Method::Unrestricted: return "unrestricted";
    case Method::Restricted: return "restricted";
    case Method::Iterative: return "iterative";
    case Method::Inclusive: return "inclusive";
    case Method::Sp: return "sp";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  for (Method m : kAllMethods)
    if (method_name(m) == name) return m;
  throw InvalidArgument("unknown method '" + std::string(name) +
                        "' (expected unrestricted, restricted, iterative, inclusive or sp)");
}

std::string MethodSpec::label() const {
  if (method != Method::Iterative || iterative == IterativeOptions{})
    return std::string(method_name(method));
  return std::string("iterative_") + (iterative.replace_pre ? 'y' : 'n') +
         (iterative.use_cleaned ? 'y' : 'n');
}

MethodSpec MethodSpec::parse(std::string_view label) {
  constexpr std::string_view prefix = "iterative_";
  if (label.size() == prefix.size() + 2 && label.substr(0, prefix.size()) == prefix) {
    const char r = label[prefix.size()];
    const char u = label[prefix.size() + 1];
    const auto flag = [&](char c) {
      if (c == 'y') return true;
      if (c == 'n') return false;
      throw InvalidArgument("bad iterative variant '" + std::string(label) + "'");
    };
    return MethodSpec{Method::Iterative, IterativeOptions{flag(r), flag(u)}};
  }
  return MethodSpec{parse_method(label), {}};
}

double EffectEstimate::mean_effect() const {
  if (effect_post.empty()) return 0.0;
  return std::accumulate(effect_post.begin(), effect_post.end(), 0.0) /
         static_cast<double>(effect_post.size());
}

EffectEstimate estimate_unrestricted(const Panel& panel) {
  panel.validate();
  return from_fit(panel, Method::Unrestricted,
                  fit_on_pool(panel.outcomes.row(panel.treated_unit), panel.outcomes,
                              panel.donors(), panel.pre_periods));
}

EffectEstimate estimate_restricted(const Panel& panel) {
  panel.validate();
  auto clean = require_clean(panel);
  return from_fit(panel, Method::Restricted,
                  fit_on_pool(panel.outcomes.row(panel.treated_unit), panel.outcomes,
                              std::move(clean), panel.pre_periods));
}

EffectEstimate estimate_iterative(const Panel& panel, const IterativeOptions& opts) {
  panel.validate();
  require_clean(panel);
  const std::size_t pre = panel.pre_periods;

  // Flagged rows are overwritten with their cleaned trajectories as we go.
  Matrix work = panel.outcomes;
  std::vector<bool> cleaned(panel.units(), false);
  bool converged = true;

  for (std::size_t j : panel.spillover_units) {
    std::vector<std::size_t> pool;
    for (std::size_t u = 0; u < panel.units(); ++u) {
      if (u == panel.treated_unit) continue;
      if (!panel.is_spillover(u) || (opts.use_cleaned && cleaned[u])) pool.push_back(u);
    }
    PoolFit fit = fit_on_pool(panel.outcomes.row(j), work, std::move(pool), pre);
    converged = converged && fit.weights.converged;
    auto row = work.row(j);
    const std::size_t from = opts.replace_pre ? 0 : pre;
    std::copy(fit.synthetic.begin() + static_cast<std::ptrdiff_t>(from), fit.synthetic.end(),
              row.begin() + static_cast<std::ptrdiff_t>(from));
    cleaned[j] = true;
  }

  EffectEstimate est =
      from_fit(panel, Method::Iterative,
               fit_on_pool(panel.outcomes.row(panel.treated_unit), work, panel.donors(), pre));
  est.label = MethodSpec{Method::Iterative, opts}.label();
  est.diagnostics.converged = est.diagnostics.converged && converged;
  est.diagnostics.cleaning_order = panel.spillover_units;
  return est;
}

EffectEstimate estimate_inclusive(const Panel& panel) {
  panel.validate();
  const std::size_t pre = panel.pre_periods;
  const std::size_t post = panel.post_periods();

  std::vector<std::size_t> affected{panel.treated_unit};
  affected.insert(affected.end(), panel.spillover_units.begin(), panel.spillover_units.end());
  const std::size_t m = affected.size();

  Matrix cross(m, m, 0.0);
  Matrix gaps(m, post);
  std::vector<PoolFit> fits;
  fits.reserve(m);
  bool converged = true;
  for (std::size_t a = 0; a < m; ++a) {
    std::vector<std::size_t> pool;
    for (std::size_t u = 0; u < panel.units(); ++u)
      if (u != affected[a]) pool.push_back(u);
    PoolFit fit = fit_on_pool(panel.outcomes.row(affected[a]), panel.outcomes, std::move(pool), pre);
    converged = converged && fit.weights.converged;
    for (std::size_t b = 0; b < m; ++b) {
      if (b == a) continue;
      const auto it = std::find(fit.units.begin(), fit.units.end(), affected[b]);
      cross(a, b) = fit.weights.weights[static_cast<std::size_t>(it - fit.units.begin())];
    }
    const auto synth_post = std::span<const double>(fit.synthetic).subspan(pre);
    const auto g = gap(panel.post(affected[a]), synth_post);
    std::copy(g.begin(), g.end(), gaps.row(a).begin());
    fits.push_back(std::move(fit));
  }

  const SpilloverSystemSolution sol = solve_spillover_system(cross, gaps);

  EffectEstimate est = from_fit(panel, Method::Inclusive, std::move(fits.front()));
  // With no cross weights e = g and the plain fit already is the answer;
  // skipping the round trip keeps that case bit-identical to Unrestricted.
  const bool decoupled =
      std::all_of(cross.data().begin(), cross.data().end(), [](double w) { return w == 0.0; });
  if (!decoupled) {
    const auto actual = panel.post(panel.treated_unit);
    for (std::size_t p = 0; p < post; ++p) est.counterfactual_post[p] = actual[p] - sol.effects(0, p);
    est.effect_post = gap(actual, est.counterfactual_post);
  }

  auto& diag = est.diagnostics;
  diag.converged = converged;
  diag.affected_units = affected;
  diag.system_condition = sol.condition;
  diag.solved_effects.assign(post, std::vector<double>(m));
  for (std::size_t p = 0; p < post; ++p)
    for (std::size_t a = 0; a < m; ++a) diag.solved_effects[p][a] = sol.effects(a, p);
  if (sol.condition > kConditionWarning)
    diag.warnings.push_back("spillover system is ill-conditioned (condition " +
                            format_number(sol.condition) + ")");
  return est;
}

EffectEstimate estimate_sp(const Panel& panel, const SpOptions& opts) {
  panel.validate();
  auto clean = require_clean(panel);
  const auto& flagged = panel.spillover_units;
  if (flagged.empty()) {
    EffectEstimate est = estimate_unrestricted(panel);
    est.method = Method::Sp;
    est.label = std::string(method_name(Method::Sp));
    return est;
  }
  const std::size_t pre = panel.pre_periods;
  const std::size_t post = panel.post_periods();

  Matrix design = opts.design;
  if (design.empty()) {
    design = Matrix(flagged.size(), 1, 1.0);
  } else if (design.rows() != flagged.size()) {
    throw DimensionMismatch("SP design has " + std::to_string(design.rows()) +
                            " rows for " + std::to_string(flagged.size()) + " flagged donors");
  }

  // Stage 1: post-period gaps of flagged donors against clean donors.
  Matrix flagged_gaps(flagged.size(), post);
  bool converged = true;
  for (std::size_t r = 0; r < flagged.size(); ++r) {
    PoolFit fit = fit_on_pool(panel.outcomes.row(flagged[r]), panel.outcomes, clean, pre);
    converged = converged && fit.weights.converged;
    const auto g = gap(panel.post(flagged[r]), std::span<const double>(fit.synthetic).subspan(pre));
    std::copy(g.begin(), g.end(), flagged_gaps.row(r).begin());
  }

  // Stage 2: linear spillover model per post period, then clean flagged donors.
  Matrix work = panel.outcomes;
  std::vector<std::vector<double>> coefficients(post);
  std::vector<double> response(flagged.size());
  for (std::size_t p = 0; p < post; ++p) {
    for (std::size_t r = 0; r < flagged.size(); ++r) response[r] = flagged_gaps(r, p);
    coefficients[p] = least_squares(design, response);
    for (std::size_t r = 0; r < flagged.size(); ++r) {
      double fitted = 0.0;
      for (std::size_t c = 0; c < design.cols(); ++c) fitted += design(r, c) * coefficients[p][c];
      work(flagged[r], pre + p) -= fitted;
    }
  }

  EffectEstimate est =
      from_fit(panel, Method::Sp,
               fit_on_pool(panel.outcomes.row(panel.treated_unit), work, panel.donors(), pre));
  est.diagnostics.converged = est.diagnostics.converged && converged;
  est.diagnostics.spillover_coefficients = std::move(coefficients);
  return est;
}

EffectEstimate estimate(const Panel& panel, const MethodSpec& spec) {
  switch (spec.method) {
    case Method::Unrestricted: return estimate_unrestricted(panel);
    case Method::Restricted: return estimate_restricted(panel);
    case Method::Iterative: return estimate_iterative(panel, spec.iterative);
    case Method::Inclusive: return estimate_inclusive(panel);
    case Method::Sp: return estimate_sp(panel);
  }
  throw InvalidArgument("unknown method");
}

SpilloverSystemSolution solve_spillover_system(const Matrix& cross_weights, const Matrix& gaps) {
  const std::size_t m = cross_weights.rows();
  if (cross_weights.cols() != m) throw DimensionMismatch("cross-weight matrix must be square");
  if (gaps.rows() != m) throw DimensionMismatch("gap rows must match the cross-weight matrix");

  Eigen::MatrixXd system = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(m),
                                                     static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t k = 0; k < m; ++k)
      if (i != k) system(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) -= cross_weights(i, k);

  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(system);
  const auto& sv = svd.singularValues();
  const double smallest = sv(sv.size() - 1);
  const double condition = smallest > 0.0 ? sv(0) / smallest : std::numeric_limits<double>::infinity();

  const Eigen::FullPivLU<Eigen::MatrixXd> lu(system);
  const double det = lu.determinant();
  if (!(std::abs(det) >= kSingularDeterminant)) {
    throw SingularSystem("spillover system (I - W) is singular: |det| = " + format_number(std::abs(det)) +
                             ", condition estimate " + format_number(condition),
                         det, condition);
  }

  Eigen::MatrixXd rhs(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(gaps.cols()));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < gaps.cols(); ++p)
      rhs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p)) = gaps(i, p);
  const Eigen::MatrixXd solved = lu.solve(rhs);

  SpilloverSystemSolution out;
  out.effects = Matrix(m, gaps.cols());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < gaps.cols(); ++p)
      out.effects(i, p) = solved(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p));
  out.determinant = det;
  out.condition = condition;
  return out;
}

std::vector<double> least_squares(const Matrix& design, std::span<const double> response) {
  const auto n = static_cast<Eigen::Index>(design.rows());
  const auto p = static_cast<Eigen::Index>(design.cols());
  if (design.rows() != response.size())
    throw DimensionMismatch("least_squares: design rows and response length differ");
  if (p == 0) throw InvalidArgument("least_squares: design has no columns");

  Eigen::MatrixXd x(n, p);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < p; ++c)
      x(r, c) = design(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
  const Eigen::Map<const Eigen::VectorXd> y(response.data(), n);

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(1e-10);
  if (qr.rank() < p) {
    std::vector<std::size_t> deficient;
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index k = qr.rank(); k < p; ++k) deficient.push_back(static_cast<std::size_t>(perm(k)));
    std::sort(deficient.begin(), deficient.end());
    std::string names;
    for (std::size_t c : deficient) names += (names.empty() ? "" : ", ") + std::to_string(c);
    throw RankDeficientDesign("spillover design is rank deficient; dependent column(s): " + names,
                              std::move(deficient));
  }
  const Eigen::VectorXd beta = qr.solve(y);
  return {beta.data(), beta.data() + p};
}

}  // namespace scm
