#include "scm/simplex.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "scm/errors.hpp"
#include "scm/kernels.hpp"

namespace scm {
namespace {

// Active weights below this are treated as leaving the corral.
constexpr double kPositivity = 1e-12;

void check_finite(std::span<const double> values, const char* what) {
  for (double v : values)
    if (!std::isfinite(v)) throw NonFiniteInput(std::string(what) + " contains a non-finite value");
}

// Minimiser of ||sum_i a_i p_i|| subject to sum_i a_i = 1 over the points
// indexed by `active`. Solved as a least-squares problem in the differences
// p_i - p_0, which keeps the conditioning of the points rather than of their
// Gram matrix.
std::vector<double> affine_minimizer(const Matrix& points, const std::vector<std::size_t>& active) {
  const std::size_t k = active.size();
  if (k == 1) return {1.0};
  const std::size_t dim = points.cols();
  const auto base = points.row(active[0]);
  Eigen::MatrixXd diffs(dim, k - 1);
  Eigen::VectorXd rhs(dim);
  for (std::size_t t = 0; t < dim; ++t) rhs(t) = -base[t];
  for (std::size_t c = 1; c < k; ++c) {
    const auto p = points.row(active[c]);
    for (std::size_t t = 0; t < dim; ++t) diffs(t, c - 1) = p[t] - base[t];
  }
  const Eigen::VectorXd beta = diffs.colPivHouseholderQr().solve(rhs);
  std::vector<double> alpha(k);
  double rest = 0.0;
  for (std::size_t c = 1; c < k; ++c) {
    alpha[c] = beta(static_cast<Eigen::Index>(c - 1));
    rest += alpha[c];
  }
  alpha[0] = 1.0 - rest;
  return alpha;
}

std::vector<double> combine(const Matrix& points, const std::vector<std::size_t>& active,
                            const std::vector<double>& lambda) {
  std::vector<double> x(points.cols(), 0.0);
  for (std::size_t i = 0; i < active.size(); ++i) kernels::axpy(lambda[i], points.row(active[i]), x);
  return x;
}

}  // namespace

SimplexWeights solve_simplex_ls(std::span<const double> target, const Matrix& donors,
                                const SimplexSolverOptions& options) {
  const std::size_t n_donors = donors.rows();
  const std::size_t dim = target.size();
  if (n_donors == 0) throw InvalidArgument("solve_simplex_ls: no donors");
  if (dim == 0) throw InvalidArgument("solve_simplex_ls: empty target");
  if (donors.cols() != dim)
    throw DimensionMismatch("solve_simplex_ls: donors have " + std::to_string(donors.cols()) +
                            " periods but target has " + std::to_string(dim));
  check_finite(target, "target");
  check_finite(donors.data(), "donors");

  SimplexWeights out;
  out.weights.assign(n_donors, 0.0);

  // Shifted points p_j = donor_j - target; the objective is ||sum w_j p_j||^2.
  Matrix points(n_donors, dim);
  std::vector<double> norms(n_donors);
  for (std::size_t j = 0; j < n_donors; ++j) {
    auto src = donors.row(j);
    auto dst = points.row(j);
    for (std::size_t t = 0; t < dim; ++t) dst[t] = src[t] - target[t];
    norms[j] = kernels::squared_distance(src, target);
  }

  const std::size_t start = static_cast<std::size_t>(
      std::min_element(norms.begin(), norms.end()) - norms.begin());
  std::vector<std::size_t> active{start};
  std::vector<double> lambda{1.0};
  std::vector<double> x(points.row(start).begin(), points.row(start).end());
  double x_norm = kernels::dot(x, x);

  const double scale = *std::max_element(norms.begin(), norms.end());
  const double tolerance = options.gap_tolerance * std::max(scale, std::numeric_limits<double>::min());

  std::vector<double> scores(n_donors);
  bool converged = n_donors == 1;
  std::size_t iter = 0;
  while (!converged && iter < options.max_iterations) {
    ++iter;
    for (std::size_t j = 0; j < n_donors; ++j) scores[j] = kernels::dot(x, points.row(j));
    const std::size_t entering = static_cast<std::size_t>(
        std::min_element(scores.begin(), scores.end()) - scores.begin());
    if (x_norm - scores[entering] <= tolerance ||
        std::find(active.begin(), active.end(), entering) != active.end()) {
      converged = true;
      break;
    }

    auto trial_active = active;
    auto trial_lambda = lambda;
    trial_active.push_back(entering);
    trial_lambda.push_back(0.0);

    // Minor cycles: move towards the affine minimiser until it lies inside
    // the simplex of the active set, dropping points that hit zero weight.
    for (;;) {
      std::vector<double> alpha = affine_minimizer(points, trial_active);
      if (std::all_of(alpha.begin(), alpha.end(), [](double a) { return a > kPositivity; })) {
        trial_lambda = std::move(alpha);
        break;
      }
      double theta = 1.0;
      for (std::size_t i = 0; i < alpha.size(); ++i) {
        if (alpha[i] <= kPositivity) {
          const double denom = trial_lambda[i] - alpha[i];
          const double step = denom > 0.0 ? trial_lambda[i] / denom : 0.0;
          theta = std::min(theta, step);
        }
      }
      std::size_t leaving = alpha.size();
      double smallest = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < alpha.size(); ++i) {
        trial_lambda[i] = (1.0 - theta) * trial_lambda[i] + theta * alpha[i];
        if (alpha[i] <= kPositivity && trial_lambda[i] < smallest) {
          smallest = trial_lambda[i];
          leaving = i;
        }
      }
      if (leaving < alpha.size()) trial_lambda[leaving] = 0.0;
      std::vector<std::size_t> kept_active;
      std::vector<double> kept_lambda;
      for (std::size_t i = 0; i < trial_active.size(); ++i) {
        if (trial_lambda[i] > kPositivity) {
          kept_active.push_back(trial_active[i]);
          kept_lambda.push_back(trial_lambda[i]);
        }
      }
      if (kept_active.empty()) {
        kept_active.push_back(entering);
        kept_lambda.push_back(1.0);
      }
      const double total = std::accumulate(kept_lambda.begin(), kept_lambda.end(), 0.0);
      for (double& l : kept_lambda) l /= total;
      trial_active = std::move(kept_active);
      trial_lambda = std::move(kept_lambda);
      if (trial_active.size() == 1) break;
    }

    std::vector<double> trial_x = combine(points, trial_active, trial_lambda);
    const double trial_norm = kernels::dot(trial_x, trial_x);
    if (!(trial_norm < x_norm)) {
      // No representable progress: the current iterate is optimal to rounding.
      converged = true;
      break;
    }
    active = std::move(trial_active);
    lambda = std::move(trial_lambda);
    x = std::move(trial_x);
    x_norm = trial_norm;
  }

  double total = 0.0;
  for (std::size_t i = 0; i < active.size(); ++i) {
    const double w = std::max(lambda[i], 0.0);
    out.weights[active[i]] = w;
    total += w;
  }
  for (double& w : out.weights) w /= total;

  out.objective = simplex_objective(target, donors, out.weights);
  out.iterations = iter;
  out.converged = converged;
  return out;
}

std::vector<double> synthesize(std::span<const double> weights, const Matrix& donors) {
  if (weights.size() != donors.rows())
    throw DimensionMismatch("synthesize: " + std::to_string(weights.size()) + " weights for " +
                            std::to_string(donors.rows()) + " donors");
  std::vector<double> out(donors.cols(), 0.0);
  for (std::size_t j = 0; j < weights.size(); ++j) {
    if (weights[j] != 0.0) kernels::axpy(weights[j], donors.row(j), out);
  }
  return out;
}

std::vector<double> gap(std::span<const double> actual, std::span<const double> synthetic) {
  if (actual.size() != synthetic.size())
    throw DimensionMismatch("gap: lengths " + std::to_string(actual.size()) + " and " +
                            std::to_string(synthetic.size()) + " differ");
  std::vector<double> out(actual.size());
  for (std::size_t i = 0; i < actual.size(); ++i) out[i] = actual[i] - synthetic[i];
  return out;
}

double simplex_objective(std::span<const double> target, const Matrix& donors,
                         std::span<const double> weights) {
  const std::vector<double> fitted = synthesize(weights, donors);
  return kernels::squared_distance(target, fitted);
}

}  // namespace scm
