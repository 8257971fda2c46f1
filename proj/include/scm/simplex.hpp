#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "scm/panel.hpp"

namespace scm {

/// Donor weights on the unit simplex, one per donor in pool order.
struct SimplexWeights {
  std::vector<double> weights;
  double objective = 0.0;  // sum of squared pre-period residuals
  std::size_t iterations = 0;
  bool converged = false;
};

struct SimplexSolverOptions {
  std::size_t max_iterations = 10'000;
  // Stop once the Frank-Wolfe duality gap falls below this fraction of the
  // largest squared donor-to-target distance.
  double gap_tolerance = 1e-13;
};

/// Minimises ||target - donors^T w||^2 over the unit simplex.
///
/// `donors` is J x T0 (one row per donor) and `target` has T0 entries. The
/// solver is Wolfe's minimum-norm-point method applied to the shifted points
/// donors_j - target: a fully corrective Frank-Wolfe scheme whose corrective
/// step is an exact affine minimisation over the active set, so it terminates
/// in finitely many steps with the exact optimum up to rounding. It starts at
/// the best single-donor vertex (lowest index on ties), which makes the result
/// a deterministic function of the inputs and never worse than any vertex.
///
/// Throws NonFiniteInput / DimensionMismatch / InvalidArgument on bad input.
/// Hitting `max_iterations` returns the best iterate with converged=false.
SimplexWeights solve_simplex_ls(std::span<const double> target, const Matrix& donors,
                                const SimplexSolverOptions& options = {});

/// donors^T w over every column of `donors` (J x T).
std::vector<double> synthesize(std::span<const double> weights, const Matrix& donors);

/// Elementwise actual - synthetic.
std::vector<double> gap(std::span<const double> actual, std::span<const double> synthetic);

/// ||target - donors^T w||^2, the quantity the solver minimises.
double simplex_objective(std::span<const double> target, const Matrix& donors,
                         std::span<const double> weights);

}  // namespace scm
