#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "scm/dgp.hpp"
#include "scm/errors.hpp"
#include "scm/estimators.hpp"

using namespace scm;

namespace {

// Noise-free panel: `n_clean` random clean donors, flagged donors and the
// treated unit are fixed convex mixtures of them. Treated post gets `effect`,
// flagged post gets `spill`. T0 is long enough for the clean donors to be
// affinely independent, so every exact pre fit implies the same mixture.
Panel constructed_panel(std::mt19937_64& rng, std::size_t n_clean, std::size_t n_flagged,
                        std::size_t pre, std::size_t post, double effect, double spill) {
  const std::size_t n = 1 + n_flagged + n_clean;
  const std::size_t t = pre + post;
  const Matrix clean = oracle::random_matrix(rng, n_clean, t);
  Panel p;
  p.outcomes = Matrix(n, t);
  p.pre_periods = pre;
  for (std::size_t c = 0; c < n_clean; ++c)
    for (std::size_t s = 0; s < t; ++s) p.outcomes(1 + n_flagged + c, s) = clean(c, s);
  for (std::size_t u = 0; u <= n_flagged; ++u) {
    const auto w = oracle::random_simplex(rng, n_clean);
    for (std::size_t s = 0; s < t; ++s) {
      double v = 0.0;
      for (std::size_t c = 0; c < n_clean; ++c) v += w[c] * clean(c, s);
      if (s >= pre) v += (u == 0 ? effect : spill);
      p.outcomes(u, s) = v;
    }
  }
  for (std::size_t u = 1; u <= n_flagged; ++u) p.spillover_units.push_back(u);
  return p;
}

void check_identity(const Panel& panel, const EffectEstimate& est) {
  const auto actual = panel.post(panel.treated_unit);
  REQUIRE(est.effect_post.size() == actual.size());
  REQUIRE(est.counterfactual_post.size() == actual.size());
  REQUIRE(est.counterfactual_pre.size() == panel.pre_periods);
  for (std::size_t p = 0; p < actual.size(); ++p) {
    CHECK(est.effect_post[p] == actual[p] - est.counterfactual_post[p]);
    const double scale = std::max(std::abs(actual[p]), std::abs(est.counterfactual_post[p]));
    CHECK(std::abs(est.effect_post[p] + est.counterfactual_post[p] - actual[p]) <=
          4.0 * 2.220446049250313e-16 * scale);
  }
}

bool same_estimate(const EffectEstimate& a, const EffectEstimate& b) {
  return a.counterfactual_pre == b.counterfactual_pre &&
         a.counterfactual_post == b.counterfactual_post && a.effect_post == b.effect_post;
}

}  // namespace

TEST_CASE("method names round trip") {
  for (Method m : kAllMethods) CHECK(parse_method(method_name(m)) == m);
  CHECK(method_name(Method::Sp) == "sp");
  CHECK_THROWS_AS(parse_method("lasso"), InvalidArgument);

  CHECK(MethodSpec{Method::Iterative, {}}.label() == "iterative");
  CHECK(MethodSpec{Method::Iterative, {true, false}}.label() == "iterative_yn");
  CHECK(MethodSpec{Method::Iterative, {false, true}}.label() == "iterative_ny");
  CHECK(MethodSpec::parse("iterative_nn") == MethodSpec{Method::Iterative, {false, false}});
  CHECK(MethodSpec::parse("iterative") == MethodSpec{Method::Iterative, {}});
  CHECK(MethodSpec::parse("restricted") == MethodSpec{Method::Restricted, {}});
  CHECK_THROWS_AS(MethodSpec::parse("iterative_xy"), InvalidArgument);
}

TEST_CASE("unrestricted on a treated unit equal to a donor") {
  Panel p;
  p.outcomes = Matrix{{1, 2, 3, 9}, {1, 2, 3, 4}, {0, 0, 0, 0}, {7, 1, 7, 1}};
  p.pre_periods = 3;
  const auto est = estimate_unrestricted(p);
  CHECK(est.counterfactual_post == std::vector<double>{4.0});
  CHECK(est.effect_post == std::vector<double>{5.0});
  CHECK(est.mean_effect() == 5.0);
  CHECK(est.diagnostics.donor_units == std::vector<std::size_t>{1, 2, 3});
  CHECK(est.diagnostics.weights == std::vector<double>{1.0, 0.0, 0.0});
  CHECK(est.diagnostics.pre_fit_objective == 0.0);
}

TEST_CASE("restricted excludes flagged donors") {
  Panel p;
  // Unit 1 fits the treated unit perfectly but is flagged.
  p.outcomes = Matrix{{1, 2, 3, 9}, {1, 2, 3, 6}, {0, 0, 0, 0}, {2, 4, 6, 8}};
  p.pre_periods = 3;
  p.spillover_units = {1};
  const auto est = estimate_restricted(p);
  CHECK(est.diagnostics.donor_units == std::vector<std::size_t>{2, 3});
  CHECK(est.diagnostics.weights[0] == doctest::Approx(0.5));
  CHECK(est.counterfactual_post[0] == doctest::Approx(4.0));
  check_identity(p, est);

  p.spillover_units = {1, 2, 3};
  CHECK_THROWS_AS(estimate_restricted(p), EmptyDonorPool);
  CHECK_THROWS_AS(estimate_iterative(p), EmptyDonorPool);
  CHECK_THROWS_AS(estimate_sp(p), EmptyDonorPool);
}

TEST_CASE("spillover system: 2x2 hand example against a generic solver") {
  const Matrix w{{0.0, 0.4}, {0.5, 0.0}};
  const Matrix g{{3.0}, {1.0}};
  const auto sol = solve_spillover_system(w, g);
  const auto ref = oracle::gauss_solve({{1.0, -0.4}, {-0.5, 1.0}}, {3.0, 1.0});
  CHECK(sol.effects(0, 0) == doctest::Approx(4.25).epsilon(1e-14));
  CHECK(sol.effects(0, 0) == doctest::Approx(ref[0]).epsilon(1e-14));
  CHECK(sol.effects(1, 0) == doctest::Approx(ref[1]).epsilon(1e-14));
  CHECK(sol.determinant == doctest::Approx(0.8));
  CHECK(sol.condition >= 1.0);
}

TEST_CASE("spillover system: random systems agree with Gaussian elimination") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t m = 1 + static_cast<std::size_t>(trial % 5);
    Matrix w(m, m, 0.0);
    std::vector<std::vector<double>> a(m, std::vector<double>(m, 0.0));
    for (std::size_t i = 0; i < m; ++i) {
      const auto row = oracle::random_simplex(rng, m);
      for (std::size_t k = 0; k < m; ++k) {
        w(i, k) = k == i ? 0.0 : 0.9 * row[k];
        a[i][k] = (i == k ? 1.0 : 0.0) - w(i, k);
      }
    }
    const auto gv = oracle::random_vector(rng, m);
    Matrix g(m, 1);
    for (std::size_t i = 0; i < m; ++i) g(i, 0) = gv[i];
    const auto sol = solve_spillover_system(w, g);
    const auto ref = oracle::gauss_solve(a, gv);
    for (std::size_t i = 0; i < m; ++i) CHECK(sol.effects(i, 0) == doctest::Approx(ref[i]).epsilon(1e-10));
  }
}

TEST_CASE("spillover system: singular and malformed inputs") {
  const Matrix w{{0.0, 1.0}, {1.0, 0.0}};
  const Matrix g{{1.0}, {1.0}};
  try {
    solve_spillover_system(w, g);
    FAIL("expected SingularSystem");
  } catch (const SingularSystem& e) {
    CHECK(std::abs(e.determinant()) < kSingularDeterminant);
    CHECK(std::string(e.what()).find("singular") != std::string::npos);
  }
  CHECK_THROWS_AS(solve_spillover_system(Matrix(2, 3), g), DimensionMismatch);
  CHECK_THROWS_AS(solve_spillover_system(Matrix(3, 3), g), DimensionMismatch);
}

TEST_CASE("least squares: intercept gives the mean, rank deficiency names columns") {
  const Matrix ones(2, 1, 1.0);
  const std::vector<double> gaps{2.0, 4.0};
  CHECK(least_squares(ones, gaps)[0] == doctest::Approx(3.0));

  const Matrix line{{1, 0}, {1, 1}, {1, 2}};
  const auto beta = least_squares(line, std::vector<double>{1, 3, 5});
  CHECK(beta[0] == doctest::Approx(1.0));
  CHECK(beta[1] == doctest::Approx(2.0));

  const Matrix dup{{1, 2}, {1, 2}, {1, 2}};
  try {
    least_squares(dup, std::vector<double>{1, 2, 3});
    FAIL("expected RankDeficientDesign");
  } catch (const RankDeficientDesign& e) {
    CHECK(e.columns().size() == 1);
    CHECK(std::string(e.what()).find("column") != std::string::npos);
  }
}

TEST_CASE("SP: two flagged donors with gaps 2 and 4 are each reduced by 3") {
  // Clean donors 3 and 4; flagged donors 1 and 2 copy donor 3 before
  // treatment, then sit 2 and 4 above it.
  Panel p;
  p.outcomes = Matrix{{0.5, 1.5, 0.5, 10.0},
                      {0.0, 1.0, 0.0, 2.0 + 2.0},
                      {0.0, 1.0, 0.0, 2.0 + 4.0},
                      {0.0, 1.0, 0.0, 2.0},
                      {1.0, 2.0, 1.0, 5.0}};
  p.pre_periods = 3;
  p.spillover_units = {1, 2};
  const auto est = estimate_sp(p);
  REQUIRE(est.diagnostics.spillover_coefficients.size() == 1);
  CHECK(est.diagnostics.spillover_coefficients[0][0] == doctest::Approx(3.0).epsilon(1e-12));
  // Cleaned flagged post values are 1 and 3, donor 3 is 2, donor 4 is 5.
  // Whatever pre mixture is chosen it blends {0,1,0} with {1,2,1} half and
  // half; the post counterfactual is the same blend of cleaned values.
  double cf = 0.0, mix_low = 0.0;
  const double cleaned_post[] = {1.0, 3.0, 2.0, 5.0};
  for (std::size_t i = 0; i < 4; ++i) {
    cf += est.diagnostics.weights[i] * cleaned_post[i];
    if (i < 3) mix_low += est.diagnostics.weights[i];
  }
  CHECK(mix_low == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(est.counterfactual_post[0] == doctest::Approx(cf).epsilon(1e-12));
  check_identity(p, est);
}

TEST_CASE("SP: zero flagged gaps give the unrestricted answer") {
  std::mt19937_64 rng(23);
  const Panel p = constructed_panel(rng, 4, 2, 12, 2, 5.0, 0.0);
  const auto sp = estimate_sp(p);
  const auto un = estimate_unrestricted(p);
  for (double b : sp.diagnostics.spillover_coefficients.at(0)) CHECK(std::abs(b) <= 1e-8);
  for (std::size_t t = 0; t < 2; ++t)
    CHECK(sp.counterfactual_post[t] == doctest::Approx(un.counterfactual_post[t]).epsilon(1e-8));
}

TEST_CASE("SP: design shape and rank are checked") {
  std::mt19937_64 rng(29);
  const Panel p = constructed_panel(rng, 3, 2, 10, 1, 2.0, 1.0);
  SpOptions bad_rows;
  bad_rows.design = Matrix(3, 1, 1.0);
  CHECK_THROWS_AS(estimate_sp(p, bad_rows), DimensionMismatch);
  SpOptions collinear;
  collinear.design = Matrix{{1, 2}, {1, 2}};
  CHECK_THROWS_AS(estimate_sp(p, collinear), RankDeficientDesign);
}

TEST_CASE("inclusive: hand-built cross weights") {
  // Treated (0) and flagged (1) donors; clean donors 2 and 3 are far away, so
  // each affected unit is synthesised from the other.
  Panel p;
  p.outcomes = Matrix{{1, 2, 1, 2, 10}, {1, 2, 1, 2, 4}, {50, 60, 50, 60, 0}, {-50, -60, -50, -60, 0}};
  p.pre_periods = 4;
  p.spillover_units = {1};
  // Units 0 and 1 coincide before treatment so (I - W) = [[1,-1],[-1,1]].
  CHECK_THROWS_AS(estimate_inclusive(p), SingularSystem);
}

TEST_CASE("inclusive: zero cross weights reduce to unrestricted") {
  // Flagged donor 1 is unrelated to the treated unit; the treated unit sits
  // on donor 2 and donor 1 sits on donor 3.
  Panel p;
  p.outcomes = Matrix{{1, 2, 3, 9},
                      {-4, 5, -6, 1},
                      {1, 2, 3, 4},
                      {-4, 5, -6, 0}};
  p.pre_periods = 3;
  p.spillover_units = {1};
  const auto inc = estimate_inclusive(p);
  const auto un = estimate_unrestricted(p);
  CHECK(inc.diagnostics.affected_units == std::vector<std::size_t>{0, 1});
  CHECK(inc.effect_post[0] == doctest::Approx(un.effect_post[0]).epsilon(1e-9));
  CHECK(inc.effect_post[0] == doctest::Approx(5.0).epsilon(1e-9));
  CHECK(inc.diagnostics.solved_effects[0][1] == doctest::Approx(1.0).epsilon(1e-9));
  check_identity(p, inc);
}

TEST_CASE("no-spillover coincidence on random panels") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n = 3 + static_cast<std::size_t>(trial % 8);
    const std::size_t pre = 2 + static_cast<std::size_t>(trial % 13);
    Panel p;
    p.outcomes = oracle::random_matrix(rng, n, pre + 1 + static_cast<std::size_t>(trial % 3));
    p.pre_periods = pre;
    const auto un = estimate_unrestricted(p);
    CHECK(same_estimate(un, estimate_restricted(p)));
    for (bool a : {true, false})
      for (bool b : {true, false}) CHECK(same_estimate(un, estimate_iterative(p, {a, b})));
    CHECK(same_estimate(un, estimate_inclusive(p)));
    CHECK(same_estimate(un, estimate_sp(p)));
  }
}

TEST_CASE("effect plus counterfactual reproduces the actual outcome for every method") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    DGPConfig cfg;
    cfg.seed = seed;
    cfg.n_controls = seed % 2 ? 5 : 9;
    cfg.post_periods = 1 + seed % 3;
    cfg.dgp_case = seed % 4 < 2 ? DgpCase::Stationary : DgpCase::I1;
    const auto data = generate(cfg);
    for (Method m : kAllMethods) {
      try {
        const auto est = estimate(data.panel, MethodSpec{m, {}});
        check_identity(data.panel, est);
        CHECK(est.method == m);
      } catch (const SingularSystem&) {
        // Possible for Inclusive on unlucky draws; not what this test is about.
      }
    }
  }
}

TEST_CASE("iterative fixed point on exact mixtures with zero spillover") {
  std::mt19937_64 rng(37);
  for (int trial = 0; trial < 10; ++trial) {
    const Panel p = constructed_panel(rng, 4, 1 + static_cast<std::size_t>(trial % 3), 20, 2, 5.0, 0.0);
    const auto un = estimate_unrestricted(p);
    for (bool a : {true, false})
      for (bool b : {true, false}) {
        const auto it = estimate_iterative(p, {a, b});
        CHECK(it.diagnostics.cleaning_order == p.spillover_units);
        for (std::size_t t = 0; t < 2; ++t)
          CHECK(std::abs(it.counterfactual_post[t] - un.counterfactual_post[t]) < 1e-6);
      }
  }
}

TEST_CASE("embedded effect is recovered by every method on noise-free panels") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    const Panel p = constructed_panel(rng, 4, 2, 20, 1, 5.0, 1.5);
    for (Method m : {Method::Restricted, Method::Iterative, Method::Inclusive, Method::Sp}) {
      const auto est = estimate(p, MethodSpec{m, {}});
      CHECK(std::abs(est.effect_post[0] - 5.0) < 1e-6);
    }
    // Unrestricted is only unbiased when the flagged donors carry no weight.
    const auto un = estimate_unrestricted(p);
    double flagged_weight = 0.0;
    for (std::size_t i = 0; i < un.diagnostics.donor_units.size(); ++i)
      if (p.is_spillover(un.diagnostics.donor_units[i])) flagged_weight += un.diagnostics.weights[i];
    CHECK(std::abs(un.effect_post[0] - (5.0 - 1.5 * flagged_weight)) < 1e-6);
  }
}

TEST_CASE("unrestricted bias grows with the spillover size") {
  // Mean |error| over a fixed seed set for each spill-to-treat ratio.
  const double ratios[] = {0.1, 0.3, 0.6, 0.9};
  std::vector<double> mean_abs;
  for (double r : ratios) {
    double total = 0.0;
    for (std::uint64_t seed = 1; seed <= 200; ++seed) {
      DGPConfig cfg;
      cfg.seed = seed;
      cfg.spill_to_treat_ratio = r;
      cfg.spillover_ratio = 0.67;
      const auto data = generate(cfg);
      const auto est = estimate_unrestricted(data.panel);
      total += std::abs(est.effect_post[0] - cfg.treatment_effect);
    }
    mean_abs.push_back(total / 200.0);
  }
  for (std::size_t i = 1; i < mean_abs.size(); ++i) CHECK(mean_abs[i] >= mean_abs[i - 1]);
}

TEST_CASE("estimate dispatches on the method spec") {
  std::mt19937_64 rng(43);
  const Panel p = constructed_panel(rng, 3, 2, 8, 1, 1.0, 0.5);
  CHECK(estimate(p, MethodSpec::parse("iterative_nn")).label == "iterative_nn");
  CHECK(estimate(p, MethodSpec::parse("inclusive")).label == "inclusive");
  CHECK(same_estimate(estimate(p, MethodSpec::parse("restricted")), estimate_restricted(p)));
}

TEST_CASE("invalid panels are rejected") {
  Panel p;
  p.outcomes = Matrix{{1, 2, 3}, {1, 2, NAN}};
  p.pre_periods = 2;
  CHECK_THROWS_AS(estimate_unrestricted(p), NonFiniteInput);
  p.outcomes = Matrix{{1, 2, 3}, {1, 2, 3}};
  p.pre_periods = 3;  // no post period
  CHECK_THROWS_AS(estimate_unrestricted(p), InvalidArgument);
}
