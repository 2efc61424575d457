#include <cmath>
#include <vector>

#include "doctest.h"
#include "sicpln/fit.hpp"
#include "sicpln/rng.hpp"
#include "sicpln/simulate.hpp"
#include "support.hpp"

using namespace sicpln;
using testsupport::rel_err;

namespace {

// Penalized objective the fit maximizes: the full elbo minus the smooth-L0
// penalty over non-intercept coefficients, in per-observation units.
double objective_at(const CountDataset& data, const ModelParams& params,
                    const VariationalParams& vp, double lambda, double eps) {
  double pen = 0.0;
  for (Eigen::Index k = 1; k < params.B.rows(); ++k)
    for (Eigen::Index j = 0; j < params.B.cols(); ++j)
      pen += phi(params.B(k, j), eps);
  return (elbo(data, params, vp) - 0.5 * lambda * pen) /
         static_cast<double>(data.n());
}

// A perfectly calibrated instance: A = 1 = Y exactly, B = 0.
testsupport::SmallInstance unit_instance(int n, int p, int d) {
  Eigen::MatrixXd S = Eigen::MatrixXd::Constant(n, p, 0.6);
  Eigen::MatrixXd O = -0.5 * S.array().square().matrix();
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, d);
  X.col(0).setOnes();
  Rng rng(99);
  for (int i = 0; i < n; ++i)
    for (int k = 1; k < d; ++k) X(i, k) = rng.uniform(-1.0, 1.0);
  testsupport::SmallInstance inst{
      CountDataset::make(Eigen::MatrixXd::Ones(n, p), X, O),
      ModelParams::make(Eigen::MatrixXd::Zero(d, p),
                        Eigen::MatrixXd::Identity(p, p)),
      VariationalParams{Eigen::MatrixXd::Zero(n, p), S}};
  return inst;
}

}  // namespace

TEST_CASE("FitOptions validation") {
  FitOptions ok;
  CHECK_NOTHROW(ok.validate());
  FitOptions bad = ok;
  bad.max_vem_iters = 0;
  CHECK_THROWS_AS(bad.validate(), domain_error);
  bad = ok;
  bad.max_scoring_iters = 0;
  CHECK_THROWS_AS(bad.validate(), domain_error);
  bad = ok;
  bad.tol_elbo = 0.0;
  CHECK_THROWS_AS(bad.validate(), domain_error);
  bad = ok;
  bad.tol_param = -1.0;
  CHECK_THROWS_AS(bad.validate(), domain_error);
  bad = ok;
  bad.penalty.eps_ratio = 2.0;  // nested config is validated too
  CHECK_THROWS_AS(bad.validate(), domain_error);
}

TEST_CASE("penalized_information reduces to X'X/n at lambda 0, unit A") {
  const testsupport::SmallInstance inst = unit_instance(7, 1, 3);
  const Eigen::MatrixXd info =
      penalized_information(inst.data, inst.params, inst.vp, 0.0, 0.5);
  const Eigen::MatrixXd xtx =
      inst.data.X.transpose() * inst.data.X / static_cast<double>(7);
  REQUIRE(info.rows() == 3);
  CHECK((info - xtx).cwiseAbs().maxCoeff() < 1e-13);

  // adding the penalty shifts only non-intercept diagonal entries by
  // (lambda/2) * phi''(0) / n = lambda / (n * eps^2)
  const double lambda = 0.8, eps = 0.5;
  const Eigen::MatrixXd info_pen =
      penalized_information(inst.data, inst.params, inst.vp, lambda, eps);
  Eigen::MatrixXd expected = xtx;
  expected(1, 1) += lambda / (7.0 * eps * eps);
  expected(2, 2) += lambda / (7.0 * eps * eps);
  CHECK((info_pen - expected).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("penalized_information is block diagonal across species") {
  Rng rng(31);
  const testsupport::SmallInstance inst = testsupport::random_instance(rng, 6, 3, 2);
  const Eigen::MatrixXd info =
      penalized_information(inst.data, inst.params, inst.vp, 1.0, 0.3);
  REQUIRE(info.rows() == 6);  // p*d = 3*2
  for (int bj = 0; bj < 3; ++bj)
    for (int bk = 0; bk < 3; ++bk) {
      if (bj == bk) continue;
      CHECK(info.block(2 * bj, 2 * bk, 2, 2).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("penalized score and information match finite differences") {
  Rng rng(32);
  const testsupport::SmallInstance inst = testsupport::random_instance(rng, 5, 2, 2);
  const double lambda = 0.7, eps = 0.4;
  const int d = 2, p = 2;
  const double n = 5.0;

  const auto f = [&](const Eigen::MatrixXd& B) {
    const ModelParams t = ModelParams::make(B, inst.params.Sigma);
    return objective_at(inst.data, t, inst.vp, lambda, eps);
  };

  const Eigen::VectorXd score =
      penalized_score(inst.data, inst.params, inst.vp, lambda, eps);
  const Eigen::MatrixXd info =
      penalized_information(inst.data, inst.params, inst.vp, lambda, eps);
  REQUIRE(score.size() == d * p);

  // score = gradient of the penalized objective in vec(B) ordering
  for (int j = 0; j < p; ++j)
    for (int k = 0; k < d; ++k) {
      const double fd = testsupport::fdiff(
          [&](double v) {
            Eigen::MatrixXd B = inst.params.B;
            B(k, j) = v;
            return f(B);
          },
          inst.params.B(k, j));
      CHECK(rel_err(score[j * d + k], fd) < 1e-5);
    }

  // information = negative Hessian (diagonal entries via second differences)
  for (int j = 0; j < p; ++j)
    for (int k = 0; k < d; ++k) {
      const double fd2 = testsupport::fdiff2(
          [&](double v) {
            Eigen::MatrixXd B = inst.params.B;
            B(k, j) = v;
            return f(B);
          },
          inst.params.B(k, j));
      CHECK(rel_err(info(j * d + k, j * d + k), -fd2) < 1e-4);
    }

  // off-diagonal within a species block via mixed differences
  for (int j = 0; j < p; ++j) {
    const double h0 = 1e-4 * std::max(1.0, std::fabs(inst.params.B(0, j)));
    const double h1 = 1e-4 * std::max(1.0, std::fabs(inst.params.B(1, j)));
    const auto fj = [&](double u, double v) {
      Eigen::MatrixXd B = inst.params.B;
      B(0, j) += u;
      B(1, j) += v;
      return f(B);
    };
    const double mixed = (fj(h0, h1) - fj(h0, -h1) - fj(-h0, h1) + fj(-h0, -h1)) /
                         (4.0 * h0 * h1);
    CHECK(rel_err(info(j * d + 0, j * d + 1), -mixed) < 1e-4);
  }

  // at the perfectly fitted zero point the unpenalized score vanishes
  const testsupport::SmallInstance flat = unit_instance(4, 2, 2);
  const Eigen::VectorXd zero_score =
      penalized_score(flat.data, flat.params, flat.vp, 0.0, 0.5);
  CHECK(zero_score.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("scoring_step ascends the penalized objective") {
  Rng rng(33);
  const testsupport::SmallInstance inst = testsupport::random_instance(rng, 30, 2, 3);
  FitOptions opts;
  const double before = objective_at(inst.data, inst.params, inst.vp, 0.0, 1.0);
  const ScoringResult r =
      scoring_step(inst.data, inst.params, inst.vp, 0.0, 1.0, opts);
  CHECK(r.objective >= before);
  CHECK(r.iterations >= 1);
  // moving from a random B toward the optimum must strictly improve here
  CHECK(r.objective > before);
}

TEST_CASE("scoring respects a freeze mask with exact zeros") {
  Rng rng(34);
  const testsupport::SmallInstance inst = testsupport::random_instance(rng, 25, 2, 3);
  FitOptions opts;
  BoolMatrix mask = BoolMatrix::Constant(3, 2, true);
  mask(1, 0) = false;
  mask(2, 1) = false;
  ModelParams start = inst.params;
  start.B(1, 0) = 0.0;  // masked entries start at zero and must stay there
  start.B(2, 1) = 0.0;
  const ModelParams masked = ModelParams::make(start.B, start.Sigma);
  const ScoringResult r =
      scoring_step(inst.data, masked, inst.vp, 0.5, 0.3, opts, &mask);
  CHECK(r.B(1, 0) == 0.0);
  CHECK(r.B(2, 1) == 0.0);
  // unmasked entries were free to move
  CHECK(r.B(0, 0) != masked.B(0, 0));
}

TEST_CASE("penalized least squares solves a pure quadratic in one pass") {
  Rng rng(35);
  const int n = 40, d = 4;
  Eigen::MatrixXd X(n, d);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    for (int k = 1; k < d; ++k) X(i, k) = rng.uniform(-2.0, 2.0);
    y[i] = rng.uniform(-3.0, 3.0);
  }
  PenaltyConfig one_step;
  one_step.eps_steps = 1;
  const Eigen::VectorXd ols = X.householderQr().solve(y);
  const Eigen::VectorXd b = sic_least_squares(X, y, 0.0, one_step);
  CHECK((b - ols).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("penalized least squares recovers a sparse signal") {
  Rng rng(36);
  const int n = 50, d = 8;
  Eigen::MatrixXd X(n, d);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < d; ++k) X(i, k) = rng.normal();
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(d);
  beta[0] = 2.0;
  beta[3] = -1.5;
  beta[6] = 1.0;
  Eigen::VectorXd y = X * beta;
  for (int i = 0; i < n; ++i) y[i] += 0.1 * rng.normal();

  PenaltyConfig schedule;  // default telescoping ladder
  const Eigen::VectorXd b = sic_least_squares(X, y, 2.0 * std::log(n), schedule);
  for (int k = 0; k < d; ++k) {
    if (beta[k] != 0.0) {
      CHECK(std::fabs(b[k] - beta[k]) < 0.15);
    } else {
      CHECK(std::fabs(b[k]) < 1e-3);
    }
  }
}

TEST_CASE("penalized least squares satisfies the basic inequality") {
  // At the final eps the minimizer's objective cannot exceed the truth's.
  Rng rng(37);
  for (int rep = 0; rep < 5; ++rep) {
    const int n = 50, d = 8;
    Eigen::MatrixXd X(n, d);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < d; ++k) X(i, k) = rng.normal();
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(d);
    beta[1] = 1.0;
    beta[4] = -2.0;
    beta[5] = 0.7;
    Eigen::VectorXd y = X * beta;
    for (int i = 0; i < n; ++i) y[i] += 0.3 * rng.normal();

    PenaltyConfig schedule;
    const double lambda = std::log(n);
    const Eigen::VectorXd b = sic_least_squares(X, y, lambda, schedule);
    const double eps_final = eps_schedule(schedule).back();
    const auto obj = [&](const Eigen::VectorXd& v) {
      double pen = 0.0;
      for (int k = 0; k < d; ++k) pen += phi(v[k], eps_final);
      return (y - X * v).squaredNorm() / n + lambda / n * pen;
    };
    CHECK(obj(b) <= obj(beta) + 1e-8);
  }
}

TEST_CASE("vem trace is monotone and idempotent at its fixed point") {
  Rng rng(38);
  FitOptions opts;
  opts.penalty.lambda = 1.0;
  for (int rep = 0; rep < 3; ++rep) {
    const testsupport::SmallInstance inst =
        testsupport::random_instance(rng, 20, 2, 2);
    const VemResult r = vem(inst.data, {inst.params, inst.vp}, 1.0, 0.5, opts);
    REQUIRE(r.trace.objective.size() >= 2);
    for (size_t t = 1; t < r.trace.objective.size(); ++t)
      CHECK(r.trace.objective[t] >= r.trace.objective[t - 1] - 1e-12);
    CHECK(r.trace.eps == 0.5);

    // restarting from the converged state moves the objective negligibly
    const VemResult again = vem(inst.data, r.state, 1.0, 0.5, opts);
    const double before = r.trace.objective.back();
    const double after = again.trace.objective.back();
    CHECK(std::fabs(after - before) <= 10 * opts.tol_elbo * (1.0 + std::fabs(before)));
  }
}

TEST_CASE("unpenalized fit recovers simulated coefficients") {
  SimScenario sc;
  sc.n = 800;
  sc.p = 2;
  sc.d = 2;
  sc.seed = 5;
  Eigen::MatrixXd pattern(3, 2);
  pattern << 0.8, -0.5, 0.6, 0.0, -0.4, 0.7;
  sc.b_pattern = pattern;
  const SimData sim = gen_counts(sc);

  FitOptions opts;
  opts.lambda_auto = false;
  opts.penalty.lambda = 0.0;
  const FitResult fit = sicpln_fit(sim.data, opts);
  CHECK(fit.lambda == 0.0);
  CHECK(fit.stages.size() == 1);  // single stage, no refit
  CHECK_FALSE(fit.stages[0].refit);
  CHECK((fit.params.B - sim.B_true).cwiseAbs().maxCoeff() < 0.4);
  // no zeroing happened: the active set is all-true
  CHECK(fit.active_set.all());
}

TEST_CASE("penalized fit is deterministic and internally consistent") {
  SimScenario sc;
  sc.n = 120;
  sc.p = 3;
  sc.d = 3;
  sc.seed = 9;
  const SimData sim = gen_counts(sc);

  FitOptions opts;
  opts.penalty.eps_steps = 20;  // shorter ladder keeps the test quick
  const FitResult a = sicpln_fit(sim.data, opts);
  const FitResult b = sicpln_fit(sim.data, opts);

  // bit-identical across runs
  CHECK((a.params.B - b.params.B).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.params.Sigma - b.params.Sigma).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.objective == b.objective);

  // effective lambda is log(n) under lambda_auto
  CHECK(a.lambda == doctest::Approx(std::log(120.0)).epsilon(1e-12));

  // the reported objective is the last trace value of the last stage
  REQUIRE(!a.stages.empty());
  CHECK(a.objective == a.stages.back().objective.back());
  CHECK(a.stages.back().refit);

  // every stage trace is monotone non-decreasing
  for (const StageTrace& st : a.stages) {
    for (size_t t = 1; t < st.objective.size(); ++t)
      CHECK(st.objective[t] >= st.objective[t - 1] - 1e-10);
  }

  // active set marks exactly the nonzero coefficients
  for (Eigen::Index k = 0; k < a.params.B.rows(); ++k)
    for (Eigen::Index j = 0; j < a.params.B.cols(); ++j) {
      CHECK(a.active_set(k, j) == (a.params.B(k, j) != 0.0));
      // post-treatment left no stragglers below the cutoff
      if (a.params.B(k, j) != 0.0)
        CHECK(std::fabs(a.params.B(k, j)) >= opts.penalty.zero_threshold);
    }

  // path: one entry per ladder stage plus the refit snapshot
  REQUIRE(a.path.size() == 21);
  for (size_t t = 1; t < a.path.size(); ++t) {
    const double step =
        (a.path[t].second - a.path[t - 1].second).cwiseAbs().maxCoeff();
    CHECK(step < 1.0);  // telescoping keeps consecutive estimates close
  }
}

TEST_CASE("all-zero counts drive non-intercept coefficients to zero") {
  Rng rng(40);
  const int n = 40, p = 2, d = 3;
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, d);
  X.col(0).setOnes();
  for (int i = 0; i < n; ++i)
    for (int k = 1; k < d; ++k) X(i, k) = rng.uniform(-1.0, 1.0);
  const CountDataset data = CountDataset::make(Eigen::MatrixXd::Zero(n, p), X);

  FitOptions opts;
  opts.penalty.eps_steps = 20;
  const FitResult fit = sicpln_fit(data, opts);
  for (int k = 1; k < d; ++k)
    for (int j = 0; j < p; ++j) CHECK(fit.params.B(k, j) == 0.0);
  // intercepts chase -infinity; they must at least be strongly negative
  for (int j = 0; j < p; ++j) CHECK(fit.params.B(0, j) < -2.0);
}
