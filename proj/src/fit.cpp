#include "sicpln/fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace sicpln {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr int kMaxHalvings = 30;
constexpr int kVmSweeps = 4;

struct ObjectiveCtx {
  const CountDataset& data;
  double lambda;
  double eps;
  double log_yfact;
};

double penalty_sum_nonintercept(const Eigen::MatrixXd& B, double eps) {
  const double e2 = eps * eps;
  double acc = 0.0;
  for (Eigen::Index j = 0; j < B.cols(); ++j) {
    for (Eigen::Index k = 1; k < B.rows(); ++k) {
      const double x2 = B(k, j) * B(k, j);
      acc += x2 / (x2 + e2);
    }
  }
  return acc;
}

// Penalized objective [elbo - (lambda/2)*||B_non-intercept||_{0,eps}] / n:
// the full-likelihood pseudo-BIC criterion in per-observation units.
// Returns -inf instead of throwing when a trial point overflows exp, so line
// searches can reject it.
double penalized_objective(const ObjectiveCtx& ctx, const ModelParams& params,
                           const VariationalParams& vp) {
  Eigen::MatrixXd A;
  if (!detail::try_mean_matrix(ctx.data, params, vp, &A)) return kNegInf;
  const double n = static_cast<double>(ctx.data.n());
  double obj = detail::elbo_given(ctx.data, params, vp, A, ctx.log_yfact) / n;
  if (ctx.lambda > 0.0)
    obj -= 0.5 * ctx.lambda / n * penalty_sum_nonintercept(params.B, ctx.eps);
  return obj;
}

bool accepts(double obj_trial, double obj) {
  return std::isfinite(obj_trial) && obj_trial >= obj;
}

// Solve H x = s with a Levenberg ridge escalated tenfold from 1e-8 (scaled by
// the largest diagonal) until the block is SPD, then a QR solve. phi'' can be
// negative away from 0, so the penalized block may be indefinite.
Eigen::VectorXd solve_spd_ridge(Eigen::MatrixXd H, const Eigen::VectorXd& s) {
  const double scale = std::max(1.0, H.diagonal().cwiseAbs().maxCoeff());
  double ridge = 0.0;
  for (int attempt = 0; attempt < 60; ++attempt) {
    Eigen::MatrixXd Hr = H;
    if (ridge > 0.0) Hr.diagonal().array() += ridge;
    Eigen::LLT<Eigen::MatrixXd> llt(Hr);
    if (llt.info() == Eigen::Success) return Hr.householderQr().solve(s);
    ridge = ridge == 0.0 ? 1e-8 * scale : 10.0 * ridge;
  }
  throw numeric_error("scoring: ridge escalation failed to reach SPD block");
}

std::vector<Eigen::Index> active_rows(const BoolMatrix* mask, Eigen::Index j,
                                      Eigen::Index d) {
  std::vector<Eigen::Index> rows;
  rows.reserve(static_cast<size_t>(d));
  for (Eigen::Index k = 0; k < d; ++k)
    if (mask == nullptr || (*mask)(k, j)) rows.push_back(k);
  return rows;
}

ScoringResult scoring_step_impl(const ObjectiveCtx& ctx,
                                const ModelParams& params,
                                const VariationalParams& vp,
                                const FitOptions& opts,
                                const BoolMatrix* mask) {
  const CountDataset& data = ctx.data;
  const double n = static_cast<double>(data.n());
  const Eigen::Index d = data.d();
  const Eigen::Index p = data.p();
  const double lambda = ctx.lambda;
  const double eps = ctx.eps;

  ModelParams cur = params;
  double obj = penalized_objective(ctx, cur, vp);
  ScoringResult out{cur.B, 0, false, obj};

  for (int iter = 1; iter <= opts.max_scoring_iters; ++iter) {
    out.iterations = iter;
    Eigen::MatrixXd A;
    if (!detail::try_mean_matrix(data, cur, vp, &A)) break;

    Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(d, p);
    for (Eigen::Index j = 0; j < p; ++j) {
      const std::vector<Eigen::Index> rows = active_rows(mask, j, d);
      if (rows.empty()) continue;
      const Eigen::Index m = static_cast<Eigen::Index>(rows.size());
      Eigen::MatrixXd Xa(data.n(), m);
      for (Eigen::Index c = 0; c < m; ++c) Xa.col(c) = data.X.col(rows[c]);
      const Eigen::ArrayXd a = A.col(j).array();
      Eigen::MatrixXd H =
          Xa.transpose() * (Xa.array().colwise() * a).matrix() / n;
      Eigen::VectorXd s =
          Xa.transpose() * (data.Y.col(j) - A.col(j)) / n;
      if (lambda > 0.0) {
        for (Eigen::Index c = 0; c < m; ++c) {
          if (rows[c] == 0) continue;  // intercepts are not penalized
          const double b = cur.B(rows[c], j);
          H(c, c) += 0.5 * lambda / n * phi_d2(b, eps);
          s[c] -= 0.5 * lambda / n * phi_d1(b, eps);
        }
      }
      const Eigen::VectorXd dj = solve_spd_ridge(std::move(H), s);
      for (Eigen::Index c = 0; c < m; ++c) delta(rows[c], j) = dj[c];
    }

    double alpha = 1.0;
    bool accepted = false;
    for (int h = 0; h <= kMaxHalvings; ++h) {
      ModelParams trial = cur;
      trial.B = cur.B + alpha * delta;
      const double obj_trial = penalized_objective(ctx, trial, vp);
      if (accepts(obj_trial, obj)) {
        cur.B = std::move(trial.B);
        obj = obj_trial;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      out.B = cur.B;
      out.objective = obj;
      out.converged = false;
      return out;
    }
    const double step = (alpha * delta).cwiseAbs().maxCoeff();
    if (step < opts.tol_param) {
      out.converged = true;
      break;
    }
  }
  out.B = cur.B;
  out.objective = obj;
  return out;
}

// Diagonal-Newton ascent half-step on M with step halving; returns the new
// objective (state updated in place only on acceptance).
double vm_step_M(const ObjectiveCtx& ctx, FitState* state, double obj) {
  Eigen::MatrixXd A;
  if (!detail::try_mean_matrix(ctx.data, state->params, state->vp, &A))
    return obj;
  const Eigen::ArrayXd wdiag = state->params.Omega.diagonal().array();
  const Eigen::ArrayXXd denom = A.array().rowwise() + wdiag.transpose();
  const Eigen::MatrixXd resid =
      ctx.data.Y - A - state->vp.M * state->params.Omega;
  const Eigen::MatrixXd delta = (resid.array() / denom).matrix();
  double alpha = 1.0;
  for (int h = 0; h <= kMaxHalvings; ++h) {
    VariationalParams trial = state->vp;
    trial.M = state->vp.M + alpha * delta;
    const double obj_trial = penalized_objective(ctx, state->params, trial);
    if (accepts(obj_trial, obj)) {
      state->vp.M = std::move(trial.M);
      return obj_trial;
    }
    alpha *= 0.5;
  }
  return obj;
}

// Same for S, on the log scale u = log S (keeps S positive, concave in u).
double vm_step_S(const ObjectiveCtx& ctx, FitState* state, double obj) {
  Eigen::MatrixXd A;
  if (!detail::try_mean_matrix(ctx.data, state->params, state->vp, &A))
    return obj;
  const Eigen::ArrayXd wdiag = state->params.Omega.diagonal().array();
  const Eigen::ArrayXXd S2 = state->vp.S.array().square();
  const Eigen::ArrayXXd grad_u =
      1.0 - S2 * (A.array().rowwise() + wdiag.transpose());
  const Eigen::ArrayXXd hess_u =
      S2 * A.array() * (S2 + 2.0) + 2.0 * (S2.rowwise() * wdiag.transpose());
  const Eigen::ArrayXXd delta = grad_u / hess_u;
  double alpha = 1.0;
  for (int h = 0; h <= kMaxHalvings; ++h) {
    VariationalParams trial = state->vp;
    trial.S = (state->vp.S.array() * (alpha * delta).exp()).matrix();
    const double obj_trial = penalized_objective(ctx, state->params, trial);
    if (accepts(obj_trial, obj)) {
      state->vp.S = std::move(trial.S);
      return obj_trial;
    }
    alpha *= 0.5;
  }
  return obj;
}

Eigen::MatrixXd zero_below(const Eigen::MatrixXd& B, double w) {
  return (B.array().abs() >= w).select(B.array(), 0.0).matrix();
}

}  // namespace

void FitOptions::validate() const {
  penalty.validate();
  if (max_vem_iters < 1 || max_scoring_iters < 1)
    throw domain_error("FitOptions: iteration caps must be >= 1");
  if (!(tol_elbo > 0.0) || !(tol_param > 0.0))
    throw domain_error("FitOptions: tolerances must be > 0");
}

bool FitResult::all_converged() const {
  for (const StageTrace& st : stages)
    if (!st.converged) return false;
  return true;
}

std::vector<double> FitResult::elbo_trace() const {
  std::vector<double> out;
  for (const StageTrace& st : stages)
    out.insert(out.end(), st.objective.begin(), st.objective.end());
  return out;
}

Eigen::MatrixXd penalized_information(const CountDataset& data,
                                      const ModelParams& params,
                                      const VariationalParams& vp,
                                      double lambda, double eps) {
  if (!(lambda >= 0.0))
    throw domain_error("penalized_information: lambda must be >= 0");
  const Eigen::MatrixXd A = mean_matrix(data, params, vp);
  const double n = static_cast<double>(data.n());
  const Eigen::Index d = data.d();
  const Eigen::Index p = data.p();
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(d * p, d * p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const Eigen::ArrayXd a = A.col(j).array();
    Eigen::MatrixXd block =
        data.X.transpose() * (data.X.array().colwise() * a).matrix() / n;
    if (lambda > 0.0)
      for (Eigen::Index k = 1; k < d; ++k)
        block(k, k) += 0.5 * lambda / n * phi_d2(params.B(k, j), eps);
    info.block(j * d, j * d, d, d) = block;
  }
  return info;
}

Eigen::VectorXd penalized_score(const CountDataset& data,
                                const ModelParams& params,
                                const VariationalParams& vp, double lambda,
                                double eps) {
  if (!(lambda >= 0.0))
    throw domain_error("penalized_score: lambda must be >= 0");
  const Eigen::MatrixXd A = mean_matrix(data, params, vp);
  const double n = static_cast<double>(data.n());
  const Eigen::Index d = data.d();
  const Eigen::Index p = data.p();
  Eigen::MatrixXd G = data.X.transpose() * (data.Y - A) / n;
  if (lambda > 0.0)
    for (Eigen::Index j = 0; j < p; ++j)
      for (Eigen::Index k = 1; k < d; ++k)
        G(k, j) -= 0.5 * lambda / n * phi_d1(params.B(k, j), eps);
  return Eigen::Map<const Eigen::VectorXd>(G.data(), d * p);
}

ScoringResult scoring_step(const CountDataset& data, const ModelParams& params,
                           const VariationalParams& vp, double lambda,
                           double eps, const FitOptions& opts,
                           const BoolMatrix* mask) {
  data.validate();
  vp.validate(data);
  opts.validate();
  if (!(lambda >= 0.0) || !(eps > 0.0))
    throw domain_error("scoring_step: need lambda >= 0 and eps > 0");
  ObjectiveCtx ctx{data, lambda, eps, detail::log_factorial_sum(data.Y)};
  return scoring_step_impl(ctx, params, vp, opts, mask);
}

VemResult vem(const CountDataset& data, FitState state, double lambda,
              double eps, const FitOptions& opts, const BoolMatrix* mask) {
  if (!(lambda >= 0.0) || !(eps > 0.0))
    throw domain_error("vem: need lambda >= 0 and eps > 0");
  ObjectiveCtx ctx{data, lambda, eps, detail::log_factorial_sum(data.Y)};
  double obj = penalized_objective(ctx, state.params, state.vp);
  StageTrace trace;
  trace.eps = eps;
  trace.objective.push_back(obj);
  for (int iter = 0; iter < opts.max_vem_iters; ++iter) {
    ScoringResult sr = scoring_step_impl(ctx, state.params, state.vp, opts, mask);
    state.params.B = std::move(sr.B);
    obj = sr.objective;

    // Exact Sigma maximizer, kept only when it does not lower the objective
    // (the jittered update can in degenerate cases).
    Eigen::MatrixXd Sigma_new = update_sigma(data, state.vp);
    ModelParams trial = ModelParams::make(state.params.B, std::move(Sigma_new));
    const double obj_trial = penalized_objective(ctx, trial, state.vp);
    if (accepts(obj_trial, obj)) {
      state.params = std::move(trial);
      obj = obj_trial;
    }

    for (int sweep = 0; sweep < kVmSweeps; ++sweep) {
      obj = vm_step_M(ctx, &state, obj);
      obj = vm_step_S(ctx, &state, obj);
    }

    trace.objective.push_back(obj);
    const double prev = trace.objective[trace.objective.size() - 2];
    if (std::fabs(obj - prev) <= opts.tol_elbo * (1.0 + std::fabs(obj))) {
      trace.converged = true;
      break;
    }
  }
  return {std::move(state), std::move(trace)};
}

FitResult sicpln_fit(const CountDataset& data, const FitOptions& opts) {
  data.validate();
  opts.validate();
  const double lambda = opts.lambda_auto
                            ? std::log(static_cast<double>(data.n()))
                            : opts.penalty.lambda;

  // lambda = 0: the objective no longer depends on eps, so one stage suffices
  // and no zeroing happens (an unpenalized fit has no exact zeros).
  std::vector<double> schedule = lambda > 0.0
                                     ? eps_schedule(opts.penalty)
                                     : std::vector<double>{opts.penalty.eps_start};

  // Deterministic warm start: per-species least squares of log(1+Y) - O.
  const Eigen::Index n = data.n();
  const Eigen::Index p = data.p();
  const Eigen::MatrixXd R = (1.0 + data.Y.array()).log().matrix() - data.O;
  const Eigen::MatrixXd B0 = data.X.householderQr().solve(R);
  VariationalParams vp0{R - data.X * B0,
                        Eigen::MatrixXd::Constant(n, p, 0.1)};
  FitState state{ModelParams::make(B0, update_sigma(data, vp0)),
                 std::move(vp0)};

  FitResult result;
  result.lambda = lambda;
  for (double eps : schedule) {
    VemResult vr = vem(data, std::move(state), lambda, eps, opts);
    state = std::move(vr.state);
    result.stages.push_back(std::move(vr.trace));
    if (opts.record_path) result.path.emplace_back(eps, state.params.B);
  }

  if (lambda > 0.0) {
    // Post-treatment: exact zeros below w, then a refit with the zero
    // pattern frozen to remove thresholding bias from Sigma, M, S.
    const double w = opts.penalty.zero_threshold;
    const BoolMatrix mask = state.params.B.array().abs() >= w;
    state.params.B = zero_below(state.params.B, w);
    const double eps_final = schedule.back();
    VemResult vr = vem(data, std::move(state), lambda, eps_final, opts, &mask);
    state = std::move(vr.state);
    vr.trace.refit = true;
    result.stages.push_back(std::move(vr.trace));
    if (opts.record_path) result.path.emplace_back(eps_final, state.params.B);
  }

  result.active_set = state.params.B.array() != 0.0;
  result.objective = result.stages.back().objective.back();
  result.params = std::move(state.params);
  result.vp = std::move(state.vp);
  return result;
}

Eigen::VectorXd sic_least_squares(const Eigen::MatrixXd& X,
                                  const Eigen::VectorXd& y, double lambda,
                                  const PenaltyConfig& schedule) {
  if (X.rows() != y.size())
    throw domain_error("sic_least_squares: X rows must match y length");
  if (!(lambda >= 0.0))
    throw domain_error("sic_least_squares: lambda must be >= 0");
  schedule.validate();
  const double n = static_cast<double>(X.rows());
  const Eigen::Index d = X.cols();
  const Eigen::MatrixXd XtX2 = 2.0 * X.transpose() * X / n;

  Eigen::VectorXd b = X.householderQr().solve(y);
  const auto objective = [&](const Eigen::VectorXd& v, double eps) {
    return (y - X * v).squaredNorm() / n + lambda / n * sic_norm(v, eps);
  };

  for (double eps : eps_schedule(schedule)) {
    double obj = objective(b, eps);
    for (int iter = 0; iter < 100; ++iter) {
      Eigen::VectorXd grad = -2.0 * X.transpose() * (y - X * b) / n;
      Eigen::MatrixXd H = XtX2;
      for (Eigen::Index k = 0; k < d; ++k) {
        grad[k] += lambda / n * phi_d1(b[k], eps);
        H(k, k) += lambda / n * phi_d2(b[k], eps);
      }
      const Eigen::VectorXd delta = solve_spd_ridge(std::move(H), -grad);
      double alpha = 1.0;
      bool accepted = false;
      for (int h = 0; h <= kMaxHalvings; ++h) {
        const Eigen::VectorXd trial = b + alpha * delta;
        const double obj_trial = objective(trial, eps);
        if (std::isfinite(obj_trial) && obj_trial <= obj) {
          b = trial;
          obj = obj_trial;
          accepted = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!accepted || (alpha * delta).cwiseAbs().maxCoeff() < 1e-12) break;
    }
  }
  return b;
}

}  // namespace sicpln
