#include "sicpln/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace sicpln {

namespace {

constexpr double kExpOverflow = 700.0;  // exp argument bound for double

void check_finite(const Eigen::MatrixXd& m, const char* name) {
  if (!m.allFinite()) {
    std::ostringstream msg;
    msg << name << ": non-finite entry";
    throw domain_error(msg.str());
  }
}

}  // namespace

void CountDataset::validate() const {
  if (Y.rows() < 1 || Y.cols() < 1)
    throw domain_error("CountDataset: Y must be nonempty");
  if (X.rows() != Y.rows() || O.rows() != Y.rows())
    throw domain_error("CountDataset: row counts of Y, X, O must match");
  if (O.cols() != Y.cols())
    throw domain_error("CountDataset: O must have the same shape as Y");
  if (X.cols() < 1) throw domain_error("CountDataset: X needs >= 1 column");
  check_finite(X, "CountDataset X");
  check_finite(O, "CountDataset O");
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    if (X(i, 0) != 1.0) {
      std::ostringstream msg;
      msg << "CountDataset: X(" << i << ",0) = " << X(i, 0)
          << "; first column must be the all-ones intercept";
      throw domain_error(msg.str());
    }
  }
  for (Eigen::Index i = 0; i < Y.rows(); ++i) {
    for (Eigen::Index j = 0; j < Y.cols(); ++j) {
      const double y = Y(i, j);
      if (!std::isfinite(y) || y < 0.0 || std::floor(y) != y) {
        std::ostringstream msg;
        msg << "CountDataset: Y(" << i << "," << j << ") = " << y
            << " is not a nonnegative integer";
        throw domain_error(msg.str());
      }
    }
  }
}

CountDataset CountDataset::make(Eigen::MatrixXd Y, Eigen::MatrixXd X) {
  Eigen::MatrixXd O = Eigen::MatrixXd::Zero(Y.rows(), Y.cols());
  return make(std::move(Y), std::move(X), std::move(O));
}

CountDataset CountDataset::make(Eigen::MatrixXd Y, Eigen::MatrixXd X,
                                Eigen::MatrixXd O) {
  CountDataset data{std::move(Y), std::move(X), std::move(O)};
  data.validate();
  return data;
}

ModelParams ModelParams::make(Eigen::MatrixXd B, Eigen::MatrixXd Sigma) {
  if (Sigma.rows() != Sigma.cols())
    throw domain_error("ModelParams: Sigma must be square");
  if (B.cols() != Sigma.rows())
    throw domain_error("ModelParams: B columns must match Sigma dimension");
  check_finite(B, "ModelParams B");
  check_finite(Sigma, "ModelParams Sigma");
  const double asym = (Sigma - Sigma.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10)
    throw domain_error("ModelParams: Sigma not symmetric within 1e-10");
  Eigen::LLT<Eigen::MatrixXd> llt(Sigma);
  if (llt.info() != Eigen::Success)
    throw domain_error("ModelParams: Sigma is not positive definite");
  ModelParams params;
  params.B = std::move(B);
  params.Sigma = std::move(Sigma);
  const Eigen::Index p = params.Sigma.rows();
  params.Omega = llt.solve(Eigen::MatrixXd::Identity(p, p));
  // Symmetrize against solve roundoff so Omega-based terms stay symmetric.
  params.Omega = 0.5 * (params.Omega + params.Omega.transpose()).eval();
  params.log_det_omega =
      -2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return params;
}

void VariationalParams::validate(const CountDataset& data) const {
  if (M.rows() != data.n() || M.cols() != data.p() || S.rows() != data.n() ||
      S.cols() != data.p())
    throw domain_error("VariationalParams: M, S must be n x p");
  check_finite(M, "VariationalParams M");
  if (!(S.array() > 0.0).all() || !S.allFinite())
    throw domain_error("VariationalParams: S entries must be positive");
}

namespace detail {

double log_factorial_sum(const Eigen::MatrixXd& Y) {
  double acc = 0.0;
  for (Eigen::Index j = 0; j < Y.cols(); ++j)
    for (Eigen::Index i = 0; i < Y.rows(); ++i)
      acc += std::lgamma(Y(i, j) + 1.0);
  return acc;
}

bool try_mean_matrix(const CountDataset& data, const ModelParams& params,
                     const VariationalParams& vp, Eigen::MatrixXd* A) {
  Eigen::MatrixXd E = data.O + data.X * params.B + vp.M;
  E.array() += 0.5 * vp.S.array().square();
  if (E.maxCoeff() > kExpOverflow) return false;
  *A = E.array().exp().matrix();
  return true;
}

double elbo_given(const CountDataset& data, const ModelParams& params,
                  const VariationalParams& vp, const Eigen::MatrixXd& A,
                  double log_yfact) {
  const double n = static_cast<double>(data.n());
  const double p = static_cast<double>(data.p());
  const Eigen::MatrixXd linpred = data.O + data.X * params.B + vp.M;
  const double lin = (data.Y.array() * linpred.array()).sum();
  const double logs = vp.S.array().log().sum();
  Eigen::MatrixXd Q = vp.M.transpose() * vp.M;
  Q.diagonal() += vp.S.array().square().colwise().sum().matrix().transpose();
  const double quad = (params.Omega.array() * Q.array()).sum();
  return lin - A.sum() + logs + 0.5 * n * params.log_det_omega - 0.5 * quad -
         log_yfact + 0.5 * n * p;
}

}  // namespace detail

Eigen::MatrixXd mean_matrix(const CountDataset& data, const ModelParams& params,
                            const VariationalParams& vp) {
  vp.validate(data);
  Eigen::MatrixXd E = data.O + data.X * params.B + vp.M;
  E.array() += 0.5 * vp.S.array().square();
  Eigen::Index imax = 0, jmax = 0;
  if (E.maxCoeff(&imax, &jmax) > kExpOverflow) {
    std::ostringstream msg;
    msg << "mean_matrix: exponent " << E(imax, jmax) << " at (" << imax << ","
        << jmax << ") overflows exp";
    throw numeric_error(msg.str());
  }
  return E.array().exp().matrix();
}

double elbo(const CountDataset& data, const ModelParams& params,
            const VariationalParams& vp) {
  const Eigen::MatrixXd A = mean_matrix(data, params, vp);
  return detail::elbo_given(data, params, vp, A,
                            detail::log_factorial_sum(data.Y));
}

Eigen::MatrixXd grad_M(const CountDataset& data, const ModelParams& params,
                       const VariationalParams& vp) {
  const Eigen::MatrixXd A = mean_matrix(data, params, vp);
  return data.Y - A - vp.M * params.Omega;
}

Eigen::MatrixXd grad_S(const CountDataset& data, const ModelParams& params,
                       const VariationalParams& vp) {
  const Eigen::MatrixXd A = mean_matrix(data, params, vp);
  Eigen::ArrayXXd g = vp.S.array().inverse() - vp.S.array() * A.array();
  g -= vp.S.array().rowwise() * params.Omega.diagonal().transpose().array();
  return g.matrix();
}

Eigen::MatrixXd grad_B(const CountDataset& data, const ModelParams& params,
                       const VariationalParams& vp) {
  const Eigen::MatrixXd A = mean_matrix(data, params, vp);
  return data.X.transpose() * (data.Y - A) / static_cast<double>(data.n());
}

Eigen::MatrixXd update_sigma(const CountDataset& data,
                             const VariationalParams& vp) {
  vp.validate(data);
  const double n = static_cast<double>(data.n());
  Eigen::MatrixXd Sigma = vp.M.transpose() * vp.M / n;
  Sigma.diagonal() +=
      (vp.S.array().square().colwise().sum() / n).matrix().transpose();
  Sigma = 0.5 * (Sigma + Sigma.transpose()).eval();
  // PSD by construction; jitter only if degenerate (e.g. S^2 -> 0 fits).
  double jitter = 1e-10 * std::max(Sigma.trace() / static_cast<double>(Sigma.rows()),
                                   std::numeric_limits<double>::min());
  for (int attempt = 0; attempt < 40; ++attempt) {
    Eigen::LLT<Eigen::MatrixXd> llt(Sigma);
    if (llt.info() == Eigen::Success) return Sigma;
    Sigma.diagonal().array() += jitter;
    jitter *= 10.0;
  }
  throw numeric_error("update_sigma: jitter escalation failed to reach SPD");
}

Eigen::MatrixXd predict_variational(const CountDataset& data,
                                    const ModelParams& params,
                                    const VariationalParams& vp) {
  return mean_matrix(data, params, vp);
}

Eigen::MatrixXd predict_marginal(const Eigen::MatrixXd& X_new,
                                 const Eigen::MatrixXd& O_new,
                                 const ModelParams& params) {
  if (X_new.cols() != params.B.rows())
    throw domain_error("predict_marginal: X columns must match B rows");
  if (O_new.rows() != X_new.rows() || O_new.cols() != params.B.cols())
    throw domain_error("predict_marginal: O_new must be n_new x p");
  for (Eigen::Index i = 0; i < X_new.rows(); ++i)
    if (X_new(i, 0) != 1.0)
      throw domain_error("predict_marginal: X_new first column must be ones");
  Eigen::MatrixXd E = O_new + X_new * params.B;
  E.rowwise() += (0.5 * params.Sigma.diagonal()).transpose();
  Eigen::Index imax = 0, jmax = 0;
  if (E.maxCoeff(&imax, &jmax) > kExpOverflow) {
    std::ostringstream msg;
    msg << "predict_marginal: exponent " << E(imax, jmax) << " at (" << imax
        << "," << jmax << ") overflows exp";
    throw numeric_error(msg.str());
  }
  return E.array().exp().matrix();
}

}  // namespace sicpln
