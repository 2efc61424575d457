#pragma once

#include <Eigen/Dense>

#include "sicpln/errors.hpp"

namespace sicpln {

// Observed counts Y (n x p), covariates X (n x d, first column all ones),
// offsets O (n x p, log scale). Y is stored as double but validated to hold
// nonnegative integers.
struct CountDataset {
  Eigen::MatrixXd Y;
  Eigen::MatrixXd X;
  Eigen::MatrixXd O;

  Eigen::Index n() const { return Y.rows(); }
  Eigen::Index p() const { return Y.cols(); }
  Eigen::Index d() const { return X.cols(); }

  void validate() const;  // throws domain_error with coordinates

  static CountDataset make(Eigen::MatrixXd Y, Eigen::MatrixXd X);
  static CountDataset make(Eigen::MatrixXd Y, Eigen::MatrixXd X,
                           Eigen::MatrixXd O);
};

// Regression coefficients B (d x p, column j for species j) and latent
// covariance Sigma (p x p SPD) with cached precision Omega = Sigma^{-1} and
// log|Omega|. Build through make() so the cache is always consistent.
struct ModelParams {
  Eigen::MatrixXd B;
  Eigen::MatrixXd Sigma;
  Eigen::MatrixXd Omega;
  double log_det_omega = 0.0;

  static ModelParams make(Eigen::MatrixXd B, Eigen::MatrixXd Sigma);
};

// Variational Gaussian for the latent residual W_i = Z_i - (o_i + B^T x_i):
// q(W_i) = N(m_i, diag(s_i^2)). M holds means, S strictly positive standard
// deviations (optimized internally on the log scale). This residual
// parametrization is used consistently everywhere: the latent mean enters
// through O + XB and M is the deviation around it.
struct VariationalParams {
  Eigen::MatrixXd M;
  Eigen::MatrixXd S;

  void validate(const CountDataset& data) const;
};

// A with a_ij = exp(o_ij + x_i^T b_j + m_ij + s_ij^2 / 2), the variational
// posterior mean of exp(Z_ij). Throws numeric_error naming (i,j) if an
// exponent exceeds ~700 (double overflow).
Eigen::MatrixXd mean_matrix(const CountDataset& data, const ModelParams& params,
                            const VariationalParams& vp);

// Evidence lower bound
//   J = sum_ij [ y_ij (o_ij + x_i^T b_j + m_ij) - a_ij + log s_ij ]
//     + (n/2) log|Omega| - (1/2) trace(Omega [M^T M + diag(1^T S^2)])
//     - sum_ij log(y_ij!) + n p / 2.
// The additive constant makes J <= exact log-likelihood hold.
double elbo(const CountDataset& data, const ModelParams& params,
            const VariationalParams& vp);

// dJ/dM = Y - A - M Omega.
Eigen::MatrixXd grad_M(const CountDataset& data, const ModelParams& params,
                       const VariationalParams& vp);

// dJ/dS = 1/S - S .* A - S * diag(Omega) (diagonal broadcast across rows).
Eigen::MatrixXd grad_S(const CountDataset& data, const ModelParams& params,
                       const VariationalParams& vp);

// dJ/dB scaled by 1/n: X^T (Y - A) / n, the unpenalized score convention.
Eigen::MatrixXd grad_B(const CountDataset& data, const ModelParams& params,
                       const VariationalParams& vp);

// Exact maximizer of J over Sigma: (M^T M + diag(1^T S^2)) / n, jittered by
// 1e-10 * trace/p on the diagonal (escalating tenfold) if Cholesky fails.
Eigen::MatrixXd update_sigma(const CountDataset& data,
                             const VariationalParams& vp);

// Fitted-mean prediction using the variational layer: identically the
// mean_matrix output.
Eigen::MatrixXd predict_variational(const CountDataset& data,
                                    const ModelParams& params,
                                    const VariationalParams& vp);

// Marginal prediction for new rows: exp(O_new + X_new B + diag(Sigma)/2)
// with the log-normal mean correction broadcast per species.
Eigen::MatrixXd predict_marginal(const Eigen::MatrixXd& X_new,
                                 const Eigen::MatrixXd& O_new,
                                 const ModelParams& params);

namespace detail {

// sum_ij log(y_ij!) via lgamma; constant across a fit, cache it.
double log_factorial_sum(const Eigen::MatrixXd& Y);

// Non-throwing mean matrix: false if any exponent exceeds the overflow bound.
bool try_mean_matrix(const CountDataset& data, const ModelParams& params,
                     const VariationalParams& vp, Eigen::MatrixXd* A);

// ELBO given a precomputed A and cached log-factorial sum.
double elbo_given(const CountDataset& data, const ModelParams& params,
                  const VariationalParams& vp, const Eigen::MatrixXd& A,
                  double log_yfact);

}  // namespace detail

}  // namespace sicpln
