#pragma once

// Shared test-side oracles: finite differences, Gauss-Hermite quadrature for
// exact one-species log-likelihoods, and small random model instances. These
// live in the test tree on purpose — the library must never depend on them.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "sicpln/model.hpp"
#include "sicpln/rng.hpp"

namespace testsupport {

inline double rel_err(double a, double b) {
  return std::fabs(a - b) / std::max({1.0, std::fabs(a), std::fabs(b)});
}

// Central difference with step scaled to the evaluation point.
inline double fdiff(const std::function<double(double)>& f, double x,
                    double h_scale = 1e-5) {
  const double h = h_scale * std::max(1.0, std::fabs(x));
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

// Second central difference (wider step: cancellation is worse).
inline double fdiff2(const std::function<double(double)>& f, double x,
                     double h_scale = 1e-4) {
  const double h = h_scale * std::max(1.0, std::fabs(x));
  return (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
}

// Gauss-Hermite nodes/weights for weight exp(-t^2) via the Golub-Welsch
// eigendecomposition of the Jacobi matrix (off-diagonals sqrt(k/2), weights
// sqrt(pi) * v0^2).
inline void gauss_hermite(int n, Eigen::VectorXd* nodes,
                          Eigen::VectorXd* weights) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double off = std::sqrt(k / 2.0);
    J(k - 1, k) = off;
    J(k, k - 1) = off;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  *nodes = es.eigenvalues();
  weights->resize(n);
  const double sqrt_pi = std::sqrt(M_PI);
  for (int k = 0; k < n; ++k) {
    const double v0 = es.eigenvectors()(0, k);
    (*weights)[k] = sqrt_pi * v0 * v0;
  }
}

// Exact log-likelihood (to quadrature accuracy) of a single-species dataset:
//   sum_i log Integral N(w; 0, sigma2) Poisson(y_i; exp(eta_i + w)) dw
// with eta = O + X b, via 61-node Gauss-Hermite and a log-sum-exp.
inline double loglik_single_species_gh(const sicpln::CountDataset& data,
                                       const Eigen::VectorXd& b, double sigma2,
                                       int n_nodes = 61) {
  Eigen::VectorXd t, w;
  gauss_hermite(n_nodes, &t, &w);
  const double sd = std::sqrt(sigma2);
  const double sqrt2 = std::sqrt(2.0);
  const Eigen::VectorXd eta = data.O.col(0) + data.X * b;
  double total = 0.0;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const double y = data.Y(i, 0);
    std::vector<double> terms(static_cast<size_t>(t.size()));
    double hi = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < t.size(); ++k) {
      const double z = eta[i] + sqrt2 * sd * t[k];
      const double logpois = y * z - std::exp(z) - std::lgamma(y + 1.0);
      const double term = std::log(w[k] / std::sqrt(M_PI)) + logpois;
      terms[static_cast<size_t>(k)] = term;
      hi = std::max(hi, term);
    }
    double acc = 0.0;
    for (double v : terms) acc += std::exp(v - hi);
    total += hi + std::log(acc);
  }
  return total;
}

struct SmallInstance {
  sicpln::CountDataset data;
  sicpln::ModelParams params;
  sicpln::VariationalParams vp;
};

// Random valid instance: X has an intercept plus U(-1,1) covariates, counts
// are Poisson with moderate rates (not required to follow the model), B/M
// uniform, S in [0.2, 1.2], Sigma a well-conditioned Gram matrix.
inline SmallInstance random_instance(sicpln::Rng& rng, Eigen::Index n,
                                     Eigen::Index p, Eigen::Index d) {
  Eigen::MatrixXd X(n, d);
  X.col(0).setOnes();
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = 1; k < d; ++k) X(i, k) = rng.uniform(-1.0, 1.0);
  Eigen::MatrixXd Y(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j)
      Y(i, j) = static_cast<double>(rng.poisson(rng.uniform(0.2, 5.0)));
  Eigen::MatrixXd O(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) O(i, j) = rng.uniform(-0.5, 0.5);

  Eigen::MatrixXd B(d, p);
  for (Eigen::Index k = 0; k < d; ++k)
    for (Eigen::Index j = 0; j < p; ++j) B(k, j) = rng.uniform(-1.0, 1.0);
  Eigen::MatrixXd G(p, p);
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = 0; j < p; ++j) G(i, j) = rng.uniform(-1.0, 1.0);
  Eigen::MatrixXd Sigma =
      G * G.transpose() + 0.5 * Eigen::MatrixXd::Identity(p, p);

  Eigen::MatrixXd M(n, p), S(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) {
      M(i, j) = rng.uniform(-1.0, 1.0);
      S(i, j) = rng.uniform(0.2, 1.2);
    }

  return SmallInstance{
      sicpln::CountDataset::make(std::move(Y), std::move(X), std::move(O)),
      sicpln::ModelParams::make(std::move(B), std::move(Sigma)),
      sicpln::VariationalParams{std::move(M), std::move(S)}};
}

}  // namespace testsupport
