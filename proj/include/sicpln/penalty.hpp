#pragma once

#include <Eigen/Core>
#include <optional>
#include <utility>
#include <vector>

#include "sicpln/errors.hpp"

namespace sicpln {

// Penalty weight and epsilon-telescoping schedule. The schedule is
// eps_t = eps_start * eps_ratio^(t-1), t = 1..eps_steps, strictly decreasing.
// zero_threshold is the post-treatment cutoff w: |B| < w is set to exact 0.
struct PenaltyConfig {
  double lambda = 0.0;
  double eps_start = 1.0;
  double eps_ratio = 0.78969744;  // (1e-5)^(1/49): 50 steps from 1 to 1e-5
  int eps_steps = 50;
  double zero_threshold = 1e-5;

  void validate() const;
};

// Smooth-L0 prior parameters. The exponent scale is lambda / (2*sigma2).
struct PriorSpec {
  double lambda = 1.0;
  double eps = 1.0;
  double sigma2 = 1.0;

  void validate() const;
};

// phi_eps(x) = x^2 / (x^2 + eps^2), the smooth L0 kernel. Even, in [0,1),
// increasing in |x|. All three functions throw domain_error for eps <= 0.
double phi(double x, double eps);

// d/dx phi = 2*x*eps^2 / (x^2 + eps^2)^2, odd.
double phi_d1(double x, double eps);

// d2/dx2 phi = 2*eps^2*(eps^2 - 3*x^2) / (x^2 + eps^2)^3.
// Equals 2/eps^2 at 0, vanishes at |x| = eps/sqrt(3), negative beyond.
double phi_d2(double x, double eps);

// Approximate L0 norm: sum of phi over entries. Bounded by the vector length
// and converges to the nonzero count as eps -> 0.
double sic_norm(const Eigen::VectorXd& v, double eps);

// Telescoping schedule {eps_start * eps_ratio^t, t = 0..eps_steps-1}.
std::vector<double> eps_schedule(const PenaltyConfig& config);

// Global minimizer of (s - theta)^2 + lambda * phi(theta, eps).
// Enumerates the stationary roots (bracketed bisection on the derivative,
// which may have several sign changes for small eps) plus the candidates
// theta = 0 and theta = s, then picks the best objective; exact ties go to
// the smallest |theta|.
double threshold_sic(double s, double lambda, double eps);

// Minimizer of (s - theta)^2 + lambda * |theta|: soft threshold at lambda/2.
double threshold_lasso(double s, double lambda);

// Minimizer of (s - theta)^2 + 2 * scad_{lambda/2, a}(theta): the standard
// SCAD rule with effective parameter lambda/2, consistent with the lasso
// convention above (identical soft regime). Requires a > 2.
double threshold_scad(double s, double lambda, double a = 3.0);

// For the level set phi(x) + phi(y) = k: returns (+y, -y) with
// y = eps * sqrt((k - phi(x)) / (1 - k + phi(x))), or nothing when
// phi(x) > k (x outside the ball) or the denominator is <= 0 (the contour
// is unbounded in y at this x, which happens for k >= 1).
std::optional<std::pair<double, double>> ball_contour(double k, double eps,
                                                      double x);

// Unnormalized smooth-L0 prior density exp{-l * phi_eps(beta)},
// l = lambda/(2*sigma2). Equals 1 at 0 and tends to exp(-l) in the tails.
double prior_density(double beta, const PriorSpec& spec);

// Proper component of the flat + spike decomposition:
// tilde(beta) = c * (exp{l * eps^2/(beta^2+eps^2)} - 1), a probability
// density by construction of c. The 2-arg overload recomputes the
// normalizing constant; pass a cached norm_const in loops.
double prior_tilde(double beta, const PriorSpec& spec);
double prior_tilde(double beta, const PriorSpec& spec, double norm_const);

// Normalizing constant c(lambda, eps) = 1 / integral of
// (exp{l * eps^2/(beta^2+eps^2)} - 1) d beta over the real line.
// Adaptive Gauss-Kronrod quadrature with absolute tolerance 1e-9, on a
// geometric knot ladder at the eps spike scale followed by a tan-transformed
// tail piece. Throws numeric_error if the quadrature does not converge.
double prior_norm_const(const PriorSpec& spec);

// Pointwise identity relating the pieces:
// prior_density(beta) = exp(-l) * (1 + prior_tilde(beta)/c).

}  // namespace sicpln
