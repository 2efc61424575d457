#include "sicpln/penalty.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "sicpln/quadrature.hpp"

namespace sicpln {

namespace {

void require_eps(double eps) {
  if (!(eps > 0.0)) throw domain_error("penalty: eps must be > 0");
}

}  // namespace

void PenaltyConfig::validate() const {
  if (!(lambda >= 0.0)) throw domain_error("PenaltyConfig: lambda must be >= 0");
  if (!(eps_start > 0.0)) throw domain_error("PenaltyConfig: eps_start must be > 0");
  if (!(eps_ratio > 0.0 && eps_ratio < 1.0))
    throw domain_error("PenaltyConfig: eps_ratio must be in (0,1)");
  if (eps_steps < 1) throw domain_error("PenaltyConfig: eps_steps must be >= 1");
  if (!(zero_threshold > 0.0))
    throw domain_error("PenaltyConfig: zero_threshold must be > 0");
}

void PriorSpec::validate() const {
  if (!(lambda > 0.0) || !(eps > 0.0) || !(sigma2 > 0.0))
    throw domain_error("PriorSpec: lambda, eps, sigma2 must all be > 0");
}

double phi(double x, double eps) {
  require_eps(eps);
  const double x2 = x * x;
  return x2 / (x2 + eps * eps);
}

double phi_d1(double x, double eps) {
  require_eps(eps);
  const double e2 = eps * eps;
  const double den = x * x + e2;
  return 2.0 * x * e2 / (den * den);
}

double phi_d2(double x, double eps) {
  require_eps(eps);
  const double e2 = eps * eps;
  const double x2 = x * x;
  const double den = x2 + e2;
  return 2.0 * e2 * (e2 - 3.0 * x2) / (den * den * den);
}

double sic_norm(const Eigen::VectorXd& v, double eps) {
  require_eps(eps);
  const double e2 = eps * eps;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double x2 = v[i] * v[i];
    acc += x2 / (x2 + e2);
  }
  return acc;
}

std::vector<double> eps_schedule(const PenaltyConfig& config) {
  config.validate();
  std::vector<double> out(static_cast<size_t>(config.eps_steps));
  double eps = config.eps_start;
  for (int t = 0; t < config.eps_steps; ++t) {
    out[static_cast<size_t>(t)] = eps;
    eps *= config.eps_ratio;
  }
  return out;
}

namespace {

// Stationarity residual of the SIC thresholding objective (up to factor 2):
// g(theta) = (theta - s) + lambda * theta * eps^2 / (theta^2 + eps^2)^2.
double sic_stationarity(double theta, double s, double lambda, double eps) {
  const double e2 = eps * eps;
  const double den = theta * theta + e2;
  return (theta - s) + lambda * theta * e2 / (den * den);
}

double sic_objective(double theta, double s, double lambda, double eps) {
  const double r = s - theta;
  return r * r + lambda * phi(theta, eps);
}

double bisect_root(double lo, double hi, double glo, double s, double lambda,
                   double eps) {
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    const double gm = sic_stationarity(mid, s, lambda, eps);
    if ((gm < 0.0) == (glo < 0.0)) {
      lo = mid;
      glo = gm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

double threshold_sic(double s, double lambda, double eps) {
  require_eps(eps);
  if (!(lambda >= 0.0)) throw domain_error("threshold_sic: lambda must be >= 0");
  if (s == 0.0) return 0.0;
  const double sign = s < 0.0 ? -1.0 : 1.0;
  const double sa = std::fabs(s);

  // The global minimizer lies in [0, sa]: the objective is larger at -t than
  // at t for t > 0, increases beyond sa, and phi is even. Stationary roots
  // can sit at very different scales (down to ~ s*eps^2/lambda), so the scan
  // grid combines a geometric ladder with a uniform refinement.
  std::vector<double> knots;
  knots.push_back(0.0);
  for (double t = std::min(eps, sa) * 1e-12; t < sa; t *= 1.6)
    knots.push_back(t);
  const int uniform_points = 2048;
  for (int i = 1; i <= uniform_points; ++i)
    knots.push_back(sa * static_cast<double>(i) / uniform_points);
  std::sort(knots.begin(), knots.end());

  std::vector<double> candidates = {0.0, sa};
  double gprev = sic_stationarity(knots[0], sa, lambda, eps);
  for (size_t i = 1; i < knots.size(); ++i) {
    const double gcur = sic_stationarity(knots[i], sa, lambda, eps);
    if (gprev == 0.0) candidates.push_back(knots[i - 1]);
    if ((gprev < 0.0) != (gcur < 0.0))
      candidates.push_back(
          bisect_root(knots[i - 1], knots[i], gprev, sa, lambda, eps));
    gprev = gcur;
  }

  double best_theta = 0.0;
  double best_obj = std::numeric_limits<double>::infinity();
  const double tie_tol = 1e-12 * std::max({1.0, sa * sa, lambda});
  for (double theta : candidates) {
    const double obj = sic_objective(theta, sa, lambda, eps);
    if (obj < best_obj - tie_tol ||
        (obj <= best_obj + tie_tol && std::fabs(theta) < std::fabs(best_theta))) {
      if (obj < best_obj) best_obj = obj;
      best_theta = theta;
    }
  }
  return sign * best_theta;
}

double threshold_lasso(double s, double lambda) {
  if (!(lambda >= 0.0)) throw domain_error("threshold_lasso: lambda must be >= 0");
  const double cut = 0.5 * lambda;
  const double sa = std::fabs(s);
  if (sa <= cut) return 0.0;
  return (s < 0.0 ? -1.0 : 1.0) * (sa - cut);
}

double threshold_scad(double s, double lambda, double a) {
  if (!(lambda >= 0.0)) throw domain_error("threshold_scad: lambda must be >= 0");
  if (!(a > 2.0)) throw domain_error("threshold_scad: a must be > 2");
  const double le = 0.5 * lambda;  // effective parameter, see header
  const double sa = std::fabs(s);
  const double sign = s < 0.0 ? -1.0 : 1.0;
  if (sa <= 2.0 * le) return sign * std::max(sa - le, 0.0);
  if (sa <= a * le) return sign * ((a - 1.0) * sa - a * le) / (a - 2.0);
  return s;
}

std::optional<std::pair<double, double>> ball_contour(double k, double eps,
                                                      double x) {
  require_eps(eps);
  if (!(k > 0.0)) throw domain_error("ball_contour: k must be > 0");
  const double px = phi(x, eps);
  const double num = k - px;
  const double den = 1.0 - k + px;
  if (num < 0.0 || den <= 0.0) return std::nullopt;
  const double y = eps * std::sqrt(num / den);
  return std::make_pair(y, -y);
}

namespace {

double prior_scale(const PriorSpec& spec) {
  spec.validate();
  const double l = spec.lambda / (2.0 * spec.sigma2);
  if (l > 700.0)
    throw numeric_error(
        "prior: lambda/(2*sigma2) > 700 overflows exp; rescale the spec");
  return l;
}

}  // namespace

double prior_density(double beta, const PriorSpec& spec) {
  const double l = prior_scale(spec);
  return std::exp(-l * phi(beta, spec.eps));
}

double prior_tilde(double beta, const PriorSpec& spec, double norm_const) {
  const double l = prior_scale(spec);
  const double e2 = spec.eps * spec.eps;
  return norm_const * std::expm1(l * e2 / (beta * beta + e2));
}

double prior_tilde(double beta, const PriorSpec& spec) {
  return prior_tilde(beta, spec, prior_norm_const(spec));
}

double prior_norm_const(const PriorSpec& spec) {
  const double l = prior_scale(spec);
  const double eps = spec.eps;
  const double e2 = eps * eps;

  // The raw integrand exp{l*eps^2/(b^2+e2)} - 1 peaks at expm1(l), which is
  // ~1e43 already at l = 100; round-off in the panel sums then dwarfs any
  // absolute tolerance and the adaptive rule subdivides forever. Integrate
  // the exp(-l)-scaled shape instead, whose values lie in (0, 1]:
  //   exp(-l) * (exp{l*eps^2/(b^2+e2)} - 1),  with  1/c = exp(l) * integral.
  // After beta = tan(u) the integrand gains a sec^2(u) factor and stays
  // smooth and bounded (tends to exp(-l)*l*eps^2 at u = +-pi/2).
  const double el = std::exp(-l);
  const auto integrand = [l, e2, el](double u) {
    const double t = std::tan(u);
    const double c = std::cos(u);
    return el * std::expm1(l * e2 / (t * t + e2)) / (c * c);
  };

  // Knot ladder in beta at the spike scale: 0, eps, 2*eps, ... up past the
  // O(1) range, then one tail piece to pi/2. Even integrand: integrate the
  // positive half and double.
  std::vector<double> knots_u;
  knots_u.push_back(0.0);
  const double beta_hi = std::max(100.0, 100.0 * eps);
  for (double b = eps; b < beta_hi; b *= 2.0) knots_u.push_back(std::atan(b));
  knots_u.push_back(std::atan(beta_hi));
  knots_u.push_back(0.5 * M_PI);

  // The scaled integral is ~eps*l for l << 1 and ~eps/sqrt(l) for l >> 1;
  // anchor the tolerance to that magnitude so the result carries ~1e-9
  // relative accuracy whether the mass is O(1) or O(1e-13).
  const double magnitude = eps * (l >= 1.0 ? 1.0 / std::sqrt(l) : l);
  const double total_tol = 1e-9 * magnitude;
  const double piece_tol =
      0.5 * total_tol / static_cast<double>(knots_u.size() - 1);
  double half = 0.0;
  for (size_t i = 0; i + 1 < knots_u.size(); ++i) {
    QuadResult r = integrate_gk(integrand, knots_u[i], knots_u[i + 1], piece_tol);
    if (!r.converged) {
      std::ostringstream msg;
      msg << "prior_norm_const: quadrature did not converge on piece ["
          << knots_u[i] << ", " << knots_u[i + 1] << "], error estimate "
          << r.abs_error << " after " << r.evaluations << " evaluations";
      throw numeric_error(msg.str());
    }
    half += r.value;
  }
  const double scaled_integral = 2.0 * half;
  if (!(scaled_integral > 0.0) || !std::isfinite(scaled_integral))
    throw numeric_error("prior_norm_const: integral not positive finite");
  const double norm_const = el / scaled_integral;  // = 1 / (exp(l) * integral)
  if (!(norm_const > 0.0) || !std::isfinite(norm_const))
    throw numeric_error("prior_norm_const: constant not positive finite");
  return norm_const;
}

}  // namespace sicpln
