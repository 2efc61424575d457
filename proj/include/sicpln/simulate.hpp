#pragma once

// Seeded synthetic-data generation for the count model: a design matrix with
// an intercept column, a structured sparse coefficient matrix, a latent
// Gaussian layer, and Poisson counts.
//
// Determinism contract: every artifact is a pure function of (scenario,
// stream_salt). Randomness is drawn from per-purpose SplitMix64 streams
// derived from scenario.seed:
//   design     -> stream 4*salt + 1
//   covariance -> stream 4*salt + 2
//   latent     -> stream 4*salt + 3
//   counts     -> stream 4*salt + 4
// so gen_design / gen_covariance / gen_counts reproduce each other's pieces,
// and a nonzero salt yields an independent replica (e.g. a holdout set) that
// shares the ground truth.

#include <cstdint>

#include <Eigen/Dense>

#include "sicpln/errors.hpp"
#include "sicpln/model.hpp"
#include "sicpln/rng.hpp"

namespace sicpln {

enum class CovarianceKind { Full, Diagonal };

struct SimScenario {
  Eigen::Index n = 100;  // observations
  Eigen::Index p = 4;    // species (count columns)
  Eigen::Index d = 6;    // non-intercept covariates
  CovarianceKind covariance_kind = CovarianceKind::Full;
  // (d+1) x p coefficients including the intercept row (row 0). Empty ->
  // default_b_pattern(d, p).
  Eigen::MatrixXd b_pattern;
  std::uint64_t seed = 1;

  void validate() const;
  // b_pattern if set, otherwise the default pattern.
  Eigen::MatrixXd effective_b() const;
};

// The canonical four-species sparsity layout over six covariates, intercepts
// fixed at 1, tiled periodically across extra rows/columns when d > 6 or
// p > 4. Returns (d+1) x p.
Eigen::MatrixXd default_b_pattern(Eigen::Index d, Eigen::Index p);

// n x (d+1) design: column 0 all ones, remaining columns iid U[0.5, 1.5].
Eigen::MatrixXd gen_design(const SimScenario& scenario,
                           std::uint64_t stream_salt = 0);

// p x p SPD covariance. Full: Psi' Psi with Psi iid U[-1.5, 1.5], redrawn
// (up to 100 times, then numeric_error) while the smallest eigenvalue is
// below 1e-10 times the largest. Diagonal: diag(U[0, 5]) floored at 1e-3.
Eigen::MatrixXd gen_covariance(const SimScenario& scenario,
                               std::uint64_t stream_salt = 0);

struct SimData {
  CountDataset data;       // Y counts, X design (with intercept), O = 0
  Eigen::MatrixXd B_true;  // (d+1) x p
  Eigen::MatrixXd Sigma_true;
  Eigen::MatrixXd Z;  // n x p latent log-rates
};

// Full draw: design, covariance, latent layer Z_i ~ N((X B)_i, Sigma) via
// lower Cholesky, counts Y_ij ~ Poisson(exp(Z_ij)). Offsets are zero.
// Throws numeric_error if any rate exceeds 1e12 (advise a smaller b_pattern).
SimData gen_counts(const SimScenario& scenario, std::uint64_t stream_salt = 0);

// Replica draw sharing a fixed ground truth: fresh design / latent / count
// streams at the given salt, but B and Sigma taken as given. Used for
// holdout evaluation.
SimData gen_counts(const SimScenario& scenario, const Eigen::MatrixXd& B_true,
                   const Eigen::MatrixXd& Sigma_true,
                   std::uint64_t stream_salt);

}  // namespace sicpln
