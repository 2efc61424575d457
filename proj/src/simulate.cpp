#include "sicpln/simulate.hpp"

#include <cmath>
#include <sstream>

namespace sicpln {

namespace {

constexpr double kRateCap = 1e12;

enum StreamPurpose : std::uint64_t {
  kDesign = 1,
  kCovariance = 2,
  kLatent = 3,
  kCounts = 4,
};

Rng stream_for(const SimScenario& sc, std::uint64_t salt,
               StreamPurpose purpose) {
  return Rng(sc.seed).stream(4 * salt + purpose);
}

}  // namespace

void SimScenario::validate() const {
  if (n < 1 || p < 1 || d < 1)
    throw domain_error("SimScenario: n, p, d must be positive");
  if (b_pattern.size() != 0 &&
      (b_pattern.rows() != d + 1 || b_pattern.cols() != p)) {
    std::ostringstream msg;
    msg << "SimScenario: b_pattern must be (d+1) x p = " << (d + 1) << " x "
        << p << ", got " << b_pattern.rows() << " x " << b_pattern.cols();
    throw domain_error(msg.str());
  }
  if (b_pattern.size() != 0 && !b_pattern.allFinite())
    throw domain_error("SimScenario: b_pattern has non-finite entries");
}

Eigen::MatrixXd SimScenario::effective_b() const {
  validate();
  return b_pattern.size() != 0 ? b_pattern : default_b_pattern(d, p);
}

Eigen::MatrixXd default_b_pattern(Eigen::Index d, Eigen::Index p) {
  if (d < 1 || p < 1)
    throw domain_error("default_b_pattern: d and p must be positive");
  // Base layout: rows = covariates x1..x6, columns = four species.
  constexpr double kBase[6][4] = {
      {0.0, 0.5, 1.0, 1.0}, {1.0, 0.0, 0.5, 1.0}, {1.0, 0.0, 0.5, 0.0},
      {1.0, 1.0, 1.0, 0.0}, {1.0, 1.0, 1.0, 0.5}, {0.0, 0.0, 0.0, 0.0},
  };
  Eigen::MatrixXd B(d + 1, p);
  B.row(0).setOnes();
  for (Eigen::Index k = 1; k <= d; ++k)
    for (Eigen::Index j = 0; j < p; ++j)
      B(k, j) = kBase[(k - 1) % 6][j % 4];
  return B;
}

Eigen::MatrixXd gen_design(const SimScenario& scenario,
                           std::uint64_t stream_salt) {
  scenario.validate();
  Rng rng = stream_for(scenario, stream_salt, kDesign);
  Eigen::MatrixXd X(scenario.n, scenario.d + 1);
  X.col(0).setOnes();
  // Row-major fill order so the stream consumption is documented and stable.
  for (Eigen::Index i = 0; i < scenario.n; ++i)
    for (Eigen::Index k = 1; k <= scenario.d; ++k)
      X(i, k) = 0.5 + rng.uniform();
  return X;
}

Eigen::MatrixXd gen_covariance(const SimScenario& scenario,
                               std::uint64_t stream_salt) {
  scenario.validate();
  Rng rng = stream_for(scenario, stream_salt, kCovariance);
  const Eigen::Index p = scenario.p;
  if (scenario.covariance_kind == CovarianceKind::Diagonal) {
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(p, p);
    for (Eigen::Index j = 0; j < p; ++j)
      S(j, j) = std::max(1e-3, 5.0 * rng.uniform());
    return S;
  }
  for (int attempt = 0; attempt < 100; ++attempt) {
    Eigen::MatrixXd Psi(p, p);
    for (Eigen::Index i = 0; i < p; ++i)
      for (Eigen::Index j = 0; j < p; ++j)
        Psi(i, j) = -1.5 + 3.0 * rng.uniform();
    Eigen::MatrixXd S = Psi.transpose() * Psi;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S,
                                                      Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    if (lo > 1e-10 * std::max(1.0, hi)) return S;
  }
  throw numeric_error(
      "gen_covariance: 100 draws of Psi'Psi were near-singular");
}

namespace {

SimData gen_counts_impl(const SimScenario& scenario,
                        const Eigen::MatrixXd& B_true,
                        const Eigen::MatrixXd& Sigma_true,
                        std::uint64_t salt) {
  const Eigen::Index n = scenario.n;
  const Eigen::Index p = scenario.p;
  const Eigen::MatrixXd X = gen_design(scenario, salt);

  Eigen::LLT<Eigen::MatrixXd> llt(Sigma_true);
  if (llt.info() != Eigen::Success)
    throw domain_error("gen_counts: Sigma_true is not positive definite");
  const Eigen::MatrixXd L = llt.matrixL();

  Rng latent = stream_for(scenario, salt, kLatent);
  Eigen::MatrixXd Z = X * B_true;  // offsets are zero in simulations
  Eigen::VectorXd xi(p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) xi[j] = latent.normal();
    Z.row(i) += (L * xi).transpose();
  }

  Rng counts = stream_for(scenario, salt, kCounts);
  Eigen::MatrixXd Y(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) {
      const double rate = std::exp(Z(i, j));
      if (!(rate <= kRateCap)) {
        std::ostringstream msg;
        msg << "gen_counts: rate exp(Z(" << i << "," << j << ")) = " << rate
            << " exceeds " << kRateCap
            << "; use a smaller b_pattern or covariance";
        throw numeric_error(msg.str());
      }
      Y(i, j) = static_cast<double>(counts.poisson(rate));
    }
  }

  SimData out{CountDataset::make(std::move(Y), X), B_true, Sigma_true,
              std::move(Z)};
  return out;
}

}  // namespace

SimData gen_counts(const SimScenario& scenario, std::uint64_t stream_salt) {
  scenario.validate();
  return gen_counts_impl(scenario, scenario.effective_b(),
                         gen_covariance(scenario, stream_salt), stream_salt);
}

SimData gen_counts(const SimScenario& scenario, const Eigen::MatrixXd& B_true,
                   const Eigen::MatrixXd& Sigma_true,
                   std::uint64_t stream_salt) {
  scenario.validate();
  if (B_true.rows() != scenario.d + 1 || B_true.cols() != scenario.p)
    throw domain_error("gen_counts: B_true must be (d+1) x p");
  if (Sigma_true.rows() != scenario.p || Sigma_true.cols() != scenario.p)
    throw domain_error("gen_counts: Sigma_true must be p x p");
  return gen_counts_impl(scenario, B_true, Sigma_true, stream_salt);
}

}  // namespace sicpln
