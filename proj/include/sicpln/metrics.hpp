#pragma once

// Performance indicators for coefficient recovery and prediction, plus
// benchmark aggregation.

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sicpln/errors.hpp"

namespace sicpln {

// Relative Frobenius error ||B_true - B_hat||_F / ||B_true||_F.
// domain_error if shapes differ or ||B_true||_F = 0.
double estimation_error(const Eigen::MatrixXd& B_true,
                        const Eigen::MatrixXd& B_hat);

// True negative rate: among intercept-excluded (row > 0) positions where
// B_true is exactly 0, the fraction where B_hat is exactly 0. Exact-zero
// semantics: 1e-9 counts as nonzero. domain_error if shapes differ or the
// truth has no non-intercept zeros.
double tnr(const Eigen::MatrixXd& B_true, const Eigen::MatrixXd& B_hat);

// Mean of (Y - Y_hat)^2 over all entries. domain_error if shapes differ.
double prediction_mse(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& Y_hat);

// Linear-interpolation quantile (the common "type 7" rule) of a nonempty
// sample; q in [0,1]. Exposed for tests and aggregation.
double quantile(std::vector<double> values, double q);

struct BenchRecord {
  std::string scenario;  // e.g. "n1000_p10_full" (kept free of commas)
  std::string method;    // e.g. "sicpln", "pln", imported baseline name
  int replication = 0;
  double estimation_error = 0.0;
  double tnr = 0.0;
  double prediction_mse = 0.0;
  double wall_time = 0.0;  // seconds
};

struct SummaryStats {
  double mean = 0.0;
  double q25 = 0.0;
  double median = 0.0;
  double q75 = 0.0;
};

struct AggregateRow {
  std::string scenario;
  std::string method;
  int replications = 0;
  SummaryStats estimation_error;
  SummaryStats tnr;
  SummaryStats prediction_mse;
};

// Group records by (scenario, method), lexicographically sorted, and
// summarize each metric. domain_error on empty input.
std::vector<AggregateRow> aggregate(const std::vector<BenchRecord>& records);

}  // namespace sicpln
