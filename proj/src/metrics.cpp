#include "sicpln/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <utility>

namespace sicpln {

namespace {

void check_same_shape(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                      const char* who) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    std::ostringstream msg;
    msg << who << ": shape mismatch " << a.rows() << "x" << a.cols() << " vs "
        << b.rows() << "x" << b.cols();
    throw domain_error(msg.str());
  }
}

}  // namespace

double estimation_error(const Eigen::MatrixXd& B_true,
                        const Eigen::MatrixXd& B_hat) {
  check_same_shape(B_true, B_hat, "estimation_error");
  const double denom = B_true.norm();
  if (denom == 0.0)
    throw domain_error("estimation_error: ||B_true||_F must be positive");
  return (B_true - B_hat).norm() / denom;
}

double tnr(const Eigen::MatrixXd& B_true, const Eigen::MatrixXd& B_hat) {
  check_same_shape(B_true, B_hat, "tnr");
  long truth_zeros = 0;
  long matched = 0;
  for (Eigen::Index k = 1; k < B_true.rows(); ++k) {
    for (Eigen::Index j = 0; j < B_true.cols(); ++j) {
      if (B_true(k, j) != 0.0) continue;
      ++truth_zeros;
      if (B_hat(k, j) == 0.0) ++matched;
    }
  }
  if (truth_zeros == 0)
    throw domain_error("tnr: truth has no non-intercept zero coefficients");
  return static_cast<double>(matched) / static_cast<double>(truth_zeros);
}

double prediction_mse(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& Y_hat) {
  check_same_shape(Y, Y_hat, "prediction_mse");
  if (Y.size() == 0) throw domain_error("prediction_mse: empty matrices");
  return (Y - Y_hat).squaredNorm() / static_cast<double>(Y.size());
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw domain_error("quantile: empty sample");
  if (!(q >= 0.0 && q <= 1.0))
    throw domain_error("quantile: q must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<size_t>(std::floor(h));
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] + (h - static_cast<double>(lo)) * (values[lo + 1] - values[lo]);
}

namespace {

SummaryStats summarize(const std::vector<double>& v) {
  SummaryStats s;
  double acc = 0.0;
  for (double x : v) acc += x;
  s.mean = acc / static_cast<double>(v.size());
  s.q25 = quantile(v, 0.25);
  s.median = quantile(v, 0.5);
  s.q75 = quantile(v, 0.75);
  return s;
}

}  // namespace

std::vector<AggregateRow> aggregate(const std::vector<BenchRecord>& records) {
  if (records.empty()) throw domain_error("aggregate: no records");
  std::map<std::pair<std::string, std::string>, std::vector<const BenchRecord*>>
      groups;
  for (const BenchRecord& r : records)
    groups[{r.scenario, r.method}].push_back(&r);

  std::vector<AggregateRow> rows;
  rows.reserve(groups.size());
  for (const auto& [key, members] : groups) {
    AggregateRow row;
    row.scenario = key.first;
    row.method = key.second;
    row.replications = static_cast<int>(members.size());
    std::vector<double> est, tn, mse;
    est.reserve(members.size());
    tn.reserve(members.size());
    mse.reserve(members.size());
    for (const BenchRecord* r : members) {
      est.push_back(r->estimation_error);
      tn.push_back(r->tnr);
      mse.push_back(r->prediction_mse);
    }
    row.estimation_error = summarize(est);
    row.tnr = summarize(tn);
    row.prediction_mse = summarize(mse);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace sicpln
