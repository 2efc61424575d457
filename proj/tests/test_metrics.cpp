#include <cmath>
#include <vector>

#include "doctest.h"
#include "sicpln/metrics.hpp"
#include "sicpln/rng.hpp"
#include "support.hpp"

using namespace sicpln;
using testsupport::rel_err;

TEST_CASE("estimation_error closed cases") {
  Eigen::MatrixXd truth(2, 2);
  truth << 1.0, 0.0, 0.0, 1.0;
  CHECK(estimation_error(truth, truth) == 0.0);
  CHECK(estimation_error(truth, Eigen::MatrixXd::Zero(2, 2)) ==
        doctest::Approx(1.0).epsilon(1e-15));

  Eigen::MatrixXd hat(2, 2);
  hat << 1.0, 0.0, 0.0, 0.0;
  CHECK(estimation_error(truth, hat) ==
        doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));

  CHECK_THROWS_AS(estimation_error(truth, Eigen::MatrixXd::Zero(3, 2)),
                  domain_error);
  CHECK_THROWS_AS(
      estimation_error(Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Zero(2, 2)),
      domain_error);

  // loop oracle on a random pair
  Rng rng(51);
  Eigen::MatrixXd a(3, 4), b(3, 4);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) {
      a(i, j) = rng.uniform(-2.0, 2.0);
      b(i, j) = rng.uniform(-2.0, 2.0);
    }
  double num = 0.0, den = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) {
      num += (a(i, j) - b(i, j)) * (a(i, j) - b(i, j));
      den += a(i, j) * a(i, j);
    }
  CHECK(rel_err(estimation_error(a, b), std::sqrt(num / den)) < 1e-14);
}

TEST_CASE("tnr counts exact zeros off the intercept row") {
  // truth: intercept row plus two zero and two nonzero slope entries
  Eigen::MatrixXd truth(3, 2);
  truth << 1.0, 1.0,   // intercept row: ignored entirely
           0.0, 2.0,
           0.0, 1.0;
  Eigen::MatrixXd hat = truth;
  CHECK(tnr(truth, hat) == 1.0);

  hat(1, 0) = 0.3;  // one of two true zeros missed
  CHECK(tnr(truth, hat) == 0.5);
  hat(2, 0) = 1e-9;  // tiny but not exactly zero: still a miss
  CHECK(tnr(truth, hat) == 0.0);

  // intercept row zeros do not enter the denominator
  Eigen::MatrixXd t2(2, 2);
  t2 << 0.0, 0.0, 1.0, 1.0;  // all non-intercept entries nonzero
  CHECK_THROWS_AS(tnr(t2, t2), domain_error);
  CHECK_THROWS_AS(tnr(truth, Eigen::MatrixXd::Zero(2, 2)), domain_error);
}

TEST_CASE("prediction_mse") {
  Eigen::MatrixXd y(1, 2), yh(1, 2);
  y << 0.0, 2.0;
  yh << 1.0, 2.0;
  CHECK(prediction_mse(y, y) == 0.0);
  CHECK(prediction_mse(y, yh) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(prediction_mse(y, Eigen::MatrixXd::Zero(2, 2)), domain_error);

  Rng rng(52);
  Eigen::MatrixXd a(4, 3), b(4, 3);
  double acc = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) {
      a(i, j) = rng.uniform(0.0, 5.0);
      b(i, j) = rng.uniform(0.0, 5.0);
      acc += (a(i, j) - b(i, j)) * (a(i, j) - b(i, j));
    }
  CHECK(rel_err(prediction_mse(a, b), acc / 12.0) < 1e-14);
}

TEST_CASE("quantile follows the linear-interpolation rule") {
  CHECK(quantile({5.0}, 0.0) == 5.0);
  CHECK(quantile({5.0}, 1.0) == 5.0);
  CHECK(quantile({5.0}, 0.4) == 5.0);
  CHECK(quantile({1.0, 2.0, 3.0, 4.0}, 0.25) == doctest::Approx(1.75));
  CHECK(quantile({1.0, 2.0, 3.0, 4.0}, 0.0) == 1.0);
  CHECK(quantile({1.0, 2.0, 3.0, 4.0}, 1.0) == 4.0);
  // input need not be sorted
  CHECK(quantile({3.0, 1.0, 2.0}, 0.5) == 2.0);
  CHECK(quantile({3.0, 1.0, 2.0}, 0.25) == doctest::Approx(1.5));
  CHECK_THROWS_AS(quantile({}, 0.5), domain_error);
  CHECK_THROWS_AS(quantile({1.0}, -0.1), domain_error);
  CHECK_THROWS_AS(quantile({1.0}, 1.1), domain_error);
}

namespace {

BenchRecord rec(const std::string& sc, const std::string& m, int r, double e,
                double t, double p) {
  BenchRecord b;
  b.scenario = sc;
  b.method = m;
  b.replication = r;
  b.estimation_error = e;
  b.tnr = t;
  b.prediction_mse = p;
  return b;
}

}  // namespace

TEST_CASE("aggregate groups, sorts, and summarizes") {
  // a single record reproduces itself in every summary slot
  const std::vector<BenchRecord> one{rec("s1", "m1", 0, 0.3, 0.9, 1.2)};
  const std::vector<AggregateRow> rows1 = aggregate(one);
  REQUIRE(rows1.size() == 1);
  CHECK(rows1[0].replications == 1);
  CHECK(rows1[0].estimation_error.mean == 0.3);
  CHECK(rows1[0].estimation_error.median == 0.3);
  CHECK(rows1[0].estimation_error.q25 == 0.3);
  CHECK(rows1[0].estimation_error.q75 == 0.3);
  CHECK(rows1[0].tnr.mean == 0.9);
  CHECK(rows1[0].prediction_mse.mean == 1.2);

  // two records {0, 1}: mean 1/2, quartiles by linear interpolation
  const std::vector<BenchRecord> pair{rec("s1", "m1", 0, 0.0, 0.0, 0.0),
                                      rec("s1", "m1", 1, 1.0, 1.0, 1.0)};
  const std::vector<AggregateRow> rows2 = aggregate(pair);
  REQUIRE(rows2.size() == 1);
  CHECK(rows2[0].replications == 2);
  CHECK(rows2[0].estimation_error.mean == 0.5);
  CHECK(rows2[0].estimation_error.median == 0.5);
  CHECK(rows2[0].estimation_error.q25 == 0.25);
  CHECK(rows2[0].estimation_error.q75 == 0.75);

  // interleaved groups come out lexicographically sorted and separated
  const std::vector<BenchRecord> mixed{
      rec("s2", "m1", 0, 1.0, 0.0, 0.0), rec("s1", "m2", 0, 2.0, 0.0, 0.0),
      rec("s1", "m1", 0, 3.0, 0.0, 0.0), rec("s2", "m1", 1, 5.0, 0.0, 0.0)};
  const std::vector<AggregateRow> rows3 = aggregate(mixed);
  REQUIRE(rows3.size() == 3);
  CHECK(rows3[0].scenario == "s1");
  CHECK(rows3[0].method == "m1");
  CHECK(rows3[1].scenario == "s1");
  CHECK(rows3[1].method == "m2");
  CHECK(rows3[2].scenario == "s2");
  CHECK(rows3[2].replications == 2);
  CHECK(rows3[2].estimation_error.mean == 3.0);

  // grouping matches aggregating each group separately
  const std::vector<AggregateRow> only_s2 =
      aggregate({mixed[0], mixed[3]});
  CHECK(only_s2[0].estimation_error.mean ==
        rows3[2].estimation_error.mean);
  CHECK(only_s2[0].estimation_error.median ==
        rows3[2].estimation_error.median);

  CHECK_THROWS_AS(aggregate({}), domain_error);
}
