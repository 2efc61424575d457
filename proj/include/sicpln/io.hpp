#pragma once

// CSV ingestion/serialization, run configuration, and the five command
// runners behind the CLI (simulate / fit / predict / path / bench). The
// runners are plain functions over RunConfig so tests can drive them without
// spawning a process.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sicpln/errors.hpp"
#include "sicpln/fit.hpp"
#include "sicpln/metrics.hpp"
#include "sicpln/model.hpp"
#include "sicpln/simulate.hpp"

namespace sicpln::io {

inline constexpr const char* kVersion = "0.1.0";

// Comma-separated, '.' decimal, UTF-8, optional single header row. Cells are
// parsed as doubles; ragged rows, empty files, and non-numeric cells raise
// parse_error with 1-based row/column coordinates.
Eigen::MatrixXd read_csv_matrix(const std::string& path, bool header = false);

// Writes with enough digits (%.17g) that reading back is exact. Optional
// header row; LF line endings.
void write_csv_matrix(const std::string& path, const Eigen::MatrixXd& m,
                      const std::vector<std::string>& header = {});

// Builds a validated dataset from CSVs.
//   - An intercept column of ones is prepended to X unless its first column
//     is already constant 1.
//   - offset_log_col >= 0 names a 0-based column of the covariate CSV holding
//     a natural-scale offset (e.g. sampled surface); it is removed from X,
//     log-transformed, and replicated across species into O. Requires
//     strictly positive values. Mutually exclusive with o_path.
//   - Missing o_path means O = 0.
// Count cells must be nonnegative integers (parse_error otherwise, with
// coordinates); cross-file shape mismatches also raise parse_error.
CountDataset load_dataset(const std::string& y_path, const std::string& x_path,
                          const std::string& o_path = "", bool header = false,
                          int offset_log_col = -1);

// Effective settings for one command invocation. Defaults here are the CLI
// defaults; the manifest written next to every command's outputs records the
// effective values in config-file form, and re-running from that manifest
// reproduces the outputs byte-identically.
struct RunConfig {
  std::string command;  // simulate | fit | predict | path | bench

  // Dataset inputs.
  std::string y_path;
  std::string x_path;
  std::string o_path;
  bool header = false;
  int offset_log_col = -1;

  std::string out_dir = ".";

  // Penalty / fit controls. lambda < 0 means automatic log(n).
  double lambda = -1.0;
  double eps_start = 1.0;
  double eps_ratio = 0.78969744;
  int eps_steps = 50;
  double zero_threshold = 1e-5;
  int max_vem_iters = 500;
  int max_scoring_iters = 100;
  double tol_elbo = 1e-7;
  double tol_param = 1e-7;

  // Scenario (simulate) / grid (bench).
  int n = 100;
  int p = 4;
  int d = 6;
  std::string cov = "full";  // full | diagonal
  std::string b_pattern_path;
  std::uint64_t seed = 1;
  std::string n_list = "100";
  std::string p_list = "4";
  std::string cov_list = "full";
  int reps = 1;
  std::string methods = "sicpln,pln";
  bool holdout = false;
  std::string import_baseline;
  std::string baseline_name = "baseline";
  int threads = 0;  // 0 -> hardware concurrency

  // predict.
  std::string params_dir;
  bool in_sample = false;

  // path.
  std::string path_file;  // defaults to <params_dir>/path.csv
  int species = -1;

  // Fit options implied by the penalty/fit fields above.
  FitOptions fit_options() const;
};

// simulate: scenario -> Y.csv, X.csv, O.csv, B_true.csv, Sigma_true.csv.
void run_simulate(const RunConfig& cfg);

// fit: dataset -> B.csv, Sigma.csv, M.csv, S.csv, path.csv
// (step,eps,coef_row,coef_col,value) and diagnostics.json.
void run_fit(const RunConfig& cfg);

// predict: params_dir + new X/O -> Y_hat.csv (marginal); --in-sample uses the
// stored variational layer on the training design instead.
void run_predict(const RunConfig& cfg);

// path: filter path.csv to one species -> path_species_<j>.csv
// (step,eps,coef_row,value).
void run_path(const RunConfig& cfg);

// bench: grid over (n_list x p_list x cov_list) x reps x methods
// {sicpln, pln}, optional imported baseline coefficients; writes
// bench_records.csv and bench_aggregate.csv and returns the records.
// Replication r uses seed + r, so externally fitted baselines can align.
std::vector<BenchRecord> run_bench(const RunConfig& cfg);

// The flat key=value manifest for cfg's command, written by every runner as
// <out_dir>/manifest.ini; keys match the CLI long option names so
// `sicpln <command> --config manifest.ini` replays the run.
std::string manifest_text(const RunConfig& cfg);

}  // namespace sicpln::io
