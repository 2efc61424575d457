// Command-line front end: simulate | fit | predict | path | bench.
// Exit codes: 0 success, 1 usage error, 2 data/parse error, 3 numeric failure.

#include <cstdio>
#include <exception>
#include <stdexcept>

#include "CLI11.hpp"
#include "sicpln/io.hpp"

namespace {

using sicpln::io::RunConfig;

void add_output_options(CLI::App* sub, RunConfig* cfg) {
  sub->add_option("--out-dir", cfg->out_dir, "Output directory")
      ->capture_default_str();
  // Config files are only processed by the top-level parser, so --config is
  // defined there; letting unmatched options fall through makes
  // `sicpln <command> --config manifest.ini` reach it.
  sub->fallthrough();
}

void add_dataset_options(CLI::App* sub, RunConfig* cfg, bool with_counts) {
  if (with_counts)
    sub->add_option("--y", cfg->y_path, "Count matrix CSV (n x p)")
        ->required();
  sub->add_option("--x", cfg->x_path,
                  "Covariate matrix CSV (an intercept column is prepended "
                  "unless the first column is already constant 1)")
      ->required();
  sub->add_option("--o", cfg->o_path, "Offset matrix CSV (n x p, log scale)");
  sub->add_flag("--header", cfg->header, "CSV inputs carry a header row");
  sub->add_option("--offset-log-col", cfg->offset_log_col,
                  "0-based covariate column holding a natural-scale offset; "
                  "it is log-transformed into the offset and removed from "
                  "the design")
      ->capture_default_str();
}

void add_fit_options(CLI::App* sub, RunConfig* cfg) {
  sub->add_option("--lambda", cfg->lambda,
                  "Penalty strength; negative selects the automatic log(n)")
      ->capture_default_str();
  sub->add_option("--eps-start", cfg->eps_start,
                  "First smoothing width of the telescoping schedule")
      ->capture_default_str();
  sub->add_option("--eps-ratio", cfg->eps_ratio,
                  "Geometric decay of the smoothing width per stage")
      ->capture_default_str();
  sub->add_option("--eps-steps", cfg->eps_steps, "Number of stages")
      ->capture_default_str();
  sub->add_option("--zero-threshold", cfg->zero_threshold,
                  "Post-treatment cutoff: |B| below this becomes exactly 0")
      ->capture_default_str();
  sub->add_option("--max-vem-iters", cfg->max_vem_iters,
                  "Iteration cap per stage")
      ->capture_default_str();
  sub->add_option("--max-scoring-iters", cfg->max_scoring_iters,
                  "Scoring iteration cap per update")
      ->capture_default_str();
  sub->add_option("--tol-elbo", cfg->tol_elbo,
                  "Relative objective-change stopping tolerance")
      ->capture_default_str();
  sub->add_option("--tol-param", cfg->tol_param,
                  "Coefficient-step stopping tolerance")
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse covariate selection for multivariate count data"};
  app.set_version_flag("--version", sicpln::io::kVersion);
  app.require_subcommand(1);
  app.set_config("--config", "",
                 "Read options from a config file (e.g. a manifest.ini "
                 "written by a previous run; keys live in a [command] "
                 "section)");

  RunConfig cfg;

  CLI::App* sim = app.add_subcommand(
      "simulate", "Generate a synthetic dataset with known sparse truth");
  sim->add_option("--n", cfg.n, "Observations")->capture_default_str();
  sim->add_option("--p", cfg.p, "Species (count columns)")
      ->capture_default_str();
  sim->add_option("--d", cfg.d, "Non-intercept covariates")
      ->capture_default_str();
  sim->add_option("--cov", cfg.cov, "Covariance kind: full | diagonal")
      ->capture_default_str();
  sim->add_option("--seed", cfg.seed, "RNG seed")->capture_default_str();
  sim->add_option("--b-pattern", cfg.b_pattern_path,
                  "CSV of true coefficients ((d+1) x p, row 0 = intercepts); "
                  "defaults to the built-in sparse pattern");
  add_output_options(sim, &cfg);

  CLI::App* fit = app.add_subcommand(
      "fit", "Fit the penalized model and write coefficient/path files");
  add_dataset_options(fit, &cfg, /*with_counts=*/true);
  add_fit_options(fit, &cfg);
  add_output_options(fit, &cfg);

  CLI::App* pred = app.add_subcommand(
      "predict", "Predict counts from a fitted parameter directory");
  pred->add_option("--params-dir", cfg.params_dir,
                   "Directory holding B.csv, Sigma.csv (and M.csv, S.csv "
                   "for --in-sample)")
      ->required();
  add_dataset_options(pred, &cfg, /*with_counts=*/false);
  pred->add_flag("--in-sample", cfg.in_sample,
                 "Use the stored variational layer on the training design "
                 "instead of the marginal predictor");
  add_output_options(pred, &cfg);

  CLI::App* path = app.add_subcommand(
      "path", "Extract one species' coefficient trajectory from path.csv");
  path->add_option("--params-dir", cfg.params_dir,
                   "Fit output directory (reads <dir>/path.csv)");
  path->add_option("--path-file", cfg.path_file,
                   "Explicit path.csv location (overrides --params-dir)");
  path->add_option("--species", cfg.species, "0-based species column")
      ->required();
  add_output_options(path, &cfg);

  CLI::App* bench = app.add_subcommand(
      "bench", "Simulate-fit-score grids and aggregate the metrics");
  bench->add_option("--n-list", cfg.n_list, "Comma-separated sample sizes")
      ->capture_default_str();
  bench->add_option("--p-list", cfg.p_list, "Comma-separated species counts")
      ->capture_default_str();
  bench->add_option("--d", cfg.d, "Non-intercept covariates")
      ->capture_default_str();
  bench->add_option("--cov-list", cfg.cov_list,
                    "Comma-separated covariance kinds (full, diagonal)")
      ->capture_default_str();
  bench->add_option("--seed", cfg.seed,
                    "Base seed; replication r uses seed + r")
      ->capture_default_str();
  bench->add_option("--reps", cfg.reps, "Replications per scenario")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  bench->add_option("--methods", cfg.methods,
                    "Comma-separated methods to fit (sicpln, pln)")
      ->capture_default_str();
  bench->add_flag("--holdout", cfg.holdout,
                  "Score predictions on a fresh holdout replica instead of "
                  "in-sample");
  bench->add_option("--import-baseline", cfg.import_baseline,
                    "Long CSV (replication,row,col,value) of externally "
                    "fitted coefficients to score alongside; requires a "
                    "single-scenario grid");
  bench->add_option("--baseline-name", cfg.baseline_name,
                    "Method label for imported coefficients")
      ->capture_default_str();
  bench->add_option("--threads", cfg.threads,
                    "Worker threads (0 = hardware concurrency)")
      ->capture_default_str();
  add_fit_options(bench, &cfg);
  add_output_options(bench, &cfg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (sim->parsed()) sicpln::io::run_simulate(cfg);
    if (fit->parsed()) sicpln::io::run_fit(cfg);
    if (pred->parsed()) sicpln::io::run_predict(cfg);
    if (path->parsed()) sicpln::io::run_path(cfg);
    if (bench->parsed()) sicpln::io::run_bench(cfg);
  } catch (const sicpln::numeric_error& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 3;
  } catch (const sicpln::parse_error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
