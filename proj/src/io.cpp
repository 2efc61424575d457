#include "sicpln/io.hpp"

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>
#include <utility>

#include "json.hpp"

namespace fs = std::filesystem;

namespace sicpln::io {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& cell, double* out) {
  if (cell.empty()) return false;
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (end != cell.c_str() + cell.size() || errno == ERANGE) return false;
  if (!std::isfinite(v)) return false;
  *out = v;
  return true;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> cells;
  size_t start = 0;
  while (true) {
    const size_t pos = line.find(sep, start);
    if (pos == std::string::npos) {
      cells.push_back(trim(line.substr(start)));
      break;
    }
    cells.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return cells;
}

// Raw row-major CSV cells, one vector per data row. Used by both the matrix
// reader and the long-format baseline reader.
std::vector<std::vector<double>> read_csv_rows(const std::string& path,
                                               bool header) {
  std::ifstream in(path);
  if (!in) throw parse_error(path + ": cannot open for reading");
  std::vector<std::vector<double>> rows;
  std::string line;
  size_t lineno = 0;
  size_t width = 0;
  bool skipped_header = !header;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    if (!skipped_header) {
      skipped_header = true;
      continue;
    }
    const std::vector<std::string> cells = split(line, ',');
    if (width == 0) width = cells.size();
    if (cells.size() != width) {
      std::ostringstream msg;
      msg << path << ": row " << lineno << " has " << cells.size()
          << " cells, expected " << width;
      throw parse_error(msg.str());
    }
    std::vector<double> row(width);
    for (size_t c = 0; c < cells.size(); ++c) {
      if (!parse_double(cells[c], &row[c])) {
        std::ostringstream msg;
        msg << path << ": row " << lineno << ", column " << c + 1
            << ": cannot parse '" << cells[c] << "' as a number";
        throw parse_error(msg.str());
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw parse_error(path + ": no data rows");
  return rows;
}

Eigen::MatrixXd to_matrix(const std::vector<std::vector<double>>& rows) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(rows.front().size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      m(i, j) = rows[static_cast<size_t>(i)][static_cast<size_t>(j)];
  return m;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw parse_error(path + ": cannot open for writing");
  return out;
}

// Design + offset assembly shared by load_dataset and run_predict. p is the
// species count the offset column must be replicated across.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> load_design(
    const std::string& x_path, const std::string& o_path, bool header,
    int offset_log_col, Eigen::Index p) {
  if (x_path.empty()) throw domain_error("a covariate CSV (--x) is required");
  Eigen::MatrixXd X = read_csv_matrix(x_path, header);
  const Eigen::Index n = X.rows();

  Eigen::MatrixXd O = Eigen::MatrixXd::Zero(n, p);
  if (offset_log_col >= 0 && !o_path.empty())
    throw domain_error(
        "pass either an offset CSV or --offset-log-col, not both");
  if (offset_log_col >= 0) {
    if (offset_log_col >= X.cols()) {
      std::ostringstream msg;
      msg << "--offset-log-col " << offset_log_col << " out of range; "
          << x_path << " has " << X.cols() << " columns";
      throw domain_error(msg.str());
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      const double v = X(i, offset_log_col);
      if (!(v > 0.0)) {
        std::ostringstream msg;
        msg << x_path << ": offset column value at row " << i + 1
            << " must be > 0 to take its log, got " << v;
        throw domain_error(msg.str());
      }
      O.row(i).setConstant(std::log(v));
    }
    Eigen::MatrixXd Xr(n, X.cols() - 1);
    Eigen::Index c = 0;
    for (Eigen::Index j = 0; j < X.cols(); ++j)
      if (j != offset_log_col) Xr.col(c++) = X.col(j);
    X = std::move(Xr);
  } else if (!o_path.empty()) {
    O = read_csv_matrix(o_path, header);
    if (O.rows() != n || O.cols() != p) {
      std::ostringstream msg;
      msg << o_path << ": offset must be " << n << "x" << p << ", got "
          << O.rows() << "x" << O.cols();
      throw parse_error(msg.str());
    }
  }

  const bool has_intercept =
      X.cols() > 0 && (X.col(0).array() == 1.0).all();
  if (!has_intercept) {
    Eigen::MatrixXd Xi(n, X.cols() + 1);
    Xi.col(0).setOnes();
    if (X.cols() > 0) Xi.rightCols(X.cols()) = X;
    X = std::move(Xi);
  }
  return {std::move(X), std::move(O)};
}

CovarianceKind parse_cov(const std::string& s) {
  if (s == "full") return CovarianceKind::Full;
  if (s == "diagonal") return CovarianceKind::Diagonal;
  throw domain_error("covariance kind must be 'full' or 'diagonal', got '" +
                     s + "'");
}

std::vector<int> parse_int_list(const std::string& s, const char* what) {
  std::vector<int> out;
  for (const std::string& cell : split(s, ',')) {
    double v = 0.0;
    if (!parse_double(cell, &v) || v != std::floor(v) || v < 1) {
      std::ostringstream msg;
      msg << what << ": '" << cell << "' is not a positive integer";
      throw domain_error(msg.str());
    }
    out.push_back(static_cast<int>(v));
  }
  if (out.empty()) throw domain_error(std::string(what) + ": empty list");
  return out;
}

std::vector<std::string> parse_str_list(const std::string& s) {
  std::vector<std::string> out;
  for (const std::string& cell : split(s, ','))
    if (!cell.empty()) out.push_back(cell);
  return out;
}

void write_manifest(const RunConfig& cfg, const std::string& command) {
  RunConfig mc = cfg;
  mc.command = command;
  std::ofstream out = open_out((fs::path(cfg.out_dir) / "manifest.ini").string());
  out << manifest_text(mc);
}

void ensure_out_dir(const RunConfig& cfg) {
  if (cfg.out_dir.empty()) throw domain_error("--out-dir must not be empty");
  fs::create_directories(cfg.out_dir);
}

std::string out_path(const RunConfig& cfg, const char* name) {
  return (fs::path(cfg.out_dir) / name).string();
}

}  // namespace

Eigen::MatrixXd read_csv_matrix(const std::string& path, bool header) {
  return to_matrix(read_csv_rows(path, header));
}

void write_csv_matrix(const std::string& path, const Eigen::MatrixXd& m,
                      const std::vector<std::string>& header) {
  std::ofstream out = open_out(path);
  if (!header.empty()) {
    for (size_t c = 0; c < header.size(); ++c)
      out << (c ? "," : "") << header[c];
    out << '\n';
  }
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      out << (j ? "," : "") << fmt(m(i, j));
    out << '\n';
  }
}

CountDataset load_dataset(const std::string& y_path, const std::string& x_path,
                          const std::string& o_path, bool header,
                          int offset_log_col) {
  if (y_path.empty()) throw domain_error("a count CSV (--y) is required");
  Eigen::MatrixXd Y = read_csv_matrix(y_path, header);
  for (Eigen::Index i = 0; i < Y.rows(); ++i) {
    for (Eigen::Index j = 0; j < Y.cols(); ++j) {
      const double v = Y(i, j);
      if (v < 0.0 || v != std::floor(v)) {
        std::ostringstream msg;
        msg << y_path << ": row " << i + 1 << ", column " << j + 1
            << ": count must be a nonnegative integer, got " << fmt(v);
        throw parse_error(msg.str());
      }
    }
  }
  auto [X, O] = load_design(x_path, o_path, header, offset_log_col, Y.cols());
  if (X.rows() != Y.rows()) {
    std::ostringstream msg;
    msg << x_path << ": has " << X.rows() << " rows but " << y_path << " has "
        << Y.rows();
    throw parse_error(msg.str());
  }
  return CountDataset::make(std::move(Y), std::move(X), std::move(O));
}

FitOptions RunConfig::fit_options() const {
  FitOptions o;
  o.lambda_auto = lambda < 0.0;
  o.penalty.lambda = std::max(lambda, 0.0);
  o.penalty.eps_start = eps_start;
  o.penalty.eps_ratio = eps_ratio;
  o.penalty.eps_steps = eps_steps;
  o.penalty.zero_threshold = zero_threshold;
  o.max_vem_iters = max_vem_iters;
  o.max_scoring_iters = max_scoring_iters;
  o.tol_elbo = tol_elbo;
  o.tol_param = tol_param;
  o.record_path = true;
  o.validate();
  return o;
}

std::string manifest_text(const RunConfig& cfg) {
  std::ostringstream out;
  out << "# sicpln " << cfg.command << " manifest (version " << kVersion
      << ")\n";
  out << "# replay: sicpln " << cfg.command << " --config manifest.ini\n";
  // The config file is read by the top-level parser, so subcommand options
  // must live in a section named after the subcommand.
  out << '[' << cfg.command << "]\n";
  const auto kv = [&out](const char* key, const std::string& value) {
    if (!value.empty()) out << key << '=' << value << '\n';
  };
  const auto kvb = [&out](const char* key, bool value) {
    out << key << '=' << (value ? "true" : "false") << '\n';
  };
  const auto kvd = [&kv](const char* key, double value) { kv(key, fmt(value)); };
  const auto kvi = [&kv](const char* key, long long value) {
    kv(key, std::to_string(value));
  };

  const bool fit_block = cfg.command == "fit" || cfg.command == "bench";
  if (cfg.command == "simulate") {
    kvi("n", cfg.n);
    kvi("p", cfg.p);
    kvi("d", cfg.d);
    kv("cov", cfg.cov);
    kv("b-pattern", cfg.b_pattern_path);
    kvi("seed", static_cast<long long>(cfg.seed));
  }
  if (cfg.command == "fit") {
    kv("y", cfg.y_path);
    kv("x", cfg.x_path);
    kv("o", cfg.o_path);
    kvb("header", cfg.header);
    kvi("offset-log-col", cfg.offset_log_col);
  }
  if (fit_block) {
    kvd("lambda", cfg.lambda);
    kvd("eps-start", cfg.eps_start);
    kvd("eps-ratio", cfg.eps_ratio);
    kvi("eps-steps", cfg.eps_steps);
    kvd("zero-threshold", cfg.zero_threshold);
    kvi("max-vem-iters", cfg.max_vem_iters);
    kvi("max-scoring-iters", cfg.max_scoring_iters);
    kvd("tol-elbo", cfg.tol_elbo);
    kvd("tol-param", cfg.tol_param);
  }
  if (cfg.command == "predict") {
    kv("params-dir", cfg.params_dir);
    kv("x", cfg.x_path);
    kv("o", cfg.o_path);
    kvb("header", cfg.header);
    kvi("offset-log-col", cfg.offset_log_col);
    kvb("in-sample", cfg.in_sample);
  }
  if (cfg.command == "path") {
    kv("params-dir", cfg.params_dir);
    kv("path-file", cfg.path_file);
    kvi("species", cfg.species);
  }
  if (cfg.command == "bench") {
    kv("n-list", cfg.n_list);
    kv("p-list", cfg.p_list);
    kvi("d", cfg.d);
    kv("cov-list", cfg.cov_list);
    kvi("seed", static_cast<long long>(cfg.seed));
    kvi("reps", cfg.reps);
    kv("methods", cfg.methods);
    kvb("holdout", cfg.holdout);
    kv("import-baseline", cfg.import_baseline);
    kv("baseline-name", cfg.baseline_name);
    kvi("threads", cfg.threads);
  }
  kv("out-dir", cfg.out_dir);
  return out.str();
}

void run_simulate(const RunConfig& cfg) {
  SimScenario sc;
  sc.n = cfg.n;
  sc.p = cfg.p;
  sc.d = cfg.d;
  sc.covariance_kind = parse_cov(cfg.cov);
  sc.seed = cfg.seed;
  if (!cfg.b_pattern_path.empty())
    sc.b_pattern = read_csv_matrix(cfg.b_pattern_path, cfg.header);
  const SimData sd = gen_counts(sc);

  ensure_out_dir(cfg);
  write_csv_matrix(out_path(cfg, "Y.csv"), sd.data.Y);
  write_csv_matrix(out_path(cfg, "X.csv"), sd.data.X);
  write_csv_matrix(out_path(cfg, "O.csv"), sd.data.O);
  write_csv_matrix(out_path(cfg, "B_true.csv"), sd.B_true);
  write_csv_matrix(out_path(cfg, "Sigma_true.csv"), sd.Sigma_true);
  write_manifest(cfg, "simulate");
}

void run_fit(const RunConfig& cfg) {
  const CountDataset data = load_dataset(cfg.y_path, cfg.x_path, cfg.o_path,
                                         cfg.header, cfg.offset_log_col);
  const FitResult fr = sicpln_fit(data, cfg.fit_options());

  ensure_out_dir(cfg);
  write_csv_matrix(out_path(cfg, "B.csv"), fr.params.B);
  write_csv_matrix(out_path(cfg, "Sigma.csv"), fr.params.Sigma);
  write_csv_matrix(out_path(cfg, "M.csv"), fr.vp.M);
  write_csv_matrix(out_path(cfg, "S.csv"), fr.vp.S);

  {
    std::ofstream out = open_out(out_path(cfg, "path.csv"));
    out << "step,eps,coef_row,coef_col,value\n";
    for (size_t s = 0; s < fr.path.size(); ++s) {
      const auto& [eps, B] = fr.path[s];
      for (Eigen::Index k = 0; k < B.rows(); ++k)
        for (Eigen::Index j = 0; j < B.cols(); ++j)
          out << s << ',' << fmt(eps) << ',' << k << ',' << j << ','
              << fmt(B(k, j)) << '\n';
    }
  }

  nlohmann::ordered_json diag;
  diag["command"] = "fit";
  diag["version"] = kVersion;
  diag["n"] = data.n();
  diag["p"] = data.p();
  diag["d"] = data.d() - 1;  // non-intercept covariates, matching --d
  diag["lambda"] = fr.lambda;
  diag["objective"] = fr.objective;
  diag["all_converged"] = fr.all_converged();
  long active = 0;
  for (Eigen::Index k = 0; k < fr.active_set.rows(); ++k)
    for (Eigen::Index j = 0; j < fr.active_set.cols(); ++j)
      if (fr.active_set(k, j)) ++active;
  diag["active_coefficients"] = active;
  diag["total_coefficients"] = fr.active_set.size();
  nlohmann::ordered_json stages = nlohmann::ordered_json::array();
  for (const StageTrace& st : fr.stages) {
    nlohmann::ordered_json s;
    s["eps"] = st.eps;
    s["refit"] = st.refit;
    s["converged"] = st.converged;
    s["iterations"] = st.objective.size() - 1;
    s["objective_first"] = st.objective.front();
    s["objective_last"] = st.objective.back();
    stages.push_back(std::move(s));
  }
  diag["stages"] = std::move(stages);
  open_out(out_path(cfg, "diagnostics.json")) << diag.dump(2) << '\n';

  write_manifest(cfg, "fit");
}

void run_predict(const RunConfig& cfg) {
  if (cfg.params_dir.empty())
    throw domain_error("predict: --params-dir is required");
  const fs::path pd(cfg.params_dir);
  const Eigen::MatrixXd B = read_csv_matrix((pd / "B.csv").string());
  const Eigen::MatrixXd Sigma = read_csv_matrix((pd / "Sigma.csv").string());
  const ModelParams params = ModelParams::make(B, Sigma);
  const Eigen::Index p = B.cols();

  Eigen::MatrixXd Y_hat;
  if (cfg.in_sample) {
    const Eigen::MatrixXd M = read_csv_matrix((pd / "M.csv").string());
    const Eigen::MatrixXd S = read_csv_matrix((pd / "S.csv").string());
    auto [X, O] = load_design(cfg.x_path, cfg.o_path, cfg.header,
                              cfg.offset_log_col, p);
    Eigen::MatrixXd Y_zero = Eigen::MatrixXd::Zero(X.rows(), p);
    const CountDataset data =
        CountDataset::make(std::move(Y_zero), std::move(X), std::move(O));
    VariationalParams vp{M, S};
    vp.validate(data);
    Y_hat = predict_variational(data, params, vp);
  } else {
    auto [X, O] = load_design(cfg.x_path, cfg.o_path, cfg.header,
                              cfg.offset_log_col, p);
    Y_hat = predict_marginal(X, O, params);
  }

  ensure_out_dir(cfg);
  write_csv_matrix(out_path(cfg, "Y_hat.csv"), Y_hat);
  write_manifest(cfg, "predict");
}

void run_path(const RunConfig& cfg) {
  if (cfg.species < 0) throw domain_error("path: --species is required");
  std::string src = cfg.path_file;
  if (src.empty()) {
    if (cfg.params_dir.empty())
      throw domain_error("path: pass --path-file or --params-dir");
    src = (fs::path(cfg.params_dir) / "path.csv").string();
  }
  const Eigen::MatrixXd t = read_csv_matrix(src, /*header=*/true);
  if (t.cols() != 5)
    throw parse_error(src + ": expected 5 columns step,eps,coef_row,coef_col,value");

  ensure_out_dir(cfg);
  const std::string name = "path_species_" + std::to_string(cfg.species) + ".csv";
  std::ofstream out = open_out(out_path(cfg, name.c_str()));
  out << "step,eps,coef_row,value\n";
  long matched = 0;
  for (Eigen::Index r = 0; r < t.rows(); ++r) {
    if (static_cast<int>(t(r, 3)) != cfg.species) continue;
    ++matched;
    out << static_cast<long>(t(r, 0)) << ',' << fmt(t(r, 1)) << ','
        << static_cast<long>(t(r, 2)) << ',' << fmt(t(r, 4)) << '\n';
  }
  if (matched == 0) {
    std::ostringstream msg;
    msg << "path: species " << cfg.species << " not present in " << src;
    throw domain_error(msg.str());
  }
  write_manifest(cfg, "path");
}

namespace {

struct BenchScenario {
  int n;
  int p;
  CovarianceKind kind;
  std::string id;
};

// Per-replication baseline coefficient matrices from a long CSV
// (replication,row,col,value), row 0 = intercept; absent entries are 0.
std::map<int, Eigen::MatrixXd> read_baseline(const std::string& path,
                                             Eigen::Index rows,
                                             Eigen::Index cols) {
  std::ifstream probe(path);
  if (!probe) throw parse_error(path + ": cannot open for reading");
  std::string first;
  std::getline(probe, first);
  double unused = 0.0;
  const bool header =
      !first.empty() && !parse_double(split(first, ',').front(), &unused);
  probe.close();

  const auto raw = read_csv_rows(path, header);
  std::map<int, Eigen::MatrixXd> out;
  for (size_t r = 0; r < raw.size(); ++r) {
    if (raw[r].size() != 4) {
      std::ostringstream msg;
      msg << path << ": baseline rows need 4 cells "
          << "(replication,row,col,value), row " << r + 1 << " has "
          << raw[r].size();
      throw parse_error(msg.str());
    }
    const double repd = raw[r][0], rowd = raw[r][1], cold = raw[r][2];
    if (repd != std::floor(repd) || rowd != std::floor(rowd) ||
        cold != std::floor(cold) || repd < 0 || rowd < 0 || cold < 0)
      throw parse_error(path + ": replication/row/col must be nonnegative integers");
    const int rep = static_cast<int>(repd);
    const auto row = static_cast<Eigen::Index>(rowd);
    const auto col = static_cast<Eigen::Index>(cold);
    if (row >= rows || col >= cols) {
      std::ostringstream msg;
      msg << path << ": coefficient (" << row << "," << col
          << ") outside the " << rows << "x" << cols << " grid";
      throw domain_error(msg.str());
    }
    auto [it, inserted] =
        out.try_emplace(rep, Eigen::MatrixXd::Zero(rows, cols));
    it->second(row, col) = raw[r][3];
  }
  return out;
}

Eigen::MatrixXd glm_mean(const Eigen::MatrixXd& X, const Eigen::MatrixXd& O,
                         const Eigen::MatrixXd& B) {
  Eigen::MatrixXd lin = O + X * B;
  if (lin.maxCoeff() > 700.0)
    throw numeric_error("baseline prediction overflows exp");
  return lin.array().exp().matrix();
}

}  // namespace

std::vector<BenchRecord> run_bench(const RunConfig& cfg) {
  if (cfg.reps < 1) throw domain_error("bench: --reps must be >= 1");
  const std::vector<int> ns = parse_int_list(cfg.n_list, "bench --n-list");
  const std::vector<int> ps = parse_int_list(cfg.p_list, "bench --p-list");
  std::vector<CovarianceKind> kinds;
  std::vector<std::string> kind_names;
  for (const std::string& c : parse_str_list(cfg.cov_list)) {
    kinds.push_back(parse_cov(c));
    kind_names.push_back(c);
  }
  if (kinds.empty()) throw domain_error("bench: --cov-list is empty");
  std::vector<std::string> methods = parse_str_list(cfg.methods);
  for (const std::string& m : methods)
    if (m != "sicpln" && m != "pln")
      throw domain_error("bench: unknown method '" + m +
                         "' (choose from sicpln, pln)");

  std::vector<BenchScenario> scenarios;
  for (size_t ci = 0; ci < kinds.size(); ++ci)
    for (int n : ns)
      for (int p : ps) {
        std::ostringstream id;
        id << 'n' << n << "_p" << p << '_' << kind_names[ci];
        scenarios.push_back({n, p, kinds[ci], id.str()});
      }

  std::map<int, Eigen::MatrixXd> baseline;
  if (!cfg.import_baseline.empty()) {
    if (scenarios.size() != 1)
      throw domain_error(
          "bench: --import-baseline requires a single-scenario grid");
    baseline = read_baseline(cfg.import_baseline, cfg.d + 1, scenarios[0].p);
  }

  const size_t jobs = scenarios.size() * static_cast<size_t>(cfg.reps);
  std::vector<std::vector<BenchRecord>> slots(jobs);
  std::atomic<size_t> next{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;

  const auto worker = [&]() {
    while (true) {
      const size_t job = next.fetch_add(1);
      if (job >= jobs) return;
      try {
        const size_t si = job / static_cast<size_t>(cfg.reps);
        const int rep = static_cast<int>(job % static_cast<size_t>(cfg.reps));
        const BenchScenario& bs = scenarios[si];

        SimScenario sim;
        sim.n = bs.n;
        sim.p = bs.p;
        sim.d = cfg.d;
        sim.covariance_kind = bs.kind;
        sim.seed = cfg.seed + static_cast<std::uint64_t>(rep);
        const SimData sd = gen_counts(sim);
        std::optional<SimData> holdout;
        if (cfg.holdout)
          holdout = gen_counts(sim, sd.B_true, sd.Sigma_true, /*salt=*/1);

        std::vector<BenchRecord>& out = slots[job];
        for (const std::string& method : methods) {
          FitOptions fo = cfg.fit_options();
          if (method == "pln") {
            fo.lambda_auto = false;
            fo.penalty.lambda = 0.0;
          }
          const auto t0 = std::chrono::steady_clock::now();
          const FitResult fr = sicpln_fit(sd.data, fo);
          const double secs =
              std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                            t0)
                  .count();
          BenchRecord rec;
          rec.scenario = bs.id;
          rec.method = method;
          rec.replication = rep;
          rec.estimation_error = estimation_error(sd.B_true, fr.params.B);
          rec.tnr = tnr(sd.B_true, fr.params.B);
          rec.prediction_mse =
              holdout ? prediction_mse(holdout->data.Y,
                                       predict_marginal(holdout->data.X,
                                                        holdout->data.O,
                                                        fr.params))
                      : prediction_mse(
                            sd.data.Y,
                            predict_variational(sd.data, fr.params, fr.vp));
          rec.wall_time = secs;
          out.push_back(std::move(rec));
        }
        if (const auto it = baseline.find(rep); it != baseline.end()) {
          const Eigen::MatrixXd& Bb = it->second;
          BenchRecord rec;
          rec.scenario = bs.id;
          rec.method = cfg.baseline_name;
          rec.replication = rep;
          rec.estimation_error = estimation_error(sd.B_true, Bb);
          rec.tnr = tnr(sd.B_true, Bb);
          rec.prediction_mse =
              holdout ? prediction_mse(holdout->data.Y,
                                       glm_mean(holdout->data.X,
                                                holdout->data.O, Bb))
                      : prediction_mse(sd.data.Y,
                                       glm_mean(sd.data.X, sd.data.O, Bb));
          rec.wall_time = 0.0;
          out.push_back(std::move(rec));
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  size_t nthreads = cfg.threads > 0
                        ? static_cast<size_t>(cfg.threads)
                        : std::max(1u, std::thread::hardware_concurrency());
  nthreads = std::min(nthreads, jobs);
  std::vector<std::thread> pool;
  pool.reserve(nthreads);
  for (size_t t = 0; t < nthreads; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);

  std::vector<BenchRecord> records;
  records.reserve(jobs * (methods.size() + 1));
  for (std::vector<BenchRecord>& slot : slots)
    for (BenchRecord& r : slot) records.push_back(std::move(r));

  ensure_out_dir(cfg);
  {
    std::ofstream out = open_out(out_path(cfg, "bench_records.csv"));
    out << "scenario,method,replication,estimation_error,tnr,prediction_mse,"
           "wall_time_seconds\n";
    for (const BenchRecord& r : records)
      out << r.scenario << ',' << r.method << ',' << r.replication << ','
          << fmt(r.estimation_error) << ',' << fmt(r.tnr) << ','
          << fmt(r.prediction_mse) << ',' << fmt(r.wall_time) << '\n';
  }
  {
    const std::vector<AggregateRow> rows = aggregate(records);
    std::ofstream out = open_out(out_path(cfg, "bench_aggregate.csv"));
    out << "scenario,method,replications";
    for (const char* m : {"estimation_error", "tnr", "prediction_mse"})
      out << ',' << m << "_mean," << m << "_q25," << m << "_median," << m
          << "_q75";
    out << '\n';
    for (const AggregateRow& row : rows) {
      out << row.scenario << ',' << row.method << ',' << row.replications;
      for (const SummaryStats* s :
           {&row.estimation_error, &row.tnr, &row.prediction_mse})
        out << ',' << fmt(s->mean) << ',' << fmt(s->q25) << ','
            << fmt(s->median) << ',' << fmt(s->q75);
      out << '\n';
    }
  }
  write_manifest(cfg, "bench");
  return records;
}

}  // namespace sicpln::io
