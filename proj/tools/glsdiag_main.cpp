#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <glsdiag/glsdiag.hpp>

namespace fs = std::filesystem;
using namespace glsdiag;

namespace {

struct RunConfig {
  std::string mode;  // empty = infer from which paths are set
  std::string input;
  std::string x_path, y_path, groups_path;

  std::string subject_col = "subject";
  std::string time_col = "time";
  std::string response_col = "response";
  std::vector<std::string> numeric_terms;
  std::vector<std::string> categorical_terms;  // column=reference
  bool no_intercept = false;

  std::string family = "identity";
  double rho = 0.0;
  bool estimate_rho = false;

  std::string out_dir = ".";
};

void add_common_options(CLI::App* cmd, RunConfig& cfg) {
  cmd->add_option("--input", cfg.input, "long-format CSV (header row, subject/time/response columns)");
  cmd->add_option("--x", cfg.x_path, "headerless numeric design matrix CSV");
  cmd->add_option("--y", cfg.y_path, "response file, one value per line");
  cmd->add_option("--groups", cfg.groups_path, "CSV with subject_id,time rows in the same order as --x");
  cmd->add_option("--mode", cfg.mode, "ingestion mode: long or design (inferred when omitted)")
      ->check(CLI::IsMember({"long", "design"}));

  cmd->add_option("--subject-col", cfg.subject_col, "subject column name (long mode)");
  cmd->add_option("--time-col", cfg.time_col, "time column name (long mode)");
  cmd->add_option("--response", cfg.response_col, "response column name (long mode)");
  cmd->add_option("--numeric", cfg.numeric_terms, "numeric covariate column (repeatable, long mode)");
  cmd->add_option("--categorical", cfg.categorical_terms,
                  "categorical covariate as column=reference (repeatable, long mode)");
  cmd->add_flag("--no-intercept", cfg.no_intercept, "drop the intercept column");

  cmd->add_option("--family", cfg.family, "correlation family")
      ->check(CLI::IsMember({"identity", "ar1", "car1"}));
  cmd->add_option("--rho", cfg.rho, "correlation parameter (used as-is unless --estimate-rho)");
  cmd->add_flag("--estimate-rho", cfg.estimate_rho, "estimate rho by profiled REML");

  cmd->add_option("--out", cfg.out_dir, "output directory (created if missing)");
}

RegressionProblemd load_problem(const RunConfig& cfg) {
  std::string mode = cfg.mode;
  const bool has_long = !cfg.input.empty();
  const bool has_design =
      !cfg.x_path.empty() || !cfg.y_path.empty() || !cfg.groups_path.empty();
  if (mode.empty()) {
    if (has_long == has_design)
      throw std::invalid_argument(
          "provide either --input (long mode) or --x/--y/--groups (design mode)");
    mode = has_long ? "long" : "design";
  }

  if (mode == "long") {
    if (!has_long) throw std::invalid_argument("--mode long requires --input");
    CsvSchema schema;
    schema.subject = cfg.subject_col;
    schema.time = cfg.time_col;
    schema.response = cfg.response_col;
    auto data = load_long_csv(cfg.input, schema);

    ModelSpec spec;
    spec.response = cfg.response_col;
    spec.numeric_terms = cfg.numeric_terms;
    for (const std::string& term : cfg.categorical_terms) {
      const auto eq = term.find('=');
      if (eq == std::string::npos || eq == 0 || eq + 1 == term.size())
        throw std::invalid_argument("--categorical expects column=reference, got '" + term + "'");
      spec.categorical_terms.emplace_back(term.substr(0, eq), term.substr(eq + 1));
    }
    spec.intercept = !cfg.no_intercept;
    if (!spec.intercept && spec.numeric_terms.empty() && spec.categorical_terms.empty())
      throw std::invalid_argument("the model has no columns: drop --no-intercept or add terms");
    return build_design(data, spec);
  }

  if (cfg.x_path.empty() || cfg.y_path.empty() || cfg.groups_path.empty())
    throw std::invalid_argument("--mode design requires --x, --y, and --groups");
  return load_design_csv(cfg.x_path, cfg.y_path, cfg.groups_path);
}

GlsFitd fit_from_config(const RunConfig& cfg, const RegressionProblemd& problem) {
  CorrelationModeld model;
  model.family = family_from_name(cfg.family);
  model.rho = cfg.rho;
  return fit_gls(problem, model, cfg.estimate_rho);
}

std::string out_path(const RunConfig& cfg, const std::string& name) {
  fs::create_directories(cfg.out_dir);
  return (fs::path(cfg.out_dir) / name).string();
}

int run_fit(const RunConfig& cfg) {
  auto problem = load_problem(cfg);
  auto fit = fit_from_config(cfg, problem);
  const std::string path = out_path(cfg, "fit.json");
  write_report_file(path, fit_json(fit));
  std::cout << "fit: n=" << fit.n() << " p=" << fit.p()
            << " family=" << family_name(fit.model.family) << " rho=" << fmt_sig(fit.rho())
            << " sigma2=" << fmt_sig(fit.sigma2) << " reml=" << fmt_sig(fit.reml) << " -> "
            << path << "\n";
  return 0;
}

int run_diagnose(const RunConfig& cfg, const std::string& scheme_name_arg) {
  auto problem = load_problem(cfg);
  auto fit = fit_from_config(cfg, problem);
  const FoldScheme scheme = scheme_from_name(scheme_name_arg);

  std::string csv;
  size_t n_rows = 0, n_valid = 0;
  if (scheme == FoldScheme::loo) {
    auto stats = loo_all(fit);
    n_rows = stats.size();
    for (const auto& s : stats) n_valid += s.valid ? 1 : 0;
    csv = loo_csv(fit, stats);
  } else if (scheme == FoldScheme::subject) {
    std::vector<DeletionStatsd> stats;
    for (const auto& g : fit.problem.groups.blocks) {
      std::vector<Index> idx(static_cast<size_t>(g.size));
      std::iota(idx.begin(), idx.end(), g.start);
      SubsetIndex M(idx);
      try {
        stats.push_back(deletion_stats(fit, M));
      } catch (const numeric_error& err) {
        DeletionStatsd bad;
        bad.observations = idx;
        bad.message = err.what();
        stats.push_back(std::move(bad));
      } catch (const data_error& err) {
        DeletionStatsd bad;
        bad.observations = idx;
        bad.message = err.what();
        stats.push_back(std::move(bad));
      }
    }
    n_rows = stats.size();
    for (const auto& s : stats) n_valid += s.valid ? 1 : 0;
    csv = subject_csv(fit, stats);
  } else {
    throw std::invalid_argument("diagnose supports --scheme loo or subject");
  }

  const std::string path = out_path(cfg, "diagnostics.csv");
  write_report_file(path, csv);
  std::cout << "diagnose: scheme=" << scheme_name_arg << " rows=" << n_rows
            << " valid=" << n_valid << " -> " << path << "\n";
  return 0;
}

int run_cv(const RunConfig& cfg, const std::string& scheme_name_arg, long long k,
           unsigned long long seed, const std::string& policy_name_arg) {
  auto problem = load_problem(cfg);
  auto fit = fit_from_config(cfg, problem);
  const FoldScheme scheme = scheme_from_name(scheme_name_arg);
  const RhoPolicy policy = policy_from_name(policy_name_arg);

  auto folds = make_folds(problem, scheme, static_cast<Index>(k), seed);
  auto report = compare_folds(fit, folds, policy);

  const std::string csv_path = out_path(cfg, "cv_folds.csv");
  const std::string json_path = out_path(cfg, "cv_summary.json");
  write_report_file(csv_path, oracle_report_csv(report));
  write_report_file(json_path, oracle_summary_json(report));
  std::cout << "cv: scheme=" << scheme_name_arg << " policy=" << policy_name_arg
            << " folds=" << report.records.size() << " valid=" << report.n_valid
            << " mean_est=" << fmt_sig(report.mean_srd_est)
            << " mean_actual=" << fmt_sig(report.mean_srd_actual) << " -> " << csv_path
            << " " << json_path << "\n";
  return 0;
}

int run_simulate(const RunConfig& cfg, long long k, long long n_sims,
                 unsigned long long seed, const std::vector<long long>& watch) {
  auto problem = load_problem(cfg);
  auto fit = fit_from_config(cfg, problem);

  std::vector<Index> watched;
  for (long long w : watch) {
    if (w < 1 || w > fit.n())
      throw std::invalid_argument("--watch index " + std::to_string(w) +
                                  " is outside 1.." + std::to_string(fit.n()));
    watched.push_back(static_cast<Index>(w - 1));
  }

  auto summary = simulate_kfold(fit, static_cast<Index>(k), static_cast<Index>(n_sims),
                                seed, watched);
  const std::string csv_path = out_path(cfg, "sim_folds.csv");
  const std::string json_path = out_path(cfg, "sim_means.json");
  write_report_file(csv_path, simulation_csv(summary));
  write_report_file(json_path, simulation_json(summary));
  std::cout << "simulate: k=" << k << " n_sims=" << n_sims << " seed=" << seed
            << " sd_means=" << fmt_sig(summary.sd_sim_means)
            << " sd_folds=" << fmt_sig(summary.sd_fold_srds) << " -> " << csv_path << " "
            << json_path << "\n";
  return 0;
}

struct CheckResult {
  bool ok = true;
  void report(const std::string& name, double value, double bound) {
    const bool pass = value <= bound;
    ok = ok && pass;
    std::cout << (pass ? "ok" : "FAIL") << ": " << name << " (" << fmt_sig(value)
              << " <= " << fmt_sig(bound) << ")\n";
  }
};

int run_check(const RunConfig& cfg) {
  auto problem = load_problem(cfg);
  auto fit = fit_from_config(cfg, problem);
  const Index n = fit.n();
  const Index p = fit.p();
  CheckResult result;

  const double y_norm = fit.problem.y.norm();
  const double ortho = (fit.tilde_r.transpose() * fit.problem.x).cwiseAbs().maxCoeff();
  result.report("residual orthogonality max|r' Sigma^-1 X|", ortho,
                1e-8 * std::max(1.0, y_norm));

  const double trace_h =
      ((fit.problem.x.transpose() * fit.tilde_x) * fit.xtsix_inv).trace();
  result.report("trace(Sigma^-1 H) - p", std::abs(trace_h - double(p)), 1e-8);

  const auto sigma = build_correlation(fit.model, problem.groups, problem.times);
  double inv_err = 0.0;
  for (size_t b = 0; b < sigma.blocks.size(); ++b) {
    const Matrix<double>& s = sigma.blocks[b];
    const Matrix<double> prod = fit.prec.blocks[b] * s;
    inv_err = std::max(inv_err,
                       (prod - Matrix<double>::Identity(s.rows(), s.cols()))
                           .cwiseAbs()
                           .maxCoeff());
  }
  result.report("max|Sigma^-1 Sigma - I|", inv_err, 1e-10);

  double diag_err = 0.0;
  for (const auto& c : fit.partial.c_blocks)
    diag_err = std::max(diag_err, (c.diagonal().array() - 1.0).abs().maxCoeff());
  result.report("max|diag(C) - 1|", diag_err, 0.0);

  std::vector<SubsetIndex> subsets;
  for (Index i = 0; i < n; ++i) subsets.push_back(SubsetIndex({i}));
  for (const auto& g : problem.groups.blocks) {
    std::vector<Index> idx(static_cast<size_t>(g.size));
    std::iota(idx.begin(), idx.end(), g.start);
    subsets.push_back(SubsetIndex(idx));
  }
  double decomp = 0.0, route = 0.0;
  for (const auto& M : subsets) {
    if (M.size() >= n - p) continue;
    try {
      auto est = deletion_stats(fit, M);
      const double scale = std::max(1.0, std::abs(est.srd));
      decomp = std::max(decomp,
                        std::abs(est.srd - (est.lmocv_sq - est.cook_multiple)) / scale);
      route = std::max(route, std::abs(srd_via_partial(fit, M) - est.srd) / scale);
    } catch (const numeric_error&) {
      // singular deletions are exercised by the oracle comparison below
    }
  }
  result.report("decomposition |srd - (lmocv_sq - cook_multiple)| (relative)", decomp, 1e-9);
  result.report("route equivalence |srd_partial - srd| (relative)", route, 1e-9);

  const double oracle_bound = 1e-6 * double(n - p) * fit.sigma2;
  auto loo_folds = make_folds(problem, FoldScheme::loo, 0, 0);
  auto loo_report = compare_folds(fit, loo_folds, RhoPolicy::fixed);
  result.report("hold-fixed oracle max|error|, loo", loo_report.max_abs_error,
                oracle_bound);
  auto subj_folds = make_folds(problem, FoldScheme::subject, 0, 0);
  auto subj_report = compare_folds(fit, subj_folds, RhoPolicy::fixed);
  result.report("hold-fixed oracle max|error|, subject", subj_report.max_abs_error,
                oracle_bound);

  if (!result.ok) {
    std::cout << "check: FAILED\n";
    return 3;
  }
  std::cout << "check: ok (n=" << n << " p=" << p << " family="
            << family_name(fit.model.family) << " rho=" << fmt_sig(fit.rho()) << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GLS regression with closed-form deletion diagnostics"};
  app.require_subcommand(1);

  RunConfig cfg;

  auto* fit_cmd = app.add_subcommand("fit", "fit the model and write fit.json");
  add_common_options(fit_cmd, cfg);

  auto* diag_cmd =
      app.add_subcommand("diagnose", "per-observation or per-subject deletion diagnostics");
  add_common_options(diag_cmd, cfg);
  std::string diag_scheme = "loo";
  diag_cmd->add_option("--scheme", diag_scheme, "loo or subject")
      ->check(CLI::IsMember({"loo", "subject"}));

  auto* cv_cmd = app.add_subcommand("cv", "closed-form estimates against refit oracles");
  add_common_options(cv_cmd, cfg);
  std::string cv_scheme = "loo";
  std::string cv_policy = "fixed";
  long long cv_k = 10;
  unsigned long long cv_seed = 0;
  cv_cmd->add_option("--scheme", cv_scheme, "loo, subject, or kfold")
      ->check(CLI::IsMember({"loo", "subject", "kfold"}));
  cv_cmd->add_option("--k", cv_k, "fold count for --scheme kfold");
  cv_cmd->add_option("--seed", cv_seed, "shuffle seed for --scheme kfold");
  cv_cmd->add_option("--rho-policy", cv_policy, "refit policy: fixed or reestimate")
      ->check(CLI::IsMember({"fixed", "reestimate"}));

  auto* sim_cmd = app.add_subcommand("simulate", "repeated random k-fold SRD simulation");
  add_common_options(sim_cmd, cfg);
  long long sim_k = 10;
  long long sim_n = 100;
  unsigned long long sim_seed = 0;
  std::vector<long long> sim_watch;
  sim_cmd->add_option("--k", sim_k, "fold count");
  sim_cmd->add_option("--n-sims", sim_n, "number of simulated partitions");
  sim_cmd->add_option("--seed", sim_seed, "master seed; each simulation uses a derived substream");
  sim_cmd->add_option("--watch", sim_watch, "1-based observation index to track (repeatable)");

  auto* check_cmd =
      app.add_subcommand("check", "verify the closed-form identities against refits");
  add_common_options(check_cmd, cfg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (fit_cmd->parsed()) return run_fit(cfg);
    if (diag_cmd->parsed()) return run_diagnose(cfg, diag_scheme);
    if (cv_cmd->parsed()) return run_cv(cfg, cv_scheme, cv_k, cv_seed, cv_policy);
    if (sim_cmd->parsed()) return run_simulate(cfg, sim_k, sim_n, sim_seed, sim_watch);
    if (check_cmd->parsed()) return run_check(cfg);
    std::cerr << "error: no subcommand\n";
    return 1;
  } catch (const numeric_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const data_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
