#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "glsdiag/crossval.hpp"
#include "glsdiag/diagnostics.hpp"
#include "glsdiag/fit.hpp"
#include "glsdiag/types.hpp"

namespace glsdiag {

/// All report numbers carry 12 significant digits, enough to verify the
/// 1e-9-relative identities from the files alone while keeping reruns
/// byte-comparable.
inline std::string fmt_sig(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", value);
  return buf;
}

/// The value that fmt_sig would print, as a double again; JSON output routes
/// numbers through this so text and CSV agree digit for digit.
inline double round_sig(double value) {
  return std::strtod(fmt_sig(value).c_str(), nullptr);
}

namespace detail {

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw data_error("failed while writing '" + path + "'");
}

inline nlohmann::ordered_json json_number(double value) {
  // nlohmann serializes non-finite numbers as null, which is what we want.
  return nlohmann::ordered_json(round_sig(value));
}

}  // namespace detail

template <class Scalar>
nlohmann::ordered_json fit_json(const GlsFit<Scalar>& fit) {
  nlohmann::ordered_json j;
  j["n"] = fit.n();
  j["p"] = fit.p();
  j["family"] = family_name(fit.model.family);
  j["rho"] = detail::json_number(static_cast<double>(fit.rho()));
  j["rho_estimated"] = fit.rho_estimated;
  j["sigma2"] = detail::json_number(static_cast<double>(fit.sigma2));
  j["reml"] = detail::json_number(static_cast<double>(fit.reml));
  nlohmann::ordered_json beta;
  for (Index k = 0; k < fit.p(); ++k)
    beta[fit.problem.column_names[static_cast<size_t>(k)]] =
        detail::json_number(static_cast<double>(fit.beta(k)));
  j["beta"] = std::move(beta);
  return j;
}

/// Per-observation leave-one-out table. Subject and time come from the
/// problem; indices are 1-based in the file.
template <class Scalar>
std::string loo_csv(const GlsFit<Scalar>& fit,
                    const std::vector<DeletionStats<Scalar>>& stats) {
  const auto transformed = transformed_residuals(fit);
  std::string out =
      "obs,subject,time,residual,tilde_residual,star_residual,star_leverage,"
      "srd,lmocv_sq,cook_multiple,cook_distance,sigma2_deleted_est,cv_resid_raw,status\n";
  for (Index i = 0; i < fit.n(); ++i) {
    const auto& s = stats[static_cast<size_t>(i)];
    const Group& g = fit.problem.groups.blocks[static_cast<size_t>(
        fit.problem.groups.group_of(i))];
    out += std::to_string(i + 1) + ',' + g.id + ',' +
           fmt_sig(static_cast<double>(fit.problem.times(i))) + ',' +
           fmt_sig(static_cast<double>(fit.residuals(i))) + ',' +
           fmt_sig(static_cast<double>(fit.tilde_r(i))) + ',' +
           fmt_sig(static_cast<double>(transformed.star(i))) + ',' +
           fmt_sig(static_cast<double>(transformed.star_leverage(i))) + ',';
    if (s.valid) {
      out += fmt_sig(static_cast<double>(s.srd)) + ',' +
             fmt_sig(static_cast<double>(s.lmocv_sq)) + ',' +
             fmt_sig(static_cast<double>(s.cook_multiple)) + ',' +
             fmt_sig(static_cast<double>(s.cook_distance)) + ',' +
             fmt_sig(static_cast<double>(s.sigma2_deleted_est)) + ',' +
             fmt_sig(static_cast<double>(s.cv_resid_raw(0))) + ",ok\n";
    } else {
      out += "nan,nan,nan,nan,nan,nan,singular\n";
    }
  }
  return out;
}

/// Per-subject deletion table: each group deleted as one block.
template <class Scalar>
std::string subject_csv(const GlsFit<Scalar>& fit,
                        const std::vector<DeletionStats<Scalar>>& stats) {
  std::string out =
      "subject,m,srd,lmocv_sq,cook_multiple,cook_distance,sigma2_deleted_est,status\n";
  for (size_t b = 0; b < fit.problem.groups.blocks.size(); ++b) {
    const Group& g = fit.problem.groups.blocks[b];
    const auto& s = stats[b];
    out += g.id + ',' + std::to_string(g.size) + ',';
    if (s.valid) {
      out += fmt_sig(static_cast<double>(s.srd)) + ',' +
             fmt_sig(static_cast<double>(s.lmocv_sq)) + ',' +
             fmt_sig(static_cast<double>(s.cook_multiple)) + ',' +
             fmt_sig(static_cast<double>(s.cook_distance)) + ',' +
             fmt_sig(static_cast<double>(s.sigma2_deleted_est)) + ",ok\n";
    } else {
      out += "nan,nan,nan,nan,nan,singular\n";
    }
  }
  return out;
}

template <class Scalar>
std::string oracle_report_csv(const OracleReport<Scalar>& report) {
  std::string out =
      "fold_id,m,srd_est,srd_actual,lmocv_sq,cook_multiple,rho_full,rho_deleted,error,status\n";
  for (const auto& rec : report.records) {
    out += std::to_string(rec.fold_id) + ',' + std::to_string(rec.observations.size()) + ',';
    if (rec.valid) {
      out += fmt_sig(static_cast<double>(rec.srd_est)) + ',' +
             fmt_sig(static_cast<double>(rec.srd_actual)) + ',' +
             fmt_sig(static_cast<double>(rec.lmocv_sq)) + ',' +
             fmt_sig(static_cast<double>(rec.cook_multiple)) + ',' +
             fmt_sig(static_cast<double>(rec.rho_full)) + ',' +
             fmt_sig(static_cast<double>(rec.rho_deleted)) + ',' +
             fmt_sig(static_cast<double>(rec.error)) + ",ok\n";
    } else {
      out += "nan,nan,nan,nan," + fmt_sig(static_cast<double>(rec.rho_full)) +
             ",nan,nan,failed\n";
    }
  }
  return out;
}

template <class Scalar>
nlohmann::ordered_json oracle_summary_json(const OracleReport<Scalar>& report) {
  nlohmann::ordered_json j;
  j["scheme"] = scheme_name(report.scheme);
  j["rho_policy"] = policy_name(report.policy);
  j["n_folds"] = report.records.size();
  j["n_valid"] = report.n_valid;
  j["mean_srd_est"] = detail::json_number(static_cast<double>(report.mean_srd_est));
  j["mean_srd_actual"] = detail::json_number(static_cast<double>(report.mean_srd_actual));
  j["mean_lmocv_sq"] = detail::json_number(static_cast<double>(report.mean_lmocv_sq));
  j["max_abs_error"] = detail::json_number(static_cast<double>(report.max_abs_error));
  j["pearson_error_rho_drift"] = detail::json_number(static_cast<double>(report.pearson));
  return j;
}

template <class Scalar>
std::string simulation_csv(const SimulationSummary<Scalar>& summary) {
  std::string out = "sim,fold,m,srd,contains_watched,status\n";
  for (const auto& rec : summary.folds) {
    out += std::to_string(rec.sim) + ',' + std::to_string(rec.fold) + ',' +
           std::to_string(rec.m) + ',' + fmt_sig(static_cast<double>(rec.srd)) + ',' +
           (rec.contains_watched ? '1' : '0') + std::string(1, ',') +
           (rec.valid ? "ok" : "singular") + '\n';
  }
  return out;
}

template <class Scalar>
nlohmann::ordered_json simulation_json(const SimulationSummary<Scalar>& summary) {
  nlohmann::ordered_json j;
  j["k"] = summary.k;
  j["n_sims"] = summary.n_sims;
  j["seed"] = summary.seed;
  j["mean_of_means"] = detail::json_number(static_cast<double>(summary.mean_of_means));
  j["sd_sim_means"] = detail::json_number(static_cast<double>(summary.sd_sim_means));
  j["sd_fold_srds"] = detail::json_number(static_cast<double>(summary.sd_fold_srds));
  j["watched_mean_srd"] = detail::json_number(static_cast<double>(summary.watched_mean_srd));
  j["unwatched_mean_srd"] =
      detail::json_number(static_cast<double>(summary.unwatched_mean_srd));
  nlohmann::ordered_json means = nlohmann::ordered_json::array();
  for (Scalar m : summary.sim_means) means.push_back(detail::json_number(static_cast<double>(m)));
  j["sim_means"] = std::move(means);
  return j;
}

inline void write_report_file(const std::string& path, const std::string& text) {
  detail::write_text_file(path, text);
}

inline void write_report_file(const std::string& path, const nlohmann::ordered_json& j) {
  detail::write_text_file(path, j.dump(2) + "\n");
}

}  // namespace glsdiag
