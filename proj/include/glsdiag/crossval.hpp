#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "glsdiag/diagnostics.hpp"
#include "glsdiag/fit.hpp"
#include "glsdiag/rng.hpp"
#include "glsdiag/types.hpp"

namespace glsdiag {

enum class FoldScheme { loo, subject, kfold };

inline std::string scheme_name(FoldScheme scheme) {
  switch (scheme) {
    case FoldScheme::loo: return "loo";
    case FoldScheme::subject: return "subject";
    case FoldScheme::kfold: return "kfold";
  }
  return "unknown";
}

inline FoldScheme scheme_from_name(const std::string& name) {
  if (name == "loo") return FoldScheme::loo;
  if (name == "subject" || name == "leave_subject") return FoldScheme::subject;
  if (name == "kfold") return FoldScheme::kfold;
  throw std::domain_error("unknown fold scheme '" + name + "' (expected loo, subject, or kfold)");
}

/// Whether a deleted refit keeps the full-data correlation parameter or
/// re-estimates it from the retained observations.
enum class RhoPolicy { fixed, reestimate };

inline std::string policy_name(RhoPolicy policy) {
  return policy == RhoPolicy::fixed ? "fixed" : "reestimate";
}

inline RhoPolicy policy_from_name(const std::string& name) {
  if (name == "fixed") return RhoPolicy::fixed;
  if (name == "reestimate") return RhoPolicy::reestimate;
  throw std::domain_error("unknown rho policy '" + name + "' (expected fixed or reestimate)");
}

struct FoldSet {
  FoldScheme scheme = FoldScheme::loo;
  uint64_t seed = 0;  // meaningful for kfold only
  std::vector<std::vector<Index>> folds;  // each ascending, 0-based
};

/// Partition the observations. loo gives singletons, subject one fold per
/// group, kfold a seeded uniform shuffle cut into k pieces: the first k-1
/// folds take floor(n/k) observations each and the last takes the rest.
template <class Scalar>
FoldSet make_folds(const RegressionProblem<Scalar>& problem, FoldScheme scheme,
                   Index k, uint64_t seed) {
  const Index n = problem.n();
  FoldSet out;
  out.scheme = scheme;
  out.seed = seed;
  switch (scheme) {
    case FoldScheme::loo:
      for (Index i = 0; i < n; ++i) out.folds.push_back({i});
      break;
    case FoldScheme::subject:
      for (const auto& g : problem.groups.blocks) {
        std::vector<Index> fold(static_cast<size_t>(g.size));
        std::iota(fold.begin(), fold.end(), g.start);
        out.folds.push_back(std::move(fold));
      }
      break;
    case FoldScheme::kfold: {
      if (k < 2 || k > n)
        throw std::invalid_argument("k must be between 2 and the number of observations");
      std::vector<Index> order(static_cast<size_t>(n));
      std::iota(order.begin(), order.end(), Index(0));
      auto eng = make_engine(seed);
      shuffle_vector(order, eng);
      const Index base = n / k;
      Index pos = 0;
      for (Index f = 0; f < k; ++f) {
        const Index take = f + 1 < k ? base : n - pos;
        std::vector<Index> fold(order.begin() + pos, order.begin() + pos + take);
        std::sort(fold.begin(), fold.end());
        out.folds.push_back(std::move(fold));
        pos += take;
      }
      break;
    }
  }
  return out;
}

template <class Scalar = double>
struct ReducedProblem {
  RegressionProblem<Scalar> problem;
  std::vector<Vector<Scalar>> gaps;  // per remaining block, aligned with it
};

/// Drop the rows in M while keeping the correlation structure of the
/// survivors identical to the corresponding submatrix of the full-data
/// correlation. Neighbour gaps are carried through cumulative positions and
/// re-differenced, so gaps on either side of a deleted observation merge
/// additively instead of being rebuilt from the packed row positions.
template <class Scalar>
ReducedProblem<Scalar> remove_observations(const RegressionProblem<Scalar>& full,
                                           const std::vector<Vector<Scalar>>& gaps,
                                           const SubsetIndex& M) {
  M.check_bounds(full.n());
  if (gaps.size() != full.groups.blocks.size())
    throw std::invalid_argument("gap vectors do not match the group layout");

  const Index n = full.n();
  const Index m = M.size();
  const Index kept_n = n - m;
  if (kept_n <= full.p())
    throw data_error("cannot delete " + std::to_string(m) + " of " + std::to_string(n) +
                     " observations: fewer rows than coefficients would remain");

  ReducedProblem<Scalar> out;
  out.problem.column_names = full.column_names;
  out.problem.y.resize(kept_n);
  out.problem.x.resize(kept_n, full.p());
  out.problem.times.resize(kept_n);

  Index row = 0;
  for (size_t b = 0; b < full.groups.blocks.size(); ++b) {
    const Group& g = full.groups.blocks[b];
    const Vector<Scalar>& block_gaps = gaps[b];

    std::vector<Index> kept;
    std::vector<Scalar> position;  // cumulative gap from the block's first obs
    Scalar cum = Scalar(0);
    for (Index j = 0; j < g.size; ++j) {
      if (j > 0) cum += block_gaps(j - 1);
      if (!M.contains(g.start + j)) {
        kept.push_back(g.start + j);
        position.push_back(cum);
      }
    }
    if (kept.empty()) continue;

    const Index start = row;
    for (size_t j = 0; j < kept.size(); ++j) {
      out.problem.y(row) = full.y(kept[j]);
      out.problem.x.row(row) = full.x.row(kept[j]);
      out.problem.times(row) = full.times(kept[j]);
      ++row;
    }
    out.problem.groups.blocks.push_back({g.id, start, static_cast<Index>(kept.size())});

    Vector<Scalar> merged(static_cast<Index>(kept.size()) - 1);
    for (size_t j = 1; j < kept.size(); ++j)
      merged(static_cast<Index>(j) - 1) = position[j] - position[j - 1];
    out.gaps.push_back(std::move(merged));
  }

  out.problem.validate();
  return out;
}

template <class Scalar = double>
struct ActualDeletion {
  Vector<Scalar> beta;
  Scalar sigma2 = Scalar(0);
  Scalar quad = Scalar(0);  // deleted fit's r' Sigma^-1 r
  Scalar rho = Scalar(0);
  Scalar srd = Scalar(0);   // full quad minus deleted quad
};

/// Brute-force oracle: refit without the observations in M and read the
/// deletion quantities off the refit. Under RhoPolicy::fixed the refit keeps
/// the full fit's correlation parameter, which is what the closed forms
/// reproduce exactly; under RhoPolicy::reestimate it re-runs the correlation
/// search on the retained data.
template <class Scalar>
ActualDeletion<Scalar> refit_actual(const GlsFit<Scalar>& fit, const SubsetIndex& M,
                                    RhoPolicy policy) {
  const auto full_gaps =
      correlation_gaps<Scalar>(fit.model.family, fit.problem.groups, fit.problem.times);
  auto reduced = remove_observations(fit.problem, full_gaps, M);

  const bool reestimate =
      policy == RhoPolicy::reestimate && fit.model.family != CorrelationFamily::identity;
  GlsFit<Scalar> deleted;
  try {
    deleted = fit_gls(reduced.problem, fit.model, reestimate, reduced.gaps);
  } catch (const numeric_error& err) {
    throw numeric_error("refit without observations " + M.describe() + ": " + err.what());
  } catch (const data_error& err) {
    throw data_error("refit without observations " + M.describe() + ": " + err.what());
  }

  ActualDeletion<Scalar> out;
  out.beta = deleted.beta;
  out.sigma2 = deleted.sigma2;
  out.quad = deleted.quad;
  out.rho = deleted.rho();
  out.srd = fit.quad - deleted.quad;
  return out;
}

template <class Scalar = double>
struct FoldRecord {
  Index fold_id = 0;  // 1-based
  std::vector<Index> observations;
  bool valid = false;
  std::string message;

  Scalar srd_est = std::numeric_limits<Scalar>::quiet_NaN();
  Scalar srd_actual = std::numeric_limits<Scalar>::quiet_NaN();
  Scalar lmocv_sq = std::numeric_limits<Scalar>::quiet_NaN();
  Scalar cook_multiple = std::numeric_limits<Scalar>::quiet_NaN();
  Scalar rho_full = std::numeric_limits<Scalar>::quiet_NaN();
  Scalar rho_deleted = std::numeric_limits<Scalar>::quiet_NaN();
  Scalar error = std::numeric_limits<Scalar>::quiet_NaN();  // srd_actual - srd_est
};

template <class Scalar = double>
struct OracleReport {
  FoldScheme scheme = FoldScheme::loo;
  RhoPolicy policy = RhoPolicy::fixed;
  std::vector<FoldRecord<Scalar>> records;
  Index n_valid = 0;
  Scalar mean_srd_est = std::numeric_limits<Scalar>::quiet_NaN();
  Scalar mean_srd_actual = std::numeric_limits<Scalar>::quiet_NaN();
  Scalar mean_lmocv_sq = std::numeric_limits<Scalar>::quiet_NaN();
  Scalar max_abs_error = Scalar(0);
  Scalar pearson = std::numeric_limits<Scalar>::quiet_NaN();  // corr(error, rho_full - rho_deleted)
};

/// Sample Pearson correlation; NaN when fewer than two points or either
/// coordinate is constant.
template <class Scalar>
Scalar pearson_correlation(const std::vector<Scalar>& x, const std::vector<Scalar>& y) {
  const size_t n = x.size();
  if (n != y.size() || n < 2) return std::numeric_limits<Scalar>::quiet_NaN();
  Scalar mx = Scalar(0), my = Scalar(0);
  for (size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= Scalar(n);
  my /= Scalar(n);
  Scalar sxx = Scalar(0), syy = Scalar(0), sxy = Scalar(0);
  for (size_t i = 0; i < n; ++i) {
    const Scalar dx = x[i] - mx;
    const Scalar dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (!(sxx > Scalar(0)) || !(syy > Scalar(0)))
    return std::numeric_limits<Scalar>::quiet_NaN();
  return sxy / Scalar(std::sqrt(static_cast<double>(sxx * syy)));
}

/// Closed-form estimates against refit oracles, fold by fold. Failures of
/// either route are flagged on the fold's record and the sweep continues.
template <class Scalar>
OracleReport<Scalar> compare_folds(const GlsFit<Scalar>& fit, const FoldSet& folds,
                                   RhoPolicy policy) {
  OracleReport<Scalar> report;
  report.scheme = folds.scheme;
  report.policy = policy;
  report.records.reserve(folds.folds.size());

  std::vector<Scalar> errors;
  std::vector<Scalar> drifts;
  Scalar sum_est = Scalar(0), sum_actual = Scalar(0), sum_lmocv = Scalar(0);
  for (size_t f = 0; f < folds.folds.size(); ++f) {
    FoldRecord<Scalar> rec;
    rec.fold_id = static_cast<Index>(f) + 1;
    rec.observations = folds.folds[f];
    rec.rho_full = fit.rho();
    SubsetIndex M(folds.folds[f]);
    try {
      auto est = deletion_stats(fit, M);
      auto actual = refit_actual(fit, M, policy);
      rec.srd_est = est.srd;
      rec.lmocv_sq = est.lmocv_sq;
      rec.cook_multiple = est.cook_multiple;
      rec.srd_actual = actual.srd;
      rec.rho_deleted = actual.rho;
      rec.error = rec.srd_actual - rec.srd_est;
      rec.valid = true;
    } catch (const numeric_error& err) {
      rec.message = err.what();
    } catch (const data_error& err) {
      rec.message = err.what();
    }
    if (rec.valid) {
      ++report.n_valid;
      report.max_abs_error =
          std::max(report.max_abs_error, Scalar(std::abs(static_cast<double>(rec.error))));
      errors.push_back(rec.error);
      drifts.push_back(rec.rho_full - rec.rho_deleted);
      sum_est += rec.srd_est;
      sum_actual += rec.srd_actual;
      sum_lmocv += rec.lmocv_sq;
    }
    report.records.push_back(std::move(rec));
  }
  if (report.n_valid > 0) {
    report.mean_srd_est = sum_est / Scalar(report.n_valid);
    report.mean_srd_actual = sum_actual / Scalar(report.n_valid);
    report.mean_lmocv_sq = sum_lmocv / Scalar(report.n_valid);
  }
  report.pearson = pearson_correlation(errors, drifts);
  return report;
}

template <class Scalar = double>
struct SimFoldRecord {
  Index sim = 0;   // 1-based
  Index fold = 0;  // 1-based
  Index m = 0;
  Scalar srd = std::numeric_limits<Scalar>::quiet_NaN();
  bool contains_watched = false;
  bool valid = false;
};

template <class Scalar = double>
struct SimulationSummary {
  Index k = 0;
  Index n_sims = 0;
  uint64_t seed = 0;
  std::vector<SimFoldRecord<Scalar>> folds;  // n_sims * k records
  std::vector<Scalar> sim_means;             // mean fold srd per sim
  Scalar mean_of_means = std::numeric_limits<Scalar>::quiet_NaN();
  Scalar sd_sim_means = std::numeric_limits<Scalar>::quiet_NaN();
  Scalar sd_fold_srds = std::numeric_limits<Scalar>::quiet_NaN();
  Scalar watched_mean_srd = std::numeric_limits<Scalar>::quiet_NaN();
  Scalar unwatched_mean_srd = std::numeric_limits<Scalar>::quiet_NaN();
};

namespace detail {

template <class Scalar>
Scalar sample_sd(const std::vector<Scalar>& v) {
  if (v.size() < 2) return std::numeric_limits<Scalar>::quiet_NaN();
  Scalar mean = Scalar(0);
  for (Scalar x : v) mean += x;
  mean /= Scalar(v.size());
  Scalar ss = Scalar(0);
  for (Scalar x : v) ss += (x - mean) * (x - mean);
  return Scalar(std::sqrt(static_cast<double>(ss / Scalar(v.size() - 1))));
}

}  // namespace detail

/// Repeated random k-fold partitions scored by closed-form fold SRDs from a
/// single fit. Each simulation draws its shuffle from an independent
/// substream of `seed`, so a rerun with the same seed reproduces every
/// record exactly.
template <class Scalar>
SimulationSummary<Scalar> simulate_kfold(const GlsFit<Scalar>& fit, Index k,
                                         Index n_sims, uint64_t seed,
                                         const std::vector<Index>& watched) {
  if (n_sims < 1) throw std::invalid_argument("n_sims must be at least 1");
  for (Index w : watched)
    if (w < 0 || w >= fit.n())
      throw std::invalid_argument("watched observation " + std::to_string(w + 1) +
                                  " is out of range");

  SimulationSummary<Scalar> out;
  out.k = k;
  out.n_sims = n_sims;
  out.seed = seed;
  out.folds.reserve(static_cast<size_t>(n_sims) * static_cast<size_t>(k));

  std::vector<Scalar> all_srds;
  Scalar watched_sum = Scalar(0), unwatched_sum = Scalar(0);
  Index watched_count = 0, unwatched_count = 0;

  for (Index s = 0; s < n_sims; ++s) {
    auto folds = make_folds(fit.problem, FoldScheme::kfold, k,
                            substream_seed(seed, static_cast<uint64_t>(s)));
    Scalar sum = Scalar(0);
    Index valid = 0;
    for (size_t f = 0; f < folds.folds.size(); ++f) {
      SimFoldRecord<Scalar> rec;
      rec.sim = s + 1;
      rec.fold = static_cast<Index>(f) + 1;
      rec.m = static_cast<Index>(folds.folds[f].size());
      SubsetIndex M(folds.folds[f]);
      for (Index w : watched)
        if (M.contains(w)) rec.contains_watched = true;
      try {
        rec.srd = deletion_stats(fit, M).srd;
        rec.valid = true;
      } catch (const numeric_error&) {
        // left invalid; excluded from the summaries
      }
      if (rec.valid) {
        sum += rec.srd;
        ++valid;
        all_srds.push_back(rec.srd);
        if (rec.contains_watched) {
          watched_sum += rec.srd;
          ++watched_count;
        } else {
          unwatched_sum += rec.srd;
          ++unwatched_count;
        }
      }
      out.folds.push_back(std::move(rec));
    }
    out.sim_means.push_back(valid > 0 ? sum / Scalar(valid)
                                      : std::numeric_limits<Scalar>::quiet_NaN());
  }

  Scalar mean = Scalar(0);
  for (Scalar x : out.sim_means) mean += x;
  out.mean_of_means = mean / Scalar(out.sim_means.size());
  out.sd_sim_means = detail::sample_sd(out.sim_means);
  out.sd_fold_srds = detail::sample_sd(all_srds);
  if (watched_count > 0) out.watched_mean_srd = watched_sum / Scalar(watched_count);
  if (unwatched_count > 0) out.unwatched_mean_srd = unwatched_sum / Scalar(unwatched_count);
  return out;
}

}  // namespace glsdiag
