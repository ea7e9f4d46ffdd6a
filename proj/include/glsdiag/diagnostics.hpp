#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "glsdiag/fit.hpp"
#include "glsdiag/types.hpp"

namespace glsdiag {

/// Closed-form deletion diagnostics for one subset M, all derived from the
/// full fit without touching the deleted data again.
///
/// srd is the squared-residual difference (n-p) sigma2 - (n-p-m) sigma2_(M),
/// lmocv_sq the conditionally standardised squared leave-M-out residual, and
/// cook_multiple the numerator of Cook's distance (divide by p sigma2 for the
/// conventional scaling). The three satisfy srd = lmocv_sq - cook_multiple.
template <class Scalar = double>
struct DeletionStats {
  std::vector<Index> observations;  // deleted row indices, ascending, 0-based

  bool valid = false;
  std::string message;  // reason when !valid

  Scalar srd = std::numeric_limits<Scalar>::quiet_NaN();
  Scalar lmocv_sq = std::numeric_limits<Scalar>::quiet_NaN();
  Scalar cook_multiple = std::numeric_limits<Scalar>::quiet_NaN();
  Scalar cook_distance = std::numeric_limits<Scalar>::quiet_NaN();
  Scalar sigma2_deleted_est = std::numeric_limits<Scalar>::quiet_NaN();
  bool sigma2_negative = false;  // rounding pushed the deleted estimate below zero

  Vector<Scalar> cv_resid_tilde;  // (Sigma^-1 (Y - X beta_deleted)) on M
  Vector<Scalar> cv_resid_raw;    // Y_M - X_M beta_deleted
  Vector<Scalar> beta_deleted;    // coefficients of the implied deleted fit
};

using DeletionStatsd = DeletionStats<double>;

namespace detail {

template <class Scalar>
void check_deletion_dof(const GlsFit<Scalar>& fit, Index m) {
  if (m >= fit.n() - fit.p())
    throw data_error("cannot delete " + std::to_string(m) + " of " +
                     std::to_string(fit.n()) + " observations with " +
                     std::to_string(fit.p()) +
                     " coefficients: no residual degrees of freedom remain");
}

/// Factor Sigma^M - H~_M (or its partial-correlation rescaling), insisting on
/// positive definiteness: an indefinite or near-singular system means the
/// implied deleted fit does not exist.
template <class Scalar>
Eigen::LDLT<Matrix<Scalar>> factor_deleted_system(const Matrix<Scalar>& a_mat,
                                                  const SubsetIndex& M) {
  Eigen::LDLT<Matrix<Scalar>> ldlt(a_mat);
  if (ldlt.info() != Eigen::Success ||
      ldlt.vectorD().minCoeff() <= Scalar(0) ||
      ldlt.rcond() < Scalar(kConditionFloor))
    throw numeric_error("deleted-information system for observations " +
                        M.describe() + " is numerically singular");
  return ldlt;
}

template <class Scalar>
void finish_moments(const GlsFit<Scalar>& fit, Index m, DeletionStats<Scalar>& out) {
  const Scalar dof = Scalar(fit.n() - fit.p());
  const Scalar numerator = dof * fit.sigma2 - out.srd;
  out.sigma2_negative = numerator < Scalar(0);
  out.sigma2_deleted_est = numerator / (dof - Scalar(m));
  out.cook_distance = fit.sigma2 > Scalar(0)
                          ? out.cook_multiple / (Scalar(fit.p()) * fit.sigma2)
                          : std::numeric_limits<Scalar>::quiet_NaN();
}

}  // namespace detail

/// Deletion diagnostics for an arbitrary subset, O(m^3 + m^2 p).
///
/// Throws data_error when the deletion leaves no residual degrees of freedom
/// and numeric_error when the deleted-information system is singular.
template <class Scalar>
DeletionStats<Scalar> deletion_stats(const GlsFit<Scalar>& fit, const SubsetIndex& M) {
  M.check_bounds(fit.n());
  const Index m = M.size();
  detail::check_deletion_dof(fit, m);

  auto block = tilde_block(fit, M);
  Matrix<Scalar> a_mat = block.prec - block.h;
  auto ldlt = detail::factor_deleted_system(a_mat, M);
  const Vector<Scalar> u = ldlt.solve(block.r);

  DeletionStats<Scalar> out;
  out.observations = M.indices;
  out.srd = block.r.dot(u);
  out.lmocv_sq = u.dot(block.prec * u);
  out.cook_multiple = u.dot(block.h * u);
  out.cv_resid_tilde = block.prec * u;

  Matrix<Scalar> tx(m, fit.p());
  Matrix<Scalar> x_m(m, fit.p());
  Vector<Scalar> y_m(m);
  for (Index k = 0; k < m; ++k) {
    const Index i = M.indices[static_cast<size_t>(k)];
    tx.row(k) = fit.tilde_x.row(i);
    x_m.row(k) = fit.problem.x.row(i);
    y_m(k) = fit.problem.y(i);
  }
  out.beta_deleted = fit.beta - fit.xtsix_inv * (tx.transpose() * u);
  out.cv_resid_raw = y_m - x_m * out.beta_deleted;

  detail::finish_moments(fit, m, out);
  out.valid = true;
  return out;
}

/// srd recomputed through the partial-correlation form
/// r*' (C^M - H*_M)^-1 r*, which must agree with deletion_stats().srd.
template <class Scalar>
Scalar srd_via_partial(const GlsFit<Scalar>& fit, const SubsetIndex& M) {
  M.check_bounds(fit.n());
  const Index m = M.size();
  detail::check_deletion_dof(fit, m);

  auto block = tilde_block(fit, M);
  Vector<Scalar> root(m);
  Vector<Scalar> r_star(m);
  for (Index k = 0; k < m; ++k) {
    const Index i = M.indices[static_cast<size_t>(k)];
    root(k) = Scalar(std::sqrt(static_cast<double>(fit.partial.s(i))));
    r_star(k) = root(k) * fit.tilde_r(i);
  }
  Matrix<Scalar> a_star = fit.partial.submatrix(M) -
                          root.asDiagonal() * block.h * root.asDiagonal();
  a_star = ((a_star + a_star.transpose()) / Scalar(2)).eval();
  auto ldlt = detail::factor_deleted_system(a_star, M);
  return r_star.dot(ldlt.solve(r_star));
}

/// Leave-one-out diagnostics for every observation from the cached fit,
/// O(n p^2) total. Observations whose deleted system degenerates are
/// flagged invalid and skipped rather than aborting the sweep.
template <class Scalar>
std::vector<DeletionStats<Scalar>> loo_all(const GlsFit<Scalar>& fit) {
  const Index n = fit.n();
  const Index p = fit.p();
  detail::check_deletion_dof(fit, 1);

  std::vector<DeletionStats<Scalar>> out(static_cast<size_t>(n));
  Vector<Scalar> g_inv_xi(p);
  for (Index i = 0; i < n; ++i) {
    DeletionStats<Scalar>& s = out[static_cast<size_t>(i)];
    s.observations = {i};

    const Scalar prec_ii = fit.prec.diag(i);
    g_inv_xi.noalias() = fit.xtsix_inv * fit.tilde_x.row(i).transpose();
    const Scalar h_tilde = fit.tilde_x.row(i).dot(g_inv_xi);
    const Scalar d = prec_ii - h_tilde;
    if (!(d > Scalar(kConditionFloor) * std::abs(prec_ii))) {
      s.message = "deleted-information system for observation " +
                  std::to_string(i + 1) + " is numerically singular";
      continue;
    }

    const Scalar r_t = fit.tilde_r(i);
    const Scalar u = r_t / d;
    s.srd = r_t * u;
    s.lmocv_sq = u * prec_ii * u;
    s.cook_multiple = u * h_tilde * u;
    s.cv_resid_tilde = Vector<Scalar>::Constant(1, prec_ii * u);
    s.beta_deleted = fit.beta - g_inv_xi * u;
    s.cv_resid_raw = Vector<Scalar>::Constant(
        1, fit.problem.y(i) - fit.problem.x.row(i).dot(s.beta_deleted));
    detail::finish_moments(fit, 1, s);
    s.valid = true;
  }
  return out;
}

}  // namespace glsdiag
