#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "glsdiag/correlation.hpp"
#include "glsdiag/dataset.hpp"
#include "glsdiag/types.hpp"

namespace glsdiag {

/// A fitted GLS model plus every cached transform the deletion diagnostics
/// need, so that no later computation touches an n x n product or refits.
template <class Scalar = double>
struct GlsFit {
  RegressionProblem<Scalar> problem;
  CorrelationModel<Scalar> model;  // rho holds the fitted/fixed value
  bool rho_estimated = false;

  Vector<Scalar> beta;
  Vector<Scalar> residuals;
  Scalar quad = Scalar(0);    // r' Sigma^-1 r
  Scalar sigma2 = Scalar(0);  // quad / (n - p)
  Scalar reml = Scalar(0);    // restricted log-likelihood at rho, constants dropped

  Matrix<Scalar> xtsix_inv;  // (X' Sigma^-1 X)^-1
  Matrix<Scalar> tilde_x;    // Sigma^-1 X
  Vector<Scalar> tilde_r;    // Sigma^-1 r
  PrecisionMatrix<Scalar> prec;
  PartialCorrelation<Scalar> partial;

  Index n() const { return problem.n(); }
  Index p() const { return problem.p(); }
  Scalar rho() const { return model.rho; }

  /// Diagonal entry i of H~ = Sigma^-1 H Sigma^-1.
  Scalar h_tilde_diag(Index i) const {
    return tilde_x.row(i) * xtsix_inv * tilde_x.row(i).transpose();
  }
};

using GlsFitd = GlsFit<double>;

/// Residuals in the scaled bases of the partial-correlation form.
template <class Scalar = double>
struct TransformedResiduals {
  Vector<Scalar> star;           // r* = S^{1/2} Sigma^-1 r
  Vector<Scalar> dagger;         // r+ = S Sigma^-1 r, r adjusted for correlation
  Vector<Scalar> star_leverage;  // diag of H* = S^{1/2} H~ S^{1/2}
};

/// The three M-indexed pieces every deletion formula is built from.
template <class Scalar = double>
struct TildeBlock {
  Vector<Scalar> r;     // r~ restricted to M
  Matrix<Scalar> h;     // H~ restricted to M x M
  Matrix<Scalar> prec;  // Sigma^M, the M x M block of Sigma^-1
};

namespace detail {

template <class Scalar>
struct FitCore {
  PrecisionMatrix<Scalar> prec;
  Matrix<Scalar> tilde_x;
  Vector<Scalar> beta;
  Vector<Scalar> residuals;
  Vector<Scalar> tilde_r;
  Matrix<Scalar> xtsix_inv;
  Scalar quad = Scalar(0);  // r' Sigma^-1 r
  Scalar sigma2 = Scalar(0);
  Scalar reml = Scalar(0);
};

/// One generalised least squares solve at fixed correlation structure.
template <class Scalar>
FitCore<Scalar> fit_at(const RegressionProblem<Scalar>& problem,
                       const CorrelationModel<Scalar>& model,
                       const std::vector<Vector<Scalar>>& gaps) {
  const Index n = problem.n();
  const Index p = problem.p();

  FitCore<Scalar> core;
  core.prec = inverse_correlation(build_correlation_from_gaps(model, problem.groups, gaps));
  core.tilde_x = core.prec.apply_matrix(problem.x);

  Matrix<Scalar> xtsix = problem.x.transpose() * core.tilde_x;
  xtsix = ((xtsix + xtsix.transpose()) / Scalar(2)).eval();
  Eigen::LLT<Matrix<Scalar>> llt(xtsix);
  if (llt.info() != Eigen::Success || llt.rcond() < Scalar(kConditionFloor))
    throw numeric_error("X' Sigma^-1 X is numerically singular");

  const Vector<Scalar> xtsiy = core.tilde_x.transpose() * problem.y;
  core.beta = llt.solve(xtsiy);
  core.residuals = problem.y - problem.x * core.beta;
  core.tilde_r = core.prec.apply(core.residuals);
  core.quad = core.residuals.dot(core.tilde_r);
  core.sigma2 = core.quad / Scalar(n - p);
  core.xtsix_inv = llt.solve(Matrix<Scalar>::Identity(p, p));
  core.xtsix_inv = ((core.xtsix_inv + core.xtsix_inv.transpose()) / Scalar(2)).eval();

  Scalar logdet_xtsix = Scalar(0);
  const auto& l = llt.matrixLLT();
  for (Index k = 0; k < p; ++k)
    logdet_xtsix += Scalar(2) * Scalar(std::log(static_cast<double>(l(k, k))));

  if (core.quad > Scalar(0)) {
    core.reml = Scalar(-0.5) * (Scalar(n - p) * Scalar(std::log(static_cast<double>(core.quad))) +
                                core.prec.log_det_sigma + logdet_xtsix);
  } else {
    core.reml = -std::numeric_limits<Scalar>::infinity();
  }
  return core;
}

/// Name the first dependent column found by a column-pivoted QR of X.
template <class Scalar>
std::string dependent_column_name(const RegressionProblem<Scalar>& problem,
                                  const Eigen::ColPivHouseholderQR<Matrix<Scalar>>& qr) {
  const Index rank = qr.rank();
  const auto& perm = qr.colsPermutation().indices();
  Index worst = perm(qr.cols() > rank ? rank : qr.cols() - 1);
  if (worst >= 0 && static_cast<size_t>(worst) < problem.column_names.size())
    return problem.column_names[static_cast<size_t>(worst)];
  return "column " + std::to_string(worst + 1);
}

template <class Scalar>
void check_full_rank(const RegressionProblem<Scalar>& problem) {
  Eigen::ColPivHouseholderQR<Matrix<Scalar>> qr(problem.x);
  if (qr.rank() < problem.p())
    throw data_error("design matrix is rank deficient; column '" +
                     dependent_column_name(problem, qr) +
                     "' is linearly dependent on the others");
}

template <class Scalar, class F>
Scalar golden_section_max(F&& f, Scalar lo, Scalar hi, Scalar tol, int max_iter) {
  const Scalar invphi = Scalar(0.6180339887498949);
  Scalar a = lo, b = hi;
  Scalar c = b - invphi * (b - a);
  Scalar d = a + invphi * (b - a);
  Scalar fc = f(c);
  Scalar fd = f(d);
  int iter = 0;
  while (b - a > tol && iter < max_iter) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = f(d);
    }
    ++iter;
  }
  return (a + b) / Scalar(2);
}

}  // namespace detail

/// Restricted log-likelihood at model.rho, constants dropped:
/// -1/2 [ (n-p) log(r' Sigma^-1 r) + log det Sigma + log det(X' Sigma^-1 X) ].
template <class Scalar>
Scalar restricted_loglik(const RegressionProblem<Scalar>& problem,
                         const CorrelationModel<Scalar>& model) {
  problem.validate();
  model.validate();
  const auto gaps = correlation_gaps<Scalar>(model.family, problem.groups, problem.times);
  return detail::fit_at(problem, model, gaps).reml;
}

/// Fit by profiled REML. With estimate_rho the scalar correlation parameter
/// is optimized by golden-section search over the family's domain; otherwise
/// model.rho is used as-is.
template <class Scalar>
GlsFit<Scalar> fit_gls(const RegressionProblem<Scalar>& problem,
                       CorrelationModel<Scalar> model, bool estimate_rho,
                       const std::vector<Vector<Scalar>>& gaps) {
  problem.validate();
  detail::check_full_rank(problem);

  if (estimate_rho) {
    if (model.family == CorrelationFamily::identity)
      throw std::invalid_argument("estimate_rho requires an ar1 or car1 family");
    const auto [lo, hi] = model.rho_domain();
    const Scalar a = lo + Scalar(1e-4);
    const Scalar b = hi - Scalar(1e-4);
    auto objective = [&](Scalar rho) -> Scalar {
      CorrelationModel<Scalar> at = model;
      at.rho = rho;
      try {
        return detail::fit_at(problem, at, gaps).reml;
      } catch (const numeric_error& err) {
        throw numeric_error("REML evaluation failed at rho=" +
                            std::to_string(static_cast<double>(rho)) +
                            " inside bracket [" + std::to_string(static_cast<double>(a)) +
                            ", " + std::to_string(static_cast<double>(b)) +
                            "]: " + err.what());
      }
    };
    model.rho = detail::golden_section_max<Scalar>(objective, a, b, Scalar(1e-7), 200);
  }
  model.validate();

  auto core = detail::fit_at(problem, model, gaps);

  GlsFit<Scalar> fit;
  fit.problem = problem;
  fit.model = model;
  fit.rho_estimated = estimate_rho;
  fit.beta = std::move(core.beta);
  fit.residuals = std::move(core.residuals);
  fit.quad = core.quad;
  fit.sigma2 = core.sigma2;
  fit.reml = core.reml;
  fit.xtsix_inv = std::move(core.xtsix_inv);
  fit.tilde_x = std::move(core.tilde_x);
  fit.tilde_r = std::move(core.tilde_r);
  fit.partial = partial_correlation(core.prec);
  fit.prec = std::move(core.prec);
  return fit;
}

template <class Scalar>
GlsFit<Scalar> fit_gls(const RegressionProblem<Scalar>& problem,
                       const CorrelationModel<Scalar>& model,
                       bool estimate_rho = false) {
  return fit_gls(problem, model, estimate_rho,
                 correlation_gaps<Scalar>(model.family, problem.groups, problem.times));
}

/// r*, r+ and diag(H*) for a fitted model.
template <class Scalar>
TransformedResiduals<Scalar> transformed_residuals(const GlsFit<Scalar>& fit) {
  const Index n = fit.n();
  TransformedResiduals<Scalar> out;
  out.star.resize(n);
  out.dagger.resize(n);
  out.star_leverage.resize(n);
  for (Index i = 0; i < n; ++i) {
    const Scalar s = fit.partial.s(i);
    const Scalar root = Scalar(std::sqrt(static_cast<double>(s)));
    out.star(i) = root * fit.tilde_r(i);
    out.dagger(i) = s * fit.tilde_r(i);
    out.star_leverage(i) = s * fit.h_tilde_diag(i);
  }
  return out;
}

/// r~_M, H~_M and Sigma^M for a deletion set, from cached factors only:
/// O(m^2 p) work, never an n x n product.
template <class Scalar>
TildeBlock<Scalar> tilde_block(const GlsFit<Scalar>& fit, const SubsetIndex& M) {
  M.check_bounds(fit.n());
  const Index m = M.size();
  TildeBlock<Scalar> block;
  block.r.resize(m);
  Matrix<Scalar> tx(m, fit.p());
  for (Index k = 0; k < m; ++k) {
    const Index i = M.indices[static_cast<size_t>(k)];
    block.r(k) = fit.tilde_r(i);
    tx.row(k) = fit.tilde_x.row(i);
  }
  block.h = tx * fit.xtsix_inv * tx.transpose();
  block.h = ((block.h + block.h.transpose()) / Scalar(2)).eval();
  block.prec = fit.prec.submatrix(M);
  return block;
}

}  // namespace glsdiag
