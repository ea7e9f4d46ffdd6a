#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "glsdiag/types.hpp"

namespace glsdiag {

// Within-subject correlation families. ar1 correlates by observation
// position, car1 by the recorded (possibly unequally spaced) times; both are
// Markov within a block: cor(i,j) is the product of consecutive-pair
// correlations between them, so the block precision is tridiagonal.

enum class CorrelationFamily { identity, ar1, car1 };

inline const char* family_name(CorrelationFamily f) {
  switch (f) {
    case CorrelationFamily::identity: return "identity";
    case CorrelationFamily::ar1: return "ar1";
    case CorrelationFamily::car1: return "car1";
  }
  return "?";
}

inline CorrelationFamily family_from_name(const std::string& s) {
  if (s == "identity") return CorrelationFamily::identity;
  if (s == "ar1") return CorrelationFamily::ar1;
  if (s == "car1") return CorrelationFamily::car1;
  throw std::domain_error("unknown correlation family '" + s + "'");
}

template <class Scalar = double>
struct CorrelationModel {
  CorrelationFamily family = CorrelationFamily::identity;
  Scalar rho = Scalar(0);

  void validate() const {
    switch (family) {
      case CorrelationFamily::identity:
        return;  // rho ignored
      case CorrelationFamily::ar1:
        if (!(std::abs(rho) < Scalar(1)))
          throw std::domain_error("ar1 requires |rho| < 1, got rho=" +
                                  std::to_string(static_cast<double>(rho)));
        return;
      case CorrelationFamily::car1:
        // rho^|dt| with fractional gaps needs rho > 0
        if (!(rho > Scalar(0) && rho < Scalar(1)))
          throw std::domain_error("car1 requires 0 < rho < 1, got rho=" +
                                  std::to_string(static_cast<double>(rho)));
        return;
    }
  }

  std::pair<Scalar, Scalar> rho_domain() const {
    if (family == CorrelationFamily::ar1) return {Scalar(-1), Scalar(1)};
    if (family == CorrelationFamily::car1) return {Scalar(0), Scalar(1)};
    return {Scalar(0), Scalar(0)};
  }
};

using CorrelationModeld = CorrelationModel<double>;

/// Gaps in "correlation time" between consecutive observations of each block:
/// car1 uses time differences, ar1 counts positions, identity has none.
/// Deleting observations merges gaps additively, which is what keeps a
/// reduced-data refit aligned with the full-data correlation matrix.
template <class Scalar>
std::vector<Vector<Scalar>> correlation_gaps(CorrelationFamily family,
                                             const GroupLayout& groups,
                                             const Vector<Scalar>& times) {
  std::vector<Vector<Scalar>> gaps;
  gaps.reserve(groups.blocks.size());
  for (const auto& g : groups.blocks) {
    Vector<Scalar> d(g.size > 0 ? g.size - 1 : 0);
    for (Index k = 0; k + 1 < g.size; ++k) {
      switch (family) {
        case CorrelationFamily::identity:
          d(k) = Scalar(0);
          break;
        case CorrelationFamily::ar1:
          d(k) = Scalar(1);
          break;
        case CorrelationFamily::car1:
          d(k) = times(g.start + k + 1) - times(g.start + k);
          break;
      }
    }
    gaps.push_back(std::move(d));
  }
  return gaps;
}

/// Block-diagonal correlation matrix. `neighbor` holds the consecutive-pair
/// correlations a_k of each block when the structure is Markov (identity,
/// ar1, car1); it is left empty for matrices assembled from raw blocks, in
/// which case inversion falls back to dense Cholesky.
template <class Scalar = double>
struct CorrelationMatrix {
  GroupLayout groups;
  std::vector<Matrix<Scalar>> blocks;
  std::vector<Vector<Scalar>> neighbor;
  bool markov = false;

  Index n() const { return groups.total(); }

  Matrix<Scalar> dense() const {
    const Index nn = n();
    Matrix<Scalar> full = Matrix<Scalar>::Zero(nn, nn);
    for (size_t b = 0; b < blocks.size(); ++b) {
      const auto& g = groups.blocks[b];
      full.block(g.start, g.start, g.size, g.size) = blocks[b];
    }
    return full;
  }
};

using CorrelationMatrixd = CorrelationMatrix<double>;

/// Block-diagonal precision matrix (tridiagonal blocks for ar1/car1).
template <class Scalar = double>
struct PrecisionMatrix {
  GroupLayout groups;
  std::vector<Matrix<Scalar>> blocks;
  Scalar log_det_sigma = Scalar(0);  // log det of the correlation matrix inverted

  Index n() const { return groups.total(); }

  Scalar diag(Index i) const {
    const Index b = groups.group_of(i);
    const Index off = i - groups.blocks[static_cast<size_t>(b)].start;
    return blocks[static_cast<size_t>(b)](off, off);
  }

  /// Entry (i, j); zero across blocks.
  Scalar coeff(Index i, Index j) const {
    const Index b = groups.group_of(i);
    const auto& g = groups.blocks[static_cast<size_t>(b)];
    if (j < g.start || j >= g.start + g.size) return Scalar(0);
    return blocks[static_cast<size_t>(b)](i - g.start, j - g.start);
  }

  /// The M x M block of the precision matrix, written Sigma^M.
  Matrix<Scalar> submatrix(const SubsetIndex& M) const {
    const Index m = M.size();
    Matrix<Scalar> out(m, m);
    for (Index a = 0; a < m; ++a)
      for (Index b = 0; b < m; ++b)
        out(a, b) = coeff(M.indices[static_cast<size_t>(a)],
                          M.indices[static_cast<size_t>(b)]);
    return out;
  }

  Vector<Scalar> apply(const Eigen::Ref<const Vector<Scalar>>& v) const {
    Vector<Scalar> out(n());
    for (size_t b = 0; b < blocks.size(); ++b) {
      const auto& g = groups.blocks[b];
      out.segment(g.start, g.size).noalias() = blocks[b] * v.segment(g.start, g.size);
    }
    return out;
  }

  Matrix<Scalar> apply_matrix(const Eigen::Ref<const Matrix<Scalar>>& x) const {
    Matrix<Scalar> out(n(), x.cols());
    for (size_t b = 0; b < blocks.size(); ++b) {
      const auto& g = groups.blocks[b];
      out.middleRows(g.start, g.size).noalias() =
          blocks[b] * x.middleRows(g.start, g.size);
    }
    return out;
  }

  Matrix<Scalar> dense() const {
    const Index nn = n();
    Matrix<Scalar> full = Matrix<Scalar>::Zero(nn, nn);
    for (size_t b = 0; b < blocks.size(); ++b) {
      const auto& g = groups.blocks[b];
      full.block(g.start, g.start, g.size, g.size) = blocks[b];
    }
    return full;
  }
};

using PrecisionMatrixd = PrecisionMatrix<double>;

/// Partial-correlation normalization of a precision matrix:
/// S_i = 1/Sigma^{ii} and C = S^{1/2} Sigma^{-1} S^{1/2}, unit diagonal.
template <class Scalar = double>
struct PartialCorrelation {
  GroupLayout groups;
  Vector<Scalar> s;
  std::vector<Matrix<Scalar>> c_blocks;

  Index n() const { return groups.total(); }

  Scalar coeff(Index i, Index j) const {
    const Index b = groups.group_of(i);
    const auto& g = groups.blocks[static_cast<size_t>(b)];
    if (j < g.start || j >= g.start + g.size) return Scalar(0);
    return c_blocks[static_cast<size_t>(b)](i - g.start, j - g.start);
  }

  /// The M x M block of C, written C^M.
  Matrix<Scalar> submatrix(const SubsetIndex& M) const {
    const Index m = M.size();
    Matrix<Scalar> out(m, m);
    for (Index a = 0; a < m; ++a)
      for (Index b = 0; b < m; ++b)
        out(a, b) = coeff(M.indices[static_cast<size_t>(a)],
                          M.indices[static_cast<size_t>(b)]);
    return out;
  }

  Matrix<Scalar> dense() const {
    const Index nn = n();
    Matrix<Scalar> full = Matrix<Scalar>::Zero(nn, nn);
    for (size_t b = 0; b < c_blocks.size(); ++b) {
      const auto& g = groups.blocks[b];
      full.block(g.start, g.start, g.size, g.size) = c_blocks[b];
    }
    return full;
  }
};

using PartialCorrelationd = PartialCorrelation<double>;

namespace detail {

/// Markov block from consecutive-pair correlations: Sigma_{ij} = prod a_k.
template <class Scalar>
Matrix<Scalar> markov_block(const Vector<Scalar>& a) {
  const Index g = a.size() + 1;
  Matrix<Scalar> block(g, g);
  for (Index i = 0; i < g; ++i) {
    block(i, i) = Scalar(1);
    Scalar prod = Scalar(1);
    for (Index j = i + 1; j < g; ++j) {
      prod *= a(j - 1);
      block(i, j) = prod;
      block(j, i) = prod;
    }
  }
  return block;
}

}  // namespace detail

/// Build the block-diagonal correlation matrix from explicit per-block gap
/// vectors (see correlation_gaps).
template <class Scalar>
CorrelationMatrix<Scalar> build_correlation_from_gaps(
    const CorrelationModel<Scalar>& model, const GroupLayout& groups,
    const std::vector<Vector<Scalar>>& gaps) {
  model.validate();
  if (gaps.size() != groups.blocks.size())
    throw data_error("one gap vector per group required");

  CorrelationMatrix<Scalar> sigma;
  sigma.groups = groups;
  sigma.markov = true;
  sigma.neighbor = gaps;
  for (auto& a : sigma.neighbor) {
    for (Index k = 0; k < a.size(); ++k) {
      a(k) = model.family == CorrelationFamily::identity
                 ? Scalar(0)
                 : Scalar(std::pow(static_cast<double>(model.rho),
                                   static_cast<double>(a(k))));
    }
  }
  sigma.blocks.reserve(sigma.neighbor.size());
  for (const auto& a : sigma.neighbor)
    sigma.blocks.push_back(detail::markov_block<Scalar>(a));
  return sigma;
}

/// Build the block-diagonal correlation matrix for a family at model.rho.
template <class Scalar>
CorrelationMatrix<Scalar> build_correlation(const CorrelationModel<Scalar>& model,
                                            const GroupLayout& groups,
                                            const Vector<Scalar>& times) {
  if (model.family == CorrelationFamily::car1 && times.size() != groups.total())
    throw data_error("car1 correlation requires one observation time per row");
  return build_correlation_from_gaps(
      model, groups, correlation_gaps<Scalar>(model.family, groups, times));
}

/// Correlation matrix assembled from explicit per-group blocks (generic
/// structure; inversion uses dense Cholesky per block).
template <class Scalar>
CorrelationMatrix<Scalar> correlation_from_blocks(GroupLayout groups,
                                                  std::vector<Matrix<Scalar>> blocks) {
  if (groups.blocks.size() != blocks.size())
    throw data_error("one correlation block per group required");
  for (size_t b = 0; b < blocks.size(); ++b) {
    if (blocks[b].rows() != groups.blocks[b].size ||
        blocks[b].cols() != groups.blocks[b].size)
      throw data_error("correlation block size mismatch for group '" +
                       groups.blocks[b].id + "'");
  }
  CorrelationMatrix<Scalar> sigma;
  sigma.groups = std::move(groups);
  sigma.blocks = std::move(blocks);
  sigma.markov = false;
  return sigma;
}

/// Per-block inverse. Markov blocks get the analytic tridiagonal precision
/// (entries beyond the first off-diagonal exactly zero); raw blocks fall back
/// to dense Cholesky.
template <class Scalar>
PrecisionMatrix<Scalar> inverse_correlation(const CorrelationMatrix<Scalar>& sigma) {
  PrecisionMatrix<Scalar> prec;
  prec.groups = sigma.groups;
  prec.blocks.reserve(sigma.blocks.size());
  prec.log_det_sigma = Scalar(0);

  for (size_t b = 0; b < sigma.blocks.size(); ++b) {
    const auto& group = sigma.groups.blocks[b];
    const Index g = group.size;

    if (sigma.markov) {
      const Vector<Scalar>& a = sigma.neighbor[b];
      Matrix<Scalar> q = Matrix<Scalar>::Zero(g, g);
      // One-step conditionals give the tridiagonal precision directly:
      // Q_kk = 1/(1-a_{k-1}^2) + a_k^2/(1-a_k^2), Q_{k,k+1} = -a_k/(1-a_k^2).
      for (Index k = 0; k < g; ++k) {
        Scalar d = Scalar(1);
        if (k > 0) {
          const Scalar v = Scalar(1) - a(k - 1) * a(k - 1);
          d = Scalar(1) / v;
        }
        if (k + 1 < g) {
          const Scalar v = Scalar(1) - a(k) * a(k);
          if (!(v > Scalar(kConditionFloor)))
            throw numeric_error(
                "correlation block for group '" + group.id +
                "' is numerically singular (|rho| too close to 1 for the "
                "observed spacing)");
          d += a(k) * a(k) / v;
          q(k, k + 1) = -a(k) / v;
          q(k + 1, k) = q(k, k + 1);
          prec.log_det_sigma += Scalar(std::log(static_cast<double>(v)));
        }
        q(k, k) = d;
      }
      prec.blocks.push_back(std::move(q));
    } else {
      Eigen::LLT<Matrix<Scalar>> llt(sigma.blocks[b]);
      if (llt.info() != Eigen::Success || llt.rcond() < Scalar(kConditionFloor))
        throw numeric_error("correlation block for group '" + group.id +
                            "' is not positive definite");
      Matrix<Scalar> inv = llt.solve(Matrix<Scalar>::Identity(g, g));
      inv = ((inv + inv.transpose()) / Scalar(2)).eval();
      prec.blocks.push_back(std::move(inv));
      const auto& l = llt.matrixLLT();
      for (Index k = 0; k < g; ++k)
        prec.log_det_sigma += Scalar(2) * Scalar(std::log(static_cast<double>(l(k, k))));
    }
  }
  return prec;
}

/// Normalize a precision matrix to partial-correlation form.
template <class Scalar>
PartialCorrelation<Scalar> partial_correlation(const PrecisionMatrix<Scalar>& prec) {
  PartialCorrelation<Scalar> pc;
  pc.groups = prec.groups;
  pc.s.resize(prec.n());
  pc.c_blocks.reserve(prec.blocks.size());
  for (size_t b = 0; b < prec.blocks.size(); ++b) {
    const auto& group = prec.groups.blocks[b];
    const Index g = group.size;
    Vector<Scalar> root(g);
    for (Index k = 0; k < g; ++k) {
      const Scalar d = prec.blocks[b](k, k);
      pc.s(group.start + k) = Scalar(1) / d;
      root(k) = Scalar(1) / Scalar(std::sqrt(static_cast<double>(d)));
    }
    Matrix<Scalar> c(g, g);
    for (Index i = 0; i < g; ++i) {
      c(i, i) = Scalar(1);
      for (Index j = i + 1; j < g; ++j) {
        c(i, j) = prec.blocks[b](i, j) * root(i) * root(j);
        c(j, i) = c(i, j);
      }
    }
    pc.c_blocks.push_back(std::move(c));
  }
  return pc;
}

/// Inverse of the correlation matrix with rows/cols M deleted, from the
/// bracketed downdate [Sigma^{-1} - Sigma^{Mcols} (Sigma^M)^{-1} Sigma^{Mrows}]
/// restricted to the complement of M.
template <class Scalar>
Matrix<Scalar> deleted_precision(const PrecisionMatrix<Scalar>& prec,
                                 const SubsetIndex& M) {
  const Index n = prec.n();
  M.check_bounds(n);
  const Index m = M.size();

  std::vector<Index> keep;
  keep.reserve(static_cast<size_t>(n - m));
  for (Index i = 0; i < n; ++i)
    if (!M.contains(i)) keep.push_back(i);
  const Index r = static_cast<Index>(keep.size());

  Matrix<Scalar> p_cc(r, r);
  for (Index a = 0; a < r; ++a)
    for (Index b = 0; b < r; ++b) p_cc(a, b) = prec.coeff(keep[a], keep[b]);

  Matrix<Scalar> p_cm(r, m);
  for (Index a = 0; a < r; ++a)
    for (Index b = 0; b < m; ++b)
      p_cm(a, b) = prec.coeff(keep[a], M.indices[static_cast<size_t>(b)]);

  Matrix<Scalar> p_mm = prec.submatrix(M);
  Eigen::LLT<Matrix<Scalar>> llt(p_mm);
  if (llt.info() != Eigen::Success || llt.rcond() < Scalar(kConditionFloor))
    throw numeric_error("precision block Sigma^M is singular for M=" + M.describe());

  Matrix<Scalar> out = p_cc - p_cm * llt.solve(p_cm.transpose());
  out = ((out + out.transpose()) / Scalar(2)).eval();
  return out;
}

}  // namespace glsdiag
