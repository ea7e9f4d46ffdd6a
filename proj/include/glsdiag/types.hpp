#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace glsdiag {

using Index = Eigen::Index;

template <class Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Ill-formed or inconsistent input: files, dimensions, metadata, model spec.
class data_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical failure: singular or badly conditioned linear algebra.
class numeric_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Reciprocal-condition estimates below this raise numeric_error instead of
// returning garbage.
inline constexpr double kConditionFloor = 1e-12;

/// One contiguous run of observations belonging to a single subject.
struct Group {
  std::string id;
  Index start = 0;
  Index size = 0;
};

/// Partition of 0..n-1 into contiguous, ordered subject blocks.
struct GroupLayout {
  std::vector<Group> blocks;

  Index count() const { return static_cast<Index>(blocks.size()); }

  Index total() const {
    Index n = 0;
    for (const auto& g : blocks) n += g.size;
    return n;
  }

  /// Index of the block containing observation i.
  Index group_of(Index i) const {
    Index lo = 0, hi = count() - 1;
    while (lo < hi) {
      Index mid = (lo + hi + 1) / 2;
      if (blocks[static_cast<size_t>(mid)].start <= i)
        lo = mid;
      else
        hi = mid - 1;
    }
    return lo;
  }

  void validate(Index n) const {
    if (blocks.empty()) throw data_error("group layout is empty");
    Index expect = 0;
    for (const auto& g : blocks) {
      if (g.size <= 0)
        throw data_error("group '" + g.id + "' has no observations");
      if (g.start != expect)
        throw data_error("group '" + g.id + "' is not contiguous with its predecessor");
      expect = g.start + g.size;
    }
    if (expect != n)
      throw data_error("group layout covers " + std::to_string(expect) +
                       " observations, expected " + std::to_string(n));
  }
};

/// A set of observation indices selected for deletion (0-based, sorted).
struct SubsetIndex {
  std::vector<Index> indices;

  SubsetIndex() = default;

  explicit SubsetIndex(std::vector<Index> idx) : indices(std::move(idx)) {
    if (indices.empty()) throw data_error("deletion subset is empty");
    std::sort(indices.begin(), indices.end());
    for (size_t k = 0; k < indices.size(); ++k) {
      if (indices[k] < 0)
        throw data_error("deletion subset contains a negative index");
      if (k > 0 && indices[k] == indices[k - 1])
        throw data_error("deletion subset contains duplicate index " +
                         std::to_string(indices[k]));
    }
  }

  Index size() const { return static_cast<Index>(indices.size()); }

  bool contains(Index i) const {
    return std::binary_search(indices.begin(), indices.end(), i);
  }

  void check_bounds(Index n) const {
    if (indices.empty()) throw data_error("deletion subset is empty");
    if (indices.back() >= n)
      throw data_error("deletion subset index " + std::to_string(indices.back()) +
                       " is out of range for n=" + std::to_string(n));
    if (size() >= n)
      throw data_error("deletion subset removes every observation");
  }

  /// Human-readable, 1-based, for error messages and reports.
  std::string describe() const {
    std::string s = "{";
    for (size_t k = 0; k < indices.size(); ++k) {
      if (k) s += ",";
      if (k == 8 && indices.size() > 9) {
        s += "...";
        break;
      }
      s += std::to_string(indices[k] + 1);
    }
    s += "}";
    return s;
  }
};

}  // namespace glsdiag
