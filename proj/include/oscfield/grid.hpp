#pragma once

#include <array>
#include <cstdint>

#include "oscfield/errors.hpp"

namespace oscfield {

/**
 * Uniform tensor grid on [0,1]^d, d in {1,2}, with m_i cells per dimension.
 *
 * The grid has (m_i + 1) nodes per dimension at coordinates k / m_i and
 * spacing h_i = 1 / m_i. Nodes are flattened with dimension 0 (x) fastest,
 * i.e. index = p0 + (m0 + 1) * p1.
 */
class GridSpec {
 public:
  GridSpec(int dim, std::array<int, 2> cells) : d_(dim), m_(cells) {
    if (dim < 1 || dim > 2) throw ConfigError("GridSpec: dimension must be 1 or 2");
    if (dim == 1) m_[1] = 1;
    for (int i = 0; i < dim; ++i)
      if (m_[i] < 1) throw ConfigError("GridSpec: resolution must be >= 1");
  }
  static GridSpec line(int m) { return GridSpec(1, {m, 1}); }
  static GridSpec square(int m) { return GridSpec(2, {m, m}); }

  int dim() const { return d_; }
  int m(int i) const { return m_[i]; }
  int nodes(int i) const { return m_[i] + 1; }
  double spacing(int i) const { return 1.0 / m_[i]; }
  double coord(int i, int k) const { return static_cast<double>(k) / m_[i]; }

  std::int64_t node_count() const {
    std::int64_t n = 1;
    for (int i = 0; i < d_; ++i) n *= nodes(i);
    return n;
  }
  std::int64_t node_index(int p0, int p1 = 0) const {
    return static_cast<std::int64_t>(p1) * nodes(0) + p0;
  }

  /// True if `coarse` is this grid subsampled by an integer factor per dimension.
  bool refines(const GridSpec& coarse) const {
    if (coarse.d_ != d_) return false;
    for (int i = 0; i < d_; ++i)
      if (m_[i] % coarse.m_[i] != 0) return false;
    return true;
  }

  bool operator==(const GridSpec& o) const {
    if (d_ != o.d_) return false;
    for (int i = 0; i < d_; ++i)
      if (m_[i] != o.m_[i]) return false;
    return true;
  }

 private:
  int d_;
  std::array<int, 2> m_;
};

}  // namespace oscfield
