#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mfbo {

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
  double width() const { return hi - lo; }
  double mid() const { return 0.5 * (lo + hi); }
};

/// Axis-aligned box search domain.
class BoxDomain {
 public:
  explicit BoxDomain(std::vector<Interval> bounds) : bounds_(std::move(bounds)) {
    if (bounds_.empty()) throw std::invalid_argument("BoxDomain: dimension must be >= 1");
    for (const Interval& b : bounds_) {
      if (!(b.lo < b.hi)) throw std::invalid_argument("BoxDomain: lower bound must be < upper bound");
    }
  }

  static BoxDomain unit_cube(int dim) {
    return BoxDomain(std::vector<Interval>(static_cast<std::size_t>(dim), Interval{0.0, 1.0}));
  }

  int dimension() const { return static_cast<int>(bounds_.size()); }
  const std::vector<Interval>& bounds() const { return bounds_; }

  bool contains(std::span<const double> x) const {
    if (x.size() != bounds_.size()) return false;
    for (std::size_t k = 0; k < bounds_.size(); ++k) {
      if (x[k] < bounds_[k].lo || x[k] > bounds_[k].hi) return false;
    }
    return true;
  }

 private:
  std::vector<Interval> bounds_;
};

/// One node (h, i) of the infinite binary partition tree over a box domain.
///
/// The node identity is the branch path from the root, which stays exact at
/// any depth; the conventional 1-based index i in [1, 2^h] is derived from it.
/// Cells are half-open on the upper side except where they touch the domain's
/// outer boundary, so every point belongs to exactly one cell per depth.
class Cell {
 public:
  static Cell root(const BoxDomain& domain) {
    Cell c;
    c.bounds_ = domain.bounds();
    c.at_upper_.assign(c.bounds_.size(), true);
    return c;
  }

  /// Children (h+1, 2i-1) and (h+1, 2i). The coordinate of maximum width is
  /// halved at its midpoint (ties broken by lowest coordinate index); the
  /// left child takes the lower half.
  std::pair<Cell, Cell> split() const {
    std::size_t k = 0;
    for (std::size_t j = 1; j < bounds_.size(); ++j) {
      if (bounds_[j].width() > bounds_[k].width()) k = j;
    }
    const double mid = bounds_[k].mid();

    Cell left = *this;
    Cell right = *this;
    left.depth_ = right.depth_ = depth_ + 1;
    left.path_.push_back(false);
    right.path_.push_back(true);
    left.bounds_[k].hi = mid;
    left.at_upper_[k] = false;
    right.bounds_[k].lo = mid;
    return {std::move(left), std::move(right)};
  }

  /// Fixed representative point: the coordinate-wise midpoint.
  std::vector<double> representative() const {
    std::vector<double> x(bounds_.size());
    for (std::size_t k = 0; k < bounds_.size(); ++k) x[k] = bounds_[k].mid();
    return x;
  }

  int depth() const { return depth_; }
  const std::vector<Interval>& bounds() const { return bounds_; }
  const std::vector<bool>& path() const { return path_; }

  /// 1-based index within the depth level. Exact only while it fits in 62
  /// bits; deeper nodes must use index_decimal().
  std::uint64_t index() const {
    if (depth_ > 62) throw std::logic_error("Cell::index: depth > 62, use index_decimal()");
    std::uint64_t i = 0;
    for (bool bit : path_) i = (i << 1) | static_cast<std::uint64_t>(bit);
    return i + 1;
  }

  /// Exact decimal representation of the 1-based index at any depth.
  std::string index_decimal() const {
    // Accumulate index-1 (the path bits read as a binary number), which only
    // needs scale-and-add, then add the final 1.
    std::vector<std::uint8_t> digits{0};  // little-endian
    auto scale_add = [&digits](unsigned mul, unsigned add) {
      unsigned carry = add;
      for (std::uint8_t& d : digits) {
        const unsigned v = d * mul + carry;
        d = static_cast<std::uint8_t>(v % 10);
        carry = v / 10;
      }
      while (carry != 0) {
        digits.push_back(static_cast<std::uint8_t>(carry % 10));
        carry /= 10;
      }
    };
    for (bool bit : path_) scale_add(2, bit ? 1u : 0u);
    scale_add(1, 1);
    std::string out;
    for (auto it = digits.rbegin(); it != digits.rend(); ++it) out.push_back(static_cast<char>('0' + *it));
    return out;
  }

  /// Stable identity usable as a hash key across trees sharing the partition.
  std::string key() const {
    std::string k = std::to_string(depth_);
    k.push_back(':');
    for (bool bit : path_) k.push_back(bit ? '1' : '0');
    return k;
  }

  bool is_ancestor_or_self_of(const Cell& other) const {
    if (depth_ > other.depth_) return false;
    for (int k = 0; k < depth_; ++k) {
      if (path_[static_cast<std::size_t>(k)] != other.path_[static_cast<std::size_t>(k)]) return false;
    }
    return true;
  }

  /// Membership under the half-open convention.
  bool contains(std::span<const double> x) const {
    if (x.size() != bounds_.size()) return false;
    for (std::size_t k = 0; k < bounds_.size(); ++k) {
      if (x[k] < bounds_[k].lo) return false;
      if (at_upper_[k] ? x[k] > bounds_[k].hi : x[k] >= bounds_[k].hi) return false;
    }
    return true;
  }

 private:
  int depth_ = 0;
  std::vector<bool> path_;
  std::vector<Interval> bounds_;
  std::vector<bool> at_upper_;  // per coordinate: cell's upper face lies on the domain boundary
};

}  // namespace mfbo
