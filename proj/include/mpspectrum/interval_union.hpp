#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace mpspectrum {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Interval {
  double lo;
  double hi;

  bool operator==(const Interval&) const = default;
  double length() const { return hi - lo; }
  bool is_point() const { return lo == hi; }
};

/// Sorted, pairwise disjoint union of intervals with possibly infinite ends.
///
/// Whether the pieces are open or closed is decided by the owner: a support
/// is closed, the complement and the h-domain are open.  The flag given at
/// construction only controls whether touching pieces are merged.
class IntervalUnion {
 public:
  IntervalUnion() = default;

  explicit IntervalUnion(std::vector<Interval> pieces, bool closed = true) {
    for (const auto& p : pieces) {
      if (std::isnan(p.lo) || std::isnan(p.hi) || p.lo > p.hi)
        throw std::invalid_argument("IntervalUnion: malformed interval");
    }
    std::sort(pieces.begin(), pieces.end(),
              [](const Interval& a, const Interval& b) { return a.lo < b.lo || (a.lo == b.lo && a.hi < b.hi); });
    for (const auto& p : pieces) {
      if (!closed && p.lo == p.hi) continue;  // an open point is empty
      if (!pieces_.empty()) {
        Interval& last = pieces_.back();
        const bool joins = closed ? p.lo <= last.hi : p.lo < last.hi;
        if (joins) {
          last.hi = std::max(last.hi, p.hi);
          continue;
        }
      }
      pieces_.push_back(p);
    }
  }

  const std::vector<Interval>& intervals() const noexcept { return pieces_; }
  std::size_t size() const noexcept { return pieces_.size(); }
  bool empty() const noexcept { return pieces_.empty(); }
  const Interval& operator[](std::size_t i) const { return pieces_[i]; }
  auto begin() const { return pieces_.begin(); }
  auto end() const { return pieces_.end(); }

  bool contains_closed(double x) const {
    for (const auto& p : pieces_)
      if (x >= p.lo && x <= p.hi) return true;
    return false;
  }

  bool contains_open(double x) const {
    for (const auto& p : pieces_)
      if (x > p.lo && x < p.hi) return true;
    return false;
  }

  /// Index of the piece holding x (closed test), or -1.
  int locate(double x) const {
    for (std::size_t i = 0; i < pieces_.size(); ++i)
      if (x >= pieces_[i].lo && x <= pieces_[i].hi) return static_cast<int>(i);
    return -1;
  }

  double lower() const { return pieces_.empty() ? kInf : pieces_.front().lo; }
  double upper() const { return pieces_.empty() ? -kInf : pieces_.back().hi; }

  /// Distance from x to the union (0 inside).
  double distance(double x) const {
    double d = kInf;
    for (const auto& p : pieces_) {
      if (x >= p.lo && x <= p.hi) return 0.0;
      d = std::min(d, x < p.lo ? p.lo - x : x - p.hi);
    }
    return d;
  }

  /// Gaps of the union on the real line, as open pieces.
  IntervalUnion complement() const {
    std::vector<Interval> out;
    double left = -kInf;
    for (const auto& p : pieces_) {
      if (p.lo > left) out.push_back({left, p.lo});
      left = p.hi;
    }
    if (left < kInf) out.push_back({left, kInf});
    return IntervalUnion(std::move(out), false);
  }

  IntervalUnion intersect(const Interval& window, bool closed = true) const {
    std::vector<Interval> out;
    for (const auto& p : pieces_) {
      const double lo = std::max(p.lo, window.lo), hi = std::min(p.hi, window.hi);
      if (lo < hi || (closed && lo == hi)) out.push_back({lo, hi});
    }
    return IntervalUnion(std::move(out), closed);
  }

  /// Set difference ignoring endpoint openness: pieces of *this not covered by
  /// the interiors of `other`'s pieces.
  IntervalUnion subtract(const IntervalUnion& other, bool closed = true) const {
    std::vector<Interval> cur(pieces_.begin(), pieces_.end());
    for (const auto& cut : other.pieces_) {
      std::vector<Interval> next;
      for (const auto& p : cur) {
        if (cut.hi <= p.lo || cut.lo >= p.hi) {
          next.push_back(p);
          continue;
        }
        if (cut.lo > p.lo) next.push_back({p.lo, cut.lo});
        if (cut.hi < p.hi) next.push_back({cut.hi, p.hi});
      }
      cur.swap(next);
    }
    return IntervalUnion(std::move(cur), closed);
  }

  IntervalUnion unite(const IntervalUnion& other, bool closed = true) const {
    std::vector<Interval> all(pieces_.begin(), pieces_.end());
    all.insert(all.end(), other.pieces_.begin(), other.pieces_.end());
    return IntervalUnion(std::move(all), closed);
  }

  bool operator==(const IntervalUnion&) const = default;

 private:
  std::vector<Interval> pieces_;
};

}  // namespace mpspectrum
