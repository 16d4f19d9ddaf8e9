#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "master_solver.hpp"
#include "parallel.hpp"
#include "support_analyzer.hpp"

namespace mpspectrum {

struct DensityGrid {
  std::vector<DensityPoint> entries;
};

/// Density of F on `count` equally spaced points of [lo, hi].
inline DensityGrid density_grid(const MasterEquation& eq, double lo, double hi, std::size_t count,
                                const SolverConfig& cfg) {
  DensityGrid g;
  g.entries.resize(count);
  parallel_for(count, [&](std::size_t i) {
    const double x = count == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
    g.entries[i] = eq.density_at(x, cfg);
  });
  return g;
}

/// Distribution function of F assembled from the density on each support
/// interval plus the atoms.  Support intervals are split at the atoms and
/// part endpoints of B, where the density may peak or blow up; each piece is
/// integrated by adaptive Simpson in the angle variable of
/// x = a + (b - a)(1 - cos θ)/2, which absorbs square-root edges and
/// inverse-square-root endpoint singularities.
class SpectralCdf {
 public:
  SpectralCdf(const MasterEquation& eq, const SupportReport& report, const SolverConfig& cfg = {},
              double tol = 1e-7)
      : atoms_(report.atoms) {
    std::vector<double> marks;
    for (const auto& b : eq.B().atoms()) marks.push_back(b.location);
    for (const auto& pc : eq.B().pieces()) {
      marks.push_back(pc.part->lo());
      marks.push_back(pc.part->hi());
    }
    for (const auto& iv : report.support) {
      if (!(iv.hi > iv.lo)) continue;
      if (!std::isfinite(iv.lo) || !std::isfinite(iv.hi))
        throw std::invalid_argument("SpectralCdf: unbounded support interval");
      std::vector<double> cuts{iv.lo, iv.hi};
      for (double m : marks)
        if (m > iv.lo && m < iv.hi) cuts.push_back(m);
      std::sort(cuts.begin(), cuts.end());
      cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
      for (std::size_t i = 0; i + 1 < cuts.size(); ++i) segments_.push_back(build(eq, cfg, cuts[i], cuts[i + 1], tol));
    }
    for (const auto& s : segments_) continuous_mass_ += s.cum.back();
    for (const auto& a : atoms_) atom_mass_ += a.weight;
  }

  double continuous_mass() const { return continuous_mass_; }
  double atom_mass() const { return atom_mass_; }
  double total_mass() const { return continuous_mass_ + atom_mass_; }

  /// F(x), right-continuous, clamped to [0, 1].
  double operator()(double x) const {
    double c = 0.0;
    for (const auto& a : atoms_)
      if (a.location <= x) c += a.weight;
    for (const auto& s : segments_) {
      if (x >= s.hi) {
        c += s.cum.back();
      } else if (x > s.lo) {
        auto it = std::upper_bound(s.x.begin(), s.x.end(), x);
        const std::size_t j = static_cast<std::size_t>(it - s.x.begin()) - 1;
        const double t = (x - s.x[j]) / (s.x[j + 1] - s.x[j]);
        c += s.cum[j] + t * (s.cum[j + 1] - s.cum[j]);
      }
    }
    return std::clamp(c, 0.0, 1.0);
  }

  /// The sampled density values, ascending in x.
  DensityGrid grid() const {
    DensityGrid g;
    for (const auto& s : segments_) g.entries.insert(g.entries.end(), s.points.begin(), s.points.end());
    return g;
  }

 private:
  struct Segment {
    double lo = 0.0, hi = 0.0;
    std::vector<double> x, cum;
    std::vector<DensityPoint> points;
  };

  struct Node {
    double theta;
    DensityPoint d;
    double g;
  };

  static Segment build(const MasterEquation& eq, const SolverConfig& cfg, double a, double b, double tol) {
    constexpr int kCells = 32;
    constexpr int kMaxDepth = 10;
    const double half = 0.5 * (b - a);
    auto eval = [&](double th) {
      Node n;
      n.theta = th;
      const double x = std::clamp(a + half * (1.0 - std::cos(th)), a, b);
      n.d = eq.density_at(x, cfg);
      const double s = std::sin(th);
      n.g = (th <= 0.0 || th >= std::numbers::pi) ? 0.0 : n.d.f * half * s;
      return n;
    };
    // Leaves of each cell, as (left, mid, right) triples in θ order.
    std::vector<std::vector<std::array<Node, 3>>> leaves(kCells);
    const double cell_tol = tol / kCells;
    parallel_for(kCells, [&](std::size_t c) {
      const double t0 = std::numbers::pi * c / kCells, t1 = std::numbers::pi * (c + 1) / kCells;
      auto recurse = [&](auto&& self, const Node& l, const Node& m, const Node& r, double whole, int depth,
                         double ctol) -> void {
        const Node lm = eval(0.5 * (l.theta + m.theta)), mr = eval(0.5 * (m.theta + r.theta));
        const double h = r.theta - l.theta;
        const double left = h / 12.0 * (l.g + 4.0 * lm.g + m.g), right = h / 12.0 * (m.g + 4.0 * mr.g + r.g);
        if (depth >= kMaxDepth || std::abs(left + right - whole) <= 15.0 * ctol) {
          leaves[c].push_back({l, lm, m});
          leaves[c].push_back({m, mr, r});
          return;
        }
        self(self, l, lm, m, left, depth + 1, 0.5 * ctol);
        self(self, m, mr, r, right, depth + 1, 0.5 * ctol);
      };
      const Node l = eval(t0), m = eval(0.5 * (t0 + t1)), r = eval(t1);
      recurse(recurse, l, m, r, (t1 - t0) / 6.0 * (l.g + 4.0 * m.g + r.g), 0, cell_tol);
    });
    Segment s;
    s.lo = a;
    s.hi = b;
    double cum = 0.0;
    auto push = [&](const Node& n, double c) {
      const double x = std::clamp(a + half * (1.0 - std::cos(n.theta)), a, b);
      if (!s.x.empty() && x <= s.x.back()) return;
      s.x.push_back(x);
      s.cum.push_back(c);
      s.points.push_back(n.d);
    };
    for (const auto& cell : leaves) {
      for (const auto& [l, m, r] : cell) {
        const double h = 0.5 * (r.theta - l.theta);
        push(l, cum);
        const double mid = cum + std::max(0.0, h * (5.0 * l.g + 8.0 * m.g - r.g) / 12.0);
        const double whole = cum + h * (l.g + 4.0 * m.g + r.g) / 3.0;
        push(m, std::min(mid, whole));
        cum = std::max(cum, whole);
      }
    }
    if (s.x.empty() || s.x.back() < b) {
      s.x.push_back(b);
      s.cum.push_back(cum);
      s.points.push_back(eq.density_at(b, cfg));
    } else {
      s.cum.back() = cum;
    }
    s.x.front() = a;
    return s;
  }

  std::vector<AtomEntry> atoms_;
  std::vector<Segment> segments_;
  double continuous_mass_ = 0.0;
  double atom_mass_ = 0.0;
};

inline double model_cdf(const Measure& A, const Measure& B, double gamma, const SupportReport& report, double x,
                        const SolverConfig& cfg = {}) {
  return SpectralCdf(MasterEquation(A, B, gamma), report, cfg)(x);
}

}  // namespace mpspectrum
