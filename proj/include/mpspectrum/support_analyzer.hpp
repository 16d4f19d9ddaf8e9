#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "interval_union.hpp"
#include "master_solver.hpp"
#include "measure.hpp"
#include "numerics.hpp"
#include "parallel.hpp"

namespace mpspectrum {

struct HCurvePoint {
  double h = 0.0;
  double m_B = 0.0;
  double x = 0.0;
  double x1 = 0.0;
  double x2 = 0.0;
  double x3 = 0.0;
};

enum class EdgeSide { left_endpoint, right_endpoint };

inline const char* to_string(EdgeSide s) { return s == EdgeSide::left_endpoint ? "left" : "right"; }

struct EdgeRecord {
  double h0 = 0.0;
  double x0 = 0.0;
  EdgeSide side = EdgeSide::left_endpoint;
  double x2 = 0.0;
  double q_prime = 0.0;

  bool operator==(const EdgeRecord&) const = default;
};

/// What bounds an h-domain component on one side.
enum class EndKind { window, b_atom, b_continuous, a_excluded };

struct HComponent {
  double lo, hi;
  EndKind lo_kind, hi_kind;
};

/// Maximal h-interval on which x(h) increases, with its image in x.
struct IncreasingPiece {
  Interval h;
  Interval image;

  bool operator==(const IncreasingPiece&) const = default;
};

struct SupportReport {
  IntervalUnion support;
  IntervalUnion complement;
  std::vector<AtomEntry> atoms;
  std::vector<EdgeRecord> edges;
  std::vector<IncreasingPiece> h_intervals_increasing;
  std::vector<std::string> degenerate_flags;
  IntervalUnion h_domain;
  Interval window{0.0, 0.0};

  bool operator==(const SupportReport&) const = default;
};

struct SupportOptions {
  int grid_points = 2048;
  int refine = 4;
  double flat_tol = 1e-10;
  double root_tol = 1e-14;
  /// Search window for h; derived from the inputs when absent.
  std::optional<Interval> window;
};

class DegenerateEdgeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string fmt_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

/// Membership of m in {0} ∪ {m ≠ 0 : -1/m ∉ supp(A)}; every representable A
/// has compact support, so m = 0 always qualifies.
inline bool in_E_A(const Measure& A, double m) {
  if (m == 0.0) return true;
  return !A.support().contains_closed(-1.0 / m);
}

class SupportAnalyzer {
 public:
  explicit SupportAnalyzer(const MasterEquation& eq, SupportOptions opts = {}) : eq_(eq), opts_(std::move(opts)) {}

  const MasterEquation& equation() const noexcept { return eq_; }

  bool in_H(double h) const {
    if (eq_.B().support().contains_closed(h)) return false;
    return in_E_A(eq_.A(), eq_.B().stieltjes_real(h));
  }

  /// x(h) and its first three derivatives.  Throws DomainError off the h-domain.
  HCurvePoint h_curve(double h) const {
    if (!std::isfinite(h)) throw std::invalid_argument("h_curve: non-finite h");
    if (!in_H(h)) throw DomainError("h_curve: h = " + fmt_num(h) + " is outside the h-domain");
    return curve_unchecked(h);
  }

  /// The h-domain within `window` as tagged open components.
  std::vector<HComponent> h_components(const Interval& window) const {
    const Measure& B = eq_.B();
    std::vector<HComponent> comps;
    for (const auto& gap : B.support().complement().intersect(window, false)) {
      HComponent c{gap.lo, gap.hi, end_kind(gap.lo, window), end_kind(gap.hi, window)};
      for (const auto& piece : split_by_A(c)) comps.push_back(piece);
    }
    return comps;
  }

  IntervalUnion h_domain(const Interval& window) const {
    std::vector<Interval> v;
    for (const auto& c : h_components(window)) v.push_back({c.lo, c.hi});
    return IntervalUnion(std::move(v), false);
  }

  /// Initial window, widened until x1 > 0.9 at both ends.
  Interval default_window() const {
    const auto& sb = eq_.B().support();
    const double base = 1.0 + eq_.gamma() * std::sqrt(eq_.A().second_moment());
    double margin = base;
    for (int i = 0; i < 60; ++i, margin *= 2.0) {
      const Interval w{sb.lower() - margin, sb.upper() + margin};
      if (tail_ok(w.lo) && tail_ok(w.hi)) return w;
    }
    throw NumericalError("support: could not find a window with x1 > 0.9 at both ends", margin, 0.0);
  }

  EdgeRecord edge_behavior(double h0) const {
    const HCurvePoint p = h_curve(h0);
    if (std::abs(p.x1) > 1e-6) throw std::invalid_argument("edge_behavior: x1(h0) = " + fmt_num(p.x1) + " is not 0");
    if (std::abs(p.x2) < 1e-8)
      throw DegenerateEdgeError("edge_behavior: x2(h0) = " + fmt_num(p.x2) + " vanishes; inflection, not an edge");
    EdgeRecord e;
    e.h0 = h0;
    e.x0 = p.x;
    e.x2 = p.x2;
    e.side = p.x2 < 0.0 ? EdgeSide::left_endpoint : EdgeSide::right_endpoint;
    const double q2 = eq_.B().inverse_moment(h0, 2);
    e.q_prime = std::sqrt(std::abs(2.0 / p.x2)) * q2 / std::numbers::pi;
    return e;
  }

  SupportReport determine_support() const {
    SupportReport rep;
    const Measure& A = eq_.A();
    const Measure& B = eq_.B();
    if (B.is_dirac()) rep.degenerate_flags.push_back("degenerate-B outside model assumptions (B is a single atom)");
    rep.window = opts_.window ? *opts_.window : default_window();
    const auto comps = h_components(rep.window);
    {
      std::vector<Interval> v;
      for (const auto& c : comps) v.push_back({c.lo, c.hi});
      rep.h_domain = IntervalUnion(std::move(v), false);
    }
    rep.atoms = eq_.atom_masses();
    if (comps.empty()) {
      rep.support = IntervalUnion({{-kInf, kInf}});
      rep.complement = IntervalUnion();
      return rep;
    }

    std::vector<ScanResult> scans(comps.size());
    parallel_for(comps.size(), [&](std::size_t i) { scans[i] = scan(comps[i]); });

    std::vector<Interval> images;
    for (std::size_t i = 0; i < comps.size(); ++i) {
      const auto& c = comps[i];
      for (const auto& piece : scans[i].pieces) {
        rep.h_intervals_increasing.push_back(piece);
        images.push_back(piece.image);
      }
      for (double h0 : scans[i].roots) {
        try {
          rep.edges.push_back(edge_behavior(h0));
        } catch (const DegenerateEdgeError& e) {
          rep.degenerate_flags.push_back(std::string("degenerate stationary point: ") + e.what());
        }
      }
      for (int side = 0; side < 2; ++side) {
        const EndKind k = side == 0 ? c.lo_kind : c.hi_kind;
        const double h0 = side == 0 ? c.lo : c.hi;
        if (k != EndKind::b_atom) continue;
        const double limit = 1.0 - eq_.gamma() * (1.0 - A.atom_mass(0.0)) / B.atom_mass(h0);
        rep.degenerate_flags.push_back("boundary point x0 = " + fmt_num(h0) + " reached as h -> " + fmt_num(h0) +
                                       (side == 0 ? "+" : "-") + " at an atom of B; x1 limit " + fmt_num(limit));
      }
    }

    std::sort(images.begin(), images.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
    std::vector<Interval> supp;
    double left = -kInf;
    for (const auto& im : images) {
      if (im.lo < left)
        rep.degenerate_flags.push_back("images of increasing pieces overlap near x = " + fmt_num(im.lo));
      if (im.lo > left)
        supp.push_back({left, im.lo});
      else if (im.lo == left && left > -kInf)
        supp.push_back({left, left});  // two images meet at a point that no h reaches
      left = std::max(left, im.hi);
    }
    if (left < kInf) supp.push_back({left, kInf});
    rep.support = IntervalUnion(std::move(supp), true);
    rep.complement = IntervalUnion(images, false);

    for (const auto& a : rep.atoms)
      if (!rep.support.contains_closed(a.location))
        rep.degenerate_flags.push_back("atom at " + fmt_num(a.location) + " falls outside the computed support");
    for (const auto& e : rep.edges) {
      bool boundary = false;
      for (const auto& s : rep.support)
        boundary = boundary || std::abs(s.lo - e.x0) <= 1e-9 * (1.0 + std::abs(e.x0)) ||
                   std::abs(s.hi - e.x0) <= 1e-9 * (1.0 + std::abs(e.x0));
      if (!boundary) rep.degenerate_flags.push_back("edge x0 = " + fmt_num(e.x0) + " is not a support boundary");
      if (!B.in_D(e.x0)) rep.degenerate_flags.push_back("edge x0 = " + fmt_num(e.x0) + " lies outside D");
    }
    return rep;
  }

  /// Points of the x(h) curve on each h-domain component, for plotting.
  std::vector<HCurvePoint> sample_curve(const Interval& window, int per_component) const {
    std::vector<HCurvePoint> out;
    for (const auto& c : h_components(window)) {
      for (const double h : grid(c, per_component)) {
        const auto p = curve_unchecked(h);
        if (std::isfinite(p.x) && std::isfinite(p.x1)) out.push_back(p);
      }
    }
    return out;
  }

  /// Cosine-clustered interior grid of a component.
  static std::vector<double> grid(const HComponent& c, int n) {
    std::vector<double> g(n);
    for (int i = 0; i < n; ++i) {
      const double t = 0.5 * (1.0 - std::cos(std::numbers::pi * (i + 0.5) / n));
      g[i] = c.lo + (c.hi - c.lo) * t;
    }
    return g;
  }

  HCurvePoint curve_unchecked(double h) const {
    const Measure& B = eq_.B();
    const double g = eq_.gamma();
    HCurvePoint p;
    p.h = h;
    const double q1 = B.inverse_moment(h, 1);
    const double q2 = B.inverse_moment(h, 2);
    const double q3 = B.inverse_moment(h, 3);
    const double q4 = B.inverse_moment(h, 4);
    const auto P = eq_.a_powers(cplx(q1, 0.0), 4);
    const double p1 = g * P[1].real(), p2 = g * P[2].real(), p3 = g * P[3].real(), p4 = g * P[4].real();
    p.m_B = q1;
    p.x = h + p1;
    p.x1 = 1.0 - p2 * q2;
    p.x2 = 2.0 * p3 * q2 * q2 - 2.0 * p2 * q3;
    p.x3 = -6.0 * p4 * q2 * q2 * q2 + 12.0 * p3 * q2 * q3 - 6.0 * p2 * q4;
    return p;
  }

 private:
  struct ScanResult {
    std::vector<IncreasingPiece> pieces;
    std::vector<double> roots;
  };

  EndKind end_kind(double v, const Interval& window) const {
    if (v == window.lo || v == window.hi || std::isinf(v)) return EndKind::window;
    return eq_.B().is_atom(v) ? EndKind::b_atom : EndKind::b_continuous;
  }

  static double nudge(double v) { return 1e-12 * std::max(1.0, std::abs(v)); }

  bool tail_ok(double h) const {
    try {
      if (!in_H(h)) return false;
      return curve_unchecked(h).x1 > 0.9;
    } catch (const std::exception&) {
      return false;
    }
  }

  /// Removes the h-sets where -1/m_B(h) lands in supp(A).
  std::vector<HComponent> split_by_A(const HComponent& c) const {
    const Measure& B = eq_.B();
    auto mB = [&](double h) { return B.stieltjes_real(h); };
    const double hl = c.lo + nudge(c.lo), hr = c.hi - nudge(c.hi);
    if (!(hl < hr)) return {};
    const double ml = mB(hl), mr = mB(hr);

    // m-sets {m : -1/m ∈ [a1, a2]} for each piece of supp(A).
    std::vector<Interval> msets;
    for (const auto& iv : eq_.A().support()) {
      const double a1 = iv.lo, a2 = iv.hi;
      if (a1 > 0.0 || a2 < 0.0) {
        msets.push_back({-1.0 / a1, -1.0 / a2});
      } else {
        if (a2 > 0.0) msets.push_back({-kInf, -1.0 / a2});
        if (a1 < 0.0) msets.push_back({-1.0 / a1, kInf});
      }
    }
    std::vector<Interval> cuts;
    for (const auto& ms : msets) {
      if (ms.hi < ml || ms.lo > mr) continue;
      const double h1 = ms.lo <= ml ? c.lo : find_root([&](double h) { return mB(h) - ms.lo; }, hl, hr, 1e-14);
      const double h2 = ms.hi >= mr ? c.hi : find_root([&](double h) { return mB(h) - ms.hi; }, hl, hr, 1e-14);
      cuts.push_back({h1, h2});
    }
    std::sort(cuts.begin(), cuts.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
    std::vector<HComponent> out;
    double lo = c.lo;
    EndKind lo_kind = c.lo_kind;
    for (const auto& cut : cuts) {
      if (cut.lo > lo) out.push_back({lo, cut.lo, lo_kind, EndKind::a_excluded});
      if (cut.hi > lo) {
        lo = cut.hi;
        lo_kind = EndKind::a_excluded;
      }
    }
    if (lo < c.hi) out.push_back({lo, c.hi, lo_kind, c.hi_kind});
    return out;
  }

  /// One-sided limit of x(h) at a component end.
  double end_limit(const HComponent& c, bool at_lo) const {
    const EndKind k = at_lo ? c.lo_kind : c.hi_kind;
    const double h = at_lo ? c.lo : c.hi;
    switch (k) {
      case EndKind::window: return at_lo ? -kInf : kInf;
      case EndKind::b_atom: return h;
      default: {
        const double hh = at_lo ? h + nudge(h) : h - nudge(h);
        return curve_unchecked(hh).x;
      }
    }
  }

  ScanResult scan(const HComponent& c) const {
    const double tol = opts_.flat_tol;
    auto g = [&](double h) {
      const double v = curve_unchecked(h).x1;
      return std::isfinite(v) ? v - tol : -1.0;
    };
    const auto hs = grid(c, opts_.grid_points);
    std::vector<double> gv(hs.size());
    for (std::size_t i = 0; i < hs.size(); ++i) gv[i] = g(hs[i]);

    ScanResult res;
    std::vector<double> roots;
    for (std::size_t i = 0; i + 1 < hs.size(); ++i) {
      if ((gv[i] > 0.0) == (gv[i + 1] > 0.0)) continue;
      // Refine the cell before bracketing so close root pairs separate.
      std::vector<double> sh{hs[i]}, sv{gv[i]};
      for (int j = 1; j < opts_.refine; ++j) {
        const double h = hs[i] + (hs[i + 1] - hs[i]) * j / opts_.refine;
        sh.push_back(h);
        sv.push_back(g(h));
      }
      sh.push_back(hs[i + 1]);
      sv.push_back(gv[i + 1]);
      for (std::size_t j = 0; j + 1 < sh.size(); ++j) {
        if ((sv[j] > 0.0) == (sv[j + 1] > 0.0)) continue;
        if (sv[j] == 0.0 || sv[j + 1] == 0.0) {
          roots.push_back(sv[j] == 0.0 ? sh[j] : sh[j + 1]);
          continue;
        }
        roots.push_back(find_root(g, sh[j], sh[j + 1], opts_.root_tol * std::max(1.0, std::abs(sh[j]))));
      }
    }
    std::sort(roots.begin(), roots.end());
    roots.erase(std::unique(roots.begin(), roots.end()), roots.end());

    // Pieces between consecutive breakpoints, classified by a probe inside.
    std::vector<double> bps{c.lo};
    bps.insert(bps.end(), roots.begin(), roots.end());
    bps.push_back(c.hi);
    for (std::size_t j = 0; j + 1 < bps.size(); ++j) {
      const double a = bps[j], b = bps[j + 1];
      // Use a grid point inside (a, b) when one exists; otherwise the midpoint.
      double probe_val;
      auto it = std::upper_bound(hs.begin(), hs.end(), a);
      if (it != hs.end() && *it < b)
        probe_val = gv[static_cast<std::size_t>(it - hs.begin())];
      else
        probe_val = g(0.5 * (a + b));
      if (!(probe_val > 0.0)) continue;
      const double xa = j == 0 ? end_limit(c, true) : curve_unchecked(a).x;
      const double xb = j + 2 == bps.size() ? end_limit(c, false) : curve_unchecked(b).x;
      res.pieces.push_back({{a, b}, {xa, xb}});
    }
    res.roots = std::move(roots);
    return res;
  }

  MasterEquation eq_;
  SupportOptions opts_;
};

inline SupportReport determine_support(const Measure& A, const Measure& B, double gamma,
                                       const SupportOptions& opts = {}) {
  return SupportAnalyzer(MasterEquation(A, B, gamma), opts).determine_support();
}

}  // namespace mpspectrum
