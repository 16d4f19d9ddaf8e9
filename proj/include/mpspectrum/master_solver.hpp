#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "measure.hpp"
#include "numerics.hpp"

namespace mpspectrum {

struct SolverConfig {
  double damping = 0.5;
  int max_iterations = 20000;
  double residual_tol = 1e-12;
  std::vector<double> continuation_levels = {1.0,  0.3,  0.1,  3e-2, 1e-2, 3e-3, 1e-3, 3e-4,
                                             1e-4, 3e-5, 1e-5, 3e-6, 1e-6, 3e-7, 1e-7};
  std::vector<double> extrapolation_heights = {1e-2, 5e-3, 2.5e-3, 1.25e-3};

  void validate() const {
    if (!(damping > 0.0 && damping <= 1.0)) throw std::invalid_argument("solver: damping must lie in (0, 1]");
    if (max_iterations < 1) throw std::invalid_argument("solver: max_iterations must be positive");
    if (!(residual_tol > 0.0)) throw std::invalid_argument("solver: residual_tol must be positive");
    auto decreasing = [](const std::vector<double>& v) {
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (!(v[i] > 0.0)) return false;
        if (i > 0 && !(v[i] < v[i - 1])) return false;
      }
      return true;
    };
    if (continuation_levels.empty() || !decreasing(continuation_levels))
      throw std::invalid_argument("solver: continuation_levels must be positive and strictly decreasing");
    if (extrapolation_heights.size() < 3 || !decreasing(extrapolation_heights))
      throw std::invalid_argument("solver: need at least 3 positive, strictly decreasing extrapolation_heights");
  }
};

struct SolutionPoint {
  cplx z;
  cplx m;
  double residual = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double one_minus_ab = 0.0;
  int iterations = 0;
};

struct DensityPoint {
  double x = 0.0;
  double f = 0.0;
  double err = 0.0;
  bool in_D = true;
  bool polished = false;
};

class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, cplx best, double residual)
      : std::runtime_error(what), best_(best), residual_(residual) {}
  cplx best_iterate() const noexcept { return best_; }
  double residual() const noexcept { return residual_; }

 private:
  cplx best_;
  double residual_;
};

/// A converged point violated 1 - αβ > 0, i.e. the iterate left the physical branch.
class InternalConsistencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The fixed-point problem m = m_B(z - γ ∫ u/(1 + u m) dA(u)) for a fixed
/// triple (A, B, γ).
class MasterEquation {
 public:
  MasterEquation(Measure A, Measure B, double gamma) : A_(std::move(A)), B_(std::move(B)), gamma_(gamma) {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw std::invalid_argument("gamma must be a positive number");
    if (!std::isfinite(A_.second_moment())) throw std::invalid_argument("A must have a finite second moment");
  }

  const Measure& A() const noexcept { return A_; }
  const Measure& B() const noexcept { return B_; }
  double gamma() const noexcept { return gamma_; }

  /// ∫ (u/(1 + u m))^k dA(u) for k = 1..kmax (index k), without the γ factor.
  /// m is complex in the upper half-plane or real with -1/m off supp(A).
  std::array<cplx, 5> a_powers(cplx m, int kmax) const {
    std::array<cplx, 5> out{};
    for (const auto& at : A_.atoms()) {
      const cplx r = at.location / (1.0 + at.location * m);
      cplx p = 1.0;
      for (int k = 1; k <= kmax; ++k) out[k] += at.weight * (p *= r);
    }
    for (const auto& pc : A_.pieces()) {
      const auto& part = *pc.part;
      if (std::abs(m) * part.max_abs() < 0.5) {
        for (int k = 1; k <= kmax; ++k) {
          auto g = [&](double u) -> cplx { return part.pdf(u) * std::pow(u / (1.0 + u * m), k); };
          QuadratureOptions o;
          o.abs_tol = 1e-14;
          o.rel_tol = 1e-13;
          out[k] += pc.weight * integrate_adaptive<cplx>(g, part.lo(), part.hi(), o).value;
        }
        continue;
      }
      // u/(1+um) = a - c/(u - ζ) with a = 1/m, c = 1/m², ζ = -1/m.
      const cplx a = 1.0 / m, c = a * a, zeta = -a;
      std::array<cplx, 5> G{};
      G[0] = 1.0;
      for (int j = 1; j <= kmax; ++j) G[j] = part.cauchy(zeta, j);
      for (int k = 1; k <= kmax; ++k) {
        cplx s = 0.0;
        double binom = 1.0;
        for (int j = 0; j <= k; ++j) {
          s += binom * std::pow(a, k - j) * std::pow(-c, j) * G[j];
          binom = binom * (k - j) / (j + 1);
        }
        out[k] += pc.weight * s;
      }
    }
    return out;
  }

  /// ∫ |u/(1 + u m)|² dA(u) for Im m > 0.
  double a_abs2(cplx m) const {
    double s = 0.0;
    for (const auto& at : A_.atoms()) s += at.weight * std::norm(at.location / (1.0 + at.location * m));
    for (const auto& pc : A_.pieces()) {
      const auto& part = *pc.part;
      if (std::abs(m) * part.max_abs() < 0.5) {
        auto g = [&](double u) { return part.pdf(u) * std::norm(u / (1.0 + u * m)); };
        QuadratureOptions o;
        o.abs_tol = 1e-14;
        o.rel_tol = 1e-13;
        s += pc.weight * integrate_adaptive(g, part.lo(), part.hi(), o).value;
        continue;
      }
      const cplx a = 1.0 / m, c = a * a, zeta = -a;
      const cplx G1 = part.cauchy(zeta, 1);
      s += pc.weight * (std::norm(a) - 2.0 * std::real(std::conj(a) * c * G1) + std::norm(c) * G1.imag() / zeta.imag());
    }
    return s;
  }

  /// Subordination point w = z - γ ∫ u/(1+um) dA.
  cplx subordination(cplx z, cplx m) const { return z - gamma_ * a_powers(m, 1)[1]; }

  /// Right-hand side m_B(w(z, m)).
  cplx rhs(cplx z, cplx m) const { return B_.transform(subordination(z, m), 1); }

  double residual(cplx z, cplx m) const { return std::abs(m - rhs(z, m)); }

  /// Solve at z (Im z > 0), continuing down from the configured levels.
  SolutionPoint solve_at(cplx z, const SolverConfig& cfg, std::optional<cplx> init = std::nullopt) const {
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) throw std::invalid_argument("solve_at: non-finite z");
    if (!(z.imag() > 0.0)) throw std::invalid_argument("solve_at: need Im z > 0");
    cfg.validate();
    std::vector<double> path;
    for (double y : cfg.continuation_levels)
      if (y > z.imag()) path.push_back(y);
    path.push_back(z.imag());
    cplx m = init ? *init : B_.transform(cplx(z.real(), path.front()), 1);
    if (!(m.imag() > 0.0) || !std::isfinite(std::abs(m))) m = cplx(0.0, 1.0);
    int iterations = 0;
    for (double y : path) {
      auto [mm, it] = iterate(cplx(z.real(), y), m, cfg);
      m = mm;
      iterations += it;
    }
    return diagnose(z, m, iterations);
  }

  /// Solve at z starting from a nearby solution (no continuation).
  SolutionPoint solve_from(cplx z, cplx m0, const SolverConfig& cfg) const {
    auto [m, it] = iterate(z, m0, cfg);
    return diagnose(z, m, it);
  }

  /// f(x) = Im m(x + i0)/π by extrapolation over cfg.extrapolation_heights,
  /// then polished on the real axis where possible.
  DensityPoint density_at(double x, const SolverConfig& cfg) const {
    cfg.validate();
    DensityPoint out;
    out.x = x;
    out.in_D = B_.in_D(x);
    // Near sharp features the configured heights are too coarse for the
    // estimate to vouch for the polished value; retry on scaled-down heights.
    for (const double scale : {1.0, 1e-2, 1e-4}) {
      std::vector<double> hs = cfg.extrapolation_heights;
      for (double& h : hs) h *= scale;
      const auto est = extrapolate(x, hs, cfg);
      if (scale == 1.0) {
        out.err = est.im.error / std::numbers::pi;
        out.f = est.im.limit < est.im.error ? 0.0 : est.im.limit / std::numbers::pi;
      }
      if (!out.in_D) return out;
      const cplx m_est(est.re.limit, std::max(est.im.limit, 0.0));
      const auto pol = polish(x, m_est);
      if (!pol) continue;
      const double tol = std::max(50.0 * std::max(est.im.error, est.re.error), 0.05 * (1.0 + std::abs(m_est)));
      if (std::abs(*pol - m_est) <= tol) {
        out.f = std::max(0.0, pol->imag()) / std::numbers::pi;
        out.err = std::min(out.err, 1e-10 * (1.0 + std::abs(*pol)));
        out.polished = true;
        return out;
      }
    }
    return out;
  }

  /// Atoms of F: b with B({b}) - γ(1 - A({0})) > 0.
  std::vector<AtomEntry> atom_masses() const {
    std::vector<AtomEntry> out;
    const double loss = gamma_ * (1.0 - A_.atom_mass(0.0));
    for (const auto& b : B_.atoms()) {
      const double excess = b.weight - loss;
      if (excess > 1e-12) out.push_back({b.location, excess});
    }
    return out;
  }

 private:
  struct Estimate {
    Extrapolation re, im;
  };

  Estimate extrapolate(double x, const std::vector<double>& hs, const SolverConfig& cfg) const {
    SolutionPoint sp = solve_at(cplx(x, hs.front()), cfg);
    std::vector<std::pair<double, double>> re{{hs.front(), sp.m.real()}}, im{{hs.front(), sp.m.imag()}};
    for (std::size_t i = 1; i < hs.size(); ++i) {
      sp = solve_from(cplx(x, hs[i]), sp.m, cfg);
      re.emplace_back(hs[i], sp.m.real());
      im.emplace_back(hs[i], sp.m.imag());
    }
    return {extrapolate_to_zero(re), extrapolate_to_zero(im)};
  }

  std::pair<cplx, int> iterate(cplx z, cplx m, const SolverConfig& cfg) const {
    const double d = cfg.damping;
    cplx best = m;
    double best_res = std::numeric_limits<double>::infinity();
    for (int it = 0; it < cfg.max_iterations; ++it) {
      const cplx w = subordination(z, m);
      const cplx R = B_.transform(w, 1);
      const double res = std::abs(m - R);
      if (!std::isfinite(res)) break;
      if (res < best_res) {
        best_res = res;
        best = m;
      }
      const double scale = std::max(1.0, std::abs(m));
      if (res <= cfg.residual_tol * scale) {
        // One more Newton step usually takes the residual down to round-off.
        if (auto mn = newton_step(z, m, w, R); mn && residual(z, *mn) < res) m = *mn;
        return {m, it + 1};
      }
      if (res < 1e-3 * scale) {
        if (auto mn = newton_step(z, m, w, R)) {
          const double rn = residual(z, *mn);
          if (rn < res) {
            m = *mn;
            continue;
          }
        }
      }
      m = (1.0 - d) * m + d * R;
    }
    throw ConvergenceError("master equation: no convergence at z = (" + std::to_string(z.real()) + ", " +
                               std::to_string(z.imag()) + "), residual " + std::to_string(best_res),
                           best, best_res);
  }

  std::optional<cplx> newton_step(cplx z, cplx m, cplx w, cplx R) const {
    (void)z;
    const cplx d2 = a_powers(m, 2)[2];
    const cplx g1 = 1.0 - gamma_ * d2 * B_.transform(w, 2);
    if (std::abs(g1) == 0.0) return std::nullopt;
    const cplx mn = m - (m - R) / g1;
    if (!(mn.imag() > 0.0) || !std::isfinite(std::abs(mn))) return std::nullopt;
    return mn;
  }

  SolutionPoint diagnose(cplx z, cplx m, int iterations) const {
    SolutionPoint sp;
    sp.z = z;
    sp.m = m;
    sp.iterations = iterations;
    const cplx w = subordination(z, m);
    sp.residual = std::abs(m - B_.transform(w, 1));
    double alpha = 0.0;
    for (const auto& b : B_.atoms()) alpha += b.weight / std::norm(b.location - w);
    for (const auto& pc : B_.pieces()) alpha += pc.weight * pc.part->cauchy(w, 1).imag() / w.imag();
    sp.alpha = alpha;
    sp.beta = gamma_ * a_abs2(m);
    sp.one_minus_ab = 1.0 - sp.alpha * sp.beta;
    // Near atoms 1 - αβ is a difference of nearly equal numbers; only a clear
    // violation signals a wrong branch.
    if (sp.alpha * sp.beta - 1.0 > 1e-9)
      throw InternalConsistencyError("master equation: 1 - alpha*beta = " + std::to_string(sp.one_minus_ab) +
                                     " <= 0 at a converged point");
    return sp;
  }

  /// Newton on z(h) = h + γ P1(m_B(h)) = x over h in the upper half-plane;
  /// returns m_B(h) on success.
  std::optional<cplx> polish(double x, cplx m_est) const {
    try {
      cplx h = cplx(x) - gamma_ * a_powers(m_est, 1)[1];
      if (!(h.imag() > 0.0)) return std::nullopt;
      for (int it = 0; it < 60; ++it) {
        const cplx mb = B_.transform(h, 1);
        const auto P = a_powers(mb, 2);
        const cplx F = h + gamma_ * P[1] - x;
        const cplx dF = 1.0 - gamma_ * P[2] * B_.transform(h, 2);
        if (std::abs(dF) == 0.0 || !std::isfinite(std::abs(dF))) return std::nullopt;
        cplx step = F / dF;
        cplx hn = h - step;
        if (hn.imag() < 0.0) hn = std::conj(hn);
        if (!(hn.imag() > 0.0)) return std::nullopt;
        h = hn;
        if (std::abs(step) <= 1e-15 * (1.0 + std::abs(h))) break;
      }
      const cplx mb = B_.transform(h, 1);
      const double res = std::abs(h + gamma_ * a_powers(mb, 1)[1] - x);
      if (!(res <= 1e-10 * (1.0 + std::abs(x)))) return std::nullopt;
      return mb;
    } catch (const std::exception&) {
      return std::nullopt;
    }
  }

  Measure A_, B_;
  double gamma_;
};

inline SolutionPoint solve_at(const Measure& A, const Measure& B, double gamma, cplx z, const SolverConfig& cfg = {}) {
  return MasterEquation(A, B, gamma).solve_at(z, cfg);
}

inline DensityPoint density_at(const Measure& A, const Measure& B, double gamma, double x,
                               const SolverConfig& cfg = {}) {
  return MasterEquation(A, B, gamma).density_at(x, cfg);
}

inline std::vector<AtomEntry> atom_masses(const Measure& A, const Measure& B, double gamma) {
  return MasterEquation(A, B, gamma).atom_masses();
}

}  // namespace mpspectrum
