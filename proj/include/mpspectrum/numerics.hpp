#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <queue>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mpspectrum {

using cplx = std::complex<double>;

/// Square root on the branch with non-negative imaginary part.
///
/// For arguments on the positive real axis the positive root is returned.
inline cplx sqrt_upper(cplx w) {
  cplx r = std::sqrt(w);
  if (r.imag() < 0.0) r = -r;
  if (r.imag() == 0.0 && r.real() < 0.0) r = -r;
  return r;
}

/// Thrown when an iterative numerical routine gives up; carries the best
/// estimate it had at that point.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, double best_estimate, double error_estimate)
      : std::runtime_error(what), best_(best_estimate), error_(error_estimate) {}
  double best_estimate() const noexcept { return best_; }
  double error_estimate() const noexcept { return error_; }

 private:
  double best_;
  double error_;
};

// ---------------------------------------------------------------------------
// Root finding
// ---------------------------------------------------------------------------

/// A bracket [a, b] across which f changes sign. The sign change is verified
/// when the bracket is built, so holding one means the bracket is valid.
class BracketedRoot {
 public:
  template <typename F>
  BracketedRoot(F&& f, double a, double b, double tol = 1e-12) : a_(a), b_(b), tol_(tol) {
    if (!(a < b)) throw std::invalid_argument("BracketedRoot: need a < b");
    if (!(tol > 0.0)) throw std::invalid_argument("BracketedRoot: tol must be positive");
    fa_ = f(a);
    fb_ = f(b);
    if (!std::isfinite(fa_) || !std::isfinite(fb_))
      throw std::invalid_argument("BracketedRoot: f not finite at the bracket ends");
    if (fa_ * fb_ > 0.0) throw std::invalid_argument("BracketedRoot: no sign change on bracket");
  }

  double a() const noexcept { return a_; }
  double b() const noexcept { return b_; }
  double fa() const noexcept { return fa_; }
  double fb() const noexcept { return fb_; }
  double tol() const noexcept { return tol_; }

 private:
  double a_, b_, fa_, fb_, tol_;
};

/// Brent's method (bisection / secant / inverse quadratic interpolation).
/// The returned point always lies inside the bracket.
template <typename F>
double find_root(F&& f, const BracketedRoot& br, int max_iterations = 60) {
  double a = br.a(), b = br.b(), fa = br.fa(), fb = br.fb();
  if (fa == 0.0) return a;
  if (fb == 0.0) return b;
  double c = a, fc = fa, d = b - a, e = d;
  for (int iter = 0; iter < max_iterations; ++iter) {
    if ((fb > 0.0) == (fc > 0.0)) {
      c = a;
      fc = fa;
      d = e = b - a;
    }
    if (std::abs(fc) < std::abs(fb)) {
      a = b; b = c; c = a;
      fa = fb; fb = fc; fc = fa;
    }
    const double tol1 = 2.0 * std::numeric_limits<double>::epsilon() * std::abs(b) + 0.5 * br.tol();
    const double xm = 0.5 * (c - b);
    if (std::abs(xm) <= tol1 || fb == 0.0) return b;
    if (std::abs(e) >= tol1 && std::abs(fa) > std::abs(fb)) {
      double p, q, r;
      const double s = fb / fa;
      if (a == c) {
        p = 2.0 * xm * s;
        q = 1.0 - s;
      } else {
        q = fa / fc;
        r = fb / fc;
        p = s * (2.0 * xm * q * (q - r) - (b - a) * (r - 1.0));
        q = (q - 1.0) * (r - 1.0) * (s - 1.0);
      }
      if (p > 0.0) q = -q;
      p = std::abs(p);
      const double min1 = 3.0 * xm * q - std::abs(tol1 * q);
      const double min2 = std::abs(e * q);
      if (2.0 * p < std::min(min1, min2)) {
        e = d;
        d = p / q;
      } else {
        d = xm;
        e = d;
      }
    } else {
      d = xm;
      e = d;
    }
    a = b;
    fa = fb;
    b += (std::abs(d) > tol1) ? d : (xm > 0.0 ? tol1 : -tol1);
    fb = f(b);
  }
  throw NumericalError("find_root: no convergence within iteration limit", b, std::abs(c - b));
}

template <typename F>
double find_root(F&& f, double a, double b, double tol = 1e-12) {
  return find_root(f, BracketedRoot(f, a, b, tol));
}

// ---------------------------------------------------------------------------
// Adaptive quadrature
// ---------------------------------------------------------------------------

namespace detail {

// 15-point Kronrod extension of the 7-point Gauss rule.
inline constexpr std::array<double, 8> kKronrodNodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kKronrodWeights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kGaussWeights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

template <typename T>
struct Panel {
  double a, b;
  T value;
  double error;
  int depth;
};

template <typename T, typename F>
Panel<T> kronrod_panel(F& f, double a, double b, int depth) {
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  const T fc = f(c);
  T kronrod = fc * kKronrodWeights[7];
  T gauss = fc * kGaussWeights[3];
  for (int j = 0; j < 7; ++j) {
    const double dx = h * kKronrodNodes[j];
    const T fsum = f(c - dx) + f(c + dx);
    kronrod += kKronrodWeights[j] * fsum;
    if (j % 2 == 1) gauss += kGaussWeights[j / 2] * fsum;
  }
  return {a, b, kronrod * h, std::abs((kronrod - gauss) * h), depth};
}

}  // namespace detail

struct QuadratureOptions {
  double abs_tol = 1e-10;
  double rel_tol = 0.0;
  int max_depth = 24;
  int max_panels = 4000;
  /// Apply x = mid - half*cos(theta), which removes inverse-square-root and
  /// square-root endpoint behaviour.
  bool endpoint_substitution = true;
};

template <typename T>
struct QuadratureResult {
  T value{};
  double error = 0.0;
  bool converged = true;
};

/// Globally adaptive Gauss-Kronrod quadrature of f over [a, b].
///
/// `breakpoints` (inside (a, b)) start as panel boundaries; use them for kinks
/// or sharp peaks at known locations. Never throws; check `converged`.
template <typename T = double, typename F>
QuadratureResult<T> integrate_adaptive(F&& f, double a, double b, const QuadratureOptions& opt = {},
                                       const std::vector<double>& breakpoints = {}) {
  QuadratureResult<T> out;
  if (a == b) return out;
  double sign = 1.0;
  if (a > b) {
    std::swap(a, b);
    sign = -1.0;
  }
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);

  auto g = [&](double t) -> T {
    if (!opt.endpoint_substitution) return T(f(t));
    const double x = mid - half * std::cos(t);
    const double jac = half * std::sin(t);
    if (jac == 0.0) return T{};
    return T(f(x)) * jac;
  };
  auto to_var = [&](double x) {
    if (!opt.endpoint_substitution) return x;
    return std::acos(std::clamp((mid - x) / half, -1.0, 1.0));
  };

  std::vector<double> cuts{to_var(a)};
  std::vector<double> bp = breakpoints;
  std::sort(bp.begin(), bp.end());
  for (double x : bp)
    if (x > a && x < b) cuts.push_back(to_var(x));
  cuts.push_back(to_var(b));
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  auto worse = [](const detail::Panel<T>& l, const detail::Panel<T>& r) { return l.error < r.error; };
  std::priority_queue<detail::Panel<T>, std::vector<detail::Panel<T>>, decltype(worse)> heap(worse);
  T total{};
  double err = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    auto p = detail::kronrod_panel<T>(g, cuts[i], cuts[i + 1], 0);
    total += p.value;
    err += p.error;
    heap.push(p);
  }
  int panels = static_cast<int>(heap.size());
  // Panels that hit the depth limit are parked with their error still counted.
  std::vector<detail::Panel<T>> parked;
  double parked_error = 0.0;
  while (!heap.empty()) {
    const double target = std::max(opt.abs_tol, opt.rel_tol * std::abs(total));
    if (err <= target) break;
    if (parked_error > target || panels >= opt.max_panels) {
      out.converged = false;
      break;
    }
    auto worst = heap.top();
    heap.pop();
    if (worst.depth >= opt.max_depth) {
      parked_error += worst.error;
      parked.push_back(worst);
      continue;
    }
    const double c = 0.5 * (worst.a + worst.b);
    auto left = detail::kronrod_panel<T>(g, worst.a, c, worst.depth + 1);
    auto right = detail::kronrod_panel<T>(g, c, worst.b, worst.depth + 1);
    total += left.value + right.value - worst.value;
    err += left.error + right.error - worst.error;
    heap.push(left);
    heap.push(right);
    ++panels;
  }
  // Re-sum to shed accumulated cancellation from the running updates.
  T resum{};
  double esum = 0.0;
  for (const auto& p : parked) {
    resum += p.value;
    esum += p.error;
  }
  while (!heap.empty()) {
    resum += heap.top().value;
    esum += heap.top().error;
    heap.pop();
  }
  out.value = resum;
  out.error = esum;
  const double target = std::max(opt.abs_tol, opt.rel_tol * std::abs(out.value));
  if (out.error > target) out.converged = false;
  out.value = out.value * sign;
  return out;
}

/// Adaptive quadrature to absolute tolerance `tol`; throws NumericalError with
/// the best estimate when refinement hits the depth limit.
template <typename F>
double integrate(F&& f, double a, double b, double tol = 1e-10) {
  QuadratureOptions opt;
  opt.abs_tol = tol;
  auto r = integrate_adaptive<double>(f, a, b, opt);
  if (!r.converged)
    throw NumericalError("integrate: refinement exceeded depth limit", r.value, r.error);
  return r.value;
}

// ---------------------------------------------------------------------------
// Extrapolation
// ---------------------------------------------------------------------------

struct Extrapolation {
  double limit;
  double error;
};

/// Polynomial (Neville / Richardson) extrapolation of v(y) to y = 0 from
/// samples at strictly decreasing positive y.
inline Extrapolation extrapolate_to_zero(const std::vector<std::pair<double, double>>& samples) {
  const std::size_t n = samples.size();
  if (n < 3) throw std::invalid_argument("extrapolate_to_zero: need at least 3 samples");
  for (std::size_t i = 0; i < n; ++i) {
    if (!(samples[i].first > 0.0)) throw std::invalid_argument("extrapolate_to_zero: y must be positive");
    if (i > 0 && !(samples[i].first < samples[i - 1].first))
      throw std::invalid_argument("extrapolate_to_zero: y must be strictly decreasing");
  }
  std::vector<std::vector<double>> t(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    t[i][0] = samples[i].second;
    for (std::size_t j = 1; j <= i; ++j) {
      const double yi = samples[i].first, yij = samples[i - j].first;
      t[i][j] = t[i][j - 1] + yi * (t[i][j - 1] - t[i - 1][j - 1]) / (yij - yi);
    }
  }
  const double best = t[n - 1][n - 1];
  const double err = std::max(std::abs(best - t[n - 1][n - 2]), std::abs(best - t[n - 2][n - 2]));
  return {best, err};
}

}  // namespace mpspectrum
