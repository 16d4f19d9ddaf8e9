#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "interval_union.hpp"
#include "numerics.hpp"

namespace mpspectrum {

/// Raised when a real-axis transform is requested inside the support.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// ---------------------------------------------------------------------------
// Continuous parts
// ---------------------------------------------------------------------------

/// A probability density with compact support [lo, hi].
class ContinuousPart {
 public:
  virtual ~ContinuousPart() = default;

  virtual std::string kind() const = 0;
  virtual double lo() const = 0;
  virtual double hi() const = 0;
  virtual double pdf(double x) const = 0;
  virtual double cdf(double x) const = 0;

  /// ∫ f(x) / (x - z)^k dx for k >= 1.  z is either in the open upper
  /// half-plane or real and outside [lo, hi].
  virtual cplx cauchy(cplx z, int k) const = 0;

  /// Whether the Stieltjes transform stays bounded near x.
  virtual bool in_D(double x) const = 0;

  virtual double moment(int k) const {
    return integrate_adaptive([&](double x) { return std::pow(x, k) * pdf(x); }, lo(), hi(), quad_opts()).value;
  }

  double max_abs() const { return std::max(std::abs(lo()), std::abs(hi())); }

 protected:
  static QuadratureOptions quad_opts() {
    QuadratureOptions o;
    o.abs_tol = 1e-13;
    o.rel_tol = 1e-12;
    return o;
  }

  static void check_z(cplx z, double lo, double hi) {
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
      throw std::invalid_argument("cauchy transform: non-finite argument");
    if (z.imag() < 0.0) throw std::invalid_argument("cauchy transform: argument in the lower half-plane");
    if (z.imag() == 0.0 && z.real() >= lo && z.real() <= hi)
      throw DomainError("cauchy transform: real argument inside the support");
  }
};

/// Wigner semicircle of radius R centred at c; every transform in closed form.
class SemicirclePart final : public ContinuousPart {
 public:
  SemicirclePart(double radius, double center) : r_(radius), c_(center) {
    if (!(radius > 0.0) || !std::isfinite(radius)) throw std::invalid_argument("semicircle: radius must be > 0");
    if (!std::isfinite(center)) throw std::invalid_argument("semicircle: center must be finite");
  }

  std::string kind() const override { return "semicircle"; }
  double radius() const { return r_; }
  double center() const { return c_; }
  double lo() const override { return c_ - r_; }
  double hi() const override { return c_ + r_; }

  double pdf(double x) const override {
    const double t = x - c_;
    if (std::abs(t) >= r_) return 0.0;
    return 2.0 / (std::numbers::pi * r_ * r_) * std::sqrt(r_ * r_ - t * t);
  }

  double cdf(double x) const override {
    const double t = std::clamp((x - c_) / r_, -1.0, 1.0);
    return 0.5 + (t * std::sqrt(1.0 - t * t) + std::asin(t)) / std::numbers::pi;
  }

  cplx cauchy(cplx z, int k) const override {
    check_z(z, lo(), hi());
    const cplx w = z - c_;
    cplx s;
    if (z.imag() == 0.0) {
      const double h = w.real();
      s = std::copysign(std::sqrt(h * h - r_ * r_), h);
    } else {
      s = sqrt_upper(w * w - r_ * r_);
    }
    const cplx m = -2.0 / (w + s);
    switch (k) {
      case 1: return m;
      case 2: return -m / s;
      case 3: return -1.0 / (s * s * s);
      case 4: return w / (s * s * s * s * s);
      default: throw std::invalid_argument("semicircle: transform order must be 1..4");
    }
  }

  bool in_D(double) const override { return true; }

  double moment(int k) const override {
    if (k == 0) return 1.0;
    if (k == 1) return c_;
    if (k == 2) return c_ * c_ + r_ * r_ / 4.0;
    return ContinuousPart::moment(k);
  }

 private:
  double r_, c_;
};

/// Density known only pointwise; transforms by adaptive quadrature.
class QuadraturePart : public ContinuousPart {
 public:
  cplx cauchy(cplx z, int k) const override {
    check_z(z, lo(), hi());
    if (k < 1) throw std::invalid_argument("cauchy transform: order must be >= 1");
    const double a = lo(), b = hi();
    if (z.imag() == 0.0) {
      const double h = z.real();
      auto f = [&](double x) { return pdf(x) / std::pow(x - h, k); };
      return integrate_adaptive(f, a, b, quad_opts(), kinks()).value;
    }
    const double x0 = z.real(), y = z.imag();
    const bool near = x0 > a && x0 < b && y < 0.1 * (b - a);
    std::vector<double> bp = kinks();
    if (near) {
      bp.push_back(x0);
      bp.push_back(x0 - y);
      bp.push_back(x0 + y);
    }
    if (near && k == 1) {
      // Subtract the pole so the remaining integrand stays bounded.
      const double f0 = pdf(x0);
      auto f = [&](double x) -> cplx { return (pdf(x) - f0) / (x - z); };
      const cplx rest = integrate_adaptive<cplx>(f, a, b, quad_opts(), bp).value;
      return rest + f0 * (std::log(cplx(b) - z) - std::log(cplx(a) - z));
    }
    auto f = [&](double x) -> cplx { return pdf(x) / std::pow(cplx(x) - z, k); };
    return integrate_adaptive<cplx>(f, a, b, quad_opts(), bp).value;
  }

  double cdf(double x) const override {
    if (x <= lo()) return 0.0;
    if (x >= hi()) return 1.0;
    ensure_table();
    auto it = std::upper_bound(nodes_.begin(), nodes_.end(), x);
    const std::size_t j = static_cast<std::size_t>(it - nodes_.begin()) - 1;
    const double part = integrate_adaptive([&](double t) { return pdf(t); }, nodes_[j], x, quad_opts()).value;
    return std::clamp(cum_[j] + part, 0.0, 1.0);
  }

 protected:
  /// Interior points where the density is not smooth.
  virtual std::vector<double> kinks() const { return {}; }

  double raw_mass() const {
    return integrate_adaptive([&](double x) { return pdf(x); }, lo(), hi(), quad_opts(), kinks()).value;
  }

 private:
  void ensure_table() const {
    std::call_once(*once_, [this] {
      constexpr int kCells = 128;
      const double a = lo(), b = hi();
      nodes_.resize(kCells + 1);
      cum_.assign(kCells + 1, 0.0);
      for (int i = 0; i <= kCells; ++i)
        nodes_[i] = a + 0.5 * (b - a) * (1.0 - std::cos(std::numbers::pi * i / kCells));
      nodes_.front() = a;
      nodes_.back() = b;
      for (int i = 0; i < kCells; ++i)
        cum_[i + 1] = cum_[i] +
                      integrate_adaptive([&](double t) { return pdf(t); }, nodes_[i], nodes_[i + 1], quad_opts()).value;
      const double total = cum_.back();
      for (double& c : cum_) c /= total;
    });
  }

  std::shared_ptr<std::once_flag> once_ = std::make_shared<std::once_flag>();
  mutable std::vector<double> nodes_, cum_;
};

/// Continuous part of the Marchenko-Pastur law with ratio λ and scale σ²,
/// renormalised to unit mass.  For λ > 1 the atom at 0 is kept separately.
class MarchenkoPasturPart final : public QuadraturePart {
 public:
  MarchenkoPasturPart(double ratio, double scale) : lambda_(ratio), scale_(scale) {
    if (!(ratio > 0.0) || !std::isfinite(ratio)) throw std::invalid_argument("mp: ratio must be > 0");
    if (!(scale > 0.0) || !std::isfinite(scale)) throw std::invalid_argument("mp: scale must be > 0");
    const double r = std::sqrt(lambda_);
    a_ = scale_ * (1.0 - r) * (1.0 - r);
    b_ = scale_ * (1.0 + r) * (1.0 + r);
    norm_ = std::min(1.0, 1.0 / lambda_);
  }

  std::string kind() const override { return "mp"; }
  double ratio() const { return lambda_; }
  double scale() const { return scale_; }
  double lo() const override { return a_; }
  double hi() const override { return b_; }

  double pdf(double x) const override {
    if (x <= a_ || x >= b_ || x <= 0.0) return 0.0;
    return std::sqrt((b_ - x) * (x - a_)) / (2.0 * std::numbers::pi * lambda_ * scale_ * x) / norm_;
  }

  /// Only λ = 1 has an unbounded density (at 0).
  bool in_D(double x) const override { return !(a_ == 0.0 && x == 0.0); }

  double moment(int k) const override {
    if (k == 0) return 1.0;
    // Moments of the full law are σ²ᵏ·Narayana polynomials; divide out the atom.
    if (k == 1) return scale_ / norm_;
    if (k == 2) return scale_ * scale_ * (1.0 + lambda_) / norm_;
    return QuadraturePart::moment(k);
  }

 private:
  double lambda_, scale_, a_, b_, norm_;
};

/// User-supplied density on [a, b]; must integrate to 1 within 1e-8.
class GeneralDensityPart final : public QuadraturePart {
 public:
  GeneralDensityPart(std::function<double(double)> density, double a, double b)
      : f_(std::move(density)), a_(a), b_(b) {
    if (!f_) throw std::invalid_argument("general density: empty callback");
    if (!(a < b) || !std::isfinite(a) || !std::isfinite(b))
      throw std::invalid_argument("general density: need finite a < b");
    const double mass = raw_mass();
    if (std::abs(mass - 1.0) > 1e-8)
      throw std::invalid_argument("general density: integrates to " + std::to_string(mass) + ", not 1");
  }

  std::string kind() const override { return "general"; }
  double lo() const override { return a_; }
  double hi() const override { return b_; }
  double pdf(double x) const override { return (x < a_ || x > b_) ? 0.0 : f_(x); }

  bool in_D(double x) const override {
    if (x == a_) return !(f_(a_) != 0.0);
    if (x == b_) return !(f_(b_) != 0.0);
    return true;
  }

 private:
  std::function<double(double)> f_;
  double a_, b_;
};

/// Piecewise-linear density through (x_i, p_i), normalised on construction.
/// Transforms are exact segment by segment.
class DensityTablePart final : public ContinuousPart {
 public:
  DensityTablePart(std::vector<double> x, std::vector<double> p) : x_(std::move(x)), p_(std::move(p)) {
    if (x_.size() < 2 || x_.size() != p_.size())
      throw std::invalid_argument("density table: need at least two (x, pdf) rows");
    double mass = 0.0;
    for (std::size_t i = 0; i < x_.size(); ++i) {
      if (!std::isfinite(x_[i]) || !std::isfinite(p_[i]) || p_[i] < 0.0)
        throw std::invalid_argument("density table: entries must be finite with pdf >= 0");
      if (i > 0) {
        if (!(x_[i] > x_[i - 1])) throw std::invalid_argument("density table: x must be strictly increasing");
        mass += 0.5 * (p_[i] + p_[i - 1]) * (x_[i] - x_[i - 1]);
      }
    }
    if (!(mass > 0.0)) throw std::invalid_argument("density table: zero total mass");
    for (double& v : p_) v /= mass;
    cum_.assign(x_.size(), 0.0);
    for (std::size_t i = 1; i < x_.size(); ++i)
      cum_[i] = cum_[i - 1] + 0.5 * (p_[i] + p_[i - 1]) * (x_[i] - x_[i - 1]);
  }

  std::string kind() const override { return "density_table"; }
  const std::vector<double>& xs() const { return x_; }
  const std::vector<double>& pdfs() const { return p_; }
  double lo() const override { return x_.front(); }
  double hi() const override { return x_.back(); }

  double pdf(double x) const override {
    if (x < lo() || x > hi()) return 0.0;
    const std::size_t j = segment(x);
    const double t = (x - x_[j]) / (x_[j + 1] - x_[j]);
    return p_[j] + t * (p_[j + 1] - p_[j]);
  }

  double cdf(double x) const override {
    if (x <= lo()) return 0.0;
    if (x >= hi()) return 1.0;
    const std::size_t j = segment(x);
    const double d = x - x_[j];
    return std::min(1.0, cum_[j] + d * (p_[j] + 0.5 * d * (p_[j + 1] - p_[j]) / (x_[j + 1] - x_[j])));
  }

  cplx cauchy(cplx z, int k) const override {
    check_z(z, lo(), hi());
    if (k < 1) throw std::invalid_argument("cauchy transform: order must be >= 1");
    cplx total = 0.0;
    for (std::size_t j = 0; j + 1 < x_.size(); ++j) {
      const double x0 = x_[j], x1 = x_[j + 1];
      const double beta = (p_[j + 1] - p_[j]) / (x1 - x0);
      const double alpha = p_[j] - beta * x0;
      const cplx d0 = cplx(x0) - z, d1 = cplx(x1) - z;
      // ∫ dx/(x-z)^k over the segment, for orders k-1 and k.
      auto J = [&](int q) -> cplx {
        if (q == 0) return x1 - x0;
        if (q == 1) return std::log(d1) - std::log(d0);
        return (std::pow(d1, 1 - q) - std::pow(d0, 1 - q)) / double(1 - q);
      };
      total += beta * J(k - 1) + (alpha + beta * z) * J(k);
    }
    if (z.imag() == 0.0) total.imag(0.0);
    return total;
  }

  bool in_D(double x) const override {
    if (x == lo()) return p_.front() == 0.0;
    if (x == hi()) return p_.back() == 0.0;
    return true;
  }

 private:
  std::size_t segment(double x) const {
    auto it = std::upper_bound(x_.begin(), x_.end(), x);
    std::size_t j = static_cast<std::size_t>(it - x_.begin());
    j = j == 0 ? 0 : j - 1;
    return std::min(j, x_.size() - 2);
  }

  std::vector<double> x_, p_, cum_;
};

// ---------------------------------------------------------------------------
// Measure
// ---------------------------------------------------------------------------

struct Atom {
  double location;
};
struct Semicircle {
  double radius;
  double center = 0.0;
};
struct MarchenkoPastur {
  double ratio;
  double scale = 1.0;
};
struct GeneralDensity {
  std::function<double(double)> density;
  double a;
  double b;
};
struct DensityTable {
  std::vector<double> x;
  std::vector<double> pdf;
};

using MeasurePart = std::variant<Atom, Semicircle, MarchenkoPastur, GeneralDensity, DensityTable>;

struct Component {
  double weight;
  MeasurePart part;
};

struct AtomEntry {
  double location;
  double weight;

  bool operator==(const AtomEntry&) const = default;
};

struct Piece {
  double weight;
  std::shared_ptr<const ContinuousPart> part;
};

/// Probability measure on the real line: finitely many atoms plus weighted
/// continuous parts.  Immutable after construction.
class Measure {
 public:
  Measure() = default;

  explicit Measure(std::vector<Component> components) : components_(std::move(components)) {
    if (components_.empty()) throw std::invalid_argument("measure: no components");
    double total = 0.0;
    for (const auto& c : components_) {
      if (!(c.weight > 0.0) || !std::isfinite(c.weight))
        throw std::invalid_argument("measure: every weight must be positive");
      total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-12)
      throw std::invalid_argument("measure: weights sum to " + std::to_string(total) + ", not 1");
    for (const auto& c : components_) add(c);
    std::sort(atoms_.begin(), atoms_.end(), [](auto& a, auto& b) { return a.location < b.location; });
    std::vector<AtomEntry> merged;
    for (const auto& a : atoms_) {
      if (!merged.empty() && merged.back().location == a.location)
        merged.back().weight += a.weight;
      else
        merged.push_back(a);
    }
    atoms_.swap(merged);
    std::vector<Interval> iv;
    for (const auto& a : atoms_) iv.push_back({a.location, a.location});
    for (const auto& p : pieces_) iv.push_back({p.part->lo(), p.part->hi()});
    support_ = IntervalUnion(std::move(iv), true);
  }

  static Measure dirac(double x) { return Measure({{1.0, Atom{x}}}); }
  static Measure semicircle(double r, double c = 0.0) { return Measure({{1.0, Semicircle{r, c}}}); }
  static Measure marchenko_pastur(double ratio, double scale = 1.0) {
    return Measure({{1.0, MarchenkoPastur{ratio, scale}}});
  }

  const std::vector<Component>& components() const noexcept { return components_; }
  const std::vector<AtomEntry>& atoms() const noexcept { return atoms_; }
  const std::vector<Piece>& pieces() const noexcept { return pieces_; }
  const IntervalUnion& support() const noexcept { return support_; }

  bool is_dirac() const { return pieces_.empty() && atoms_.size() == 1; }

  double atom_mass(double x) const {
    for (const auto& a : atoms_)
      if (a.location == x) return a.weight;
    return 0.0;
  }

  bool is_atom(double x) const { return atom_mass(x) > 0.0; }

  /// m(z) = ∫ 1/(x - z) dμ for Im z > 0.
  cplx stieltjes(cplx z) const {
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
      throw std::invalid_argument("stieltjes: non-finite argument");
    if (!(z.imag() > 0.0)) throw std::invalid_argument("stieltjes: need Im z > 0");
    return transform(z, 1);
  }

  /// ∫ 1/(x - z)^k dμ for z in the upper half-plane or real outside the support.
  cplx transform(cplx z, int k) const {
    if (z.imag() == 0.0) check_outside(z.real());
    cplx s = 0.0;
    for (const auto& a : atoms_) s += a.weight / std::pow(cplx(a.location) - z, k);
    for (const auto& p : pieces_) s += p.weight * p.part->cauchy(z, k);
    return s;
  }

  double stieltjes_real(double h) const { return inverse_moment(h, 1); }

  /// Q_k(h) = ∫ 1/(x - h)^k dμ for real h off the support.
  double inverse_moment(double h, int k) const {
    if (k < 1) throw std::invalid_argument("inverse_moment: k must be >= 1");
    if (!std::isfinite(h)) throw std::invalid_argument("inverse_moment: non-finite h");
    return transform(cplx(h, 0.0), k).real();
  }

  double moment(int k) const {
    double s = 0.0;
    for (const auto& a : atoms_) s += a.weight * std::pow(a.location, k);
    for (const auto& p : pieces_) s += p.weight * p.part->moment(k);
    return s;
  }

  double second_moment() const { return moment(2); }

  double max_abs() const { return std::max(std::abs(support_.lower()), std::abs(support_.upper())); }

  double pdf(double x) const {
    double s = 0.0;
    for (const auto& p : pieces_) s += p.weight * p.part->pdf(x);
    return s;
  }

  /// μ((-∞, x]).
  double cdf(double x) const {
    double s = 0.0;
    for (const auto& a : atoms_)
      if (a.location <= x) s += a.weight;
    for (const auto& p : pieces_) s += p.weight * p.part->cdf(x);
    return std::min(s, 1.0);
  }

  /// μ((-∞, x)).
  double cdf_left(double x) const { return std::max(0.0, cdf(x) - atom_mass(x)); }

  /// Midpoint-rule quantiles q_i = inf{x : F(x) >= (i - 1/2)/n}, ascending.
  std::vector<double> quantiles(std::size_t n) const {
    if (n == 0) return {};
    std::vector<double> out(n);
    const double smin = support_.lower(), smax = support_.upper();
    double bracket_lo = smin;
    for (std::size_t i = 0; i < n; ++i) {
      const double q = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
      if (cdf(smin) >= q) {
        out[i] = smin;
        continue;
      }
      double a = bracket_lo, b = smax;  // F(a) < q <= F(b)
      for (int it = 0; it < 200 && b - a > 1e-15 * std::max(1.0, std::abs(b)); ++it) {
        const double m = 0.5 * (a + b);
        if (m <= a || m >= b) break;
        (cdf(m) >= q ? b : a) = m;
      }
      double x = b;
      for (const auto& at : atoms_)
        if (std::abs(x - at.location) <= 1e-9 * std::max(1.0, std::abs(at.location))) x = at.location;
      out[i] = x;
      bracket_lo = a;
    }
    return out;
  }

  /// Per-class membership in the set where the Stieltjes transform stays
  /// bounded near x: atoms and singular density endpoints are excluded.
  bool in_D(double x) const {
    if (is_atom(x)) return false;
    for (const auto& p : pieces_)
      if (!p.part->in_D(x)) return false;
    return true;
  }

 private:
  void check_outside(double h) const {
    for (const auto& a : atoms_)
      if (h == a.location)
        throw DomainError("real transform at h = " + std::to_string(h) + " hits the atom at " +
                          std::to_string(a.location));
    for (const auto& p : pieces_)
      if (h >= p.part->lo() && h <= p.part->hi())
        throw DomainError("real transform at h = " + std::to_string(h) + " lies in the " + p.part->kind() +
                          " component [" + std::to_string(p.part->lo()) + ", " + std::to_string(p.part->hi()) +
                          "]");
  }

  void add(const Component& c) {
    const double w = c.weight;
    std::visit(
        [&](const auto& part) {
          using T = std::decay_t<decltype(part)>;
          if constexpr (std::is_same_v<T, Atom>) {
            if (!std::isfinite(part.location)) throw std::invalid_argument("atom: non-finite location");
            atoms_.push_back({part.location, w});
          } else if constexpr (std::is_same_v<T, Semicircle>) {
            pieces_.push_back({w, std::make_shared<SemicirclePart>(part.radius, part.center)});
          } else if constexpr (std::is_same_v<T, MarchenkoPastur>) {
            auto mp = std::make_shared<MarchenkoPasturPart>(part.ratio, part.scale);
            if (part.ratio > 1.0) {
              atoms_.push_back({0.0, w * (1.0 - 1.0 / part.ratio)});
              pieces_.push_back({w / part.ratio, mp});
            } else {
              pieces_.push_back({w, mp});
            }
          } else if constexpr (std::is_same_v<T, GeneralDensity>) {
            pieces_.push_back({w, std::make_shared<GeneralDensityPart>(part.density, part.a, part.b)});
          } else {
            pieces_.push_back({w, std::make_shared<DensityTablePart>(part.x, part.pdf)});
          }
        },
        c.part);
  }

  std::vector<Component> components_;
  std::vector<AtomEntry> atoms_;
  std::vector<Piece> pieces_;
  IntervalUnion support_;
};

}  // namespace mpspectrum
