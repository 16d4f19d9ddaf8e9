#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "interval_union.hpp"
#include "measure.hpp"
#include "parallel.hpp"
#include "support_analyzer.hpp"

namespace mpspectrum {

// ---------------------------------------------------------------------------
// Random numbers
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// xoshiro256** seeded through splitmix64.
class Xoshiro256 {
 public:
  explicit Xoshiro256(std::uint64_t seed) {
    for (auto& w : s_) w = splitmix64(seed);
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform on (0, 1).
  double uniform() { return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53; }

  /// Standard normal by Box-Muller; the second variate of each pair is cached.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform(), u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

  double rademacher() { return (next() >> 63) ? 1.0 : -1.0; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// ---------------------------------------------------------------------------
// Ensemble
// ---------------------------------------------------------------------------

enum class EntryLaw { gaussian, rademacher };

inline const char* to_string(EntryLaw l) { return l == EntryLaw::gaussian ? "gaussian" : "rademacher"; }

struct EnsembleConfig {
  std::size_t n = 0;
  double gamma = 0.0;
  std::uint64_t seed = 0;
  EntryLaw entry_law = EntryLaw::gaussian;
  Measure A;
  Measure B;

  std::size_t p() const { return static_cast<std::size_t>(std::llround(gamma * static_cast<double>(n))); }

  void validate() const {
    if (n < 2) throw std::invalid_argument("ensemble: n must be >= 2");
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw std::invalid_argument("ensemble: gamma must be > 0");
    if (p() < 1) throw std::invalid_argument("ensemble: p = round(gamma*n) must be >= 1");
  }
};

/// Dense symmetric matrix, full row-major storage.
struct SymMatrix {
  std::size_t n = 0;
  std::vector<double> a;

  explicit SymMatrix(std::size_t size = 0) : n(size), a(size * size, 0.0) {}
  double& operator()(std::size_t i, std::size_t j) { return a[i * n + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a[i * n + j]; }

  double trace() const {
    double t = 0.0;
    for (std::size_t i = 0; i < n; ++i) t += a[i * n + i];
    return t;
  }

  double frobenius2() const {
    double s = 0.0;
    for (double v : a) s += v * v;
    return s;
  }
};

/// W = B_n + n⁻¹ XᵀA_nX with quantile diagonals A_n (p×p) and B_n (n×n).
/// X is drawn row by row from one stream and kept column-major, so each W_ij
/// is one contiguous dot product; the lower triangle is mirrored, which makes
/// W exactly symmetric.
inline SymMatrix sample_w(const EnsembleConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.n, p = cfg.p();
  const auto a = cfg.A.quantiles(p);
  const auto b = cfg.B.quantiles(n);
  Xoshiro256 rng(cfg.seed);
  std::vector<double> xt(n * p);  // xt[i*p + k] = X(k, i)
  for (std::size_t k = 0; k < p; ++k)
    for (std::size_t i = 0; i < n; ++i)
      xt[i * p + k] = cfg.entry_law == EntryLaw::gaussian ? rng.gaussian() : rng.rademacher();
  std::vector<double> ax(n * p);  // columns scaled by a_k / n
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < p; ++k) ax[i * p + k] = a[k] * inv_n * xt[i * p + k];
  SymMatrix W(n);
  constexpr std::size_t kBlock = 32;
  for (std::size_t jb = 0; jb < n; jb += kBlock) {
    const std::size_t je = std::min(n, jb + kBlock);
    for (std::size_t i = jb; i < n; ++i) {
      const double* ai = &ax[i * p];
      for (std::size_t j = jb; j < je && j <= i; ++j) {
        const double* xj = &xt[j * p];
        double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
        std::size_t k = 0;
        for (; k + 4 <= p; k += 4) {
          s0 += ai[k] * xj[k];
          s1 += ai[k + 1] * xj[k + 1];
          s2 += ai[k + 2] * xj[k + 2];
          s3 += ai[k + 3] * xj[k + 3];
        }
        for (; k < p; ++k) s0 += ai[k] * xj[k];
        W(i, j) = (s0 + s1) + (s2 + s3);
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    W(i, i) += b[i];
    for (std::size_t j = 0; j < i; ++j) W(j, i) = W(i, j);
  }
  return W;
}

// ---------------------------------------------------------------------------
// Eigensolver
// ---------------------------------------------------------------------------

struct EigenResult {
  std::vector<double> eigenvalues;
  /// Largest ‖Wv - λv‖₂ over spot-checked eigenpairs (0 when none were checked).
  double max_offdiag_residual = 0.0;
};

class EigenError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Tridiagonal {
  std::vector<double> d, e;  // e[i] couples i and i+1
};

/// Householder reduction to tridiagonal form.  Works on the lower triangle of
/// `m`, leaving the reflector vectors in it; `beta` receives their scales.
inline Tridiagonal tridiagonalize(SymMatrix& m, std::vector<double>* beta = nullptr) {
  const std::size_t n = m.n;
  Tridiagonal t;
  t.d.assign(n, 0.0);
  t.e.assign(n > 0 ? n - 1 : 0, 0.0);
  if (beta) beta->assign(n, 0.0);
  std::vector<double> v(n), p(n);
  for (std::size_t k = 0; k + 2 < n; ++k) {
    const std::size_t s = k + 1;
    double norm2 = 0.0;
    for (std::size_t i = s; i < n; ++i) norm2 += m(i, k) * m(i, k);
    const double x0 = m(s, k);
    t.d[k] = m(k, k);
    if (norm2 - x0 * x0 == 0.0) {
      t.e[k] = x0;
      continue;
    }
    const double alpha = x0 >= 0.0 ? -std::sqrt(norm2) : std::sqrt(norm2);
    // v = x - αe₁, β = 2/(vᵀv); stored in place of column k.
    for (std::size_t i = s; i < n; ++i) v[i] = m(i, k);
    v[s] -= alpha;
    const double vtv = norm2 - x0 * x0 + v[s] * v[s];
    const double b = 2.0 / vtv;
    // p = β A22 v using the lower triangle only.
    std::fill(p.begin() + static_cast<std::ptrdiff_t>(s), p.end(), 0.0);
    for (std::size_t i = s; i < n; ++i) {
      const double* row = &m.a[i * n];
      const double vi = v[i];
      double acc = 0.0;
      for (std::size_t j = s; j < i; ++j) {
        acc += row[j] * v[j];
        p[j] += row[j] * vi;
      }
      p[i] += acc + row[i] * vi;
    }
    double pv = 0.0;
    for (std::size_t i = s; i < n; ++i) {
      p[i] *= b;
      pv += p[i] * v[i];
    }
    const double c = 0.5 * b * pv;
    for (std::size_t i = s; i < n; ++i) p[i] -= c * v[i];  // p becomes w
    for (std::size_t i = s; i < n; ++i) {
      double* row = &m.a[i * n];
      const double vi = v[i], wi = p[i];
      for (std::size_t j = s; j <= i; ++j) row[j] -= vi * p[j] + wi * v[j];
    }
    t.e[k] = alpha;
    for (std::size_t i = s; i < n; ++i) m(i, k) = v[i];
    if (beta) (*beta)[k] = b;
  }
  if (n >= 2) {
    t.d[n - 2] = m(n - 2, n - 2);
    t.e[n - 2] = m(n - 1, n - 2);
  }
  if (n >= 1) t.d[n - 1] = m(n - 1, n - 1);
  return t;
}

/// Implicit-shift QL on a symmetric tridiagonal matrix, eigenvalues only.
inline std::vector<double> tridiagonal_eigenvalues(Tridiagonal t) {
  const std::size_t n = t.d.size();
  std::vector<double>& d = t.d;
  std::vector<double> e(n, 0.0);
  for (std::size_t i = 0; i + 1 < n; ++i) e[i] = t.e[i];
  const long budget = 30L * static_cast<long>(std::max<std::size_t>(n, 1));
  long sweeps = 0;
  for (std::size_t l = 0; l < n; ++l) {
    for (;;) {
      std::size_t m = l;
      for (; m + 1 < n; ++m) {
        const double dd = std::abs(d[m]) + std::abs(d[m + 1]);
        if (std::abs(e[m]) <= std::numeric_limits<double>::epsilon() * dd) break;
      }
      if (m == l) break;
      if (++sweeps > budget) throw EigenError("tridiagonal QL: no convergence within 30n sweeps");
      double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
      double r = std::hypot(g, 1.0);
      g = d[m] - d[l] + e[l] / (g + std::copysign(r, g));
      double s = 1.0, c = 1.0, p = 0.0;
      std::size_t i = m;
      bool underflow = false;
      while (i-- > l) {
        double f = s * e[i];
        const double b = c * e[i];
        r = std::hypot(f, g);
        e[i + 1] = r;
        if (r == 0.0) {
          d[i + 1] -= p;
          e[m] = 0.0;
          underflow = true;
          break;
        }
        s = f / r;
        c = g / r;
        g = d[i + 1] - p;
        r = (d[i] - g) * s + 2.0 * c * b;
        p = s * r;
        d[i + 1] = g + p;
        g = c * r - b;
      }
      if (underflow) continue;
      d[l] -= p;
      e[l] = g;
      e[m] = 0.0;
    }
  }
  std::sort(d.begin(), d.end());
  return d;
}

namespace detail {

/// Solves (T - μI)y = b for tridiagonal T by LU with partial pivoting.
inline std::vector<double> tridiagonal_solve(const Tridiagonal& t, double mu, std::vector<double> b) {
  const std::size_t n = t.d.size();
  std::vector<double> dl(n, 0.0), d(n), du(n, 0.0), du2(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) d[i] = t.d[i] - mu;
  for (std::size_t i = 0; i + 1 < n; ++i) dl[i] = du[i] = t.e[i];
  const double tiny = 1e-300;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (std::abs(d[i]) >= std::abs(dl[i])) {
      if (d[i] == 0.0) d[i] = tiny;
      const double f = dl[i] / d[i];
      d[i + 1] -= f * du[i];
      b[i + 1] -= f * b[i];
      dl[i] = 0.0;
    } else {
      // Swap rows i and i+1 so the larger entry pivots.
      const double f = d[i] / dl[i];
      const double tmp = d[i + 1];
      d[i] = dl[i];
      d[i + 1] = du[i] - f * tmp;
      du[i] = tmp;
      if (i + 2 < n) {
        du2[i] = du[i + 1];
        du[i + 1] = -f * du[i + 1];
      }
      std::swap(b[i], b[i + 1]);
      b[i + 1] -= f * b[i];
    }
  }
  if (d[n - 1] == 0.0) d[n - 1] = tiny;
  std::vector<double> y(n);
  for (std::size_t k = n; k-- > 0;) {
    double s = b[k];
    if (k + 1 < n) s -= du[k] * y[k + 1];
    if (k + 2 < n) s -= du2[k] * y[k + 2];
    y[k] = s / d[k];
  }
  return y;
}

}  // namespace detail

/// All eigenvalues of a symmetric matrix, ascending.  With spot_checks > 0,
/// that many eigenpairs (spread across the spectrum) are verified by inverse
/// iteration and the largest residual ‖Wv - λv‖₂ is recorded.
inline EigenResult eigenvalues_symmetric(const SymMatrix& M, int spot_checks = 0) {
  const std::size_t n = M.n;
  EigenResult res;
  if (n == 0) return res;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) {
      const double scale = std::max({std::abs(M(i, j)), std::abs(M(j, i)), 1e-300});
      if (std::abs(M(i, j) - M(j, i)) > 1e-12 * scale)
        throw std::invalid_argument("eigenvalues_symmetric: matrix is not symmetric");
    }
  SymMatrix work = M;
  std::vector<double> beta;
  const Tridiagonal t = tridiagonalize(work, &beta);
  res.eigenvalues = tridiagonal_eigenvalues(t);
  if (spot_checks <= 0) return res;

  double tnorm = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    tnorm = std::max(tnorm, std::abs(t.d[i]) + (i > 0 ? std::abs(t.e[i - 1]) : 0.0) +
                                (i + 1 < n ? std::abs(t.e[i]) : 0.0));
  const int checks = std::min<int>(spot_checks, static_cast<int>(n));
  for (int c = 0; c < checks; ++c) {
    const std::size_t idx = checks == 1 ? 0 : static_cast<std::size_t>(c) * (n - 1) / (checks - 1);
    const double lambda = res.eigenvalues[idx];
    const double mu = lambda + 1e-12 * std::max(1.0, tnorm);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = 1.0 + 0.1 * std::sin(1.7 * static_cast<double>(i) + 0.3);
    for (int it = 0; it < 3; ++it) {
      y = detail::tridiagonal_solve(t, mu, y);
      double nrm = 0.0;
      for (double v : y) nrm += v * v;
      nrm = std::sqrt(nrm);
      for (double& v : y) v /= nrm;
    }
    // Map back through the reflectors: v = H_0 H_1 ... y.
    for (std::size_t k = n >= 2 ? n - 2 : 0; k-- > 0;) {
      if (beta[k] == 0.0) continue;
      double dot = 0.0;
      for (std::size_t i = k + 1; i < n; ++i) dot += work(i, k) * y[i];
      dot *= beta[k];
      for (std::size_t i = k + 1; i < n; ++i) y[i] -= dot * work(i, k);
    }
    double r2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = -lambda * y[i];
      const double* row = &M.a[i * n];
      for (std::size_t j = 0; j < n; ++j) s += row[j] * y[j];
      r2 += s * s;
    }
    res.max_offdiag_residual = std::max(res.max_offdiag_residual, std::sqrt(r2));
  }
  return res;
}

// ---------------------------------------------------------------------------
// Comparison against the model
// ---------------------------------------------------------------------------

/// sup_x |F_n(x) - F(x)| with both one-sided limits, eigenvalues closer than
/// `resolution` treated as tied.  `cdf` must be nondecreasing with values in [0, 1].
inline double ks_distance(const EigenResult& eigs, const std::function<double(double)>& cdf,
                          double resolution = 1e-9) {
  const auto& ev = eigs.eigenvalues;
  const std::size_t n = ev.size();
  if (n == 0) throw std::invalid_argument("ks_distance: no eigenvalues");
  if (!std::is_sorted(ev.begin(), ev.end())) throw std::invalid_argument("ks_distance: eigenvalues not sorted");
  double worst = 0.0, prev = -1.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && ev[j + 1] - ev[j] <= resolution) ++j;
    const double below = cdf(ev[i] - resolution), above = cdf(ev[j] + resolution);
    for (double v : {below, above}) {
      if (!(v >= -1e-12 && v <= 1.0 + 1e-12)) throw std::invalid_argument("ks_distance: cdf leaves [0, 1]");
      if (v < prev - 1e-12) throw std::invalid_argument("ks_distance: cdf is not nondecreasing");
      prev = v;
    }
    const double fn_below = static_cast<double>(i) / n, fn_above = static_cast<double>(j + 1) / n;
    worst = std::max({worst, std::abs(fn_below - below), std::abs(fn_above - above)});
    i = j + 1;
  }
  return worst;
}

struct GapAudit {
  Interval gap;
  std::size_t deep_count = 0;

  bool operator==(const GapAudit&) const = default;
};

struct AtomAudit {
  double location = 0.0;
  double mass = 0.0;
  double fraction = 0.0;

  bool operator==(const AtomAudit&) const = default;
};

struct AuditRecord {
  double margin = 0.0;
  double atom_margin = 0.0;
  std::vector<GapAudit> gaps;
  std::vector<AtomAudit> atoms;

  bool operator==(const AuditRecord&) const = default;
};

/// Counts eigenvalues deeper than `margin` inside each gap of the report, and
/// the fraction within `atom_margin` of each predicted atom.
inline AuditRecord gap_and_mass_audit(const EigenResult& eigs, const SupportReport& report, double margin,
                                      double atom_margin) {
  if (!(margin > 0.0)) throw std::invalid_argument("audit: margin must be positive");
  if (!(atom_margin > 0.0)) throw std::invalid_argument("audit: atom margin must be positive");
  AuditRecord out;
  out.margin = margin;
  out.atom_margin = atom_margin;
  const auto& ev = eigs.eigenvalues;
  for (const auto& g : report.complement) {
    GapAudit ga{g, 0};
    const double lo = g.lo + margin, hi = g.hi - margin;
    if (lo < hi)
      for (double v : ev) ga.deep_count += (v > lo && v < hi) ? 1 : 0;
    out.gaps.push_back(ga);
  }
  for (const auto& a : report.atoms) {
    std::size_t c = 0;
    for (double v : ev) c += std::abs(v - a.location) <= atom_margin ? 1 : 0;
    out.atoms.push_back({a.location, a.weight, ev.empty() ? 0.0 : static_cast<double>(c) / ev.size()});
  }
  return out;
}

inline AuditRecord gap_and_mass_audit(const EigenResult& eigs, const SupportReport& report, double margin) {
  return gap_and_mass_audit(eigs, report, margin, margin);
}

/// Seed of replicate r: consecutive seeds from the configured base seed.
inline std::uint64_t replicate_seed(std::uint64_t base, std::size_t r) { return base + r; }

/// Eigenvalues of `replicates` independent draws, run concurrently.
inline std::vector<EigenResult> simulate(const EnsembleConfig& cfg, std::size_t replicates, int spot_checks = 0) {
  std::vector<EigenResult> out(replicates);
  parallel_for(replicates, [&](std::size_t r) {
    EnsembleConfig c = cfg;
    c.seed = replicate_seed(cfg.seed, r);
    out[r] = eigenvalues_symmetric(sample_w(c), spot_checks);
  });
  return out;
}

}  // namespace mpspectrum
