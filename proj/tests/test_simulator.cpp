#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles.hpp"

using namespace mpspectrum;

namespace {

SymMatrix from_rows(const std::vector<std::vector<double>>& rows) {
  SymMatrix m(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows.size(); ++j) m(i, j) = rows[i][j];
  return m;
}

TEST(Eigensolver, ToeplitzClosedForm) {
  // tridiag(-1, 2, -1): 2 - 2cos(kπ/(n+1))
  const auto ev = eigenvalues_symmetric(from_rows({{2, -1, 0, 0}, {-1, 2, -1, 0}, {0, -1, 2, -1}, {0, 0, -1, 2}}))
                      .eigenvalues;
  ASSERT_EQ(ev.size(), 4u);
  for (int k = 1; k <= 4; ++k) EXPECT_NEAR(ev[k - 1], 2 - 2 * std::cos(k * std::numbers::pi / 5), 1e-13);
}

TEST(Eigensolver, Identity) {
  SymMatrix m(5);
  for (int i = 0; i < 5; ++i) m(i, i) = 1.0;
  for (double v : eigenvalues_symmetric(m).eigenvalues) EXPECT_NEAR(v, 1.0, 1e-15);
}

TEST(Eigensolver, AgreesWithInertiaBisection) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 20; ++trial) {
    SymMatrix m(6);
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j <= i; ++j) m(i, j) = m(j, i) = g(rng);
    const auto ev = eigenvalues_symmetric(m).eigenvalues;
    ASSERT_TRUE(std::is_sorted(ev.begin(), ev.end()));
    const double bound = std::sqrt(m.frobenius2()) + 1;
    for (std::size_t k = 0; k < 6; ++k) EXPECT_NEAR(ev[k], oracle::kth_eigenvalue(m, k, -bound, bound), 1e-10);
  }
}

TEST(Eigensolver, TridiagonalStagesAgree) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  SymMatrix m(30);
  for (int i = 0; i < 30; ++i)
    for (int j = 0; j <= i; ++j) m(i, j) = m(j, i) = g(rng);
  SymMatrix work = m;
  const auto t = tridiagonalize(work);
  double tr = 0;
  for (double d : t.d) tr += d;
  EXPECT_NEAR(tr, m.trace(), 1e-12);
  const auto ev = tridiagonal_eigenvalues(t);
  const auto ref = eigenvalues_symmetric(m).eigenvalues;
  for (std::size_t i = 0; i < ev.size(); ++i) EXPECT_NEAR(ev[i], ref[i], 1e-12);
}

TEST(Eigensolver, RejectsAsymmetricInput) {
  EXPECT_THROW(eigenvalues_symmetric(from_rows({{1, 2}, {0, 1}})), std::invalid_argument);
}

TEST(Ensemble, TraceAndFrobeniusMatchEigenvalues) {
  const auto s = oracle::discrete();
  const EnsembleConfig cfg{1000, s.gamma, 9, EntryLaw::gaussian, s.A, s.B};
  const SymMatrix W = sample_w(cfg);
  // Trace rebuilt from the same stream: Σ b_i + n⁻¹ Σ_k a_k Σ_i X_ki².
  const auto a = s.A.quantiles(cfg.p());
  const auto b = s.B.quantiles(cfg.n);
  Xoshiro256 rng(cfg.seed);
  double tr = 0;
  for (double v : b) tr += v;
  for (std::size_t k = 0; k < cfg.p(); ++k)
    for (std::size_t i = 0; i < cfg.n; ++i) {
      const double x = rng.gaussian();
      tr += a[k] * x * x / cfg.n;
    }
  EXPECT_NEAR(W.trace(), tr, 1e-9 * std::abs(tr));
  const auto ev = eigenvalues_symmetric(W, 4);
  double s1 = 0, s2 = 0;
  for (double l : ev.eigenvalues) {
    s1 += l;
    s2 += l * l;
  }
  EXPECT_NEAR(s1, W.trace(), 1e-9 * std::abs(W.trace()));
  EXPECT_NEAR(s2, W.frobenius2(), 1e-9 * W.frobenius2());
  EXPECT_LE(ev.max_offdiag_residual, 1e-8 * std::sqrt(W.frobenius2()));
}

TEST(Ensemble, DeterministicPerSeed) {
  const auto s = oracle::semicircle();
  const EnsembleConfig c1{60, s.gamma, 5, EntryLaw::gaussian, s.A, s.B};
  EnsembleConfig c2 = c1;
  c2.seed = 6;
  EXPECT_EQ(sample_w(c1).a, sample_w(c1).a);
  EXPECT_NE(sample_w(c1).a, sample_w(c2).a);
  const auto runs = simulate(c1, 2);
  EXPECT_EQ(runs[0].eigenvalues, eigenvalues_symmetric(sample_w(c1)).eigenvalues);
  EXPECT_EQ(runs[1].eigenvalues, eigenvalues_symmetric(sample_w(c2)).eigenvalues);
}

TEST(Ensemble, ExactlySymmetric) {
  const auto s = oracle::discrete();
  const SymMatrix W = sample_w({50, s.gamma, 1, EntryLaw::rademacher, s.A, s.B});
  for (std::size_t i = 0; i < W.n; ++i)
    for (std::size_t j = 0; j < i; ++j) ASSERT_EQ(W(i, j), W(j, i));
}

TEST(Ensemble, ZeroAGivesB) {
  const auto s = oracle::discrete();
  const EnsembleConfig cfg{40, 0.5, 3, EntryLaw::gaussian, Measure::dirac(0), s.B};
  const SymMatrix W = sample_w(cfg);
  const auto b = s.B.quantiles(40);
  for (std::size_t i = 0; i < 40; ++i)
    for (std::size_t j = 0; j < 40; ++j) EXPECT_EQ(W(i, j), i == j ? b[i] : 0.0);
  auto sorted = b;
  std::sort(sorted.begin(), sorted.end());
  const auto ev = eigenvalues_symmetric(W).eigenvalues;
  for (std::size_t i = 0; i < 40; ++i) EXPECT_NEAR(ev[i], sorted[i], 1e-14);
  // All of B survives: the model puts mass 0.4 at -3 and 0.6 at 3.
  const MasterEquation eq(Measure::dirac(0), s.B, 0.5);
  const auto rep = SupportAnalyzer(eq).determine_support();
  const auto audit = gap_and_mass_audit({ev, 0.0}, rep, 0.05, 1e-12);
  ASSERT_EQ(audit.atoms.size(), 2u);
  EXPECT_EQ(audit.atoms[0].fraction, 0.4);
  EXPECT_EQ(audit.atoms[1].fraction, 0.6);
}

TEST(Ensemble, RankOneCase) {
  const auto s = oracle::discrete();
  const EnsembleConfig cfg{2, 0.5, 13, EntryLaw::gaussian, s.A, s.B};
  ASSERT_EQ(cfg.p(), 1u);
  const double a = s.A.quantiles(1)[0];
  const auto b = s.B.quantiles(2);
  Xoshiro256 rng(cfg.seed);
  const double x0 = rng.gaussian(), x1 = rng.gaussian();
  const SymMatrix W = sample_w(cfg);
  EXPECT_NEAR(W(0, 0), b[0] + a * x0 * x0 / 2, 1e-15);
  EXPECT_NEAR(W(1, 1), b[1] + a * x1 * x1 / 2, 1e-15);
  EXPECT_NEAR(W(0, 1), a * x0 * x1 / 2, 1e-15);
  const double m = 0.5 * (W(0, 0) + W(1, 1)), r = std::hypot(0.5 * (W(0, 0) - W(1, 1)), W(0, 1));
  const auto ev = eigenvalues_symmetric(W).eigenvalues;
  EXPECT_NEAR(ev[0], m - r, 1e-14);
  EXPECT_NEAR(ev[1], m + r, 1e-14);
}

TEST(Ensemble, WeylAndInterlacingBounds) {
  // A ≥ 0 makes W - B_n positive semidefinite of rank ≤ p.
  const auto s = oracle::discrete();
  const EnsembleConfig cfg{200, s.gamma, 8, EntryLaw::gaussian, s.A, s.B};
  const auto ev = eigenvalues_symmetric(sample_w(cfg)).eigenvalues;
  auto b = s.B.quantiles(cfg.n);
  std::sort(b.begin(), b.end());
  for (std::size_t i = 0; i < cfg.n; ++i) {
    EXPECT_GE(ev[i], b[i] - 1e-12);
    if (i + cfg.p() < cfg.n) {
      EXPECT_LE(ev[i], b[i + cfg.p()] + 1e-12);
    }
  }
}

TEST(Ensemble, RejectsBadConfig) {
  const auto s = oracle::discrete();
  EXPECT_THROW(sample_w({1, 0.5, 1, EntryLaw::gaussian, s.A, s.B}), std::invalid_argument);
  EXPECT_THROW(sample_w({10, 0.01, 1, EntryLaw::gaussian, s.A, s.B}), std::invalid_argument);
  EXPECT_THROW(sample_w({10, -1, 1, EntryLaw::gaussian, s.A, s.B}), std::invalid_argument);
}

TEST(Random, Moments) {
  Xoshiro256 rng(2024);
  const int N = 1000000;
  double g1 = 0, g2 = 0, r1 = 0, u1 = 0, umin = 1, umax = 0;
  for (int i = 0; i < N; ++i) {
    const double g = rng.gaussian();
    g1 += g;
    g2 += g * g;
    r1 += rng.rademacher();
    const double u = rng.uniform();
    u1 += u;
    umin = std::min(umin, u);
    umax = std::max(umax, u);
  }
  EXPECT_NEAR(g1 / N, 0.0, 5e-3);
  EXPECT_NEAR(g2 / N, 1.0, 5e-3);
  EXPECT_NEAR(r1 / N, 0.0, 5e-3);
  EXPECT_NEAR(u1 / N, 0.5, 2e-3);
  EXPECT_GT(umin, 0.0);
  EXPECT_LT(umax, 1.0);
}

TEST(Ks, QuantilesOfTheLawAreClose) {
  const std::size_t n = 500;
  std::vector<double> u(n);
  for (std::size_t i = 0; i < n; ++i) u[i] = (i + 0.5) / n;
  const double d = ks_distance({u, 0.0}, [](double x) { return std::clamp(x, 0.0, 1.0); });
  EXPECT_LE(d, 1.0 / n);
  EXPECT_NEAR(d, 0.5 / n, 1e-9);
  // With atoms the quantiles tie and the jump is matched.
  const Measure B = oracle::discrete().B;
  auto q = B.quantiles(n);
  std::sort(q.begin(), q.end());
  EXPECT_LE(ks_distance({q, 0.0}, [&](double x) { return B.cdf(x); }), 1.0 / n);
}

TEST(Ks, RejectsBadCdf) {
  const std::vector<double> ev{0.1, 0.5, 0.9};
  EXPECT_THROW(ks_distance({ev, 0.0}, [](double x) { return 1.0 - x; }), std::invalid_argument);
  EXPECT_THROW(ks_distance({ev, 0.0}, [](double x) { return 2.0 * x; }), std::invalid_argument);
  EXPECT_THROW(ks_distance({{0.5, 0.1}, 0.0}, [](double x) { return x; }), std::invalid_argument);
  EXPECT_THROW(ks_distance({{}, 0.0}, [](double x) { return x; }), std::invalid_argument);
}

TEST(Ks, ShrinksWithDimension) {
  const auto s = oracle::mp(0.5);
  const oracle::ClassicalMp ref{0.5};
  auto cdf = [&](double x) {
    if (x < 0) return 0.0;
    if (x <= ref.a()) return ref.atom();
    return std::min(1.0, ref.atom() + integrate([&](double u) { return ref.pdf(u); }, ref.a(), std::min(x, ref.b())));
  };
  double prev = 1.0;
  for (std::size_t n : {250, 2000}) {
    const auto ev = eigenvalues_symmetric(sample_w({n, 0.5, 31, EntryLaw::gaussian, s.A, s.B}));
    const double d = ks_distance(ev, cdf, 1e-9);
    EXPECT_LT(d, prev) << "n = " << n;
    prev = d;
  }
  EXPECT_LT(prev, 0.02);
}

TEST(Audit, DiscreteSettingAtN1000) {
  const auto s = oracle::discrete();
  const MasterEquation eq(s.A, s.B, s.gamma);
  const auto rep = SupportAnalyzer(eq).determine_support();
  const auto ev = eigenvalues_symmetric(sample_w({1000, s.gamma, 4, EntryLaw::gaussian, s.A, s.B}));
  // Extreme eigenvalues fluctuate on the scale (n Q')^(-2/3), about 0.1 at the
  // edge 1.37 for n = 1000, so bounded gaps are checked 0.2 deep.
  const auto audit = gap_and_mass_audit(ev, rep, 0.2, 1e-6);
  for (const auto& g : audit.gaps) {
    if (!std::isfinite(g.gap.lo) || !std::isfinite(g.gap.hi)) continue;
    EXPECT_EQ(g.deep_count, 0u) << "gap (" << g.gap.lo << ", " << g.gap.hi << ")";
  }
  ASSERT_EQ(audit.atoms.size(), 1u);
  EXPECT_NEAR(audit.atoms[0].fraction, 0.2, 0.01);
  EXPECT_THROW(gap_and_mass_audit(ev, rep, 0.0, 1e-6), std::invalid_argument);
}

}  // namespace
