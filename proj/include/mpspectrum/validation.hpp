#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "problem_spec.hpp"
#include "report_io.hpp"
#include "rmt_simulator.hpp"
#include "spectral_cdf.hpp"
#include "support_analyzer.hpp"

namespace mpspectrum {

/// Density samples at log-spaced distances d from an edge, on the support side.
struct EdgeFit {
  EdgeRecord edge;
  std::vector<double> d;
  std::vector<double> f;
  double slope = 0.0;
  /// max |f / (Q'(0)·√d) - 1| over the samples.
  double max_ratio_error = 0.0;

  bool operator==(const EdgeFit&) const = default;
};

inline EdgeFit fit_edge(const MasterEquation& eq, const EdgeRecord& e, const SolverConfig& cfg, double dmin,
                        double dmax, int points = 9) {
  EdgeFit fit;
  fit.edge = e;
  const double s = e.side == EdgeSide::left_endpoint ? 1.0 : -1.0;
  fit.d.resize(points);
  fit.f.resize(points);
  parallel_for(static_cast<std::size_t>(points), [&](std::size_t k) {
    const double t = points == 1 ? 0.0 : static_cast<double>(k) / (points - 1);
    fit.d[k] = dmin * std::pow(dmax / dmin, t);
    fit.f[k] = eq.density_at(e.x0 + s * fit.d[k], cfg).f;
  });
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int k = 0; k < points; ++k) {
    const double lx = std::log(fit.d[k]), ly = std::log(fit.f[k]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    fit.max_ratio_error = std::max(fit.max_ratio_error, std::abs(fit.f[k] / (e.q_prime * std::sqrt(fit.d[k])) - 1.0));
  }
  fit.slope = (points * sxy - sx * sy) / (points * sxx - sx * sx);
  if (!std::isfinite(fit.slope)) fit.slope = 0.0;
  if (!std::isfinite(fit.max_ratio_error)) fit.max_ratio_error = 1.0;
  return fit;
}

struct ReplicateAudit {
  std::uint64_t seed = 0;
  double ks = 0.0;
  AuditRecord audit;

  bool operator==(const ReplicateAudit&) const = default;
};

struct ValidationReport {
  std::size_t n = 0;
  ValidationSettings tol;
  double total_mass = 0.0;
  std::vector<ReplicateAudit> replicates;
  std::vector<EdgeFit> edges;
  std::vector<std::string> failures;

  bool passed() const { return failures.empty(); }
  bool operator==(const ValidationReport&) const = default;
};

/// Monte Carlo replicates against the model law, plus the edge-slope fit.
inline ValidationReport validate(const MasterEquation& eq, const SupportReport& rep, const SpectralCdf& cdf,
                                 const ProblemSpec& spec) {
  ValidationReport out;
  out.tol = spec.validation;
  const auto& tol = spec.validation;
  const SimulationSettings sim = spec.simulation.value_or(SimulationSettings{});
  const EnsembleConfig ens = spec.ensemble();
  out.n = ens.n;
  out.total_mass = cdf.total_mass();
  if (!(std::abs(out.total_mass - 1.0) <= 1e-3))
    out.failures.push_back("model law has total mass " + fmt_num(out.total_mass));
  const auto runs = simulate(ens, sim.replicates, sim.spot_checks);
  for (std::size_t r = 0; r < runs.size(); ++r) {
    ReplicateAudit ra;
    ra.seed = replicate_seed(ens.seed, r);
    ra.ks = ks_distance(runs[r], [&](double x) { return cdf(x); });
    ra.audit = gap_and_mass_audit(runs[r], rep, tol.gap_margin, tol.atom_margin);
    const std::string tag = "replicate seed " + std::to_string(ra.seed) + ": ";
    if (!(ra.ks < tol.ks_max)) out.failures.push_back(tag + "KS distance " + fmt_num(ra.ks) + " >= " + fmt_num(tol.ks_max));
    for (const auto& g : ra.audit.gaps)
      if (g.deep_count > 0)
        out.failures.push_back(tag + std::to_string(g.deep_count) + " eigenvalues deep inside gap (" + fmt_num(g.gap.lo) +
                               ", " + fmt_num(g.gap.hi) + ")");
    for (const auto& a : ra.audit.atoms)
      if (!(std::abs(a.fraction - a.mass) <= tol.atom_tol))
        out.failures.push_back(tag + "fraction " + fmt_num(a.fraction) + " near atom " + fmt_num(a.location) +
                               " differs from mass " + fmt_num(a.mass));
    out.replicates.push_back(std::move(ra));
  }
  for (const auto& e : rep.edges) {
    auto fit = fit_edge(eq, e, spec.solver, tol.edge_dmin, tol.edge_dmax);
    if (!(std::abs(fit.slope - 0.5) <= tol.slope_tol))
      out.failures.push_back("edge " + fmt_num(e.x0) + ": log-log slope " + fmt_num(fit.slope));
    if (!(fit.max_ratio_error <= tol.ratio_tol))
      out.failures.push_back("edge " + fmt_num(e.x0) + ": f/sqrt(d) deviates from Q'(0) by " +
                             fmt_num(fit.max_ratio_error));
    out.edges.push_back(std::move(fit));
  }
  return out;
}

inline nlohmann::json to_json(const ValidationReport& v) {
  nlohmann::json reps = nlohmann::json::array();
  for (const auto& r : v.replicates) reps.push_back({{"seed", r.seed}, {"ks", r.ks}, {"audit", to_json(r.audit)}});
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : v.edges)
    edges.push_back({{"edge", edges_to_json({e.edge})[0]},
                     {"d", e.d},
                     {"f", e.f},
                     {"slope", e.slope},
                     {"max_ratio_error", e.max_ratio_error}});
  const auto& t = v.tol;
  return {{"passed", v.passed()},
          {"n", v.n},
          {"total_mass", v.total_mass},
          {"tolerances",
           {{"ks_max", t.ks_max},
            {"gap_margin", t.gap_margin},
            {"atom_margin", t.atom_margin},
            {"atom_tol", t.atom_tol},
            {"slope_tol", t.slope_tol},
            {"ratio_tol", t.ratio_tol},
            {"edge_dmin", t.edge_dmin},
            {"edge_dmax", t.edge_dmax}}},
          {"replicates", reps},
          {"edge_fits", edges},
          {"failures", v.failures}};
}

inline ValidationReport validation_report_from_json(const nlohmann::json& j, const std::string& path = "audit") {
  using namespace json_detail;
  ValidationReport v;
  const auto& n = field(j, "n", path);
  if (!n.is_number_unsigned()) throw ValidationError(path + ".n", "expected a non-negative integer");
  v.n = n.get<std::size_t>();
  v.total_mass = number_field(j, "total_mass", path);
  const auto& t = field(j, "tolerances", path);
  const std::string tp = path + ".tolerances";
  v.tol = {number_field(t, "ks_max", tp),    number_field(t, "gap_margin", tp), number_field(t, "atom_margin", tp),
           number_field(t, "atom_tol", tp),  number_field(t, "slope_tol", tp),  number_field(t, "ratio_tol", tp),
           number_field(t, "edge_dmin", tp), number_field(t, "edge_dmax", tp)};
  const auto& reps = array_field(j, "replicates", path);
  for (std::size_t i = 0; i < reps.size(); ++i) {
    const std::string p = path + ".replicates[" + std::to_string(i) + "]";
    ReplicateAudit r;
    r.seed = field(reps[i], "seed", p).get<std::uint64_t>();
    r.ks = number_field(reps[i], "ks", p);
    r.audit = audit_record_from_json(field(reps[i], "audit", p), p + ".audit");
    v.replicates.push_back(std::move(r));
  }
  const auto& edges = array_field(j, "edge_fits", path);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const std::string p = path + ".edge_fits[" + std::to_string(i) + "]";
    EdgeFit e;
    e.edge = edges_from_json(nlohmann::json::array({field(edges[i], "edge", p)}), p + ".edge")[0];
    e.d = number_list(field(edges[i], "d", p), p + ".d");
    e.f = number_list(field(edges[i], "f", p), p + ".f");
    e.slope = number_field(edges[i], "slope", p);
    e.max_ratio_error = number_field(edges[i], "max_ratio_error", p);
    v.edges.push_back(std::move(e));
  }
  v.failures = flags_from_json(field(j, "failures", path), path + ".failures");
  return v;
}

}  // namespace mpspectrum
