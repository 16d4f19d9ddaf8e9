#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "master_solver.hpp"
#include "problem_spec.hpp"
#include "report_io.hpp"
#include "rmt_simulator.hpp"
#include "spectral_cdf.hpp"
#include "support_analyzer.hpp"
#include "validation.hpp"

namespace mpspectrum::cli {

enum ExitCode : int { ok = 0, unexpected = 1, invalid_input = 2, no_convergence = 3, audit_failed = 4 };

struct Options {
  std::string command;
  std::string spec_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n;
  std::optional<std::size_t> grid;
};

namespace detail {

inline const char* kDiracWarning = "degenerate-B outside model assumptions (B is a single atom)";

class Writer {
 public:
  Writer(std::filesystem::path dir, const ProblemSpec& spec, std::ostream& log) : dir_(std::move(dir)), spec_(spec), log_(log) {
    std::filesystem::create_directories(dir_);
  }

  /// Opens `name` if its artifact kind was requested; `body` fills the stream.
  template <typename Body>
  void emit(const std::string& kind, const std::string& name, Body&& body) {
    if (!spec_.wants(kind)) return;
    const auto path = dir_ / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    body(out);
    out.close();
    if (!out) throw std::runtime_error("write failed for " + path.string());
    log_ << "wrote " << path.string() << '\n';
  }

  void json(const std::string& name, const nlohmann::json& j) {
    emit("json", name, [&](std::ostream& o) { o << j.dump(2) << '\n'; });
  }

 private:
  std::filesystem::path dir_;
  const ProblemSpec& spec_;
  std::ostream& log_;
};

inline void warn_flags(const std::vector<std::string>& flags, std::ostream& err) {
  for (const auto& f : flags) err << "warning: " << f << '\n';
}

inline std::string describe(const IntervalUnion& u) {
  std::string s;
  for (const auto& p : u) {
    if (!s.empty()) s += " U ";
    s += p.is_point() ? "{" + fmt_num(p.lo) + "}" : "[" + fmt_num(p.lo) + ", " + fmt_num(p.hi) + "]";
  }
  return s.empty() ? "(empty)" : s;
}

inline int execute(const Options& opt, std::ostream& out, std::ostream& err) {
  ProblemSpec spec = load_problem(opt.spec_path);
  if (opt.seed || opt.n) {
    SimulationSettings sim = spec.simulation.value_or(SimulationSettings{});
    if (opt.seed) sim.seed = *opt.seed;
    if (opt.n) sim.n = *opt.n;
    spec.simulation = sim;
  }
  if (opt.grid) spec.density_points = *opt.grid;
  if (spec.density_points < 2) throw ValidationError("--grid", "need at least 2 points");
  if (spec.simulation && spec.simulation->n < 2) throw ValidationError("--n", "need n >= 2");

  const MasterEquation eq(spec.A, spec.B, spec.gamma);
  Writer files(opt.out_dir, spec, out);
  const std::string& cmd = opt.command;

  if (cmd == "masses") {
    if (spec.B.is_dirac()) err << "warning: " << kDiracWarning << '\n';
    const auto atoms = eq.atom_masses();
    nlohmann::json flags = nlohmann::json::array();
    if (spec.B.is_dirac()) flags.push_back(kDiracWarning);
    files.json("masses.json", {{"atoms", atoms_to_json(atoms)}, {"flags", flags}});
    for (const auto& a : atoms) out << "atom " << fmt_num(a.location) << " mass " << fmt_num(a.weight) << '\n';
    return ok;
  }

  if (cmd == "simulate") {
    if (spec.B.is_dirac()) err << "warning: " << kDiracWarning << '\n';
    const SimulationSettings sim = spec.simulation.value_or(SimulationSettings{});
    const EnsembleConfig ens = spec.ensemble();
    const auto runs = simulate(ens, sim.replicates, sim.spot_checks);
    for (std::size_t r = 0; r < runs.size(); ++r) {
      const std::string name = runs.size() == 1 ? "eigenvalues.csv" : "eigenvalues_r" + std::to_string(r) + ".csv";
      files.emit("csv", name, [&](std::ostream& o) { write_eigenvalues_csv(o, runs[r].eigenvalues); });
      out << "replicate " << r << " seed " << replicate_seed(ens.seed, r) << ": n = " << ens.n << ", p = " << ens.p();
      if (sim.spot_checks > 0) out << ", max residual " << fmt_num(runs[r].max_offdiag_residual);
      out << '\n';
    }
    return ok;
  }

  const SupportAnalyzer analyzer(eq, spec.support);
  const SupportReport rep = analyzer.determine_support();
  warn_flags(rep.degenerate_flags, err);

  if (cmd == "support") {
    files.json("support.json", to_json(rep));
    files.emit("csv", "curve.csv", [&](std::ostream& o) { write_curve_csv(o, analyzer.sample_curve(rep.window, 400)); });
    if (spec.wants("svg")) {
      std::vector<double> eigs;
      if (spec.simulation) eigs = simulate(spec.ensemble(), 1).front().eigenvalues;
      files.emit("svg", "support.svg", [&](std::ostream& o) { o << support_svg(analyzer, rep, eigs); });
    }
    out << "support " << describe(rep.support) << '\n';
    for (const auto& a : rep.atoms) out << "atom " << fmt_num(a.location) << " mass " << fmt_num(a.weight) << '\n';
    return ok;
  }

  if (cmd == "edges") {
    files.json("edges.json", {{"edges", edges_to_json(rep.edges)}, {"flags", flags_to_json(rep.degenerate_flags)}});
    for (const auto& e : rep.edges)
      out << to_string(e.side) << " edge " << fmt_num(e.x0) << " at h0 = " << fmt_num(e.h0) << ", Q'(0) = "
          << fmt_num(e.q_prime) << '\n';
    return ok;
  }

  if (cmd == "density") {
    double lo = kInf, hi = -kInf;
    for (const auto& s : rep.support) {
      if (std::isfinite(s.lo)) lo = std::min(lo, s.lo);
      if (std::isfinite(s.hi)) hi = std::max(hi, s.hi);
    }
    if (!(lo <= hi)) throw ValidationError("support", "no finite support bounds to grid");
    const double margin = 0.1 * std::max(hi - lo, 1.0);
    const auto grid = density_grid(eq, lo - margin, hi + margin, spec.density_points, spec.solver);
    std::size_t outside = 0;
    for (const auto& p : grid.entries) outside += p.in_D ? 0 : 1;
    if (outside > 0) err << "warning: " << outside << " grid points lie outside D; density there is unverified\n";
    files.emit("csv", "density.csv", [&](std::ostream& o) { write_density_csv(o, grid); });
    out << "density on " << grid.entries.size() << " points over [" << fmt_num(lo - margin) << ", "
        << fmt_num(hi + margin) << "]\n";
    return ok;
  }

  // validate
  const SpectralCdf cdf(eq, rep, spec.solver);
  const ValidationReport v = validate(eq, rep, cdf, spec);
  files.json("audit.json", to_json(v));
  for (const auto& r : v.replicates) out << "seed " << r.seed << ": KS " << fmt_num(r.ks) << '\n';
  for (const auto& e : v.edges) out << "edge " << fmt_num(e.edge.x0) << ": slope " << fmt_num(e.slope) << '\n';
  for (const auto& f : v.failures) err << "audit: " << f << '\n';
  out << (v.passed() ? "validation passed" : "validation FAILED") << '\n';
  return v.passed() ? ok : audit_failed;
}

}  // namespace detail

/// Entry point of the `mpspectrum` tool; returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Limiting spectral distribution of B + n^-1 X^T A X: support, density, atoms, edges, Monte Carlo"};
  app.name("mpspectrum");
  app.require_subcommand(1, 1);
  Options opt;
  const std::pair<const char*, const char*> commands[] = {
      {"support", "support report, x(h) curve and figure"},
      {"density", "density of the limit law on a grid"},
      {"masses", "atoms of the limit law"},
      {"edges", "square-root edges of the support"},
      {"simulate", "eigenvalues of sampled matrices"},
      {"validate", "Monte Carlo audit against the model"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--spec", opt.spec_path, "problem description (JSON)")->required();
    sub->add_option("--out-dir", opt.out_dir, "directory for output files");
    sub->add_option("--seed", opt.seed, "base seed of the simulation");
    sub->add_option("--n", opt.n, "matrix dimension n");
    sub->add_option("--grid", opt.grid, "density grid points");
    sub->callback([&opt, n = std::string(name)] { opt.command = n; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return ok;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return invalid_input;
  }

  try {
    return detail::execute(opt, out, err);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return invalid_input;
  } catch (const ConvergenceError& e) {
    err << "error: solver did not converge: " << e.what() << '\n';
    return no_convergence;
  } catch (const NumericalError& e) {
    err << "error: numerical failure: " << e.what() << '\n';
    return no_convergence;
  } catch (const InternalConsistencyError& e) {
    err << "error: solver left the physical branch: " << e.what() << '\n';
    return no_convergence;
  } catch (const EigenError& e) {
    err << "error: eigensolver did not converge: " << e.what() << '\n';
    return no_convergence;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return invalid_input;
  } catch (const std::domain_error& e) {
    err << "error: " << e.what() << '\n';
    return invalid_input;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return unexpected;
  }
}

}  // namespace mpspectrum::cli
