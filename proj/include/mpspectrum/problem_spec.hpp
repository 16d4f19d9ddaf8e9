#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "master_solver.hpp"
#include "measure_json.hpp"
#include "rmt_simulator.hpp"
#include "support_analyzer.hpp"

namespace mpspectrum {

struct SimulationSettings {
  std::size_t n = 800;
  std::uint64_t seed = 1;
  EntryLaw entry_law = EntryLaw::gaussian;
  std::size_t replicates = 1;
  int spot_checks = 0;
};

/// Tolerances of the `validate` audit.
struct ValidationSettings {
  double ks_max = 0.05;
  double gap_margin = 0.05;
  double atom_margin = 1e-6;
  double atom_tol = 0.01;
  double slope_tol = 0.02;
  double ratio_tol = 0.05;
  double edge_dmin = 1e-4;
  double edge_dmax = 1e-2;

  bool operator==(const ValidationSettings&) const = default;
};

struct ProblemSpec {
  Measure A;
  Measure B;
  double gamma = 0.0;
  SolverConfig solver;
  SupportOptions support;
  std::optional<SimulationSettings> simulation;
  ValidationSettings validation;
  /// Artifact kinds to write: any of "json", "csv", "svg".
  std::vector<std::string> outputs{"json", "csv", "svg"};
  std::size_t density_points = 400;

  bool wants(const std::string& kind) const {
    return std::find(outputs.begin(), outputs.end(), kind) != outputs.end();
  }

  EnsembleConfig ensemble() const {
    const SimulationSettings s = simulation.value_or(SimulationSettings{});
    return EnsembleConfig{s.n, gamma, s.seed, s.entry_law, A, B};
  }
};

namespace json_detail {

inline std::size_t count_field(const nlohmann::json& j, const std::string& key, const std::string& path,
                               std::size_t min) {
  const auto& v = field(j, key, path);
  if (!v.is_number_integer() || v.get<long long>() < static_cast<long long>(min))
    throw ValidationError(path + "." + key, "expected an integer >= " + std::to_string(min));
  return v.get<std::size_t>();
}

inline double positive_field(const nlohmann::json& j, const std::string& key, const std::string& path) {
  const double v = number_field(j, key, path);
  if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError(path + "." + key, "expected a positive finite number");
  return v;
}

inline std::vector<double> number_list(const nlohmann::json& j, const std::string& path) {
  if (!j.is_array()) throw ValidationError(path, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

inline void check_keys(const nlohmann::json& j, const std::string& path, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ValidationError(path, "expected an object");
  for (const auto& [k, v] : j.items()) {
    bool known = false;
    for (const char* key : keys) known = known || k == key;
    if (!known) throw ValidationError(path + "." + k, "unknown field");
  }
}

}  // namespace json_detail

inline ProblemSpec problem_from_json(const nlohmann::json& j) {
  using namespace json_detail;
  check_keys(j, "spec", {"A", "B", "gamma", "solver", "support", "simulation", "validation", "outputs", "density"});
  ProblemSpec s;
  s.A = measure_from_json(field(j, "A", "spec"), "spec.A");
  s.B = measure_from_json(field(j, "B", "spec"), "spec.B");
  s.gamma = positive_field(j, "gamma", "spec");
  if (!std::isfinite(s.A.second_moment())) throw ValidationError("spec.A", "second moment is not finite");

  if (j.contains("solver")) {
    const auto& c = j["solver"];
    const std::string p = "spec.solver";
    check_keys(c, p, {"damping", "max_iterations", "residual_tol", "continuation_levels", "extrapolation_heights"});
    if (c.contains("damping")) s.solver.damping = number_field(c, "damping", p);
    if (c.contains("max_iterations")) s.solver.max_iterations = static_cast<int>(count_field(c, "max_iterations", p, 1));
    if (c.contains("residual_tol")) s.solver.residual_tol = positive_field(c, "residual_tol", p);
    if (c.contains("continuation_levels"))
      s.solver.continuation_levels = number_list(c["continuation_levels"], p + ".continuation_levels");
    if (c.contains("extrapolation_heights"))
      s.solver.extrapolation_heights = number_list(c["extrapolation_heights"], p + ".extrapolation_heights");
    try {
      s.solver.validate();
    } catch (const std::invalid_argument& e) {
      throw ValidationError(p, e.what());
    }
  }

  if (j.contains("support")) {
    const auto& c = j["support"];
    const std::string p = "spec.support";
    check_keys(c, p, {"grid_points", "refine", "window"});
    if (c.contains("grid_points")) s.support.grid_points = static_cast<int>(count_field(c, "grid_points", p, 16));
    if (c.contains("refine")) s.support.refine = static_cast<int>(count_field(c, "refine", p, 1));
    if (c.contains("window")) {
      const auto w = number_list(c["window"], p + ".window");
      if (w.size() != 2 || !(w[0] < w[1]) || !std::isfinite(w[0]) || !std::isfinite(w[1]))
        throw ValidationError(p + ".window", "expected a finite [lo, hi] with lo < hi");
      s.support.window = Interval{w[0], w[1]};
    }
  }

  if (j.contains("simulation")) {
    const auto& c = j["simulation"];
    const std::string p = "spec.simulation";
    check_keys(c, p, {"n", "seed", "entry_law", "replicates", "spot_checks"});
    SimulationSettings sim;
    if (c.contains("n")) sim.n = count_field(c, "n", p, 2);
    if (c.contains("seed")) {
      if (!c["seed"].is_number_unsigned()) throw ValidationError(p + ".seed", "expected a non-negative integer");
      sim.seed = c["seed"].get<std::uint64_t>();
    }
    if (c.contains("entry_law")) {
      const auto& law = c["entry_law"];
      if (law == "gaussian")
        sim.entry_law = EntryLaw::gaussian;
      else if (law == "rademacher")
        sim.entry_law = EntryLaw::rademacher;
      else
        throw ValidationError(p + ".entry_law", "expected \"gaussian\" or \"rademacher\"");
    }
    if (c.contains("replicates")) sim.replicates = count_field(c, "replicates", p, 1);
    if (c.contains("spot_checks")) sim.spot_checks = static_cast<int>(count_field(c, "spot_checks", p, 0));
    s.simulation = sim;
  }

  if (j.contains("validation")) {
    const auto& c = j["validation"];
    const std::string p = "spec.validation";
    check_keys(c, p, {"ks_max", "gap_margin", "atom_margin", "atom_tol", "slope_tol", "ratio_tol", "edge_dmin", "edge_dmax"});
    auto& v = s.validation;
    for (auto [key, dst] : {std::pair{"ks_max", &v.ks_max}, {"gap_margin", &v.gap_margin},
                            {"atom_margin", &v.atom_margin}, {"atom_tol", &v.atom_tol}, {"slope_tol", &v.slope_tol},
                            {"ratio_tol", &v.ratio_tol}, {"edge_dmin", &v.edge_dmin}, {"edge_dmax", &v.edge_dmax}})
      if (c.contains(key)) *dst = positive_field(c, key, p);
    if (!(v.edge_dmin < v.edge_dmax)) throw ValidationError(p + ".edge_dmin", "must be below edge_dmax");
  }

  if (j.contains("outputs")) {
    const auto& o = j["outputs"];
    if (!o.is_array()) throw ValidationError("spec.outputs", "expected an array of strings");
    s.outputs.clear();
    for (std::size_t i = 0; i < o.size(); ++i) {
      const std::string p = "spec.outputs[" + std::to_string(i) + "]";
      if (!o[i].is_string()) throw ValidationError(p, "expected a string");
      const auto k = o[i].get<std::string>();
      if (k != "json" && k != "csv" && k != "svg") throw ValidationError(p, "unknown artifact kind '" + k + "'");
      s.outputs.push_back(k);
    }
  }

  if (j.contains("density")) {
    const auto& c = j["density"];
    check_keys(c, "spec.density", {"points"});
    if (c.contains("points")) s.density_points = count_field(c, "points", "spec.density", 2);
  }
  return s;
}

inline nlohmann::json problem_to_json(const ProblemSpec& s) {
  nlohmann::json j;
  j["A"] = measure_to_json(s.A);
  j["B"] = measure_to_json(s.B);
  j["gamma"] = s.gamma;
  j["solver"] = {{"damping", s.solver.damping},
                 {"max_iterations", s.solver.max_iterations},
                 {"residual_tol", s.solver.residual_tol},
                 {"continuation_levels", s.solver.continuation_levels},
                 {"extrapolation_heights", s.solver.extrapolation_heights}};
  j["support"] = {{"grid_points", s.support.grid_points}, {"refine", s.support.refine}};
  if (s.support.window) j["support"]["window"] = {s.support.window->lo, s.support.window->hi};
  if (s.simulation)
    j["simulation"] = {{"n", s.simulation->n},
                       {"seed", s.simulation->seed},
                       {"entry_law", to_string(s.simulation->entry_law)},
                       {"replicates", s.simulation->replicates},
                       {"spot_checks", s.simulation->spot_checks}};
  const auto& v = s.validation;
  j["validation"] = {{"ks_max", v.ks_max},         {"gap_margin", v.gap_margin}, {"atom_margin", v.atom_margin},
                     {"atom_tol", v.atom_tol},     {"slope_tol", v.slope_tol},   {"ratio_tol", v.ratio_tol},
                     {"edge_dmin", v.edge_dmin},   {"edge_dmax", v.edge_dmax}};
  j["outputs"] = s.outputs;
  j["density"] = {{"points", s.density_points}};
  return j;
}

/// Parses a problem file; syntax errors report line and column.
inline ProblemSpec load_problem(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(path, "cannot open file");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ValidationError(path + ":" + std::to_string(line) + ":" + std::to_string(col), "malformed JSON");
  }
  try {
    return problem_from_json(j);
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.where(), std::string(e.what()).substr(e.where().size() + 2));
  }
}

}  // namespace mpspectrum
