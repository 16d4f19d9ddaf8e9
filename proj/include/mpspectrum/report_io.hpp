#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "measure_json.hpp"
#include "rmt_simulator.hpp"
#include "spectral_cdf.hpp"
#include "support_analyzer.hpp"

namespace mpspectrum {

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

namespace json_detail {

inline nlohmann::json interval_json(const Interval& iv) { return {json_number(iv.lo), json_number(iv.hi)}; }

inline Interval interval_from(const nlohmann::json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 2) throw ValidationError(path, "expected [lo, hi]");
  return {number(j[0], path + "[0]"), number(j[1], path + "[1]")};
}

inline const nlohmann::json& array_field(const nlohmann::json& j, const std::string& key, const std::string& path) {
  const auto& a = field(j, key, path);
  if (!a.is_array()) throw ValidationError(path + "." + key, "expected an array");
  return a;
}

}  // namespace json_detail

inline nlohmann::json atoms_to_json(const std::vector<AtomEntry>& atoms) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& e : atoms) a.push_back({{"x", e.location}, {"mass", e.weight}});
  return a;
}

inline std::vector<AtomEntry> atoms_from_json(const nlohmann::json& j, const std::string& path = "atoms") {
  using namespace json_detail;
  if (!j.is_array()) throw ValidationError(path, "expected an array");
  std::vector<AtomEntry> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    out.push_back({number_field(j[i], "x", p), number_field(j[i], "mass", p)});
  }
  return out;
}

inline nlohmann::json edges_to_json(const std::vector<EdgeRecord>& edges) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& e : edges)
    a.push_back({{"h0", e.h0}, {"x0", e.x0}, {"side", to_string(e.side)}, {"x2", e.x2}, {"q_prime", e.q_prime}});
  return a;
}

inline std::vector<EdgeRecord> edges_from_json(const nlohmann::json& j, const std::string& path = "edges") {
  using namespace json_detail;
  if (!j.is_array()) throw ValidationError(path, "expected an array");
  std::vector<EdgeRecord> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    EdgeRecord e;
    e.h0 = number_field(j[i], "h0", p);
    e.x0 = number_field(j[i], "x0", p);
    e.x2 = number_field(j[i], "x2", p);
    e.q_prime = number_field(j[i], "q_prime", p);
    const auto& side = field(j[i], "side", p);
    if (side == "left")
      e.side = EdgeSide::left_endpoint;
    else if (side == "right")
      e.side = EdgeSide::right_endpoint;
    else
      throw ValidationError(p + ".side", "expected \"left\" or \"right\"");
    out.push_back(e);
  }
  return out;
}

inline nlohmann::json flags_to_json(const std::vector<std::string>& flags) { return flags; }

inline std::vector<std::string> flags_from_json(const nlohmann::json& j, const std::string& path = "flags") {
  if (!j.is_array()) throw ValidationError(path, "expected an array of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_string()) throw ValidationError(path + "[" + std::to_string(i) + "]", "expected a string");
    out.push_back(j[i].get<std::string>());
  }
  return out;
}

inline nlohmann::json to_json(const SupportReport& r) {
  nlohmann::json pieces = nlohmann::json::array();
  for (const auto& p : r.h_intervals_increasing)
    pieces.push_back({{"h", json_detail::interval_json(p.h)}, {"image", json_detail::interval_json(p.image)}});
  return {{"support", interval_union_to_json(r.support)},
          {"complement", interval_union_to_json(r.complement)},
          {"atoms", atoms_to_json(r.atoms)},
          {"edges", edges_to_json(r.edges)},
          {"h_intervals_increasing", pieces},
          {"h_domain", interval_union_to_json(r.h_domain)},
          {"window", json_detail::interval_json(r.window)},
          {"flags", flags_to_json(r.degenerate_flags)}};
}

inline SupportReport support_report_from_json(const nlohmann::json& j, const std::string& path = "report") {
  using namespace json_detail;
  SupportReport r;
  r.support = interval_union_from_json(field(j, "support", path), true, path + ".support");
  r.atoms = atoms_from_json(field(j, "atoms", path), path + ".atoms");
  r.edges = edges_from_json(field(j, "edges", path), path + ".edges");
  r.degenerate_flags = flags_from_json(field(j, "flags", path), path + ".flags");
  r.complement = j.contains("complement")
                     ? interval_union_from_json(j["complement"], false, path + ".complement")
                     : r.support.complement();
  if (j.contains("h_intervals_increasing")) {
    const auto& a = array_field(j, "h_intervals_increasing", path);
    for (std::size_t i = 0; i < a.size(); ++i) {
      const std::string p = path + ".h_intervals_increasing[" + std::to_string(i) + "]";
      r.h_intervals_increasing.push_back({interval_from(field(a[i], "h", p), p + ".h"),
                                          interval_from(field(a[i], "image", p), p + ".image")});
    }
  }
  if (j.contains("h_domain")) r.h_domain = interval_union_from_json(j["h_domain"], false, path + ".h_domain");
  if (j.contains("window")) r.window = interval_from(j["window"], path + ".window");
  return r;
}

inline nlohmann::json to_json(const AuditRecord& a) {
  nlohmann::json gaps = nlohmann::json::array();
  for (const auto& g : a.gaps) gaps.push_back({{"gap", json_detail::interval_json(g.gap)}, {"deep_count", g.deep_count}});
  nlohmann::json atoms = nlohmann::json::array();
  for (const auto& t : a.atoms) atoms.push_back({{"x", t.location}, {"mass", t.mass}, {"fraction", t.fraction}});
  return {{"margin", a.margin}, {"atom_margin", a.atom_margin}, {"gaps", gaps}, {"atoms", atoms}};
}

inline AuditRecord audit_record_from_json(const nlohmann::json& j, const std::string& path = "audit") {
  using namespace json_detail;
  AuditRecord a;
  a.margin = number_field(j, "margin", path);
  a.atom_margin = number_field(j, "atom_margin", path);
  const auto& gaps = array_field(j, "gaps", path);
  for (std::size_t i = 0; i < gaps.size(); ++i) {
    const std::string p = path + ".gaps[" + std::to_string(i) + "]";
    const auto& c = field(gaps[i], "deep_count", p);
    if (!c.is_number_unsigned()) throw ValidationError(p + ".deep_count", "expected a non-negative integer");
    a.gaps.push_back({interval_from(field(gaps[i], "gap", p), p + ".gap"), c.get<std::size_t>()});
  }
  const auto& atoms = array_field(j, "atoms", path);
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    const std::string p = path + ".atoms[" + std::to_string(i) + "]";
    a.atoms.push_back(
        {number_field(atoms[i], "x", p), number_field(atoms[i], "mass", p), number_field(atoms[i], "fraction", p)});
  }
  return a;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace csv_detail {

inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<std::vector<double>> read(std::istream& in, const std::string& header, const std::string& what) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(what, "empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != header) throw ValidationError(what + ":1", "expected header '" + header + "'");
  const std::size_t cols = static_cast<std::size_t>(std::count(header.begin(), header.end(), ',')) + 1;
  std::vector<std::vector<double>> rows;
  for (std::size_t lineno = 2; std::getline(in, line); ++lineno) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ValidationError(what + ":" + std::to_string(lineno), "bad number '" + cell + "'");
      }
    }
    if (row.size() != cols)
      throw ValidationError(what + ":" + std::to_string(lineno), "expected " + std::to_string(cols) + " columns");
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace csv_detail

inline void write_density_csv(std::ostream& out, const DensityGrid& g) {
  out << "x,f,err\n";
  for (const auto& p : g.entries) out << csv_detail::num(p.x) << ',' << csv_detail::num(p.f) << ',' << csv_detail::num(p.err) << '\n';
}

/// Reads x, f, err back; the in_D and polished flags are not part of the format.
inline DensityGrid read_density_csv(std::istream& in) {
  DensityGrid g;
  for (const auto& r : csv_detail::read(in, "x,f,err", "density csv")) {
    DensityPoint p;
    p.x = r[0];
    p.f = r[1];
    p.err = r[2];
    g.entries.push_back(p);
  }
  return g;
}

inline void write_eigenvalues_csv(std::ostream& out, const std::vector<double>& eigs) {
  out << "index,lambda\n";
  for (std::size_t i = 0; i < eigs.size(); ++i) out << i << ',' << csv_detail::num(eigs[i]) << '\n';
}

inline std::vector<double> read_eigenvalues_csv(std::istream& in) {
  std::vector<double> out;
  for (const auto& r : csv_detail::read(in, "index,lambda", "eigenvalue csv")) out.push_back(r[1]);
  return out;
}

inline void write_curve_csv(std::ostream& out, const std::vector<HCurvePoint>& curve) {
  out << "h,m_B,x,x1\n";
  for (const auto& p : curve)
    out << csv_detail::num(p.h) << ',' << csv_detail::num(p.m_B) << ',' << csv_detail::num(p.x) << ','
        << csv_detail::num(p.x1) << '\n';
}

inline std::vector<HCurvePoint> read_curve_csv(std::istream& in) {
  std::vector<HCurvePoint> out;
  for (const auto& r : csv_detail::read(in, "h,m_B,x,x1", "curve csv")) {
    HCurvePoint p;
    p.h = r[0];
    p.m_B = r[1];
    p.x = r[2];
    p.x1 = r[3];
    out.push_back(p);
  }
  return out;
}

// ---------------------------------------------------------------------------
// SVG
// ---------------------------------------------------------------------------

namespace svg_detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::vector<double> ticks(double lo, double hi) {
  const double raw = (hi - lo) / 6.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  std::vector<double> out;
  for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * step; t += step) out.push_back(std::abs(t) < 1e-12 * step ? 0.0 : t);
  return out;
}

}  // namespace svg_detail

/// x(h) against h: the curve in black, its increasing stretches thick red,
/// their projection on the vertical axis (the complement of the support) in
/// red, the line x = h dotted, hollow dots at (b, b) for atoms b of B, and
/// one dash per eigenvalue on the vertical axis.
inline std::string support_svg(const SupportAnalyzer& an, const SupportReport& rep,
                               const std::vector<double>& eigenvalues = {}, int samples_per_component = 800) {
  using svg_detail::fmt;
  const Measure& B = an.equation().B();
  double lo = B.support().lower(), hi = B.support().upper();
  for (const auto& s : rep.support) {
    if (std::isfinite(s.lo)) lo = std::min(lo, s.lo);
    if (std::isfinite(s.hi)) hi = std::max(hi, s.hi);
  }
  const double pad = 0.08 * std::max(hi - lo, 1.0);
  lo -= pad;
  hi += pad;

  const double W = 720, H = 560, L = 70, R = 20, T = 20, Bm = 50;
  auto px = [&](double h) { return L + (h - lo) / (hi - lo) * (W - L - R); };
  auto py = [&](double x) { return H - Bm - (x - lo) / (hi - lo) * (H - T - Bm); };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << ' ' << H << "\">\n";
  o << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  o << "<defs><clipPath id=\"plot\"><rect x=\"" << fmt(L) << "\" y=\"" << fmt(T) << "\" width=\"" << fmt(W - L - R)
    << "\" height=\"" << fmt(H - T - Bm) << "\"/></clipPath></defs>\n";

  // Axes and ticks.
  o << "<g stroke=\"black\" stroke-width=\"1\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<line x1=\"" << fmt(L) << "\" y1=\"" << fmt(H - Bm) << "\" x2=\"" << fmt(W - R) << "\" y2=\"" << fmt(H - Bm) << "\"/>\n";
  o << "<line x1=\"" << fmt(L) << "\" y1=\"" << fmt(T) << "\" x2=\"" << fmt(L) << "\" y2=\"" << fmt(H - Bm) << "\"/>\n";
  for (double t : svg_detail::ticks(lo, hi)) {
    o << "<line x1=\"" << fmt(px(t)) << "\" y1=\"" << fmt(H - Bm) << "\" x2=\"" << fmt(px(t)) << "\" y2=\"" << fmt(H - Bm + 5) << "\"/>";
    o << "<text x=\"" << fmt(px(t)) << "\" y=\"" << fmt(H - Bm + 18) << "\" text-anchor=\"middle\" stroke=\"none\">" << t << "</text>\n";
    o << "<line x1=\"" << fmt(L - 5) << "\" y1=\"" << fmt(py(t)) << "\" x2=\"" << fmt(L) << "\" y2=\"" << fmt(py(t)) << "\"/>";
    o << "<text x=\"" << fmt(L - 8) << "\" y=\"" << fmt(py(t) + 4) << "\" text-anchor=\"end\" stroke=\"none\">" << t << "</text>\n";
  }
  o << "<text x=\"" << fmt(W - R) << "\" y=\"" << fmt(H - 8) << "\" text-anchor=\"end\" stroke=\"none\">h</text>\n";
  o << "<text x=\"14\" y=\"" << fmt(T + 10) << "\" stroke=\"none\">x</text>\n";
  o << "</g>\n";

  o << "<g clip-path=\"url(#plot)\" fill=\"none\">\n";
  o << "<line x1=\"" << fmt(px(lo)) << "\" y1=\"" << fmt(py(lo)) << "\" x2=\"" << fmt(px(hi)) << "\" y2=\"" << fmt(py(hi))
    << "\" stroke=\"gray\" stroke-dasharray=\"2,3\"/>\n";

  // Curve, split into visible runs; increasing runs overlaid in red.
  const double slack = 0.5 * (hi - lo);
  auto flush = [&](std::vector<std::pair<double, double>>& run, const char* style) {
    if (run.size() >= 2) {
      o << "<polyline " << style << " points=\"";
      for (const auto& [a, b] : run) o << fmt(px(a)) << ',' << fmt(py(b)) << ' ';
      o << "\"/>\n";
    }
    run.clear();
  };
  for (const auto& c : an.h_components({lo, hi})) {
    std::vector<HCurvePoint> pts;
    for (double h : SupportAnalyzer::grid(c, samples_per_component)) {
      const auto p = an.curve_unchecked(h);
      if (std::isfinite(p.x) && std::isfinite(p.x1)) pts.push_back(p);
    }
    std::vector<std::pair<double, double>> black, red;
    for (const auto& p : pts) {
      const bool visible = p.x > lo - slack && p.x < hi + slack;
      if (!visible) {
        flush(black, "stroke=\"black\" stroke-width=\"1.2\"");
        flush(red, "stroke=\"red\" stroke-width=\"3.5\"");
        continue;
      }
      black.emplace_back(p.h, p.x);
      if (p.x1 > 0.0)
        red.emplace_back(p.h, p.x);
      else
        flush(red, "stroke=\"red\" stroke-width=\"3.5\"");
    }
    flush(black, "stroke=\"black\" stroke-width=\"1.2\"");
    flush(red, "stroke=\"red\" stroke-width=\"3.5\"");
  }
  o << "</g>\n";

  // Complement of the support projected on the vertical axis.
  o << "<g stroke=\"red\" stroke-width=\"5\">\n";
  for (const auto& g : rep.complement) {
    const double a = std::max(g.lo, lo), b = std::min(g.hi, hi);
    if (a < b) o << "<line x1=\"" << fmt(L) << "\" y1=\"" << fmt(py(a)) << "\" x2=\"" << fmt(L) << "\" y2=\"" << fmt(py(b)) << "\"/>\n";
  }
  o << "</g>\n";

  if (!eigenvalues.empty()) {
    o << "<g stroke=\"black\" stroke-width=\"0.6\">\n";
    for (double v : eigenvalues)
      if (v >= lo && v <= hi)
        o << "<line x1=\"" << fmt(L + 2) << "\" y1=\"" << fmt(py(v)) << "\" x2=\"" << fmt(L + 10) << "\" y2=\"" << fmt(py(v)) << "\"/>\n";
    o << "</g>\n";
  }

  o << "<g fill=\"white\" stroke=\"black\" stroke-width=\"1.2\">\n";
  for (const auto& b : B.atoms())
    if (b.location >= lo && b.location <= hi)
      o << "<circle cx=\"" << fmt(px(b.location)) << "\" cy=\"" << fmt(py(b.location)) << "\" r=\"4\"/>\n";
  o << "</g>\n";
  o << "</svg>\n";
  return o.str();
}

}  // namespace mpspectrum
