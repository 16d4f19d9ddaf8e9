#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "measure.hpp"

namespace mpspectrum {

/// Malformed or inadmissible input; `where` names the offending field.
class ValidationError : public std::runtime_error {
 public:
  ValidationError(const std::string& where, const std::string& what)
      : std::runtime_error(where + ": " + what), where_(where) {}
  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

namespace json_detail {

inline const nlohmann::json& field(const nlohmann::json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) throw ValidationError(path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw ValidationError(path + "." + key, "missing field");
  return *it;
}

inline double number(const nlohmann::json& j, const std::string& path) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
  }
  throw ValidationError(path, "expected a number");
}

inline double number_field(const nlohmann::json& j, const std::string& key, const std::string& path) {
  return number(field(j, key, path), path + "." + key);
}

}  // namespace json_detail

/// Finite numbers as JSON numbers, infinities as the strings "inf"/"-inf".
inline nlohmann::json json_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

inline Measure measure_from_json(const nlohmann::json& j, const std::string& path = "measure") {
  using namespace json_detail;
  const auto& comps = field(j, "components", path);
  if (!comps.is_array() || comps.empty()) throw ValidationError(path + ".components", "expected a non-empty array");
  std::vector<Component> out;
  for (std::size_t i = 0; i < comps.size(); ++i) {
    const std::string cp = path + ".components[" + std::to_string(i) + "]";
    const double w = number_field(comps[i], "weight", cp);
    const auto& part = field(comps[i], "part", cp);
    const std::string pp = cp + ".part";
    const auto& type_j = field(part, "type", pp);
    if (!type_j.is_string()) throw ValidationError(pp + ".type", "expected a string");
    const auto type = type_j.get<std::string>();
    if (type == "atom") {
      out.push_back({w, Atom{number_field(part, "location", pp)}});
    } else if (type == "semicircle") {
      const double c = part.contains("center") ? number_field(part, "center", pp) : 0.0;
      out.push_back({w, Semicircle{number_field(part, "radius", pp), c}});
    } else if (type == "mp") {
      const double s = part.contains("scale") ? number_field(part, "scale", pp) : 1.0;
      out.push_back({w, MarchenkoPastur{number_field(part, "ratio", pp), s}});
    } else if (type == "density_table") {
      const auto& t = field(part, "table", pp);
      if (!t.is_array()) throw ValidationError(pp + ".table", "expected an array of [x, pdf] pairs");
      DensityTable tab;
      for (std::size_t r = 0; r < t.size(); ++r) {
        const std::string rp = pp + ".table[" + std::to_string(r) + "]";
        if (!t[r].is_array() || t[r].size() != 2) throw ValidationError(rp, "expected [x, pdf]");
        tab.x.push_back(number(t[r][0], rp + "[0]"));
        tab.pdf.push_back(number(t[r][1], rp + "[1]"));
      }
      out.push_back({w, std::move(tab)});
    } else {
      throw ValidationError(pp + ".type", "unknown part type '" + type + "'");
    }
  }
  try {
    return Measure(std::move(out));
  } catch (const std::invalid_argument& e) {
    throw ValidationError(path, e.what());
  }
}

inline nlohmann::json measure_to_json(const Measure& mu) {
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : mu.components()) {
    nlohmann::json part;
    std::visit(
        [&](const auto& p) {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, Atom>) {
            part = {{"type", "atom"}, {"location", p.location}};
          } else if constexpr (std::is_same_v<T, Semicircle>) {
            part = {{"type", "semicircle"}, {"radius", p.radius}, {"center", p.center}};
          } else if constexpr (std::is_same_v<T, MarchenkoPastur>) {
            part = {{"type", "mp"}, {"ratio", p.ratio}, {"scale", p.scale}};
          } else if constexpr (std::is_same_v<T, DensityTable>) {
            nlohmann::json t = nlohmann::json::array();
            for (std::size_t i = 0; i < p.x.size(); ++i) t.push_back({p.x[i], p.pdf[i]});
            part = {{"type", "density_table"}, {"table", t}};
          } else {
            throw std::invalid_argument("measure_to_json: callback densities cannot be serialised");
          }
        },
        c.part);
    comps.push_back({{"weight", c.weight}, {"part", part}});
  }
  return {{"components", comps}};
}

inline nlohmann::json interval_union_to_json(const IntervalUnion& u) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& p : u) a.push_back({json_number(p.lo), json_number(p.hi)});
  return a;
}

inline IntervalUnion interval_union_from_json(const nlohmann::json& j, bool closed = true,
                                              const std::string& path = "intervals") {
  if (!j.is_array()) throw ValidationError(path, "expected an array of [lo, hi] pairs");
  std::vector<Interval> v;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    if (!j[i].is_array() || j[i].size() != 2) throw ValidationError(p, "expected [lo, hi]");
    v.push_back({json_detail::number(j[i][0], p + "[0]"), json_detail::number(j[i][1], p + "[1]")});
  }
  return IntervalUnion(std::move(v), closed);
}

}  // namespace mpspectrum
