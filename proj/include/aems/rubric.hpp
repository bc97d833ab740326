// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "aems/config.hpp"
#include "aems/error.hpp"

namespace aems {

/// Named scoring dimensions sharing one ordered scale of legal bands.
struct RubricSpec {
  std::string name;
  std::vector<std::string> dimensions;
  std::vector<double> bands;

  [[nodiscard]] std::size_t num_dimensions() const { return dimensions.size(); }
  [[nodiscard]] std::size_t num_bands() const { return bands.size(); }
  [[nodiscard]] double min_band() const { return bands.front(); }
  [[nodiscard]] double max_band() const { return bands.back(); }

  void validate() const {
    if (dimensions.empty()) throw ConfigError("rubric '" + name + "' has no dimensions");
    if (bands.empty()) throw ConfigError("rubric '" + name + "' has no bands");
    for (std::size_t i = 1; i < bands.size(); ++i)
      if (!(bands[i] > bands[i - 1]))
        throw ConfigError("rubric '" + name + "' bands must be strictly increasing");
    for (std::size_t i = 0; i < dimensions.size(); ++i) {
      if (dimensions[i].empty()) throw ConfigError("rubric dimension names must be nonempty");
      for (std::size_t j = 0; j < i; ++j)
        if (dimensions[i] == dimensions[j])
          throw ConfigError("rubric dimension '" + dimensions[i] + "' listed twice");
    }
  }

  /// Index of a band value, accepting values within `tol` of a legal band.
  [[nodiscard]] std::optional<std::size_t> band_index(double value, double tol = 1e-9) const {
    for (std::size_t i = 0; i < bands.size(); ++i)
      if (std::abs(bands[i] - value) <= tol) return i;
    return std::nullopt;
  }

  [[nodiscard]] std::optional<std::size_t> dimension_index(const std::string& dim) const {
    auto it = std::find(dimensions.begin(), dimensions.end(), dim);
    if (it == dimensions.end()) return std::nullopt;
    return static_cast<std::size_t>(it - dimensions.begin());
  }

  bool operator==(const RubricSpec&) const = default;
};

/// Expands `lo:hi:step` into lo, lo+step, ..., hi.
inline std::vector<double> band_range(double lo, double hi, double step) {
  if (!(step > 0.0) || !(hi >= lo)) throw ConfigError("band range requires lo <= hi and step > 0");
  const double count = (hi - lo) / step;
  const auto n = static_cast<std::size_t>(std::llround(count));
  if (std::abs(count - static_cast<double>(n)) > 1e-9)
    throw ConfigError("band range hi - lo is not a multiple of step");
  std::vector<double> out;
  for (std::size_t i = 0; i <= n; ++i) out.push_back(lo + static_cast<double>(i) * step);
  return out;
}

/// Six analytic dimensions on a 1.0-5.0 half-point scale.
inline RubricSpec ellipse_rubric() {
  return {"ellipse",
          {"cohesion", "syntax", "vocabulary", "phraseology", "grammar", "conventions"},
          band_range(1.0, 5.0, 0.5)};
}

/// Four criteria plus overall on a 4.0-9.0 half-point scale.
inline RubricSpec ielts_rubric() {
  return {"ielts",
          {"task_achievement", "coherence_and_cohesion", "vocabulary", "grammar", "overall"},
          band_range(4.0, 9.0, 0.5)};
}

/// Parses a rubric from `name`, `dimensions = a,b,c` and `bands = lo:hi:step`
/// (or an explicit comma list of band values).
inline RubricSpec parse_rubric_config(const KeyValueConfig& cfg) {
  cfg.reject_unknown({"name", "dimensions", "bands"});
  RubricSpec r;
  r.name = cfg.get_or("name", "custom");
  r.dimensions = split_list(cfg.require("dimensions"));
  const std::string bands = cfg.require("bands");
  const auto parts = split_list(bands, ':');
  if (parts.size() == 3) {
    r.bands = band_range(parse_double(parts[0], "bands"), parse_double(parts[1], "bands"),
                         parse_double(parts[2], "bands"));
  } else {
    for (const auto& b : split_list(bands)) r.bands.push_back(parse_double(b, "bands"));
  }
  r.validate();
  return r;
}

inline std::optional<RubricSpec> rubric_preset(const std::string& name) {
  if (name == "ellipse") return ellipse_rubric();
  if (name == "ielts") return ielts_rubric();
  return std::nullopt;
}

/// Resolves a preset name or a rubric config file path.
inline RubricSpec resolve_rubric(const std::string& name_or_path) {
  if (auto preset = rubric_preset(name_or_path)) return *preset;
  return parse_rubric_config(KeyValueConfig::from_file(name_or_path));
}

}  // namespace aems
