#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "flatff/vec3.hpp"

namespace flatff::detail {

using Json = nlohmann::json;

inline Json vec3_list_to_json(const std::vector<Vec3>& v) {
  Json out = Json::array();
  for (const Vec3& x : v) out.push_back({x[0], x[1], x[2]});
  return out;
}

inline std::vector<Vec3> vec3_list_from_json(const Json& j) {
  std::vector<Vec3> out;
  out.reserve(j.size());
  for (const Json& row : j) {
    if (!row.is_array() || row.size() != 3) {
      throw std::runtime_error("expected [x, y, z] triple");
    }
    out.emplace_back(row[0].get<double>(), row[1].get<double>(), row[2].get<double>());
  }
  return out;
}

/// NaN and infinities are written as null.
inline Json number_or_null(double v) {
  return std::isfinite(v) ? Json(v) : Json(nullptr);
}

inline double number_or_nan(const Json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

/// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace flatff::detail
