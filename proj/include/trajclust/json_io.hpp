#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "trajclust/common.hpp"

namespace trajclust {

using Json = nlohmann::ordered_json;

namespace detail {

inline void dump_string(std::ostream& os, const std::string& s) {
  os << Json(s).dump();
}

inline void dump_value(std::ostream& os, const Json& j, int indent, int depth) {
  const auto newline = [&](int d) {
    if (indent < 0) return;
    os << '\n' << std::string(static_cast<std::size_t>(indent * d), ' ');
  };
  switch (j.type()) {
    case Json::value_t::object: {
      if (j.empty()) {
        os << "{}";
        return;
      }
      os << '{';
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) os << ',';
        first = false;
        newline(depth + 1);
        dump_string(os, it.key());
        os << (indent < 0 ? ":" : ": ");
        dump_value(os, it.value(), indent, depth + 1);
      }
      newline(depth);
      os << '}';
      return;
    }
    case Json::value_t::array: {
      if (j.empty()) {
        os << "[]";
        return;
      }
      // Arrays of scalars stay on one line.
      bool flat = true;
      for (const auto& e : j) flat = flat && !e.is_structured();
      os << '[';
      bool first = true;
      for (const auto& e : j) {
        if (!first) os << (flat && indent >= 0 ? ", " : ",");
        first = false;
        if (!flat) newline(depth + 1);
        dump_value(os, e, indent, depth + 1);
      }
      if (!flat) newline(depth);
      os << ']';
      return;
    }
    case Json::value_t::number_float: {
      const double v = j.get<double>();
      // JSON has no infinity; encode it as a string marker.
      if (std::isinf(v) || std::isnan(v)) {
        dump_string(os, format_double(v));
      } else {
        os << format_double(v);
      }
      return;
    }
    default:
      os << j.dump();
  }
}

}  // namespace detail

/// Serializes with every float printed at 17 significant digits, so the
/// output is byte-stable across runs and round-trips exactly.
inline std::string dump_json(const Json& j, int indent = 2) {
  std::ostringstream os;
  detail::dump_value(os, j, indent, 0);
  if (indent >= 0) os << '\n';
  return os.str();
}

/// Reads a number that may have been written as an "inf" string marker.
inline double json_number(const Json& j) {
  if (j.is_string()) return parse_double(j.get<std::string>());
  return j.get<double>();
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw DataError(path + ": " + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << text;
}

}  // namespace trajclust
