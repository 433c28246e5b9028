#pragma once

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <sstream>
#include <string>
#include <vector>

#include "statpath/errors.hpp"

namespace statpath {
namespace text {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  if (!s.empty() && s.back() == sep) out.push_back("");
  return out;
}

inline std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (ss >> item) out.push_back(item);
  return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
  const std::string t = trim(s);
  if (t.empty()) throw config_error("missing number in " + where);
  try {
    std::size_t pos = 0;
    double v = std::stod(t, &pos);
    if (pos != t.size())
      throw config_error("trailing characters after number '" + t + "' in " +
                         where);
    return v;
  } catch (const config_error&) {
    throw;
  } catch (...) {
    throw config_error("cannot parse number '" + t + "' in " + where);
  }
}

inline long parse_int(const std::string& s, const std::string& where) {
  const std::string t = trim(s);
  try {
    std::size_t pos = 0;
    long v = std::stol(t, &pos);
    if (pos != t.size())
      throw config_error("trailing characters after integer '" + t + "' in " +
                         where);
    return v;
  } catch (const config_error&) {
    throw;
  } catch (...) {
    throw config_error("cannot parse integer '" + t + "' in " + where);
  }
}

inline bool is_identifier(const std::string& s) {
  if (s.empty()) return false;
  if (!(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_'))
    return false;
  for (char c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_'))
      return false;
  return true;
}

/// Shortest decimal string that parses back to exactly the same double.
inline std::string fmt_double(double v) {
  char buf[64];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace text
}  // namespace statpath
