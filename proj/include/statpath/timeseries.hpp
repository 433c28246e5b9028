#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "statpath/errors.hpp"
#include "statpath/format.hpp"
#include "statpath/model.hpp"

namespace statpath {

/// Observed state trajectory: one row per epoch, flattened-dimension order.
/// Immutable after load.
struct TimeSeries {
  std::vector<double> epochs;
  std::vector<std::vector<double>> observations;
  bool uniform_dt = false;

  std::size_t size() const { return epochs.size(); }

  double dt() const {
    if (!uniform_dt || epochs.size() < 2)
      throw config_error("time series does not have a uniform time step");
    return (epochs.back() - epochs.front()) /
           static_cast<double>(epochs.size() - 1);
  }
};

namespace detail {

using text::parse_double;
using text::split;
using text::trim;

inline void finalize_series(TimeSeries& ts, const ModelSpec& model) {
  if (ts.epochs.empty()) throw config_error("time series has no epochs");
  for (std::size_t s = 1; s < ts.epochs.size(); ++s) {
    if (!(ts.epochs[s] > ts.epochs[s - 1]))
      throw config_error("non-monotone time at row " + std::to_string(s + 1));
  }
  for (std::size_t s = 0; s < ts.size(); ++s) {
    for (int d = 0; d < model.dim(); ++d) {
      double v = ts.observations[s][d];
      const Variable& var = model.variable_of_dim(d);
      if (!std::isfinite(v))
        throw config_error("non-finite observation for " + model.dim_name(d) +
                           " at epoch t=" + std::to_string(ts.epochs[s]));
      if (v < var.lo || v > var.hi) {
        std::ostringstream os;
        os << "observation " << model.dim_name(d) << "=" << v
           << " at epoch t=" << ts.epochs[s] << " outside declared range ["
           << var.lo << ", " << var.hi << "]";
        throw config_error(os.str());
      }
    }
  }
  ts.uniform_dt = true;
  if (ts.epochs.size() >= 3) {
    double d0 = ts.epochs[1] - ts.epochs[0];
    for (std::size_t s = 2; s < ts.epochs.size(); ++s) {
      double d = ts.epochs[s] - ts.epochs[s - 1];
      if (std::abs(d - d0) > 1e-9 * std::max(std::abs(d0), 1e-300)) {
        ts.uniform_dt = false;
        break;
      }
    }
  }
}

}  // namespace detail

/// Parses "t,<name>,..." CSV text. Column names must cover the model's
/// flattened dimensions exactly (any order); cell suffixes "@r,c" are part of
/// the name for multi-cell models.
inline TimeSeries ingest_timeseries_csv(const std::string& text,
                                        const ModelSpec& model) {
  std::stringstream ss(text);
  std::string line;
  std::vector<std::string> header;
  while (std::getline(ss, line)) {
    if (detail::trim(line).empty()) continue;
    header = detail::split(line, ',');
    break;
  }
  if (header.empty()) throw config_error("time series CSV is empty");
  if (header[0] != "t")
    throw config_error("time series CSV must start with column 't'");
  std::vector<int> col_dim(header.size() - 1, -1);
  std::vector<bool> covered(model.dim(), false);
  for (std::size_t c = 1; c < header.size(); ++c) {
    int found = -1;
    for (int d = 0; d < model.dim(); ++d)
      if (model.dim_name(d) == header[c]) found = d;
    if (found < 0)
      throw config_error("time series column '" + header[c] +
                         "' does not match any declared variable");
    if (covered[found])
      throw config_error("duplicate time series column '" + header[c] + "'");
    covered[found] = true;
    col_dim[c - 1] = found;
  }
  for (int d = 0; d < model.dim(); ++d)
    if (!covered[d])
      throw config_error("time series is missing column '" +
                         model.dim_name(d) + "'");

  TimeSeries ts;
  int row = 1;
  while (std::getline(ss, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    auto cells = detail::split(line, ',');
    if (cells.size() != header.size())
      throw config_error("row " + std::to_string(row) + " has " +
                         std::to_string(cells.size()) + " fields, expected " +
                         std::to_string(header.size()));
    std::string where = "row " + std::to_string(row);
    ts.epochs.push_back(detail::parse_double(cells[0], where));
    std::vector<double> obs(model.dim(), 0.0);
    for (std::size_t c = 1; c < cells.size(); ++c)
      obs[col_dim[c - 1]] = detail::parse_double(cells[c], where);
    ts.observations.push_back(std::move(obs));
  }
  detail::finalize_series(ts, model);
  return ts;
}

/// Parses a JSON array of epoch records: [{"t": 0.0, "<name>": value, ...}].
inline TimeSeries ingest_timeseries_json(const std::string& text,
                                         const ModelSpec& model) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    throw config_error(std::string("time series JSON parse error: ") +
                       e.what());
  }
  if (!j.is_array())
    throw config_error("time series JSON must be an array of epoch records");
  TimeSeries ts;
  int row = 0;
  for (const auto& rec : j) {
    ++row;
    if (!rec.is_object())
      throw config_error("time series record " + std::to_string(row) +
                         " is not an object");
    if (!rec.contains("t"))
      throw config_error("time series record " + std::to_string(row) +
                         " is missing 't'");
    ts.epochs.push_back(rec.at("t").get<double>());
    std::vector<double> obs(model.dim(), 0.0);
    for (int d = 0; d < model.dim(); ++d) {
      std::string name = model.dim_name(d);
      if (!rec.contains(name))
        throw config_error("time series record " + std::to_string(row) +
                           " is missing '" + name + "'");
      obs[d] = rec.at(name).get<double>();
    }
    ts.observations.push_back(std::move(obs));
  }
  detail::finalize_series(ts, model);
  return ts;
}

inline TimeSeries ingest_timeseries(const std::string& text,
                                    const std::string& format,
                                    const ModelSpec& model) {
  if (format == "csv") return ingest_timeseries_csv(text, model);
  if (format == "json") return ingest_timeseries_json(text, model);
  throw config_error("unknown time series format '" + format +
                     "' (expected csv or json)");
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error("cannot open file: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace statpath
