#pragma once

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "statpath/errors.hpp"
#include "statpath/format.hpp"
#include "statpath/gain.hpp"
#include "statpath/mesh.hpp"
#include "statpath/model.hpp"
#include "statpath/timeseries.hpp"

namespace statpath {

inline void write_text_file(const std::filesystem::path& path,
                            const std::string& content) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw config_error("cannot open " + path.string() + " for writing");
  out << content;
  if (!out) throw config_error("failed writing " + path.string());
}

/// Time-series CSV, the same shape ingest_timeseries_csv reads back:
/// header "t,<dim>,...", one row per epoch, shortest round-trip numbers.
inline std::string timeseries_csv(const ModelSpec& spec,
                                  const TimeSeries& series) {
  std::string out = "t";
  for (int d = 0; d < spec.dim(); ++d) out += "," + spec.dim_name(d);
  out += "\n";
  for (std::size_t r = 0; r < series.epochs.size(); ++r) {
    out += text::fmt_double(series.epochs[r]);
    for (int d = 0; d < spec.dim(); ++d)
      out += "," + text::fmt_double(series.observations[r][d]);
    out += "\n";
  }
  return out;
}

inline std::string timeseries_json(const ModelSpec& spec,
                                   const TimeSeries& series) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t r = 0; r < series.epochs.size(); ++r) {
    nlohmann::json row;
    row["t"] = series.epochs[r];
    for (int d = 0; d < spec.dim(); ++d)
      row[spec.dim_name(d)] = series.observations[r][d];
    rows.push_back(row);
  }
  return rows.dump(2) + "\n";
}

/// Distribution snapshot: one row per mesh cell, the cell-center coordinates
/// followed by the probability mass of the cell.
inline std::string snapshot_csv(const ModelSpec& spec,
                                const Distribution& dist) {
  std::string out;
  for (int d = 0; d < spec.dim(); ++d) {
    if (d) out += ",";
    out += spec.dim_name(d);
  }
  out += ",weight\n";
  for (std::size_t i = 0; i < dist.size(); ++i) {
    auto c = dist.mesh().cell_center(i);
    for (int d = 0; d < spec.dim(); ++d)
      out += text::fmt_double(c[d]) + ",";
    out += text::fmt_double(dist[i]) + "\n";
  }
  return out;
}

inline std::string snapshot_json(const ModelSpec& spec,
                                 const Distribution& dist) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < dist.size(); ++i) {
    nlohmann::json row;
    auto c = dist.mesh().cell_center(i);
    for (int d = 0; d < spec.dim(); ++d) row[spec.dim_name(d)] = c[d];
    row["weight"] = dist[i];
    rows.push_back(row);
  }
  return rows.dump(2) + "\n";
}

/// Per-axis marginal masses: center,mass rows for one flattened dimension.
inline std::string marginal_csv(const ModelSpec& spec,
                                const Distribution& dist, int dim) {
  std::vector<double> m = dist.marginal(dim);
  const MeshAxis& axis = dist.mesh().axis(dim);
  std::string out = spec.dim_name(dim) + ",mass\n";
  for (std::size_t i = 0; i < m.size(); ++i)
    out += text::fmt_double(axis.center(static_cast<int>(i))) + "," +
           text::fmt_double(m[i]) + "\n";
  return out;
}

/// Moment time series: t, then a mean and a variance column per dimension.
inline std::string moments_csv(const ModelSpec& spec,
                               const std::vector<double>& times,
                               const std::vector<std::vector<double>>& means,
                               const std::vector<std::vector<double>>& vars) {
  if (means.size() != times.size() || vars.size() != times.size())
    throw config_error("moment series lengths disagree");
  std::string out = "t";
  for (int d = 0; d < spec.dim(); ++d) out += ",mean_" + spec.dim_name(d);
  for (int d = 0; d < spec.dim(); ++d) out += ",var_" + spec.dim_name(d);
  out += "\n";
  for (std::size_t r = 0; r < times.size(); ++r) {
    out += text::fmt_double(times[r]);
    for (int d = 0; d < spec.dim(); ++d)
      out += "," + text::fmt_double(means[r][d]);
    for (int d = 0; d < spec.dim(); ++d)
      out += "," + text::fmt_double(vars[r][d]);
    out += "\n";
  }
  return out;
}

inline std::string ranked_gains_csv(const std::vector<RankedGain>& ranked) {
  std::string out = "rank,label,expected_gain\n";
  for (std::size_t i = 0; i < ranked.size(); ++i)
    out += std::to_string(i + 1) + "," + ranked[i].label + "," +
           text::fmt_double(ranked[i].expected) + "\n";
  return out;
}

inline std::string ranked_gains_json(const std::vector<RankedGain>& ranked) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < ranked.size(); ++i)
    rows.push_back({{"rank", i + 1},
                    {"label", ranked[i].label},
                    {"expected_gain", ranked[i].expected}});
  return rows.dump(2) + "\n";
}

/// Machine-readable error payload the CLI prints on failure.
inline std::string error_json(const std::string& kind,
                              const std::string& message, int exit_code) {
  nlohmann::json j;
  j["error"] = {{"kind", kind}, {"message", message},
                {"exit_code", exit_code}};
  return j.dump() + "\n";
}

}  // namespace statpath
