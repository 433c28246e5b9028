#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "statpath/config.hpp"
#include "statpath/errors.hpp"
#include "statpath/fitting.hpp"
#include "statpath/gain.hpp"
#include "statpath/io.hpp"
#include "statpath/langevin.hpp"
#include "statpath/manifest.hpp"
#include "statpath/model.hpp"
#include "statpath/rng.hpp"
#include "statpath/timeseries.hpp"

namespace statpath {

/// Two-outcome response rule scored against the forecast: receive gain_hit
/// with the probability that the named dimension exceeds the threshold,
/// gain_miss otherwise.
struct ResponseRule {
  std::string label;
  std::string dim;
  double threshold = 0.0;
  double gain_hit = 0.0;
  double gain_miss = 0.0;
};

/// A demo scenario: a generating model (whose tagged coefficients double as
/// the fit template), a train/test split, and a response set.
struct ScenarioConfig {
  ModelDecl model;
  int steps = 0;              // synthetic increments to generate
  double split = 0.5;         // fraction of increments used for training
  std::vector<double> start;  // per variable, replicated across cells
  int horizon = 0;            // forecast steps; 0 picks a default
  long forecast_trajectories = 20000;
  std::vector<ResponseRule> responses;
};

inline ScenarioConfig parse_scenario(const std::string& text_in) {
  using config_detail::at_line;
  // [run] holds tool-level defaults and is not part of the scenario proper;
  // extract it here too so a file with one parses standalone.
  auto [taken, remainder] =
      extract_sections(text_in, {"scenario", "responses", "run"});

  ScenarioConfig sc;
  bool saw_scenario = false;
  for (const auto& sec : taken) {
    if (sec.header[0] == "run") continue;
    if (sec.header[0] == "scenario") {
      if (sec.header.size() != 1)
        throw at_line(sec.line, "section [scenario] takes no arguments");
      if (saw_scenario)
        throw at_line(sec.line, "duplicate [scenario] section");
      saw_scenario = true;
      for (const auto& l : sec.body) {
        auto eq = l.text.find('=');
        if (eq == std::string::npos)
          throw at_line(l.number, "expected 'key = value'");
        std::string key = text::trim(l.text.substr(0, eq));
        std::string value = text::trim(l.text.substr(eq + 1));
        if (key == "steps") {
          sc.steps = static_cast<int>(text::parse_int(value, "steps"));
        } else if (key == "split") {
          sc.split = text::parse_double(value, "split");
        } else if (key == "start") {
          sc.start.clear();
          for (const auto& tok : text::split_ws(value))
            sc.start.push_back(text::parse_double(tok, "start value"));
        } else if (key == "horizon") {
          sc.horizon = static_cast<int>(text::parse_int(value, "horizon"));
        } else if (key == "forecast_trajectories") {
          sc.forecast_trajectories =
              text::parse_int(value, "forecast_trajectories");
        } else {
          throw at_line(l.number, "unknown key '" + key + "' in [scenario]");
        }
      }
    } else {  // responses
      if (sec.header.size() != 1)
        throw at_line(sec.line, "section [responses] takes no arguments");
      for (const auto& l : sec.body) {
        auto eq = l.text.find('=');
        if (eq == std::string::npos)
          throw at_line(l.number,
                        "expected 'label = dim threshold gain_hit gain_miss'");
        ResponseRule r;
        r.label = text::trim(l.text.substr(0, eq));
        if (r.label.empty()) throw at_line(l.number, "empty response label");
        auto fields = text::split_ws(text::trim(l.text.substr(eq + 1)));
        if (fields.size() != 4)
          throw at_line(l.number,
                        "expected 'label = dim threshold gain_hit gain_miss'");
        r.dim = fields[0];
        r.threshold = text::parse_double(fields[1], "response threshold");
        r.gain_hit = text::parse_double(fields[2], "response gain");
        r.gain_miss = text::parse_double(fields[3], "response gain");
        sc.responses.push_back(std::move(r));
      }
    }
  }
  if (!saw_scenario)
    throw config_error("scenario config is missing the [scenario] section");

  sc.model = parse_model_decl(remainder);
  if (sc.steps < 10)
    throw config_error("scenario needs steps >= 10");
  if (!(sc.split > 0.0 && sc.split < 1.0))
    throw config_error("scenario split must be strictly between 0 and 1");
  if (sc.start.size() != sc.model.variables.size())
    throw config_error("scenario start needs one value per variable");
  if (sc.horizon < 0) throw config_error("scenario horizon must be >= 0");
  if (sc.forecast_trajectories < 100)
    throw config_error("scenario needs forecast_trajectories >= 100");
  return sc;
}

struct DemoOptions {
  FitOptions fit;
  LangevinOptions langevin;

  DemoOptions() {
    // Desk-scale annealing budget; the polish phase does the fine work.
    fit.anneal.restarts = 2;
    fit.anneal.evals_per_level_per_dim = 30;
    fit.anneal.max_evaluations_per_restart = 4000;
    fit.anneal.final_temperature_ratio = 1e-3;
    langevin.store_trajectories = false;
  }
};

struct DemoResult {
  std::filesystem::path run_dir;
  FitResult fit;
  std::size_t train_increments = 0;
  std::size_t test_increments = 0;
  double in_sample_nll_per_step = 0.0;
  double out_of_sample_nll_per_step = 0.0;
  std::vector<RankedGain> gains;
};

namespace detail {

template <typename F>
auto demo_stage(const std::string& name, F&& body) -> decltype(body()) {
  auto wrap = [&](const std::string& msg) { return "stage " + name + ": " + msg; };
  try {
    return body();
  } catch (const degenerate_metric_error& e) {
    throw degenerate_metric_error(wrap(e.what()));
  } catch (const nonconvergence_error& e) {
    throw nonconvergence_error(wrap(e.what()));
  } catch (const numerical_error& e) {
    throw numerical_error(wrap(e.what()));
  } catch (const validation_error& e) {
    throw validation_error(wrap(e.what()));
  } catch (const config_error& e) {
    throw config_error(wrap(e.what()));
  }
}

inline TimeSeries slice_series(const TimeSeries& full, std::size_t first,
                               std::size_t last) {
  TimeSeries out;
  out.uniform_dt = full.uniform_dt;
  for (std::size_t r = first; r <= last; ++r) {
    out.epochs.push_back(full.epochs[r]);
    out.observations.push_back(full.observations[r]);
  }
  return out;
}

inline std::vector<double> normalized_masses(std::vector<double> counts) {
  double s = 0.0;
  for (double c : counts) s += c;
  if (!(s > 0.0)) throw numerical_error("empty histogram");
  for (double& c : counts) c /= s;
  return counts;
}

}  // namespace detail

/// The end-to-end grid-tracking demonstration: synthesize target motion on
/// the cell lattice, fit the tagged coefficients on the early split,
/// evaluate held-out likelihood on the late split, forecast by ensemble
/// simulation under the fitted model, and score the configured responses by
/// expected gain. Every artifact lands under `run_dir` with a manifest;
/// identical inputs and seed reproduce the directory byte for byte.
inline DemoResult demo_radar(const std::string& scenario_text,
                             const std::string& scenario_name,
                             std::uint64_t seed,
                             const std::filesystem::path& run_dir,
                             const DemoOptions& opt = {}) {
  RunManifest manifest("demo-radar", seed, "csv");
  manifest.set_config(scenario_name, scenario_text);

  // -- parse ---------------------------------------------------------------
  ScenarioConfig sc = detail::demo_stage(
      "parse", [&] { return parse_scenario(scenario_text); });
  ModelSpec truth = detail::demo_stage("parse",
                                       [&] { return build_model(sc.model); });
  FitTemplate tmpl = detail::demo_stage(
      "parse", [&] { return FitTemplate(sc.model); });

  manifest.emit(run_dir, "model/scenario.cfg", scenario_text);
  manifest.emit(run_dir, "model/model.cfg", serialize_model(truth));

  // -- simulate ------------------------------------------------------------
  std::vector<double> start_joint(truth.dim());
  for (int cell = 0; cell < truth.n_cells(); ++cell)
    for (int v = 0; v < truth.n_vars(); ++v)
      start_joint[truth.flat_dim(v, cell)] = sc.start[v];

  TimeSeries full = detail::demo_stage("simulate", [&] {
    LangevinOptions lo = opt.langevin;
    lo.store_trajectories = true;
    EnsembleResult ens =
        simulate_ensemble(truth, start_joint, 1, sc.steps, seed, lo);
    const Trajectory& tr = ens.trajectories().front();
    TimeSeries ts;
    ts.uniform_dt = true;
    for (std::size_t s = 0; s < tr.states.size(); ++s) {
      ts.epochs.push_back(truth.dt * static_cast<double>(s));
      ts.observations.push_back(tr.states[s]);
    }
    return ts;
  });

  const std::size_t n_inc = full.epochs.size() - 1;
  std::size_t train_inc =
      static_cast<std::size_t>(std::llround(sc.split * n_inc));
  const std::size_t min_train = static_cast<std::size_t>(tmpl.size()) + 2;
  train_inc = std::max(train_inc, min_train);
  if (train_inc + 2 > n_inc)
    throw config_error(
        "stage simulate: split leaves fewer than two test increments");
  TimeSeries train = detail::slice_series(full, 0, train_inc);
  TimeSeries test = detail::slice_series(full, train_inc, n_inc);

  manifest.emit(run_dir, "data/full.csv", timeseries_csv(truth, full));
  manifest.emit(run_dir, "data/train.csv", timeseries_csv(truth, train));
  manifest.emit(run_dir, "data/test.csv", timeseries_csv(truth, test));

  // -- fit -----------------------------------------------------------------
  FitResult fr = detail::demo_stage(
      "fit", [&] { return fit(tmpl, train, seed, opt.fit); });

  manifest.emit(run_dir, "model/fitted.cfg", serialize_model(fr.fitted));
  {
    nlohmann::json j;
    for (std::size_t i = 0; i < fr.names.size(); ++i)
      j["coefficients"][fr.names[i]] = fr.coefficients[i];
    j["nll"] = fr.nll;
    j["action"] = fr.action;
    j["log_prefactor_sum"] = fr.log_prefactor_sum;
    j["evaluations"] = fr.evaluations;
    j["per_step_nll"] = fr.per_step_nll(train.epochs.size() - 1);
    manifest.emit(run_dir, "fit/result.json", j.dump(2) + "\n");
  }
  {
    std::string trace = "evaluation,objective,temperature\n";
    for (const auto& p : fr.trace)
      trace += std::to_string(p.evaluation) + "," +
               text::fmt_double(p.objective) + "," +
               text::fmt_double(p.temperature) + "\n";
    manifest.emit(run_dir, "fit/trace.csv", trace);
  }

  // -- evaluate ------------------------------------------------------------
  GeometryEngine fitted_geom(fr.fitted);
  double is_per_step = fr.per_step_nll(train.epochs.size() - 1);
  double oos_per_step = detail::demo_stage("evaluate", [&] {
    PathAction pa = action_of_data(fitted_geom, test, opt.fit.disc);
    return (pa.action - pa.log_prefactor_sum) /
           static_cast<double>(test.epochs.size() - 1);
  });
  {
    nlohmann::json j;
    j["train_increments"] = train.epochs.size() - 1;
    j["test_increments"] = test.epochs.size() - 1;
    j["in_sample_nll_per_step"] = is_per_step;
    j["out_of_sample_nll_per_step"] = oos_per_step;
    j["oos_over_is"] = oos_per_step / is_per_step;
    manifest.emit(run_dir, "metrics.json", j.dump(2) + "\n");
  }

  // -- forecast ------------------------------------------------------------
  int horizon = sc.horizon > 0
                    ? sc.horizon
                    : static_cast<int>(std::min<std::size_t>(
                          200, test.epochs.size() - 1));
  EnsembleResult forecast = detail::demo_stage("forecast", [&] {
    return simulate_ensemble(fr.fitted, full.observations[train_inc],
                             sc.forecast_trajectories, horizon,
                             mix_seed(seed, 7001), opt.langevin);
  });
  const double t_final = fr.fitted.dt * horizon;
  {
    std::vector<double> times;
    std::vector<std::vector<double>> means, vars;
    for (int s = 0; s <= horizon; ++s) {
      times.push_back(fr.fitted.dt * s);
      means.push_back(forecast.mean_at(s));
      std::vector<double> v(fr.fitted.dim());
      for (int d = 0; d < fr.fitted.dim(); ++d)
        v[d] = forecast.variance_at(s, d);
      vars.push_back(std::move(v));
    }
    manifest.emit(run_dir, "predict/forecast_moments.csv",
                  moments_csv(fr.fitted, times, means, vars));
  }
  {
    std::string occ = "dim,mean,variance,lo,hi\n";
    std::string marg = "dim,center,mass\n";
    auto final_means = forecast.mean_at(horizon);
    for (int d = 0; d < fr.fitted.dim(); ++d) {
      auto masses = detail::normalized_masses(
          forecast.marginal_histogram_at(t_final, d));
      const MeshAxis& axis = fr.fitted.mesh().axis(d);
      double lo = detail::marginal_quantile(masses, axis, 0.05);
      double hi = detail::marginal_quantile(masses, axis, 0.95);
      occ += fr.fitted.dim_name(d) + "," + text::fmt_double(final_means[d]) +
             "," + text::fmt_double(forecast.variance_at(horizon, d)) + "," +
             text::fmt_double(lo) + "," + text::fmt_double(hi) + "\n";
      for (std::size_t i = 0; i < masses.size(); ++i)
        marg += fr.fitted.dim_name(d) + "," +
                text::fmt_double(axis.center(static_cast<int>(i))) + "," +
                text::fmt_double(masses[i]) + "\n";
    }
    manifest.emit(run_dir, "predict/occupancy.csv", occ);
    manifest.emit(run_dir, "predict/marginals.csv", marg);
  }

  // -- gain ----------------------------------------------------------------
  std::vector<RankedGain> ranked = detail::demo_stage("gain", [&] {
    std::vector<ResponseOption> options;
    for (const auto& r : sc.responses) {
      int dim = -1;
      for (int d = 0; d < fr.fitted.dim(); ++d)
        if (fr.fitted.dim_name(d) == r.dim) dim = d;
      if (dim < 0)
        throw config_error("response '" + r.label +
                           "' references unknown dimension '" + r.dim + "'");
      auto masses = detail::normalized_masses(
          forecast.marginal_histogram_at(t_final, dim));
      const MeshAxis& axis = fr.fitted.mesh().axis(dim);
      double p_hit = 0.0;
      for (std::size_t i = 0; i < masses.size(); ++i)
        if (axis.center(static_cast<int>(i)) > r.threshold)
          p_hit += masses[i];
      options.push_back({r.label,
                         {r.gain_hit, r.gain_miss},
                         {p_hit, 1.0 - p_hit},
                         true});
    }
    return expected_gain(options);
  });
  if (!ranked.empty()) {
    manifest.emit(run_dir, "gain/gains.csv", ranked_gains_csv(ranked));
    manifest.emit(run_dir, "gain/gains.json", ranked_gains_json(ranked));
  }

  manifest.write(run_dir);

  DemoResult out;
  out.run_dir = run_dir;
  out.fit = std::move(fr);
  out.train_increments = train.epochs.size() - 1;
  out.test_increments = test.epochs.size() - 1;
  out.in_sample_nll_per_step = is_per_step;
  out.out_of_sample_nll_per_step = oos_per_step;
  out.gains = std::move(ranked);
  return out;
}

/// Collects the plot-ready artifacts of a finished run into plots/ with
/// stable names: objective traces, moment series, snapshots, marginals,
/// minima tables, gains. Errors when the directory holds none of them.
inline std::vector<std::string> emit_plotdata(
    const std::filesystem::path& run_dir) {
  if (!std::filesystem::exists(run_dir / "manifest.json"))
    throw config_error("incomplete run directory: missing manifest.json in " +
                       run_dir.string());
  static const std::pair<const char*, const char*> mapping[] = {
      {"fit/trace.csv", "plots/objective_trace.csv"},
      {"fit/minima.csv", "plots/minima.csv"},
      {"predict/snapshot.csv", "plots/snapshot.csv"},
      {"predict/forecast_moments.csv", "plots/moments.csv"},
      {"predict/marginals.csv", "plots/marginals.csv"},
      {"data/series.csv", "plots/series.csv"},
      {"data/moments.csv", "plots/series_moments.csv"},
      {"gain/gains.csv", "plots/gains.csv"},
  };
  std::vector<std::string> written;
  for (const auto& [src, dst] : mapping) {
    auto src_path = run_dir / src;
    if (!std::filesystem::exists(src_path)) continue;
    write_text_file(run_dir / dst, read_text_file(src_path.string()));
    written.push_back(dst);
  }
  if (written.empty())
    throw config_error("incomplete run directory: no plottable artifacts in " +
                       run_dir.string());
  return written;
}

}  // namespace statpath
