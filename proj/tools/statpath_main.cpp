// statpath: command-line front end for the statistical-path toolkit.
//
// Subcommands: simulate, propagate, fit, predict, scan, mpp, sample-paths,
// lattice-sample, gain, demo-radar. Global flags --config/--seed/--out-dir/
// --format resolve with precedence: command line > environment
// (STATPATH_CONFIG, STATPATH_SEED, STATPATH_OUT_DIR, STATPATH_FORMAT) >
// [run] section of the config file > built-in default.
//
// Exit codes: 0 ok, 2 configuration error, 3 numerical error,
// 4 non-convergence, 1 unexpected internal error. Failures print a one-line
// machine-readable JSON object to stderr.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "statpath/statpath.hpp"

namespace sp = statpath;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
  std::string config;
  std::uint64_t seed = 2026;
  std::string out_dir;
  std::string format = "csv";
  CLI::Option* config_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* out_opt = nullptr;
  CLI::Option* format_opt = nullptr;
};

struct LoadedConfig {
  std::string raw;        // full file content (manifest fingerprint)
  std::string model_text; // with [run] blanked
  std::string name;       // basename for the manifest
};

/// Reads the config file and applies its [run] section to any global not
/// already set on the command line or environment.
LoadedConfig load_config(Globals& g, const std::string& active_subcommand) {
  if (g.config.empty())
    throw sp::config_error("no config file given (--config or "
                           "STATPATH_CONFIG)");
  LoadedConfig lc;
  lc.raw = sp::read_text_file(g.config);
  lc.name = fs::path(g.config).filename().string();
  auto [run_sections, remainder] = sp::extract_sections(lc.raw, {"run"});
  lc.model_text = std::move(remainder);
  for (const auto& sec : run_sections) {
    for (const auto& l : sec.body) {
      auto eq = l.text.find('=');
      if (eq == std::string::npos)
        throw sp::config_error("line " + std::to_string(l.number) +
                               ": expected 'key = value' in [run]");
      std::string key = sp::text::trim(l.text.substr(0, eq));
      std::string value = sp::text::trim(l.text.substr(eq + 1));
      if (key == "seed") {
        if (g.seed_opt->count() == 0)
          g.seed = static_cast<std::uint64_t>(
              sp::text::parse_int(value, "run seed"));
      } else if (key == "out_dir") {
        if (g.out_opt->count() == 0) g.out_dir = value;
      } else if (key == "format") {
        if (g.format_opt->count() == 0) g.format = value;
      } else {
        throw sp::config_error("line " + std::to_string(l.number) +
                               ": unknown key '" + key + "' in [run]");
      }
    }
  }
  if (g.format != "csv" && g.format != "json")
    throw sp::config_error("format must be csv or json");
  if (g.out_dir.empty()) g.out_dir = "runs/" + active_subcommand;
  return lc;
}

sp::ModelSpec load_model(const LoadedConfig& lc) {
  return sp::build_model(sp::parse_model_decl(lc.model_text));
}

std::vector<double> parse_state(const std::string& text,
                                const sp::ModelSpec& spec,
                                const char* what) {
  std::vector<double> vals;
  for (auto& tok : sp::text::split_ws(text))
    vals.push_back(sp::text::parse_double(tok, what));
  if (static_cast<int>(vals.size()) == spec.dim()) return vals;
  if (static_cast<int>(vals.size()) == spec.n_vars()) {
    std::vector<double> joint(spec.dim());
    for (int cell = 0; cell < spec.n_cells(); ++cell)
      for (int v = 0; v < spec.n_vars(); ++v)
        joint[spec.flat_dim(v, cell)] = vals[v];
    return joint;
  }
  throw sp::config_error(std::string(what) + " needs " +
                         std::to_string(spec.n_vars()) + " values (one per "
                         "variable, replicated across cells) or " +
                         std::to_string(spec.dim()) +
                         " values (every dimension)");
}

sp::Discretization parse_disc(const std::string& s) {
  if (s == "midpoint") return sp::Discretization::midpoint;
  if (s == "prepoint") return sp::Discretization::prepoint;
  throw sp::config_error("discretization must be midpoint or prepoint");
}

void print_summary(const json& j) { std::cout << j.dump(2) << "\n"; }

json files_json(const std::vector<std::string>& files,
                const std::string& out_dir) {
  json j;
  j["out_dir"] = out_dir;
  j["files"] = files;
  return j;
}

/// Writes a snapshot set for a distribution: joint snapshot when the mesh is
/// small enough, per-dimension marginals always, single-row moments.
std::vector<std::string> write_distribution(sp::RunManifest& man,
                                            const fs::path& out_dir,
                                            const sp::ModelSpec& spec,
                                            const sp::Distribution& dist,
                                            double t_final,
                                            const std::string& format) {
  std::vector<std::string> files;
  const bool as_json = format == "json";
  if (dist.size() <= 65536) {
    std::string name = as_json ? "predict/snapshot.json"
                               : "predict/snapshot.csv";
    man.emit(out_dir, name,
             as_json ? sp::snapshot_json(spec, dist)
                     : sp::snapshot_csv(spec, dist));
    files.push_back(name);
  }
  {
    std::string marg = "dim,center,mass\n";
    for (int d = 0; d < spec.dim(); ++d) {
      auto masses = dist.marginal(d);
      const auto& axis = dist.mesh().axis(d);
      for (std::size_t i = 0; i < masses.size(); ++i)
        marg += spec.dim_name(d) + "," +
                sp::text::fmt_double(axis.center(static_cast<int>(i))) + "," +
                sp::text::fmt_double(masses[i]) + "\n";
    }
    man.emit(out_dir, "predict/marginals.csv", marg);
    files.push_back("predict/marginals.csv");
  }
  {
    std::vector<std::vector<double>> means{dist.mean()};
    std::vector<double> v(spec.dim());
    for (int d = 0; d < spec.dim(); ++d) v[d] = dist.variance(d);
    man.emit(out_dir, "predict/moments.csv",
             sp::moments_csv(spec, {t_final}, means, {v}));
    files.push_back("predict/moments.csv");
  }
  return files;
}

int dispatch(int argc, char** argv) {
  CLI::App app{"statistical-path modeling, propagation, fitting, and "
               "response scoring"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", "statpath 1.0.0");

  Globals g;
  g.config_opt = app.add_option("--config", g.config, "model/scenario file")
                     ->envname("STATPATH_CONFIG");
  g.seed_opt = app.add_option("--seed", g.seed, "master RNG seed")
                   ->envname("STATPATH_SEED");
  g.out_opt = app.add_option("--out-dir", g.out_dir, "run directory")
                  ->envname("STATPATH_OUT_DIR");
  g.format_opt = app.add_option("--format", g.format, "csv or json")
                     ->envname("STATPATH_FORMAT")
                     ->check(CLI::IsMember({"csv", "json"}));

  // ---- simulate ----------------------------------------------------------
  auto* sim = app.add_subcommand(
      "simulate", "integrate stochastic trajectories of the model");
  int sim_steps = 100;
  long sim_traj = 1;
  std::string sim_start, sim_boundary = "reflecting";
  sim->add_option("--steps", sim_steps, "number of time steps");
  sim->add_option("--trajectories", sim_traj, "ensemble size");
  sim->add_option("--start", sim_start, "initial state values")->required();
  sim->add_option("--boundary", sim_boundary, "reflecting or absorbing")
      ->check(CLI::IsMember({"reflecting", "absorbing"}));
  sim->callback([&] {
    LoadedConfig lc = load_config(g, "simulate");
    sp::ModelSpec spec = load_model(lc);
    auto start = parse_state(sim_start, spec, "start");
    sp::LangevinOptions lo;
    lo.boundary = sim_boundary == "absorbing" ? sp::BoundaryMode::absorbing
                                              : sp::BoundaryMode::reflecting;
    lo.store_trajectories = sim_traj == 1;
    sp::EnsembleResult ens =
        sp::simulate_ensemble(spec, start, sim_traj, sim_steps, g.seed, lo);
    sp::RunManifest man("simulate", g.seed, g.format);
    man.set_config(lc.name, lc.raw);
    std::vector<std::string> files;
    if (sim_traj == 1) {
      const sp::Trajectory& tr = ens.trajectories().front();
      sp::TimeSeries ts;
      ts.uniform_dt = true;
      for (std::size_t s = 0; s < tr.states.size(); ++s) {
        ts.epochs.push_back(spec.dt * static_cast<double>(s));
        ts.observations.push_back(tr.states[s]);
      }
      std::string name =
          g.format == "json" ? "data/series.json" : "data/series.csv";
      man.emit(g.out_dir, name,
               g.format == "json" ? sp::timeseries_json(spec, ts)
                                  : sp::timeseries_csv(spec, ts));
      files.push_back(name);
    } else {
      std::vector<double> times;
      std::vector<std::vector<double>> means, vars;
      for (int s = 0; s <= sim_steps; ++s) {
        times.push_back(spec.dt * s);
        means.push_back(ens.mean_at(s));
        std::vector<double> v(spec.dim());
        for (int d = 0; d < spec.dim(); ++d) v[d] = ens.variance_at(s, d);
        vars.push_back(std::move(v));
      }
      man.emit(g.out_dir, "data/moments.csv",
               sp::moments_csv(spec, times, means, vars));
      files.push_back("data/moments.csv");
      std::string marg = "dim,center,mass\n";
      double t_final = spec.dt * sim_steps;
      for (int d = 0; d < spec.dim(); ++d) {
        auto counts = ens.marginal_histogram_at(t_final, d);
        double total = 0.0;
        for (double c : counts) total += c;
        const auto& axis = spec.mesh().axis(d);
        for (std::size_t i = 0; i < counts.size(); ++i)
          marg += spec.dim_name(d) + "," +
                  sp::text::fmt_double(axis.center(static_cast<int>(i))) +
                  "," + sp::text::fmt_double(counts[i] / total) + "\n";
      }
      man.emit(g.out_dir, "data/marginals.csv", marg);
      files.push_back("data/marginals.csv");
    }
    man.write(g.out_dir);
    print_summary(files_json(files, g.out_dir));
  });

  // ---- propagate ---------------------------------------------------------
  auto* prop = app.add_subcommand(
      "propagate", "evolve a probability distribution forward in time");
  int prop_steps = 100;
  std::string prop_method = "pathint", prop_disc = "midpoint";
  std::string prop_start;
  bool prop_uniform = false;
  prop->add_option("--steps", prop_steps, "number of time steps");
  prop->add_option("--method", prop_method,
                   "pathint (transition kernel) or fpe (finite difference)")
      ->check(CLI::IsMember({"pathint", "fpe"}));
  prop->add_option("--discretization", prop_disc, "midpoint or prepoint")
      ->check(CLI::IsMember({"midpoint", "prepoint"}));
  prop->add_option("--start", prop_start, "delta-start state values");
  prop->add_flag("--uniform", prop_uniform, "start from a uniform spread");
  prop->callback([&] {
    LoadedConfig lc = load_config(g, "propagate");
    sp::ModelSpec spec = load_model(lc);
    sp::Distribution P0 = [&] {
      if (prop_uniform) return sp::Distribution::uniform(spec.mesh());
      if (prop_start.empty())
        throw sp::config_error("give --start values or --uniform");
      return sp::Distribution::delta(spec.mesh(),
                                     parse_state(prop_start, spec, "start"));
    }();
    sp::Distribution out = P0;
    if (prop_steps > 0) {
      if (prop_method == "fpe") {
        sp::FpeOptions fo;
        sp::FDOperator op = sp::build_fd_operator(spec, fo);
        out = sp::propagate_fpe(op, P0, spec.dt * prop_steps, spec.dt);
      } else {
        sp::GeometryEngine geom(spec);
        sp::LatticePropagateOptions po;
        po.disc = parse_disc(prop_disc);
        out = sp::lattice_kernel_propagate(geom, P0, prop_steps, po)
                  .distribution;
      }
    }
    sp::RunManifest man("propagate", g.seed, g.format);
    man.set_config(lc.name, lc.raw);
    auto files = write_distribution(man, g.out_dir, spec, out,
                                    spec.dt * prop_steps, g.format);
    man.write(g.out_dir);
    print_summary(files_json(files, g.out_dir));
  });

  // ---- fit ---------------------------------------------------------------
  auto* fit_cmd = app.add_subcommand(
      "fit", "estimate tagged coefficients from observed series");
  std::string fit_data, fit_disc = "prepoint";
  fit_cmd->add_option("--data", fit_data, "observed time-series file")
      ->required();
  fit_cmd->add_option("--discretization", fit_disc, "midpoint or prepoint")
      ->check(CLI::IsMember({"midpoint", "prepoint"}));
  fit_cmd->callback([&] {
    LoadedConfig lc = load_config(g, "fit");
    sp::ModelSpec spec = load_model(lc);
    sp::FitTemplate tmpl = sp::FitTemplate::from_model(spec);
    std::string data_text = sp::read_text_file(fit_data);
    std::string data_format =
        fs::path(fit_data).extension() == ".json" ? "json" : "csv";
    sp::TimeSeries data =
        sp::ingest_timeseries(data_text, data_format, spec);
    sp::FitOptions fo;
    fo.disc = parse_disc(fit_disc);
    sp::FitResult fr = sp::fit(tmpl, data, g.seed, fo);
    sp::RunManifest man("fit", g.seed, g.format);
    man.set_config(lc.name, lc.raw);
    man.emit(g.out_dir, "model/fitted.cfg", sp::serialize_model(fr.fitted));
    json rj;
    for (std::size_t i = 0; i < fr.names.size(); ++i)
      rj["coefficients"][fr.names[i]] = fr.coefficients[i];
    rj["nll"] = fr.nll;
    rj["action"] = fr.action;
    rj["log_prefactor_sum"] = fr.log_prefactor_sum;
    rj["evaluations"] = fr.evaluations;
    rj["per_step_nll"] = fr.per_step_nll(data.epochs.size() - 1);
    man.emit(g.out_dir, "fit/result.json", rj.dump(2) + "\n");
    std::string trace = "evaluation,objective,temperature\n";
    for (const auto& p : fr.trace)
      trace += std::to_string(p.evaluation) + "," +
               sp::text::fmt_double(p.objective) + "," +
               sp::text::fmt_double(p.temperature) + "\n";
    man.emit(g.out_dir, "fit/trace.csv", trace);
    man.write(g.out_dir);
    print_summary(rj);
  });

  // ---- predict -----------------------------------------------------------
  auto* pred = app.add_subcommand(
      "predict", "propagate a fitted model and summarize the forecast");
  int pred_horizon = 0;
  std::string pred_start, pred_data, pred_disc = "midpoint";
  pred->add_option("--horizon", pred_horizon, "forecast steps")->required();
  pred->add_option("--start", pred_start, "current state values");
  pred->add_option("--data", pred_data,
                   "series file whose last row is the current state");
  pred->add_option("--discretization", pred_disc, "midpoint or prepoint")
      ->check(CLI::IsMember({"midpoint", "prepoint"}));
  pred->callback([&] {
    LoadedConfig lc = load_config(g, "predict");
    sp::ModelSpec spec = load_model(lc);
    std::vector<double> state;
    if (!pred_start.empty()) {
      state = parse_state(pred_start, spec, "start");
    } else if (!pred_data.empty()) {
      std::string text = sp::read_text_file(pred_data);
      std::string fmt =
          fs::path(pred_data).extension() == ".json" ? "json" : "csv";
      sp::TimeSeries ts = sp::ingest_timeseries(text, fmt, spec);
      state = ts.observations.back();
    } else {
      throw sp::config_error("give --start or --data");
    }
    sp::GeometryEngine geom(spec);
    sp::PredictOptions po;
    po.disc = parse_disc(pred_disc);
    sp::PredictResult pr = sp::predict(geom, state, pred_horizon, po);
    sp::RunManifest man("predict", g.seed, g.format);
    man.set_config(lc.name, lc.raw);
    auto files = write_distribution(man, g.out_dir, spec, pr.distribution,
                                    spec.dt * pred_horizon, g.format);
    json sj;
    sj["horizon"] = pred_horizon;
    sj["mean"] = pr.summary.mean;
    for (int d = 0; d < spec.dim(); ++d)
      sj["credible_intervals"][spec.dim_name(d)] = {
          {"lo", pr.summary.intervals[d].lo},
          {"hi", pr.summary.intervals[d].hi},
          {"mass", pr.summary.credible_mass}};
    for (int a = 0; a < spec.dim(); ++a)
      for (int b = 0; b < spec.dim(); ++b)
        sj["covariance"][spec.dim_name(a)][spec.dim_name(b)] =
            pr.summary.covariance(a, b);
    man.emit(g.out_dir, "predict/summary.json", sj.dump(2) + "\n");
    files.push_back("predict/summary.json");
    man.write(g.out_dir);
    print_summary(sj);
  });

  // ---- scan --------------------------------------------------------------
  auto* scan_cmd = app.add_subcommand(
      "scan", "coarse grid search for objective minima over coefficients");
  std::string scan_data;
  int scan_points = 11, scan_stride = 1;
  scan_cmd->add_option("--data", scan_data, "observed time-series file")
      ->required();
  scan_cmd->add_option("--points", scan_points, "grid points per axis");
  scan_cmd->add_option("--stride", scan_stride, "use every k-th epoch");
  scan_cmd->callback([&] {
    LoadedConfig lc = load_config(g, "scan");
    sp::ModelSpec spec = load_model(lc);
    sp::FitTemplate tmpl = sp::FitTemplate::from_model(spec);
    std::string data_text = sp::read_text_file(scan_data);
    std::string data_format =
        fs::path(scan_data).extension() == ".json" ? "json" : "csv";
    sp::TimeSeries data =
        sp::ingest_timeseries(data_text, data_format, spec);
    sp::ScanOptions so;
    so.points_per_axis = scan_points;
    so.epoch_stride = scan_stride;
    auto minima = sp::scan_minima(tmpl, data, so);
    sp::RunManifest man("scan", g.seed, g.format);
    man.set_config(lc.name, lc.raw);
    std::string csv = "rank";
    for (const auto& c : tmpl.coefficients()) csv += "," + c.name;
    csv += ",objective\n";
    json mj = json::array();
    for (std::size_t i = 0; i < minima.size(); ++i) {
      csv += std::to_string(i + 1);
      json row;
      row["rank"] = i + 1;
      for (int k = 0; k < tmpl.size(); ++k) {
        csv += "," + sp::text::fmt_double(minima[i].coefficients[k]);
        row["coefficients"][tmpl.coefficients()[k].name] =
            minima[i].coefficients[k];
      }
      csv += "," + sp::text::fmt_double(minima[i].objective) + "\n";
      row["objective"] = minima[i].objective;
      mj.push_back(row);
    }
    man.emit(g.out_dir, "fit/minima.csv", csv);
    man.emit(g.out_dir, "fit/minima.json", mj.dump(2) + "\n");
    man.write(g.out_dir);
    print_summary(mj);
  });

  // ---- mpp ---------------------------------------------------------------
  auto* mpp_cmd = app.add_subcommand(
      "mpp", "most probable path between fixed endpoints");
  std::string mpp_start, mpp_end, mpp_disc = "midpoint";
  int mpp_epochs = 9;
  mpp_cmd->add_option("--start", mpp_start, "start state values")->required();
  mpp_cmd->add_option("--end", mpp_end, "end state values")->required();
  mpp_cmd->add_option("--epochs", mpp_epochs, "interior epochs");
  mpp_cmd->add_option("--discretization", mpp_disc, "midpoint or prepoint")
      ->check(CLI::IsMember({"midpoint", "prepoint"}));
  mpp_cmd->callback([&] {
    LoadedConfig lc = load_config(g, "mpp");
    sp::ModelSpec spec = load_model(lc);
    sp::GeometryEngine geom(spec);
    sp::MppOptions mo;
    mo.disc = parse_disc(mpp_disc);
    mo.seed = g.seed;
    sp::PathSample path = sp::most_probable_path(
        geom, parse_state(mpp_start, spec, "start"),
        parse_state(mpp_end, spec, "end"), mpp_epochs, mo);
    sp::RunManifest man("mpp", g.seed, g.format);
    man.set_config(lc.name, lc.raw);
    std::string csv = "t";
    for (int d = 0; d < spec.dim(); ++d) csv += "," + spec.dim_name(d);
    csv += "\n";
    for (std::size_t s = 0; s < path.states.size(); ++s) {
      csv += sp::text::fmt_double(spec.dt * static_cast<double>(s));
      for (int d = 0; d < spec.dim(); ++d)
        csv += "," + sp::text::fmt_double(path.states[s][d]);
      csv += "\n";
    }
    man.emit(g.out_dir, "fit/path.csv", csv);
    json pj;
    pj["action"] = path.action;
    pj["log_prefactor_sum"] = path.log_prefactor_sum;
    pj["euler_lagrange_residual"] = path.el_residual;
    pj["converged"] = path.converged;
    man.emit(g.out_dir, "fit/path.json", pj.dump(2) + "\n");
    man.write(g.out_dir);
    print_summary(pj);
  });

  // ---- sample-paths ------------------------------------------------------
  auto* sam = app.add_subcommand(
      "sample-paths", "Metropolis sampling of discretized paths");
  std::string sam_start, sam_end, sam_disc = "midpoint";
  int sam_epochs = 9;
  long sam_samples = 1000;
  int sam_thin = 5, sam_burn = 400;
  sam->add_option("--start", sam_start, "start state values")->required();
  sam->add_option("--end", sam_end, "end state values (omit for free end)");
  sam->add_option("--epochs", sam_epochs, "interior epochs");
  sam->add_option("--samples", sam_samples, "recorded samples");
  sam->add_option("--thin", sam_thin, "sweeps between recorded samples");
  sam->add_option("--burn-in", sam_burn, "tuning sweeps before recording");
  sam->add_option("--discretization", sam_disc, "midpoint or prepoint")
      ->check(CLI::IsMember({"midpoint", "prepoint"}));
  sam->callback([&] {
    LoadedConfig lc = load_config(g, "sample-paths");
    sp::ModelSpec spec = load_model(lc);
    sp::GeometryEngine geom(spec);
    sp::PathSamplerOptions so;
    so.disc = parse_disc(sam_disc);
    so.thin = sam_thin;
    so.burn_in_sweeps = sam_burn;
    std::optional<std::vector<double>> end;
    if (!sam_end.empty()) end = parse_state(sam_end, spec, "end");
    sp::PathSamplerResult res = sp::sample_paths_metropolis(
        geom, parse_state(sam_start, spec, "start"), end, sam_epochs,
        sam_samples, g.seed, so);
    sp::RunManifest man("sample-paths", g.seed, g.format);
    man.set_config(lc.name, lc.raw);
    // Histogram of the final state across samples, per dimension.
    std::string marg = "dim,center,mass\n";
    for (int d = 0; d < spec.dim(); ++d) {
      const auto& axis = spec.mesh().axis(d);
      std::vector<double> mass(axis.n, 0.0);
      for (const auto& s : res.samples) {
        int idx = spec.mesh().locate(s.back())[d];
        mass[idx] += 1.0;
      }
      for (auto& m : mass) m /= static_cast<double>(res.samples.size());
      for (int i = 0; i < axis.n; ++i)
        marg += spec.dim_name(d) + "," +
                sp::text::fmt_double(axis.center(i)) + "," +
                sp::text::fmt_double(mass[i]) + "\n";
    }
    man.emit(g.out_dir, "data/final_marginal.csv", marg);
    json dj;
    dj["samples"] = res.samples.size();
    dj["acceptance_rate"] = res.acceptance_rate;
    dj["width_scale"] = res.width_scale;
    dj["integrated_autocorrelation"] = res.iact;
    man.emit(g.out_dir, "data/sampler.json", dj.dump(2) + "\n");
    man.write(g.out_dir);
    print_summary(dj);
  });

  // ---- lattice-sample ----------------------------------------------------
  auto* lat = app.add_subcommand(
      "lattice-sample", "checkerboard Metropolis sweeps over a state chain");
  std::string lat_start;
  int lat_sweeps = 1000, lat_epochs = 8;
  double lat_temp = 1.0, lat_anneal_to = 0.0;
  lat->add_option("--start", lat_start, "initial chain state values")
      ->required();
  lat->add_option("--sweeps", lat_sweeps, "number of sweeps");
  lat->add_option("--epochs", lat_epochs, "chain length in epochs");
  lat->add_option("--temperature", lat_temp, "sampling temperature");
  lat->add_option("--anneal-to", lat_anneal_to,
                  "final temperature of a geometric per-sweep schedule");
  lat->callback([&] {
    LoadedConfig lc = load_config(g, "lattice-sample");
    sp::ModelSpec spec = load_model(lc);
    sp::GeometryEngine geom(spec);
    auto chain = sp::constant_chain(
        spec, parse_state(lat_start, spec, "start"), lat_epochs);
    sp::SweepOptions so;
    so.burn_in_sweeps = std::min(200, lat_sweeps / 2);
    sp::LatticeSampler sampler(geom, chain, lat_temp, g.seed, so);
    double cool = 1.0;
    if (lat_anneal_to > 0.0 && lat_sweeps > 1)
      cool = std::pow(lat_anneal_to / lat_temp,
                      1.0 / static_cast<double>(lat_sweeps - 1));
    std::string trace;
    for (int k = 0; k < lat_sweeps; ++k) {
      sampler.sweep();
      const auto& diag = sampler.diagnostics();
      json line;
      line["sweep"] = k + 1;
      line["action"] = diag.action_trace.back();
      line["acceptance"] = diag.overall_acceptance();
      line["temperature"] = sampler.temperature();
      trace += line.dump() + "\n";
      if (cool != 1.0)
        sampler.set_temperature(sampler.temperature() * cool);
    }
    sp::RunManifest man("lattice-sample", g.seed, g.format);
    man.set_config(lc.name, lc.raw);
    man.emit(g.out_dir, "data/sweep_trace.jsonl", trace);
    std::string csv = "t";
    for (int d = 0; d < spec.dim(); ++d) csv += "," + spec.dim_name(d);
    csv += "\n";
    for (const auto& state : sampler.chain()) {
      csv += sp::text::fmt_double(spec.dt * state.epoch);
      for (int d = 0; d < spec.dim(); ++d)
        csv += "," + sp::text::fmt_double(state.values[d]);
      csv += "\n";
    }
    man.emit(g.out_dir, "data/chain.csv", csv);
    json dj;
    dj["sweeps"] = sampler.diagnostics().sweeps;
    dj["overall_acceptance"] = sampler.diagnostics().overall_acceptance();
    json cells = json::array();
    for (int c = 0; c < spec.n_cells(); ++c)
      cells.push_back(sampler.diagnostics().cell_acceptance(c));
    dj["cell_acceptance"] = cells;
    dj["final_action"] = sampler.total_action();
    man.emit(g.out_dir, "data/diagnostics.json", dj.dump(2) + "\n");
    man.write(g.out_dir);
    print_summary(dj);
  });

  // ---- gain --------------------------------------------------------------
  auto* gain_cmd = app.add_subcommand(
      "gain", "rank response options by expected gain");
  std::string gain_file;
  gain_cmd->add_option("--responses", gain_file,
                       "JSON file with response options")
      ->required();
  gain_cmd->callback([&] {
    std::string text = sp::read_text_file(gain_file);
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_array())
      throw sp::config_error("responses file must be a JSON array");
    std::vector<sp::ResponseOption> options;
    for (const auto& o : j) {
      sp::ResponseOption r;
      r.label = o.at("label").get<std::string>();
      r.values = o.at("values").get<std::vector<double>>();
      r.probabilities = o.at("probabilities").get<std::vector<double>>();
      r.exhaustive = o.value("exhaustive", true);
      options.push_back(std::move(r));
    }
    auto ranked = sp::expected_gain(options);
    if (g.out_dir.empty()) g.out_dir = "runs/gain";
    sp::RunManifest man("gain", g.seed, g.format);
    man.set_config(fs::path(gain_file).filename().string(), text);
    man.emit(g.out_dir, "gain/gains.csv", sp::ranked_gains_csv(ranked));
    man.emit(g.out_dir, "gain/gains.json", sp::ranked_gains_json(ranked));
    man.write(g.out_dir);
    std::cout << sp::ranked_gains_json(ranked);
  });

  // ---- demo-radar --------------------------------------------------------
  auto* demo = app.add_subcommand(
      "demo-radar", "end-to-end grid demo: simulate, fit, forecast, score");
  demo->callback([&] {
    LoadedConfig lc = load_config(g, "demo-radar");
    sp::DemoResult res =
        sp::demo_radar(lc.raw, lc.name, g.seed, g.out_dir);
    sp::emit_plotdata(g.out_dir);
    json j;
    j["run_dir"] = res.run_dir.string();
    j["train_increments"] = res.train_increments;
    j["test_increments"] = res.test_increments;
    j["in_sample_nll_per_step"] = res.in_sample_nll_per_step;
    j["out_of_sample_nll_per_step"] = res.out_of_sample_nll_per_step;
    for (std::size_t i = 0; i < res.fit.names.size(); ++i)
      j["coefficients"][res.fit.names[i]] = res.fit.coefficients[i];
    json gains = json::array();
    for (const auto& rg : res.gains)
      gains.push_back({{"label", rg.label}, {"expected_gain", rg.expected}});
    j["gains"] = gains;
    print_summary(j);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << sp::error_json("config", e.what(), 2);
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const sp::nonconvergence_error& e) {
    std::cerr << sp::error_json("nonconvergence", e.what(), 4);
    return 4;
  } catch (const sp::numerical_error& e) {
    std::cerr << sp::error_json("numerical", e.what(), 3);
    return 3;
  } catch (const sp::config_error& e) {
    std::cerr << sp::error_json("config", e.what(), 2);
    return 2;
  } catch (const std::exception& e) {
    std::cerr << sp::error_json("internal", e.what(), 1);
    return 1;
  }
}
