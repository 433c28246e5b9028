#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "helpers.hpp"
#include "statpath/statpath.hpp"

using Catch::Matchers::ContainsSubstring;
using nlohmann::json;

namespace {

namespace fs = std::filesystem;

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

const std::string& cli_binary() {
  static std::string path = [] {
    const char* p = std::getenv("STATPATH_CLI");
    REQUIRE(p != nullptr);
    return std::string(p);
  }();
  return path;
}

fs::path scratch_root() {
  static fs::path dir = [] {
    auto d = fs::temp_directory_path() / "statpath_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

/// Runs the tool with a scrubbed environment plus the given extra
/// assignments, capturing exit code, stdout, and stderr.
CliResult run_cli(const std::string& args, const std::string& extra_env = "") {
  static int counter = 0;
  fs::path out_file = scratch_root() / ("stdout_" + std::to_string(counter));
  fs::path err_file = scratch_root() / ("stderr_" + std::to_string(counter));
  ++counter;
  std::string cmd = "env -u STATPATH_CONFIG -u STATPATH_SEED "
                    "-u STATPATH_OUT_DIR -u STATPATH_FORMAT ";
  if (!extra_env.empty()) cmd += extra_env + " ";
  cmd += "\"" + cli_binary() + "\" " + args;
  cmd += " >\"" + out_file.string() + "\" 2>\"" + err_file.string() + "\"";
  int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  CliResult res;
  res.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  res.out = statpath::read_text_file(out_file.string());
  res.err = statpath::read_text_file(err_file.string());
  return res;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

std::string file_in(const fs::path& dir, const std::string& rel) {
  return statpath::read_text_file((dir / rel).string());
}

double marginal_mass_sum(const std::string& csv) {
  double sum = 0.0;
  std::size_t pos = csv.find('\n') + 1;  // skip header
  while (pos < csv.size()) {
    std::size_t eol = csv.find('\n', pos);
    std::string line = csv.substr(pos, eol - pos);
    pos = eol + 1;
    auto last_comma = line.rfind(',');
    sum += std::stod(line.substr(last_comma + 1));
  }
  return sum;
}

}  // namespace

TEST_CASE("the version flag prints the tool banner") {
  CliResult r = run_cli("--version");
  CHECK(r.code == 0);
  CHECK(r.out == "statpath 1.0.0\n");
  CHECK(r.err.empty());
}

TEST_CASE("a missing config is a machine-readable configuration error") {
  CliResult r = run_cli("propagate --steps 1 --start 0");
  CHECK(r.code == 2);
  json e = json::parse(r.err);
  CHECK(e["error"]["kind"] == "config");
  CHECK(e["error"]["exit_code"] == 2);
  CHECK_THAT(std::string(e["error"]["message"]),
             ContainsSubstring("no config file given"));
}

TEST_CASE("parse failures and bad flags exit with code two") {
  auto dir = scratch_root() / "badcfg";
  fs::create_directories(dir);
  statpath::write_text_file(dir / "garbage.cfg", "not a section\n");
  CliResult r = run_cli("simulate --start 0 --config " +
                        q(dir / "garbage.cfg"));
  CHECK(r.code == 2);
  CHECK(json::parse(r.err)["error"]["kind"] == "config");

  CliResult bad_fmt = run_cli(
      "simulate --start 0 --format yaml --config " +
      q(test_support::config_path("ou.cfg")));
  CHECK(bad_fmt.code == 2);
  CHECK(json::parse(bad_fmt.err)["error"]["kind"] == "config");

  CliResult unknown = run_cli("frobnicate");
  CHECK(unknown.code == 2);
  CHECK(json::parse(unknown.err)["error"]["exit_code"] == 2);
}

TEST_CASE("simulated series reproduce for a seed and move with it") {
  auto dir = scratch_root() / "sim";
  std::string base = "simulate --steps 50 --start 0 --config " +
                     q(test_support::config_path("ou.cfg"));
  CliResult a = run_cli(base + " --seed 77 --out-dir " + q(dir / "a"));
  CliResult b = run_cli(base + " --seed 77 --out-dir " + q(dir / "b"));
  CliResult c = run_cli(base + " --seed 78 --out-dir " + q(dir / "c"));
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  REQUIRE(c.code == 0);

  json summary = json::parse(a.out);
  CHECK(summary["files"] == json::array({"data/series.csv"}));

  std::string series_a = file_in(dir / "a", "data/series.csv");
  CHECK(series_a == file_in(dir / "b", "data/series.csv"));
  CHECK(series_a != file_in(dir / "c", "data/series.csv"));
  CHECK(file_in(dir / "a", "manifest.json") ==
        file_in(dir / "b", "manifest.json"));
  CHECK(json::parse(file_in(dir / "a", "manifest.json"))["seed"] == 77);
}

TEST_CASE("propagated marginals carry unit mass") {
  auto dir = scratch_root() / "prop";
  CliResult r = run_cli(
      "propagate --steps 20 --start 0.5 --out-dir " + q(dir) +
      " --config " + q(test_support::config_path("ou.cfg")));
  REQUIRE(r.code == 0);
  CHECK(fs::exists(dir / "predict" / "snapshot.csv"));
  CHECK(fs::exists(dir / "predict" / "moments.csv"));
  std::string marg = file_in(dir, "predict/marginals.csv");
  CHECK(marg.substr(0, marg.find('\n')) == "dim,center,mass");
  CHECK(marginal_mass_sum(marg) == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("seed precedence runs flag, environment, run section, default") {
  auto dir = scratch_root() / "prec";
  fs::create_directories(dir);
  std::string cfg_text =
      statpath::read_text_file(test_support::config_path("ou.cfg")) +
      "\n[run]\nseed = 5\n";
  statpath::write_text_file(dir / "seeded.cfg", cfg_text);
  std::string base = "simulate --steps 3 --start 0 --config " +
                     q(dir / "seeded.cfg") + " --out-dir ";

  CliResult flag_env =
      run_cli(base + q(dir / "a") + " --seed 13", "STATPATH_SEED=9");
  CliResult env_only = run_cli(base + q(dir / "b"), "STATPATH_SEED=9");
  CliResult run_section = run_cli(base + q(dir / "c"));
  REQUIRE(flag_env.code == 0);
  REQUIRE(env_only.code == 0);
  REQUIRE(run_section.code == 0);
  CHECK(json::parse(file_in(dir / "a", "manifest.json"))["seed"] == 13);
  CHECK(json::parse(file_in(dir / "b", "manifest.json"))["seed"] == 9);
  CHECK(json::parse(file_in(dir / "c", "manifest.json"))["seed"] == 5);

  // Without a [run] seed the built-in default applies.
  CliResult built_in = run_cli(
      "simulate --steps 3 --start 0 --out-dir " + q(dir / "d") +
      " --config " + q(test_support::config_path("ou.cfg")));
  REQUIRE(built_in.code == 0);
  CHECK(json::parse(file_in(dir / "d", "manifest.json"))["seed"] == 2026);
}

TEST_CASE("the run section can switch the output format") {
  auto dir = scratch_root() / "fmt";
  fs::create_directories(dir);
  std::string cfg_text =
      statpath::read_text_file(test_support::config_path("ou.cfg")) +
      "\n[run]\nformat = json\n";
  statpath::write_text_file(dir / "json.cfg", cfg_text);
  CliResult r = run_cli("simulate --steps 3 --start 0 --config " +
                        q(dir / "json.cfg") + " --out-dir " + q(dir / "run"));
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["files"] == json::array({"data/series.json"}));
  CHECK(fs::exists(dir / "run" / "data" / "series.json"));
}

TEST_CASE("response files rank through the command line") {
  auto dir = scratch_root() / "gain";
  fs::create_directories(dir);
  statpath::write_text_file(dir / "responses.json", R"([
  {"label": "A", "values": [10, 0], "probabilities": [0.2, 0.8]},
  {"label": "B", "values": [3], "probabilities": [1.0]}
])");
  CliResult r = run_cli("gain --responses " + q(dir / "responses.json") +
                        " --out-dir " + q(dir / "run"));
  REQUIRE(r.code == 0);
  json ranked = json::parse(r.out);
  REQUIRE(ranked.size() == 2);
  CHECK(ranked[0]["label"] == "B");
  CHECK(ranked[0]["expected_gain"] == 3.0);
  CHECK(ranked[1]["label"] == "A");
  CHECK(file_in(dir / "run", "gain/gains.csv") ==
        "rank,label,expected_gain\n1,B,3\n2,A,2\n");

  statpath::write_text_file(dir / "broken.json", "{}\n");
  CliResult broken =
      run_cli("gain --responses " + q(dir / "broken.json"));
  CHECK(broken.code == 2);
  CHECK_THAT(std::string(json::parse(broken.err)["error"]["message"]),
             ContainsSubstring("responses file must be a JSON array"));
}

TEST_CASE("the demo pipeline reproduces byte for byte from its inputs") {
  auto dir = scratch_root() / "demo";
  fs::create_directories(dir);
  statpath::write_text_file(dir / "scenario.cfg", R"([model]
dt = 0.02

[variables]
x = -4, 4, 81

[lattice]
rows = 1
cols = 1
boundary = open

[drift x]
term = -1.2 * x | fit = decay in [-3, -0.2]

[noise 1 x]
term = 0.9 | fit = amplitude in [0.2, 2]

[scenario]
steps = 120
split = 0.5
start = 1.0
horizon = 30
forecast_trajectories = 2000

[responses]
engage = x 0.0 2.0 -1.0
hold = x 9.0 0.0 0.0
)");
  std::string base = "demo-radar --seed 31 --config " +
                     q(dir / "scenario.cfg") + " --out-dir ";
  CliResult a = run_cli(base + q(dir / "a"));
  CliResult b = run_cli(base + q(dir / "b"));
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);

  json j = json::parse(a.out);
  CHECK(j["train_increments"] == 60);
  CHECK(j["test_increments"] == 60);
  double decay = j["coefficients"]["decay"];
  double amplitude = j["coefficients"]["amplitude"];
  CHECK((decay >= -3.0 && decay <= -0.2));
  CHECK((amplitude >= 0.2 && amplitude <= 2.0));
  REQUIRE(j["gains"].size() == 2);
  CHECK(j["gains"][0]["label"] == "engage");
  CHECK(j["gains"][1]["label"] == "hold");

  for (const char* rel :
       {"manifest.json", "metrics.json", "fit/result.json", "data/full.csv",
        "gain/gains.csv", "predict/forecast_moments.csv"}) {
    CHECK(file_in(dir / "a", rel) == file_in(dir / "b", rel));
  }
  // Plot-ready copies of the main artifacts.
  for (const char* rel :
       {"plots/objective_trace.csv", "plots/moments.csv",
        "plots/marginals.csv", "plots/gains.csv"}) {
    CHECK(fs::exists(dir / "a" / rel));
  }
  // The second run differs once the seed moves.
  CliResult c = run_cli("demo-radar --seed 32 --config " +
                        q(dir / "scenario.cfg") + " --out-dir " +
                        q(dir / "c"));
  REQUIRE(c.code == 0);
  CHECK(file_in(dir / "a", "data/full.csv") !=
        file_in(dir / "c", "data/full.csv"));
}
