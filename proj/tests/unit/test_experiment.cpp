#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "doctest.h"
#include "glinv/error.hpp"
#include "glinv/experiment.hpp"

using namespace glinv;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("glinv_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

ConfigError config_error(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e;
  }
  FAIL("config accepted: " << text);
  return ConfigError("");
}

RunOutcome run_quiet(const ExperimentConfig& c) {
  std::ostringstream log;
  return run_experiment(c, log);
}

}  // namespace

TEST_CASE("minimal config echoes the defaults") {
  const ExperimentConfig c = parse_config("kind = invert-global\n");
  CHECK(c.kind == ExperimentKind::InvertGlobal);
  CHECK(c.domain.dim() == 1);
  CHECK(c.pde.a == 1.0);
  CHECK(c.pde.b == 1.0);
  CHECK(c.pde.gamma == ComplexVal(1.0));
  CHECK(c.pde.T == 1.0);
  CHECK(c.weights.lambda == 0.01);
  CHECK(c.weights.beta == 1.0);

  const std::string echo = echo_config(c);
  for (const char* line : {"a = 1\n", "b = 1\n", "gamma = 1\n", "T = 1\n", "lambda = 0.01\n", "beta = 1\n",
                           "kind = invert-global\n", "dim = 1\n"})
    CHECK(echo.find(line) != std::string::npos);
}

TEST_CASE("constraint violations name the key") {
  const auto neg = config_error("[data]\ndelta = -0.1\n");
  CHECK(std::string(neg.what()) == "delta must be ≥ 0");
  CHECK(neg.key() == "delta");
  CHECK(neg.line() == 2);

  const auto foo = config_error("kind = check\n[pde]\nfoo = 3\n");
  CHECK(std::string(foo.what()).find("'foo'") != std::string::npos);
  CHECK(foo.key() == "foo");
  CHECK(foo.line() == 3);

  CHECK(config_error("[pde]\na = 0\n").key() == "a");
  CHECK(config_error("[data]\ninstants = 0.5, 2\n").key() == "instants");
  CHECK(config_error("[data]\nregions = 0:1.2pi\n").key() == "regions");
  CHECK(config_error("[collocation]\nn_int = 0\n").key() == "n_int");
  CHECK(config_error("[domain]\ndim = 3\n").key() == "dim");
  CHECK(config_error("seed = 1\nseed = 2\n").key() == "seed");
}

TEST_CASE("syntax errors carry the line number") {
  CHECK(config_error("# comment\n\n[pde\n").line() == 3);
  CHECK(config_error("kind = check\njust words\n").line() == 2);
  CHECK(config_error("[nowhere]\n").line() == 1);
  CHECK(config_error("[pde]\na =\n").line() == 2);
  CHECK(config_error("[pde]\na = one\n").line() == 2);
}

TEST_CASE("kind checks against the subcommand") {
  CHECK(parse_config("", ExperimentKind::Forward).kind == ExperimentKind::Forward);
  CHECK_THROWS_AS(parse_config("kind = forward\n", ExperimentKind::Check), ConfigError);
  CHECK_THROWS_AS(parse_config("kind = nonsense\n"), ConfigError);
}

TEST_CASE("echo output parses back to the same echo") {
  const std::string text =
      "kind = invert-local\nseed = 7\nseeds = 3\n[domain]\ndim = 2\n[pde]\ngamma_im = 0.25\n"
      "[data]\ndelta = 0, 0.001\nregions = 0:0.5pix0:pi; 0:0.1pix0:pi|0.9pi:pix0:pi\ninstants = 0.5, 0.3\n"
      "[inversion]\nridge = 1e-9\n[train]\nepochs = 123\nsobolev = false\n";
  const ExperimentConfig c = parse_config(text);
  CHECK(c.effective_instants() == std::vector<double>{0.3, 0.5});
  CHECK(c.regions.size() == 2);
  CHECK(c.seeds() == std::vector<std::uint64_t>{7, 8, 9});
  const std::string echo = echo_config(c);
  CHECK(echo_config(parse_config(echo)) == echo);
}

TEST_CASE("per-kind defaults") {
  const auto local = parse_config("kind = invert-local\n[data]\nregions = 0:0.5pi\n");
  CHECK(local.effective_instants() == std::vector<double>{0.5, 1.0});
  CHECK(local.effective_modes() == 3);
  CHECK_THROWS_AS(parse_config("kind = invert-local\n"), ConfigError);
  CHECK(parse_config("kind = invert-global\n").effective_instants() == std::vector<double>{1.0});
  const auto c2 = parse_config("kind = train-pinn\n[domain]\ndim = 2\n");
  CHECK(c2.collocation.n_sb == 1024);
  CHECK(c2.collocation.n_d == 256);
  CHECK(c2.grid.intervals_x == 64);
}

TEST_CASE("seed streams are distinct") {
  const SeedSet a = SeedSet::derive(1), b = SeedSet::derive(2);
  CHECK(a.collocation != a.init);
  CHECK(a.init != a.noise);
  CHECK(a.collocation != b.collocation);
  CHECK(a.noise != b.noise);
  CHECK(SeedSet::derive(1).init == a.init);
}

TEST_CASE("summarize takes medians per group") {
  const double nan = std::nan("");
  const std::vector<RunRow> rows{{"A", 0.0, 1, 0.3, nan, 2.0}, {"A", 0.0, 2, 0.1, nan, 4.0},
                                 {"B", 0.0, 1, 0.5, 1.0, nan}, {"A", 0.0, 3, 0.2, nan, 9.0},
                                 {"A", 0.1, 1, 0.7, nan, 1.0}, {"B", 0.0, 2, 0.4, 3.0, nan}};
  const auto s = summarize(rows);
  REQUIRE(s.size() == 3);
  CHECK(s[0].region == "A");
  CHECK(s[0].seeds == 3);
  CHECK(s[0].re_f_median == doctest::Approx(0.2));
  CHECK(s[0].re_f_min == 0.1);
  CHECK(s[0].re_f_max == 0.3);
  CHECK(s[0].cond_g_median == 4.0);
  CHECK(s[1].region == "B");
  CHECK(s[1].re_f_median == doctest::Approx(0.45));
  CHECK(s[1].re_u_median == doctest::Approx(2.0));
  CHECK(std::isnan(s[1].cond_g_median));
  CHECK(s[2].delta == 0.1);
}

TEST_CASE("csv round trips") {
  const double nan = std::nan("");
  const std::vector<RunRow> runs{{"0:0.5pi", 0.001, 4, 0.0123, nan, 17.5}, {"whole", 0.0, 1, 1e-12, 0.02, nan}};
  std::stringstream rs;
  write_runs_csv(rs, runs);
  const auto runs_back = read_runs_csv(rs);
  REQUIRE(runs_back.size() == 2);
  CHECK(runs_back[0].region == "0:0.5pi");
  CHECK(runs_back[0].seed == 4);
  CHECK(runs_back[0].cond_g == 17.5);
  CHECK(std::isnan(runs_back[0].re_u));
  CHECK(runs_back[1].re_u == 0.02);

  const auto summary = summarize(runs);
  std::stringstream ss;
  write_summary_csv(ss, summary);
  const auto summary_back = read_summary_csv(ss);
  REQUIRE(summary_back.size() == summary.size());
  CHECK(summary_back[1].re_f_median == 1e-12);

  const std::vector<ForwardRow> fwd{{200, 0, 1000, 3.5e-6, 0.41}};
  std::stringstream fs_;
  write_forward_csv(fs_, fwd);
  const auto fwd_back = read_forward_csv(fs_);
  REQUIRE(fwd_back.size() == 1);
  CHECK(fwd_back[0].intervals_x == 200);
  CHECK(fwd_back[0].gap == 3.5e-6);

  const std::vector<CheckOutcome> checks{{"kernel", true, "min 0.3, n 50"}, {"layer", false, "gap"}};
  std::stringstream cs;
  write_checks_csv(cs, checks);
  const auto checks_back = read_checks_csv(cs);
  REQUIRE(checks_back.size() == 2);
  CHECK(checks_back[0].passed);
  CHECK(checks_back[0].detail == "min 0.3; n 50");
  CHECK_FALSE(checks_back[1].passed);

  std::istringstream wrong("region,delta\n");
  CHECK_THROWS_AS(read_runs_csv(wrong), InvalidInput);
}

TEST_CASE("table-1 shaped spectral run") {
  ExperimentConfig c = parse_config("kind = invert-global\nseeds = 20\n[data]\ndelta = 0, 0.001, 0.01, 0.1\n");
  c.output_dir = scratch("table1");
  const RunOutcome out = run_quiet(c);
  CHECK(out.runs.size() == 80);
  REQUIRE(out.summary.size() == 4);
  CHECK(out.summary[0].re_f_median < 1e-8);
  for (std::size_t k = 1; k < 4; ++k) CHECK(out.summary[k].re_f_median >= out.summary[k - 1].re_f_median);

  std::ifstream results(c.output_dir / "results.csv");
  CHECK(read_summary_csv(results).size() == 4);
  std::ifstream runs(c.output_dir / "runs.csv");
  CHECK(read_runs_csv(runs).size() == 80);
  CHECK(fs::exists(c.output_dir / "field_f_0.csv"));
  CHECK(fs::exists(c.output_dir / "field_f_3.csv"));
}

TEST_CASE("table-2 shaped local run") {
  ExperimentConfig c = parse_config(
      "kind = invert-local\n[data]\nregions = 0:0.5pi; 0:0.1pi; 0.3pi:0.5pi; 0:0.1pi|0.9pi:pi\n"
      "instants = 0.3, 0.5\n");
  c.output_dir = scratch("table2");
  const RunOutcome out = run_quiet(c);
  REQUIRE(out.summary.size() == 4);
  CHECK(out.summary[0].region == "0:0.5pi");
  CHECK(out.summary[3].region == "0:0.1pi|0.9pi:pi");
  for (const auto& row : out.summary) {
    CHECK(row.re_f_median < 1e-4);
    CHECK(std::isfinite(row.cond_g_median));
    CHECK(row.cond_g_median >= 1.0);
  }
}

TEST_CASE("forward run writes the forward schema") {
  ExperimentConfig c = parse_config("kind = forward\n[forward]\nnx = 50\nsteps = 200\n");
  c.output_dir = scratch("forward");
  const RunOutcome out = run_quiet(c);
  REQUIRE(out.forward.size() == 1);
  CHECK(out.forward[0].gap < 1e-3);
  std::ifstream in(c.output_dir / "results.csv");
  const auto rows = read_forward_csv(in);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].time_steps == 200);
  CHECK(fs::exists(c.output_dir / "field_u.csv"));
}

TEST_CASE("check kind passes") {
  ExperimentConfig c = parse_config("kind = check\n");
  c.output_dir = scratch("check");
  const RunOutcome out = run_quiet(c);
  CHECK(out.ok);
  CHECK(out.checks.size() >= 20);
  for (const auto& r : out.checks) CHECK_MESSAGE(r.passed, r.name << ": " << r.detail);
  std::ifstream in(c.output_dir / "results.csv");
  CHECK(read_checks_csv(in).size() == out.checks.size());
}

TEST_CASE("results are byte identical across worker counts") {
  const std::string text =
      "kind = train-pinn\nseeds = 3\nfields = false\n[data]\ndelta = 0, 0.01\n"
      "[collocation]\nn_int = 32\nn_sb = 16\nn_tb = 16\nn_d = 16\n[train]\nepochs = 40\nwidth = 6\n";
  std::vector<std::string> results, runs;
  for (const char* threads : {"1", "2", "3"}) {
    ::setenv("GLINV_THREADS", threads, 1);
    ExperimentConfig c = parse_config(text);
    c.output_dir = scratch(std::string("threads_") + threads);
    run_quiet(c);
    results.push_back(slurp(c.output_dir / "results.csv"));
    runs.push_back(slurp(c.output_dir / "runs.csv"));
    CHECK(fs::exists(c.output_dir / "history_5.csv"));
  }
  ::unsetenv("GLINV_THREADS");
  CHECK(results[0] == results[1]);
  CHECK(results[0] == results[2]);
  CHECK(runs[0] == runs[1]);
  CHECK(runs[0] == runs[2]);
}

TEST_CASE("worker_threads reads the environment") {
  ::setenv("GLINV_THREADS", "5", 1);
  CHECK(worker_threads() == 5);
  ::setenv("GLINV_THREADS", "zero", 1);
  CHECK(worker_threads() >= 1);
  ::unsetenv("GLINV_THREADS");
}

TEST_CASE("cli exit codes and error records") {
  const char* cli = std::getenv("GLINV_CLI");
  if (cli == nullptr) return;
  const fs::path dir = scratch("cli");
  const auto run = [&](const std::string& args) {
    const std::string cmd =
        std::string(cli) + " " + args + " >" + (dir / "out.txt").string() + " 2>" + (dir / "err.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  };

  std::ofstream(dir / "bad.cfg") << "[data]\ndelta = -0.1\n";
  CHECK(run("invert-global --config " + (dir / "bad.cfg").string()) == 2);
  const auto rec = nlohmann::json::parse(slurp(dir / "err.txt"));
  CHECK(rec["status"] == "error");
  CHECK(rec["exit_code"] == 2);
  CHECK(rec["key"] == "delta");

  CHECK(run("invert-global --config " + (dir / "missing.cfg").string()) == 2);
  CHECK(run("no-such-command") == 2);

  std::ofstream(dir / "resonant.cfg") << "[pde]\ngamma_im = -5.283185307179586\n";
  CHECK(run("invert-global --config " + (dir / "resonant.cfg").string() + " --out " + (dir / "r").string()) == 3);
  CHECK(nlohmann::json::parse(slurp(dir / "err.txt"))["kind"] == "numerical");

  std::ofstream(dir / "ok.cfg") << "seeds = 2\n[data]\ndelta = 0, 0.01\n";
  CHECK(run("invert-global --config " + (dir / "ok.cfg").string() + " --seed 5 --out " + (dir / "ok").string()) == 0);
  const std::string echoed = slurp(dir / "ok" / "config.txt");
  CHECK(echoed.find("seed = 5\n") != std::string::npos);
  std::ifstream results(dir / "ok" / "results.csv");
  CHECK(read_summary_csv(results).size() == 2);
}
