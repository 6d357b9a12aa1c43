#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "glinv/cpinn.hpp"
#include "glinv/forward_solver.hpp"
#include "glinv/inverse_local.hpp"
#include "glinv/inverse_spectral.hpp"

namespace glinv {

enum class ExperimentKind { Forward, InvertGlobal, InvertLocal, TrainPinn, Check };

const char* kind_name(ExperimentKind kind);
std::optional<ExperimentKind> parse_kind(const std::string& name);

/// Reconstruction method for train-pinn runs is always the C-PINN; for
/// invert-local it selects between ridge least squares and the C-PINN.
enum class LocalMethod { Lsq, Pinn };

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::InvertGlobal;
  DomainSpec domain = DomainSpec::interval(std::numbers::pi);
  PdeParams pde;

  std::size_t modes = 0;  // truncation N; 0: per-kind default
  double cutoff_floor = 1e-8;
  int quad_panels = 32;  // spectral sampling rule, order 8 per panel
  std::optional<double> ridge;  // mu for local LSQ
  LocalMethod local_method = LocalMethod::Lsq;

  std::vector<double> deltas{0.0};
  std::uint64_t seed_base = 1;
  std::size_t seed_count = 1;
  std::vector<Region> regions;  // empty: whole domain
  std::vector<double> instants;  // empty: {T} for global, {T/2, T} for local
  std::size_t points_per_box = 256;  // local LSQ observation lattice

  CollocationCounts collocation;
  TrainConfig train;
  LossWeights weights;
  bool sobolev = true;

  GridSpec grid{200, 0, 1000};
  std::filesystem::path output_dir = "out";
  bool write_fields = true;

  std::vector<std::uint64_t> seeds() const {
    std::vector<std::uint64_t> s(seed_count);
    for (std::size_t k = 0; k < seed_count; ++k) s[k] = seed_base + k;
    return s;
  }
  /// Effective instants for this kind (sorted).
  std::vector<double> effective_instants() const;
  std::size_t effective_modes() const;
  std::vector<Region> effective_regions() const;

  /// Throws ConfigError naming the offending key.
  void validate() const;
};

/// `key = value` lines grouped by `[section]` headers; `#` starts a comment.
/// Numbers accept a `pi` suffix (`0.5pi`, `pi`). Throws ConfigError with the
/// line number on syntax errors and with the key on constraint violations.
/// With `expected`, a missing `kind` defaults to it and a different one is
/// rejected.
ExperimentConfig parse_config(const std::string& text, std::optional<ExperimentKind> expected = std::nullopt);

/// Every setting in parse_config syntax, defaults included.
std::string echo_config(const ExperimentConfig& config);

/// Independent streams derived from a run seed.
struct SeedSet {
  std::uint64_t collocation = 0;
  std::uint64_t init = 0;
  std::uint64_t noise = 0;
  static SeedSet derive(std::uint64_t seed);
};

/// One (region, delta, seed) cell.
struct RunRow {
  std::string region;
  double delta = 0.0;
  std::uint64_t seed = 0;
  double re_f = 0.0;
  double re_u = 0.0;     // NaN when not computed
  double cond_g = 0.0;   // NaN when not computed
};

/// Median over seeds for one (region, delta) group.
struct SummaryRow {
  std::string region;
  double delta = 0.0;
  std::size_t seeds = 0;
  double re_f_median = 0.0;
  double re_f_min = 0.0;
  double re_f_max = 0.0;
  double re_u_median = 0.0;
  double cond_g_median = 0.0;
};

/// `region,delta,seed,Re_f,Re_u,condG`, `%.9g`.
void write_runs_csv(std::ostream& out, const std::vector<RunRow>& rows);
std::vector<RunRow> read_runs_csv(std::istream& in);
/// `region,delta,seeds,Re_f_median,Re_f_min,Re_f_max,Re_u_median,condG_median`, `%.9g`.
void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows);
std::vector<SummaryRow> read_summary_csv(std::istream& in);

/// Groups rows by (region, delta) in first-appearance order.
std::vector<SummaryRow> summarize(const std::vector<RunRow>& rows);

/// Series against theta scheme on the configured grid.
struct ForwardRow {
  int intervals_x = 0;
  int intervals_y = 0;
  int time_steps = 0;
  double gap = 0.0;           // relative L2(Omega_T) distance
  double energy_ratio = 0.0;  // max_t ||u|| / ||g f||
};

/// `intervals_x,intervals_y,time_steps,gap,energy_ratio`.
void write_forward_csv(std::ostream& out, const std::vector<ForwardRow>& rows);
std::vector<ForwardRow> read_forward_csv(std::istream& in);

struct CheckOutcome {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// `name,passed,detail` with passed in {0, 1}; details never contain commas.
void write_checks_csv(std::ostream& out, const std::vector<CheckOutcome>& rows);
std::vector<CheckOutcome> read_checks_csv(std::istream& in);

/// Invariant suite over the numerical modules.
std::vector<CheckOutcome> run_invariant_checks();

struct RunOutcome {
  std::vector<RunRow> runs;
  std::vector<SummaryRow> summary;
  std::vector<ForwardRow> forward;
  std::vector<CheckOutcome> checks;
  bool ok = true;
};

/// Worker count: GLINV_THREADS when set (>= 1), else hardware concurrency.
unsigned worker_threads();

/// Executes the configured pipeline. Writes results.csv (one row per
/// region/delta group), runs.csv (one row per cell), history_<k>.csv for
/// training cells and field_*.csv plot data into the output directory.
/// `log` receives one summary line per cell. Forward runs write
/// results.csv in the forward schema; check runs write `name,passed,detail`.
RunOutcome run_experiment(const ExperimentConfig& config, std::ostream& log);

}  // namespace glinv
