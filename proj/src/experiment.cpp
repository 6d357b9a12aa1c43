#include "glinv/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "glinv/error.hpp"

namespace glinv {

namespace {

constexpr double kPi = std::numbers::pi;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(std::string_view(s).substr(start, pos == std::string::npos ? std::string::npos : pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

std::optional<double> to_number(const std::string& raw) {
  std::string s = trim(raw);
  double scale = 1.0;
  if (s.size() >= 2 && s.compare(s.size() - 2, 2, "pi") == 0) {
    scale = kPi;
    s = trim(s.substr(0, s.size() - 2));
    if (s.empty()) return kPi;
    if (s.back() == '*') s = trim(s.substr(0, s.size() - 1));
  }
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v * scale;
}

std::string shortest(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string fmt9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string join_numbers(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + shortest(v[i]);
  return out;
}

Box parse_box(const std::string& text, int dim) {
  const auto axes = split(text, 'x');
  if (static_cast<int>(axes.size()) != dim) throw InvalidInput("expected " + std::to_string(dim) + " axis range(s)");
  Box b;
  for (int a = 0; a < dim; ++a) {
    const auto ends = split(axes[a], ':');
    if (ends.size() != 2) throw InvalidInput("range '" + axes[a] + "' must be lo:hi");
    const auto lo = to_number(ends[0]);
    const auto hi = to_number(ends[1]);
    if (!lo || !hi) throw InvalidInput("bad number in range '" + axes[a] + "'");
    b.lo[a] = *lo;
    b.hi[a] = *hi;
  }
  return b;
}

Region parse_region(const std::string& text, int dim) {
  std::vector<Box> boxes;
  for (const auto& part : split(text, '|')) boxes.push_back(parse_box(part, dim));
  return Region(dim, std::move(boxes));
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"experiment", {"kind", "seed", "seeds", "output", "fields", "method"}},
      {"domain", {"dim", "length", "length_x", "length_y"}},
      {"pde", {"a", "b", "gamma", "gamma_im", "T"}},
      {"data", {"delta", "instants", "regions", "points"}},
      {"inversion", {"modes", "floor", "ridge", "panels"}},
      {"collocation", {"n_int", "n_sb", "n_tb", "n_d"}},
      {"train",
       {"epochs", "learning_rate", "halving_interval", "history_every", "lambda", "beta", "hidden_layers", "width",
        "sobolev", "complex_source"}},
      {"forward", {"nx", "ny", "steps"}},
  };
  return keys;
}

struct Entry {
  std::string value;
  int line = 0;
};

class Entries {
 public:
  void add(const std::string& section, const std::string& key, std::string value, int line) {
    const auto sec = known_keys().find(section);
    if (sec->second.count(key) == 0) throw ConfigError("unknown key '" + key + "' in [" + section + "]", line, key);
    if (!map_.emplace(key, Entry{std::move(value), line}).second)
      throw ConfigError("duplicate key '" + key + "'", line, key);
  }

  const Entry* find(const std::string& key) const {
    const auto it = map_.find(key);
    return it == map_.end() ? nullptr : &it->second;
  }

  double number(const std::string& key, double fallback) const {
    const Entry* e = find(key);
    if (!e) return fallback;
    const auto v = to_number(e->value);
    if (!v) throw ConfigError(key + ": '" + e->value + "' is not a number", e->line, key);
    return *v;
  }

  long integer(const std::string& key, long fallback) const {
    const Entry* e = find(key);
    if (!e) return fallback;
    const auto v = to_number(e->value);
    if (!v || *v != std::floor(*v) || std::abs(*v) > 9e15)
      throw ConfigError(key + ": '" + e->value + "' is not an integer", e->line, key);
    return static_cast<long>(*v);
  }

  std::vector<double> numbers(const std::string& key, std::vector<double> fallback) const {
    const Entry* e = find(key);
    if (!e) return fallback;
    std::vector<double> out;
    for (const auto& item : split(e->value, ',')) {
      const auto v = to_number(item);
      if (!v) throw ConfigError(key + ": '" + item + "' is not a number", e->line, key);
      out.push_back(*v);
    }
    return out;
  }

  bool boolean(const std::string& key, bool fallback) const {
    const Entry* e = find(key);
    if (!e) return fallback;
    if (e->value == "true" || e->value == "1" || e->value == "yes") return true;
    if (e->value == "false" || e->value == "0" || e->value == "no") return false;
    throw ConfigError(key + ": expected true or false", e->line, key);
  }

  int line(const std::string& key) const {
    const Entry* e = find(key);
    return e ? e->line : 0;
  }

 private:
  std::map<std::string, Entry> map_;
};

std::size_t positive_count(const Entries& e, const std::string& key, std::size_t fallback) {
  const long v = e.integer(key, static_cast<long>(fallback));
  if (v < 1) throw ConfigError(key + " must be >= 1", e.line(key), key);
  return static_cast<std::size_t>(v);
}

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end(), [](double a, double b) {
    if (std::isnan(a)) return false;
    if (std::isnan(b)) return true;
    return a < b;
  });
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<std::vector<std::string>> read_csv_rows(std::istream& in, const std::string& header) {
  std::string line;
  if (!std::getline(in, line) || line != header) throw InvalidInput("csv: expected header '" + header + "'");
  const std::size_t width = split(header, ',').size();
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split(line, ',');
    if (fields.size() != width) throw InvalidInput("csv: wrong field count in '" + line + "'");
    rows.push_back(std::move(fields));
  }
  return rows;
}

double csv_number(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw InvalidInput("csv: bad number '" + s + "'");
  return v;
}

// Benchmark source: the first Dirichlet mode shape, f = prod sin(pi x_i / L_i),
// so u(x, t) = I_1(t) f(x).
struct Benchmark {
  DomainSpec domain;
  PdeParams pde;
  double lambda1 = 0.0;

  Benchmark(const DomainSpec& d, const PdeParams& p) : domain(d), pde(p) {
    for (int a = 0; a < d.dim(); ++a) lambda1 += std::pow(kPi / d.length(a), 2);
  }
  ComplexVal f(const Point& p) const {
    double v = 1.0;
    for (int a = 0; a < domain.dim(); ++a) v *= std::sin(kPi * p[a] / domain.length(a));
    return v;
  }
  ComplexVal u(const Point& p, double t) const { return time_kernel(pde, lambda1, t) * f(p); }
  double f_norm() const { return std::sqrt(domain.measure() / std::pow(2.0, domain.dim())); }
};

std::vector<Point> plot_grid(const DomainSpec& domain) {
  const int n = domain.dim() == 2 ? 41 : 101;
  std::vector<Point> pts;
  if (domain.dim() == 1) {
    for (int i = 0; i < n; ++i) pts.push_back({domain.length(0) * i / (n - 1), 0.0});
  } else {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) pts.push_back({domain.length(0) * i / (n - 1), domain.length(1) * j / (n - 1)});
  }
  return pts;
}

std::string coord_header(int dim) { return dim == 2 ? "x,y" : "x"; }

std::string coords(const Point& p, int dim) {
  char buf[80];
  if (dim == 2)
    std::snprintf(buf, sizeof buf, "%.9g,%.9g", p.x, p.y);
  else
    std::snprintf(buf, sizeof buf, "%.9g", p.x);
  return buf;
}

void write_field_f(const std::filesystem::path& path, const DomainSpec& domain,
                   const std::function<ComplexVal(const Point&)>& estimate, const Benchmark& bench) {
  std::ofstream out(path, std::ios::binary);
  out << coord_header(domain.dim()) << ",re,im,exact_re,exact_im\n";
  for (const auto& p : plot_grid(domain)) {
    const ComplexVal v = estimate(p);
    const ComplexVal e = bench.f(p);
    out << coords(p, domain.dim()) << ',' << fmt9(v.real()) << ',' << fmt9(v.imag()) << ',' << fmt9(e.real()) << ','
        << fmt9(e.imag()) << '\n';
  }
}

void write_field_u_pinn(const std::filesystem::path& path, const CPinnParams& params, const Benchmark& bench,
                        const std::vector<double>& times) {
  const DomainSpec& domain = bench.domain;
  const int dim = domain.dim();
  const auto pts = plot_grid(domain);
  std::ofstream out(path, std::ios::binary);
  out << coord_header(dim) << ",t,abs_u,abs_exact\n";
  for (double t : times) {
    Eigen::MatrixXd c(dim + 1, static_cast<Eigen::Index>(pts.size()));
    for (std::size_t k = 0; k < pts.size(); ++k) {
      for (int a = 0; a < dim; ++a) c(a, static_cast<Eigen::Index>(k)) = pts[k][a];
      c(dim, static_cast<Eigen::Index>(k)) = t;
    }
    const Eigen::VectorXcd u = forward_u_batch(params, c);
    for (std::size_t k = 0; k < pts.size(); ++k) {
      out << coords(pts[k], dim) << ',' << fmt9(t) << ',' << fmt9(std::abs(u[static_cast<Eigen::Index>(k)])) << ','
          << fmt9(std::abs(bench.u(pts[k], t))) << '\n';
    }
  }
}

struct Cell {
  std::size_t group = 0;
  Region region;
  double delta = 0.0;
  std::uint64_t seed = 0;
  bool first_in_group = false;
};

struct CellResult {
  RunRow row;
  std::string log;
};

std::string log_line(const RunRow& r) {
  std::string s = "region=" + r.region + " delta=" + fmt9(r.delta) + " seed=" + std::to_string(r.seed) +
                  " Re_f=" + fmt9(r.re_f);
  if (!std::isnan(r.re_u)) s += " Re_u=" + fmt9(r.re_u);
  if (!std::isnan(r.cond_g)) s += " condG=" + fmt9(r.cond_g);
  return s;
}

class CellRunner {
 public:
  CellRunner(const ExperimentConfig& config) : config_(config), bench_(config.domain, config.pde) {}

  CellResult run(const Cell& cell, std::size_t index) const {
    RunRow row{cell.region.label(), cell.delta, cell.seed, 0.0, std::nan(""), std::nan("")};
    const SeedSet seeds = SeedSet::derive(cell.seed);
    const bool pinn = config_.kind == ExperimentKind::TrainPinn ||
                      (config_.kind == ExperimentKind::InvertLocal && config_.local_method == LocalMethod::Pinn);
    if (pinn) {
      run_pinn(cell, index, seeds, row);
    } else if (config_.kind == ExperimentKind::InvertGlobal) {
      run_spectral(cell, seeds, row);
    } else {
      run_lsq(cell, seeds, row);
    }
    return {row, log_line(row)};
  }

 private:
  std::filesystem::path field_path(const char* what, std::size_t group) const {
    return config_.output_dir / (std::string("field_") + what + "_" + std::to_string(group) + ".csv");
  }

  void run_spectral(const Cell& cell, const SeedSet& seeds, RunRow& row) const {
    const DomainSpec& domain = config_.domain;
    PdeParams pde = config_.pde;
    pde.T = config_.effective_instants().front();
    const Benchmark bench(domain, pde);
    const TensorRule rule(domain.box(), domain.dim(), {config_.quad_panels, 8});
    std::vector<ComplexVal> clean(rule.size());
    for (std::size_t k = 0; k < rule.size(); ++k) clean[k] = bench.u(rule.node(k), pde.T);
    SampledField h{rule, add_noise(clean, {cell.delta, seeds.noise})};
    CutoffRule cut{config_.effective_modes(), config_.cutoff_floor, 0};
    if (domain.dim() == 2) cut.axis_cap = static_cast<int>(std::ceil(std::sqrt(double(cut.n_cut))));
    const GlobalReconstruction rec = reconstruct_global(h, domain, pde, cut);
    const auto estimate = [&](const Point& p) { return rec.f.evaluate(p); };
    const auto truth = [&](const Point& p) { return bench.f(p); };
    row.re_f = relative_error_f(estimate, truth, domain, {domain.dim() == 2 ? 16 : 64, 8});
    if (config_.write_fields && cell.first_in_group) write_field_f(field_path("f", cell.group), domain, estimate, bench);
  }

  void run_lsq(const Cell& cell, const SeedSet& seeds, RunRow& row) const {
    const auto inst = config_.effective_instants();
    const auto truth_u = [&](const Point& p, double t) { return bench_.u(p, t); };
    const ObservationSet obs = make_observations(cell.region, lattice_points(cell.region, config_.points_per_box),
                                                 {inst[0], inst[1]}, truth_u, {cell.delta, seeds.noise});
    const LocalReconstruction rec =
        reconstruct_local_lsq(obs, config_.domain, config_.pde, config_.effective_modes(), config_.ridge);
    const auto estimate = [&](const Point& p) { return rec.f.evaluate(p); };
    const auto truth = [&](const Point& p) { return bench_.f(p); };
    row.re_f = relative_error_f(estimate, truth, config_.domain, {config_.domain.dim() == 2 ? 16 : 64, 8});
    row.cond_g = rec.condition;
    if (config_.write_fields && cell.first_in_group)
      write_field_f(field_path("f", cell.group), config_.domain, estimate, bench_);
  }

  void run_pinn(const Cell& cell, std::size_t index, const SeedSet& seeds, RunRow& row) const {
    const auto inst = config_.effective_instants();
    PinnProblem pb;
    LossProblem& lp = pb.loss;
    lp.domain = config_.domain;
    lp.pde = config_.pde;
    lp.weights = config_.weights;
    lp.sobolev_tb = lp.sobolev_sb = config_.sobolev;
    lp.sets = sample_collocation(config_.collocation, lp.domain, cell.region, lp.pde.T, seeds.collocation);
    lp.data.instants = inst;
    for (std::size_t j = 0; j < inst.size(); ++j) {
      std::vector<ComplexVal> clean;
      clean.reserve(lp.sets.data.size());
      for (const auto& p : lp.sets.data) clean.push_back(bench_.u(p, inst[j]));
      lp.data.values.push_back(add_noise(clean, {cell.delta, seeds.noise + j}));
    }
    pb.f_exact = [this](const Point& p) { return bench_.f(p); };
    pb.u_exact = [this](const Point& p, double t) { return bench_.u(p, t); };

    TrainConfig tc = config_.train;
    tc.seed = seeds.init;
    tc.shape.dim = lp.domain.dim();
    const TrainResult r = train(tc, pb);
    row.re_f = r.re_f;
    row.re_u = r.re_u;

    std::ofstream hist(config_.output_dir / ("history_" + std::to_string(index) + ".csv"), std::ios::binary);
    write_history_csv(hist, r.history);
    if (config_.write_fields && cell.first_in_group) {
      write_field_f(field_path("f", cell.group), lp.domain, [&](const Point& p) { return forward_f(r.params, p); },
                    bench_);
      write_field_u_pinn(field_path("u", cell.group), r.params, bench_, inst);
    }
  }

  const ExperimentConfig& config_;
  Benchmark bench_;
};

std::vector<Cell> build_cells(const ExperimentConfig& config) {
  std::vector<Cell> cells;
  std::size_t group = 0;
  for (const auto& region : config.effective_regions()) {
    for (double delta : config.deltas) {
      bool first = true;
      for (std::uint64_t seed : config.seeds()) {
        cells.push_back({group, region, delta, seed, first});
        first = false;
      }
      ++group;
    }
  }
  return cells;
}

RunOutcome run_forward(const ExperimentConfig& config, std::ostream& log) {
  const DomainSpec& domain = config.domain;
  const Benchmark bench(domain, config.pde);
  GridSpec grid = config.grid;
  if (domain.dim() == 2 && grid.intervals_y == 0) grid.intervals_y = grid.intervals_x;
  if (domain.dim() == 1) grid.intervals_y = 0;

  const auto mode = enumerate_modes(domain, 1);
  CoefficientVector f = CoefficientVector::zeros(mode);
  f.values[0] = 1.0 / mode[0].normalization;
  const GridField series = solve_series(CoefficientVector::zeros(mode), f, config.pde, grid);
  const SpatialSamples zero(series.spatial_size(), ComplexVal(0.0));
  const ComplexVal gamma = config.pde.gamma;
  const GridField theta = solve_theta_scheme(zero, sample_grid([&](const Point& p) { return bench.f(p); }, domain, grid),
                                             [gamma](double t) { return std::exp(-gamma * t); }, config.pde, domain,
                                             grid, 0.5);
  const double re_g = gamma.real();
  const double T = config.pde.T;
  const double g_sq = std::abs(re_g) < 1e-14 ? T : (1.0 - std::exp(-2.0 * re_g * T)) / (2.0 * re_g);
  ForwardRow row{grid.intervals_x, grid.intervals_y, grid.time_steps, relative_l2_distance(theta, series),
                 energy_ratio(theta, 0.0, bench.f_norm() * std::sqrt(g_sq))};

  RunOutcome outcome;
  outcome.forward.push_back(row);
  log << "gap=" << fmt9(row.gap) << " energy_ratio=" << fmt9(row.energy_ratio) << '\n';
  {
    std::ofstream out(config.output_dir / "results.csv", std::ios::binary);
    write_forward_csv(out, outcome.forward);
  }
  if (config.write_fields) {
    std::ofstream out(config.output_dir / "field_u.csv", std::ios::binary);
    const int dim = domain.dim();
    out << coord_header(dim) << ",t,abs_series,abs_theta\n";
    const int last = series.nt() - 1;
    for (int k : {last / 2, last}) {
      for (int i = 0; i < series.nx(); ++i) {
        for (int j = 0; j < series.ny(); ++j) {
          out << coords(series.point(i, j), dim) << ',' << fmt9(series.t(k)) << ','
              << fmt9(std::abs(series.at(k, i, j))) << ',' << fmt9(std::abs(theta.at(k, i, j))) << '\n';
        }
      }
    }
  }
  return outcome;
}

}  // namespace

const char* kind_name(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Forward: return "forward";
    case ExperimentKind::InvertGlobal: return "invert-global";
    case ExperimentKind::InvertLocal: return "invert-local";
    case ExperimentKind::TrainPinn: return "train-pinn";
    case ExperimentKind::Check: return "check";
  }
  return "?";
}

std::optional<ExperimentKind> parse_kind(const std::string& name) {
  for (auto k : {ExperimentKind::Forward, ExperimentKind::InvertGlobal, ExperimentKind::InvertLocal,
                 ExperimentKind::TrainPinn, ExperimentKind::Check}) {
    if (name == kind_name(k)) return k;
  }
  return std::nullopt;
}

std::vector<double> ExperimentConfig::effective_instants() const {
  std::vector<double> t = instants;
  if (t.empty()) {
    const bool two = kind == ExperimentKind::InvertLocal || (kind == ExperimentKind::TrainPinn && !regions.empty());
    t = two ? std::vector<double>{0.5 * pde.T, pde.T} : std::vector<double>{pde.T};
  }
  std::sort(t.begin(), t.end());
  return t;
}

std::size_t ExperimentConfig::effective_modes() const {
  if (modes > 0) return modes;
  if (kind == ExperimentKind::InvertLocal) return 3;
  return CutoffRule::defaults_for(domain.dim()).n_cut;
}

std::vector<Region> ExperimentConfig::effective_regions() const {
  if (kind == ExperimentKind::InvertGlobal || regions.empty()) return {Region::whole(domain)};
  return regions;
}

void ExperimentConfig::validate() const {
  try {
    pde.validate();
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what(), 0, "pde");
  }
  for (double d : deltas) {
    if (!(d >= 0.0)) throw ConfigError("delta must be ≥ 0", 0, "delta");
  }
  if (deltas.empty()) throw ConfigError("delta list is empty", 0, "delta");
  if (seed_count < 1) throw ConfigError("seeds must be >= 1", 0, "seeds");
  for (const auto& r : regions) {
    if (r.dim() != domain.dim()) throw ConfigError("region dimension does not match the domain", 0, "regions");
    if (!r.inside(domain)) throw ConfigError("region " + r.label() + " is not inside the domain", 0, "regions");
  }
  for (double t : instants) {
    if (!(t > 0.0 && t <= pde.T)) throw ConfigError("instants must lie in (0, T]", 0, "instants");
  }
  const auto inst = effective_instants();
  if (kind == ExperimentKind::InvertGlobal && inst.size() != 1)
    throw ConfigError("invert-global takes exactly one instant", 0, "instants");
  if (kind == ExperimentKind::InvertLocal && local_method == LocalMethod::Lsq && inst.size() != 2)
    throw ConfigError("invert-local takes exactly two instants", 0, "instants");
  if (kind == ExperimentKind::InvertLocal && regions.empty())
    throw ConfigError("invert-local needs at least one region", 0, "regions");
  if (collocation.n_int < 1 || collocation.n_sb < 1 || collocation.n_tb < 1 || collocation.n_d < 1)
    throw ConfigError("collocation counts must be positive", 0, "collocation");
  if (points_per_box < 1) throw ConfigError("points must be >= 1", 0, "points");
  if (quad_panels < 1) throw ConfigError("panels must be >= 1", 0, "panels");
  if (!(cutoff_floor >= 0.0)) throw ConfigError("floor must be >= 0", 0, "floor");
  if (ridge && !(*ridge >= 0.0)) throw ConfigError("ridge must be >= 0", 0, "ridge");
  if (train.epochs < 0) throw ConfigError("epochs must be >= 0", 0, "epochs");
  if (!(train.learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0", 0, "learning_rate");
  if (train.halving_interval < 0) throw ConfigError("halving_interval must be >= 0", 0, "halving_interval");
  if (train.history_every < 1) throw ConfigError("history_every must be >= 1", 0, "history_every");
  if (train.shape.hidden_layers < 1) throw ConfigError("hidden_layers must be >= 1", 0, "hidden_layers");
  if (train.shape.width < 1) throw ConfigError("width must be >= 1", 0, "width");
  if (!(weights.lambda >= 0.0)) throw ConfigError("lambda must be >= 0", 0, "lambda");
  if (!(weights.beta >= 0.0)) throw ConfigError("beta must be >= 0", 0, "beta");
  if (grid.intervals_x < 2 || grid.time_steps < 1 || (domain.dim() == 2 && grid.intervals_y != 0 && grid.intervals_y < 2))
    throw ConfigError("forward grid too coarse", 0, "nx");
}

ExperimentConfig parse_config(const std::string& text, std::optional<ExperimentKind> expected) {
  Entries entries;
  std::string section = "experiment";
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("unterminated section header", line_no);
      section = trim(line.substr(1, line.size() - 2));
      if (known_keys().count(section) == 0) throw ConfigError("unknown section [" + section + "]", line_no, section);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected 'key = value'", line_no);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("missing key before '='", line_no);
    if (value.empty()) throw ConfigError("missing value for '" + key + "'", line_no, key);
    entries.add(section, key, value, line_no);
  }

  ExperimentConfig c;
  if (const Entry* e = entries.find("kind")) {
    const auto k = parse_kind(e->value);
    if (!k) throw ConfigError("kind: unknown experiment kind '" + e->value + "'", e->line, "kind");
    if (expected && *k != *expected) {
      throw ConfigError(std::string("kind '") + kind_name(*k) + "' does not match the requested '" +
                            kind_name(*expected) + "'",
                        e->line, "kind");
    }
    c.kind = *k;
  } else if (expected) {
    c.kind = *expected;
  }
  if (const Entry* e = entries.find("method")) {
    if (e->value == "lsq")
      c.local_method = LocalMethod::Lsq;
    else if (e->value == "pinn")
      c.local_method = LocalMethod::Pinn;
    else
      throw ConfigError("method: expected lsq or pinn", e->line, "method");
  }
  const long seed = entries.integer("seed", 1);
  if (seed < 0) throw ConfigError("seed must be >= 0", entries.line("seed"), "seed");
  c.seed_base = static_cast<std::uint64_t>(seed);
  c.seed_count = positive_count(entries, "seeds", 1);
  if (const Entry* e = entries.find("output")) c.output_dir = e->value;
  c.write_fields = entries.boolean("fields", true);

  const long dim = entries.integer("dim", 1);
  if (dim != 1 && dim != 2) throw ConfigError("dim must be 1 or 2", entries.line("dim"), "dim");
  const double length = entries.number("length", kPi);
  const double lx = entries.number("length_x", length);
  const double ly = entries.number("length_y", length);
  for (const char* k : {"length", "length_x", "length_y"}) {
    if (!(entries.number(k, 1.0) > 0.0)) throw ConfigError(std::string(k) + " must be > 0", entries.line(k), k);
  }
  if (dim == 1 && entries.find("length_y")) throw ConfigError("length_y needs dim = 2", entries.line("length_y"), "length_y");
  c.domain = dim == 2 ? DomainSpec::rectangle(lx, ly) : DomainSpec::interval(lx);

  c.pde.a = entries.number("a", 1.0);
  c.pde.b = entries.number("b", 1.0);
  c.pde.gamma = {entries.number("gamma", 1.0), entries.number("gamma_im", 0.0)};
  c.pde.T = entries.number("T", 1.0);
  if (!(c.pde.a > 0.0)) throw ConfigError("a must be > 0", entries.line("a"), "a");
  if (!(c.pde.T > 0.0)) throw ConfigError("T must be > 0", entries.line("T"), "T");

  c.deltas = entries.numbers("delta", {0.0});
  for (double d : c.deltas) {
    if (!(d >= 0.0)) throw ConfigError("delta must be ≥ 0", entries.line("delta"), "delta");
  }
  c.instants = entries.numbers("instants", {});
  for (double t : c.instants) {
    if (!(t > 0.0 && t <= c.pde.T))
      throw ConfigError("instants must lie in (0, T]", entries.line("instants"), "instants");
  }
  if (const Entry* e = entries.find("regions")) {
    for (const auto& item : split(e->value, ';')) {
      try {
        c.regions.push_back(parse_region(item, static_cast<int>(dim)));
      } catch (const InvalidInput& err) {
        throw ConfigError("regions: '" + item + "': " + err.what(), e->line, "regions");
      }
      if (!c.regions.back().inside(c.domain))
        throw ConfigError("regions: '" + item + "' is not inside the domain", e->line, "regions");
    }
  }
  c.points_per_box = positive_count(entries, "points", 256);

  if (const Entry* e = entries.find("modes")) {
    c.modes = positive_count(entries, "modes", 1);
    (void)e;
  }
  c.cutoff_floor = entries.number("floor", 1e-8);
  if (!(c.cutoff_floor >= 0.0)) throw ConfigError("floor must be >= 0", entries.line("floor"), "floor");
  if (entries.find("ridge")) {
    c.ridge = entries.number("ridge", 0.0);
    if (!(*c.ridge >= 0.0)) throw ConfigError("ridge must be >= 0", entries.line("ridge"), "ridge");
  }
  c.quad_panels = static_cast<int>(positive_count(entries, "panels", 32));

  const CollocationCounts base = CollocationCounts::defaults(static_cast<int>(dim));
  c.collocation.n_int = positive_count(entries, "n_int", base.n_int);
  c.collocation.n_sb = positive_count(entries, "n_sb", base.n_sb);
  c.collocation.n_tb = positive_count(entries, "n_tb", base.n_tb);
  c.collocation.n_d = positive_count(entries, "n_d", base.n_d);

  c.train.epochs = entries.integer("epochs", c.train.epochs);
  if (c.train.epochs < 0) throw ConfigError("epochs must be >= 0", entries.line("epochs"), "epochs");
  c.train.learning_rate = entries.number("learning_rate", c.train.learning_rate);
  if (!(c.train.learning_rate > 0.0))
    throw ConfigError("learning_rate must be > 0", entries.line("learning_rate"), "learning_rate");
  c.train.halving_interval = entries.integer("halving_interval", 0);
  if (c.train.halving_interval < 0)
    throw ConfigError("halving_interval must be >= 0", entries.line("halving_interval"), "halving_interval");
  c.train.history_every = static_cast<int>(positive_count(entries, "history_every", 100));
  c.weights.lambda = entries.number("lambda", 0.01);
  c.weights.beta = entries.number("beta", 1.0);
  for (const char* k : {"lambda", "beta"}) {
    if (!(entries.number(k, 0.0) >= 0.0)) throw ConfigError(std::string(k) + " must be >= 0", entries.line(k), k);
  }
  c.train.shape.hidden_layers = static_cast<int>(positive_count(entries, "hidden_layers", 2));
  c.train.shape.width = static_cast<int>(positive_count(entries, "width", 20));
  c.train.shape.complex_source = entries.boolean("complex_source", false);
  c.train.shape.dim = static_cast<int>(dim);
  c.sobolev = entries.boolean("sobolev", true);

  c.grid.intervals_x = static_cast<int>(positive_count(entries, "nx", dim == 2 ? 64 : 200));
  c.grid.intervals_y = dim == 2 ? static_cast<int>(positive_count(entries, "ny", c.grid.intervals_x)) : 0;
  c.grid.time_steps = static_cast<int>(positive_count(entries, "steps", 1000));
  if (dim == 1 && entries.find("ny")) throw ConfigError("ny needs dim = 2", entries.line("ny"), "ny");

  c.validate();
  return c;
}

std::string echo_config(const ExperimentConfig& c) {
  const int dim = c.domain.dim();
  std::ostringstream o;
  o << "[experiment]\n"
    << "kind = " << kind_name(c.kind) << '\n'
    << "seed = " << c.seed_base << '\n'
    << "seeds = " << c.seed_count << '\n'
    << "output = " << c.output_dir.string() << '\n'
    << "fields = " << (c.write_fields ? "true" : "false") << '\n'
    << "method = " << (c.local_method == LocalMethod::Lsq ? "lsq" : "pinn") << '\n'
    << "[domain]\n"
    << "dim = " << dim << '\n'
    << "length_x = " << shortest(c.domain.length(0)) << '\n';
  if (dim == 2) o << "length_y = " << shortest(c.domain.length(1)) << '\n';
  o << "[pde]\n"
    << "a = " << shortest(c.pde.a) << '\n'
    << "b = " << shortest(c.pde.b) << '\n'
    << "gamma = " << shortest(c.pde.gamma.real()) << '\n'
    << "gamma_im = " << shortest(c.pde.gamma.imag()) << '\n'
    << "T = " << shortest(c.pde.T) << '\n'
    << "[data]\n"
    << "delta = " << join_numbers(c.deltas) << '\n'
    << "instants = " << join_numbers(c.effective_instants()) << '\n';
  if (!c.regions.empty()) {
    o << "regions = ";
    for (std::size_t i = 0; i < c.regions.size(); ++i) o << (i ? "; " : "") << c.regions[i].label();
    o << '\n';
  }
  o << "points = " << c.points_per_box << '\n'
    << "[inversion]\n"
    << "modes = " << c.effective_modes() << '\n'
    << "floor = " << shortest(c.cutoff_floor) << '\n';
  if (c.ridge) o << "ridge = " << shortest(*c.ridge) << '\n';
  o << "panels = " << c.quad_panels << '\n'
    << "[collocation]\n"
    << "n_int = " << c.collocation.n_int << '\n'
    << "n_sb = " << c.collocation.n_sb << '\n'
    << "n_tb = " << c.collocation.n_tb << '\n'
    << "n_d = " << c.collocation.n_d << '\n'
    << "[train]\n"
    << "epochs = " << c.train.epochs << '\n'
    << "learning_rate = " << shortest(c.train.learning_rate) << '\n'
    << "halving_interval = " << c.train.effective_halving_interval() << '\n'
    << "history_every = " << c.train.history_every << '\n'
    << "lambda = " << shortest(c.weights.lambda) << '\n'
    << "beta = " << shortest(c.weights.beta) << '\n'
    << "hidden_layers = " << c.train.shape.hidden_layers << '\n'
    << "width = " << c.train.shape.width << '\n'
    << "sobolev = " << (c.sobolev ? "true" : "false") << '\n'
    << "complex_source = " << (c.train.shape.complex_source ? "true" : "false") << '\n'
    << "[forward]\n"
    << "nx = " << c.grid.intervals_x << '\n';
  if (dim == 2) o << "ny = " << (c.grid.intervals_y ? c.grid.intervals_y : c.grid.intervals_x) << '\n';
  o << "steps = " << c.grid.time_steps << '\n';
  return o.str();
}

SeedSet SeedSet::derive(std::uint64_t seed) {
  return {splitmix64(4 * seed + 1), splitmix64(4 * seed + 2), splitmix64(4 * seed + 3)};
}

void write_runs_csv(std::ostream& out, const std::vector<RunRow>& rows) {
  out << "region,delta,seed,Re_f,Re_u,condG\n";
  for (const auto& r : rows) {
    out << r.region << ',' << fmt9(r.delta) << ',' << r.seed << ',' << fmt9(r.re_f) << ',' << fmt9(r.re_u) << ','
        << fmt9(r.cond_g) << '\n';
  }
}

std::vector<RunRow> read_runs_csv(std::istream& in) {
  std::vector<RunRow> rows;
  for (const auto& f : read_csv_rows(in, "region,delta,seed,Re_f,Re_u,condG")) {
    rows.push_back({f[0], csv_number(f[1]), std::stoull(f[2]), csv_number(f[3]), csv_number(f[4]),
                    csv_number(f[5])});
  }
  return rows;
}

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << "region,delta,seeds,Re_f_median,Re_f_min,Re_f_max,Re_u_median,condG_median\n";
  for (const auto& r : rows) {
    out << r.region << ',' << fmt9(r.delta) << ',' << r.seeds << ',' << fmt9(r.re_f_median) << ','
        << fmt9(r.re_f_min) << ',' << fmt9(r.re_f_max) << ',' << fmt9(r.re_u_median) << ','
        << fmt9(r.cond_g_median) << '\n';
  }
}

std::vector<SummaryRow> read_summary_csv(std::istream& in) {
  std::vector<SummaryRow> rows;
  for (const auto& f :
       read_csv_rows(in, "region,delta,seeds,Re_f_median,Re_f_min,Re_f_max,Re_u_median,condG_median")) {
    rows.push_back({f[0], csv_number(f[1]), static_cast<std::size_t>(std::stoull(f[2])), csv_number(f[3]),
                    csv_number(f[4]), csv_number(f[5]), csv_number(f[6]), csv_number(f[7])});
  }
  return rows;
}

void write_forward_csv(std::ostream& out, const std::vector<ForwardRow>& rows) {
  out << "intervals_x,intervals_y,time_steps,gap,energy_ratio\n";
  for (const auto& r : rows) {
    out << r.intervals_x << ',' << r.intervals_y << ',' << r.time_steps << ',' << fmt9(r.gap) << ','
        << fmt9(r.energy_ratio) << '\n';
  }
}

std::vector<ForwardRow> read_forward_csv(std::istream& in) {
  std::vector<ForwardRow> rows;
  for (const auto& f : read_csv_rows(in, "intervals_x,intervals_y,time_steps,gap,energy_ratio")) {
    rows.push_back({std::stoi(f[0]), std::stoi(f[1]), std::stoi(f[2]), csv_number(f[3]), csv_number(f[4])});
  }
  return rows;
}

void write_checks_csv(std::ostream& out, const std::vector<CheckOutcome>& rows) {
  out << "name,passed,detail\n";
  for (const auto& r : rows) {
    std::string detail = r.detail;
    std::replace(detail.begin(), detail.end(), ',', ';');
    std::replace(detail.begin(), detail.end(), '\n', ' ');
    out << r.name << ',' << (r.passed ? 1 : 0) << ',' << detail << '\n';
  }
}

std::vector<CheckOutcome> read_checks_csv(std::istream& in) {
  std::vector<CheckOutcome> rows;
  for (const auto& f : read_csv_rows(in, "name,passed,detail")) {
    if (f[1] != "0" && f[1] != "1") throw InvalidInput("csv: passed must be 0 or 1");
    rows.push_back({f[0], f[1] == "1", f[2]});
  }
  return rows;
}

std::vector<SummaryRow> summarize(const std::vector<RunRow>& rows) {
  struct Acc {
    std::string region;
    double delta;
    std::vector<double> re_f, re_u, cond;
  };
  std::vector<Acc> groups;
  for (const auto& r : rows) {
    auto it = std::find_if(groups.begin(), groups.end(),
                           [&](const Acc& g) { return g.region == r.region && g.delta == r.delta; });
    if (it == groups.end()) {
      groups.push_back({r.region, r.delta, {}, {}, {}});
      it = groups.end() - 1;
    }
    it->re_f.push_back(r.re_f);
    it->re_u.push_back(r.re_u);
    it->cond.push_back(r.cond_g);
  }
  std::vector<SummaryRow> out;
  for (const auto& g : groups) {
    const auto [lo, hi] = std::minmax_element(g.re_f.begin(), g.re_f.end());
    out.push_back({g.region, g.delta, g.re_f.size(), median(g.re_f), *lo, *hi, median(g.re_u), median(g.cond)});
  }
  return out;
}

unsigned worker_threads() {
  if (const char* env = std::getenv("GLINV_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

RunOutcome run_experiment(const ExperimentConfig& config, std::ostream& log) {
  config.validate();
  std::filesystem::create_directories(config.output_dir);

  if (config.kind == ExperimentKind::Forward) return run_forward(config, log);

  if (config.kind == ExperimentKind::Check) {
    RunOutcome outcome;
    outcome.checks = run_invariant_checks();
    for (const auto& c : outcome.checks) {
      log << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
      outcome.ok = outcome.ok && c.passed;
    }
    std::ofstream out(config.output_dir / "results.csv", std::ios::binary);
    write_checks_csv(out, outcome.checks);
    return outcome;
  }

  const std::vector<Cell> cells = build_cells(config);
  const CellRunner runner(config);
  std::vector<CellResult> results(cells.size());
  std::vector<std::exception_ptr> errors(cells.size());
  std::vector<char> done(cells.size(), 0);
  std::atomic<std::size_t> next{0};
  std::mutex print_mutex;
  std::size_t printed = 0;

  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        results[i] = runner.run(cells[i], i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
      std::lock_guard lock(print_mutex);
      done[i] = 1;
      while (printed < cells.size() && done[printed]) {
        if (!errors[printed]) log << results[printed].log << '\n' << std::flush;
        ++printed;
      }
    }
  };
  const unsigned n_workers = std::min<std::size_t>(worker_threads(), cells.size());
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < n_workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  RunOutcome outcome;
  for (const auto& r : results) outcome.runs.push_back(r.row);
  outcome.summary = summarize(outcome.runs);
  {
    std::ofstream out(config.output_dir / "runs.csv", std::ios::binary);
    write_runs_csv(out, outcome.runs);
  }
  {
    std::ofstream out(config.output_dir / "results.csv", std::ios::binary);
    write_summary_csv(out, outcome.summary);
  }
  return outcome;
}

}  // namespace glinv
