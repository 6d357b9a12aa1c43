#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "glinv/error.hpp"
#include "glinv/experiment.hpp"

namespace {

constexpr int kConfigExit = 2;
constexpr int kNumericalExit = 3;

int report(const char* kind, const std::string& message, int code, int line = 0, const std::string& key = {}) {
  nlohmann::json rec{{"status", "error"}, {"kind", kind}, {"message", message}, {"exit_code", code}};
  if (line > 0) rec["line"] = line;
  if (!key.empty()) rec["key"] = key;
  std::cerr << rec.dump() << '\n';
  return code;
}

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<long> epochs;
};

int execute(glinv::ExperimentKind kind, const Options& opt) {
  glinv::ExperimentConfig config;
  try {
    std::string text;
    if (!opt.config.empty()) {
      std::ifstream in(opt.config, std::ios::binary);
      if (!in) throw glinv::ConfigError("cannot read config file '" + opt.config + "'");
      std::ostringstream buf;
      buf << in.rdbuf();
      text = buf.str();
    }
    config = glinv::parse_config(text, kind);
    if (opt.seed) config.seed_base = *opt.seed;
    if (opt.out) config.output_dir = *opt.out;
    if (opt.epochs) {
      if (*opt.epochs < 0) throw glinv::ConfigError("epochs must be >= 0", 0, "epochs");
      config.train.epochs = *opt.epochs;
    }
    config.validate();
  } catch (const glinv::ConfigError& e) {
    return report("config", e.what(), kConfigExit, e.line(), e.key());
  }

  try {
    const std::string echo = glinv::echo_config(config);
    std::cout << echo << std::flush;
    std::filesystem::create_directories(config.output_dir);
    std::ofstream(config.output_dir / "config.txt", std::ios::binary) << echo;
    const glinv::RunOutcome outcome = glinv::run_experiment(config, std::cout);
    if (!outcome.ok) return report("check", "invariant checks failed", kNumericalExit);
    for (const auto& row : outcome.summary) {
      std::cout << "median region=" << row.region << " delta=" << row.delta << " seeds=" << row.seeds
                << " Re_f=" << row.re_f_median << '\n';
    }
  } catch (const glinv::ConfigError& e) {
    return report("config", e.what(), kConfigExit, e.line(), e.key());
  } catch (const std::exception& e) {
    return report("numerical", e.what(), kNumericalExit);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Inverse source reconstruction for the linear complex Ginzburg-Landau equation"};
  app.require_subcommand(1);
  Options opt;
  glinv::ExperimentKind chosen = glinv::ExperimentKind::Check;

  for (auto kind : {glinv::ExperimentKind::Forward, glinv::ExperimentKind::InvertGlobal,
                    glinv::ExperimentKind::InvertLocal, glinv::ExperimentKind::TrainPinn,
                    glinv::ExperimentKind::Check}) {
    CLI::App* sub = app.add_subcommand(glinv::kind_name(kind));
    auto* cfg = sub->add_option("--config", opt.config, "configuration file");
    if (kind != glinv::ExperimentKind::Check) cfg->required();
    sub->add_option("--seed", opt.seed, "base seed (overrides the config)");
    sub->add_option("--out", opt.out, "output directory (overrides the config)");
    sub->add_option("--epochs", opt.epochs, "training epochs (overrides the config)");
    sub->callback([&chosen, kind] { chosen = kind; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return report("usage", e.what(), kConfigExit);
  }
  return execute(chosen, opt);
}
