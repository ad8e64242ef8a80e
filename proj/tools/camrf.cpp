#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "camrf/errors.hpp"
#include "commands.hpp"
#include "config.hpp"

using namespace camrf;
using namespace camrf::app;

int main(int argc, char** argv) {
  CLI::App cli{"camrf: compile tree ensembles onto an analog CAM + RRAM vote architecture"};
  cli.require_subcommand(1);

  std::string config_path;
  std::string seed;
  std::string out;
  std::string format;
  unsigned threads = 0;
  std::vector<std::string> overrides;
  Inputs in;
  cli.add_option("--config", config_path, "INI experiment config");
  cli.add_option("--seed", seed, "master seed (overrides experiment.seed)");
  cli.add_option("--out", out, "output directory (overrides experiment.out)");
  cli.add_option("--threads", threads, "worker threads, 0 = available parallelism");
  cli.add_option("--format", format, "report format")->check(CLI::IsMember({"csv", "json"}));
  cli.add_option("--set", overrides, "section.key=value override, repeatable");
  cli.add_option("--model", in.model, "model JSON to import");
  cli.add_option("--plan", in.plan, "plan JSON to use instead of compiling");
  cli.add_option("--dataset", in.dataset, "dataset CSV (overrides data.path)");

  struct Command {
    const char* name;
    const char* help;
    int (*run)(const ExperimentConfig&, const Inputs&);
  };
  const Command commands[] = {
      {"train", "train a forest and write model.json", cmd_train},
      {"compile", "compile a model into plan.json", cmd_compile},
      {"simulate", "program the architecture and report accuracy", cmd_simulate},
      {"sweep", "Monte-Carlo sweep of one parameter", cmd_sweep},
      {"perf", "power, delay, throughput and energy report", cmd_perf},
      {"validate", "check CAM inference against the software forest", cmd_validate},
  };
  for (const auto& c : commands) cli.add_subcommand(c.name, c.help)->fallthrough();

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
    for (const auto& o : overrides) apply_override(cfg, o);
    if (!seed.empty()) set_value(cfg, "experiment.seed", seed);
    if (!out.empty()) cfg.out = out;
    if (!format.empty()) cfg.format = format;
    if (threads > 0) cfg.threads = threads;
    for (const auto& c : commands)
      if (cli.got_subcommand(c.name)) return c.run(cfg, in);
    return kExitOther;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const CalibrationError& e) {
    std::cerr << "calibration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const InvariantError& e) {
    std::cerr << "invariant violation: " << e.what() << "\n";
    return kExitInvariant;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOther;
  }
}
