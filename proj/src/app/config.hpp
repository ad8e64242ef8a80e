#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "camrf/arch_sim.hpp"
#include "camrf/forest.hpp"
#include "camrf/mapper.hpp"
#include "camrf/perf.hpp"

namespace camrf::app {

inline constexpr int kConfigVersion = 1;

enum class ModelSource { train, import };
enum class ModelKind { forest, tree };

// Everything a run depends on. Loaded from an INI file (sections and
// keys listed in README), then overridden by command-line flags.
struct ExperimentConfig {
  int version = kConfigVersion;
  std::uint64_t seed = 0;
  std::string out = "out";
  unsigned threads = 0;  // 0 = available parallelism
  std::string format = "csv";

  std::string data_path;
  double test_fraction = 0.5;

  ModelSource model_source = ModelSource::train;
  ModelKind model_kind = ModelKind::forest;
  std::string model_path;
  ForestParams forest;

  std::string plan_path;
  CompileOptions compile;
  ArchOptions arch;

  std::string sweep_variable = "sigma";
  std::vector<double> sweep_grid{0.0};
  int sweep_trials = 1;

  PerfConfig perf;
  int perf_n_arrays = 0;  // 0 = taken from the plan
  int perf_n_tiles = 0;
  int perf_samples = 32;  // samples averaged for final ML voltages

  unsigned effective_threads() const;
};

// Throws ConfigError on unreadable files, unknown sections or keys, and
// malformed values.
ExperimentConfig load_config(const std::string& path);
// `assignment` is "section.key=value".
void apply_override(ExperimentConfig& cfg, const std::string& assignment);
void set_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);

// Every key with its resolved value, in registry order.
std::vector<std::pair<std::string, std::string>> effective_values(const ExperimentConfig& cfg);
// Canonical "key = value" text of effective_values, one per line, minus
// the keys that cannot change results (output directory, thread count).
std::string canonical_text(const ExperimentConfig& cfg);

}  // namespace camrf::app
