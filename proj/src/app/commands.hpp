#pragma once

#include <string>

#include "config.hpp"

namespace camrf::app {

// Paths given on the command line; empty means "use the config".
struct Inputs {
  std::string model;
  std::string plan;
  std::string dataset;
};

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitOther = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitInvariant = 4;

// Each command writes into cfg.out and records its outputs in
// cfg.out/manifest.json. Errors surface as camrf exceptions.
int cmd_train(const ExperimentConfig& cfg, const Inputs& in);
int cmd_compile(const ExperimentConfig& cfg, const Inputs& in);
int cmd_simulate(const ExperimentConfig& cfg, const Inputs& in);
int cmd_sweep(const ExperimentConfig& cfg, const Inputs& in);
int cmd_perf(const ExperimentConfig& cfg, const Inputs& in);
int cmd_validate(const ExperimentConfig& cfg, const Inputs& in);

// Atomic write: temp file in the same directory, then rename.
void write_file_atomic(const std::string& path, const std::string& content);
std::string sha256_hex(const std::string& bytes);

}  // namespace camrf::app
