#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "camrf/errors.hpp"
#include "commands.hpp"
#include "config.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "json.hpp"

using namespace camrf;
using namespace camrf::app;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("camrf_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
  return p;
}

ExperimentConfig iris_config(const fs::path& out) {
  ExperimentConfig cfg = load_config(fixture::source_path("configs/iris.ini"));
  cfg.data_path = fixture::source_path(cfg.data_path);
  cfg.out = out.string();
  return cfg;
}

}  // namespace

TEST_CASE("shipped configs load with their values") {
  const ExperimentConfig cfg = load_config(fixture::source_path("configs/iris.ini"));
  CHECK(cfg.seed == 7);
  CHECK(cfg.forest.n_trees == 15);
  CHECK(cfg.forest.max_depth == 4);
  CHECK(cfg.sweep_grid == std::vector<double>{0, 0.01, 0.02, 0.05, 0.1, 0.15});
  CHECK(cfg.sweep_trials == 100);
  const ExperimentConfig t1 = load_config(fixture::source_path("configs/sixteen_arrays.ini"));
  CHECK(t1.perf.pipelined);
  CHECK(t1.perf_n_arrays == 16);
}

TEST_CASE("unknown keys, sections and malformed values are config errors") {
  TempDir tmp("cfg");
  CHECK_THROWS_AS(load_config(write(tmp.path / "a.ini", "[device]\ng_lrs = 1e-4\ncolour = red\n").string()),
                  ConfigError);
  CHECK_THROWS_AS(load_config(write(tmp.path / "b.ini", "[nonsense]\nx = 1\n").string()), ConfigError);
  CHECK_THROWS_AS(load_config(write(tmp.path / "c.ini", "[sweep]\ntrials = many\n").string()), ConfigError);
  CHECK_THROWS_AS(load_config(write(tmp.path / "d.ini", "seed = 3\n").string()), ConfigError);
  CHECK_THROWS_AS(load_config(write(tmp.path / "e.ini", "[experiment]\nversion = 2\n").string()), ConfigError);
  CHECK_THROWS_AS(load_config((tmp.path / "missing.ini").string()), ConfigError);
  ExperimentConfig cfg;
  CHECK_THROWS_AS(apply_override(cfg, "sweep.trials"), ConfigError);
  CHECK_THROWS_AS(apply_override(cfg, "sweep.variable=gain"), ConfigError);
  CHECK_THROWS_AS(apply_override(cfg, "device.sigma_rel=nan"), ConfigError);
}

TEST_CASE("overrides and canonical text") {
  ExperimentConfig a;
  apply_override(a, "device.sigma_rel = 0.05");
  apply_override(a, "sweep.grid=0, 1e-9 ,2e-9");
  apply_override(a, "compile.reorder=off");
  CHECK(a.arch.device.sigma_rel == 0.05);
  CHECK(a.sweep_grid == std::vector<double>{0, 1e-9, 2e-9});
  CHECK_FALSE(a.compile.reorder);

  ExperimentConfig b = a;
  b.out = "elsewhere";
  b.threads = 3;
  CHECK(canonical_text(a) == canonical_text(b));
  b.seed = 99;
  CHECK(canonical_text(a) != canonical_text(b));
  // Every default is echoed.
  const auto values = effective_values(ExperimentConfig{});
  bool has_g_lrs = false;
  for (const auto& [k, v] : values) has_g_lrs = has_g_lrs || (k == "device.g_lrs" && std::stod(v) == 200e-6);
  CHECK(has_g_lrs);
}

TEST_CASE("sha256 and atomic writes") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  TempDir tmp("atomic");
  const fs::path p = tmp.path / "x.txt";
  write_file_atomic(p.string(), "one");
  write_file_atomic(p.string(), "two");
  CHECK(slurp(p) == "two");
  for (const auto& e : fs::directory_iterator(tmp.path)) CHECK(e.path().filename() == "x.txt");
}

TEST_CASE("validate reports equivalence on the iris pipeline") {
  TempDir tmp("validate");
  ExperimentConfig cfg = iris_config(tmp.path);
  cfg.format = "json";
  CHECK(cmd_validate(cfg, Inputs{}) == kExitOk);
  const auto doc = nlohmann::json::parse(slurp(tmp.path / "validate.json"));
  CHECK(doc.at("equivalent").get<bool>());
  CHECK(doc.at("mismatches").get<int>() == 0);
  const auto manifest = nlohmann::json::parse(slurp(tmp.path / "manifest.json"));
  CHECK(manifest.at("runs").at("validate").contains("config_sha256"));
}

TEST_CASE("sweep rejects an empty grid and reruns byte-identically") {
  TempDir tmp("sweep");
  ExperimentConfig cfg = iris_config(tmp.path / "a");
  cfg.sweep_grid = {};
  CHECK_THROWS_AS(cmd_sweep(cfg, Inputs{}), ConfigError);

  cfg.sweep_grid = {0.0, 0.1};
  cfg.sweep_trials = 4;
  cfg.arch.device.sigma_rel = 0.0;
  CHECK(cmd_sweep(cfg, Inputs{}) == kExitOk);
  cfg.out = (tmp.path / "b").string();
  cfg.threads = 3;
  CHECK(cmd_sweep(cfg, Inputs{}) == kExitOk);
  for (const char* f : {"sweep.csv", "sweep_summary.csv"})
    CHECK(sha256_hex(slurp(tmp.path / "a" / f)) == sha256_hex(slurp(tmp.path / "b" / f)));
}

TEST_CASE("perf on the table geometry") {
  TempDir tmp("perf");
  ExperimentConfig cfg = load_config(fixture::source_path("configs/sixteen_arrays.ini"));
  cfg.out = tmp.path.string();
  cfg.format = "json";
  CHECK(cmd_perf(cfg, Inputs{}) == kExitOk);
  const auto doc = nlohmann::json::parse(slurp(tmp.path / "perf.json"));
  CHECK(doc.at("throughput").get<double>() == doctest::Approx(1.0 / 3e-9).epsilon(1e-15));
  CHECK(doc.at("n_arrays").get<double>() == 16);
}
