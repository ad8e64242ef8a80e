#include "commands.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <unistd.h>

#include "camrf/arch_sim.hpp"
#include "camrf/errors.hpp"
#include "camrf/format.hpp"
#include "camrf/mapper.hpp"
#include "camrf/perf.hpp"
#include "json.hpp"

namespace camrf::app {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 digest failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i)
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return os.str();
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error("write failed: " + tmp.string());
  }
  fs::rename(tmp, target);
}

namespace {

std::string read_file(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(std::string("cannot open ") + what + " '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Collects a command's outputs, then writes them and the manifest entry.
class Run {
 public:
  Run(const ExperimentConfig& cfg, std::string command) : cfg_(cfg), command_(std::move(command)) {}

  void add(const std::string& name, std::string content) { files_.emplace_back(name, std::move(content)); }

  void commit() const {
    const fs::path dir(cfg_.out);
    fs::create_directories(dir);
    ordered_json outputs = ordered_json::array();
    for (const auto& [name, content] : files_) {
      write_file_atomic((dir / name).string(), content);
      outputs.push_back({{"file", name}, {"sha256", sha256_hex(content)}, {"bytes", content.size()}});
    }

    const fs::path manifest_path = dir / "manifest.json";
    ordered_json manifest;
    if (fs::exists(manifest_path)) {
      try {
        manifest = ordered_json::parse(read_file(manifest_path.string(), "manifest"));
      } catch (const nlohmann::json::exception&) {
        manifest = ordered_json();
      }
    }
    if (!manifest.is_object() || manifest.value("schema", "") != "camrf.manifest") {
      manifest = ordered_json();
      manifest["schema"] = "camrf.manifest";
      manifest["runs"] = ordered_json::object();
    }
    manifest["versions"] = {{"config", kConfigVersion},
                            {"model", kModelVersion},
                            {"plan", kPlanVersion}};
    ordered_json config = ordered_json::object();
    for (const auto& [k, v] : effective_values(cfg_)) config[k] = v;
    manifest["runs"][command_] = {{"config_sha256", sha256_hex(canonical_text(cfg_))},
                                  {"config", std::move(config)},
                                  {"outputs", std::move(outputs)}};
    write_file_atomic(manifest_path.string(), manifest.dump(1) + "\n");
  }

 private:
  const ExperimentConfig& cfg_;
  std::string command_;
  std::vector<std::pair<std::string, std::string>> files_;
};

bool json_format(const ExperimentConfig& cfg) { return cfg.format == "json"; }

std::string dataset_path(const ExperimentConfig& cfg, const Inputs& in) {
  const std::string p = in.dataset.empty() ? cfg.data_path : in.dataset;
  if (p.empty()) throw ConfigError("no dataset: set data.path or pass --dataset");
  return p;
}

DatasetSplit load_split(const ExperimentConfig& cfg, const Inputs& in) {
  if (!(cfg.test_fraction >= 0 && cfg.test_fraction < 1))
    throw ConfigError("data.test_fraction must be in [0, 1)");
  const Dataset data = load_dataset_csv(dataset_path(cfg, in));
  return split_dataset(data, cfg.test_fraction, cfg.seed);
}

bool has_model_input(const ExperimentConfig& cfg, const Inputs& in) {
  return !in.model.empty() || cfg.model_source == ModelSource::import;
}

Forest train_model(const ExperimentConfig& cfg, const Dataset& train) {
  if (cfg.model_kind == ModelKind::tree) return train_decision_tree(train, cfg.forest.max_depth);
  ForestParams p = cfg.forest;
  p.seed = cfg.seed;
  p.threads = cfg.effective_threads();
  return train_forest(train, p);
}

Forest obtain_forest(const ExperimentConfig& cfg, const Inputs& in, const DatasetSplit* split) {
  if (has_model_input(cfg, in)) {
    const std::string p = in.model.empty() ? cfg.model_path : in.model;
    if (p.empty()) throw ConfigError("model.source = import needs model.path or --model");
    return forest_from_json(read_file(p, "model"));
  }
  if (!split) throw ConfigError("training a model needs a dataset");
  return train_model(cfg, split->train);
}

TiledPlan obtain_plan(const ExperimentConfig& cfg, const Inputs& in, const Forest* forest,
                      const Dataset* bounds) {
  const std::string p = in.plan.empty() ? cfg.plan_path : in.plan;
  if (!p.empty()) return plan_from_json(read_file(p, "plan"));
  if (!forest) throw ConfigError("no plan: pass --plan or a model/dataset to compile from");
  return compile(*forest, cfg.compile, bounds);
}

std::string key_value_csv(const std::vector<std::pair<std::string, std::string>>& rows) {
  std::string s = "field,value\n";
  for (const auto& [k, v] : rows) s += k + "," + v + "\n";
  return s;
}

std::string key_value_json(const std::vector<std::pair<std::string, std::string>>& rows) {
  ordered_json doc = ordered_json::object();
  for (const auto& [k, v] : rows) doc[k] = v;
  return doc.dump(1) + "\n";
}

std::string fmt(double v) { return format_double(v); }
std::string fmt(std::size_t v) { return std::to_string(v); }
std::string fmt(int v) { return std::to_string(v); }

std::string sweep_svg(const SweepResult& r) {
  const double width = 480, height = 320, left = 60, right = 20, top = 20, bottom = 50;
  double x_lo = r.points.front().value, x_hi = x_lo;
  for (const auto& p : r.points) x_lo = std::min(x_lo, p.value), x_hi = std::max(x_hi, p.value);
  if (x_hi == x_lo) x_lo -= 0.5, x_hi += 0.5;
  auto sx = [&](double x) { return left + (x - x_lo) / (x_hi - x_lo) * (width - left - right); };
  auto sy = [&](double y) { return top + (1.0 - y) * (height - top - bottom); };
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << sy(0) << "\" x2=\"" << width - right << "\" y2=\""
     << sy(0) << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << sy(0) << "\" x2=\"" << left << "\" y2=\"" << sy(1)
     << "\" stroke=\"black\"/>\n";
  for (double y : {0.0, 0.25, 0.5, 0.75, 1.0})
    os << "<text x=\"" << left - 6 << "\" y=\"" << sy(y) + 4 << "\" text-anchor=\"end\">" << fmt(y)
       << "</text>\n";
  for (const auto& p : r.points)
    os << "<text x=\"" << sx(p.value) << "\" y=\"" << sy(0) + 16 << "\" text-anchor=\"middle\">"
       << fmt(p.value) << "</text>\n";
  os << "<text x=\"" << (left + width - right) / 2 << "\" y=\"" << height - 10
     << "\" text-anchor=\"middle\">" << to_string(r.variable) << "</text>\n";
  os << "<text x=\"14\" y=\"" << (top + height - bottom) / 2 << "\" transform=\"rotate(-90 14 "
     << (top + height - bottom) / 2 << ")\" text-anchor=\"middle\">mean accuracy</text>\n";
  os << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < r.points.size(); ++i)
    os << (i ? " " : "") << sx(r.points[i].value) << "," << sy(r.points[i].mean);
  os << "\"/>\n";
  for (const auto& p : r.points) {
    os << "<line x1=\"" << sx(p.value) << "\" y1=\"" << sy(std::min(1.0, p.mean + p.std)) << "\" x2=\""
       << sx(p.value) << "\" y2=\"" << sy(std::max(0.0, p.mean - p.std)) << "\" stroke=\"steelblue\"/>\n";
    os << "<circle cx=\"" << sx(p.value) << "\" cy=\"" << sy(p.mean) << "\" r=\"3\" fill=\"steelblue\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

PerfConfig perf_config(const ExperimentConfig& cfg) {
  PerfConfig p = cfg.perf;
  p.v_sl_hi = cfg.arch.cell.v_sl_hi;
  p.i_d0 = cfg.arch.cell.i_d0;
  p.t_clk = cfg.arch.sense.t_clk;
  p.r_w = cfg.arch.parasitics.r_wire;
  p.c_dl = cfg.arch.parasitics.c_line;
  p.c_ml = cfg.arch.parasitics.c_line;
  p.c_ml_periphery = cfg.arch.parasitics.c_precharge + cfg.arch.parasitics.c_sense;
  p.v_ml0 = cfg.arch.sense.v_ml0;
  return p;
}

}  // namespace

int cmd_train(const ExperimentConfig& cfg, const Inputs& in) {
  const DatasetSplit split = load_split(cfg, in);
  const Forest forest = train_model(cfg, split.train);
  Run run(cfg, "train");
  run.add("model.json", forest_to_json(forest));
  const std::vector<std::pair<std::string, std::string>> metrics{
      {"n_trees", fmt(static_cast<int>(forest.trees.size()))},
      {"leaves", fmt(forest.leaf_count())},
      {"decision_nodes", fmt(forest.internal_count())},
      {"train_samples", fmt(split.train.size())},
      {"test_samples", fmt(split.test.size())},
      {"train_accuracy", fmt(software_accuracy(forest, split.train))},
      {"test_accuracy", fmt(software_accuracy(forest, split.test))}};
  if (json_format(cfg))
    run.add("train.json", key_value_json(metrics));
  else
    run.add("train.csv", key_value_csv(metrics));
  run.commit();
  return kExitOk;
}

int cmd_compile(const ExperimentConfig& cfg, const Inputs& in) {
  cfg.arch.validate();
  const bool have_data = !in.dataset.empty() || !cfg.data_path.empty();
  std::optional<DatasetSplit> split;
  if (have_data) split = load_split(cfg, in);
  const Forest forest = obtain_forest(cfg, in, split ? &*split : nullptr);
  const TiledPlan plan = compile(forest, cfg.compile, split ? &split->train : nullptr);
  const Calibration cal = calibrate(cfg.arch, plan.tile_w);

  Run run(cfg, "compile");
  run.add("plan.json", plan_to_json(plan, &cal));
  const std::vector<std::pair<std::string, std::string>> summary{
      {"rows", fmt(plan.map.rows.size())},
      {"features", fmt(plan.map.n_features)},
      {"tile_h", fmt(plan.tile_h)},
      {"tile_w", fmt(plan.tile_w)},
      {"tiles", fmt(plan.tile_count())},
      {"arrays", fmt(plan.n_arrays())},
      {"memory_cells", std::to_string(plan.memory_cells)},
      {"raw_cells", std::to_string(raw_memory_cells(static_cast<std::int64_t>(plan.map.rows.size()),
                                                     plan.map.n_features))},
      {"wildcard_convention", to_string(cal.convention())},
      {"lower_feasible", cal.lower_feasible() ? "true" : "false"},
      {"upper_feasible", cal.upper_feasible() ? "true" : "false"}};
  if (json_format(cfg))
    run.add("compile.json", key_value_json(summary));
  else
    run.add("compile.csv", key_value_csv(summary));
  run.commit();
  return kExitOk;
}

int cmd_simulate(const ExperimentConfig& cfg, const Inputs& in) {
  const DatasetSplit split = load_split(cfg, in);
  const bool plan_given = !in.plan.empty() || !cfg.plan_path.empty();
  std::optional<Forest> forest;
  if (!plan_given || has_model_input(cfg, in)) forest = obtain_forest(cfg, in, &split);
  const TiledPlan plan = obtain_plan(cfg, in, forest ? &*forest : nullptr, &split.train);
  const ProgrammedArchitecture arch = program(plan, cfg.arch, cfg.seed);
  const AccuracyResult r = evaluate_accuracy(arch, split.test, cfg.effective_threads(),
                                             forest ? &*forest : nullptr);

  std::vector<std::pair<std::string, std::string>> rows{
      {"accuracy", fmt(r.accuracy)},
      {"correct", fmt(r.correct)},
      {"total", fmt(r.total)},
      {"single_path_samples", fmt(r.single_path_samples)},
      {"readout", to_string(cfg.arch.readout)},
      {"sigma_rel", fmt(cfg.arch.device.sigma_rel)},
      {"n_bits", fmt(cfg.arch.n_bits)},
      {"clipped_cells", fmt(arch.report.clipped)},
      {"clipped_keys", fmt(arch.report.key_clipped)}};
  if (forest) {
    rows.emplace_back("software_accuracy", fmt(software_accuracy(*forest, split.test)));
    rows.emplace_back("agree_with_software", fmt(r.agree_with_forest));
  }
  Run run(cfg, "simulate");
  std::ostringstream confusion;
  write_confusion_csv(confusion, r);
  if (json_format(cfg)) {
    ordered_json doc = ordered_json::parse(key_value_json(rows));
    doc["confusion"] = r.confusion;
    run.add("accuracy.json", doc.dump(1) + "\n");
  } else {
    run.add("accuracy.csv", key_value_csv(rows));
    run.add("confusion.csv", confusion.str());
  }
  run.commit();
  return kExitOk;
}

int cmd_sweep(const ExperimentConfig& cfg, const Inputs& in) {
  SweepSpec spec;
  spec.variable = parse_sweep_variable(cfg.sweep_variable);
  spec.grid = cfg.sweep_grid;
  spec.trials = cfg.sweep_trials;
  spec.seed = cfg.seed;
  spec.threads = cfg.effective_threads();
  if (spec.grid.empty()) throw ConfigError("sweep.grid is empty");
  if (spec.trials < 1) throw ConfigError("sweep.trials must be >= 1");

  const DatasetSplit split = load_split(cfg, in);
  const Forest forest = obtain_forest(cfg, in, &split);
  SweepContext ctx;
  ctx.forest = &forest;
  ctx.test = &split.test;
  ctx.bounds_data = &split.train;
  ctx.compile = cfg.compile;
  ctx.arch = cfg.arch;
  const SweepResult result = sweep(ctx, spec);

  Run run(cfg, "sweep");
  std::ostringstream raw, summary;
  write_sweep_csv(raw, result);
  write_sweep_summary_csv(summary, result);
  run.add("sweep.csv", raw.str());
  run.add("sweep_summary.csv", summary.str());
  run.add("sweep.svg", sweep_svg(result));
  if (json_format(cfg)) {
    ordered_json doc;
    doc["variable"] = to_string(result.variable);
    ordered_json pts = ordered_json::array();
    for (const auto& p : result.points)
      pts.push_back({{"value", p.value}, {"mean", p.mean}, {"std", p.std}, {"accuracy", p.accuracy}});
    doc["points"] = std::move(pts);
    run.add("sweep.json", doc.dump(1) + "\n");
  }
  run.commit();
  return kExitOk;
}

int cmd_perf(const ExperimentConfig& cfg, const Inputs& in) {
  const PerfConfig pc = perf_config(cfg);
  const bool plan_given = !in.plan.empty() || !cfg.plan_path.empty();
  const bool have_data = !in.dataset.empty() || !cfg.data_path.empty();
  const bool geometry_only = cfg.perf_n_arrays > 0 && cfg.perf_n_tiles > 0 && !plan_given &&
                             !has_model_input(cfg, in) && !have_data;

  PerfReport report;
  if (geometry_only) {
    const PerfGeometry g{cfg.compile.tile_h, cfg.compile.tile_w, cfg.perf_n_tiles, cfg.perf_n_arrays, 0};
    report = evaluate_perf(g, pc);
  } else {
    std::optional<DatasetSplit> split;
    if (have_data) split = load_split(cfg, in);
    std::optional<Forest> forest;
    if (!plan_given) forest = obtain_forest(cfg, in, split ? &*split : nullptr);
    const TiledPlan plan =
        obtain_plan(cfg, in, forest ? &*forest : nullptr, split ? &split->train : nullptr);
    PerfGeometry g = geometry_of(plan);
    if (cfg.perf_n_arrays > 0) g.n_arrays = cfg.perf_n_arrays;
    if (cfg.perf_n_tiles > 0) g.n_tiles = cfg.perf_n_tiles;
    report = evaluate_perf(g, pc);
    const bool measured_geometry = g.n_tiles == plan.tile_count();
    if (split && measured_geometry && cfg.perf_samples > 0) {
      // Average the ML power over simulated ML swings of real samples.
      const ProgrammedArchitecture arch = program(plan, cfg.arch, cfg.seed);
      const std::size_t n = std::min<std::size_t>(split->test.size(), cfg.perf_samples);
      double dim = 0.0, printed = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const PerfReport s = evaluate_perf(g, pc, final_ml_voltages(arch, split->test.row(i)));
        dim += s.p_ml_dimensional;
        printed += s.p_ml_as_printed;
      }
      report.p_ml_dimensional = dim / n;
      report.p_ml_as_printed = printed / n;
      report.p_ml = pc.ml_mode == MlPowerMode::dimensional ? report.p_ml_dimensional
                                                           : report.p_ml_as_printed;
      report.p_total = report.p_static + report.p_dl + report.p_ml;
      report.energy_per_decision = report.p_total / report.throughput;
      report.energy_per_node_per_decision =
          g.decision_nodes > 0 ? report.energy_per_decision / g.decision_nodes
                               : std::numeric_limits<double>::quiet_NaN();
    }
  }
  Run run(cfg, "perf");
  if (json_format(cfg)) {
    run.add("perf.json", perf_to_json(report));
  } else {
    std::ostringstream os;
    write_perf_csv(os, report);
    run.add("perf.csv", os.str());
  }
  run.commit();
  return kExitOk;
}

int cmd_validate(const ExperimentConfig& cfg, const Inputs& in) {
  const Dataset data = load_dataset_csv(dataset_path(cfg, in));
  const DatasetSplit split = split_dataset(data, cfg.test_fraction, cfg.seed);
  const Forest forest = obtain_forest(cfg, in, &split);
  const TiledPlan plan = compile(forest, cfg.compile, &split.train);

  ArchOptions ideal = cfg.arch;
  ideal.device.sigma_rel = 0.0;
  ideal.n_bits = 0;
  ideal.readout = Readout::ideal;
  ideal.adc_noise = 0.0;
  const ProgrammedArchitecture arch = program(plan, ideal, cfg.seed);

  std::size_t mismatches = 0, path_violations = 0;
  std::vector<std::size_t> first_mismatches;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const InferenceTrace tr = infer(arch, data.row(i));
    if (tr.predicted != forest.predict(data.row(i))) {
      ++mismatches;
      if (first_mismatches.size() < 10) first_mismatches.push_back(i);
    }
    for (int m : tr.matches_per_tree) path_violations += m == 1 ? 0 : 1;
  }
  ArchOptions analog = ideal;
  analog.readout = Readout::analog;
  const AccuracyResult ar = evaluate_accuracy(program(plan, analog, cfg.seed), data,
                                              cfg.effective_threads(), &forest);
  const bool equivalent = mismatches == 0 && path_violations == 0;

  Run run(cfg, "validate");
  if (json_format(cfg)) {
    ordered_json doc;
    doc["equivalent"] = equivalent;
    doc["mismatches"] = mismatches;
    doc["samples"] = data.size();
    doc["single_path_violations"] = path_violations;
    doc["first_mismatches"] = first_mismatches;
    doc["analog_agreement"] = static_cast<double>(ar.agree_with_forest) / data.size();
    run.add("validate.json", doc.dump(1) + "\n");
  } else {
    std::ostringstream os;
    os << "equivalent: " << (equivalent ? "true" : "false") << "\n";
    os << "mismatches: " << mismatches << "\n";
    os << "samples: " << data.size() << "\n";
    os << "single_path_violations: " << path_violations << "\n";
    os << "analog_agreement: " << fmt(static_cast<double>(ar.agree_with_forest) / data.size())
       << " (informational)\n";
    run.add("validate.txt", os.str());
    std::cout << os.str();
  }
  run.commit();
  return equivalent ? kExitOk : kExitInvariant;
}

}  // namespace camrf::app
