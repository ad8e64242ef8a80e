#include "config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cmath>
#include <functional>
#include <sstream>
#include <thread>

#include "camrf/errors.hpp"
#include "camrf/format.hpp"
#include "camrf/parallel.hpp"

namespace camrf::app {

unsigned ExperimentConfig::effective_threads() const {
  return threads > 0 ? threads : default_thread_count();
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& text) {
  const std::string s = trim(text);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v))
    throw ConfigError(key + ": expected a finite number, got '" + text + "'");
  return v;
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& text) {
  const std::string s = trim(text);
  Int v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size())
    throw ConfigError(key + ": expected an integer, got '" + text + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  const std::string s = trim(text);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

std::vector<double> parse_grid(const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (trim(item).empty()) continue;
    out.push_back(parse_double(key, item));
  }
  return out;
}

std::string join_grid(const std::vector<double>& g) {
  std::string s;
  for (std::size_t i = 0; i < g.size(); ++i) s += (i ? "," : "") + format_double(g[i]);
  return s;
}

struct Binding {
  std::string key;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

Binding real(std::string key, double& field) {
  return {key, [&field, key](const std::string& v) { field = parse_double(key, v); },
          [&field] { return format_double(field); }};
}

template <typename Int>
Binding integer(std::string key, Int& field) {
  return {key, [&field, key](const std::string& v) { field = parse_int<Int>(key, v); },
          [&field] { return std::to_string(field); }};
}

Binding boolean(std::string key, bool& field) {
  return {key, [&field, key](const std::string& v) { field = parse_bool(key, v); },
          [&field] { return std::string(field ? "true" : "false"); }};
}

Binding text(std::string key, std::string& field) {
  return {key, [&field](const std::string& v) { field = trim(v); }, [&field] { return field; }};
}

std::vector<Binding> registry(ExperimentConfig& c) {
  CellParams& cell = c.arch.cell;
  Parasitics& par = c.arch.parasitics;
  SenseConfig& sense = c.arch.sense;
  DeviceModel& dev = c.arch.device;
  std::vector<Binding> b;
  b.push_back({"experiment.version",
               [&c](const std::string& v) {
                 c.version = parse_int<int>("experiment.version", v);
                 if (c.version != kConfigVersion)
                   throw ConfigError("experiment.version: unsupported config version " +
                                     std::to_string(c.version));
               },
               [&c] { return std::to_string(c.version); }});
  b.push_back(integer("experiment.seed", c.seed));
  b.push_back(text("experiment.out", c.out));
  b.push_back(integer("experiment.threads", c.threads));
  b.push_back({"experiment.format",
               [&c](const std::string& v) {
                 const std::string f = trim(v);
                 if (f != "csv" && f != "json")
                   throw ConfigError("experiment.format: expected csv or json, got '" + v + "'");
                 c.format = f;
               },
               [&c] { return c.format; }});

  b.push_back(text("data.path", c.data_path));
  b.push_back(real("data.test_fraction", c.test_fraction));

  b.push_back({"model.source",
               [&c](const std::string& v) {
                 const std::string s = trim(v);
                 if (s == "train") c.model_source = ModelSource::train;
                 else if (s == "import") c.model_source = ModelSource::import;
                 else throw ConfigError("model.source: expected train or import, got '" + v + "'");
               },
               [&c] { return std::string(c.model_source == ModelSource::train ? "train" : "import"); }});
  b.push_back({"model.kind",
               [&c](const std::string& v) {
                 const std::string s = trim(v);
                 if (s == "forest") c.model_kind = ModelKind::forest;
                 else if (s == "tree") c.model_kind = ModelKind::tree;
                 else throw ConfigError("model.kind: expected forest or tree, got '" + v + "'");
               },
               [&c] { return std::string(c.model_kind == ModelKind::forest ? "forest" : "tree"); }});
  b.push_back(text("model.path", c.model_path));
  b.push_back(integer("model.n_trees", c.forest.n_trees));
  b.push_back(integer("model.max_depth", c.forest.max_depth));
  b.push_back(boolean("model.bootstrap", c.forest.bootstrap));
  b.push_back(integer("model.max_features", c.forest.max_features));

  b.push_back(text("compile.plan", c.plan_path));
  b.push_back(integer("compile.tile_h", c.compile.tile_h));
  b.push_back(integer("compile.tile_w", c.compile.tile_w));
  b.push_back(boolean("compile.reorder", c.compile.reorder));

  b.push_back(real("cell.i_d0", cell.i_d0));
  b.push_back(real("cell.alpha", cell.alpha));
  b.push_back(real("cell.i_d0_intermediate", cell.i_d0_intermediate));
  b.push_back(real("cell.k1", cell.k1));
  b.push_back(real("cell.v_th_t1", cell.v_th_t1));
  b.push_back(real("cell.k2", cell.k2));
  b.push_back(real("cell.v_th_t2", cell.v_th_t2));
  b.push_back(real("cell.beta", cell.beta));
  b.push_back(real("cell.gamma", cell.gamma));
  b.push_back(real("cell.v_inverter", cell.v_inverter));
  b.push_back(real("cell.v_sl_hi", cell.v_sl_hi));
  b.push_back(real("cell.v_sl_lo", cell.v_sl_lo));
  b.push_back(real("cell.v_sub_max", cell.v_sub_max));
  b.push_back(real("cell.v_ohmic_min", cell.v_ohmic_min));

  b.push_back(real("parasitics.r_wire", par.r_wire));
  b.push_back(real("parasitics.c_line", par.c_line));
  b.push_back(real("parasitics.c_precharge", par.c_precharge));
  b.push_back(real("parasitics.c_sense", par.c_sense));

  b.push_back(real("sense.t_clk", sense.t_clk));
  b.push_back(real("sense.v_ml0", sense.v_ml0));
  b.push_back(real("sense.v_sa", sense.v_sa));

  b.push_back(real("device.g_hrs", dev.g_hrs));
  b.push_back(real("device.g_lrs", dev.g_lrs));
  b.push_back(integer("device.n_levels", dev.n_levels));
  b.push_back(real("device.sigma_rel", dev.sigma_rel));

  b.push_back(real("dl.v_min", c.arch.span.v_min));
  b.push_back(real("dl.v_max", c.arch.span.v_max));

  b.push_back({"arch.wildcard",
               [&c](const std::string& v) { c.arch.wildcard = parse_wildcard_convention(trim(v)); },
               [&c] { return std::string(to_string(c.arch.wildcard)); }});
  b.push_back({"arch.readout", [&c](const std::string& v) { c.arch.readout = parse_readout(trim(v)); },
               [&c] { return std::string(to_string(c.arch.readout)); }});
  b.push_back(integer("arch.n_bits", c.arch.n_bits));
  b.push_back(real("arch.v_read", c.arch.v_read));
  b.push_back(real("arch.adc_noise", c.arch.adc_noise));
  b.push_back(integer("arch.calibration_grid", c.arch.calibration_grid));

  b.push_back({"sweep.variable",
               [&c](const std::string& v) {
                 c.sweep_variable = trim(v);
                 (void)parse_sweep_variable(c.sweep_variable);
               },
               [&c] { return c.sweep_variable; }});
  b.push_back({"sweep.grid", [&c](const std::string& v) { c.sweep_grid = parse_grid("sweep.grid", v); },
               [&c] { return join_grid(c.sweep_grid); }});
  b.push_back(integer("sweep.trials", c.sweep_trials));

  b.push_back(real("perf.v_dd", c.perf.v_dd));
  b.push_back(real("perf.r_out", c.perf.r_out));
  b.push_back(real("perf.safety", c.perf.safety));
  b.push_back(boolean("perf.pipelined", c.perf.pipelined));
  b.push_back({"perf.ml_mode", [&c](const std::string& v) { c.perf.ml_mode = parse_ml_power_mode(trim(v)); },
               [&c] { return std::string(to_string(c.perf.ml_mode)); }});
  b.push_back(real("perf.power_scale", c.perf.scale.power_scale));
  b.push_back(real("perf.cap_scale", c.perf.scale.cap_scale));
  b.push_back(real("perf.volt_scale", c.perf.scale.volt_scale));
  b.push_back(integer("perf.n_arrays", c.perf_n_arrays));
  b.push_back(integer("perf.n_tiles", c.perf_n_tiles));
  b.push_back(integer("perf.samples", c.perf_samples));
  return b;
}

}  // namespace

void set_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  for (auto& b : registry(cfg)) {
    if (b.key == key) {
      b.set(value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override must be section.key=value: '" + assignment + "'");
  set_value(cfg, trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

ExperimentConfig load_config(const std::string& path) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("config: " + std::string(e.what()));
  }
  ExperimentConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty())
      throw ConfigError("config: key '" + section + "' must be inside a [section]");
    for (const auto& [key, value] : body) set_value(cfg, section + "." + key, value.data());
  }
  return cfg;
}

std::vector<std::pair<std::string, std::string>> effective_values(const ExperimentConfig& cfg) {
  ExperimentConfig copy = cfg;
  std::vector<std::pair<std::string, std::string>> out;
  for (auto& b : registry(copy)) out.emplace_back(b.key, b.get());
  return out;
}

std::string canonical_text(const ExperimentConfig& cfg) {
  std::string s;
  for (const auto& [k, v] : effective_values(cfg)) {
    if (k == "experiment.out" || k == "experiment.threads") continue;  // do not affect results
    s += k + " = " + v + "\n";
  }
  return s;
}

}  // namespace camrf::app
