#include "camrf/perf.hpp"

#include <cmath>
#include <limits>
#include <ostream>

#include "camrf/arch_sim.hpp"
#include "camrf/errors.hpp"
#include "camrf/format.hpp"
#include "camrf/mapper.hpp"
#include "json.hpp"

namespace camrf {

double p_static(int tile_h, int tile_w, int n_tiles, double v_sl_hi, double i_d0) {
  return 2.0 * tile_h * tile_w * static_cast<double>(n_tiles) * v_sl_hi * i_d0;
}

double p_dl(double v_dd, int tile_w, int n_tiles, double r_out) {
  if (!(r_out > 0)) throw ConfigError("r_out must be > 0");
  return v_dd * v_dd * tile_w * static_cast<double>(n_tiles) / r_out;
}

const char* to_string(MlPowerMode m) {
  return m == MlPowerMode::dimensional ? "dimensional" : "as_printed";
}

MlPowerMode parse_ml_power_mode(const std::string& s) {
  if (s == "dimensional") return MlPowerMode::dimensional;
  if (s == "as_printed") return MlPowerMode::as_printed;
  throw ConfigError("unknown ml power mode '" + s + "' (dimensional|as_printed)");
}

MlPower p_ml(double t_clk, double c_ml_row, double v_ml0, int tile_h, int n_tiles,
             std::span<const double> final_ml_voltages, MlPowerMode mode) {
  const std::size_t rows = static_cast<std::size_t>(tile_h) * static_cast<std::size_t>(n_tiles);
  if (final_ml_voltages.size() != rows)
    throw ConfigError("p_ml: expected " + std::to_string(rows) + " final ML voltages");
  auto term = [&](double swing) {
    const double q = c_ml_row * swing;
    return mode == MlPowerMode::dimensional ? q * swing / (2.0 * t_clk) : q * q / (2.0 * t_clk);
  };
  MlPower p;
  p.charge = static_cast<double>(rows) * term(v_ml0);
  for (double v : final_ml_voltages) p.discharge += term(v_ml0 - v);
  return p;
}

double elmore_delay(int h, double r_out, double r_w, double c_dl) {
  const double hh = h;
  return c_dl * (r_out * hh + r_w * hh * (hh - 1.0) / 2.0);
}

double elmore_delay_sum(int last, double r_out, double r_w, double c_dl) {
  double tau = 0.0;
  for (int i = 0; i <= last; ++i) tau += (r_out + i * r_w) * c_dl;
  return tau;
}

double choose_r_out(double t_clk, int h, double r_w, double c_dl, double safety) {
  if (!(safety > 0 && safety < 1)) throw ConfigError("safety must be in (0, 1)");
  if (h < 1) throw ConfigError("tile height must be >= 1");
  const double budget = safety * t_clk;
  const double hh = h;
  double r = (budget / c_dl - r_w * hh * (hh - 1.0) / 2.0) / hh;
  if (!(r > 0))
    throw ConfigError("no DAC output resistance meets the delay budget: wire delay alone exceeds " +
                      format_double(budget) + " s");
  while (r > 0 && elmore_delay(h, r, r_w, c_dl) > budget) r = std::nextafter(r, 0.0);
  return r;
}

double throughput(int n_arrays, double t_clk, bool pipelined) {
  if (n_arrays < 1) throw ConfigError("throughput: need at least one array");
  return pipelined ? 1.0 / (3.0 * t_clk) : 1.0 / (n_arrays * 3.0 * t_clk);
}

void PerfConfig::validate() const {
  for (double v : {v_dd, v_sl_hi, i_d0, t_clk, c_dl, c_ml, v_ml0, scale.power_scale,
                   scale.cap_scale, scale.volt_scale})
    if (!(v > 0)) throw ConfigError("perf: physical values and scale factors must be > 0");
  if (!(r_out >= 0)) throw ConfigError("perf: r_out must be >= 0 (0 = automatic)");
  if (!(r_w >= 0) || !(c_ml_periphery >= 0)) throw ConfigError("perf: r_w and periphery must be >= 0");
}

PerfGeometry geometry_of(const TiledPlan& plan) {
  return {plan.tile_h, plan.tile_w, plan.tile_count(), plan.n_arrays(), plan.decision_nodes};
}

PerfReport evaluate_perf(const PerfGeometry& g, const PerfConfig& cfg,
                         std::span<const double> final_ml_voltages) {
  cfg.validate();
  if (g.tile_h < 1 || g.tile_w < 1) throw ConfigError("perf: tile dimensions must be >= 1");
  if (g.n_arrays < 1) throw ConfigError("perf: need at least one array");
  const double cs = cfg.scale.cap_scale;
  const double vs = cfg.scale.volt_scale;
  const double ps = cfg.scale.power_scale;
  const double c_dl = cfg.c_dl * cs;
  const double c_row = (g.tile_w * cfg.c_ml + cfg.c_ml_periphery) * cs;
  const double v_ml0 = cfg.v_ml0 * vs;

  PerfReport r;
  r.geometry = g;
  r.pipelined = cfg.pipelined;
  r.ml_mode = cfg.ml_mode;
  r.r_out = cfg.r_out > 0 ? cfg.r_out : choose_r_out(cfg.t_clk, g.tile_h, cfg.r_w, c_dl, cfg.safety);

  std::vector<double> v_final(final_ml_voltages.begin(), final_ml_voltages.end());
  if (v_final.empty()) v_final.assign(static_cast<std::size_t>(g.tile_h) * g.n_tiles, 0.0);
  for (double& v : v_final) v *= vs;

  // Fraction of the plan drawing power at any instant.
  const double active = cfg.pipelined ? 1.0 : 1.0 / g.n_arrays;
  r.p_static = active * ps * p_static(g.tile_h, g.tile_w, g.n_tiles, cfg.v_sl_hi * vs, cfg.i_d0);
  r.p_dl = active * ps * p_dl(cfg.v_dd * vs, g.tile_w, g.n_tiles, r.r_out);
  r.p_ml_dimensional = active * ps *
      p_ml(cfg.t_clk, c_row, v_ml0, g.tile_h, g.n_tiles, v_final, MlPowerMode::dimensional).total();
  r.p_ml_as_printed = active * ps *
      p_ml(cfg.t_clk, c_row, v_ml0, g.tile_h, g.n_tiles, v_final, MlPowerMode::as_printed).total();
  r.p_ml = cfg.ml_mode == MlPowerMode::dimensional ? r.p_ml_dimensional : r.p_ml_as_printed;
  r.p_total = r.p_static + r.p_dl + r.p_ml;

  r.tau_dl = elmore_delay(g.tile_h, r.r_out, cfg.r_w, c_dl);
  r.tau_dl_sum = elmore_delay_sum(g.tile_h - 1, r.r_out, cfg.r_w, c_dl);
  r.tau_dl_printed_limit = elmore_delay_sum(g.tile_h, r.r_out, cfg.r_w, c_dl);

  r.cycles = inference_cycles(g.n_arrays);
  r.latency = r.cycles * cfg.t_clk;
  r.throughput = throughput(g.n_arrays, cfg.t_clk, cfg.pipelined);
  r.energy_per_decision = r.p_total / r.throughput;
  r.energy_per_node_per_decision = g.decision_nodes > 0
                                       ? r.energy_per_decision / g.decision_nodes
                                       : std::numeric_limits<double>::quiet_NaN();
  return r;
}

namespace {

template <typename Emit>
void visit_fields(const PerfReport& r, Emit&& emit) {
  emit("tile_h", static_cast<double>(r.geometry.tile_h));
  emit("tile_w", static_cast<double>(r.geometry.tile_w));
  emit("n_tiles", static_cast<double>(r.geometry.n_tiles));
  emit("n_arrays", static_cast<double>(r.geometry.n_arrays));
  emit("decision_nodes", static_cast<double>(r.geometry.decision_nodes));
  emit("pipelined", r.pipelined ? 1.0 : 0.0);
  emit("r_out", r.r_out);
  emit("p_static", r.p_static);
  emit("p_dl", r.p_dl);
  emit("p_ml", r.p_ml);
  emit("p_ml_dimensional", r.p_ml_dimensional);
  emit("p_ml_as_printed", r.p_ml_as_printed);
  emit("p_total", r.p_total);
  emit("tau_dl", r.tau_dl);
  emit("tau_dl_sum", r.tau_dl_sum);
  emit("tau_dl_printed_limit", r.tau_dl_printed_limit);
  emit("cycles", static_cast<double>(r.cycles));
  emit("latency", r.latency);
  emit("throughput", r.throughput);
  emit("energy_per_decision", r.energy_per_decision);
  emit("energy_per_node_per_decision", r.energy_per_node_per_decision);
}

}  // namespace

void write_perf_csv(std::ostream& out, const PerfReport& r) {
  out << "field,value\n";
  out << "ml_mode," << to_string(r.ml_mode) << '\n';
  visit_fields(r, [&](const char* k, double v) { out << k << ',' << format_double(v) << '\n'; });
}

std::string perf_to_json(const PerfReport& r) {
  nlohmann::ordered_json doc;
  doc["ml_mode"] = to_string(r.ml_mode);
  visit_fields(r, [&](const char* k, double v) {
    doc[k] = std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json();
  });
  return doc.dump(1) + "\n";
}

}  // namespace camrf
