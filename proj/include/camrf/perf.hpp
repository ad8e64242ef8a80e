#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace camrf {

struct TiledPlan;

// Static power of the voltage dividers: two per cell, each drawing
// v_sl_hi * i_d0, over every populated tile cell.
double p_static(int tile_h, int tile_w, int n_tiles, double v_sl_hi, double i_d0);

// DL charging power v_dd^2 * W * N / r_out.
double p_dl(double v_dd, int tile_w, int n_tiles, double r_out);

enum class MlPowerMode {
  dimensional,  // sum of C V^2 / (2 t_clk)
  as_printed,   // sum of (C V)^2 / (2 t_clk)
};

const char* to_string(MlPowerMode m);
MlPowerMode parse_ml_power_mode(const std::string& s);

struct MlPower {
  double charge = 0.0;
  double discharge = 0.0;
  double total() const { return charge + discharge; }
};

// Pre-charge of every row to v_ml0 plus the discharge of each row down to
// its final ML voltage. final_ml_voltages holds tile_h * n_tiles entries.
MlPower p_ml(double t_clk, double c_ml_row, double v_ml0, int tile_h, int n_tiles,
             std::span<const double> final_ml_voltages, MlPowerMode mode);

// C_DL [r_out H + r_w H (H-1) / 2].
double elmore_delay(int h, double r_out, double r_w, double c_dl);
// sum_{i=0}^{last} (r_out + i r_w) c_dl, evaluated term by term.
double elmore_delay_sum(int last, double r_out, double r_w, double c_dl);

// Largest r_out with elmore_delay <= safety * t_clk. Throws ConfigError
// when the wire term alone exceeds the budget.
double choose_r_out(double t_clk, int h, double r_w, double c_dl, double safety = 0.1);

double throughput(int n_arrays, double t_clk, bool pipelined);

struct TechScale {
  double power_scale = 1.0;  // applied to every power term
  double cap_scale = 1.0;
  double volt_scale = 1.0;
};

struct PerfConfig {
  double v_dd = 0.8;        // DL drive
  double v_sl_hi = 1.2;
  double i_d0 = 50e-9;
  double t_clk = 1e-9;
  double r_out = 0.0;       // 0 selects choose_r_out(safety)
  double safety = 0.1;
  double r_w = 1.4;
  double c_dl = 1.9e-15;    // per cell
  double c_ml = 1.9e-15;    // per cell
  double c_ml_periphery = 40.95e-15 + 50e-15;  // pre-charge plus sense input
  double v_ml0 = 0.8;
  TechScale scale;
  bool pipelined = false;
  MlPowerMode ml_mode = MlPowerMode::dimensional;

  void validate() const;
};

struct PerfGeometry {
  int tile_h = 0;
  int tile_w = 0;
  int n_tiles = 0;
  int n_arrays = 0;
  int decision_nodes = 0;
};

PerfGeometry geometry_of(const TiledPlan& plan);

struct PerfReport {
  PerfGeometry geometry;
  bool pipelined = false;
  MlPowerMode ml_mode = MlPowerMode::dimensional;
  double r_out = 0.0;
  double p_static = 0.0;
  double p_dl = 0.0;
  double p_ml = 0.0;             // in ml_mode
  double p_ml_dimensional = 0.0;
  double p_ml_as_printed = 0.0;
  double p_total = 0.0;          // p_static + p_dl + p_ml
  double tau_dl = 0.0;           // closed form
  double tau_dl_sum = 0.0;       // H terms
  double tau_dl_printed_limit = 0.0;  // H + 1 terms
  int cycles = 0;
  double latency = 0.0;
  double throughput = 0.0;
  double energy_per_decision = 0.0;
  double energy_per_node_per_decision = 0.0;
};

// Power is the full-plan figure when pipelined (all arrays busy) and
// 1/n_arrays of it otherwise (one array busy per slot), so the energy per
// decision is the same in both modes. final_ml_voltages, when empty, is
// taken as full discharge of every row.
PerfReport evaluate_perf(const PerfGeometry& g, const PerfConfig& cfg,
                         std::span<const double> final_ml_voltages = {});

void write_perf_csv(std::ostream& out, const PerfReport& r);
std::string perf_to_json(const PerfReport& r);

}  // namespace camrf
