#include "camrf/cam_model.hpp"

#include <algorithm>
#include <cmath>

#include "camrf/errors.hpp"

namespace camrf {

void CellParams::validate() const {
  if (!(i_d0 > 0 && i_d0_intermediate > 0)) throw ConfigError("cell: I_D0 and I_D0' must be > 0");
  if (!(alpha > 0)) throw ConfigError("cell: alpha must be > 0");
  if (!(k1 > 0 && k2 > 0)) throw ConfigError("cell: k1 and k2 must be > 0");
  if (!(beta > 0)) throw ConfigError("cell: beta must be > 0");
  if (!(v_sub_max < v_ohmic_min)) throw ConfigError("cell: v_sub_max must be < v_ohmic_min");
  if (!(v_sl_lo < v_sl_hi)) throw ConfigError("cell: v_sl_lo must be < v_sl_hi");
  if (!(v_inverter > 0)) throw ConfigError("cell: inverter rail must be > 0");
}

void Parasitics::validate() const {
  if (r_wire < 0 || c_line < 0 || c_precharge < 0 || c_sense < 0)
    throw ConfigError("parasitics must be >= 0");
}

void SenseConfig::validate() const {
  if (!(t_clk > 0)) throw ConfigError("sense: t_clk must be > 0");
  if (!(v_sa < v_ml0)) throw ConfigError("sense: v_sa must be below v_ml0");
  if (!(v_sa >= 0)) throw ConfigError("sense: v_sa must be >= 0");
}

T1Regime t1_regime(double v_dl, const CellParams& p) {
  if (v_dl < p.v_sub_max) return T1Regime::subthreshold;
  if (v_dl < p.v_ohmic_min) return T1Regime::intermediate;
  return T1Regime::ohmic;
}

double t1_current(double v_dl, const CellParams& p) {
  const double v_gs = v_dl - p.v_sl_lo;
  switch (t1_regime(v_dl, p)) {
    case T1Regime::subthreshold:
      return p.i_d0 * std::exp(v_gs / p.alpha);
    case T1Regime::intermediate:
      return p.i_d0_intermediate * std::exp(v_gs / p.alpha);
    case T1Regime::ohmic:
      return std::max(p.k1 * (v_gs - p.v_th_t1), 0.0);
  }
  return 0.0;
}

DividerSolution solve_divider(double v_dl, double g_m, const CellParams& p) {
  const double i_t1 = t1_current(v_dl, p);
  auto residual = [&](double v) { return g_m * (p.v_sl_hi - v) - i_t1; };

  DividerSolution sol;
  // Open memristor or a transistor stronger than the divider can feed:
  // node pulled to SL_lo.
  if (g_m <= 0.0 || residual(p.v_sl_lo) <= 0.0) {
    sol.v_div = p.v_sl_lo;
    sol.residual = residual(p.v_sl_lo);
    sol.clamped = sol.residual < 0.0;
    return sol;
  }
  if (i_t1 <= 0.0) {
    sol.v_div = p.v_sl_hi;
    return sol;
  }
  // residual is strictly decreasing in v.
  double lo = p.v_sl_lo;
  double hi = p.v_sl_hi;
  double mid = 0.5 * (lo + hi);
  double r = residual(mid);
  // Run to a collapsed bracket; the residual bound is met long before.
  for (sol.iterations = 1; sol.iterations < 200; ++sol.iterations) {
    if (r == 0.0 || hi - lo <= 1e-15) break;
    (r > 0.0 ? lo : hi) = mid;
    mid = 0.5 * (lo + hi);
    r = residual(mid);
  }
  sol.v_div = mid;
  sol.residual = r;
  return sol;
}

double inverter_output(double v_div, const CellParams& p) {
  return -p.v_inverter / (1.0 + std::exp(-p.beta * (v_div + p.gamma))) + p.v_inverter;
}

double discharge_current(double v_gate, const CellParams& p) {
  const double overdrive = std::max(v_gate - p.v_th_t2, 0.0);
  return p.k2 * overdrive * overdrive;
}

double lower_branch_current(double v_dl, double g_m1, const CellParams& p) {
  return discharge_current(solve_divider(v_dl, g_m1, p).v_div, p);
}

double upper_branch_current(double v_dl, double g_m2, const CellParams& p) {
  return discharge_current(inverter_output(solve_divider(v_dl, g_m2, p).v_div, p), p);
}

double cell_current(const ConductancePair& cell, double v_dl, const CellParams& p) {
  return lower_branch_current(v_dl, cell.g_m1, p) + upper_branch_current(v_dl, cell.g_m2, p);
}

double ml_capacitance(int width, const Parasitics& par) {
  return width * par.c_line + par.c_precharge + par.c_sense;
}

double ml_voltage_from_current(double i_total, double t, double v_ml0, double c_ml_total) {
  return std::max(v_ml0 - i_total * t / c_ml_total, 0.0);
}

double ml_voltage_at(std::span<const CellDrive> row, double t, double v_ml0, double c_ml_total,
                     const CellParams& p) {
  double i_total = 0.0;
  for (const auto& d : row) i_total += cell_current(d.cell, d.v_dl, p);
  return ml_voltage_from_current(i_total, t, v_ml0, c_ml_total);
}

bool row_matches(std::span<const CellDrive> row, const SenseConfig& sense, double c_ml_total,
                 const CellParams& p) {
  return ml_voltage_at(row, sense.t_clk, sense.v_ml0, c_ml_total, p) > sense.v_sa;
}

double critical_current(const SenseConfig& sense, double c_ml_total) {
  return (sense.v_ml0 - sense.v_sa) * c_ml_total / sense.t_clk;
}

}  // namespace camrf
