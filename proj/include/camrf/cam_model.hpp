#pragma once

#include <span>

namespace camrf {

// Fitted compact model of the 6T2M analog CAM cell. Defaults are the
// published fitting constants; v_sl_hi / v_sl_lo are operating-point
// choices (see README, "Operating point").
struct CellParams {
  double i_d0 = 50e-9;                // A, T1 subthreshold prefactor
  double alpha = 80e-3;               // V, subthreshold slope
  double i_d0_intermediate = 45e-9;   // A, prefactor for v_sub_max <= V_DL < v_ohmic_min
  double k1 = 160e-6;                 // A/V, T1 ohmic transconductance
  double v_th_t1 = 405e-3;            // V
  double k2 = 300e-6;                 // A/V^2, T2/T6 saturation coefficient
  double v_th_t2 = 350e-3;            // V
  double beta = 50.0;                 // 1/V, inverter sigmoid steepness
  double gamma = -0.4;                // V, inverter sigmoid offset
  double v_inverter = 0.8;            // V, inverter rail
  double v_sl_hi = 1.2;               // V
  double v_sl_lo = 0.0;               // V
  double v_sub_max = 0.3;             // V, upper edge of the subthreshold fit
  double v_ohmic_min = 0.5;           // V, lower edge of the ohmic fit

  // Throws ConfigError.
  void validate() const;
};

// Post-layout parasitics per cell plus the row periphery.
struct Parasitics {
  double r_wire = 1.4;           // ohm, between adjacent cells (ML and DL)
  double c_line = 1.9e-15;       // F, per cell on ML and DL
  double c_precharge = 40.95e-15;
  double c_sense = 50e-15;

  void validate() const;
};

// Match-line sensing conditions.
struct SenseConfig {
  double t_clk = 1e-9;   // evaluation window
  double v_ml0 = 0.8;    // pre-charge level
  double v_sa = 0.4;     // sense-amplifier decision threshold

  void validate() const;
};

// g_m1 stores the lower threshold, g_m2 the upper one.
struct ConductancePair {
  double g_m1 = 0.0;
  double g_m2 = 0.0;

  friend bool operator==(const ConductancePair&, const ConductancePair&) = default;
};

enum class T1Regime { subthreshold, intermediate, ohmic };

T1Regime t1_regime(double v_dl, const CellParams& p);

// Current through the input transistor T1 (or T3). The fitted laws depend
// only on the gate drive V_GS = v_dl - v_sl_lo; the ohmic law is clamped
// at zero below threshold.
double t1_current(double v_dl, const CellParams& p);

struct DividerSolution {
  double v_div = 0.0;
  double residual = 0.0;  // g_m * (v_sl_hi - v_div) - t1_current, A
  bool clamped = false;   // root lies outside [v_sl_lo, v_sl_hi]
  int iterations = 0;
};

// Divider node between the memristor (to SL_hi) and T1 (to SL_lo):
// g_m * (v_sl_hi - v_div) = t1_current. Solved by bisection on
// [v_sl_lo, v_sl_hi] down to a 1e-15 V bracket, so |residual| < 1e-12 A.
DividerSolution solve_divider(double v_dl, double g_m, const CellParams& p);

inline constexpr double kDividerResidualTol = 1e-12;

// Sigmoid inverter driving T6.
double inverter_output(double v_div, const CellParams& p);

// Saturation current of the discharge transistor gated by v_gate.
double discharge_current(double v_gate, const CellParams& p);

// T2 branch: conducts when the input is below the lower threshold.
double lower_branch_current(double v_dl, double g_m1, const CellParams& p);

// T6 branch: conducts when the input is above the upper threshold.
double upper_branch_current(double v_dl, double g_m2, const CellParams& p);

double cell_current(const ConductancePair& cell, double v_dl, const CellParams& p);

struct CellDrive {
  ConductancePair cell;
  double v_dl = 0.0;
};

// Total ML capacitance of a row of `width` cells.
double ml_capacitance(int width, const Parasitics& par);

// ML voltage after discharging for time t at constant current.
double ml_voltage_from_current(double i_total, double t, double v_ml0, double c_ml_total);

// Discharge currents are evaluated at the initial instant and held for
// the whole window.
double ml_voltage_at(std::span<const CellDrive> row, double t, double v_ml0, double c_ml_total,
                     const CellParams& p);

bool row_matches(std::span<const CellDrive> row, const SenseConfig& sense, double c_ml_total,
                 const CellParams& p);

// Smallest constant discharge current that pulls the ML below v_sa
// within t_clk.
double critical_current(const SenseConfig& sense, double c_ml_total);

}  // namespace camrf
