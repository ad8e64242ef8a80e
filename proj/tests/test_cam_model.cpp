#include <cmath>
#include <random>
#include <vector>

#include "camrf/cam_model.hpp"
#include "camrf/device.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace camrf;

namespace {

bool rel_close(double a, double b, double rel) {
  return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b)) || a == b;
}

// Random operating points with every fitted constant perturbed by up to 30%.
struct RandomPoint {
  CellParams p;
  double v_dl;
  double g;
};

RandomPoint random_point(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> k(0.7, 1.3);
  RandomPoint r;
  r.p.i_d0 *= k(rng);
  r.p.alpha *= k(rng);
  r.p.i_d0_intermediate *= k(rng);
  r.p.k1 *= k(rng);
  r.p.v_th_t1 *= k(rng);
  r.p.k2 *= k(rng);
  r.p.v_th_t2 *= k(rng);
  r.p.beta *= k(rng);
  r.p.gamma *= k(rng);
  r.p.v_sl_hi *= k(rng);
  r.v_dl = std::uniform_real_distribution<double>(0.0, r.p.v_sl_hi)(rng);
  r.g = std::exp(std::uniform_real_distribution<double>(std::log(5e-6), std::log(200e-6))(rng));
  return r;
}

// Grid over one T1 regime, endpoints kept inside the regime.
std::vector<double> regime_grid(double a, double b, int n) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = a + (b - a) * (i + 0.5) / n;
  return v;
}

std::vector<double> log_grid(double a, double b, int n) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = a * std::pow(b / a, static_cast<double>(i) / (n - 1));
  return v;
}

}  // namespace

TEST_CASE("t1 current: regime laws on their own domains") {
  const CellParams p;
  CHECK(t1_current(p.v_sl_lo, p) == doctest::Approx(50e-9).epsilon(1e-12));
  CHECK(t1_current(0.6, p) == doctest::Approx(31.2e-6).epsilon(1e-12));
  CHECK(t1_regime(0.29, p) == T1Regime::subthreshold);
  CHECK(t1_regime(0.3, p) == T1Regime::intermediate);
  CHECK(t1_regime(0.5, p) == T1Regime::ohmic);
  CHECK(t1_current(0.4, p) == doctest::Approx(45e-9 * std::exp(0.4 / 0.08)).epsilon(1e-12));

  CellParams raised = p;
  raised.v_sl_lo = 0.2;  // V_GS = 0.35 V < V_th,T1 in the ohmic regime
  CHECK(t1_current(0.55, raised) == 0.0);
}

TEST_CASE("formula fidelity against closed forms on random parameter points") {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 200; ++i) {
    const auto [p, v, g] = random_point(rng);
    CAPTURE(i);
    REQUIRE(rel_close(t1_current(v, p), oracle::t1(v, p), 1e-9));
    const double vd = solve_divider(v, g, p).v_div;
    INFO("v_dl=" << v << " g=" << g << " vd=" << vd << " oracle=" << oracle::divider(v, g, p));
    REQUIRE(rel_close(vd, oracle::divider(v, g, p), 1e-6));
    REQUIRE(rel_close(discharge_current(vd, p), oracle::square_law(vd, p), 1e-9));
    REQUIRE(rel_close(inverter_output(vd, p), oracle::inverter(vd, p), 1e-9));
    // Branch currents evaluated at the oracle node voltage.
    const double vo = oracle::divider(v, g, p);
    REQUIRE(rel_close(discharge_current(vo, p), oracle::lower(v, g, p), 1e-9));
    REQUIRE(rel_close(discharge_current(inverter_output(vo, p), p), oracle::upper(v, g, p), 1e-9));
  }
}

TEST_CASE("divider: limits, residual and monotonicity") {
  const CellParams p;
  const DeviceModel dev;
  CHECK(solve_divider(0.6, 0.0, p).v_div == p.v_sl_lo);
  for (double v : regime_grid(0.0, 0.3, 20)) CHECK(solve_divider(v, 10 * dev.g_lrs, p).v_div > p.v_sl_hi - 1e-3);
  for (double v : regime_grid(0.0, 1.2, 50)) CHECK(solve_divider(v, 1e3 * dev.g_lrs, p).v_div > p.v_sl_hi - 1e-3);

  int violations = 0;
  for (double v : regime_grid(0.0, 1.2, 200)) {
    for (double g : log_grid(1e-7, 1e-2, 200)) {
      const auto s = solve_divider(v, g, p);
      if (!s.clamped && s.v_div > p.v_sl_lo && std::abs(s.residual) >= kDividerResidualTol) ++violations;
    }
  }
  CHECK(violations == 0);

  const double bounds[][2] = {{0.0, 0.3}, {0.3, 0.5}, {0.5, 1.2}};
  for (const auto& b : bounds) {
    const auto vs = regime_grid(b[0], b[1], 50);
    const auto gs = log_grid(dev.g_hrs, dev.g_lrs, 50);
    int bad = 0;
    for (std::size_t i = 0; i < vs.size(); ++i)
      for (std::size_t j = 0; j < gs.size(); ++j) {
        const double here = solve_divider(vs[i], gs[j], p).v_div;
        if (j + 1 < gs.size() && solve_divider(vs[i], gs[j + 1], p).v_div < here - 1e-9) ++bad;
        if (i + 1 < vs.size() && solve_divider(vs[i + 1], gs[j], p).v_div > here + 1e-9) ++bad;
      }
    CHECK(bad == 0);
  }
}

TEST_CASE("branch currents: hand values and saturation") {
  const CellParams p;
  CHECK(discharge_current(0.35, p) == 0.0);
  CHECK(discharge_current(0.2, p) == 0.0);
  CHECK(discharge_current(0.45, p) == doctest::Approx(3e-6).epsilon(1e-9));
  CHECK(inverter_output(0.4, p) == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(discharge_current(inverter_output(1.2, p), p) == 0.0);
  // Open M1 pulls the node to SL_lo: no lower-branch current.
  CHECK(lower_branch_current(0.6, 0.0, p) == 0.0);
}

TEST_CASE("branch current monotonicity on 50x50 grids per regime") {
  const CellParams p;
  const DeviceModel dev;
  const double bounds[][2] = {{0.0, 0.3}, {0.3, 0.5}, {0.5, 0.8}};
  for (const auto& b : bounds) {
    const auto vs = regime_grid(b[0], b[1], 50);
    const auto gs = log_grid(dev.g_hrs, dev.g_lrs, 50);
    int lower_bad = 0, upper_bad = 0;
    for (std::size_t i = 0; i < vs.size(); ++i) {
      for (std::size_t j = 0; j < gs.size(); ++j) {
        const double lo = lower_branch_current(vs[i], gs[j], p);
        const double up = upper_branch_current(vs[i], gs[j], p);
        if (i + 1 < vs.size()) {
          lower_bad += lower_branch_current(vs[i + 1], gs[j], p) > lo;
          upper_bad += upper_branch_current(vs[i + 1], gs[j], p) < up;
        }
        if (j + 1 < gs.size()) {
          lower_bad += lower_branch_current(vs[i], gs[j + 1], p) < lo;
          upper_bad += upper_branch_current(vs[i], gs[j + 1], p) > up;
        }
      }
    }
    CAPTURE(b[0]);
    CHECK(lower_bad == 0);
    CHECK(upper_bad == 0);
  }
}

TEST_CASE("match line discharge") {
  const CellParams p;
  CHECK(ml_voltage_from_current(0.0, 5e-9, 0.8, 100e-15) == 0.8);
  // 1 uA for 1 ns on 100 fF removes 10 mV; 1 mA removes 10 V and clamps.
  CHECK(ml_voltage_from_current(1e-6, 1e-9, 0.8, 100e-15) == doctest::Approx(0.79).epsilon(1e-12));
  CHECK(ml_voltage_from_current(1e-3, 1e-9, 0.8, 100e-15) == 0.0);
  CHECK(ml_voltage_from_current(10e-6, 1e-9, 0.8, 100e-15) == doctest::Approx(0.7).epsilon(1e-12));
  const Parasitics par;
  CHECK(ml_capacitance(16, par) == doctest::Approx(16 * 1.9e-15 + 40.95e-15 + 50e-15));
  CHECK(critical_current(SenseConfig{}, 100e-15) == doctest::Approx(0.4 * 100e-15 / 1e-9));

  // Mismatching cell: lower threshold near the top of the span, input low.
  const ConductancePair bad{150e-6, 200e-6};
  const ConductancePair wild{5e-6, 200e-6};
  const double c = ml_capacitance(4, par);
  std::vector<CellDrive> one{{bad, 0.55}, {wild, 0.6}, {wild, 0.6}, {wild, 0.6}};
  std::vector<CellDrive> two{{bad, 0.55}, {bad, 0.55}, {wild, 0.6}, {wild, 0.6}};
  CHECK(cell_current(bad, 0.55, p) > 0.0);
  double prev1 = 1.0, prev2 = 1.0;
  for (double t = 0; t <= 2e-9; t += 1e-11) {
    const double v1 = ml_voltage_at(one, t, 0.8, c, p);
    const double v2 = ml_voltage_at(two, t, 0.8, c, p);
    CHECK(v2 <= v1);
    CHECK(v1 <= prev1);
    CHECK(v2 <= prev2);
    prev1 = v1, prev2 = v2;
  }
}

TEST_CASE("row matching with calibrated cells") {
  const CellParams p;
  const SenseConfig sense;
  const DeviceModel dev;
  const DlSpan span;
  const int w = 4;
  const double c = ml_capacitance(w, Parasitics{});
  const Calibration cal = Calibration::build(p, sense, c, dev, span);
  REQUIRE(cal.feasible());

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(span.v_min, span.v_max);
  for (int k = 0; k < 200; ++k) {
    std::vector<CellDrive> row(w);
    for (auto& d : row) d = {cal.wildcard(), u(rng)};
    CHECK(row_matches(row, sense, c, p));
  }

  // Stored window [0.55, 0.75] V on cell 0, the rest don't care.
  const ConductancePair cell{cal.lower_conductance(0.55), cal.upper_conductance(0.75)};
  std::vector<CellDrive> row(w, CellDrive{cal.wildcard(), 0.65});
  row[0] = {cell, 0.65};
  CHECK(row_matches(row, sense, c, p));
  row[0].v_dl = 0.9;
  CHECK_FALSE(row_matches(row, sense, c, p));
  CHECK(upper_branch_current(0.9, cell.g_m2, p) > cal.critical_current());
  row[0].v_dl = 0.52;
  CHECK_FALSE(row_matches(row, sense, c, p));
}
