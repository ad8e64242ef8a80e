// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Informational lines start with "  ".

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "camrf/arch_sim.hpp"
#include "camrf/cam_model.hpp"
#include "camrf/device.hpp"
#include "camrf/mapper.hpp"
#include "camrf/parallel.hpp"
#include "camrf/perf.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace camrf;

namespace {

using Clock = std::chrono::steady_clock;

int failures = 0;

void verdict(int id, bool ok, const std::string& what, Clock::time_point start) {
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  std::printf("%s criterion %d: %s (%.2f s)\n", ok ? "PASS" : "FAIL", id, what.c_str(), secs);
  std::fflush(stdout);
  failures += ok ? 0 : 1;
}

template <typename... A>
void info(const char* fmt, A... a) {
  std::printf("  ");
  std::printf(fmt, a...);
  std::printf("\n");
}

bool rel_close(double a, double b, double rel) {
  return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b)) || a == b;
}

Forest iris_rf(const Dataset& train, std::uint64_t seed) {
  ForestParams p;
  p.n_trees = 15;
  p.max_depth = 4;
  p.seed = seed;
  return train_forest(train, p);
}

// ---------------------------------------------------------------- 1

void oracle_equivalence() {
  const auto start = Clock::now();
  std::mt19937_64 rng(2024);
  const int hs[] = {4, 8, 16, 32};
  const int ws[] = {1, 2, 4, 8, 16};
  long mismatches = 0, samples = 0, path_violations = 0;
  for (int k = 0; k < 50; ++k) {
    const int f = std::uniform_int_distribution<int>(2, 16)(rng);
    const int classes = std::uniform_int_distribution<int>(2, 5)(rng);
    const int trees = std::uniform_int_distribution<int>(1, 15)(rng);
    const int depth = std::uniform_int_distribution<int>(1, 6)(rng);
    const Forest forest = oracle::random_forest(f, classes, trees, depth, rng);
    CompileOptions copt;
    copt.tile_h = hs[k % 4];
    copt.tile_w = ws[k % 5];
    copt.reorder = k % 3 != 0;
    const auto arch = program(compile(forest, copt, nullptr), ArchOptions{}, k);
    for (const auto& s : oracle::probe_samples(forest, 200, rng)) {
      const InferenceTrace tr = infer(arch, s);
      mismatches += tr.predicted != oracle::majority(forest, s);
      for (int m : tr.matches_per_tree) path_violations += m != 1;
      ++samples;
    }
  }
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  info("%ld samples over 50 forests, %ld mismatches, %ld single-path violations", samples, mismatches,
       path_violations);
  verdict(1, mismatches == 0 && samples == 10000 && secs < 60.0,
          "ideal CAM prediction equals software forest on 50 forests x 200 samples", start);
}

// ---------------------------------------------------------------- 2

void iris_reproduction() {
  const auto start = Clock::now();
  const Dataset& d = fixture::iris();
  const Forest tree = train_decision_tree(d, 3);
  const auto arch = program(compile(tree, CompileOptions{}, &d), ArchOptions{}, 0);
  const AccuracyResult r = evaluate_accuracy(arch, d, 1, &tree);
  int correct = 0;
  for (std::size_t i = 0; i < d.size(); ++i) correct += oracle::traverse(tree.trees[0], d.row(i)) == d.label(i);
  const double software = static_cast<double>(correct) / d.size();
  info("CAM accuracy %.4f, software %.4f, single-path samples %zu/%zu", r.accuracy, software,
       r.single_path_samples, d.size());
  verdict(2, r.accuracy == software && r.single_path_samples == d.size(),
          "iris DT: CAM accuracy equals software and one ML asserts per tree", start);
}

// ---------------------------------------------------------------- 3

void noise_robustness() {
  const auto start = Clock::now();
  const std::vector<double> sigmas{0, 0.01, 0.02, 0.05, 0.10, 0.15};
  const int n_seeds = 10;
  std::vector<double> mean(sigmas.size(), 0.0);
  std::vector<double> seed0;
  for (int s = 0; s < n_seeds; ++s) {
    const auto split = split_dataset(fixture::iris(), 0.5, s);
    const Forest f = iris_rf(split.train, s);
    SweepContext ctx;
    ctx.forest = &f;
    ctx.test = &split.test;
    ctx.bounds_data = &split.train;
    SweepSpec spec;
    spec.grid = sigmas;
    spec.trials = 100;
    spec.seed = 7;
    spec.threads = default_thread_count();
    const SweepResult r = sweep(ctx, spec);
    for (std::size_t i = 0; i < sigmas.size(); ++i) {
      mean[i] += r.points[i].mean / n_seeds;
      if (s == 0) seed0.push_back(r.points[i].mean);
    }
  }
  bool monotone = true;
  for (std::size_t a = 0; a < sigmas.size(); ++a)
    for (std::size_t b = a + 1; b < sigmas.size(); ++b) monotone = monotone && mean[b] <= mean[a] + 0.01;
  const bool flat = std::abs(mean[3] - mean[0]) <= 0.02;
  for (std::size_t i = 0; i < sigmas.size(); ++i)
    info("sigma %.2f: mean accuracy %.4f over %d seeds (seed 0 alone %.4f)", sigmas[i], mean[i], n_seeds, seed0[i]);
  verdict(3, flat && monotone,
          "iris RF: sigma=5% within 2 points of sigma=0, non-increasing within 1 point", start);
}

// ---------------------------------------------------------------- 4

void quantization() {
  const auto start = Clock::now();
  const int n_seeds = 10;
  std::vector<double> loss(9, 0.0);  // index = n_bits, in points
  for (int s = 0; s < n_seeds; ++s) {
    const auto split = split_dataset(fixture::iris(), 0.5, s);
    const Forest f = iris_rf(split.train, s);
    const TiledPlan plan = compile(f, CompileOptions{}, &split.train);
    ArchOptions opt;
    const double base = evaluate_accuracy(program(plan, opt, 0), split.test).accuracy;
    for (int n = 1; n <= 8; ++n) {
      opt.n_bits = n;
      loss[n] += 100.0 * (base - evaluate_accuracy(program(plan, opt, 0), split.test).accuracy) / n_seeds;
    }
  }
  bool ok = loss[1] > 0 && loss[2] > 0;
  for (int n = 1; n <= 8; ++n) {
    info("n_bits %d: mean loss %.2f points", n, loss[n]);
    if (n >= 4) ok = ok && loss[n] <= 1.0;
  }
  verdict(4, ok, "loss <= 1 point for n_bits >= 4, positive for n_bits <= 2", start);
}

// ---------------------------------------------------------------- 5

void compression() {
  const auto start = Clock::now();
  const Dataset d = oracle::gaussian_classes(600, 256, 4, 32, 5);
  ForestParams p;
  p.n_trees = 15;
  p.max_depth = 10;
  p.seed = 5;
  const Forest f = train_forest(d, p);
  const ThresholdMap m = extract_paths(f);
  const std::int64_t raw = raw_memory_cells(static_cast<std::int64_t>(m.rows.size()), 256);
  info("%zu rows, raw %lld cells", m.rows.size(), static_cast<long long>(raw));
  int over_half = 0, worse = 0;
  for (int h : {16, 32, 48})
    for (int w : {16, 32, 48}) {
      const std::int64_t plain = pack_tiles(m, h, w).memory_cells;
      const std::int64_t packed = compile(f, CompileOptions{h, w, true}, &d).memory_cells;
      info("H=%d W=%d: reordered %lld (%.3f of raw), unreordered %lld", h, w, static_cast<long long>(packed),
           static_cast<double>(packed) / raw, static_cast<long long>(plain));
      over_half += packed >= raw / 2.0;
      worse += packed > plain;
    }
  const bool formula = raw_memory_cells(2000, 256) == 512000;
  verdict(5, over_half == 0 && worse == 0 && formula,
          "reordered tiles < 0.5 x raw and <= unreordered on 9 tile sizes; 2000 x 256 = 512000", start);
}

// ---------------------------------------------------------------- 6

void throughput_energy() {
  const auto start = Clock::now();
  const PerfGeometry g{16, 16, 16, 16, 0};
  PerfConfig cfg;
  const PerfReport serial = evaluate_perf(g, cfg);
  cfg.pipelined = true;
  const PerfReport piped = evaluate_perf(g, cfg);
  const double eps = 4 * std::numeric_limits<double>::epsilon();
  const bool ok = std::abs(serial.throughput - 20.83e6) <= 0.005 * 20.83e6 &&
                  std::abs(piped.throughput - 333e6) <= 0.005 * 333e6 &&
                  rel_close(serial.energy_per_decision, serial.p_total / serial.throughput, eps) &&
                  rel_close(piped.energy_per_decision, piped.p_total / piped.throughput, eps) &&
                  rel_close(serial.energy_per_decision, piped.energy_per_decision, eps);
  info("throughput %.6g / %.6g dec/s, energy %.6g / %.6g J/dec, p_total %.6g / %.6g W", serial.throughput,
       piped.throughput, serial.energy_per_decision, piped.energy_per_decision, serial.p_total, piped.p_total);
  verdict(6, ok, "16 arrays at 1 ns: 20.83e6 and 333e6 dec/s, energy identities", start);
}

// ---------------------------------------------------------------- 7

void formula_fidelity() {
  const auto start = Clock::now();
  std::mt19937_64 rng(77);
  auto u = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  auto k = [&] { return u(0.7, 1.3); };
  int points = 0, bad = 0;
  for (int i = 0; i < 200; ++i, ++points) {
    CellParams c;
    c.i_d0 *= k(), c.alpha *= k(), c.i_d0_intermediate *= k(), c.k1 *= k(), c.v_th_t1 *= k();
    c.k2 *= k(), c.v_th_t2 *= k(), c.beta *= k(), c.gamma *= k(), c.v_sl_hi *= k();
    const double v = u(0.0, c.v_sl_hi);
    const double g = std::exp(u(std::log(5e-6), std::log(200e-6)));
    const double vd = solve_divider(v, g, c).v_div;
    const double vo = oracle::divider(v, g, c);
    bad += !rel_close(t1_current(v, c), oracle::t1(v, c), 1e-9);
    bad += !rel_close(vd, vo, 1e-6);
    bad += !rel_close(discharge_current(vo, c), oracle::lower(v, g, c), 1e-9);
    bad += !rel_close(discharge_current(inverter_output(vo, c), c), oracle::upper(v, g, c), 1e-9);

    const int h = static_cast<int>(u(1, 65)), w = static_cast<int>(u(1, 65)), n = static_cast<int>(u(0, 41));
    const double vs = u(0.1, 1.5), i0 = u(1e-9, 1e-7), r = u(1e2, 1e5);
    bad += !rel_close(p_static(h, w, n, vs, i0), oracle::p_static(h, w, n, vs, i0), 1e-9);
    bad += !rel_close(p_dl(vs, w, n, r), oracle::p_dl(vs, w, n, r), 1e-9);

    const double cm = u(10e-15, 300e-15), t = u(0.1e-9, 10e-9), v0 = u(0.3, 1.2);
    std::vector<double> vf(static_cast<std::size_t>(h));
    for (auto& x : vf) x = u(0.0, v0);
    long double dim = 0, printed = 0;
    for (double x : vf) {
      dim += (cm * v0 * v0 + cm * (v0 - x) * (v0 - x)) / (2 * t);
      printed += ((cm * v0) * (cm * v0) + (cm * (v0 - x)) * (cm * (v0 - x))) / (2 * t);
    }
    bad += !rel_close(p_ml(t, cm, v0, h, 1, vf, MlPowerMode::dimensional).total(), static_cast<double>(dim), 1e-9);
    bad += !rel_close(p_ml(t, cm, v0, h, 1, vf, MlPowerMode::as_printed).total(), static_cast<double>(printed), 1e-9);

    const int hh = static_cast<int>(u(1, 10001));
    const double ro = u(10, 1e5), rw = u(0, 10), cd = u(0.5e-15, 5e-15);
    bad += !rel_close(elmore_delay(hh, ro, rw, cd), oracle::elmore_loop(hh, ro, rw, cd), 1e-9);
  }
  info("%d random points, %d formula disagreements", points, bad);
  verdict(7, bad == 0 && points >= 100, "cell, power and delay formulas match independent oracles", start);
}

// ---------------------------------------------------------------- 8

bool analog_match(const ConductancePair& cell, double v, const Calibration& cal, int width) {
  std::vector<CellDrive> row(width, CellDrive{cal.wildcard(), v});
  row[0].cell = cell;
  return row_matches(row, cal.sense(), cal.c_ml_total(), cal.cell());
}

double measure_edge(const ConductancePair& cell, double inside, double outside, const Calibration& cal, int width) {
  if (analog_match(cell, outside, cal, width)) return outside < inside ? -kInf : kInf;
  double a = inside, b = outside;
  for (int i = 0; i < 80; ++i) {
    const double m = 0.5 * (a + b);
    (analog_match(cell, m, cal, width) ? a : b) = m;
  }
  return 0.5 * (a + b);
}

void cell_behaviour() {
  const auto start = Clock::now();
  const CellParams p;
  const DeviceModel dev;
  long violations = 0;
  std::vector<double> gs(50);
  for (int j = 0; j < 50; ++j) gs[j] = dev.g_hrs * std::pow(dev.g_lrs / dev.g_hrs, j / 49.0);
  const double regimes[][2] = {{0.0, 0.3}, {0.3, 0.5}, {0.5, 0.8}};
  for (const auto& rg : regimes) {
    std::vector<double> vs(50);
    for (int i = 0; i < 50; ++i) vs[i] = rg[0] + (rg[1] - rg[0]) * (i + 0.5) / 50;
    for (int i = 0; i < 50; ++i)
      for (int j = 0; j < 50; ++j) {
        const double vd = solve_divider(vs[i], gs[j], p).v_div;
        const double lo = lower_branch_current(vs[i], gs[j], p), up = upper_branch_current(vs[i], gs[j], p);
        if (i + 1 < 50) {
          violations += solve_divider(vs[i + 1], gs[j], p).v_div > vd + 1e-9;
          violations += lower_branch_current(vs[i + 1], gs[j], p) > lo;
          violations += upper_branch_current(vs[i + 1], gs[j], p) < up;
        }
        if (j + 1 < 50) {
          violations += solve_divider(vs[i], gs[j + 1], p).v_div < vd - 1e-9;
          violations += lower_branch_current(vs[i], gs[j + 1], p) < lo;
          violations += upper_branch_current(vs[i], gs[j + 1], p) > up;
        }
      }
  }

  const int width = 16;
  const Calibration cal =
      Calibration::build(p, SenseConfig{}, ml_capacitance(width, Parasitics{}), dev, DlSpan{});
  std::mt19937_64 rng(88);
  int ranges = 0, outside = 0;
  double worst = 0;
  while (ranges < 250) {
    const double min = std::uniform_real_distribution<double>(-5, 5)(rng);
    const FeatureBounds b{min, min + std::uniform_real_distribution<double>(0.5, 20)(rng)};
    const double lsb = b.span() / (dev.n_levels - 1);
    std::uniform_real_distribution<double> uu(b.min + lsb / 2, b.max - lsb / 2);
    double a = uu(rng), c = uu(rng);
    if (a > c) std::swap(a, c);
    if (c - a < 2 * lsb) continue;
    const ConductancePair g = encode_range_joint(ThresholdRange{a, c}, b, cal);
    const double mid = feature_to_voltage((a + c) / 2, b, cal.span());
    const double lo = voltage_to_feature(measure_edge(g, mid, cal.span().v_min, cal, width), b, cal.span());
    const double hi = voltage_to_feature(measure_edge(g, mid, cal.span().v_max, cal, width), b, cal.span());
    const double err = std::max(std::abs(lo - a), std::abs(hi - c)) / lsb;
    worst = std::max(worst, err);
    outside += !(err <= 0.5);
    ++ranges;
  }
  info("%ld monotonicity violations on 50x50 grids; %d/%d ranges outside LSB/2, worst %.3g LSB", violations,
       outside, ranges, worst);
  verdict(8, violations == 0 && outside == 0 && ranges >= 200,
          "monotone cell model and encode/measure round-trip within LSB/2", start);
}

// ---------------------------------------------------------------- 9

void determinism() {
  const auto start = Clock::now();
  const auto split = split_dataset(fixture::iris(), 0.5, 3);
  const Forest f = iris_rf(split.train, 3);
  SweepContext ctx;
  ctx.forest = &f;
  ctx.test = &split.test;
  ctx.bounds_data = &split.train;
  bool identical = true;
  const std::pair<SweepVariable, std::vector<double>> grids[] = {
      {SweepVariable::sigma, {0, 0.05, 0.15}},
      {SweepVariable::n_bits, {2, 4}},
      {SweepVariable::t_clk, {0.5e-9, 1e-9}},
      {SweepVariable::tile_h, {8, 32}},
  };
  for (const auto& [var, grid] : grids) {
    std::string first;
    for (unsigned threads : {1u, 3u, 8u}) {
      SweepSpec spec;
      spec.variable = var;
      spec.grid = grid;
      spec.trials = 8;
      spec.seed = 99;
      spec.threads = threads;
      const SweepResult r = sweep(ctx, spec);
      std::ostringstream rows, summary;
      write_sweep_csv(rows, r);
      write_sweep_summary_csv(summary, r);
      const std::string text = rows.str() + summary.str();
      if (first.empty()) first = text;
      identical = identical && text == first;
    }
  }
  verdict(9, identical, "sweep CSVs are byte-identical across reruns and thread counts", start);
}

}  // namespace

int main() {
  const std::function<void()> criteria[] = {oracle_equivalence, iris_reproduction, noise_robustness,
                                            quantization,       compression,       throughput_energy,
                                            formula_fidelity,   cell_behaviour,    determinism};
  for (const auto& c : criteria) c();
  std::printf("%s: %d of 9 criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
