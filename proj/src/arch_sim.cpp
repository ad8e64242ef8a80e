#include "camrf/arch_sim.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>

#include "camrf/errors.hpp"
#include "camrf/format.hpp"
#include "camrf/parallel.hpp"

namespace camrf {

const char* to_string(Readout r) { return r == Readout::ideal ? "ideal" : "analog"; }

Readout parse_readout(const std::string& s) {
  if (s == "ideal") return Readout::ideal;
  if (s == "analog") return Readout::analog;
  throw ConfigError("unknown readout '" + s + "' (ideal|analog)");
}

void ArchOptions::validate() const {
  cell.validate();
  parasitics.validate();
  sense.validate();
  device.validate();
  span.validate();
  if (n_bits < 0 || n_bits > 52) throw ConfigError("n_bits must be in [0, 52]");
  if (!(v_read > 0)) throw ConfigError("v_read must be > 0");
  if (!(adc_noise >= 0)) throw ConfigError("adc_noise must be >= 0");
}

Calibration calibrate(const ArchOptions& opt, int tile_w) {
  return Calibration::build(opt.cell, opt.sense, ml_capacitance(tile_w, opt.parasitics), opt.device,
                            opt.span, opt.wildcard, opt.calibration_grid);
}

ProgrammedArchitecture program(const TiledPlan& plan, const ArchOptions& opt, std::uint64_t seed) {
  opt.validate();
  return program(plan, opt, calibrate(opt, plan.tile_w), seed);
}

ProgrammedArchitecture program(const TiledPlan& plan, const ArchOptions& opt,
                               const Calibration& cal, std::uint64_t seed) {
  opt.validate();
  if (static_cast<int>(plan.feature_bounds.size()) != plan.map.n_features)
    throw ConfigError("plan has no feature bounds");

  ProgrammedArchitecture arch;
  arch.plan = plan;
  arch.schedule = plan_inference_row_sets(plan);
  arch.calibration = cal;
  arch.options = opt;
  arch.seed = seed;

  std::vector<FeatureBounds> column_bounds(plan.map.n_features);
  for (int c = 0; c < plan.map.n_features; ++c) column_bounds[c] = plan.feature_bounds[plan.column_order[c]];
  arch.stored = opt.n_bits > 0 ? quantize_thresholds(plan.map, opt.n_bits, column_bounds) : plan.map;

  Rng cell_rng = substream(seed, {0xce11});
  Rng vote_rng = substream(seed, {0x7073});
  const DeviceModel& dev = opt.device;
  auto perturb = [&](double g, Rng& rng) { return inject_noise(g, dev, rng); };

  EncodeStats stats, key_stats;
  const int h = plan.tile_h;
  const int w = plan.tile_w;
  for (const auto& fa : plan.arrays) {
    auto& tiles = arch.arrays.emplace_back();
    for (const auto& tile : fa.tiles) {
      ProgrammedTile pt;
      pt.cells.reserve(static_cast<std::size_t>(h) * w);
      pt.keys.reserve(static_cast<std::size_t>(h) * w);
      for (int k = 0; k < h; ++k) {
        const int r = tile.rows[k];
        for (int j = 0; j < w; ++j) {
          ConductancePair g = cal.wildcard();
          ConductancePair key = g;
          if (r >= 0 && j < fa.width) {
            const int c = fa.first_column + j;
            const ThresholdRange& range = arch.stored.rows[r].ranges[c];
            key = encode_range(range, column_bounds[c], cal, &key_stats);
            g = encode_range_joint(range, column_bounds[c], cal, &stats);
          }
          // One draw per memristor moves its physical value and its key alike.
          const double f1 = noise_factor(dev, cell_rng);
          const double f2 = noise_factor(dev, cell_rng);
          if (f1 != 1.0) g.g_m1 = dev.clip(g.g_m1 * f1), key.g_m1 = dev.clip(key.g_m1 * f1);
          if (f2 != 1.0) g.g_m2 = dev.clip(g.g_m2 * f2), key.g_m2 = dev.clip(key.g_m2 * f2);
          pt.cells.push_back(g);
          pt.keys.push_back(key);
        }
      }
      tiles.push_back(std::move(pt));
    }
  }

  const int n_classes = plan.map.n_classes;
  arch.vote.resize(plan.map.rows.size() * static_cast<std::size_t>(n_classes));
  for (std::size_t r = 0; r < plan.map.rows.size(); ++r)
    for (int j = 0; j < n_classes; ++j)
      arch.vote[r * n_classes + j] =
          perturb(plan.map.rows[r].class_label == j ? dev.g_lrs : dev.g_hrs, vote_rng);

  arch.report.cells = stats.cells;
  arch.report.clipped = stats.clipped;
  arch.report.key_clipped = key_stats.clipped;
  arch.report.convention = cal.convention();
  arch.report.lower_feasible = cal.lower_feasible();
  arch.report.upper_feasible = cal.upper_feasible();
  return arch;
}

int argmax_current(std::span<const double> currents) {
  if (currents.empty()) return 0;
  const double top = *std::max_element(currents.begin(), currents.end());
  const double floor = top - 1e-9 * std::abs(top);
  for (std::size_t j = 0; j < currents.size(); ++j)
    if (currents[j] >= floor) return static_cast<int>(j);
  return 0;
}

InferenceTrace infer(const ProgrammedArchitecture& arch, std::span<const double> sample,
                     Rng* adc_rng) {
  const TiledPlan& plan = arch.plan;
  const std::vector<double> x = plan.permute_sample(sample);
  const Calibration& cal = arch.calibration;
  const ArchOptions& opt = arch.options;
  const int n_cols = plan.map.n_features;

  std::vector<double> v_dl(n_cols);
  std::vector<EdgeKeys> keys(n_cols);
  for (int c = 0; c < n_cols; ++c) {
    v_dl[c] = feature_to_voltage(x[c], plan.feature_bounds[plan.column_order[c]], cal.span());
    keys[c] = cal.keys(v_dl[c]);
  }

  InferenceTrace tr;
  const int h = plan.tile_h;
  const int w = plan.tile_w;
  const double c_ml = cal.c_ml_total();
  std::vector<CellDrive> drives(w);
  tr.ml.resize(plan.arrays.size());
  for (std::size_t a = 0; a < plan.arrays.size(); ++a) {
    const FeatureArray& fa = plan.arrays[a];
    tr.ml[a].resize(fa.tiles.size());
    for (std::size_t t = 0; t < fa.tiles.size(); ++t) {
      const ProgrammedTile& pt = arch.arrays[a][t];
      auto& out = tr.ml[a][t];
      out.resize(h);
      for (int k = 0; k < h; ++k) {
        const std::size_t base = static_cast<std::size_t>(k) * w;
        bool match = true;
        if (opt.readout == Readout::ideal) {
          for (int j = 0; j < fa.width && match; ++j)
            match = Calibration::ideal_match(pt.keys[base + j], keys[fa.first_column + j]);
        } else {
          const ConductancePair* row = pt.cells.data() + base;
          // Unused columns of a narrow last group are held at v_min.
          for (int j = 0; j < w; ++j)
            drives[j] = {row[j], j < fa.width ? v_dl[fa.first_column + j] : cal.span().v_min};
          match = row_matches(drives, opt.sense, c_ml, opt.cell);
        }
        out[k] = match ? 1 : 0;
      }
    }
  }

  const int n_classes = arch.n_classes();
  const std::size_t n_rows = plan.map.rows.size();
  tr.row_matched.assign(n_rows, 0);
  int n_trees = 0;
  for (const auto& row : plan.map.rows) n_trees = std::max(n_trees, row.tree_index + 1);
  tr.matches_per_tree.assign(n_trees, 0);
  tr.vote_currents.assign(n_classes, 0.0);
  for (std::size_t r = 0; r < n_rows; ++r) {
    bool m = true;
    for (const auto& c : arch.schedule[r].coords) m = m && tr.ml[c.array][c.tile][c.tile_row];
    tr.row_matched[r] = m ? 1 : 0;
    if (!m) continue;
    ++tr.matches_per_tree[plan.map.rows[r].tree_index];
    for (int j = 0; j < n_classes; ++j) tr.vote_currents[j] += arch.vote_conductance(static_cast<int>(r), j);
  }
  for (auto& i : tr.vote_currents) i *= opt.v_read;
  if (adc_rng && opt.adc_noise > 0) {
    std::normal_distribution<double> z(0.0, opt.adc_noise * opt.v_read * opt.device.g_lrs);
    for (auto& i : tr.vote_currents) i += z(*adc_rng);
  }
  tr.predicted = argmax_current(tr.vote_currents);
  tr.cycles = inference_cycles(plan.n_arrays());
  return tr;
}

std::vector<double> final_ml_voltages(const ProgrammedArchitecture& arch,
                                      std::span<const double> sample) {
  const TiledPlan& plan = arch.plan;
  const std::vector<double> x = plan.permute_sample(sample);
  const Calibration& cal = arch.calibration;
  const int w = plan.tile_w;
  std::vector<double> out;
  std::vector<CellDrive> drives(w);
  for (std::size_t a = 0; a < plan.arrays.size(); ++a) {
    const FeatureArray& fa = plan.arrays[a];
    for (const auto& tile : arch.arrays[a]) {
      for (int k = 0; k < plan.tile_h; ++k) {
        for (int j = 0; j < w; ++j) {
          const double v = j < fa.width
                               ? feature_to_voltage(x[fa.first_column + j],
                                                    plan.feature_bounds[plan.column_order[fa.first_column + j]],
                                                    cal.span())
                               : cal.span().v_min;
          drives[j] = {tile.cells[static_cast<std::size_t>(k) * w + j], v};
        }
        out.push_back(ml_voltage_at(drives, arch.options.sense.t_clk, arch.options.sense.v_ml0,
                                    cal.c_ml_total(), arch.options.cell));
      }
    }
  }
  return out;
}

AccuracyResult evaluate_accuracy(const ProgrammedArchitecture& arch, const Dataset& data,
                                 unsigned threads, const Forest* reference) {
  if (data.empty()) throw DataError("cannot evaluate accuracy on an empty dataset");
  const int n_classes = std::max(arch.n_classes(), data.n_classes());
  struct Outcome {
    int predicted = 0;
    bool single_path = false;
    bool agree = false;
  };
  std::vector<Outcome> outcomes(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) {
    Rng adc = substream(arch.seed, {0xadc, i});
    const InferenceTrace tr = infer(arch, data.row(i), &adc);
    outcomes[i].predicted = tr.predicted;
    outcomes[i].single_path = std::all_of(tr.matches_per_tree.begin(), tr.matches_per_tree.end(),
                                          [](int n) { return n == 1; });
    if (reference) outcomes[i].agree = reference->predict(data.row(i)) == tr.predicted;
  });

  AccuracyResult r;
  r.total = data.size();
  r.confusion.assign(n_classes, std::vector<std::size_t>(n_classes, 0));
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& o = outcomes[i];
    r.correct += o.predicted == data.label(i) ? 1 : 0;
    r.single_path_samples += o.single_path ? 1 : 0;
    r.agree_with_forest += o.agree ? 1 : 0;
    ++r.confusion[data.label(i)][o.predicted];
  }
  r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total);
  return r;
}

void write_confusion_csv(std::ostream& out, const AccuracyResult& r) {
  out << "true,predicted,count\n";
  for (std::size_t t = 0; t < r.confusion.size(); ++t)
    for (std::size_t p = 0; p < r.confusion[t].size(); ++p)
      out << t << ',' << p << ',' << r.confusion[t][p] << '\n';
}

// ------------------------------------------------------------------ sweeps

const char* to_string(SweepVariable v) {
  switch (v) {
    case SweepVariable::sigma: return "sigma";
    case SweepVariable::n_bits: return "n_bits";
    case SweepVariable::t_clk: return "t_clk";
    case SweepVariable::tile_h: return "tile_h";
    case SweepVariable::tile_w: return "tile_w";
  }
  return "?";
}

SweepVariable parse_sweep_variable(const std::string& s) {
  for (auto v : {SweepVariable::sigma, SweepVariable::n_bits, SweepVariable::t_clk,
                 SweepVariable::tile_h, SweepVariable::tile_w})
    if (s == to_string(v)) return v;
  throw ConfigError("unknown sweep variable '" + s + "' (sigma|n_bits|t_clk|tile_h|tile_w)");
}

std::uint64_t trial_seed(std::uint64_t master, int trial) {
  Rng rng = substream(master, {static_cast<std::uint64_t>(trial)});
  return rng();
}

namespace {

int as_count(double v, const char* what, int min) {
  if (!(v == std::floor(v)) || v < min || v > 1e6)
    throw ConfigError(std::string("sweep: ") + what + " values must be integers >= " +
                      std::to_string(min));
  return static_cast<int>(v);
}

struct PointSetup {
  TiledPlan plan;
  ArchOptions arch;
  Calibration cal;
};

}  // namespace

SweepResult sweep(const SweepContext& ctx, const SweepSpec& spec) {
  if (!ctx.forest || !ctx.test) throw ConfigError("sweep: forest and test data are required");
  if (spec.grid.empty()) throw ConfigError("sweep: empty grid");
  if (spec.trials < 1) throw ConfigError("sweep: trials must be >= 1");

  std::vector<PointSetup> setups;
  setups.reserve(spec.grid.size());
  std::map<std::pair<int, int>, TiledPlan> plans;
  for (double value : spec.grid) {
    CompileOptions co = ctx.compile;
    ArchOptions ao = ctx.arch;
    switch (spec.variable) {
      case SweepVariable::sigma:
        if (!(value >= 0)) throw ConfigError("sweep: sigma values must be >= 0");
        ao.device.sigma_rel = value;
        break;
      case SweepVariable::n_bits: ao.n_bits = as_count(value, "n_bits", 0); break;
      case SweepVariable::t_clk:
        if (!(value > 0)) throw ConfigError("sweep: t_clk values must be > 0");
        ao.sense.t_clk = value;
        break;
      case SweepVariable::tile_h: co.tile_h = as_count(value, "tile_h", 1); break;
      case SweepVariable::tile_w: co.tile_w = as_count(value, "tile_w", 1); break;
    }
    ao.validate();
    auto key = std::make_pair(co.tile_h, co.tile_w);
    auto it = plans.find(key);
    if (it == plans.end()) it = plans.emplace(key, compile(*ctx.forest, co, ctx.bounds_data)).first;
    setups.push_back({it->second, ao, calibrate(ao, co.tile_w)});
  }

  SweepResult res;
  res.variable = spec.variable;
  res.points.resize(spec.grid.size());
  const std::size_t trials = static_cast<std::size_t>(spec.trials);
  for (std::size_t p = 0; p < spec.grid.size(); ++p) {
    res.points[p].value = spec.grid[p];
    res.points[p].accuracy.resize(trials);
  }
  parallel_for(spec.grid.size() * trials, spec.threads, [&](std::size_t job) {
    const std::size_t p = job / trials;
    const int t = static_cast<int>(job % trials);
    const PointSetup& s = setups[p];
    const ProgrammedArchitecture arch = program(s.plan, s.arch, s.cal, trial_seed(spec.seed, t));
    res.points[p].accuracy[t] = evaluate_accuracy(arch, *ctx.test, 1).accuracy;
  });

  for (auto& pt : res.points) {
    // Shifted by the first trial so identical trials give an exact mean.
    const double ref = pt.accuracy.front();
    double shift = 0.0;
    for (double a : pt.accuracy) shift += a - ref;
    pt.mean = ref + shift / static_cast<double>(trials);
    double ss = 0.0;
    for (double a : pt.accuracy) ss += (a - pt.mean) * (a - pt.mean);
    pt.std = trials > 1 ? std::sqrt(ss / static_cast<double>(trials - 1)) : 0.0;
  }
  return res;
}

void write_sweep_csv(std::ostream& out, const SweepResult& r) {
  out << "variable,value,trial,accuracy\n";
  for (const auto& pt : r.points)
    for (std::size_t t = 0; t < pt.accuracy.size(); ++t)
      out << to_string(r.variable) << ',' << format_double(pt.value) << ',' << t << ','
          << format_double(pt.accuracy[t]) << '\n';
}

void write_sweep_summary_csv(std::ostream& out, const SweepResult& r) {
  out << "variable,value,mean,std,trials\n";
  for (const auto& pt : r.points)
    out << to_string(r.variable) << ',' << format_double(pt.value) << ',' << format_double(pt.mean)
        << ',' << format_double(pt.std) << ',' << pt.accuracy.size() << '\n';
}

}  // namespace camrf
