#include "camrf/device.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "camrf/errors.hpp"

namespace camrf {

void DeviceModel::validate() const {
  if (!(g_hrs > 0 && g_hrs < g_lrs)) throw ConfigError("device: need 0 < g_hrs < g_lrs");
  if (n_levels < 2) throw ConfigError("device: n_levels must be >= 2");
  if (!(sigma_rel >= 0)) throw ConfigError("device: sigma_rel must be >= 0");
}

double DeviceModel::clip(double g) const { return std::clamp(g, g_hrs, g_lrs); }

void DlSpan::validate() const {
  if (!(v_min < v_max)) throw ConfigError("dl span: v_min must be < v_max");
}

namespace {

void check_bounds(const FeatureBounds& b) {
  if (!(std::isfinite(b.min) && std::isfinite(b.max) && b.min < b.max))
    throw ConfigError("degenerate feature bounds");
}

// Piecewise-linear interpolation of ys over strictly increasing xs;
// x is clipped to [xs.front(), xs.back()].
double interpolate(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
  if (x <= xs.front()) return ys.front();
  if (x >= xs.back()) return ys.back();
  auto it = std::upper_bound(xs.begin(), xs.end(), x);
  const std::size_t i = static_cast<std::size_t>(it - xs.begin()) - 1;
  const double t = (x - xs[i]) / (xs[i + 1] - xs[i]);
  return ys[i] + t * (ys[i + 1] - ys[i]);
}

// Root of f(g) = target on [1e-10, 1] S for f monotone in g, bisected in
// log space. `increasing` gives the direction of f.
double solve_conductance(auto&& f, double target, bool increasing) {
  double lo = std::log(1e-10);
  double hi = std::log(1.0);
  for (int i = 0; i < 200 && hi - lo > 1e-14; ++i) {
    const double mid = 0.5 * (lo + hi);
    const bool above = f(std::exp(mid)) > target;
    if (above == increasing)
      hi = mid;
    else
      lo = mid;
  }
  return std::exp(0.5 * (lo + hi));
}

bool strictly_increasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] > v[i - 1])) return false;
  return true;
}

}  // namespace

double feature_to_voltage(double x, const FeatureBounds& b, const DlSpan& s) {
  check_bounds(b);
  const double t = (std::clamp(x, b.min, b.max) - b.min) / (b.max - b.min);
  return s.v_min + t * (s.v_max - s.v_min);
}

double voltage_to_feature(double v, const FeatureBounds& b, const DlSpan& s) {
  check_bounds(b);
  const double t = (v - s.v_min) / (s.v_max - s.v_min);
  return b.min + t * (b.max - b.min);
}

const char* to_string(WildcardConvention c) {
  switch (c) {
    case WildcardConvention::automatic: return "automatic";
    case WildcardConvention::m1_hrs: return "m1_hrs";
    case WildcardConvention::m1_lrs: return "m1_lrs";
  }
  return "?";
}

WildcardConvention parse_wildcard_convention(const std::string& s) {
  if (s == "automatic") return WildcardConvention::automatic;
  if (s == "m1_hrs") return WildcardConvention::m1_hrs;
  if (s == "m1_lrs") return WildcardConvention::m1_lrs;
  throw ConfigError("unknown wildcard convention '" + s + "' (automatic|m1_hrs|m1_lrs)");
}

Calibration Calibration::build(const CellParams& cell, const SenseConfig& sense,
                               double c_ml_total, const DeviceModel& device, const DlSpan& span,
                               WildcardConvention wildcard, int grid_points) {
  cell.validate();
  sense.validate();
  device.validate();
  span.validate();
  if (!(c_ml_total > 0)) throw ConfigError("calibration: ML capacitance must be > 0");
  if (grid_points < 2) throw ConfigError("calibration: need at least 2 grid points");

  Calibration cal;
  cal.cell_ = cell;
  cal.sense_ = sense;
  cal.device_ = device;
  cal.span_ = span;
  cal.c_ml_ = c_ml_total;
  cal.i_crit_ = camrf::critical_current(sense, c_ml_total);

  const int n = grid_points;
  cal.grid_.resize(n);
  for (int i = 0; i < n; ++i)
    cal.grid_[i] = i == n - 1 ? span.v_max : span.v_min + (span.v_max - span.v_min) * i / (n - 1);

  const double i_crit = cal.i_crit_;
  cal.lower_feasible_ = true;
  cal.upper_feasible_ = true;
  for (double v : cal.grid_) {
    // Lower branch current grows with g_m1, upper shrinks with g_m2.
    auto lower = [&](double g) { return lower_branch_current(v, g, cell); };
    auto upper = [&](double g) { return upper_branch_current(v, g, cell); };
    if (!(lower(1.0) > i_crit)) cal.lower_feasible_ = false;
    if (!(upper(1e-10) > i_crit)) cal.upper_feasible_ = false;
    cal.lower_g_.push_back(cal.lower_feasible_ ? solve_conductance(lower, i_crit, true) : 0.0);
    cal.upper_g_.push_back(cal.upper_feasible_ ? solve_conductance(upper, i_crit, false) : 0.0);
  }

  auto describe = [&] {
    std::ostringstream os;
    os << "over DL span [" << span.v_min << ", " << span.v_max << "] V with V_SL_hi = "
       << cell.v_sl_hi << " V";
    return os.str();
  };
  if (cal.lower_feasible_ && !strictly_increasing(cal.lower_g_))
    throw CalibrationError("lower-edge calibration is not monotone " + describe());
  if (cal.upper_feasible_ && !strictly_increasing(cal.upper_g_))
    throw CalibrationError("upper-edge calibration is not monotone " + describe());

  auto always_matches = [&](const ConductancePair& wc) {
    for (double v : cal.grid_) {
      if (!Calibration::ideal_match(wc, cal.keys(v))) return false;
      if (!(cell_current(wc, v, cell) < i_crit)) return false;
    }
    return true;
  };
  const ConductancePair hrs_first{device.g_hrs, device.g_lrs};
  const ConductancePair lrs_first{device.g_lrs, device.g_hrs};
  switch (wildcard) {
    case WildcardConvention::automatic:
      if (always_matches(hrs_first)) {
        cal.wildcard_ = hrs_first;
        cal.convention_ = WildcardConvention::m1_hrs;
      } else if (always_matches(lrs_first)) {
        cal.wildcard_ = lrs_first;
        cal.convention_ = WildcardConvention::m1_lrs;
      } else {
        throw CalibrationError("no wildcard convention always matches " + describe());
      }
      break;
    case WildcardConvention::m1_hrs:
    case WildcardConvention::m1_lrs:
      cal.wildcard_ = wildcard == WildcardConvention::m1_hrs ? hrs_first : lrs_first;
      cal.convention_ = wildcard;
      if (!always_matches(cal.wildcard_))
        throw CalibrationError(std::string("wildcard convention ") + to_string(wildcard) +
                               " does not always match " + describe());
      break;
  }
  return cal;
}

double Calibration::lower_conductance(double v) const { return interpolate(grid_, lower_g_, v); }

double Calibration::upper_conductance(double v) const { return interpolate(grid_, upper_g_, v); }

double Calibration::lower_edge(double g) const {
  if (!lower_feasible_ || g < lower_g_.front()) return -kInf;
  if (g > lower_g_.back()) return kInf;
  return interpolate(lower_g_, grid_, g);
}

double Calibration::upper_edge(double g) const {
  if (!upper_feasible_ || g > upper_g_.back()) return kInf;
  if (g < upper_g_.front()) return -kInf;
  return interpolate(upper_g_, grid_, g);
}

EdgeKeys Calibration::keys(double v) const {
  return {lower_feasible_ ? lower_conductance(v) : kInf,
          upper_feasible_ ? upper_conductance(v) : -kInf};
}

ConductancePair encode_range(const ThresholdRange& r, const FeatureBounds& b,
                             const Calibration& cal, EncodeStats* stats) {
  ConductancePair out = cal.wildcard();
  const DeviceModel& dev = cal.device();
  auto place = [&](double g) {
    const double c = dev.clip(g);
    if (stats && c != g) ++stats->clipped;
    return c;
  };
  if (r.lo != -kInf && cal.lower_feasible())
    out.g_m1 = place(cal.lower_conductance(feature_to_voltage(r.lo, b, cal.span())));
  if (r.hi != kInf && cal.upper_feasible())
    out.g_m2 = place(cal.upper_conductance(feature_to_voltage(r.hi, b, cal.span())));
  if (stats) ++stats->cells;
  return out;
}

ConductancePair encode_range_joint(const ThresholdRange& r, const FeatureBounds& b,
                                   const Calibration& cal, EncodeStats* stats) {
  const CellParams& p = cal.cell();
  const double i_crit = cal.critical_current();
  const bool lower = r.lo != -kInf && cal.lower_feasible();
  const bool upper = r.hi != kInf && cal.upper_feasible();
  ConductancePair g = cal.wildcard();
  const double v_lo = lower ? feature_to_voltage(r.lo, b, cal.span()) : 0.0;
  const double v_hi = upper ? feature_to_voltage(r.hi, b, cal.span()) : 0.0;
  if (lower) g.g_m1 = cal.lower_conductance(v_lo);
  if (upper) g.g_m2 = cal.upper_conductance(v_hi);

  // Gauss-Seidel on the two edge equations; the cross terms are small, so
  // this settles in one or two sweeps. A non-positive target means the
  // other branch alone already mismatches at that edge: the branch is
  // switched off as far as the device allows.
  auto target = [&](double other) { return std::max(i_crit - other, 1e-3 * i_crit); };
  for (int sweep = 0; sweep < 8; ++sweep) {
    const ConductancePair before = g;
    if (upper) {
      const double t = target(lower_branch_current(v_hi, g.g_m1, p));
      g.g_m2 = solve_conductance([&](double x) { return upper_branch_current(v_hi, x, p); }, t, false);
    }
    if (lower) {
      const double t = target(upper_branch_current(v_lo, g.g_m2, p));
      g.g_m1 = solve_conductance([&](double x) { return lower_branch_current(v_lo, x, p); }, t, true);
    }
    if (!(lower && upper)) break;
    if (std::abs(g.g_m1 - before.g_m1) <= 1e-12 * g.g_m1 &&
        std::abs(g.g_m2 - before.g_m2) <= 1e-12 * g.g_m2)
      break;
  }

  const DeviceModel& dev = cal.device();
  auto place = [&](double x) {
    const double c = dev.clip(x);
    if (stats && c != x) ++stats->clipped;
    return c;
  };
  if (lower) g.g_m1 = place(g.g_m1);
  if (upper) g.g_m2 = place(g.g_m2);
  if (stats) ++stats->cells;
  return g;
}

ThresholdRange decode_range(const ConductancePair& cell, const FeatureBounds& b,
                            const Calibration& cal) {
  auto to_feature = [&](double v) {
    return std::isfinite(v) ? voltage_to_feature(v, b, cal.span()) : v;
  };
  return {to_feature(cal.lower_edge(cell.g_m1)), to_feature(cal.upper_edge(cell.g_m2))};
}

double quantize_value(double x, int n_bits, const FeatureBounds& b) {
  if (n_bits < 1 || n_bits > 52) throw ConfigError("n_bits must be in [1, 52]");
  check_bounds(b);
  const double steps = std::ldexp(1.0, n_bits) - 1.0;
  const double k = std::clamp(std::round((x - b.min) / b.span() * steps), 0.0, steps);
  if (k == steps) return b.max;
  return b.min + k * (b.span() / steps);
}

ThresholdRange quantize_range(const ThresholdRange& r, int n_bits, const FeatureBounds& b) {
  ThresholdRange q = r;
  if (std::isfinite(q.lo)) q.lo = quantize_value(q.lo, n_bits, b);
  if (std::isfinite(q.hi)) q.hi = quantize_value(q.hi, n_bits, b);
  return q;
}

ThresholdMap quantize_thresholds(const ThresholdMap& map, int n_bits,
                                 const std::vector<FeatureBounds>& bounds) {
  if (static_cast<int>(bounds.size()) != map.n_features)
    throw ConfigError("quantize: one bound per feature required");
  ThresholdMap out = map;
  for (auto& row : out.rows)
    for (std::size_t f = 0; f < row.ranges.size(); ++f)
      row.ranges[f] = quantize_range(row.ranges[f], n_bits, bounds[f]);
  return out;
}

double noise_factor(const DeviceModel& device, Rng& rng) {
  if (device.sigma_rel == 0.0) return 1.0;
  std::normal_distribution<double> z(0.0, device.sigma_rel);
  return 1.0 + z(rng);
}

double inject_noise(double g, const DeviceModel& device, Rng& rng) {
  if (device.sigma_rel == 0.0) return g;
  return device.clip(g * noise_factor(device, rng));
}

}  // namespace camrf
