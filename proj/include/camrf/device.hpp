#pragma once

#include <string>
#include <vector>

#include "camrf/cam_model.hpp"
#include "camrf/rng.hpp"
#include "camrf/threshold_map.hpp"

namespace camrf {

struct DeviceModel {
  double g_hrs = 5e-6;    // S
  double g_lrs = 200e-6;  // S
  // Distinguishable programming levels; sets the tolerance unit
  // (one LSB = feature span / (n_levels - 1)).
  int n_levels = 16;
  double sigma_rel = 0.0;

  void validate() const;
  double clip(double g) const;
};

struct FeatureBounds {
  double min = 0.0;
  double max = 1.0;

  double span() const { return max - min; }
  friend bool operator==(const FeatureBounds&, const FeatureBounds&) = default;
};

// Data-line voltage range the features are mapped onto. It must lie in
// a single T1 regime: the fitted laws are discontinuous at the regime
// boundaries, which would make the threshold-to-conductance map
// non-monotone.
struct DlSpan {
  double v_min = 0.5;
  double v_max = 0.8;

  void validate() const;
};

// Affine map of [b.min, b.max] onto [s.v_min, s.v_max]; x is clipped to
// the bounds first. Throws ConfigError on degenerate bounds.
double feature_to_voltage(double x, const FeatureBounds& b, const DlSpan& s);
double voltage_to_feature(double v, const FeatureBounds& b, const DlSpan& s);

// Which memristor sits at which extreme for a don't-care cell.
enum class WildcardConvention {
  automatic,  // whichever convention measures as always-match
  m1_hrs,     // M1 = HRS, M2 = LRS
  m1_lrs,     // M1 = LRS, M2 = HRS
};

const char* to_string(WildcardConvention c);
WildcardConvention parse_wildcard_convention(const std::string& s);

// Per-sample lookup keys for the ideal comparator: the conductances that
// would put each match edge exactly at the sample's DL voltage.
struct EdgeKeys {
  double lower = 0.0;
  double upper = 0.0;
};

// Tabulated match edges of one cell in a row of a given width. For each
// grid voltage v the table holds the conductance at which that branch
// alone discharges the ML to exactly v_sa at t_clk:
//   lower side: mismatch iff I_lower(v, g_m1) > I_crit, edge rises with g_m1
//   upper side: mismatch iff I_upper(v, g_m2) > I_crit, edge rises with g_m2
// Encoding interpolates v -> g and decoding g -> v on the same table, so
// the two are exact inverses up to rounding.
class Calibration {
 public:
  static inline constexpr int kDefaultGridPoints = 257;

  // Throws CalibrationError when a table is not strictly increasing or
  // the requested wildcard convention does not always match.
  static Calibration build(const CellParams& cell, const SenseConfig& sense, double c_ml_total,
                           const DeviceModel& device, const DlSpan& span,
                           WildcardConvention wildcard = WildcardConvention::automatic,
                           int grid_points = kDefaultGridPoints);

  // False when I_crit exceeds what the branch can ever draw; the side
  // then always matches and no threshold can be stored on it.
  bool lower_feasible() const { return lower_feasible_; }
  bool upper_feasible() const { return upper_feasible_; }
  bool feasible() const { return lower_feasible_ && upper_feasible_; }

  // v -> g (v clipped to the span).
  double lower_conductance(double v) const;
  double upper_conductance(double v) const;
  // g -> v; -inf / +inf when the edge lies below / above the span.
  double lower_edge(double g) const;
  double upper_edge(double g) const;

  EdgeKeys keys(double v) const;
  // Sharp comparator: edge_lo < v <= edge_hi, evaluated in conductance
  // space so that a threshold encoded at exactly v compares consistently.
  static bool ideal_match(const ConductancePair& cell, const EdgeKeys& k) {
    return k.lower > cell.g_m1 && k.upper <= cell.g_m2;
  }

  ConductancePair wildcard() const { return wildcard_; }
  WildcardConvention convention() const { return convention_; }

  const CellParams& cell() const { return cell_; }
  const SenseConfig& sense() const { return sense_; }
  const DeviceModel& device() const { return device_; }
  const DlSpan& span() const { return span_; }
  double c_ml_total() const { return c_ml_; }
  double critical_current() const { return i_crit_; }

  const std::vector<double>& grid() const { return grid_; }
  const std::vector<double>& lower_table() const { return lower_g_; }
  const std::vector<double>& upper_table() const { return upper_g_; }

 private:
  CellParams cell_;
  SenseConfig sense_;
  DeviceModel device_;
  DlSpan span_;
  double c_ml_ = 0.0;
  double i_crit_ = 0.0;
  bool lower_feasible_ = false;
  bool upper_feasible_ = false;
  std::vector<double> grid_;
  std::vector<double> lower_g_;
  std::vector<double> upper_g_;
  ConductancePair wildcard_;
  WildcardConvention convention_ = WildcardConvention::m1_hrs;
};

struct EncodeStats {
  int cells = 0;
  int clipped = 0;  // conductances forced into [g_hrs, g_lrs]
};

// Unbounded sides take the wildcard conductance; bounded sides are
// mapped through the calibration and clipped to the device range. These
// are the ideal comparator's keys: each side on its own edge.
ConductancePair encode_range(const ThresholdRange& r, const FeatureBounds& b,
                             const Calibration& cal, EncodeStats* stats = nullptr);

// Physical conductances for the same window. Both branches conduct at
// once, so the pair is solved jointly until the summed cell current
// equals I_crit at each bounded edge; per-side keys would let the lower
// branch's slow turn-off narrow the window from above.
ConductancePair encode_range_joint(const ThresholdRange& r, const FeatureBounds& b,
                                   const Calibration& cal, EncodeStats* stats = nullptr);

// Window measured by the ideal comparator, back in feature units.
ThresholdRange decode_range(const ConductancePair& cell, const FeatureBounds& b,
                            const Calibration& cal);

// Nearest of 2^n_bits uniform levels over b (both ends included).
double quantize_value(double x, int n_bits, const FeatureBounds& b);
ThresholdRange quantize_range(const ThresholdRange& r, int n_bits, const FeatureBounds& b);
// bounds[f] applies to column f.
ThresholdMap quantize_thresholds(const ThresholdMap& map, int n_bits,
                                 const std::vector<FeatureBounds>& bounds);

// 1 + N(0, sigma_rel); exactly 1 when sigma_rel = 0 (no draw).
double noise_factor(const DeviceModel& device, Rng& rng);
// g * noise_factor, clipped to the device range.
double inject_noise(double g, const DeviceModel& device, Rng& rng);

}  // namespace camrf
