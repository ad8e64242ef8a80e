#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "camrf/cam_model.hpp"
#include "camrf/device.hpp"
#include "camrf/forest.hpp"
#include "camrf/mapper.hpp"
#include "camrf/rng.hpp"

namespace camrf {

// How a tile row's ML is read out.
enum class Readout {
  // Sharp window comparator on the calibrated match edges.
  ideal,
  // Summed branch currents discharging the ML capacitance over t_clk,
  // compared against v_sa.
  analog,
};

const char* to_string(Readout r);
Readout parse_readout(const std::string& s);

struct ArchOptions {
  CellParams cell;
  Parasitics parasitics;
  SenseConfig sense;
  DeviceModel device;  // device.sigma_rel drives programming noise
  DlSpan span;
  WildcardConvention wildcard = WildcardConvention::automatic;
  int n_bits = 0;  // threshold quantization; 0 keeps full precision
  Readout readout = Readout::ideal;
  double v_read = 0.2;   // V, vote-array read voltage
  double adc_noise = 0.0;  // input-referred std at the argmax, in units of one LRS vote current
  int calibration_grid = Calibration::kDefaultGridPoints;

  void validate() const;
};

Calibration calibrate(const ArchOptions& opt, int tile_w);

struct ProgramReport {
  int cells = 0;
  int clipped = 0;      // physical conductances forced into the device range
  int key_clipped = 0;  // comparator keys forced into the device range
  WildcardConvention convention = WildcardConvention::m1_hrs;
  bool lower_feasible = true;
  bool upper_feasible = true;
};

// tile_h x tile_w, row-major. `cells` are the programmed conductances
// read by the analog ML; `keys` are the per-side edge conductances the
// ideal comparator uses. Both carry the same noise draws.
struct ProgrammedTile {
  std::vector<ConductancePair> cells;
  std::vector<ConductancePair> keys;
};

// Immutable after program(); shared read-only by concurrent inference.
struct ProgrammedArchitecture {
  TiledPlan plan;
  ThresholdMap stored;  // plan.map after quantization
  std::vector<RowSchedule> schedule;
  Calibration calibration;
  ArchOptions options;
  std::vector<std::vector<ProgrammedTile>> arrays;  // [array][tile]
  std::vector<double> vote;  // plan rows x n_classes, row-major
  ProgramReport report;
  std::uint64_t seed = 0;

  int n_classes() const { return plan.map.n_classes; }
  double vote_conductance(int row, int cls) const { return vote[row * n_classes() + cls]; }
};

// Quantize, encode and (when sigma_rel > 0) perturb every stored
// conductance, CAM cells and vote array alike. Deterministic per seed.
ProgrammedArchitecture program(const TiledPlan& plan, const ArchOptions& opt, std::uint64_t seed);
ProgrammedArchitecture program(const TiledPlan& plan, const ArchOptions& opt,
                               const Calibration& cal, std::uint64_t seed);

struct InferenceTrace {
  std::vector<std::vector<std::vector<char>>> ml;  // [array][tile][tile_row]
  std::vector<char> row_matched;                   // per plan row
  std::vector<int> matches_per_tree;
  std::vector<double> vote_currents;
  int predicted = 0;
  int cycles = 0;
};

// Latency of one non-pipelined decision: pre-charge, evaluate and latch
// per array, then one vote read.
inline int inference_cycles(int n_arrays) { return 3 * n_arrays + 1; }

// Index of the largest current; values within 1e-9 relative of the
// maximum count as ties and resolve to the lowest index.
int argmax_current(std::span<const double> currents);

// `sample` is in source feature order. `adc_rng` is only drawn from when
// adc_noise > 0.
InferenceTrace infer(const ProgrammedArchitecture& arch, std::span<const double> sample,
                     Rng* adc_rng = nullptr);

// Analog ML voltage at t_clk of every tile row, arrays and tiles in plan
// order (padding rows included). Input to the ML power model.
std::vector<double> final_ml_voltages(const ProgrammedArchitecture& arch,
                                      std::span<const double> sample);

struct AccuracyResult {
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  // Samples on which every tree had exactly one matching row.
  std::size_t single_path_samples = 0;
  // Samples whose prediction equals forest.predict (when a forest is given).
  std::size_t agree_with_forest = 0;
};

// Throws DataError on an empty dataset.
AccuracyResult evaluate_accuracy(const ProgrammedArchitecture& arch, const Dataset& data,
                                 unsigned threads = 1, const Forest* reference = nullptr);

void write_confusion_csv(std::ostream& out, const AccuracyResult& r);

enum class SweepVariable { sigma, n_bits, t_clk, tile_h, tile_w };
const char* to_string(SweepVariable v);
SweepVariable parse_sweep_variable(const std::string& s);

struct SweepSpec {
  SweepVariable variable = SweepVariable::sigma;
  std::vector<double> grid;
  int trials = 1;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

struct SweepContext {
  const Forest* forest = nullptr;
  const Dataset* test = nullptr;
  const Dataset* bounds_data = nullptr;  // feature bounds source, may be null
  CompileOptions compile;
  ArchOptions arch;
};

struct SweepPoint {
  double value = 0.0;
  std::vector<double> accuracy;  // one per trial
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single trial
};

struct SweepResult {
  SweepVariable variable = SweepVariable::sigma;
  std::vector<SweepPoint> points;
};

// Trial t of every grid point programs with the seed drawn from
// substream(spec.seed, {t}), so all points share their noise draws.
SweepResult sweep(const SweepContext& ctx, const SweepSpec& spec);

std::uint64_t trial_seed(std::uint64_t master, int trial);

// Columns: variable,value,trial,accuracy
void write_sweep_csv(std::ostream& out, const SweepResult& r);
// Columns: variable,value,mean,std,trials
void write_sweep_summary_csv(std::ostream& out, const SweepResult& r);

}  // namespace camrf
