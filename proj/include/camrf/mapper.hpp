#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "camrf/device.hpp"
#include "camrf/forest.hpp"
#include "camrf/threshold_map.hpp"

namespace camrf {

// One row per leaf, trees in order, leaves in left-first preorder. A left
// branch tightens hi, a right branch raises lo; features a path never
// tests stay wildcards. Throws InvariantError on an empty range.
ThresholdMap extract_paths(const Forest& forest);

// column_order[c] is the source column placed at position c;
// row_order[r] is the source row placed at position r.
struct Reordering {
  std::vector<int> column_order;
  std::vector<int> row_order;
  ThresholdMap map;
};

// Columns by descending occupancy; rows by (leftmost occupied group of
// width group_width, descending occupancy). Both sorts are stable.
Reordering reorder(const ThresholdMap& map, int group_width = 1);

ThresholdMap permute_map(const ThresholdMap& map, std::span<const int> column_order,
                         std::span<const int> row_order);
// Inverse of permute_map for the same permutations.
ThresholdMap unpermute_map(const ThresholdMap& permuted, std::span<const int> column_order,
                           std::span<const int> row_order);

// Tile rows hold map row indices; -1 marks a padding row.
struct Tile {
  std::vector<int> rows;
};

// Physical array serving columns [first_column, first_column + width).
struct FeatureArray {
  int group = 0;
  int first_column = 0;
  int width = 0;  // may be < tile_w for the last group
  std::vector<Tile> tiles;
};

struct TiledPlan {
  int tile_h = 0;
  int tile_w = 0;
  ThresholdMap map;               // in plan order (after any reordering)
  std::vector<int> column_order;  // plan column -> source feature
  std::vector<int> row_order;     // plan row -> row of extract_paths
  std::vector<FeatureBounds> feature_bounds;  // indexed by source feature
  std::vector<FeatureArray> arrays;           // groups without tiles are omitted
  int decision_nodes = 0;                     // internal nodes of the source forest
  std::int64_t memory_cells = 0;

  int n_groups() const { return tile_w > 0 ? (map.n_features + tile_w - 1) / tile_w : 0; }
  int tile_count() const;
  int n_arrays() const { return static_cast<int>(arrays.size()); }
  // Source-order sample -> plan column order.
  std::vector<double> permute_sample(std::span<const double> sample) const;
};

// Greedy sweep per feature group: a row enters the open tile iff it has
// at least one non-wildcard cell in the group; full tiles are closed and
// a fresh one opened. Permutations are identity, bounds are left empty.
TiledPlan pack_tiles(const ThresholdMap& map, int tile_h, int tile_w);

// Raw, untiled footprint.
inline std::int64_t raw_memory_cells(std::int64_t rows, std::int64_t features) {
  return rows * features;
}

// Bounds per feature: the data range (if given) joined with every finite
// threshold, padded so that no threshold sits on a bound.
std::vector<FeatureBounds> compute_feature_bounds(const ThresholdMap& map, const Dataset* data);

struct CompileOptions {
  int tile_h = 16;
  int tile_w = 16;
  bool reorder = true;
};

TiledPlan compile(const Forest& forest, const CompileOptions& opt, const Dataset* bounds_data);

struct TileCoord {
  int array = 0;
  int tile = 0;
  int tile_row = 0;

  friend bool operator==(const TileCoord&, const TileCoord&) = default;
};

// Row is matched iff every ML in `coords` asserts; groups listed in
// `implicit_groups` hold no cell of the row and count as matched.
struct RowSchedule {
  int row = 0;
  int class_label = 0;
  int tree_index = 0;
  std::vector<TileCoord> coords;
  std::vector<int> implicit_groups;
};

// Throws InvariantError if a row is missing from, or duplicated in, an
// array where it has occupied cells.
std::vector<RowSchedule> plan_inference_row_sets(const TiledPlan& plan);

// Versioned JSON plan. With a calibration the document also carries the
// encoded conductance pair of every tile cell.
inline constexpr int kPlanVersion = 1;
std::string plan_to_json(const TiledPlan& plan, const Calibration* cal = nullptr);
TiledPlan plan_from_json(const std::string& text);

}  // namespace camrf
