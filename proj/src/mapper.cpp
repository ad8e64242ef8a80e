#include "camrf/mapper.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "camrf/errors.hpp"
#include "json.hpp"

namespace camrf {

ThresholdMap extract_paths(const Forest& forest) {
  ThresholdMap map;
  map.n_features = forest.n_features;
  map.n_classes = forest.n_classes;
  const std::vector<ThresholdRange> open(forest.n_features);

  struct Frame {
    int node;
    std::vector<ThresholdRange> ranges;
  };
  for (std::size_t t = 0; t < forest.trees.size(); ++t) {
    const auto& nodes = forest.trees[t].nodes;
    std::vector<Frame> stack{{0, open}};
    while (!stack.empty()) {
      Frame fr = std::move(stack.back());
      stack.pop_back();
      const TreeNode& n = nodes[fr.node];
      if (n.is_leaf()) {
        for (std::size_t f = 0; f < fr.ranges.size(); ++f)
          if (!(fr.ranges[f].lo < fr.ranges[f].hi))
            throw InvariantError("tree " + std::to_string(t) + ": empty range on feature " +
                                 std::to_string(f) + " (contradictory path)");
        map.rows.push_back({std::move(fr.ranges), n.class_label, static_cast<int>(t)});
        continue;
      }
      Frame right{n.right, fr.ranges};
      right.ranges[n.feature].lo = std::max(right.ranges[n.feature].lo, n.threshold);
      fr.ranges[n.feature].hi = std::min(fr.ranges[n.feature].hi, n.threshold);
      fr.node = n.left;
      stack.push_back(std::move(right));
      stack.push_back(std::move(fr));  // left is popped first
    }
  }
  return map;
}

ThresholdMap permute_map(const ThresholdMap& map, std::span<const int> column_order,
                         std::span<const int> row_order) {
  ThresholdMap out;
  out.n_features = map.n_features;
  out.n_classes = map.n_classes;
  out.rows.reserve(row_order.size());
  for (int r : row_order) {
    const MapRow& src = map.rows[r];
    MapRow row{{}, src.class_label, src.tree_index};
    row.ranges.reserve(column_order.size());
    for (int c : column_order) row.ranges.push_back(src.ranges[c]);
    out.rows.push_back(std::move(row));
  }
  return out;
}

ThresholdMap unpermute_map(const ThresholdMap& permuted, std::span<const int> column_order,
                           std::span<const int> row_order) {
  ThresholdMap out = permuted;
  for (std::size_t r = 0; r < row_order.size(); ++r) {
    MapRow& dst = out.rows[row_order[r]];
    const MapRow& src = permuted.rows[r];
    dst.class_label = src.class_label;
    dst.tree_index = src.tree_index;
    for (std::size_t c = 0; c < column_order.size(); ++c) dst.ranges[column_order[c]] = src.ranges[c];
  }
  return out;
}

Reordering reorder(const ThresholdMap& map, int group_width) {
  if (group_width < 1) throw ConfigError("reorder: group width must be >= 1");
  const int n_cols = map.n_features;
  std::vector<int> occupancy(n_cols, 0);
  for (const auto& row : map.rows)
    for (int c = 0; c < n_cols; ++c) occupancy[c] += row.ranges[c].wildcard() ? 0 : 1;

  Reordering out;
  out.column_order.resize(n_cols);
  std::iota(out.column_order.begin(), out.column_order.end(), 0);
  std::stable_sort(out.column_order.begin(), out.column_order.end(),
                   [&](int a, int b) { return occupancy[a] > occupancy[b]; });

  const std::vector<int> identity_rows = [&] {
    std::vector<int> v(map.rows.size());
    std::iota(v.begin(), v.end(), 0);
    return v;
  }();
  const ThresholdMap by_column = permute_map(map, out.column_order, identity_rows);

  const int n_groups = (n_cols + group_width - 1) / group_width;
  std::vector<int> leftmost(map.rows.size(), n_groups);
  std::vector<int> row_occ(map.rows.size(), 0);
  for (std::size_t r = 0; r < map.rows.size(); ++r) {
    const auto& ranges = by_column.rows[r].ranges;
    for (int c = 0; c < n_cols; ++c) {
      if (ranges[c].wildcard()) continue;
      leftmost[r] = std::min(leftmost[r], c / group_width);
      ++row_occ[r];
    }
  }
  out.row_order = identity_rows;
  std::stable_sort(out.row_order.begin(), out.row_order.end(), [&](int a, int b) {
    if (leftmost[a] != leftmost[b]) return leftmost[a] < leftmost[b];
    return row_occ[a] > row_occ[b];
  });
  out.map = permute_map(map, out.column_order, out.row_order);
  return out;
}

int TiledPlan::tile_count() const {
  int n = 0;
  for (const auto& a : arrays) n += static_cast<int>(a.tiles.size());
  return n;
}

std::vector<double> TiledPlan::permute_sample(std::span<const double> sample) const {
  if (static_cast<int>(sample.size()) != map.n_features)
    throw DataError("sample has " + std::to_string(sample.size()) + " features, expected " +
                    std::to_string(map.n_features));
  std::vector<double> out(sample.size());
  for (std::size_t c = 0; c < column_order.size(); ++c) out[c] = sample[column_order[c]];
  return out;
}

TiledPlan pack_tiles(const ThresholdMap& map, int tile_h, int tile_w) {
  if (tile_h < 1 || tile_w < 1) throw ConfigError("tile dimensions must be >= 1");
  TiledPlan plan;
  plan.tile_h = tile_h;
  plan.tile_w = tile_w;
  plan.map = map;
  plan.column_order.resize(map.n_features);
  std::iota(plan.column_order.begin(), plan.column_order.end(), 0);
  plan.row_order.resize(map.rows.size());
  std::iota(plan.row_order.begin(), plan.row_order.end(), 0);

  for (int g = 0; g < plan.n_groups(); ++g) {
    FeatureArray arr;
    arr.group = g;
    arr.first_column = g * tile_w;
    arr.width = std::min(tile_w, map.n_features - arr.first_column);
    Tile open;
    for (std::size_t r = 0; r < map.rows.size(); ++r) {
      const auto& ranges = map.rows[r].ranges;
      const bool occupied =
          std::any_of(ranges.begin() + arr.first_column,
                      ranges.begin() + arr.first_column + arr.width,
                      [](const ThresholdRange& x) { return !x.wildcard(); });
      if (!occupied) continue;
      open.rows.push_back(static_cast<int>(r));
      if (static_cast<int>(open.rows.size()) == tile_h) arr.tiles.push_back(std::move(open)), open = {};
    }
    if (!open.rows.empty()) {
      open.rows.resize(tile_h, -1);
      arr.tiles.push_back(std::move(open));
    }
    if (!arr.tiles.empty()) plan.arrays.push_back(std::move(arr));
  }
  plan.memory_cells = static_cast<std::int64_t>(plan.tile_count()) * tile_h * tile_w;
  return plan;
}

std::vector<FeatureBounds> compute_feature_bounds(const ThresholdMap& map, const Dataset* data) {
  const int n = map.n_features;
  std::vector<double> lo(n, kInf), hi(n, -kInf);
  std::vector<double> th_lo(n, kInf), th_hi(n, -kInf);
  if (data) {
    if (data->n_features() != n) throw DataError("dataset feature count does not match model");
    for (std::size_t i = 0; i < data->size(); ++i) {
      auto row = data->row(i);
      for (int f = 0; f < n; ++f) lo[f] = std::min(lo[f], row[f]), hi[f] = std::max(hi[f], row[f]);
    }
  }
  for (const auto& row : map.rows) {
    for (int f = 0; f < n; ++f) {
      for (double t : {row.ranges[f].lo, row.ranges[f].hi}) {
        if (!std::isfinite(t)) continue;
        th_lo[f] = std::min(th_lo[f], t);
        th_hi[f] = std::max(th_hi[f], t);
      }
    }
  }
  std::vector<FeatureBounds> out(n);
  for (int f = 0; f < n; ++f) {
    double a = std::min(lo[f], th_lo[f]);
    double b = std::max(hi[f], th_hi[f]);
    if (!std::isfinite(a)) a = b = 0.0;  // feature never seen
    if (!(a < b)) {
      a -= 0.5;
      b += 0.5;
    }
    // Clipped samples must stay strictly on their side of every threshold.
    const double pad = 0.01 * (b - a);
    if (th_lo[f] <= a) a -= pad;
    if (th_hi[f] >= b) b += pad;
    out[f] = {a, b};
  }
  return out;
}

TiledPlan compile(const Forest& forest, const CompileOptions& opt, const Dataset* bounds_data) {
  ThresholdMap map = extract_paths(forest);
  std::vector<FeatureBounds> bounds = compute_feature_bounds(map, bounds_data);
  TiledPlan plan;
  if (opt.reorder) {
    Reordering ro = reorder(map, opt.tile_w);
    plan = pack_tiles(ro.map, opt.tile_h, opt.tile_w);
    plan.column_order = std::move(ro.column_order);
    plan.row_order = std::move(ro.row_order);
  } else {
    plan = pack_tiles(map, opt.tile_h, opt.tile_w);
  }
  plan.feature_bounds = std::move(bounds);
  plan.decision_nodes = forest.internal_count();
  return plan;
}

std::vector<RowSchedule> plan_inference_row_sets(const TiledPlan& plan) {
  const auto& rows = plan.map.rows;
  std::vector<RowSchedule> out(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out[r].row = static_cast<int>(r);
    out[r].class_label = rows[r].class_label;
    out[r].tree_index = rows[r].tree_index;
  }
  // seen[r] = groups in which row r was placed.
  std::vector<std::vector<int>> seen(rows.size());
  for (std::size_t a = 0; a < plan.arrays.size(); ++a) {
    const auto& arr = plan.arrays[a];
    for (std::size_t t = 0; t < arr.tiles.size(); ++t) {
      const auto& tile = arr.tiles[t];
      if (static_cast<int>(tile.rows.size()) != plan.tile_h)
        throw InvariantError("tile height does not match plan");
      for (std::size_t k = 0; k < tile.rows.size(); ++k) {
        const int r = tile.rows[k];
        if (r < 0) continue;
        if (r >= static_cast<int>(rows.size())) throw InvariantError("tile references unknown row");
        if (std::find(seen[r].begin(), seen[r].end(), arr.group) != seen[r].end())
          throw InvariantError("row " + std::to_string(r) + " placed twice in group " +
                               std::to_string(arr.group));
        seen[r].push_back(arr.group);
        out[r].coords.push_back({static_cast<int>(a), static_cast<int>(t), static_cast<int>(k)});
      }
    }
  }
  const int w = plan.tile_w;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (int g = 0; g < plan.n_groups(); ++g) {
      const int first = g * w;
      const int last = std::min(first + w, plan.map.n_features);
      bool occupied = false;
      for (int c = first; c < last; ++c) occupied = occupied || !rows[r].ranges[c].wildcard();
      const bool placed = std::find(seen[r].begin(), seen[r].end(), g) != seen[r].end();
      if (occupied && !placed)
        throw InvariantError("row " + std::to_string(r) + " lost from group " + std::to_string(g));
      if (!occupied && placed)
        throw InvariantError("row " + std::to_string(r) + " placed in empty group " +
                             std::to_string(g));
      if (!occupied) out[r].implicit_groups.push_back(g);
    }
  }
  return out;
}

// ---------------------------------------------------------------- plan I/O

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json bound_value(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(); }

double read_bound(const ordered_json& v, double if_null) {
  if (v.is_null()) return if_null;
  if (!v.is_number()) throw DataError("plan document: range bound must be a number or null");
  return v.get<double>();
}

const ordered_json& need(const ordered_json& obj, const char* key) {
  if (!obj.is_object() || !obj.contains(key))
    throw DataError(std::string("plan document: missing '") + key + "'");
  return obj.at(key);
}

template <typename T>
T as(const ordered_json& v, const char* what) {
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw DataError(std::string("plan document: '") + what + "' has the wrong type");
  }
}

bool is_permutation_of_iota(std::vector<int> v) {
  std::sort(v.begin(), v.end());
  for (std::size_t i = 0; i < v.size(); ++i)
    if (v[i] != static_cast<int>(i)) return false;
  return true;
}

}  // namespace

std::string plan_to_json(const TiledPlan& plan, const Calibration* cal) {
  ordered_json doc;
  doc["schema"] = "camrf.plan";
  doc["version"] = kPlanVersion;
  doc["tile_h"] = plan.tile_h;
  doc["tile_w"] = plan.tile_w;
  doc["n_features"] = plan.map.n_features;
  doc["n_classes"] = plan.map.n_classes;
  doc["decision_nodes"] = plan.decision_nodes;
  doc["memory_cells"] = plan.memory_cells;
  doc["column_order"] = plan.column_order;
  doc["row_order"] = plan.row_order;
  ordered_json bounds = ordered_json::array();
  for (const auto& b : plan.feature_bounds) bounds.push_back({b.min, b.max});
  doc["feature_bounds"] = std::move(bounds);

  ordered_json rows = ordered_json::array();
  for (const auto& row : plan.map.rows) {
    ordered_json ranges = ordered_json::array();
    for (const auto& r : row.ranges) ranges.push_back({bound_value(r.lo), bound_value(r.hi)});
    rows.push_back({{"class", row.class_label}, {"tree", row.tree_index}, {"ranges", std::move(ranges)}});
  }
  doc["rows"] = std::move(rows);

  ordered_json arrays = ordered_json::array();
  for (const auto& arr : plan.arrays) {
    ordered_json tiles = ordered_json::array();
    for (const auto& tile : arr.tiles) {
      ordered_json t;
      t["rows"] = tile.rows;
      if (cal) {
        ordered_json grid = ordered_json::array();
        for (int r : tile.rows) {
          ordered_json line = ordered_json::array();
          for (int k = 0; k < plan.tile_w; ++k) {
            const int c = arr.first_column + k;
            ConductancePair g = cal->wildcard();
            if (r >= 0 && k < arr.width)
              g = encode_range_joint(plan.map.rows[r].ranges[c],
                               plan.feature_bounds[plan.column_order[c]], *cal);
            line.push_back({g.g_m1, g.g_m2});
          }
          grid.push_back(std::move(line));
        }
        t["conductances"] = std::move(grid);
      }
      tiles.push_back(std::move(t));
    }
    arrays.push_back({{"group", arr.group},
                      {"first_column", arr.first_column},
                      {"width", arr.width},
                      {"tiles", std::move(tiles)}});
  }
  doc["arrays"] = std::move(arrays);
  return doc.dump(1) + "\n";
}

TiledPlan plan_from_json(const std::string& text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("plan document: ") + e.what());
  }
  if (as<std::string>(need(doc, "schema"), "schema") != "camrf.plan")
    throw DataError("plan document: schema is not camrf.plan");
  const int version = as<int>(need(doc, "version"), "version");
  if (version != kPlanVersion)
    throw DataError("plan document: unsupported version " + std::to_string(version));

  TiledPlan plan;
  plan.tile_h = as<int>(need(doc, "tile_h"), "tile_h");
  plan.tile_w = as<int>(need(doc, "tile_w"), "tile_w");
  if (plan.tile_h < 1 || plan.tile_w < 1) throw DataError("plan document: bad tile size");
  plan.map.n_features = as<int>(need(doc, "n_features"), "n_features");
  plan.map.n_classes = as<int>(need(doc, "n_classes"), "n_classes");
  plan.decision_nodes = as<int>(need(doc, "decision_nodes"), "decision_nodes");
  plan.memory_cells = as<std::int64_t>(need(doc, "memory_cells"), "memory_cells");
  plan.column_order = as<std::vector<int>>(need(doc, "column_order"), "column_order");
  plan.row_order = as<std::vector<int>>(need(doc, "row_order"), "row_order");
  const int n_features = plan.map.n_features;
  if (static_cast<int>(plan.column_order.size()) != n_features ||
      !is_permutation_of_iota(plan.column_order))
    throw DataError("plan document: column_order is not a permutation");

  for (const auto& b : need(doc, "feature_bounds")) {
    auto pair = as<std::vector<double>>(b, "feature_bounds");
    if (pair.size() != 2 || !(pair[0] < pair[1]))
      throw DataError("plan document: feature bound must be [min, max] with min < max");
    plan.feature_bounds.push_back({pair[0], pair[1]});
  }
  if (static_cast<int>(plan.feature_bounds.size()) != n_features)
    throw DataError("plan document: one feature bound per feature required");

  for (const auto& row : need(doc, "rows")) {
    MapRow r;
    r.class_label = as<int>(need(row, "class"), "class");
    r.tree_index = as<int>(need(row, "tree"), "tree");
    if (r.class_label < 0 || r.class_label >= plan.map.n_classes)
      throw DataError("plan document: row class out of range");
    for (const auto& range : need(row, "ranges")) {
      if (!range.is_array() || range.size() != 2)
        throw DataError("plan document: range must be [lo, hi]");
      r.ranges.push_back({read_bound(range[0], -kInf), read_bound(range[1], kInf)});
    }
    if (static_cast<int>(r.ranges.size()) != n_features)
      throw DataError("plan document: row width does not match n_features");
    plan.map.rows.push_back(std::move(r));
  }
  if (plan.row_order.size() != plan.map.rows.size() || !is_permutation_of_iota(plan.row_order))
    throw DataError("plan document: row_order is not a permutation");

  for (const auto& a : need(doc, "arrays")) {
    FeatureArray arr;
    arr.group = as<int>(need(a, "group"), "group");
    arr.first_column = as<int>(need(a, "first_column"), "first_column");
    arr.width = as<int>(need(a, "width"), "width");
    if (arr.group < 0 || arr.group >= plan.n_groups() || arr.first_column != arr.group * plan.tile_w ||
        arr.width != std::min(plan.tile_w, n_features - arr.first_column))
      throw DataError("plan document: inconsistent array geometry");
    for (const auto& t : need(a, "tiles")) arr.tiles.push_back({as<std::vector<int>>(need(t, "rows"), "rows")});
    plan.arrays.push_back(std::move(arr));
  }
  if (plan.memory_cells != static_cast<std::int64_t>(plan.tile_count()) * plan.tile_h * plan.tile_w)
    throw DataError("plan document: memory_cells does not match tile count");
  try {
    (void)plan_inference_row_sets(plan);
  } catch (const InvariantError& e) {
    throw DataError(std::string("plan document: ") + e.what());
  }
  return plan;
}

}  // namespace camrf
