#pragma once

#include <limits>
#include <span>
#include <vector>

namespace camrf {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Half-open acceptance interval (lo, hi] in feature units. The open lower
// end mirrors the tree convention: a right branch is taken iff x > th.
struct ThresholdRange {
  double lo = -kInf;
  double hi = kInf;

  bool wildcard() const { return lo == -kInf && hi == kInf; }
  bool contains(double x) const { return lo < x && x <= hi; }

  friend bool operator==(const ThresholdRange&, const ThresholdRange&) = default;
};

struct MapRow {
  std::vector<ThresholdRange> ranges;
  int class_label = -1;
  int tree_index = -1;

  int occupancy() const {
    int n = 0;
    for (const auto& r : ranges) n += r.wildcard() ? 0 : 1;
    return n;
  }
  bool matches(std::span<const double> sample) const {
    for (std::size_t f = 0; f < ranges.size(); ++f)
      if (!ranges[f].contains(sample[f])) return false;
    return true;
  }

  friend bool operator==(const MapRow&, const MapRow&) = default;
};

// Rows are root-to-leaf paths, columns are features.
struct ThresholdMap {
  int n_features = 0;
  int n_classes = 0;
  std::vector<MapRow> rows;

  friend bool operator==(const ThresholdMap&, const ThresholdMap&) = default;
};

}  // namespace camrf
