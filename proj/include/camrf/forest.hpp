#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace camrf {

// Labeled feature matrix, row-major.
class Dataset {
 public:
  Dataset() = default;
  Dataset(int n_features, int n_classes) : n_features_(n_features), n_classes_(n_classes) {}

  void add(std::span<const double> sample, int label);

  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }
  int n_features() const { return n_features_; }
  int n_classes() const { return n_classes_; }
  void set_n_classes(int n) { n_classes_ = n; }

  std::span<const double> row(std::size_t i) const {
    return {values_.data() + i * static_cast<std::size_t>(n_features_),
            static_cast<std::size_t>(n_features_)};
  }
  int label(std::size_t i) const { return labels_[i]; }
  const std::vector<int>& labels() const { return labels_; }

  Dataset subset(std::span<const std::size_t> indices) const;

 private:
  int n_features_ = 0;
  int n_classes_ = 0;
  std::vector<double> values_;
  std::vector<int> labels_;
};

// CSV with header `f0,...,f{F-1},label`. Throws DataError on malformed input.
Dataset read_dataset_csv(std::istream& in);
Dataset load_dataset_csv(const std::string& path);
void write_dataset_csv(std::ostream& out, const Dataset& data);

struct DatasetSplit {
  Dataset train;
  Dataset test;
};

// Shuffled split; test_fraction == 0 puts everything in both halves.
DatasetSplit split_dataset(const Dataset& data, double test_fraction, std::uint64_t seed);

// Internal nodes send a sample left iff sample[feature] <= threshold.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int class_label = -1;

  bool is_leaf() const { return left < 0; }
  static TreeNode leaf(int label) { return TreeNode{-1, 0.0, -1, -1, label}; }
};

// Flat node array; nodes[0] is the root.
struct Tree {
  std::vector<TreeNode> nodes;

  int leaf_of(std::span<const double> sample) const;
  int predict(std::span<const double> sample) const { return nodes[leaf_of(sample)].class_label; }
  int depth() const;
  int leaf_count() const;
  int internal_count() const;
};

struct ForestParams {
  int n_trees = 15;
  int max_depth = 4;
  bool bootstrap = true;
  // Features tried per split; 0 selects floor(sqrt(F)).
  int max_features = 0;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

struct Forest {
  std::vector<Tree> trees;
  int n_classes = 0;
  int n_features = 0;
  int max_depth = 0;

  // Throws InvariantError if any structural invariant is broken.
  void validate() const;

  std::vector<int> votes(std::span<const double> sample) const;
  int predict(std::span<const double> sample) const;
  int leaf_count() const;
  int internal_count() const;
};

// Index of the largest entry, lowest index on ties.
int argmax_lowest(std::span<const int> counts);

// CART with Gini impurity. Each tree sees a bootstrap resample (when
// enabled) and draws max_features candidate features per split from its
// own substream of the seed, so training is deterministic per seed.
Forest train_forest(const Dataset& data, const ForestParams& params);

// Single decision tree on all features without resampling.
Forest train_decision_tree(const Dataset& data, int max_depth);

double software_accuracy(const Forest& forest, const Dataset& data);

// Versioned JSON model document.
inline constexpr int kModelVersion = 1;
std::string forest_to_json(const Forest& forest);
Forest forest_from_json(const std::string& text);

}  // namespace camrf
