#include "camrf/forest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "camrf/errors.hpp"
#include "camrf/format.hpp"
#include "camrf/parallel.hpp"
#include "camrf/rng.hpp"
#include "json.hpp"

namespace camrf {

// ---------------------------------------------------------------- dataset

void Dataset::add(std::span<const double> sample, int label) {
  if (static_cast<int>(sample.size()) != n_features_)
    throw DataError("sample has " + std::to_string(sample.size()) + " features, expected " +
                    std::to_string(n_features_));
  if (label < 0) throw DataError("negative class label");
  values_.insert(values_.end(), sample.begin(), sample.end());
  labels_.push_back(label);
  n_classes_ = std::max(n_classes_, label + 1);
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out(n_features_, n_classes_);
  for (auto i : indices) out.add(row(i), label(i));
  out.n_classes_ = n_classes_;
  return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    auto b = cell.find_first_not_of(" \t\r");
    auto e = cell.find_last_not_of(" \t\r");
    cells.push_back(b == std::string::npos ? std::string{} : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_number(const std::string& s, std::size_t line_no) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v))
    throw DataError("line " + std::to_string(line_no) + ": not a finite number: '" + s + "'");
  return v;
}

}  // namespace

Dataset read_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("dataset: missing header");
  auto header = split_csv_line(line);
  if (header.size() < 2 || header.back() != "label")
    throw DataError("dataset: header must be f0,...,f{F-1},label");
  const int n_features = static_cast<int>(header.size()) - 1;
  for (int f = 0; f < n_features; ++f)
    if (header[f] != "f" + std::to_string(f))
      throw DataError("dataset: header column " + std::to_string(f) + " must be 'f" +
                      std::to_string(f) + "', got '" + header[f] + "'");

  Dataset data(n_features, 0);
  std::vector<double> sample(n_features);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = split_csv_line(line);
    if (static_cast<int>(cells.size()) != n_features + 1)
      throw DataError("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(n_features + 1) + " fields, got " +
                      std::to_string(cells.size()));
    for (int f = 0; f < n_features; ++f) sample[f] = parse_number(cells[f], line_no);
    int label = 0;
    auto& lc = cells.back();
    auto [ptr, ec] = std::from_chars(lc.data(), lc.data() + lc.size(), label);
    if (ec != std::errc{} || ptr != lc.data() + lc.size() || label < 0)
      throw DataError("line " + std::to_string(line_no) + ": bad class label '" + lc + "'");
    data.add(sample, label);
  }
  if (data.empty()) throw DataError("dataset: no samples");
  return data;
}

Dataset load_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset '" + path + "'");
  return read_dataset_csv(in);
}

void write_dataset_csv(std::ostream& out, const Dataset& data) {
  for (int f = 0; f < data.n_features(); ++f) out << 'f' << f << ',';
  out << "label\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.row(i)) out << format_double(v) << ',';
    out << data.label(i) << '\n';
  }
}

DatasetSplit split_dataset(const Dataset& data, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0))
    throw ConfigError("test_fraction must be in [0, 1)");
  if (test_fraction == 0.0) return {data, data};
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  auto rng = substream(seed, {0x5b1d});
  std::shuffle(order.begin(), order.end(), rng);
  auto n_test = static_cast<std::size_t>(std::llround(test_fraction * data.size()));
  n_test = std::clamp<std::size_t>(n_test, 1, data.size() - 1);
  std::vector<std::size_t> test(order.begin(), order.begin() + n_test);
  std::vector<std::size_t> train(order.begin() + n_test, order.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return {data.subset(train), data.subset(test)};
}

// ------------------------------------------------------------------ trees

int Tree::leaf_of(std::span<const double> sample) const {
  int n = 0;
  while (!nodes[n].is_leaf()) {
    const auto& node = nodes[n];
    n = sample[node.feature] <= node.threshold ? node.left : node.right;
  }
  return n;
}

int Tree::depth() const {
  std::vector<int> d(nodes.size(), 0);
  int best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    best = std::max(best, d[i]);
    if (!nodes[i].is_leaf()) {
      d[nodes[i].left] = d[i] + 1;
      d[nodes[i].right] = d[i] + 1;
    }
  }
  return best;
}

int Tree::leaf_count() const {
  return static_cast<int>(std::count_if(nodes.begin(), nodes.end(),
                                        [](const TreeNode& n) { return n.is_leaf(); }));
}

int Tree::internal_count() const { return static_cast<int>(nodes.size()) - leaf_count(); }

int argmax_lowest(std::span<const int> counts) {
  int best = 0;
  for (int j = 1; j < static_cast<int>(counts.size()); ++j)
    if (counts[j] > counts[best]) best = j;
  return best;
}

void Forest::validate() const {
  if (n_classes < 1) throw InvariantError("forest: n_classes must be positive");
  if (n_features < 1) throw InvariantError("forest: n_features must be positive");
  if (trees.empty()) throw InvariantError("forest: no trees");
  for (std::size_t t = 0; t < trees.size(); ++t) {
    const auto& nodes = trees[t].nodes;
    const std::string where = "tree " + std::to_string(t) + ": ";
    if (nodes.empty()) throw InvariantError(where + "no nodes");
    // Children must point forward so the structure is a tree rooted at 0
    // with every node reachable exactly once.
    std::vector<int> parents(nodes.size(), 0);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const auto& n = nodes[i];
      if (n.is_leaf()) {
        if (n.right >= 0) throw InvariantError(where + "leaf with one child");
        if (n.class_label < 0 || n.class_label >= n_classes)
          throw InvariantError(where + "leaf class out of range");
        continue;
      }
      if (n.right < 0) throw InvariantError(where + "internal node needs two children");
      if (n.feature < 0 || n.feature >= n_features)
        throw InvariantError(where + "feature index out of range");
      if (!std::isfinite(n.threshold)) throw InvariantError(where + "non-finite threshold");
      for (int c : {n.left, n.right}) {
        if (c <= static_cast<int>(i) || c >= static_cast<int>(nodes.size()))
          throw InvariantError(where + "child index out of order");
        ++parents[c];
      }
    }
    for (std::size_t i = 1; i < nodes.size(); ++i)
      if (parents[i] != 1) throw InvariantError(where + "node not reachable exactly once");
    if (trees[t].depth() > max_depth) throw InvariantError(where + "depth exceeds max_depth");
  }
}

std::vector<int> Forest::votes(std::span<const double> sample) const {
  if (static_cast<int>(sample.size()) != n_features)
    throw DataError("sample has " + std::to_string(sample.size()) + " features, forest expects " +
                    std::to_string(n_features));
  std::vector<int> counts(n_classes, 0);
  for (const auto& tree : trees) ++counts[tree.predict(sample)];
  return counts;
}

int Forest::predict(std::span<const double> sample) const { return argmax_lowest(votes(sample)); }

int Forest::leaf_count() const {
  int n = 0;
  for (const auto& t : trees) n += t.leaf_count();
  return n;
}

int Forest::internal_count() const {
  int n = 0;
  for (const auto& t : trees) n += t.internal_count();
  return n;
}

double software_accuracy(const Forest& forest, const Dataset& data) {
  if (data.empty()) throw DataError("accuracy of an empty dataset");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i)
    correct += forest.predict(data.row(i)) == data.label(i);
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

// ---------------------------------------------------------------- trainer

namespace {

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double score = -1.0;  // sum of per-side sum(c^2)/n; larger is purer
};

class TreeBuilder {
 public:
  TreeBuilder(const Dataset& data, int max_depth, int max_features, bool shuffle_features, Rng rng)
      : data_(data),
        max_depth_(max_depth),
        max_features_(max_features),
        shuffle_features_(shuffle_features),
        rng_(std::move(rng)) {}

  Tree build(std::vector<std::size_t> samples) {
    tree_.nodes.clear();
    grow(samples, 0);
    return std::move(tree_);
  }

 private:
  int grow(std::vector<std::size_t>& samples, int depth) {
    std::vector<int> counts(data_.n_classes(), 0);
    for (auto i : samples) ++counts[data_.label(i)];
    const int label = argmax_lowest(counts);
    const int node = static_cast<int>(tree_.nodes.size());
    tree_.nodes.push_back(TreeNode::leaf(label));

    const bool pure = counts[label] == static_cast<int>(samples.size());
    if (depth >= max_depth_ || pure || samples.size() < 2) return node;

    const Split split = best_split(samples);
    if (split.feature < 0) return node;

    std::vector<std::size_t> left, right;
    for (auto i : samples)
      (data_.row(i)[split.feature] <= split.threshold ? left : right).push_back(i);
    samples.clear();
    samples.shrink_to_fit();

    const int l = grow(left, depth + 1);
    const int r = grow(right, depth + 1);
    auto& n = tree_.nodes[node];
    n.feature = split.feature;
    n.threshold = split.threshold;
    n.left = l;
    n.right = r;
    n.class_label = -1;
    return node;
  }

  Split best_split(const std::vector<std::size_t>& samples) {
    const int n_features = data_.n_features();
    std::vector<int> order(n_features);
    std::iota(order.begin(), order.end(), 0);
    if (shuffle_features_) std::shuffle(order.begin(), order.end(), rng_);

    Split best;
    std::vector<std::pair<double, int>> column(samples.size());
    std::vector<int> left(data_.n_classes()), right(data_.n_classes());
    int tried = 0;
    for (int f : order) {
      // Keep drawing features past max_features only while nothing splits.
      if (tried >= max_features_ && best.feature >= 0) break;
      ++tried;
      for (std::size_t k = 0; k < samples.size(); ++k)
        column[k] = {data_.row(samples[k])[f], data_.label(samples[k])};
      std::sort(column.begin(), column.end());
      std::fill(left.begin(), left.end(), 0);
      std::fill(right.begin(), right.end(), 0);
      for (auto& [v, c] : column) ++right[c];
      double sq_left = 0.0;
      double sq_right = 0.0;
      for (int c : right) sq_right += static_cast<double>(c) * c;
      const auto n = column.size();
      for (std::size_t k = 0; k + 1 < n; ++k) {
        const int c = column[k].second;
        sq_left += 2.0 * left[c] + 1.0;
        sq_right -= 2.0 * right[c] - 1.0;
        ++left[c];
        --right[c];
        const double a = column[k].first;
        const double b = column[k + 1].first;
        if (!(a < b)) continue;
        const double nl = static_cast<double>(k + 1);
        const double nr = static_cast<double>(n - k - 1);
        const double score = sq_left / nl + sq_right / nr;
        if (score > best.score) {
          double mid = a + (b - a) / 2.0;
          if (!(mid < b)) mid = a;
          best = {f, mid, score};
        }
      }
    }
    return best;
  }

  const Dataset& data_;
  int max_depth_;
  int max_features_;
  bool shuffle_features_;
  Rng rng_;
  Tree tree_;
};

void check_training_input(const Dataset& data, int max_depth) {
  if (data.empty()) throw DataError("cannot train on an empty dataset");
  if (max_depth < 0) throw ConfigError("max_depth must be >= 0");
}

}  // namespace

Forest train_forest(const Dataset& data, const ForestParams& params) {
  check_training_input(data, params.max_depth);
  if (params.n_trees < 1) throw ConfigError("n_trees must be >= 1");
  const int n_features = data.n_features();
  int max_features = params.max_features;
  if (max_features <= 0)
    max_features = std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(n_features)))));
  max_features = std::min(max_features, n_features);

  Forest forest;
  forest.n_classes = data.n_classes();
  forest.n_features = n_features;
  forest.max_depth = params.max_depth;
  forest.trees.resize(params.n_trees);

  parallel_for(static_cast<std::size_t>(params.n_trees), params.threads, [&](std::size_t t) {
    auto rng = substream(params.seed, {0x7a11, t});
    std::vector<std::size_t> samples(data.size());
    if (params.bootstrap) {
      std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
      for (auto& s : samples) s = pick(rng);
    } else {
      std::iota(samples.begin(), samples.end(), 0);
    }
    TreeBuilder builder(data, params.max_depth, max_features, max_features < n_features,
                        std::move(rng));
    forest.trees[t] = builder.build(std::move(samples));
  });
  return forest;
}

Forest train_decision_tree(const Dataset& data, int max_depth) {
  ForestParams params;
  params.n_trees = 1;
  params.max_depth = max_depth;
  params.bootstrap = false;
  params.max_features = data.n_features();
  return train_forest(data, params);
}

// -------------------------------------------------------------- model I/O

namespace {

using ordered_json = nlohmann::ordered_json;

const ordered_json& require(const ordered_json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key))
    throw DataError("model document: " + where + "missing '" + key + "'");
  return obj.at(key);
}

template <typename T>
T get_as(const ordered_json& value, const char* key, const std::string& where) {
  try {
    return value.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw DataError("model document: " + where + "'" + key + "' has the wrong type");
  }
}

}  // namespace

std::string forest_to_json(const Forest& forest) {
  ordered_json doc;
  doc["schema"] = "camrf.forest";
  doc["version"] = kModelVersion;
  doc["n_features"] = forest.n_features;
  doc["n_classes"] = forest.n_classes;
  doc["hyperparams"] = {{"n_trees", forest.trees.size()}, {"max_depth", forest.max_depth}};
  ordered_json trees = ordered_json::array();
  for (const auto& tree : forest.trees) {
    ordered_json nodes = ordered_json::array();
    for (const auto& n : tree.nodes) {
      ordered_json node;
      if (n.is_leaf()) {
        node["kind"] = "leaf";
        node["class"] = n.class_label;
      } else {
        node["kind"] = "internal";
        node["feature"] = n.feature;
        node["threshold"] = n.threshold;
        node["left"] = n.left;
        node["right"] = n.right;
      }
      nodes.push_back(std::move(node));
    }
    trees.push_back({{"nodes", std::move(nodes)}});
  }
  doc["trees"] = std::move(trees);
  return doc.dump(1) + "\n";
}

Forest forest_from_json(const std::string& text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("model document: ") + e.what());
  }
  if (get_as<std::string>(require(doc, "schema", ""), "schema", "") != "camrf.forest")
    throw DataError("model document: schema is not camrf.forest");
  const int version = get_as<int>(require(doc, "version", ""), "version", "");
  if (version != kModelVersion)
    throw DataError("model document: unsupported version " + std::to_string(version));

  Forest forest;
  forest.n_features = get_as<int>(require(doc, "n_features", ""), "n_features", "");
  forest.n_classes = get_as<int>(require(doc, "n_classes", ""), "n_classes", "");
  const auto& hp = require(doc, "hyperparams", "");
  forest.max_depth = get_as<int>(require(hp, "max_depth", "hyperparams: "), "max_depth", "");
  const auto& trees = require(doc, "trees", "");
  if (!trees.is_array()) throw DataError("model document: 'trees' must be an array");
  const auto n_trees = get_as<std::size_t>(require(hp, "n_trees", "hyperparams: "), "n_trees", "");
  if (n_trees != trees.size())
    throw DataError("model document: hyperparams.n_trees does not match tree count");

  for (std::size_t t = 0; t < trees.size(); ++t) {
    const std::string where = "tree " + std::to_string(t) + ": ";
    const auto& nodes = require(trees[t], "nodes", where);
    if (!nodes.is_array()) throw DataError("model document: " + where + "'nodes' must be an array");
    Tree tree;
    for (const auto& node : nodes) {
      const auto kind = get_as<std::string>(require(node, "kind", where), "kind", where);
      if (kind == "leaf") {
        tree.nodes.push_back(TreeNode::leaf(get_as<int>(require(node, "class", where), "class", where)));
      } else if (kind == "internal") {
        TreeNode n;
        n.feature = get_as<int>(require(node, "feature", where), "feature", where);
        n.threshold = get_as<double>(require(node, "threshold", where), "threshold", where);
        n.left = get_as<int>(require(node, "left", where), "left", where);
        n.right = get_as<int>(require(node, "right", where), "right", where);
        if (n.left < 0) throw DataError("model document: " + where + "negative child index");
        tree.nodes.push_back(n);
      } else {
        throw DataError("model document: " + where + "unknown node kind '" + kind + "'");
      }
    }
    forest.trees.push_back(std::move(tree));
  }
  try {
    forest.validate();
  } catch (const InvariantError& e) {
    throw DataError(std::string("model document: ") + e.what());
  }
  return forest;
}

}  // namespace camrf
