#include "ctsnas/gbdt/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace ctsnas::gbdt {

double Tree::predict(const std::vector<double>& x) const {
  int i = 0;
  while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
    const TreeNode& n = nodes[static_cast<std::size_t>(i)];
    i = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
  }
  return nodes[static_cast<std::size_t>(i)].value;
}

int Tree::leaf_count() const {
  int c = 0;
  for (const auto& n : nodes)
    if (n.feature < 0) ++c;
  return c;
}

namespace {

struct Split {
  bool found = false;
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

struct LeafState {
  std::vector<int> members;
  double sum = 0.0;
  int node = -1;  // index into tree nodes
  Split best;
};

Split best_split(const std::vector<std::vector<double>>& rows, const std::vector<double>& grad,
                 const LeafState& leaf, const GbdtConfig& cfg) {
  Split best;
  const int n = static_cast<int>(leaf.members.size());
  if (n < 2 * cfg.min_samples_leaf) return best;
  const double parent_score = leaf.sum * leaf.sum / n;
  const int n_features = static_cast<int>(rows.front().size());
  std::vector<int> order(leaf.members);
  for (int f = 0; f < n_features; ++f) {
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      const double va = rows[static_cast<std::size_t>(a)][static_cast<std::size_t>(f)];
      const double vb = rows[static_cast<std::size_t>(b)][static_cast<std::size_t>(f)];
      if (va != vb) return va < vb;
      return a < b;
    });
    double left_sum = 0.0;
    for (int i = 0; i + 1 < n; ++i) {
      left_sum += grad[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
      const double v = rows[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])][static_cast<std::size_t>(f)];
      const double v_next = rows[static_cast<std::size_t>(order[static_cast<std::size_t>(i + 1)])][static_cast<std::size_t>(f)];
      if (v == v_next) continue;
      const int nl = i + 1, nr = n - nl;
      if (nl < cfg.min_samples_leaf || nr < cfg.min_samples_leaf) continue;
      const double right_sum = leaf.sum - left_sum;
      const double gain = left_sum * left_sum / nl + right_sum * right_sum / nr - parent_score;
      const double threshold = 0.5 * (v + v_next);
      // strict improvement only: scanning features then thresholds in
      // ascending order makes ties resolve to the lowest feature index and
      // lowest threshold
      if (gain > best.gain + 1e-15 && gain > cfg.min_gain) {
        best.found = true;
        best.feature = f;
        best.threshold = threshold;
        best.gain = gain;
      }
    }
  }
  return best;
}

Tree fit_tree(const std::vector<std::vector<double>>& rows, const std::vector<double>& grad,
              const GbdtConfig& cfg) {
  Tree tree;
  const int n = static_cast<int>(rows.size());
  LeafState root;
  root.members.resize(static_cast<std::size_t>(n));
  std::iota(root.members.begin(), root.members.end(), 0);
  root.sum = std::accumulate(grad.begin(), grad.end(), 0.0);
  tree.nodes.push_back(TreeNode{-1, 0.0, -1, -1, root.sum / n});
  root.node = 0;
  root.best = best_split(rows, grad, root, cfg);

  std::vector<LeafState> leaves;
  leaves.push_back(std::move(root));
  int n_leaves = 1;
  while (n_leaves < cfg.max_leaves) {
    // split the leaf with the largest gain; ties go to the oldest leaf
    int pick = -1;
    for (int i = 0; i < static_cast<int>(leaves.size()); ++i) {
      if (!leaves[static_cast<std::size_t>(i)].best.found) continue;
      if (pick < 0 ||
          leaves[static_cast<std::size_t>(i)].best.gain > leaves[static_cast<std::size_t>(pick)].best.gain + 1e-15)
        pick = i;
    }
    if (pick < 0) break;
    LeafState leaf = std::move(leaves[static_cast<std::size_t>(pick)]);
    leaves.erase(leaves.begin() + pick);

    LeafState left, right;
    for (int idx : leaf.members) {
      const double v = rows[static_cast<std::size_t>(idx)][static_cast<std::size_t>(leaf.best.feature)];
      if (v <= leaf.best.threshold) {
        left.members.push_back(idx);
        left.sum += grad[static_cast<std::size_t>(idx)];
      } else {
        right.members.push_back(idx);
        right.sum += grad[static_cast<std::size_t>(idx)];
      }
    }
    const int left_idx = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back(
        TreeNode{-1, 0.0, -1, -1, left.sum / static_cast<double>(left.members.size())});
    const int right_idx = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back(
        TreeNode{-1, 0.0, -1, -1, right.sum / static_cast<double>(right.members.size())});
    TreeNode& parent = tree.nodes[static_cast<std::size_t>(leaf.node)];
    parent.feature = leaf.best.feature;
    parent.threshold = leaf.best.threshold;
    parent.value = 0.0;
    parent.left = left_idx;
    parent.right = right_idx;
    left.node = left_idx;
    right.node = right_idx;
    left.best = best_split(rows, grad, left, cfg);
    right.best = best_split(rows, grad, right, cfg);
    leaves.push_back(std::move(left));
    leaves.push_back(std::move(right));
    ++n_leaves;
  }
  return tree;
}

}  // namespace

GbdtModel fit(const std::vector<std::vector<double>>& rows, const std::vector<double>& labels,
              const GbdtConfig& cfg) {
  if (rows.size() < 2) throw std::invalid_argument("gbdt fit: need at least 2 rows");
  if (rows.size() != labels.size())
    throw std::invalid_argument("gbdt fit: row and label counts differ");
  const int n = static_cast<int>(rows.size());
  const int n_features = static_cast<int>(rows.front().size());
  for (const auto& r : rows)
    if (static_cast<int>(r.size()) != n_features)
      throw std::invalid_argument("gbdt fit: inconsistent feature lengths");
  for (double y : labels)
    if (!std::isfinite(y)) throw std::invalid_argument("gbdt fit: non-finite label");

  GbdtModel m;
  m.n_features_ = n_features;
  m.learning_rate_ = cfg.learning_rate;

  double mean = std::accumulate(labels.begin(), labels.end(), 0.0) / n;
  double var = 0.0;
  for (double y : labels) var += (y - mean) * (y - mean);
  var /= n;
  m.label_mean_ = mean;
  m.label_std_ = std::sqrt(var);

  if (m.label_std_ < 1e-15) {
    // all labels identical: base only
    m.label_std_ = 1.0;
    m.base_ = 0.0;
    m.curve_.push_back(0.0);
    return m;
  }

  std::vector<double> y(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) y[static_cast<std::size_t>(i)] = (labels[static_cast<std::size_t>(i)] - mean) / m.label_std_;
  m.base_ = 0.0;  // normalized labels have zero mean

  std::vector<double> residual = y;
  auto mse = [&]() {
    double s = 0.0;
    for (double r : residual) s += r * r;
    return s / n;
  };
  m.curve_.push_back(mse());
  for (int round = 0; round < cfg.n_trees; ++round) {
    if (m.curve_.back() < 1e-24) break;  // nothing left to fit
    Tree tree = fit_tree(rows, residual, cfg);
    if (tree.nodes.size() == 1 && std::abs(tree.nodes[0].value) < 1e-15) break;
    for (int i = 0; i < n; ++i)
      residual[static_cast<std::size_t>(i)] -= cfg.learning_rate * tree.predict(rows[static_cast<std::size_t>(i)]);
    m.trees_.push_back(std::move(tree));
    m.curve_.push_back(mse());
  }
  return m;
}

double GbdtModel::predict(const std::vector<double>& features) const {
  if (static_cast<int>(features.size()) != n_features_)
    throw std::invalid_argument("gbdt predict: expected " + std::to_string(n_features_) +
                                " features, got " + std::to_string(features.size()));
  double acc = base_;
  for (const Tree& t : trees_) acc += learning_rate_ * t.predict(features);
  return label_mean_ + label_std_ * acc;
}

std::string GbdtModel::to_text() const {
  nlohmann::json j;
  j["n_features"] = n_features_;
  j["label_mean"] = label_mean_;
  j["label_std"] = label_std_;
  j["base"] = base_;
  j["learning_rate"] = learning_rate_;
  nlohmann::json trees = nlohmann::json::array();
  for (const Tree& t : trees_) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const TreeNode& n : t.nodes)
      nodes.push_back({{"f", n.feature},
                       {"t", n.threshold},
                       {"l", n.left},
                       {"r", n.right},
                       {"v", n.value}});
    trees.push_back(nodes);
  }
  j["trees"] = trees;
  return j.dump(2);
}

GbdtModel GbdtModel::from_text(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  GbdtModel m;
  m.n_features_ = j.at("n_features").get<int>();
  m.label_mean_ = j.at("label_mean").get<double>();
  m.label_std_ = j.at("label_std").get<double>();
  m.base_ = j.at("base").get<double>();
  m.learning_rate_ = j.at("learning_rate").get<double>();
  for (const auto& tj : j.at("trees")) {
    Tree t;
    for (const auto& nj : tj)
      t.nodes.push_back(TreeNode{nj.at("f").get<int>(), nj.at("t").get<double>(),
                                 nj.at("l").get<int>(), nj.at("r").get<int>(),
                                 nj.at("v").get<double>()});
    m.trees_.push_back(std::move(t));
  }
  return m;
}

std::vector<double> comb_features(const searchspace::Comb& c) {
  std::vector<double> out;
  out.reserve(c.counts.size());
  for (int v : c.counts) out.push_back(static_cast<double>(v));
  return out;
}

std::vector<std::size_t> rank_combs(const GbdtModel& model,
                                    const std::vector<searchspace::Comb>& combs) {
  std::vector<std::size_t> order(combs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> pred(combs.size());
  for (std::size_t i = 0; i < combs.size(); ++i) pred[i] = model.predict(comb_features(combs[i]));
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (pred[a] != pred[b]) return pred[a] > pred[b];
    return combs[a].counts < combs[b].counts;
  });
  return order;
}

}  // namespace ctsnas::gbdt
