#ifndef CTSNAS_GBDT_GBDT_HPP
#define CTSNAS_GBDT_GBDT_HPP

#include "ctsnas/searchspace/genotype.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace ctsnas::gbdt {

struct GbdtConfig {
  int n_trees = 100;
  int max_leaves = 31;
  double learning_rate = 0.05;
  int min_samples_leaf = 1;
  double min_gain = 1e-12;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1, right = -1;
  double value = 0.0;
};

struct Tree {
  std::vector<TreeNode> nodes;
  double predict(const std::vector<double>& x) const;
  int leaf_count() const;
};

// Squared-error boosting with exact greedy splits and leaf-wise growth.
// Labels are standard-normalized internally; the statistics live in the model.
class GbdtModel {
 public:
  double predict(const std::vector<double>& features) const;

  int n_features() const { return n_features_; }
  const std::vector<Tree>& trees() const { return trees_; }
  // training MSE (normalized scale) after each boosting round, round 0 = base
  const std::vector<double>& training_curve() const { return curve_; }

  std::string to_text() const;
  static GbdtModel from_text(const std::string& text);

  friend GbdtModel fit(const std::vector<std::vector<double>>& rows,
                       const std::vector<double>& labels, const GbdtConfig& cfg);

 private:
  int n_features_ = 0;
  double label_mean_ = 0.0;
  double label_std_ = 1.0;
  double base_ = 0.0;  // normalized scale
  double learning_rate_ = 0.05;
  std::vector<Tree> trees_;
  std::vector<double> curve_;
};

GbdtModel fit(const std::vector<std::vector<double>>& rows, const std::vector<double>& labels,
              const GbdtConfig& cfg = {});

std::vector<double> comb_features(const searchspace::Comb& c);

// Indices into `combs` ordered by predicted EDF descending; ties broken by
// canonical (lexicographic) comb order so the result is independent of the
// input permutation.
std::vector<std::size_t> rank_combs(const GbdtModel& model,
                                    const std::vector<searchspace::Comb>& combs);

}  // namespace ctsnas::gbdt

#endif
