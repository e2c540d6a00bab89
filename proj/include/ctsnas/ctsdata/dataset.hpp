#ifndef CTSNAS_CTSDATA_DATASET_HPP
#define CTSNAS_CTSDATA_DATASET_HPP

#include "ctsnas/numgrad/tensor.hpp"

#include <Eigen/Core>
#include <array>
#include <memory>
#include <string>
#include <vector>

namespace ctsnas::ctsdata {

using numgrad::Tensor;

enum class Tag { multi, single };

std::string tag_name(Tag t);
Tag tag_from_name(const std::string& s);

// N correlated series over T timestamps with F feature channels; channel 0 is
// the forecast target. Immutable after construction.
class CtsDataset {
 public:
  CtsDataset(Tensor values, Eigen::MatrixXd adjacency, std::string name);

  int n_series() const { return values_.dim(0); }
  int t_len() const { return values_.dim(1); }
  int n_features() const { return values_.dim(2); }
  const Tensor& values() const { return values_; }
  const Eigen::MatrixXd& adjacency() const { return adjacency_; }
  const std::string& name() const { return name_; }

  double at(int series, int t, int feature = 0) const {
    return values_.at({series, t, feature});
  }

 private:
  Tensor values_;  // [N, T, F]
  Eigen::MatrixXd adjacency_;
  std::string name_;
};

struct ForecastTask {
  std::shared_ptr<const CtsDataset> data;
  int input_len = 12;   // P
  int horizon = 1;      // Q
  Tag tag = Tag::multi;
  std::array<double, 3> split = {0.6, 0.2, 0.2};
  std::string id;
};

struct SplitView {
  int begin = 0, end = 0;  // [begin, end) timestamps
  int len() const { return end - begin; }
};

struct DatasetSplits {
  SplitView train, val, test;
};

// Chronological, non-overlapping segments; every split must admit at least
// one (P, Q) window.
DatasetSplits split_dataset(const ForecastTask& task);

// Start offsets t such that the input [t, t+P) and target [t+P, t+P+Q) lie
// inside the view.
std::vector<int> window_starts(const SplitView& view, int input_len, int horizon);

// Assembles a batch from window starts. Input is [B, N, P, F]; target is
// [B, N, Q] for multi-step and [B, N] (step Q only) for single-step.
struct Batch {
  Tensor input;
  Tensor target;
};
Batch make_batch(const ForecastTask& task, const std::vector<int>& starts, std::size_t from,
                 std::size_t count);

}  // namespace ctsnas::ctsdata

#endif
