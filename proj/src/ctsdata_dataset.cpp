#include "ctsnas/ctsdata/dataset.hpp"

#include <cmath>
#include <stdexcept>

namespace ctsnas::ctsdata {

std::string tag_name(Tag t) { return t == Tag::multi ? "multi" : "single"; }

Tag tag_from_name(const std::string& s) {
  if (s == "multi") return Tag::multi;
  if (s == "single") return Tag::single;
  throw std::invalid_argument("unknown forecasting tag: " + s);
}

CtsDataset::CtsDataset(Tensor values, Eigen::MatrixXd adjacency, std::string name)
    : values_(std::move(values)), adjacency_(std::move(adjacency)), name_(std::move(name)) {
  if (values_.rank() != 3)
    throw std::invalid_argument("dataset values must be [N, T, F], got " +
                                numgrad::shape_str(values_.shape()));
  if (!values_.all_finite())
    throw std::invalid_argument("dataset " + name_ + " contains non-finite values");
  const int n = values_.dim(0);
  if (adjacency_.rows() != n || adjacency_.cols() != n)
    throw std::invalid_argument("adjacency must be " + std::to_string(n) + "x" +
                                std::to_string(n));
  if ((adjacency_.array() < 0).any())
    throw std::invalid_argument("adjacency must be nonnegative");
}

DatasetSplits split_dataset(const ForecastTask& task) {
  const auto& f = task.split;
  if (std::abs(f[0] + f[1] + f[2] - 1.0) > 1e-9)
    throw std::invalid_argument("split fractions must sum to 1");
  const int t_len = task.data->t_len();
  const int b1 = static_cast<int>(std::floor(f[0] * t_len));
  const int b2 = static_cast<int>(std::floor((f[0] + f[1]) * t_len));
  DatasetSplits s;
  s.train = {0, b1};
  s.val = {b1, b2};
  s.test = {b2, t_len};
  const int need = task.input_len + task.horizon;
  auto check = [&](const SplitView& v, const char* nm) {
    if (v.len() < need)
      throw std::invalid_argument(std::string(nm) + " split of " + task.data->name() +
                                  " has no room for a P+Q window (" + std::to_string(v.len()) +
                                  " < " + std::to_string(need) + ")");
  };
  check(s.train, "train");
  check(s.val, "val");
  check(s.test, "test");
  return s;
}

std::vector<int> window_starts(const SplitView& view, int input_len, int horizon) {
  std::vector<int> out;
  const int last = view.end - input_len - horizon;
  for (int t = view.begin; t <= last; ++t) out.push_back(t);
  return out;
}

Batch make_batch(const ForecastTask& task, const std::vector<int>& starts, std::size_t from,
                 std::size_t count) {
  const CtsDataset& d = *task.data;
  const int n = d.n_series(), p = task.input_len, q = task.horizon, f = d.n_features();
  const int b = static_cast<int>(count);
  Batch out;
  out.input = Tensor({b, n, p, f});
  out.target = task.tag == Tag::multi ? Tensor({b, n, q}) : Tensor({b, n});
  for (int i = 0; i < b; ++i) {
    const int t0 = starts.at(from + static_cast<std::size_t>(i));
    for (int s = 0; s < n; ++s) {
      for (int t = 0; t < p; ++t)
        for (int c = 0; c < f; ++c)
          out.input.at({i, s, t, c}) = d.at(s, t0 + t, c);
      if (task.tag == Tag::multi) {
        for (int h = 0; h < q; ++h) out.target.at({i, s, h}) = d.at(s, t0 + p + h, 0);
      } else {
        out.target.at({i, s}) = d.at(s, t0 + p + q - 1, 0);
      }
    }
  }
  return out;
}

}  // namespace ctsnas::ctsdata
