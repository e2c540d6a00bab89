#ifndef CTSNAS_NUMGRAD_TENSOR_HPP
#define CTSNAS_NUMGRAD_TENSOR_HPP

#include <Eigen/Core>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctsnas::numgrad {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct StateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline long shape_numel(const Shape& s) {
  long n = 1;
  for (int d : s) n *= d;
  return n;
}

// Dense row-major tensor of doubles. Rank 0 is a scalar (numel 1).
class Tensor {
 public:
  Tensor() : shape_{}, data_(1) { data_.setZero(); }
  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_)) {
    check_shape();
    data_.setZero();
  }
  Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_numel(shape_)) {
    check_shape();
    data_.setConstant(fill);
  }
  Tensor(Shape shape, const std::vector<double>& vals)
      : shape_(std::move(shape)), data_(shape_numel(shape_)) {
    check_shape();
    if (static_cast<long>(vals.size()) != data_.size())
      throw ShapeError("tensor init: " + std::to_string(vals.size()) + " values for shape " +
                       shape_str(shape_));
    for (long i = 0; i < data_.size(); ++i) data_[i] = vals[static_cast<std::size_t>(i)];
  }

  static Tensor scalar(double v) {
    Tensor t;
    t.data_[0] = v;
    return t;
  }
  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor ones(Shape s) { return Tensor(std::move(s), 1.0); }
  static Tensor zeros_like(const Tensor& o) { return Tensor(o.shape_); }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  long numel() const { return data_.size(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  Eigen::ArrayXd& flat() { return data_; }
  const Eigen::ArrayXd& flat() const { return data_; }

  double& operator[](long i) { return data_[i]; }
  double operator[](long i) const { return data_[i]; }

  double value() const {
    if (numel() != 1)
      throw ShapeError("scalar value requested from tensor of shape " + shape_str(shape_));
    return data_[0];
  }

  double& at(std::initializer_list<int> idx) { return data_[offset(idx)]; }
  double at(std::initializer_list<int> idx) const { return data_[offset(idx)]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const { return data_.allFinite(); }

  bool requires_grad = false;

 private:
  void check_shape() const {
    for (int d : shape_)
      if (d <= 0) throw ShapeError("nonpositive dimension in shape " + shape_str(shape_));
  }
  long offset(std::initializer_list<int> idx) const {
    if (static_cast<int>(idx.size()) != rank())
      throw ShapeError("index rank mismatch for shape " + shape_str(shape_));
    long off = 0;
    int i = 0;
    for (int v : idx) {
      off = off * shape_[static_cast<std::size_t>(i)] + v;
      ++i;
    }
    return off;
  }

  Shape shape_;
  Eigen::ArrayXd data_;
};

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

// views the trailing two dimensions as a matrix at batch offset b
inline ConstMatMap mat_view(const Tensor& t, long b, int rows, int cols) {
  return ConstMatMap(t.data() + b * rows * cols, rows, cols);
}
inline MatMap mat_view(Tensor& t, long b, int rows, int cols) {
  return MatMap(t.data() + b * rows * cols, rows, cols);
}

}  // namespace ctsnas::numgrad

#endif
