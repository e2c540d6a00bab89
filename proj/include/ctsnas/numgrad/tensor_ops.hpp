#ifndef CTSNAS_NUMGRAD_TENSOR_OPS_HPP
#define CTSNAS_NUMGRAD_TENSOR_OPS_HPP

#include "ctsnas/numgrad/tensor.hpp"

#include <vector>

namespace ctsnas::numgrad {

// Elementwise with numpy-style trailing broadcast (equal dims or 1).
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);

Tensor relu(const Tensor& x);
Tensor tanh_t(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor abs_t(const Tensor& x);
Tensor exp_t(const Tensor& x);

// Trailing two dims are matrix dims; leading dims broadcast when one side has
// none, otherwise they must match.
Tensor matmul(const Tensor& a, const Tensor& b);

// x: [..., C_in, L], w: [C_out, C_in, K]; zero left padding, causal when
// left_pad = dilation*(K-1). Output length L + left_pad - dilation*(K-1).
Tensor conv1d(const Tensor& x, const Tensor& w, int dilation, int left_pad);

Tensor softmax(const Tensor& x, int axis);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor sum_axis(const Tensor& x, int axis);
Tensor mean_axis(const Tensor& x, int axis);
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
Tensor gather(const Tensor& x, int axis, const std::vector<int>& idx);
Tensor reshape(const Tensor& x, Shape target);
Tensor permute(const Tensor& x, const std::vector<int>& perm);

// Sums g down to `target` (reverse of broadcasting); used by backward passes.
Tensor reduce_to_shape(const Tensor& g, const Shape& target);

// Scatter-add of g over gathered indices; reverse of gather.
void scatter_add(Tensor& into, const Tensor& g, int axis, const std::vector<int>& idx);

}  // namespace ctsnas::numgrad

#endif
