#ifndef CTSNAS_NUMGRAD_GRAPH_HPP
#define CTSNAS_NUMGRAD_GRAPH_HPP

#include "ctsnas/numgrad/tensor.hpp"
#include "ctsnas/numgrad/tensor_ops.hpp"

#include <map>
#include <string>
#include <vector>

namespace ctsnas::numgrad {

// Reverse-mode autodiff over a tape of primitive ops. Ops evaluate eagerly as
// they are recorded; leaf values can be replaced with set_value() and the tape
// re-evaluated with forward(), so one tape serves a whole training loop.
// A tape is confined to one thread.
class Graph {
 public:
  using NodeId = int;

  enum class Op : unsigned char {
    Value, Param, Add, Mul, Scale, MatMul, Conv1d, Relu, Tanh, Sigmoid, Abs, Exp,
    Softmax, Concat, SumAxis, MeanAxis, SumAll, MeanAll, Gather, Reshape, Permute
  };

  NodeId value(Tensor t);                        // constant leaf
  NodeId param(const std::string& name, Tensor t);  // differentiable leaf

  NodeId add(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double c);
  NodeId matmul(NodeId a, NodeId b);
  NodeId conv1d(NodeId x, NodeId w, int dilation, int left_pad);
  NodeId relu(NodeId x);
  NodeId tanh_(NodeId x);
  NodeId sigmoid(NodeId x);
  NodeId abs_(NodeId x);
  NodeId exp_(NodeId x);
  NodeId softmax(NodeId x, int axis);
  NodeId concat(const std::vector<NodeId>& parts, int axis);
  NodeId sum_axis(NodeId x, int axis);
  NodeId mean_axis(NodeId x, int axis);
  NodeId sum_all(NodeId x);
  NodeId mean_all(NodeId x);
  NodeId gather(NodeId x, int axis, std::vector<int> idx);
  NodeId reshape(NodeId x, Shape target);
  NodeId permute(NodeId x, std::vector<int> perm);

  // compositions
  NodeId sub(NodeId a, NodeId b) { return add(a, scale(b, -1.0)); }
  NodeId square(NodeId a) { return mul(a, a); }
  NodeId mse(NodeId pred, NodeId target) { return mean_all(square(sub(pred, target))); }
  NodeId mae(NodeId pred, NodeId target) { return mean_all(abs_(sub(pred, target))); }
  NodeId linear(NodeId x, NodeId w, NodeId b) { return add(matmul(x, w), b); }

  const Tensor& tensor(NodeId id) const { return nodes_[check(id)].value; }
  const Shape& shape_of(NodeId id) const { return nodes_[check(id)].value.shape(); }

  // Replace a leaf's value (same shape) and mark the tape stale.
  void set_value(NodeId leaf, const Tensor& t);
  // Re-evaluate every node in recording order; clears staleness.
  void forward();

  void backward(NodeId loss);
  const Tensor& grad(NodeId id) const;
  bool has_grad(NodeId id) const { return nodes_[check(id)].needs_grad; }
  std::map<std::string, Tensor> param_grads() const;
  void zero_grad();
  void clear();
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Op op = Op::Value;
    NodeId a = -1, b = -1;
    std::vector<NodeId> many;   // concat inputs
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    bool grad_live = false;
    int axis = 0;
    int i0 = 0, i1 = 0;         // conv dilation / left_pad
    double c = 0.0;             // scale factor
    std::vector<int> ints;      // gather indices / permutation / reshape target
    std::string name;           // param leaves
  };

  std::size_t check(NodeId id) const;
  NodeId push(Node n);
  Tensor eval(const Node& n) const;
  void accumulate(NodeId id, const Tensor& g);
  void backprop_node(std::size_t i);

  std::vector<Node> nodes_;
  bool stale_ = false;
  bool swept_ = false;
};

}  // namespace ctsnas::numgrad

#endif
