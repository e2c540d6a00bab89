#include "ctsnas/numgrad/graph.hpp"

#include <cmath>

namespace ctsnas::numgrad {

std::size_t Graph::check(NodeId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
    throw StateError("node id " + std::to_string(id) + " not in graph");
  return static_cast<std::size_t>(id);
}

Graph::NodeId Graph::push(Node n) {
  if (n.op != Op::Value && n.op != Op::Param) {
    n.needs_grad = false;
    if (n.a >= 0) n.needs_grad = n.needs_grad || nodes_[check(n.a)].needs_grad;
    if (n.b >= 0) n.needs_grad = n.needs_grad || nodes_[check(n.b)].needs_grad;
    for (NodeId m : n.many) n.needs_grad = n.needs_grad || nodes_[check(m)].needs_grad;
    n.value = eval(n);
  }
  nodes_.push_back(std::move(n));
  swept_ = false;
  return static_cast<NodeId>(nodes_.size() - 1);
}

Tensor Graph::eval(const Node& n) const {
  auto V = [&](NodeId id) -> const Tensor& { return nodes_[static_cast<std::size_t>(id)].value; };
  switch (n.op) {
    case Op::Value:
    case Op::Param:
      return n.value;
    case Op::Add: return numgrad::add(V(n.a), V(n.b));
    case Op::Mul: return numgrad::mul(V(n.a), V(n.b));
    case Op::Scale: return numgrad::scale(V(n.a), n.c);
    case Op::MatMul: return numgrad::matmul(V(n.a), V(n.b));
    case Op::Conv1d: return numgrad::conv1d(V(n.a), V(n.b), n.i0, n.i1);
    case Op::Relu: return numgrad::relu(V(n.a));
    case Op::Tanh: return numgrad::tanh_t(V(n.a));
    case Op::Sigmoid: return numgrad::sigmoid(V(n.a));
    case Op::Abs: return numgrad::abs_t(V(n.a));
    case Op::Exp: return numgrad::exp_t(V(n.a));
    case Op::Softmax: return numgrad::softmax(V(n.a), n.axis);
    case Op::Concat: {
      std::vector<Tensor> parts;
      parts.reserve(n.many.size());
      for (NodeId m : n.many) parts.push_back(V(m));
      return numgrad::concat(parts, n.axis);
    }
    case Op::SumAxis: return numgrad::sum_axis(V(n.a), n.axis);
    case Op::MeanAxis: return numgrad::mean_axis(V(n.a), n.axis);
    case Op::SumAll: return numgrad::sum_all(V(n.a));
    case Op::MeanAll: return numgrad::mean_all(V(n.a));
    case Op::Gather: return numgrad::gather(V(n.a), n.axis, n.ints);
    case Op::Reshape: {
      Shape s(n.ints.begin(), n.ints.end());
      return numgrad::reshape(V(n.a), s);
    }
    case Op::Permute: return numgrad::permute(V(n.a), n.ints);
  }
  throw StateError("unknown op");
}

Graph::NodeId Graph::value(Tensor t) {
  Node n;
  n.op = Op::Value;
  n.needs_grad = t.requires_grad;
  n.value = std::move(t);
  return push(std::move(n));
}

Graph::NodeId Graph::param(const std::string& name, Tensor t) {
  Node n;
  n.op = Op::Param;
  t.requires_grad = true;
  n.value = std::move(t);
  n.needs_grad = true;
  n.name = name;
  return push(std::move(n));
}

Graph::NodeId Graph::add(NodeId a, NodeId b) {
  Node n; n.op = Op::Add; n.a = a; n.b = b; return push(std::move(n));
}
Graph::NodeId Graph::mul(NodeId a, NodeId b) {
  Node n; n.op = Op::Mul; n.a = a; n.b = b; return push(std::move(n));
}
Graph::NodeId Graph::scale(NodeId a, double c) {
  Node n; n.op = Op::Scale; n.a = a; n.c = c; return push(std::move(n));
}
Graph::NodeId Graph::matmul(NodeId a, NodeId b) {
  Node n; n.op = Op::MatMul; n.a = a; n.b = b; return push(std::move(n));
}
Graph::NodeId Graph::conv1d(NodeId x, NodeId w, int dilation, int left_pad) {
  Node n; n.op = Op::Conv1d; n.a = x; n.b = w; n.i0 = dilation; n.i1 = left_pad;
  return push(std::move(n));
}
Graph::NodeId Graph::relu(NodeId x) { Node n; n.op = Op::Relu; n.a = x; return push(std::move(n)); }
Graph::NodeId Graph::tanh_(NodeId x) { Node n; n.op = Op::Tanh; n.a = x; return push(std::move(n)); }
Graph::NodeId Graph::sigmoid(NodeId x) { Node n; n.op = Op::Sigmoid; n.a = x; return push(std::move(n)); }
Graph::NodeId Graph::abs_(NodeId x) { Node n; n.op = Op::Abs; n.a = x; return push(std::move(n)); }
Graph::NodeId Graph::exp_(NodeId x) { Node n; n.op = Op::Exp; n.a = x; return push(std::move(n)); }
Graph::NodeId Graph::softmax(NodeId x, int axis) {
  Node n; n.op = Op::Softmax; n.a = x; n.axis = axis; return push(std::move(n));
}
Graph::NodeId Graph::concat(const std::vector<NodeId>& parts, int axis) {
  Node n; n.op = Op::Concat; n.many = parts; n.axis = axis; return push(std::move(n));
}
Graph::NodeId Graph::sum_axis(NodeId x, int axis) {
  Node n; n.op = Op::SumAxis; n.a = x; n.axis = axis; return push(std::move(n));
}
Graph::NodeId Graph::mean_axis(NodeId x, int axis) {
  Node n; n.op = Op::MeanAxis; n.a = x; n.axis = axis; return push(std::move(n));
}
Graph::NodeId Graph::sum_all(NodeId x) { Node n; n.op = Op::SumAll; n.a = x; return push(std::move(n)); }
Graph::NodeId Graph::mean_all(NodeId x) { Node n; n.op = Op::MeanAll; n.a = x; return push(std::move(n)); }
Graph::NodeId Graph::gather(NodeId x, int axis, std::vector<int> idx) {
  Node n; n.op = Op::Gather; n.a = x; n.axis = axis; n.ints = std::move(idx);
  return push(std::move(n));
}
Graph::NodeId Graph::reshape(NodeId x, Shape target) {
  Node n; n.op = Op::Reshape; n.a = x; n.ints.assign(target.begin(), target.end());
  return push(std::move(n));
}
Graph::NodeId Graph::permute(NodeId x, std::vector<int> perm) {
  Node n; n.op = Op::Permute; n.a = x; n.ints = std::move(perm);
  return push(std::move(n));
}

void Graph::set_value(NodeId leaf, const Tensor& t) {
  Node& n = nodes_[check(leaf)];
  if (n.op != Op::Value && n.op != Op::Param)
    throw StateError("set_value on non-leaf node");
  if (n.value.shape() != t.shape())
    throw ShapeError("set_value: shape " + shape_str(t.shape()) + " does not match leaf shape " +
                     shape_str(n.value.shape()));
  const bool rg = n.value.requires_grad;
  n.value = t;
  n.value.requires_grad = rg;
  stale_ = true;
}

void Graph::forward() {
  if (!stale_) return;
  for (Node& n : nodes_) {
    if (n.op == Op::Value || n.op == Op::Param) continue;
    n.value = eval(n);
  }
  stale_ = false;
  swept_ = false;
}

void Graph::accumulate(NodeId id, const Tensor& g) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.needs_grad) return;
  if (!n.grad_live) {
    n.grad = g;
    n.grad_live = true;
  } else {
    n.grad.flat() += g.flat();
  }
}

void Graph::backward(NodeId loss) {
  const std::size_t li = check(loss);
  if (stale_) throw StateError("backward before forward: leaf values changed, call forward() first");
  if (swept_) throw StateError("backward called twice without zero_grad()");
  if (nodes_[li].value.numel() != 1)
    throw ShapeError("backward: loss must be scalar, got shape " +
                     shape_str(nodes_[li].value.shape()));
  for (Node& n : nodes_) {
    n.grad_live = false;
  }
  Tensor seed(nodes_[li].value.shape());
  seed.flat().setConstant(1.0);
  accumulate(loss, seed);
  for (std::size_t i = li + 1; i-- > 0;) {
    backprop_node(i);
  }
  swept_ = true;
}

void Graph::backprop_node(std::size_t i) {
  Node& n = nodes_[i];
  if (!n.needs_grad || !n.grad_live) return;
  auto V = [&](NodeId id) -> const Tensor& { return nodes_[static_cast<std::size_t>(id)].value; };
  const Tensor& go = n.grad;
  switch (n.op) {
    case Op::Value:
    case Op::Param:
      return;
    case Op::Add: {
      accumulate(n.a, reduce_to_shape(go, V(n.a).shape()));
      accumulate(n.b, reduce_to_shape(go, V(n.b).shape()));
      return;
    }
    case Op::Mul: {
      if (nodes_[static_cast<std::size_t>(n.a)].needs_grad)
        accumulate(n.a, reduce_to_shape(numgrad::mul(go, V(n.b)), V(n.a).shape()));
      if (nodes_[static_cast<std::size_t>(n.b)].needs_grad)
        accumulate(n.b, reduce_to_shape(numgrad::mul(go, V(n.a)), V(n.b).shape()));
      return;
    }
    case Op::Scale: {
      accumulate(n.a, numgrad::scale(go, n.c));
      return;
    }
    case Op::MatMul: {
      const Tensor& A = V(n.a);
      const Tensor& B = V(n.b);
      const int m = A.dim(A.rank() - 2), k = A.dim(A.rank() - 1), nn = B.dim(B.rank() - 1);
      const long ba = A.numel() / (static_cast<long>(m) * k);
      const long bb = B.numel() / (static_cast<long>(k) * nn);
      const long batch = std::max(ba, bb);
      if (nodes_[static_cast<std::size_t>(n.a)].needs_grad) {
        Tensor ga(A.shape());
        for (long t = 0; t < batch; ++t) {
          ConstMatMap G = mat_view(go, t, m, nn);
          ConstMatMap Bm = mat_view(B, bb == 1 ? 0 : t, k, nn);
          if (ba == 1)
            mat_view(ga, 0, m, k).noalias() += G * Bm.transpose();
          else
            mat_view(ga, t, m, k).noalias() = G * Bm.transpose();
        }
        accumulate(n.a, ga);
      }
      if (nodes_[static_cast<std::size_t>(n.b)].needs_grad) {
        Tensor gb(B.shape());
        for (long t = 0; t < batch; ++t) {
          ConstMatMap G = mat_view(go, t, m, nn);
          ConstMatMap Am = mat_view(A, ba == 1 ? 0 : t, m, k);
          if (bb == 1)
            mat_view(gb, 0, k, nn).noalias() += Am.transpose() * G;
          else
            mat_view(gb, t, k, nn).noalias() = Am.transpose() * G;
        }
        accumulate(n.b, gb);
      }
      return;
    }
    case Op::Conv1d: {
      const Tensor& X = V(n.a);
      const Tensor& W = V(n.b);
      const int c_in = X.dim(X.rank() - 2), len = X.dim(X.rank() - 1);
      const int c_out = W.dim(0), k = W.dim(2);
      const int dilation = n.i0, left_pad = n.i1;
      const int l_out = len + left_pad - dilation * (k - 1);
      const long batch = X.numel() / (static_cast<long>(c_in) * len);
      std::vector<RowMat> taps(static_cast<std::size_t>(k), RowMat(c_out, c_in));
      for (int tap = 0; tap < k; ++tap)
        for (int co = 0; co < c_out; ++co)
          for (int ci = 0; ci < c_in; ++ci)
            taps[static_cast<std::size_t>(tap)](co, ci) = W[(static_cast<long>(co) * c_in + ci) * k + tap];
      const bool need_x = nodes_[static_cast<std::size_t>(n.a)].needs_grad;
      const bool need_w = nodes_[static_cast<std::size_t>(n.b)].needs_grad;
      Tensor gx = need_x ? Tensor(X.shape()) : Tensor();
      std::vector<RowMat> gtaps;
      if (need_w) gtaps.assign(static_cast<std::size_t>(k), RowMat::Zero(c_out, c_in));
      for (long b = 0; b < batch; ++b) {
        ConstMatMap G = mat_view(go, b, c_out, l_out);
        ConstMatMap Xm = mat_view(X, b, c_in, len);
        for (int tap = 0; tap < k; ++tap) {
          const int shift = tap * dilation - left_pad;
          const int t0 = std::max(0, -shift);
          const int seg = l_out - t0;
          if (seg <= 0) continue;
          if (need_x)
            mat_view(gx, b, c_in, len).block(0, t0 + shift, c_in, seg).noalias() +=
                taps[static_cast<std::size_t>(tap)].transpose() * G.block(0, t0, c_out, seg);
          if (need_w)
            gtaps[static_cast<std::size_t>(tap)].noalias() +=
                G.block(0, t0, c_out, seg) * Xm.block(0, t0 + shift, c_in, seg).transpose();
        }
      }
      if (need_x) accumulate(n.a, gx);
      if (need_w) {
        Tensor gw(W.shape());
        for (int tap = 0; tap < k; ++tap)
          for (int co = 0; co < c_out; ++co)
            for (int ci = 0; ci < c_in; ++ci)
              gw[(static_cast<long>(co) * c_in + ci) * k + tap] = gtaps[static_cast<std::size_t>(tap)](co, ci);
        accumulate(n.b, gw);
      }
      return;
    }
    case Op::Relu: {
      Tensor g(go.shape());
      const Tensor& X = V(n.a);
      for (long i2 = 0; i2 < g.numel(); ++i2) g[i2] = X[i2] > 0.0 ? go[i2] : 0.0;
      accumulate(n.a, g);
      return;
    }
    case Op::Tanh: {
      Tensor g(go.shape());
      g.flat() = go.flat() * (1.0 - n.value.flat().square());
      accumulate(n.a, g);
      return;
    }
    case Op::Sigmoid: {
      Tensor g(go.shape());
      g.flat() = go.flat() * n.value.flat() * (1.0 - n.value.flat());
      accumulate(n.a, g);
      return;
    }
    case Op::Abs: {
      Tensor g(go.shape());
      const Tensor& X = V(n.a);
      for (long i2 = 0; i2 < g.numel(); ++i2)
        g[i2] = X[i2] > 0.0 ? go[i2] : (X[i2] < 0.0 ? -go[i2] : 0.0);
      accumulate(n.a, g);
      return;
    }
    case Op::Exp: {
      Tensor g(go.shape());
      g.flat() = go.flat() * n.value.flat();
      accumulate(n.a, g);
      return;
    }
    case Op::Softmax: {
      // dx = y * (go - sum(go * y, axis))
      const Tensor& Y = n.value;
      long outer, alen, inner;
      outer = 1; inner = 1; alen = Y.dim(n.axis);
      for (int d = 0; d < n.axis; ++d) outer *= Y.dim(d);
      for (int d = n.axis + 1; d < Y.rank(); ++d) inner *= Y.dim(d);
      Tensor g(Y.shape());
      for (long o = 0; o < outer; ++o)
        for (long i2 = 0; i2 < inner; ++i2) {
          const long base = o * alen * inner + i2;
          double dot = 0;
          for (long a = 0; a < alen; ++a) dot += go[base + a * inner] * Y[base + a * inner];
          for (long a = 0; a < alen; ++a)
            g[base + a * inner] = Y[base + a * inner] * (go[base + a * inner] - dot);
        }
      accumulate(n.a, g);
      return;
    }
    case Op::Concat: {
      long outer = 1, inner = 1;
      const Tensor& Y = n.value;
      for (int d = 0; d < n.axis; ++d) outer *= Y.dim(d);
      for (int d = n.axis + 1; d < Y.rank(); ++d) inner *= Y.dim(d);
      const long total_axis = Y.dim(n.axis);
      long off = 0;
      for (NodeId m : n.many) {
        const Tensor& P = V(m);
        const long alen = P.dim(n.axis);
        if (nodes_[static_cast<std::size_t>(m)].needs_grad) {
          Tensor g(P.shape());
          for (long o = 0; o < outer; ++o) {
            const double* src = go.data() + (o * total_axis + off) * inner;
            double* dst = g.data() + o * alen * inner;
            std::copy(src, src + alen * inner, dst);
          }
          accumulate(m, g);
        }
        off += alen;
      }
      return;
    }
    case Op::SumAxis:
    case Op::MeanAxis: {
      const Tensor& X = V(n.a);
      const double f = n.op == Op::MeanAxis ? 1.0 / X.dim(n.axis) : 1.0;
      long outer, alen, inner;
      outer = 1; inner = 1; alen = X.dim(n.axis);
      for (int d = 0; d < n.axis; ++d) outer *= X.dim(d);
      for (int d = n.axis + 1; d < X.rank(); ++d) inner *= X.dim(d);
      Tensor g(X.shape());
      for (long o = 0; o < outer; ++o)
        for (long a = 0; a < alen; ++a)
          for (long i2 = 0; i2 < inner; ++i2)
            g[(o * alen + a) * inner + i2] = f * go[o * inner + i2];
      accumulate(n.a, g);
      return;
    }
    case Op::SumAll:
    case Op::MeanAll: {
      const Tensor& X = V(n.a);
      const double f = (n.op == Op::MeanAll ? 1.0 / static_cast<double>(X.numel()) : 1.0) * go[0];
      Tensor g(X.shape());
      g.flat().setConstant(f);
      accumulate(n.a, g);
      return;
    }
    case Op::Gather: {
      const Tensor& X = V(n.a);
      Tensor g(X.shape());
      scatter_add(g, go, n.axis, n.ints);
      accumulate(n.a, g);
      return;
    }
    case Op::Reshape: {
      accumulate(n.a, numgrad::reshape(go, V(n.a).shape()));
      return;
    }
    case Op::Permute: {
      std::vector<int> inv(n.ints.size());
      for (std::size_t d = 0; d < n.ints.size(); ++d) inv[static_cast<std::size_t>(n.ints[d])] = static_cast<int>(d);
      accumulate(n.a, numgrad::permute(go, inv));
      return;
    }
  }
}

const Tensor& Graph::grad(NodeId id) const {
  const Node& n = nodes_[check(id)];
  if (!n.needs_grad || !n.grad_live)
    throw StateError("no gradient at node " + std::to_string(id) +
                     " (not on a differentiable path, or backward not run)");
  return n.grad;
}

std::map<std::string, Tensor> Graph::param_grads() const {
  std::map<std::string, Tensor> out;
  for (const Node& n : nodes_) {
    if (n.op != Op::Param || !n.grad_live) continue;
    auto it = out.find(n.name);
    if (it == out.end()) {
      out.emplace(n.name, n.grad);
    } else {
      it->second.flat() += n.grad.flat();
    }
  }
  return out;
}

void Graph::zero_grad() {
  for (Node& n : nodes_) {
    n.grad_live = false;
  }
  swept_ = false;
}

void Graph::clear() {
  nodes_.clear();
  stale_ = false;
  swept_ = false;
}

}  // namespace ctsnas::numgrad
