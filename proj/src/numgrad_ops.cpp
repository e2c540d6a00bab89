#include "ctsnas/numgrad/tensor_ops.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ctsnas::numgrad {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

namespace {

struct BroadcastPlan {
  Shape out;
  std::vector<long> sa, sb;  // per out dim strides into a / b (0 = broadcast)
  bool same = false;
};

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  BroadcastPlan p;
  if (a == b) {
    p.out = a;
    p.same = true;
    return p;
  }
  const int ra = static_cast<int>(a.size()), rb = static_cast<int>(b.size());
  const int r = std::max(ra, rb);
  p.out.resize(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) {
    const int da = i < r - ra ? 1 : a[static_cast<std::size_t>(i - (r - ra))];
    const int db = i < r - rb ? 1 : b[static_cast<std::size_t>(i - (r - rb))];
    if (da != db && da != 1 && db != 1)
      throw ShapeError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                       " are not broadcastable");
    p.out[static_cast<std::size_t>(i)] = std::max(da, db);
  }
  auto strides_for = [&](const Shape& s) {
    std::vector<long> st(static_cast<std::size_t>(r), 0);
    long acc = 1;
    const int rs = static_cast<int>(s.size());
    for (int i = r - 1; i >= 0; --i) {
      const int d = i < r - rs ? 1 : s[static_cast<std::size_t>(i - (r - rs))];
      st[static_cast<std::size_t>(i)] = d == 1 ? 0 : acc;
      if (i >= r - rs) acc *= d;
    }
    return st;
  };
  p.sa = strides_for(a);
  p.sb = strides_for(b);
  return p;
}

template <class F>
Tensor binary_broadcast(const BroadcastPlan& p, const Tensor& a, const Tensor& b, F&& f) {
  Tensor out(p.out);
  const int r = static_cast<int>(p.out.size());
  std::vector<int> idx(static_cast<std::size_t>(r), 0);
  const long n = out.numel();
  long oa = 0, ob = 0;
  for (long i = 0; i < n; ++i) {
    out[i] = f(a[oa], b[ob]);
    for (int d = r - 1; d >= 0; --d) {
      auto du = static_cast<std::size_t>(d);
      ++idx[du];
      oa += p.sa[du];
      ob += p.sb[du];
      if (idx[du] < p.out[du]) break;
      oa -= p.sa[du] * p.out[du];
      ob -= p.sb[du] * p.out[du];
      idx[du] = 0;
    }
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  BroadcastPlan p = plan_broadcast(a.shape(), b.shape(), "add");
  if (p.same) {
    Tensor out(a.shape());
    out.flat() = a.flat() + b.flat();
    return out;
  }
  return binary_broadcast(p, a, b, [](double x, double y) { return x + y; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  BroadcastPlan p = plan_broadcast(a.shape(), b.shape(), "mul");
  if (p.same) {
    Tensor out(a.shape());
    out.flat() = a.flat() * b.flat();
    return out;
  }
  return binary_broadcast(p, a, b, [](double x, double y) { return x * y; });
}

Tensor scale(const Tensor& a, double c) {
  Tensor out(a.shape());
  out.flat() = a.flat() * c;
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out(x.shape());
  out.flat() = x.flat().max(0.0);
  return out;
}

Tensor tanh_t(const Tensor& x) {
  Tensor out(x.shape());
  out.flat() = x.flat().tanh();
  return out;
}

Tensor sigmoid(const Tensor& x) {
  Tensor out(x.shape());
  out.flat() = 1.0 / (1.0 + (-x.flat()).exp());
  return out;
}

Tensor abs_t(const Tensor& x) {
  Tensor out(x.shape());
  out.flat() = x.flat().abs();
  return out;
}

Tensor exp_t(const Tensor& x) {
  Tensor out(x.shape());
  out.flat() = x.flat().exp();
  return out;
}

namespace {

void matmul_dims(const Tensor& a, const Tensor& b, long& batch_a, long& batch_b, int& m, int& k,
                 int& n) {
  if (a.rank() < 2 || b.rank() < 2)
    throw ShapeError("matmul: operands must have rank >= 2, got " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  m = a.dim(a.rank() - 2);
  k = a.dim(a.rank() - 1);
  const int k2 = b.dim(b.rank() - 2);
  n = b.dim(b.rank() - 1);
  if (k != k2)
    throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  batch_a = a.numel() / (static_cast<long>(m) * k);
  batch_b = b.numel() / (static_cast<long>(k) * n);
  if (batch_a != batch_b && batch_a != 1 && batch_b != 1)
    throw ShapeError("matmul: leading dimensions differ, " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  long ba, bb;
  int m, k, n;
  matmul_dims(a, b, ba, bb, m, k, n);
  const long batch = std::max(ba, bb);
  Shape out_shape;
  const Tensor& lead = ba >= bb ? a : b;
  out_shape.assign(lead.shape().begin(), lead.shape().end() - 2);
  out_shape.push_back(m);
  out_shape.push_back(n);
  Tensor out(out_shape);
  for (long t = 0; t < batch; ++t) {
    ConstMatMap A = mat_view(a, ba == 1 ? 0 : t, m, k);
    ConstMatMap B = mat_view(b, bb == 1 ? 0 : t, k, n);
    mat_view(out, t, m, n).noalias() = A * B;
  }
  return out;
}

Tensor conv1d(const Tensor& x, const Tensor& w, int dilation, int left_pad) {
  if (x.rank() < 2 || w.rank() != 3)
    throw ShapeError("conv1d: x must have rank >= 2 and w rank 3, got " + shape_str(x.shape()) +
                     ", " + shape_str(w.shape()));
  const int c_in = x.dim(x.rank() - 2);
  const int len = x.dim(x.rank() - 1);
  const int c_out = w.dim(0);
  const int k = w.dim(2);
  if (w.dim(1) != c_in)
    throw ShapeError("conv1d: channel mismatch, x " + shape_str(x.shape()) + " w " +
                     shape_str(w.shape()));
  const int l_out = len + left_pad - dilation * (k - 1);
  if (l_out < 1)
    throw ShapeError("conv1d: output length would be " + std::to_string(l_out) + " for x " +
                     shape_str(x.shape()));
  const long batch = x.numel() / (static_cast<long>(c_in) * len);
  Shape out_shape(x.shape().begin(), x.shape().end() - 2);
  out_shape.push_back(c_out);
  out_shape.push_back(l_out);
  Tensor out(out_shape);
  // per-tap weight slices [c_out, c_in] of [c_out, c_in, k]
  std::vector<RowMat> taps(static_cast<std::size_t>(k), RowMat(c_out, c_in));
  for (int tap = 0; tap < k; ++tap)
    for (int co = 0; co < c_out; ++co)
      for (int ci = 0; ci < c_in; ++ci)
        taps[static_cast<std::size_t>(tap)](co, ci) = w[(static_cast<long>(co) * c_in + ci) * k + tap];
  for (long b = 0; b < batch; ++b) {
    ConstMatMap X = mat_view(x, b, c_in, len);
    MatMap O = mat_view(out, b, c_out, l_out);
    for (int tap = 0; tap < k; ++tap) {
      const int shift = tap * dilation - left_pad;  // x index = t + shift
      const int t0 = std::max(0, -shift);
      const int seg = l_out - t0;
      if (seg <= 0) continue;
      O.block(0, t0, c_out, seg).noalias() += taps[static_cast<std::size_t>(tap)] * X.block(0, t0 + shift, c_in, seg);
    }
  }
  return out;
}

namespace {

void axis_geometry(const Tensor& x, int axis, long& outer, long& alen, long& inner) {
  if (axis < 0 || axis >= x.rank())
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(x.shape()));
  outer = 1;
  inner = 1;
  alen = x.dim(axis);
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) {
  long outer, alen, inner;
  axis_geometry(x, axis, outer, alen, inner);
  Tensor out(x.shape());
  for (long o = 0; o < outer; ++o) {
    for (long i = 0; i < inner; ++i) {
      const long base = o * alen * inner + i;
      double mx = x[base];
      for (long a = 1; a < alen; ++a) mx = std::max(mx, x[base + a * inner]);
      double z = 0;
      for (long a = 0; a < alen; ++a) {
        const double e = std::exp(x[base + a * inner] - mx);
        out[base + a * inner] = e;
        z += e;
      }
      for (long a = 0; a < alen; ++a) out[base + a * inner] /= z;
    }
  }
  return out;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Tensor& first = parts.front();
  long outer, alen0, inner;
  axis_geometry(first, axis, outer, alen0, inner);
  long total_axis = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != first.rank()) throw ShapeError("concat: rank mismatch");
    for (int d = 0; d < first.rank(); ++d)
      if (d != axis && p.dim(d) != first.dim(d))
        throw ShapeError("concat: shape mismatch " + shape_str(first.shape()) + " vs " +
                         shape_str(p.shape()));
    total_axis += p.dim(axis);
  }
  Shape out_shape = first.shape();
  out_shape[static_cast<std::size_t>(axis)] = static_cast<int>(total_axis);
  Tensor out(out_shape);
  long axis_off = 0;
  for (const Tensor& p : parts) {
    const long alen = p.dim(axis);
    for (long o = 0; o < outer; ++o) {
      const double* src = p.data() + o * alen * inner;
      double* dst = out.data() + (o * total_axis + axis_off) * inner;
      std::copy(src, src + alen * inner, dst);
    }
    axis_off += alen;
  }
  return out;
}

Tensor sum_axis(const Tensor& x, int axis) {
  long outer, alen, inner;
  axis_geometry(x, axis, outer, alen, inner);
  Shape out_shape;
  for (int i = 0; i < x.rank(); ++i)
    if (i != axis) out_shape.push_back(x.dim(i));
  Tensor out(out_shape);
  for (long o = 0; o < outer; ++o)
    for (long a = 0; a < alen; ++a)
      for (long i = 0; i < inner; ++i) out[o * inner + i] += x[(o * alen + a) * inner + i];
  return out;
}

Tensor mean_axis(const Tensor& x, int axis) {
  Tensor out = sum_axis(x, axis);
  out.flat() /= static_cast<double>(x.dim(axis));
  return out;
}

Tensor sum_all(const Tensor& x) { return Tensor::scalar(x.flat().sum()); }

Tensor mean_all(const Tensor& x) {
  return Tensor::scalar(x.flat().sum() / static_cast<double>(x.numel()));
}

Tensor gather(const Tensor& x, int axis, const std::vector<int>& idx) {
  long outer, alen, inner;
  axis_geometry(x, axis, outer, alen, inner);
  for (int v : idx)
    if (v < 0 || v >= alen)
      throw ShapeError("gather: index " + std::to_string(v) + " out of range for axis length " +
                       std::to_string(alen));
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(axis)] = static_cast<int>(idx.size());
  Tensor out(out_shape);
  const long glen = static_cast<long>(idx.size());
  for (long o = 0; o < outer; ++o)
    for (long g = 0; g < glen; ++g) {
      const double* src = x.data() + (o * alen + idx[static_cast<std::size_t>(g)]) * inner;
      double* dst = out.data() + (o * glen + g) * inner;
      std::copy(src, src + inner, dst);
    }
  return out;
}

void scatter_add(Tensor& into, const Tensor& g, int axis, const std::vector<int>& idx) {
  long outer, alen, inner;
  axis_geometry(into, axis, outer, alen, inner);
  const long glen = static_cast<long>(idx.size());
  for (long o = 0; o < outer; ++o)
    for (long j = 0; j < glen; ++j) {
      const double* src = g.data() + (o * glen + j) * inner;
      double* dst = into.data() + (o * alen + idx[static_cast<std::size_t>(j)]) * inner;
      for (long i = 0; i < inner; ++i) dst[i] += src[i];
    }
}

Tensor reshape(const Tensor& x, Shape target) {
  if (shape_numel(target) != x.numel())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(target));
  Tensor out(std::move(target));
  out.flat() = x.flat();
  return out;
}

Tensor permute(const Tensor& x, const std::vector<int>& perm) {
  const int r = x.rank();
  if (static_cast<int>(perm.size()) != r) throw ShapeError("permute: rank mismatch");
  std::vector<bool> seen(static_cast<std::size_t>(r), false);
  for (int p : perm) {
    if (p < 0 || p >= r || seen[static_cast<std::size_t>(p)])
      throw ShapeError("permute: invalid permutation");
    seen[static_cast<std::size_t>(p)] = true;
  }
  Shape out_shape(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) out_shape[static_cast<std::size_t>(i)] = x.dim(perm[static_cast<std::size_t>(i)]);
  Tensor out(out_shape);
  // strides of x, then walk output in row-major order
  std::vector<long> xstr(static_cast<std::size_t>(r), 1);
  for (int i = r - 2; i >= 0; --i)
    xstr[static_cast<std::size_t>(i)] = xstr[static_cast<std::size_t>(i + 1)] * x.dim(i + 1);
  std::vector<long> ostr(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) ostr[static_cast<std::size_t>(i)] = xstr[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
  std::vector<int> idx(static_cast<std::size_t>(r), 0);
  long src = 0;
  const long n = out.numel();
  for (long i = 0; i < n; ++i) {
    out[i] = x[src];
    for (int d = r - 1; d >= 0; --d) {
      auto du = static_cast<std::size_t>(d);
      ++idx[du];
      src += ostr[du];
      if (idx[du] < out_shape[du]) break;
      src -= ostr[du] * out_shape[du];
      idx[du] = 0;
    }
  }
  return out;
}

Tensor reduce_to_shape(const Tensor& g, const Shape& target) {
  if (g.shape() == target) return g;
  Tensor cur = g;
  // collapse extra leading dims
  while (cur.rank() > static_cast<int>(target.size())) cur = sum_axis(cur, 0);
  // sum over broadcast (size-1) dims
  for (int i = 0; i < cur.rank(); ++i) {
    if (target[static_cast<std::size_t>(i)] == 1 && cur.dim(i) != 1) {
      Tensor reduced = sum_axis(cur, i);
      Shape keep = cur.shape();
      keep[static_cast<std::size_t>(i)] = 1;
      cur = reshape(reduced, keep);
    }
  }
  if (cur.shape() != target)
    throw ShapeError("reduce_to_shape: cannot reduce " + shape_str(g.shape()) + " to " +
                     shape_str(target));
  return cur;
}

}  // namespace ctsnas::numgrad
