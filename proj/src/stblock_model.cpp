#include "ctsnas/stblock/model.hpp"

#include "ctsnas/common/rng.hpp"

#include <cmath>

namespace ctsnas::stblock {

namespace {

Eigen::MatrixXd sym_normalize(const Eigen::MatrixXd& a) {
  const int n = static_cast<int>(a.rows());
  Eigen::MatrixXd s = a + Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd d = s.rowwise().sum();
  for (int i = 0; i < n; ++i) d(i) = 1.0 / std::sqrt(std::max(d(i), 1e-12));
  return d.asDiagonal() * s * d.asDiagonal();
}

Tensor matrix_to_tensor(const Eigen::MatrixXd& m) {
  Tensor t({static_cast<int>(m.rows()), static_cast<int>(m.cols())});
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) t.at({i, j}) = m(i, j);
  return t;
}

}  // namespace

std::string BlockModel::instance_prefix(int node, const std::string& op_name) {
  return "op" + std::to_string(node) + "." + op_name + ".";
}

long BlockModel::operator_param_count(const std::string& op, const BlockDims& d) {
  const long h = d.hidden, p = d.input_len, n = d.n_series, e = d.node_embed;
  if (op == "skip") return 0;
  if (op == "cnn") return h * h * 3 + h;
  if (op == "gdcc") return 2 * (h * h * 2 + h);
  if (op == "gru") return 6 * h * h + 3 * h;
  if (op == "nlinear") return p * p + p;
  if (op == "t_attn" || op == "s_attn") return 4 * h * h + 4 * h;
  if (op == "gcn") return h * h + h;
  if (op == "agcn") return n * e + h * h + h;
  throw std::invalid_argument("unknown operator: " + op);
}

long BlockModel::analytic_param_count(const Genotype& g, const OperatorVocabulary& vocab,
                                      const BlockDims& d) {
  long total = static_cast<long>(d.n_features) * d.hidden + d.hidden;  // embedding
  const long q_out = d.tag == Tag::multi ? d.horizon : 1;
  total += static_cast<long>(d.input_len) * d.hidden * q_out + q_out;  // head
  for (int l : g.labels) total += operator_param_count(vocab.op(l).name, d);
  return total;
}

namespace {

void init_operator_params(ParamStore& ps, const std::string& prefix, const std::string& op,
                          const BlockDims& d, Rng& rng) {
  const int h = d.hidden;
  if (op == "skip") return;
  if (op == "cnn") {
    ps.create_glorot(prefix + "w", {h, h, 3}, rng);
    ps.create_zeros(prefix + "b", {h, 1});
    return;
  }
  if (op == "gdcc") {
    ps.create_glorot(prefix + "wf", {h, h, 2}, rng);
    ps.create_zeros(prefix + "bf", {h, 1});
    ps.create_glorot(prefix + "wg", {h, h, 2}, rng);
    ps.create_zeros(prefix + "bg", {h, 1});
    return;
  }
  if (op == "gru") {
    for (const char* g : {"z", "r", "h"}) {
      ps.create_glorot(prefix + "wx" + std::string(g), {h, h}, rng);
      ps.create_glorot(prefix + "wh" + std::string(g), {h, h}, rng);
      ps.create_zeros(prefix + "b" + std::string(g), {h});
    }
    return;
  }
  if (op == "nlinear") {
    const int p = d.input_len;
    // start near identity-over-time so the anchored path dominates early
    Tensor w({p, p});
    for (int i = 0; i < p; ++i) w.at({i, i}) = 0.5;
    for (long i = 0; i < w.numel(); ++i) w[i] += rng.uniform(-0.05, 0.05);
    ps.create(prefix + "w", std::move(w));
    ps.create_zeros(prefix + "b", {p});
    return;
  }
  if (op == "t_attn" || op == "s_attn") {
    for (const char* nm : {"wq", "wk", "wv", "wo"}) ps.create_glorot(prefix + nm, {h, h}, rng);
    for (const char* nm : {"bq", "bk", "bv", "bo"}) ps.create_zeros(prefix + nm, {h});
    return;
  }
  if (op == "gcn") {
    ps.create_glorot(prefix + "w", {h, h}, rng);
    ps.create_zeros(prefix + "b", {h});
    return;
  }
  if (op == "agcn") {
    Tensor e({d.n_series, d.node_embed});
    for (long i = 0; i < e.numel(); ++i) e[i] = rng.normal() * 0.5;
    ps.create(prefix + "e", std::move(e));
    ps.create_glorot(prefix + "w", {h, h}, rng);
    ps.create_zeros(prefix + "b", {h});
    return;
  }
  throw std::invalid_argument("unknown operator: " + op);
}

}  // namespace

Scaler fit_scaler(const ForecastTask& task) {
  const auto splits = ctsdata::split_dataset(task);
  const auto& d = *task.data;
  double mean = 0;
  long count = 0;
  for (int s = 0; s < d.n_series(); ++s)
    for (int t = splits.train.begin; t < splits.train.end; ++t) {
      mean += d.at(s, t, 0);
      ++count;
    }
  mean /= static_cast<double>(count);
  double var = 0;
  for (int s = 0; s < d.n_series(); ++s)
    for (int t = splits.train.begin; t < splits.train.end; ++t) {
      const double x = d.at(s, t, 0) - mean;
      var += x * x;
    }
  var /= static_cast<double>(count);
  Scaler sc;
  sc.mean = mean;
  sc.std = std::sqrt(var) > 1e-8 ? std::sqrt(var) : 1.0;
  return sc;
}

Tensor normalize_input(const Tensor& input, const Scaler& s) {
  Tensor out = input;
  const int f = input.dim(input.rank() - 1);
  const long positions = input.numel() / f;
  for (long i = 0; i < positions; ++i) out[i * f] = (out[i * f] - s.mean) / s.std;
  return out;
}

Tensor normalize_target(const Tensor& target, const Scaler& s) {
  Tensor out = target;
  for (long i = 0; i < out.numel(); ++i) out[i] = (out[i] - s.mean) / s.std;
  return out;
}

Tensor denormalize_prediction(const Tensor& pred, const Scaler& s) {
  Tensor out = pred;
  for (long i = 0; i < out.numel(); ++i) out[i] = out[i] * s.std + s.mean;
  return out;
}

BlockModel BlockModel::instantiate(const Genotype& g, const OperatorVocabulary& vocab,
                                   const ForecastTask& task, int hidden, std::uint64_t seed) {
  searchspace::validate_genotype(g, vocab.size());
  BlockModel m;
  m.genotype_ = g;
  m.seed_ = seed;
  m.dims_.n_series = task.data->n_series();
  m.dims_.input_len = task.input_len;
  m.dims_.horizon = task.horizon;
  m.dims_.n_features = task.data->n_features();
  m.dims_.hidden = hidden;
  m.dims_.tag = task.tag;
  m.norm_adjacency_ = sym_normalize(task.data->adjacency());
  m.scaler_ = fit_scaler(task);
  for (int l : g.labels) m.op_names_.push_back(vocab.op(l).name);

  {
    Rng rng(derive_seed(seed, 0xe));
    m.params_.create_glorot("embed.w", {m.dims_.n_features, hidden}, rng);
    m.params_.create_zeros("embed.b", {hidden});
  }
  for (int j = 0; j < g.n_ops(); ++j) {
    Rng rng(derive_seed(seed, 0x09, static_cast<std::uint64_t>(j)));
    init_operator_params(m.params_, instance_prefix(j, m.op_names_[static_cast<std::size_t>(j)]),
                         m.op_names_[static_cast<std::size_t>(j)], m.dims_, rng);
  }
  {
    Rng rng(derive_seed(seed, 0x4ead));
    const int q_out = m.dims_.tag == Tag::multi ? m.dims_.horizon : 1;
    m.params_.create_glorot("head.w", {m.dims_.input_len * hidden, q_out}, rng);
    m.params_.create_zeros("head.b", {q_out});
  }
  return m;
}

std::vector<std::string> BlockModel::instance_param_names(int node) const {
  const std::string prefix = instance_prefix(node, op_names_[static_cast<std::size_t>(node)]);
  std::vector<std::string> out;
  for (const auto& [name, t] : params_)
    if (name.rfind(prefix, 0) == 0) out.push_back(name);
  return out;
}

ParamBinder BlockModel::default_binder(std::map<std::string, Graph::NodeId>* leaves) const {
  const ParamStore* store = &params_;
  return [store, leaves](Graph& g, const std::string& name) {
    const Graph::NodeId id = g.param(name, store->at(name));
    if (leaves) leaves->emplace(name, id);
    return id;
  };
}

namespace {

struct BuildCtx {
  Graph& g;
  const BlockModel& model;
  const ParamBinder& bind;
  int batch;
  Graph::NodeId adj = -1;  // lazily created normalized-adjacency constant
};

using NodeId = Graph::NodeId;

void assert_shape(const BuildCtx& ctx, NodeId x, const char* where) {
  const auto& d = ctx.model.dims();
  const numgrad::Shape expect = {ctx.batch, d.n_series, d.input_len, d.hidden};
  if (ctx.g.shape_of(x) != expect)
    throw numgrad::ShapeError(std::string(where) + " broke the [B,N,P,H] contract: got " +
                              numgrad::shape_str(ctx.g.shape_of(x)));
}

// [B,N,P,H] -> [B,N,H,P]
NodeId to_channels(BuildCtx& ctx, NodeId x) { return ctx.g.permute(x, {0, 1, 3, 2}); }
NodeId from_channels(BuildCtx& ctx, NodeId x) { return ctx.g.permute(x, {0, 1, 3, 2}); }

NodeId build_cnn(BuildCtx& ctx, const std::string& pre, NodeId x) {
  Graph& g = ctx.g;
  NodeId h = to_channels(ctx, x);
  h = g.conv1d(h, ctx.bind(g, pre + "w"), 1, 2);  // kernel 3, causal
  h = g.add(h, ctx.bind(g, pre + "b"));
  return from_channels(ctx, g.relu(h));
}

NodeId build_gdcc(BuildCtx& ctx, const std::string& pre, NodeId x) {
  Graph& g = ctx.g;
  NodeId h = to_channels(ctx, x);
  NodeId filt = g.add(g.conv1d(h, ctx.bind(g, pre + "wf"), 2, 2), ctx.bind(g, pre + "bf"));
  NodeId gate = g.add(g.conv1d(h, ctx.bind(g, pre + "wg"), 2, 2), ctx.bind(g, pre + "bg"));
  return from_channels(ctx, g.mul(g.tanh_(filt), g.sigmoid(gate)));
}

NodeId build_gru(BuildCtx& ctx, const std::string& pre, NodeId x) {
  Graph& g = ctx.g;
  const auto& d = ctx.model.dims();
  const int bn = ctx.batch * d.n_series;
  NodeId wxz = ctx.bind(g, pre + "wxz"), whz = ctx.bind(g, pre + "whz");
  NodeId wxr = ctx.bind(g, pre + "wxr"), whr = ctx.bind(g, pre + "whr");
  NodeId wxh = ctx.bind(g, pre + "wxh"), whh = ctx.bind(g, pre + "whh");
  NodeId bz = ctx.bind(g, pre + "bz"), br = ctx.bind(g, pre + "br"), bh = ctx.bind(g, pre + "bh");
  NodeId ones = g.value(Tensor::ones({bn, d.hidden}));
  NodeId h = g.value(Tensor::zeros({bn, d.hidden}));
  std::vector<NodeId> outputs;
  outputs.reserve(static_cast<std::size_t>(d.input_len));
  for (int t = 0; t < d.input_len; ++t) {
    NodeId xt = g.reshape(g.gather(x, 2, {t}), {bn, d.hidden});
    NodeId z = g.sigmoid(g.add(g.add(g.matmul(xt, wxz), g.matmul(h, whz)), bz));
    NodeId r = g.sigmoid(g.add(g.add(g.matmul(xt, wxr), g.matmul(h, whr)), br));
    NodeId cand = g.tanh_(g.add(g.add(g.matmul(xt, wxh), g.matmul(g.mul(r, h), whh)), bh));
    h = g.add(g.mul(g.sub(ones, z), h), g.mul(z, cand));
    outputs.push_back(g.reshape(h, {ctx.batch, d.n_series, 1, d.hidden}));
  }
  return g.concat(outputs, 2);
}

NodeId build_nlinear(BuildCtx& ctx, const std::string& pre, NodeId x) {
  Graph& g = ctx.g;
  const auto& d = ctx.model.dims();
  NodeId last = g.gather(x, 2, {d.input_len - 1});     // [B,N,1,H]
  NodeId anchored = g.sub(x, last);                    // broadcast over P
  NodeId h = to_channels(ctx, anchored);               // [B,N,H,P]
  h = g.add(g.matmul(h, ctx.bind(g, pre + "w")), ctx.bind(g, pre + "b"));
  return g.add(from_channels(ctx, h), last);
}

NodeId attention(BuildCtx& ctx, const std::string& pre, NodeId x3, int set_len) {
  // x3: [..., set_len, H]; single-head scaled dot-product with output proj
  Graph& g = ctx.g;
  const int h = ctx.model.dims().hidden;
  NodeId q = g.add(g.matmul(x3, ctx.bind(g, pre + "wq")), ctx.bind(g, pre + "bq"));
  NodeId k = g.add(g.matmul(x3, ctx.bind(g, pre + "wk")), ctx.bind(g, pre + "bk"));
  NodeId v = g.add(g.matmul(x3, ctx.bind(g, pre + "wv")), ctx.bind(g, pre + "bv"));
  const int rank = static_cast<int>(g.shape_of(x3).size());
  std::vector<int> swap(static_cast<std::size_t>(rank));
  for (int i = 0; i < rank; ++i) swap[static_cast<std::size_t>(i)] = i;
  std::swap(swap[static_cast<std::size_t>(rank - 1)], swap[static_cast<std::size_t>(rank - 2)]);
  NodeId scores = g.scale(g.matmul(q, g.permute(k, swap)), 1.0 / std::sqrt(static_cast<double>(h)));
  NodeId att = g.softmax(scores, rank - 1);  // over the set axis
  (void)set_len;
  NodeId mixed = g.matmul(att, v);
  return g.add(g.matmul(mixed, ctx.bind(g, pre + "wo")), ctx.bind(g, pre + "bo"));
}

NodeId build_t_attn(BuildCtx& ctx, const std::string& pre, NodeId x) {
  return attention(ctx, pre, x, ctx.model.dims().input_len);  // over time axis
}

NodeId build_s_attn(BuildCtx& ctx, const std::string& pre, NodeId x) {
  Graph& g = ctx.g;
  NodeId swapped = g.permute(x, {0, 2, 1, 3});  // [B,P,N,H]
  NodeId out = attention(ctx, pre, swapped, ctx.model.dims().n_series);
  return g.permute(out, {0, 2, 1, 3});
}

NodeId graph_mix(BuildCtx& ctx, NodeId x, NodeId adjacency, const std::string& pre) {
  // y = relu(A_hat . x . W + b) applied per (batch, time)
  Graph& g = ctx.g;
  NodeId swapped = g.permute(x, {0, 2, 1, 3});  // [B,P,N,H]
  NodeId mixed = g.matmul(adjacency, swapped);  // leading dims broadcast
  mixed = g.add(g.matmul(mixed, ctx.bind(g, pre + "w")), ctx.bind(g, pre + "b"));
  return g.permute(g.relu(mixed), {0, 2, 1, 3});
}

NodeId build_gcn(BuildCtx& ctx, const std::string& pre, NodeId x) {
  if (ctx.adj < 0)
    ctx.adj = ctx.g.value(matrix_to_tensor(ctx.model.norm_adjacency()));
  return graph_mix(ctx, x, ctx.adj, pre);
}

NodeId build_agcn(BuildCtx& ctx, const std::string& pre, NodeId x) {
  Graph& g = ctx.g;
  NodeId e = ctx.bind(g, pre + "e");  // [N, d_e]
  NodeId logits = g.relu(g.matmul(e, g.permute(e, {1, 0})));
  NodeId adaptive = g.softmax(logits, 1);  // row-stochastic
  return graph_mix(ctx, x, adaptive, pre);
}

NodeId build_operator(BuildCtx& ctx, int node, NodeId x) {
  const std::string& op = ctx.model.op_names()[static_cast<std::size_t>(node)];
  const std::string pre = BlockModel::instance_prefix(node, op);
  NodeId out;
  if (op == "skip") out = x;
  else if (op == "cnn") out = build_cnn(ctx, pre, x);
  else if (op == "gdcc") out = build_gdcc(ctx, pre, x);
  else if (op == "gru") out = build_gru(ctx, pre, x);
  else if (op == "nlinear") out = build_nlinear(ctx, pre, x);
  else if (op == "t_attn") out = build_t_attn(ctx, pre, x);
  else if (op == "s_attn") out = build_s_attn(ctx, pre, x);
  else if (op == "gcn") out = build_gcn(ctx, pre, x);
  else if (op == "agcn") out = build_agcn(ctx, pre, x);
  else throw std::invalid_argument("unknown operator: " + op);
  assert_shape(ctx, out, op.c_str());
  return out;
}

}  // namespace

Graph::NodeId BlockModel::build_prediction(Graph& g, Graph::NodeId input,
                                           const ParamBinder& bind) const {
  const auto& d = dims_;
  const numgrad::Shape in_shape = g.shape_of(input);
  if (in_shape.size() != 4 || in_shape[1] != d.n_series || in_shape[2] != d.input_len ||
      in_shape[3] != d.n_features)
    throw numgrad::ShapeError("block input must be [B,N,P,F], got " +
                              numgrad::shape_str(in_shape));
  BuildCtx ctx{g, *this, bind, in_shape[0]};

  // embedding: [B,N,P,F] -> [B,N,P,H]
  NodeId h0 = g.add(g.matmul(input, bind(g, "embed.w")), bind(g, "embed.b"));
  assert_shape(ctx, h0, "embed");

  const int n = genotype_.n_ops();
  std::vector<NodeId> values(static_cast<std::size_t>(n + 1));
  values[0] = h0;
  std::vector<bool> has_successor(static_cast<std::size_t>(n + 1), false);
  for (int j = 0; j < n; ++j) {
    const int pred = genotype_.preds[static_cast<std::size_t>(j)];
    values[static_cast<std::size_t>(j + 1)] = build_operator(ctx, j, values[static_cast<std::size_t>(pred)]);
    has_successor[static_cast<std::size_t>(pred)] = true;
  }
  // block output sums all sinks
  NodeId block = -1;
  for (int v = 1; v <= n; ++v)
    if (!has_successor[static_cast<std::size_t>(v)])
      block = block < 0 ? values[static_cast<std::size_t>(v)] : g.add(block, values[static_cast<std::size_t>(v)]);
  assert_shape(ctx, block, "sink aggregation");

  // head: flatten time x hidden, project to the horizon
  const int q_out = d.tag == Tag::multi ? d.horizon : 1;
  NodeId flat = g.reshape(block, {ctx.batch, d.n_series, d.input_len * d.hidden});
  NodeId out = g.add(g.matmul(flat, bind(g, "head.w")), bind(g, "head.b"));
  if (d.tag == Tag::single) out = g.reshape(out, {ctx.batch, d.n_series});
  return out;
}

}  // namespace ctsnas::stblock
