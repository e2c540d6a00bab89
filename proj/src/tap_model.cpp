#include "ctsnas/tap/tap.hpp"

#include "ctsnas/common/rng.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "ctsnas/numgrad/blob.hpp"

namespace ctsnas::tap {

Tensor normalize_dag_adjacency(const Tensor& a) {
  const int n = a.dim(0);
  Tensor s({n, n});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      s.at({i, j}) = a.at({i, j}) + a.at({j, i}) + (i == j ? 1.0 : 0.0);
  std::vector<double> dinv(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double deg = 0;
    for (int j = 0; j < n; ++j) deg += s.at({i, j});
    dinv[static_cast<std::size_t>(i)] = 1.0 / std::sqrt(std::max(deg, 1e-12));
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      s.at({i, j}) *= dinv[static_cast<std::size_t>(i)] * dinv[static_cast<std::size_t>(j)];
  return s;
}

namespace {

Tensor resample_window(const Tensor& windows, int s, int w, int target_len) {
  const int src_len = windows.dim(2);
  Tensor out({target_len});
  if (src_len == 1) {
    for (int t = 0; t < target_len; ++t) out[t] = windows.at({s, w, 0});
    return out;
  }
  for (int t = 0; t < target_len; ++t) {
    const double pos = target_len == 1
                           ? 0.0
                           : static_cast<double>(t) * (src_len - 1) / (target_len - 1);
    const int lo = static_cast<int>(std::floor(pos));
    const int hi = std::min(lo + 1, src_len - 1);
    const double frac = pos - lo;
    out[t] = (1.0 - frac) * windows.at({s, w, lo}) + frac * windows.at({s, w, hi});
  }
  return out;
}

}  // namespace

TapTaskFeatures prepare_task_features(const TapConfig& cfg, const ForecastTask& task,
                                      std::uint64_t seed) {
  TapTaskFeatures tf;
  tf.stat = ctsdata::extract_stat_features(*task.data);
  auto sem = ctsdata::sample_semantic_windows(*task.data, cfg.n_series, cfg.n_windows,
                                              task.input_len, seed);
  const int s_n = sem.windows.dim(0);
  tf.windows = Tensor({s_n, cfg.n_windows, cfg.window_len});
  for (int s = 0; s < s_n; ++s)
    for (int w = 0; w < cfg.n_windows; ++w) {
      Tensor r = resample_window(sem.windows, s, w, cfg.window_len);
      for (int t = 0; t < cfg.window_len; ++t) tf.windows.at({s, w, t}) = r[t];
    }
  return tf;
}

TapModel::TapModel(TapConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  Rng rng(derive_seed(seed, 0x7a9));
  const int g = cfg_.gcn_hidden, d = cfg_.set_dim;
  params_.create_glorot("afl.gcn0.w", {cfg_.feature_dim, g}, rng);
  params_.create_zeros("afl.gcn0.b", {g});
  for (int l = 1; l < cfg_.gcn_layers; ++l) {
    params_.create_glorot("afl.gcn" + std::to_string(l) + ".w", {g, g}, rng);
    params_.create_zeros("afl.gcn" + std::to_string(l) + ".b", {g});
  }
  params_.create_glorot("afl.mlp1.w", {g, cfg_.arch_embed}, rng);
  params_.create_zeros("afl.mlp1.b", {cfg_.arch_embed});

  params_.create_glorot("tfl.embed.w", {cfg_.window_len, d}, rng);
  params_.create_zeros("tfl.embed.b", {d});
  for (const char* block : {"intra", "inter"}) {
    for (const char* unit : {"sab", "pma"}) {
      const std::string p = std::string("tfl.") + block + "." + unit + ".";
      for (const char* w : {"wq", "wk", "wv", "wo", "rffw"}) params_.create_glorot(p + w, {d, d}, rng);
      for (const char* b : {"bq", "bk", "bv", "bo", "rffb"}) params_.create_zeros(p + b, {d});
      if (std::string(unit) == "pma") {
        Tensor sv({1, d});
        for (long i = 0; i < sv.numel(); ++i) sv[i] = rng.normal() * 0.5;
        params_.create(p + "seed", std::move(sv));
      }
    }
  }
  params_.create_glorot("tfl.mlp2.w", {d, cfg_.align_dim}, rng);
  params_.create_zeros("tfl.mlp2.b", {cfg_.align_dim});
  params_.create_glorot("tfl.mlp3.w", {cfg_.stat_dim, cfg_.align_dim}, rng);
  params_.create_zeros("tfl.mlp3.b", {cfg_.align_dim});

  const int d_in = cfg_.arch_embed + 2 * cfg_.align_dim;
  params_.create_glorot("reg.l1.w", {d_in, cfg_.reg_hidden}, rng);
  params_.create_zeros("reg.l1.b", {cfg_.reg_hidden});
  params_.create_glorot("reg.l2.w", {cfg_.reg_hidden, 1}, rng);
  params_.create_zeros("reg.l2.b", {1});

  stat_mean_ = Tensor({cfg_.stat_dim});
  stat_std_ = Tensor({cfg_.stat_dim}, 1.0);
}

void TapModel::set_stat_norm(Tensor mean, Tensor std) {
  if (mean.numel() != cfg_.stat_dim || std.numel() != cfg_.stat_dim)
    throw numgrad::ShapeError("stat normalization length mismatch");
  stat_mean_ = std::move(mean);
  stat_std_ = std::move(std);
}

TapModel::Binder TapModel::default_binder(std::map<std::string, Graph::NodeId>* leaves) const {
  const ParamStore* store = &params_;
  auto cache = std::make_shared<std::map<std::string, Graph::NodeId>>();
  return [store, leaves, cache](Graph& g, const std::string& name) {
    auto it = cache->find(name);
    if (it != cache->end()) return it->second;
    const Graph::NodeId id = g.param(name, store->at(name));
    cache->emplace(name, id);
    if (leaves) leaves->emplace(name, id);
    return id;
  };
}

namespace {

using NodeId = Graph::NodeId;

// H = X + Attn(Q_src -> X); out = H + relu(H*rffw + rffb). Residual anchors on
// q_src (the seed for PMA, X itself for SAB).
NodeId attention_block(Graph& g, const TapModel::Binder& bind, const std::string& p, NodeId x,
                       NodeId q_src, int dim) {
  NodeId q = g.add(g.matmul(q_src, bind(g, p + "wq")), bind(g, p + "bq"));
  NodeId k = g.add(g.matmul(x, bind(g, p + "wk")), bind(g, p + "bk"));
  NodeId v = g.add(g.matmul(x, bind(g, p + "wv")), bind(g, p + "bv"));
  const int rank = static_cast<int>(g.shape_of(k).size());
  std::vector<int> swap(static_cast<std::size_t>(rank));
  for (int i = 0; i < rank; ++i) swap[static_cast<std::size_t>(i)] = i;
  std::swap(swap[static_cast<std::size_t>(rank - 1)], swap[static_cast<std::size_t>(rank - 2)]);
  NodeId scores = g.scale(g.matmul(q, g.permute(k, swap)), 1.0 / std::sqrt(static_cast<double>(dim)));
  NodeId att = g.matmul(g.softmax(scores, static_cast<int>(g.shape_of(scores).size()) - 1), v);
  att = g.add(g.matmul(att, bind(g, p + "wo")), bind(g, p + "bo"));
  NodeId h = g.add(q_src, att);
  return g.add(h, g.relu(g.add(g.matmul(h, bind(g, p + "rffw")), bind(g, p + "rffb"))));
}

NodeId sab(Graph& g, const TapModel::Binder& bind, const std::string& p, NodeId x, int dim) {
  return attention_block(g, bind, p, x, x, dim);
}

NodeId pma(Graph& g, const TapModel::Binder& bind, const std::string& p, NodeId x, int dim) {
  return attention_block(g, bind, p, x, bind(g, p + "seed"), dim);
}

}  // namespace

std::pair<NodeId, NodeId> TapModel::build_task_embedding(Graph& g, const Binder& bind,
                                                         const TapTaskFeatures& tf) const {
  const int d = cfg_.set_dim;
  // semantic: embed windows, pool within each series, then across series
  NodeId w = g.value(tf.windows);  // [S, W, L]
  NodeId e = g.add(g.matmul(w, bind(g, "tfl.embed.w")), bind(g, "tfl.embed.b"));
  NodeId intra = sab(g, bind, "tfl.intra.sab.", e, d);
  NodeId series = pma(g, bind, "tfl.intra.pma.", intra, d);  // [S, 1, d]
  series = g.reshape(series, {tf.windows.dim(0), d});
  NodeId inter = sab(g, bind, "tfl.inter.sab.", series, d);
  NodeId d_a = pma(g, bind, "tfl.inter.pma.", inter, d);  // [1, d]
  NodeId sem_aligned = g.add(g.matmul(d_a, bind(g, "tfl.mlp2.w")), bind(g, "tfl.mlp2.b"));
  sem_aligned = g.reshape(sem_aligned, {cfg_.align_dim});

  Tensor stat_norm({1, cfg_.stat_dim});
  for (int i = 0; i < cfg_.stat_dim; ++i)
    stat_norm.at({0, i}) = (tf.stat[i] - stat_mean_[i]) / std::max(stat_std_[i], 1e-9);
  NodeId t_a = g.value(stat_norm);
  NodeId stat_aligned = g.add(g.matmul(t_a, bind(g, "tfl.mlp3.w")), bind(g, "tfl.mlp3.b"));
  stat_aligned = g.reshape(stat_aligned, {cfg_.align_dim});
  return {sem_aligned, stat_aligned};
}

namespace {

NodeId build_afl_impl(Graph& g, const TapModel::Binder& bind, const TapConfig& cfg,
                      const GenotypeEncoding& enc) {
  NodeId a_hat = g.value(normalize_dag_adjacency(enc.adjacency));
  NodeId h = g.value(enc.features);
  for (int l = 0; l < cfg.gcn_layers; ++l) {
    const std::string p = "afl.gcn" + std::to_string(l) + ".";
    h = g.relu(g.add(g.matmul(g.matmul(a_hat, h), bind(g, p + "w")), bind(g, p + "b")));
  }
  NodeId pooled = g.mean_axis(h, 0);  // [g]
  pooled = g.reshape(pooled, {1, cfg.gcn_hidden});
  NodeId h_a = g.add(g.matmul(pooled, bind(g, "afl.mlp1.w")), bind(g, "afl.mlp1.b"));
  return g.reshape(h_a, {cfg.arch_embed});
}

}  // namespace

Graph::NodeId TapModel::build_predict_with_task(Graph& g, const Binder& bind,
                                                const GenotypeEncoding& enc, NodeId sem_aligned,
                                                NodeId stat_aligned) const {
  NodeId h_a = build_afl_impl(g, bind, cfg_, enc);
  NodeId l_a = g.concat({sem_aligned, stat_aligned, h_a}, 0);
  l_a = g.reshape(l_a, {1, cfg_.arch_embed + 2 * cfg_.align_dim});
  NodeId h1 = g.relu(g.add(g.matmul(l_a, bind(g, "reg.l1.w")), bind(g, "reg.l1.b")));
  NodeId out = g.add(g.matmul(h1, bind(g, "reg.l2.w")), bind(g, "reg.l2.b"));
  return g.reshape(out, {});
}

Graph::NodeId TapModel::build_predict(Graph& g, const Binder& bind, const GenotypeEncoding& enc,
                                      const TapTaskFeatures& tf) const {
  auto [sem, stat] = build_task_embedding(g, bind, tf);
  return build_predict_with_task(g, bind, enc, sem, stat);
}

Tensor TapModel::afl_encode(const GenotypeEncoding& enc) const {
  Graph g;
  return g.tensor(build_afl_impl(g, default_binder(), cfg_, enc));
}

Tensor TapModel::tfl_semantic(const Tensor& windows) const {
  Graph g;
  TapTaskFeatures tf;
  tf.windows = windows;
  tf.stat = Tensor({cfg_.stat_dim});
  auto bind = default_binder();
  const int d = cfg_.set_dim;
  NodeId w = g.value(tf.windows);
  NodeId e = g.add(g.matmul(w, bind(g, "tfl.embed.w")), bind(g, "tfl.embed.b"));
  NodeId intra = sab(g, bind, "tfl.intra.sab.", e, d);
  NodeId series = pma(g, bind, "tfl.intra.pma.", intra, d);
  series = g.reshape(series, {windows.dim(0), d});
  NodeId inter = sab(g, bind, "tfl.inter.sab.", series, d);
  NodeId d_a = pma(g, bind, "tfl.inter.pma.", inter, d);
  return g.tensor(g.reshape(d_a, {d}));
}

TaskEmbedding TapModel::task_embedding(const TapTaskFeatures& tf) const {
  Graph g;
  auto [sem, stat] = build_task_embedding(g, default_binder(), tf);
  TaskEmbedding out;
  out.semantic_aligned = g.tensor(sem);
  out.stat_aligned = g.tensor(stat);
  return out;
}

double TapModel::predict(const GenotypeEncoding& enc, const TaskEmbedding& temb) const {
  Graph g;
  NodeId sem = g.value(temb.semantic_aligned);
  NodeId stat = g.value(temb.stat_aligned);
  return g.tensor(build_predict_with_task(g, default_binder(), enc, sem, stat)).value();
}

double TapModel::predict_accuracy(const Genotype& geno, const OperatorVocabulary& vocab,
                                  const TapTaskFeatures& tf) const {
  return predict(searchspace::encode_genotype(geno, vocab), task_embedding(tf));
}

void TapModel::save(const std::filesystem::path& base) const {
  numgrad::save_params(base, params_);
  nlohmann::json j;
  j["gcn_layers"] = cfg_.gcn_layers;
  j["gcn_hidden"] = cfg_.gcn_hidden;
  j["arch_embed"] = cfg_.arch_embed;
  j["set_dim"] = cfg_.set_dim;
  j["align_dim"] = cfg_.align_dim;
  j["reg_hidden"] = cfg_.reg_hidden;
  j["window_len"] = cfg_.window_len;
  j["n_series"] = cfg_.n_series;
  j["n_windows"] = cfg_.n_windows;
  j["stat_dim"] = cfg_.stat_dim;
  j["feature_dim"] = cfg_.feature_dim;
  std::vector<double> mean(static_cast<std::size_t>(cfg_.stat_dim)), sd(mean);
  for (int i = 0; i < cfg_.stat_dim; ++i) {
    mean[static_cast<std::size_t>(i)] = stat_mean_[i];
    sd[static_cast<std::size_t>(i)] = stat_std_[i];
  }
  j["stat_mean"] = mean;
  j["stat_std"] = sd;
  std::filesystem::path cfg_path = base;
  cfg_path += ".config.json";
  std::ofstream f(cfg_path);
  if (!f) throw std::runtime_error("cannot write " + cfg_path.string());
  f << j.dump(2) << '\n';
}

TapModel TapModel::load(const std::filesystem::path& base) {
  std::filesystem::path cfg_path = base;
  cfg_path += ".config.json";
  std::ifstream f(cfg_path);
  if (!f) throw std::runtime_error("cannot read " + cfg_path.string());
  nlohmann::json j = nlohmann::json::parse(f);
  TapConfig cfg;
  cfg.gcn_layers = j.at("gcn_layers").get<int>();
  cfg.gcn_hidden = j.at("gcn_hidden").get<int>();
  cfg.arch_embed = j.at("arch_embed").get<int>();
  cfg.set_dim = j.at("set_dim").get<int>();
  cfg.align_dim = j.at("align_dim").get<int>();
  cfg.reg_hidden = j.at("reg_hidden").get<int>();
  cfg.window_len = j.at("window_len").get<int>();
  cfg.n_series = j.at("n_series").get<int>();
  cfg.n_windows = j.at("n_windows").get<int>();
  cfg.stat_dim = j.at("stat_dim").get<int>();
  cfg.feature_dim = j.at("feature_dim").get<int>();
  TapModel m(cfg, 0);
  ParamStore loaded = numgrad::load_params(base);
  for (auto& [name, t] : m.params_) {
    t = loaded.at(name);
    t.requires_grad = true;
  }
  const auto mean = j.at("stat_mean").get<std::vector<double>>();
  const auto sd = j.at("stat_std").get<std::vector<double>>();
  m.stat_mean_ = Tensor({cfg.stat_dim}, mean);
  m.stat_std_ = Tensor({cfg.stat_dim}, sd);
  return m;
}

}  // namespace ctsnas::tap
