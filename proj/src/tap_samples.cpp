#include "ctsnas/tap/samples.hpp"

#include "ctsnas/common/parallel.hpp"
#include "ctsnas/numgrad/adam.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

namespace ctsnas::tap {

void SampleStore::renormalize() {
  std::map<int, std::pair<double, double>> minmax;
  for (const SampleRecord& r : records_) {
    auto [it, fresh] = minmax.try_emplace(r.task_id, std::make_pair(r.raw_val_mae, r.raw_val_mae));
    if (!fresh) {
      it->second.first = std::min(it->second.first, r.raw_val_mae);
      it->second.second = std::max(it->second.second, r.raw_val_mae);
    }
  }
  for (SampleRecord& r : records_) {
    const auto [lo, hi] = minmax.at(r.task_id);
    r.norm_val_mae = hi - lo < 1e-12 ? 0.0 : (r.raw_val_mae - lo) / (hi - lo);
  }
}

std::vector<int> SampleStore::task_ids() const {
  std::vector<int> ids;
  for (const SampleRecord& r : records_)
    if (std::find(ids.begin(), ids.end(), r.task_id) == ids.end()) ids.push_back(r.task_id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

void SampleStore::save_jsonl(const std::filesystem::path& path,
                             const OperatorVocabulary& vocab) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  for (const SampleRecord& r : records_) {
    nlohmann::json j;
    j["stage"] = r.stage;
    j["task_id"] = r.task_id;
    j["genotype"] = nlohmann::json::parse(searchspace::genotype_to_json(r.genotype, vocab));
    j["raw_mae"] = r.raw_val_mae;
    j["norm_mae"] = r.norm_val_mae;
    f << j.dump() << '\n';
  }
}

SampleStore SampleStore::load_jsonl(const std::filesystem::path& path,
                                    const OperatorVocabulary& vocab) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  SampleStore out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    SampleRecord r;
    r.stage = j.at("stage").get<int>();
    r.task_id = j.at("task_id").get<int>();
    r.genotype = searchspace::genotype_from_json(j.at("genotype").dump(), vocab);
    r.raw_val_mae = j.at("raw_mae").get<double>();
    r.norm_val_mae = j.at("norm_mae").get<double>();
    out.add(std::move(r));
  }
  return out;
}

RealTrainingSource::RealTrainingSource(const std::vector<ForecastTask>& tasks,
                                       const OperatorVocabulary& vocab,
                                       stblock::TrainOptions train, int hidden, BlockSink sink)
    : tasks_(tasks), vocab_(vocab), train_(train), hidden_(hidden), sink_(std::move(sink)) {
  if (tasks_.empty()) throw std::invalid_argument("no tasks registered");
}

pruner::BlockEval RealTrainingSource::evaluate(const Genotype& g, int stage, int comb_idx,
                                               int block_idx, long global_idx,
                                               std::uint64_t seed) {
  pruner::BlockEval ev;
  ev.task_id = static_cast<int>(global_idx % static_cast<long>(tasks_.size()));
  const ForecastTask& task = tasks_[static_cast<std::size_t>(ev.task_id)];
  try {
    auto model = stblock::BlockModel::instantiate(g, vocab_, task, hidden_, seed);
    stblock::TrainOptions opts = train_;
    opts.seed = seed;
    opts.compute_test_metrics = false;
    auto rep = stblock::train_block(model, task, opts);
    if (rep.diverged || !std::isfinite(rep.best_val_mae)) {
      ev.ok = false;
      ev.note = "training diverged";
      return ev;
    }
    ev.raw_error = rep.best_val_mae;
    if (sink_) {
      std::lock_guard<std::mutex> lock(mu_);
      const auto key = std::make_tuple(stage, comb_idx, block_idx);
      pending_meta_[key] = {ev.task_id, rep.best_val_mae};
      pending_.emplace(key, std::move(model));
    }
  } catch (const std::exception& e) {
    ev.ok = false;
    ev.note = e.what();
  }
  return ev;
}

void RealTrainingSource::flush_ordered() {
  if (!sink_) return;
  for (auto& [key, model] : pending_) {
    const auto [task_id, mae] = pending_meta_.at(key);
    TrainedBlock tb;
    tb.genotype = model.genotype();
    tb.task_id = task_id;
    tb.raw_val_mae = mae;
    tb.tag = model.dims().tag;
    tb.model = &model;
    sink_(tb);
  }
  pending_.clear();
  pending_meta_.clear();
}

CollectResult collect_samples(const std::vector<ForecastTask>& tasks,
                              const OperatorVocabulary& vocab, const CollectConfig& cfg,
                              std::uint64_t seed, pruner::PruneSink* sink,
                              const BlockSink& block_sink) {
  const int r = cfg.edf.blocks_per_comb;
  if (static_cast<int>(tasks.size()) < r)
    throw std::invalid_argument("collect_samples: " + std::to_string(tasks.size()) +
                                " tasks registered but r=" + std::to_string(r) +
                                " blocks per comb require at least r tasks");

  RealTrainingSource source(tasks, vocab, cfg.train, cfg.hidden, block_sink);
  auto space = searchspace::enumerate_combs(vocab.size(), cfg.n_ops);
  pruner::PruneState state = pruner::init_prune_state(std::move(space), cfg.edf);
  while (state.stage < state.n_stages) {
    pruner::prune_round(state, source, cfg.edf, seed, sink);
    source.flush_ordered();
  }

  CollectResult out;
  for (const pruner::SampleEntry& s : state.samples) {
    SampleRecord rec;
    rec.task_id = s.task_id;
    rec.genotype = s.genotype;
    rec.raw_val_mae = s.raw_error;
    rec.stage = s.stage;
    out.store.add(std::move(rec));
  }

  // S_e: z blocks from the final space, each trained on the first r tasks
  // (cycled when fewer tasks than r)
  if (cfg.z_final > 0 && !state.surviving.empty()) {
    Rng se_rng(derive_seed(seed, 0x5e));
    std::vector<double> weights;
    double total = 0;
    for (const auto& c : state.surviving) {
      const double w = static_cast<double>(searchspace::comb_block_count(c));
      weights.push_back(w);
      total += w;
    }
    std::vector<Genotype> blocks;
    for (int k = 0; k < cfg.z_final; ++k) {
      double u = se_rng.uniform_real() * total;
      std::size_t pick = 0;
      for (; pick + 1 < weights.size() && u > weights[pick]; ++pick) u -= weights[pick];
      blocks.push_back(searchspace::sample_block_from_comb(state.surviving[pick], se_rng));
    }
    const int se_tasks = cfg.se_tasks > 0 ? cfg.se_tasks : r;
    struct SeResult {
      double mae = 0;
      bool ok = false;
      stblock::BlockModel model;
    };
    std::vector<SeResult> results(static_cast<std::size_t>(cfg.z_final * se_tasks));
    parallel_for(cfg.z_final * se_tasks, cfg.edf.workers, [&](int slot) {
      const int k = slot / se_tasks, j = slot % se_tasks;
      const int task_id = j % static_cast<int>(tasks.size());
      const std::uint64_t s = derive_seed(derive_seed(seed, 0x5e1), static_cast<std::uint64_t>(k),
                                          static_cast<std::uint64_t>(j));
      try {
        auto model = stblock::BlockModel::instantiate(blocks[static_cast<std::size_t>(k)], vocab,
                                                      tasks[static_cast<std::size_t>(task_id)],
                                                      cfg.hidden, s);
        stblock::TrainOptions opts = cfg.train;
        opts.seed = s;
        opts.compute_test_metrics = false;
        auto rep = stblock::train_block(model, tasks[static_cast<std::size_t>(task_id)], opts);
        if (!rep.diverged && std::isfinite(rep.best_val_mae)) {
          results[static_cast<std::size_t>(slot)] =
              SeResult{rep.best_val_mae, true, std::move(model)};
        }
      } catch (const std::exception&) {
        // dropped below
      }
    });
    for (int slot = 0; slot < cfg.z_final * se_tasks; ++slot) {
      const int j = slot % se_tasks;
      const int task_id = j % static_cast<int>(tasks.size());
      SeResult& res = results[static_cast<std::size_t>(slot)];
      if (!res.ok) {
        if (sink) sink->on_warning("S_e slot " + std::to_string(slot) + " dropped");
        continue;
      }
      SampleRecord rec;
      rec.task_id = task_id;
      rec.genotype = res.model.genotype();
      rec.raw_val_mae = res.mae;
      rec.stage = -1;
      out.store.add(rec);
      if (block_sink) {
        TrainedBlock tb;
        tb.genotype = res.model.genotype();
        tb.task_id = task_id;
        tb.raw_val_mae = res.mae;
        tb.tag = res.model.dims().tag;
        tb.model = &res.model;
        block_sink(tb);
      }
    }
  }

  out.store.renormalize();
  out.prune = std::move(state);
  return out;
}

PretrainReport pretrain(TapModel& tap, const SampleStore& store,
                        const std::map<int, TapTaskFeatures>& features,
                        const OperatorVocabulary& vocab, const PretrainOptions& opts) {
  if (store.size() == 0) throw std::invalid_argument("pretrain: empty sample store");
  for (int id : store.task_ids())
    if (!features.count(id))
      throw std::invalid_argument("pretrain: missing features for task " + std::to_string(id));

  // statistical-vector normalization from the distinct training tasks
  {
    const int dim = tap.config().stat_dim;
    Tensor mean({dim}), sd({dim});
    const double n = static_cast<double>(features.size());
    for (const auto& [id, tf] : features)
      for (int i = 0; i < dim; ++i) mean[i] += tf.stat[i] / n;
    for (const auto& [id, tf] : features)
      for (int i = 0; i < dim; ++i) {
        const double d = tf.stat[i] - mean[i];
        sd[i] += d * d / n;
      }
    for (int i = 0; i < dim; ++i) sd[i] = std::sqrt(sd[i]) > 1e-9 ? std::sqrt(sd[i]) : 1.0;
    tap.set_stat_norm(std::move(mean), std::move(sd));
  }

  // pre-encode genotypes once
  const auto& records = store.records();
  std::vector<searchspace::GenotypeEncoding> encodings;
  encodings.reserve(records.size());
  for (const auto& r : records) encodings.push_back(searchspace::encode_genotype(r.genotype, vocab));

  // stratified holdout by task
  std::vector<std::size_t> train_idx, hold_idx;
  {
    std::map<int, std::vector<std::size_t>> by_task;
    for (std::size_t i = 0; i < records.size(); ++i) by_task[records[i].task_id].push_back(i);
    for (auto& [task_id, idx] : by_task) {
      Rng rng(derive_seed(opts.seed, 0x40, static_cast<std::uint64_t>(task_id)));
      rng.shuffle(idx);
      std::size_t nh = idx.size() >= 2
                           ? static_cast<std::size_t>(std::ceil(opts.holdout * static_cast<double>(idx.size())))
                           : 0;
      nh = std::min(nh, idx.size() - 1);
      for (std::size_t i = 0; i < idx.size(); ++i)
        (i < nh ? hold_idx : train_idx).push_back(idx[i]);
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(hold_idx.begin(), hold_idx.end());
  }

  numgrad::Adam opt(numgrad::AdamConfig{.lr = opts.lr, .weight_decay = opts.weight_decay});
  PretrainReport rep;
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;
  numgrad::ParamStore snapshot;
  auto take_snapshot = [&]() {
    numgrad::ParamStore copy;
    for (const auto& [name, t] : tap.params()) copy.create(name, t);
    return copy;
  };
  auto holdout_mse = [&]() {
    if (hold_idx.empty()) return 0.0;
    std::map<int, TaskEmbedding> temb;
    double mse = 0;
    for (std::size_t i : hold_idx) {
      const auto& r = records[i];
      auto it = temb.find(r.task_id);
      if (it == temb.end())
        it = temb.emplace(r.task_id, tap.task_embedding(features.at(r.task_id))).first;
      const double p = tap.predict(encodings[i], it->second);
      mse += (p - r.norm_val_mae) * (p - r.norm_val_mae);
    }
    return mse / static_cast<double>(hold_idx.size());
  };

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    Rng rng(derive_seed(opts.seed, 0x41, static_cast<std::uint64_t>(epoch)));
    std::vector<std::size_t> order = train_idx;
    rng.shuffle(order);
    double loss_sum = 0;
    int batches = 0;
    bool diverged = false;
    for (std::size_t from = 0; from < order.size(); from += static_cast<std::size_t>(opts.batch)) {
      const std::size_t count =
          std::min<std::size_t>(static_cast<std::size_t>(opts.batch), order.size() - from);
      Graph g;
      auto bind = tap.default_binder();
      std::map<int, std::pair<Graph::NodeId, Graph::NodeId>> task_nodes;
      Graph::NodeId total = -1;
      for (std::size_t b = 0; b < count; ++b) {
        const auto& r = records[order[from + b]];
        auto it = task_nodes.find(r.task_id);
        if (it == task_nodes.end())
          it = task_nodes
                   .emplace(r.task_id,
                            tap.build_task_embedding(g, bind, features.at(r.task_id)))
                   .first;
        auto pred = tap.build_predict_with_task(g, bind, encodings[order[from + b]],
                                                it->second.first, it->second.second);
        auto diff = g.sub(pred, g.value(Tensor::scalar(r.norm_val_mae)));
        auto sq = g.mul(diff, diff);
        total = total < 0 ? sq : g.add(total, sq);
      }
      auto loss = g.scale(total, 1.0 / static_cast<double>(count));
      const double loss_v = g.tensor(loss).value();
      if (!std::isfinite(loss_v)) {
        diverged = true;
        break;
      }
      g.backward(loss);
      opt.step(tap.params(), g.param_grads());
      loss_sum += loss_v;
      ++batches;
    }
    rep.epochs_run = epoch + 1;
    if (diverged) {
      rep.diverged = true;
      break;
    }
    rep.train_curve.push_back(loss_sum / std::max(batches, 1));
    const double h = holdout_mse();
    rep.holdout_curve.push_back(h);
    if (h < best) {
      best = h;
      rep.best_epoch = epoch;
      since_best = 0;
      snapshot = take_snapshot();
    } else {
      ++since_best;
    }
    if (since_best >= opts.patience) break;
  }
  if (rep.best_epoch >= 0 && snapshot.size() > 0) {
    for (auto& [name, t] : tap.params()) {
      t = snapshot.at(name);
      t.requires_grad = true;
    }
  }
  rep.best_holdout_mse = best;
  return rep;
}

}  // namespace ctsnas::tap
