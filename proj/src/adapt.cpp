#include "ctsnas/adapt/adapt.hpp"

#include "ctsnas/common/rng.hpp"
#include "ctsnas/numgrad/adam.hpp"
#include "ctsnas/searchspace/encoding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace ctsnas::adapt {

namespace {

// directed edges of the block DAG with input node 0 and output node n+1
std::set<std::pair<int, int>> dag_edges(const Genotype& g) {
  const int n = g.n_ops();
  std::set<std::pair<int, int>> edges;
  std::vector<bool> has_successor(static_cast<std::size_t>(n + 1), false);
  for (int j = 0; j < n; ++j) {
    edges.emplace(g.preds[static_cast<std::size_t>(j)], j + 1);
    has_successor[static_cast<std::size_t>(g.preds[static_cast<std::size_t>(j)])] = true;
  }
  for (int v = 1; v <= n; ++v)
    if (!has_successor[static_cast<std::size_t>(v)]) edges.emplace(v, n + 1);
  return edges;
}

struct GedProblem {
  const Genotype* small;
  const Genotype* big;
  std::set<std::pair<int, int>> e_small, e_big;
  int n_small, n_big;

  // edge cost over pairs whose endpoints are all decided by the partial map;
  // map[v] = node in big (0 and n+1 pinned, -1 undecided)
  int edge_cost(const std::vector<int>& map, bool complete) const {
    int cost = 0;
    for (const auto& [u, v] : e_small) {
      const int mu = map[static_cast<std::size_t>(u)], mv = map[static_cast<std::size_t>(v)];
      if (mu < 0 || mv < 0) continue;
      if (!e_big.count({mu, mv})) ++cost;
    }
    if (!complete) return cost;
    // unmatched big edges
    std::set<std::pair<int, int>> hit;
    for (const auto& [u, v] : e_small) {
      const int mu = map[static_cast<std::size_t>(u)], mv = map[static_cast<std::size_t>(v)];
      if (mu >= 0 && mv >= 0 && e_big.count({mu, mv})) hit.emplace(mu, mv);
    }
    cost += static_cast<int>(e_big.size() - hit.size());
    return cost;
  }
};

int label_of(const Genotype& g, int node) {  // node in 1..n
  return g.labels[static_cast<std::size_t>(node - 1)];
}

void ged_dfs(const GedProblem& p, std::vector<int>& map, std::vector<bool>& used, int next,
             int label_cost, int& best) {
  // bound: labels so far plus edge mismatches already decided
  if (label_cost + p.edge_cost(map, false) >= best) return;
  if (next > p.n_small) {
    const int full = label_cost + p.edge_cost(map, true) + (p.n_big - p.n_small);
    best = std::min(best, full);
    return;
  }
  for (int target = 1; target <= p.n_big; ++target) {
    if (used[static_cast<std::size_t>(target)]) continue;
    map[static_cast<std::size_t>(next)] = target;
    used[static_cast<std::size_t>(target)] = true;
    const int step = label_of(*p.small, next) == label_of(*p.big, target) ? 0 : 1;
    ged_dfs(p, map, used, next + 1, label_cost + step, best);
    used[static_cast<std::size_t>(target)] = false;
    map[static_cast<std::size_t>(next)] = -1;
  }
}

}  // namespace

int graph_edit_distance(const Genotype& a, const Genotype& b, int exact_cap, int beam_width) {
  const Genotype& small = a.n_ops() <= b.n_ops() ? a : b;
  const Genotype& big = a.n_ops() <= b.n_ops() ? b : a;
  GedProblem p;
  p.small = &small;
  p.big = &big;
  p.e_small = dag_edges(small);
  p.e_big = dag_edges(big);
  p.n_small = small.n_ops();
  p.n_big = big.n_ops();

  // map over node ids of the small graph: 0..n_small+1
  std::vector<int> map(static_cast<std::size_t>(p.n_small + 2), -1);
  map[0] = 0;
  map[static_cast<std::size_t>(p.n_small + 1)] = p.n_big + 1;

  if (p.n_big <= exact_cap) {
    std::vector<bool> used(static_cast<std::size_t>(p.n_big + 1), false);
    int best = std::numeric_limits<int>::max();
    ged_dfs(p, map, used, 1, 0, best);
    return best;
  }

  // greedy beam over node assignments in index order
  struct Partial {
    std::vector<int> map;
    std::vector<bool> used;
    int cost = 0;
  };
  std::vector<Partial> beam;
  {
    Partial root;
    root.map = map;
    root.used.assign(static_cast<std::size_t>(p.n_big + 1), false);
    beam.push_back(std::move(root));
  }
  for (int next = 1; next <= p.n_small; ++next) {
    std::vector<Partial> grown;
    for (const Partial& cur : beam) {
      for (int target = 1; target <= p.n_big; ++target) {
        if (cur.used[static_cast<std::size_t>(target)]) continue;
        Partial nxt = cur;
        const int before = p.edge_cost(nxt.map, false);
        nxt.map[static_cast<std::size_t>(next)] = target;
        nxt.used[static_cast<std::size_t>(target)] = true;
        nxt.cost += (label_of(small, next) == label_of(big, target) ? 0 : 1) +
                    (p.edge_cost(nxt.map, false) - before);
        grown.push_back(std::move(nxt));
      }
    }
    std::sort(grown.begin(), grown.end(), [](const Partial& x, const Partial& y) {
      if (x.cost != y.cost) return x.cost < y.cost;
      return x.map < y.map;
    });
    if (static_cast<int>(grown.size()) > beam_width) grown.resize(static_cast<std::size_t>(beam_width));
    beam = std::move(grown);
  }
  int best = std::numeric_limits<int>::max();
  for (const Partial& cur : beam) {
    const int full = cur.cost - p.edge_cost(cur.map, false) + p.edge_cost(cur.map, true) +
                     (p.n_big - p.n_small);
    best = std::min(best, full);
  }
  return best;
}

std::vector<int> borda_order(const std::vector<int>& ged, const std::vector<double>& cosine,
                             const std::vector<Genotype>& genotypes) {
  const std::size_t n = ged.size();
  auto ranks_of = [&](auto better) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), better);
    std::vector<int> rank(n);
    for (std::size_t i = 0; i < n; ++i) rank[static_cast<std::size_t>(idx[i])] = static_cast<int>(i);
    return rank;
  };
  auto canon = [&](int x, int y) { return searchspace::genotype_less(genotypes[static_cast<std::size_t>(x)], genotypes[static_cast<std::size_t>(y)]); };
  std::vector<int> r1 = ranks_of([&](int x, int y) {
    if (ged[static_cast<std::size_t>(x)] != ged[static_cast<std::size_t>(y)]) return ged[static_cast<std::size_t>(x)] < ged[static_cast<std::size_t>(y)];
    return canon(x, y);
  });
  std::vector<int> r2 = ranks_of([&](int x, int y) {
    if (cosine[static_cast<std::size_t>(x)] != cosine[static_cast<std::size_t>(y)]) return cosine[static_cast<std::size_t>(x)] > cosine[static_cast<std::size_t>(y)];
    return canon(x, y);
  });
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int x, int y) {
    const int bx = r1[static_cast<std::size_t>(x)] + r2[static_cast<std::size_t>(x)];
    const int by = r1[static_cast<std::size_t>(y)] + r2[static_cast<std::size_t>(y)];
    if (bx != by) return bx < by;
    if (ged[static_cast<std::size_t>(x)] != ged[static_cast<std::size_t>(y)]) return ged[static_cast<std::size_t>(x)] < ged[static_cast<std::size_t>(y)];
    return canon(x, y);
  });
  return order;
}

namespace {

std::string instance_prefix_of(const InstanceAdaptation& inst) {
  return inst.node >= 0 ? stblock::BlockModel::instance_prefix(inst.node, inst.op_name)
                        : std::string("embed.");
}

bool donor_embed_compatible(const DonorCandidate& donor, const stblock::BlockModel& identified) {
  for (const char* nm : {"embed.w", "embed.b"}) {
    if (!donor.params->has(nm) ||
        donor.params->at(nm).shape() != identified.params().at(nm).shape())
      return false;
  }
  return true;
}

// donor block carries a shape-compatible instance of the operator
bool donor_compatible(const DonorCandidate& donor, const stblock::BlockModel& identified,
                      int identified_node, int label, const OperatorVocabulary& vocab) {
  const std::string op = vocab.op(label).name;
  for (int j = 0; j < donor.genotype.n_ops(); ++j) {
    if (donor.genotype.labels[static_cast<std::size_t>(j)] != label) continue;
    bool ok = true;
    for (const std::string& full : identified.instance_param_names(identified_node)) {
      const std::string suffix =
          full.substr(stblock::BlockModel::instance_prefix(identified_node, op).size());
      const std::string donor_name = stblock::BlockModel::instance_prefix(j, op) + suffix;
      if (!donor.params->has(donor_name) ||
          donor.params->at(donor_name).shape() != identified.params().at(full).shape()) {
        ok = false;
        break;
      }
    }
    if (ok) return true;
  }
  return false;
}

}  // namespace

DonorSelection select_donors(const stblock::BlockModel& identified,
                             const std::vector<DonorCandidate>& candidates,
                             const tap::TapModel& tap, const OperatorVocabulary& vocab, int n) {
  DonorSelection sel;
  std::vector<Genotype> genos;
  genos.reserve(candidates.size());
  for (const auto& c : candidates) genos.push_back(c.genotype);

  const Tensor own = tap.afl_encode(searchspace::encode_genotype(identified.genotype(), vocab));
  auto cos = [&](const Tensor& other) {
    double dot = 0, na = 0, nb = 0;
    for (long i = 0; i < own.numel(); ++i) {
      dot += own[i] * other[i];
      na += own[i] * own[i];
      nb += other[i] * other[i];
    }
    const double denom = std::sqrt(na * nb);
    return denom > 0 ? dot / denom : 0.0;
  };
  for (const auto& c : candidates) {
    sel.ged.push_back(graph_edit_distance(identified.genotype(), c.genotype));
    sel.cosine.push_back(cos(tap.afl_encode(searchspace::encode_genotype(c.genotype, vocab))));
  }
  sel.order = candidates.empty() ? std::vector<int>{} : borda_order(sel.ged, sel.cosine, genos);

  std::set<int> labels_seen;
  for (int j = 0; j < identified.genotype().n_ops(); ++j) {
    const int label = identified.genotype().labels[static_cast<std::size_t>(j)];
    if (!labels_seen.insert(label).second) continue;
    if (identified.instance_param_names(j).empty()) continue;  // parameter-free (skip)
    DonorSelection::PerOp po;
    po.label = label;
    po.op_name = vocab.op(label).name;
    for (int idx : sel.order) {
      if (static_cast<int>(po.donors.size()) >= n) break;
      const DonorCandidate& c = candidates[static_cast<std::size_t>(idx)];
      if (c.tag != identified.dims().tag) continue;
      if (donor_compatible(c, identified, j, label, vocab)) po.donors.push_back(idx);
    }
    po.fallback = po.donors.empty();
    sel.per_op.push_back(std::move(po));
  }
  for (int idx : sel.order) {
    if (static_cast<int>(sel.embed_donors.size()) >= n) break;
    const DonorCandidate& c = candidates[static_cast<std::size_t>(idx)];
    if (c.tag != identified.dims().tag) continue;
    if (donor_embed_compatible(c, identified)) sel.embed_donors.push_back(idx);
  }
  sel.embed_fallback = sel.embed_donors.empty();
  return sel;
}

AdaptPlan make_plan(const stblock::BlockModel& identified, const DonorSelection& sel,
                    const std::vector<DonorCandidate>& candidates,
                    const OperatorVocabulary& vocab) {
  AdaptPlan plan;
  plan.selection = sel;
  {
    InstanceAdaptation embed;
    embed.node = -1;
    embed.op_name = "embed";
    if (sel.embed_fallback) {
      embed.fallback = true;
    } else {
      for (int idx : sel.embed_donors) embed.groups.push_back(AlphaGroup{idx, -1});
      for (const char* suffix : {"w", "b"})
        embed.alpha[suffix] = std::vector<double>(embed.groups.size(), 1.0);
    }
    plan.instances.push_back(std::move(embed));
  }
  for (int j = 0; j < identified.genotype().n_ops(); ++j) {
    const int label = identified.genotype().labels[static_cast<std::size_t>(j)];
    if (identified.instance_param_names(j).empty()) continue;
    InstanceAdaptation inst;
    inst.node = j;
    inst.op_name = vocab.op(label).name;
    const DonorSelection::PerOp* po = nullptr;
    for (const auto& cand : sel.per_op)
      if (cand.label == label) po = &cand;
    if (!po || po->fallback) {
      inst.fallback = true;
      plan.instances.push_back(std::move(inst));
      continue;
    }
    for (int idx : po->donors) {
      const DonorCandidate& donor = candidates[static_cast<std::size_t>(idx)];
      for (int dj = 0; dj < donor.genotype.n_ops(); ++dj) {
        if (donor.genotype.labels[static_cast<std::size_t>(dj)] != label) continue;
        if (!donor_compatible(donor, identified, j, label, vocab)) continue;
        inst.groups.push_back(AlphaGroup{idx, dj});
      }
    }
    if (inst.groups.empty()) {
      inst.fallback = true;
    } else {
      const std::string prefix = stblock::BlockModel::instance_prefix(j, inst.op_name);
      for (const std::string& full : identified.instance_param_names(j)) {
        const std::string suffix = full.substr(prefix.size());
        inst.alpha[suffix] = std::vector<double>(inst.groups.size(), 1.0);
      }
    }
    plan.instances.push_back(std::move(inst));
  }
  return plan;
}

std::map<std::string, Tensor> build_w_init(const AdaptPlan& plan,
                                           const std::vector<DonorCandidate>& candidates,
                                           const stblock::BlockModel& identified) {
  std::map<std::string, Tensor> out;
  for (const InstanceAdaptation& inst : plan.instances) {
    if (inst.fallback) continue;
    const std::string prefix = instance_prefix_of(inst);
    const double k = static_cast<double>(inst.groups.size());
    for (const auto& [suffix, alphas] : inst.alpha) {
      Tensor acc = Tensor::zeros_like(identified.params().at(prefix + suffix));
      for (std::size_t g = 0; g < inst.groups.size(); ++g) {
        const AlphaGroup& grp = inst.groups[g];
        const DonorCandidate& donor = candidates[static_cast<std::size_t>(grp.candidate)];
        const std::string donor_name =
            grp.donor_node >= 0
                ? stblock::BlockModel::instance_prefix(grp.donor_node, inst.op_name) + suffix
                : "embed." + suffix;
        const Tensor& w = donor.params->at(donor_name);
        if (w.shape() != acc.shape())
          throw numgrad::ShapeError("w_init: donor tensor " + donor_name + " has shape " +
                                    numgrad::shape_str(w.shape()) + " but operator node " +
                                    std::to_string(inst.node) + " expects " +
                                    numgrad::shape_str(acc.shape()));
        acc.flat() += alphas[g] * w.flat();
      }
      acc.flat() /= k;
      out.emplace(prefix + suffix, std::move(acc));
    }
  }
  return out;
}

AlphaLearnReport learn_alpha(AdaptPlan& plan, const std::vector<DonorCandidate>& candidates,
                             stblock::BlockModel& identified, const ForecastTask& task,
                             const AlphaLearnOptions& opts) {
  using stblock::BlockModel;
  using numgrad::Graph;

  AlphaLearnReport rep;

  auto evaluate_plan = [&](const AdaptPlan& pl) {
    BlockModel probe = identified;  // value copy, params included
    for (auto& [name, t] : build_w_init(pl, candidates, identified)) {
      probe.params().at(name) = t;
      probe.params().at(name).requires_grad = true;
    }
    const auto metrics = stblock::evaluate_block(probe, task, stblock::Split::val);
    return metrics.tag == ctsdata::Tag::multi ? metrics.mae : metrics.rrse;
  };

  const auto splits0 = ctsdata::split_dataset(task);
  auto starts0 = ctsdata::window_starts(splits0.train, task.input_len, task.horizon);

  // warm-up: train the fresh parameters against the alpha = 1 inheritance
  if (opts.warmup_epochs > 0) {
    const auto w_one = build_w_init(plan, candidates, identified);
    numgrad::Adam warm_opt(numgrad::AdamConfig{.lr = 1e-3, .weight_decay = 0.0});
    for (int epoch = 0; epoch < opts.warmup_epochs; ++epoch) {
      Rng shuffle_rng(derive_seed(opts.seed, 0x3a2, static_cast<std::uint64_t>(epoch)));
      std::vector<int> order = starts0;
      shuffle_rng.shuffle(order);
      for (std::size_t from = 0; from < order.size(); from += static_cast<std::size_t>(opts.batch)) {
        const std::size_t count =
            std::min<std::size_t>(static_cast<std::size_t>(opts.batch), order.size() - from);
        auto batch = ctsdata::make_batch(task, order, from, count);
        Graph g;
        stblock::ParamBinder binder = [&](Graph& gg, const std::string& name) {
          auto it = w_one.find(name);
          if (it != w_one.end()) return gg.value(it->second);    // inherited, frozen
          return gg.param(name, identified.params().at(name));  // fresh, trained
        };
        auto input = g.value(stblock::normalize_input(batch.input, identified.scaler()));
        auto pred = identified.build_prediction(g, input, binder);
        auto loss =
            g.mae(pred, g.value(stblock::normalize_target(batch.target, identified.scaler())));
        if (!std::isfinite(g.tensor(loss).value())) break;
        g.backward(loss);
        warm_opt.step(identified.params(), g.param_grads());
      }
    }
  }

  rep.val_at_one = evaluate_plan(plan);
  rep.val_curve.push_back(rep.val_at_one);
  AdaptPlan best_plan = plan;
  double best_val = rep.val_at_one;
  if (opts.epochs == 0) {
    rep.val_at_learned = rep.val_at_one;
    return rep;
  }

  // alpha parameters
  numgrad::ParamStore alphas;
  for (const InstanceAdaptation& inst : plan.instances) {
    if (inst.fallback) continue;
    for (const auto& [suffix, values] : inst.alpha)
      for (std::size_t g = 0; g < values.size(); ++g)
        alphas.create("alpha." + std::to_string(inst.node) + "." + suffix + "." + std::to_string(g),
                      Tensor::scalar(values[g]));
  }
  if (alphas.size() == 0) {
    rep.val_at_learned = rep.val_at_one;
    return rep;
  }

  const auto splits = ctsdata::split_dataset(task);
  auto starts = ctsdata::window_starts(splits.train, task.input_len, task.horizon);
  numgrad::Adam opt(numgrad::AdamConfig{.lr = opts.lr, .weight_decay = 0.0});

  auto read_back = [&](AdaptPlan& pl) {
    for (InstanceAdaptation& inst : pl.instances) {
      if (inst.fallback) continue;
      for (auto& [suffix, values] : inst.alpha)
        for (std::size_t g = 0; g < values.size(); ++g)
          values[g] = alphas
                          .at("alpha." + std::to_string(inst.node) + "." + suffix + "." +
                              std::to_string(g))
                          .value();
    }
  };

  bool diverged = false;
  for (int epoch = 0; epoch < opts.epochs && !diverged; ++epoch) {
    Rng shuffle_rng(derive_seed(opts.seed, 0xa1fa, static_cast<std::uint64_t>(epoch)));
    std::vector<int> order = starts;
    shuffle_rng.shuffle(order);
    for (std::size_t from = 0; from < order.size(); from += static_cast<std::size_t>(opts.batch)) {
      const std::size_t count =
          std::min<std::size_t>(static_cast<std::size_t>(opts.batch), order.size() - from);
      auto batch = ctsdata::make_batch(task, order, from, count);
      Graph g;
      std::map<std::string, Graph::NodeId> adapted;
      for (const InstanceAdaptation& inst : plan.instances) {
        if (inst.fallback) continue;
        const std::string prefix = instance_prefix_of(inst);
        for (const auto& [suffix, values] : inst.alpha) {
          Graph::NodeId acc = -1;
          for (std::size_t grp = 0; grp < inst.groups.size(); ++grp) {
            const DonorCandidate& donor =
                candidates[static_cast<std::size_t>(inst.groups[grp].candidate)];
            const std::string donor_name =
                inst.groups[grp].donor_node >= 0
                    ? BlockModel::instance_prefix(inst.groups[grp].donor_node, inst.op_name) +
                          suffix
                    : "embed." + suffix;
            const std::string alpha_name = "alpha." + std::to_string(inst.node) + "." + suffix +
                                           "." + std::to_string(grp);
            auto term = g.mul(g.param(alpha_name, alphas.at(alpha_name)),
                              g.value(donor.params->at(donor_name)));
            acc = acc < 0 ? term : g.add(acc, term);
          }
          adapted[prefix + suffix] = g.scale(acc, 1.0 / static_cast<double>(inst.groups.size()));
        }
      }
      stblock::ParamBinder binder = [&](Graph& gg, const std::string& name) {
        auto it = adapted.find(name);
        if (it != adapted.end()) return it->second;
        return gg.value(identified.params().at(name));  // frozen fresh weights
      };
      auto input = g.value(stblock::normalize_input(batch.input, identified.scaler()));
      auto pred = identified.build_prediction(g, input, binder);
      auto loss = g.mae(pred, g.value(stblock::normalize_target(batch.target, identified.scaler())));
      const double loss_v = g.tensor(loss).value();
      if (!std::isfinite(loss_v)) {
        diverged = true;
        break;
      }
      g.backward(loss);
      opt.step(alphas, g.param_grads());
    }
    if (diverged) break;
    AdaptPlan probe = plan;
    read_back(probe);
    const double val = evaluate_plan(probe);
    rep.val_curve.push_back(val);
    if (val < best_val) {
      best_val = val;
      best_plan = probe;
    }
  }

  if (diverged) {
    rep.reverted = true;  // keep alpha = 1
    rep.val_at_learned = rep.val_at_one;
    return rep;
  }
  plan = best_plan;
  rep.val_at_learned = best_val;
  return rep;
}

stblock::TrainReport finetune(stblock::BlockModel& identified,
                              const std::map<std::string, Tensor>& w_init,
                              const ForecastTask& task, const stblock::TrainOptions& opts) {
  for (const auto& [name, t] : w_init) {
    identified.params().at(name) = t;
    identified.params().at(name).requires_grad = true;
  }
  return stblock::train_block(identified, task, opts);
}

nlohmann::json adaptation_report(const AdaptPlan& plan,
                                 const std::vector<DonorCandidate>& candidates,
                                 const AlphaLearnReport& alpha_rep,
                                 const OperatorVocabulary& vocab) {
  nlohmann::json j;
  nlohmann::json sims = nlohmann::json::array();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    nlohmann::json e;
    e["key"] = candidates[i].key;
    e["ged"] = plan.selection.ged[i];
    e["cosine"] = plan.selection.cosine[i];
    sims.push_back(e);
  }
  j["candidates"] = sims;
  nlohmann::json ops = nlohmann::json::array();
  for (const auto& po : plan.selection.per_op) {
    nlohmann::json e;
    e["operator"] = po.op_name;
    e["fallback"] = po.fallback;
    nlohmann::json dn = nlohmann::json::array();
    for (int idx : po.donors) dn.push_back(candidates[static_cast<std::size_t>(idx)].key);
    e["donors"] = dn;
    ops.push_back(e);
  }
  j["per_operator"] = ops;
  nlohmann::json insts = nlohmann::json::array();
  for (const auto& inst : plan.instances) {
    nlohmann::json e;
    e["node"] = inst.node;
    e["operator"] = inst.op_name;
    e["fallback"] = inst.fallback;
    e["groups"] = inst.groups.size();
    nlohmann::json al;
    for (const auto& [suffix, values] : inst.alpha) al[suffix] = values;
    e["alpha"] = al;
    insts.push_back(e);
  }
  j["instances"] = insts;
  j["alpha_val_at_one"] = alpha_rep.val_at_one;
  j["alpha_val_at_learned"] = alpha_rep.val_at_learned;
  j["alpha_val_curve"] = alpha_rep.val_curve;
  j["alpha_reverted"] = alpha_rep.reverted;
  (void)vocab;
  return j;
}

}  // namespace ctsnas::adapt
