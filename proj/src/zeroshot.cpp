#include "ctsnas/zeroshot/zeroshot.hpp"

#include "ctsnas/common/parallel.hpp"
#include "ctsnas/common/rng.hpp"

#include <algorithm>
#include <chrono>

namespace ctsnas::zeroshot {

TapAccuracySource::TapAccuracySource(const tap::TapModel& model, const OperatorVocabulary& vocab,
                                     const tap::TapTaskFeatures& tf)
    : model_(model), vocab_(vocab), task_embedding_(model.task_embedding(tf)) {}

double TapAccuracySource::score(const Genotype& g) const {
  return model_.predict(searchspace::encode_genotype(g, vocab_), task_embedding_);
}

pruner::BlockEval TapAccuracySource::evaluate(const Genotype& g, int, int, int, long,
                                              std::uint64_t) {
  pruner::BlockEval ev;
  ev.task_id = 0;
  ev.raw_error = score(g);
  return ev;
}

pruner::PruneState zero_shot_prune(const tap::TapModel& model, const OperatorVocabulary& vocab,
                                   const tap::TapTaskFeatures& tf, const ZeroShotConfig& cfg,
                                   std::uint64_t seed, pruner::PruneSink* sink) {
  TapAccuracySource source(model, vocab, tf);
  auto space = searchspace::enumerate_combs(vocab.size(), cfg.n_ops);
  pruner::EdfConfig edf = cfg.edf;
  edf.workers = cfg.workers;
  return pruner::run_pruning(std::move(space), edf, source, seed, sink);
}

ZeroShotResult rank_and_select(const tap::TapModel& model, const OperatorVocabulary& vocab,
                               const tap::TapTaskFeatures& tf, const std::vector<Comb>& pruned,
                               const ZeroShotConfig& cfg, std::uint64_t seed) {
  if (pruned.empty()) throw std::invalid_argument("rank_and_select: empty pruned space");
  const auto t0 = std::chrono::steady_clock::now();
  TapAccuracySource source(model, vocab, tf);

  ZeroShotResult res;
  res.pruned_comb_count = pruned.size();
  std::uint64_t total = 0;
  std::vector<std::uint64_t> sizes;
  for (const Comb& c : pruned) {
    const std::uint64_t n = searchspace::comb_block_count(c);
    sizes.push_back(n);
    total = total > UINT64_MAX - n ? UINT64_MAX : total + n;
  }
  res.pruned_space_blocks = total;

  std::vector<Genotype> candidates;
  if (total <= cfg.candidate_cap) {
    candidates.reserve(static_cast<std::size_t>(total));
    for (const Comb& c : pruned)
      searchspace::for_each_block_in_comb(c, [&](const Genotype& g) {
        candidates.push_back(g);
        return true;
      });
  } else {
    res.sampled_fallback = true;
    Rng rng(derive_seed(seed, 0x3a7e));
    candidates.reserve(static_cast<std::size_t>(cfg.candidate_cap));
    double weight_total = 0;
    for (std::uint64_t n : sizes) weight_total += static_cast<double>(n);
    for (std::uint64_t i = 0; i < cfg.candidate_cap; ++i) {
      double u = rng.uniform_real() * weight_total;
      std::size_t pick = 0;
      for (; pick + 1 < sizes.size() && u > static_cast<double>(sizes[pick]); ++pick)
        u -= static_cast<double>(sizes[pick]);
      candidates.push_back(searchspace::sample_block_from_comb(pruned[pick], rng));
    }
  }
  res.candidates_scored = static_cast<long>(candidates.size());

  std::vector<double> scores(candidates.size());
  parallel_for(static_cast<int>(candidates.size()), cfg.workers,
               [&](int i) { scores[static_cast<std::size_t>(i)] = source.score(candidates[static_cast<std::size_t>(i)]); });

  std::vector<std::size_t> order(candidates.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(cfg.top_k), order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<long>(keep), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (scores[a] != scores[b]) return scores[a] < scores[b];
                      return searchspace::genotype_less(candidates[a], candidates[b]);
                    });
  for (std::size_t i = 0; i < keep; ++i)
    res.top.push_back(RankedCandidate{candidates[order[i]], scores[order[i]]});
  res.selected = res.top.front().genotype;
  res.predicted_score = res.top.front().score;
  res.wall_seconds_rank =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

ZeroShotResult zero_shot_search(const tap::TapModel& model, const OperatorVocabulary& vocab,
                                const tap::TapTaskFeatures& tf, const ZeroShotConfig& cfg,
                                std::uint64_t seed, pruner::PruneSink* sink) {
  const auto t0 = std::chrono::steady_clock::now();
  pruner::PruneState pruned = zero_shot_prune(model, vocab, tf, cfg, seed, sink);
  const double prune_secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ZeroShotResult res = rank_and_select(model, vocab, tf, pruned.surviving, cfg, seed);
  res.wall_seconds_prune = prune_secs;
  return res;
}

nlohmann::json result_to_json(const ZeroShotResult& r, const OperatorVocabulary& vocab) {
  nlohmann::json j;
  j["selected"] = nlohmann::json::parse(searchspace::genotype_to_json(r.selected, vocab));
  j["predicted_score"] = r.predicted_score;
  j["pruned_comb_count"] = r.pruned_comb_count;
  j["pruned_space_blocks"] = r.pruned_space_blocks;
  j["candidates_scored"] = r.candidates_scored;
  j["sampled_fallback"] = r.sampled_fallback;
  j["wall_seconds_prune"] = r.wall_seconds_prune;
  j["wall_seconds_rank"] = r.wall_seconds_rank;
  nlohmann::json top = nlohmann::json::array();
  for (const auto& c : r.top) {
    nlohmann::json e;
    e["genotype"] = nlohmann::json::parse(searchspace::genotype_to_json(c.genotype, vocab));
    e["score"] = c.score;
    top.push_back(e);
  }
  j["top"] = top;
  return j;
}

}  // namespace ctsnas::zeroshot
