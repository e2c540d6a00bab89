#include "ctsnas/pruner/pruner.hpp"

#include "ctsnas/common/parallel.hpp"
#include "ctsnas/common/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ctsnas::pruner {

double compute_edf(const std::vector<double>& errors, double threshold) {
  if (errors.empty()) throw std::invalid_argument("EDF of an empty error list");
  long below = 0;
  for (double e : errors) {
    if (!std::isfinite(e)) throw std::invalid_argument("EDF over non-finite errors");
    if (e < threshold) ++below;
  }
  return static_cast<double>(below) / static_cast<double>(errors.size());
}

double threshold_schedule(double e0, double e_final, int n_p, int stage) {
  if (n_p < 1) throw std::invalid_argument("threshold schedule needs at least one stage");
  if (stage < 0 || stage >= n_p) throw std::invalid_argument("stage outside schedule");
  if (n_p == 1) return e_final;
  return e0 - (e0 - e_final) / static_cast<double>(n_p - 1) * static_cast<double>(stage);
}

std::pair<double, double> init_thresholds(std::vector<double> errors, int target_combs,
                                          int initial_combs) {
  if (errors.empty()) throw std::invalid_argument("init_thresholds: no stage-0 errors");
  std::sort(errors.begin(), errors.end());
  const std::size_t n = errors.size();
  const double median =
      n % 2 ? errors[n / 2] : 0.5 * (errors[n / 2 - 1] + errors[n / 2]);
  const double ratio =
      initial_combs > 0 ? static_cast<double>(target_combs) / initial_combs : 1.0;
  long k = static_cast<long>(std::ceil(ratio * static_cast<double>(n)));
  k = std::max<long>(1, std::min<long>(k, static_cast<long>(n)));
  return {median, errors[static_cast<std::size_t>(k - 1)]};
}

int stage_count(int initial_combs, int target_combs) {
  if (initial_combs < 1 || target_combs < 1)
    throw std::invalid_argument("stage_count: comb counts must be positive");
  int n_p = 0;
  long cover = target_combs;
  while (cover < initial_combs) {
    cover *= 2;
    ++n_p;
  }
  return n_p;
}

double normalized_error(const PruneState& state, int task_id, double raw, bool per_task) {
  if (!per_task) return raw;
  const auto it = state.task_minmax.find(task_id);
  if (it == state.task_minmax.end()) return raw;
  const auto [lo, hi] = it->second;
  if (hi - lo < 1e-12) return 0.0;
  return (raw - lo) / (hi - lo);
}

PruneState init_prune_state(std::vector<Comb> space, const EdfConfig& cfg) {
  if (space.empty()) throw std::invalid_argument("pruning over an empty comb space");
  if (cfg.combs_per_stage < 1 || cfg.blocks_per_comb < 1)
    throw std::invalid_argument("pruning config: c and r must be >= 1");
  std::sort(space.begin(), space.end());
  PruneState st;
  st.initial_combs = static_cast<int>(space.size());
  st.n_stages = stage_count(st.initial_combs, cfg.target_combs);
  st.surviving = std::move(space);
  return st;
}

void prune_round(PruneState& state, AccuracySource& source, const EdfConfig& cfg,
                 std::uint64_t root_seed, PruneSink* sink) {
  if (state.stage >= state.n_stages)
    throw std::logic_error("prune_round past the final stage");
  const int stage = state.stage;
  const bool per_task = source.normalize_per_task();

  // sample combs (canonical order within the stage)
  const int c = std::min<int>(cfg.combs_per_stage, static_cast<int>(state.surviving.size()));
  Rng comb_rng(derive_seed(root_seed, 0xA, static_cast<std::uint64_t>(stage)));
  std::vector<int> picked =
      comb_rng.sample_without_replacement(static_cast<int>(state.surviving.size()), c);
  std::sort(picked.begin(), picked.end());
  std::vector<Comb> sampled;
  sampled.reserve(picked.size());
  for (int i : picked) sampled.push_back(state.surviving[static_cast<std::size_t>(i)]);

  // sample blocks
  const int r = cfg.blocks_per_comb;
  std::vector<std::vector<Genotype>> blocks(static_cast<std::size_t>(c));
  for (int k = 0; k < c; ++k)
    blocks[static_cast<std::size_t>(k)] = searchspace::sample_blocks_from_comb(
        sampled[static_cast<std::size_t>(k)], r,
        derive_seed(root_seed, 0xB, static_cast<std::uint64_t>(stage), static_cast<std::uint64_t>(k)));

  // evaluate in a pool; results keyed by slot so worker count cannot matter
  const long base_global = static_cast<long>(state.samples.size());
  std::vector<BlockEval> evals(static_cast<std::size_t>(c) * static_cast<std::size_t>(r));
  parallel_for(c * r, cfg.workers, [&](int slot) {
    const int k = slot / r, b = slot % r;
    const std::uint64_t seed = derive_seed(derive_seed(root_seed, 0xC, static_cast<std::uint64_t>(stage)),
                                           static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(b));
    evals[static_cast<std::size_t>(slot)] = source.evaluate(
        blocks[static_cast<std::size_t>(k)][static_cast<std::size_t>(b)], stage, k, b,
        base_global + slot, seed);
  });

  // fold into accumulated samples; failures are dropped with a warning
  int dropped = 0;
  std::vector<SampleEntry> appended;
  for (int slot = 0; slot < c * r; ++slot) {
    const int k = slot / r, b = slot % r;
    const BlockEval& ev = evals[static_cast<std::size_t>(slot)];
    if (!ev.ok || !std::isfinite(ev.raw_error)) {
      ++dropped;
      if (sink)
        sink->on_warning("stage " + std::to_string(stage) + " comb " + std::to_string(k) +
                         " block " + std::to_string(b) + " dropped: " +
                         (ev.note.empty() ? "non-finite error" : ev.note));
      continue;
    }
    SampleEntry s;
    s.stage = stage;
    s.comb_idx = k;
    s.comb = sampled[static_cast<std::size_t>(k)];
    s.genotype = blocks[static_cast<std::size_t>(k)][static_cast<std::size_t>(b)];
    s.task_id = ev.task_id;
    s.raw_error = ev.raw_error;
    appended.push_back(std::move(s));
  }
  if (appended.empty())
    throw std::runtime_error("pruning stage " + std::to_string(stage) +
                             ": every block evaluation failed");

  for (const SampleEntry& s : appended) {
    auto [it, fresh] = state.task_minmax.try_emplace(s.task_id,
                                                     std::make_pair(s.raw_error, s.raw_error));
    if (!fresh) {
      it->second.first = std::min(it->second.first, s.raw_error);
      it->second.second = std::max(it->second.second, s.raw_error);
    }
  }
  for (SampleEntry& s : appended)
    s.norm_error = normalized_error(state, s.task_id, s.raw_error, per_task);
  for (const SampleEntry& s : appended) state.samples.push_back(s);
  if (sink) sink->on_samples(appended);

  // thresholds come from the stage-0 pool
  if (!state.thresholds_set) {
    std::vector<double> stage0;
    for (const SampleEntry& s : state.samples)
      stage0.push_back(normalized_error(state, s.task_id, s.raw_error, per_task));
    std::tie(state.e0, state.e_final) =
        init_thresholds(std::move(stage0), cfg.target_combs, state.initial_combs);
    state.thresholds_set = true;
  }
  const double e_i = threshold_schedule(state.e0, state.e_final, state.n_stages, stage);

  // EDF labels at e_i for every accumulated (stage, comb) group, with
  // normalization recomputed under the current per-task extremes
  std::vector<std::vector<double>> rows;
  std::vector<double> labels;
  {
    std::map<std::pair<int, int>, std::vector<double>> groups;
    std::map<std::pair<int, int>, const Comb*> group_comb;
    for (const SampleEntry& s : state.samples) {
      const auto key = std::make_pair(s.stage, s.comb_idx);
      groups[key].push_back(normalized_error(state, s.task_id, s.raw_error, per_task));
      group_comb[key] = &s.comb;
    }
    for (const auto& [key, errs] : groups) {
      rows.push_back(gbdt::comb_features(*group_comb.at(key)));
      labels.push_back(compute_edf(errs, e_i));
    }
  }
  StageRecord rec;
  rec.stage = stage;
  rec.threshold = e_i;
  rec.dropped_blocks = dropped;
  rec.sampled = sampled;
  {
    // labels of this stage's combs, for the log
    for (int k = 0; k < c; ++k) {
      std::vector<double> errs;
      for (const SampleEntry& s : state.samples)
        if (s.stage == stage && s.comb_idx == k)
          errs.push_back(normalized_error(state, s.task_id, s.raw_error, per_task));
      rec.edf_labels.push_back(errs.empty() ? 0.0 : compute_edf(errs, e_i));
    }
  }

  if (rows.size() < 2) {
    // cannot fit a predictor from one comb; keep the best half by raw label
    if (sink) sink->on_warning("stage " + std::to_string(stage) + ": too few combs to fit the predictor");
    state.predictor.reset();
  } else {
    state.predictor = gbdt::fit(rows, labels, cfg.predictor);
  }

  // rank every surviving comb and keep the ceiling half
  const std::size_t keep = (state.surviving.size() + 1) / 2;
  std::vector<Comb> next;
  if (state.predictor) {
    auto order = gbdt::rank_combs(*state.predictor, state.surviving);
    next.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) next.push_back(state.surviving[order[i]]);
  } else {
    next.assign(state.surviving.begin(), state.surviving.begin() + static_cast<long>(keep));
  }
  std::sort(next.begin(), next.end());
  state.surviving = std::move(next);
  rec.survivors = state.surviving;
  if (sink) sink->on_stage(rec);
  ++state.stage;
}

PruneState run_pruning(std::vector<Comb> space, const EdfConfig& cfg, AccuracySource& source,
                       std::uint64_t root_seed, PruneSink* sink) {
  PruneState state = init_prune_state(std::move(space), cfg);
  while (state.stage < state.n_stages) prune_round(state, source, cfg, root_seed, sink);
  return state;
}

}  // namespace ctsnas::pruner
