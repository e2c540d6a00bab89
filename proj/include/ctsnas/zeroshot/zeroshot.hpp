#ifndef CTSNAS_ZEROSHOT_ZEROSHOT_HPP
#define CTSNAS_ZEROSHOT_ZEROSHOT_HPP

#include "ctsnas/pruner/pruner.hpp"
#include "ctsnas/tap/tap.hpp"

#include <json.hpp>

namespace ctsnas::zeroshot {

using searchspace::Comb;
using searchspace::Genotype;
using searchspace::OperatorVocabulary;

// Pseudo-accuracy from the frozen predictor: no training anywhere, scores are
// predicted normalized MAE. Plugs into the same pruning loop as real training.
class TapAccuracySource : public pruner::AccuracySource {
 public:
  TapAccuracySource(const tap::TapModel& model, const OperatorVocabulary& vocab,
                    const tap::TapTaskFeatures& tf);

  pruner::BlockEval evaluate(const Genotype& g, int stage, int comb_idx, int block_idx,
                             long global_idx, std::uint64_t seed) override;
  bool normalize_per_task() const override { return false; }

  double score(const Genotype& g) const;

 private:
  const tap::TapModel& model_;
  const OperatorVocabulary& vocab_;
  tap::TaskEmbedding task_embedding_;
};

struct ZeroShotConfig {
  pruner::EdfConfig edf;
  int n_ops = 4;
  std::uint64_t candidate_cap = 100000;
  int top_k = 20;
  int workers = 1;
};

struct RankedCandidate {
  Genotype genotype;
  double score = 0.0;
};

struct ZeroShotResult {
  Genotype selected;
  double predicted_score = 0.0;
  std::size_t pruned_comb_count = 0;
  std::uint64_t pruned_space_blocks = 0;
  long candidates_scored = 0;
  bool sampled_fallback = false;
  double wall_seconds_prune = 0.0;
  double wall_seconds_rank = 0.0;
  std::vector<RankedCandidate> top;  // ascending by predicted score
};

// Iterative pruning with pseudo-EDF; thresholds come from stage-0 predicted
// scores exactly as the real-error path takes them from stage-0 errors.
pruner::PruneState zero_shot_prune(const tap::TapModel& model, const OperatorVocabulary& vocab,
                                   const tap::TapTaskFeatures& tf, const ZeroShotConfig& cfg,
                                   std::uint64_t seed, pruner::PruneSink* sink = nullptr);

// Exhaustive ranking of the pruned space when it fits under the cap, else a
// seeded uniform sample of cap candidates (flagged in the result).
ZeroShotResult rank_and_select(const tap::TapModel& model, const OperatorVocabulary& vocab,
                               const tap::TapTaskFeatures& tf, const std::vector<Comb>& pruned,
                               const ZeroShotConfig& cfg, std::uint64_t seed);

ZeroShotResult zero_shot_search(const tap::TapModel& model, const OperatorVocabulary& vocab,
                                const tap::TapTaskFeatures& tf, const ZeroShotConfig& cfg,
                                std::uint64_t seed, pruner::PruneSink* sink = nullptr);

nlohmann::json result_to_json(const ZeroShotResult& r, const OperatorVocabulary& vocab);

}  // namespace ctsnas::zeroshot

#endif
