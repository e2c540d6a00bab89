#ifndef CTSNAS_PRUNER_PRUNER_HPP
#define CTSNAS_PRUNER_PRUNER_HPP

#include "ctsnas/gbdt/gbdt.hpp"
#include "ctsnas/searchspace/genotype.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ctsnas::pruner {

using searchspace::Comb;
using searchspace::Genotype;

// F(e) = fraction of errors strictly below e.
double compute_edf(const std::vector<double>& errors, double threshold);

// Affine schedule hitting e0 at stage 0 and e_final at stage n_p-1 exactly;
// the degenerate single-stage schedule returns e_final.
double threshold_schedule(double e0, double e_final, int n_p, int stage);

// e0 = median of the stage-0 errors; e_final = the ceil((M/M0)*count)-th best
// error (the (M/M0)-quantile reading of the floor rule, which would always be
// the 0-th).
std::pair<double, double> init_thresholds(std::vector<double> stage0_errors, int target_combs,
                                          int initial_combs);

struct BlockEval {
  int task_id = 0;
  double raw_error = 0.0;
  bool ok = true;
  std::string note;  // failure reason when !ok
};

// Supplies block errors: real training during pretraining, frozen-predictor
// scores during zero-shot search. Implementations must be safe to call from
// the worker pool.
class AccuracySource {
 public:
  virtual ~AccuracySource() = default;
  virtual BlockEval evaluate(const Genotype& g, int stage, int comb_idx, int block_idx,
                             long global_idx, std::uint64_t seed) = 0;
  // min-max normalize raw errors per task before thresholds/EDF (pretraining
  // mixes tasks; zero-shot scores are already comparable)
  virtual bool normalize_per_task() const { return false; }
};

struct EdfConfig {
  int combs_per_stage = 100;  // c
  int blocks_per_comb = 100;  // r
  int target_combs = 2000;    // M
  gbdt::GbdtConfig predictor;
  int workers = 1;
};

struct SampleEntry {
  int stage = 0;
  int comb_idx = 0;  // position within the stage's sampled comb list
  Comb comb;
  Genotype genotype;
  int task_id = 0;
  double raw_error = 0.0;
  double norm_error = 0.0;  // per-task min-max at append time (raw otherwise)
};

struct StageRecord {
  int stage = 0;
  double threshold = 0.0;
  std::vector<Comb> sampled;
  std::vector<double> edf_labels;        // for the sampled combs at this stage
  std::vector<Comb> survivors;
  int dropped_blocks = 0;
};

// Artifact hooks; the run directory writes jsonl from these.
class PruneSink {
 public:
  virtual ~PruneSink() = default;
  virtual void on_samples(const std::vector<SampleEntry>& appended) { (void)appended; }
  virtual void on_stage(const StageRecord& record) { (void)record; }
  virtual void on_warning(const std::string& message) { (void)message; }
};

struct PruneState {
  std::vector<Comb> surviving;  // canonical (lexicographic) order
  std::vector<SampleEntry> samples;
  int stage = 0;
  int n_stages = 0;   // n_p
  int initial_combs = 0;  // M0
  double e0 = 0.0, e_final = 0.0;
  bool thresholds_set = false;
  std::map<int, std::pair<double, double>> task_minmax;  // running per task

  std::optional<gbdt::GbdtModel> predictor;  // from the latest stage
};

int stage_count(int initial_combs, int target_combs);  // ceil(log2(M0/M))

PruneState init_prune_state(std::vector<Comb> space, const EdfConfig& cfg);

// One stage: sample combs and blocks, evaluate, recompute normalization and
// EDF labels at the scheduled threshold, refit the predictor on every
// accumulated sample, rank all survivors and keep the top half (ceiling).
void prune_round(PruneState& state, AccuracySource& source, const EdfConfig& cfg,
                 std::uint64_t root_seed, PruneSink* sink = nullptr);

PruneState run_pruning(std::vector<Comb> space, const EdfConfig& cfg, AccuracySource& source,
                       std::uint64_t root_seed, PruneSink* sink = nullptr);

// normalized error of a sample under the state's current per-task extremes
double normalized_error(const PruneState& state, int task_id, double raw, bool per_task);

}  // namespace ctsnas::pruner

#endif
