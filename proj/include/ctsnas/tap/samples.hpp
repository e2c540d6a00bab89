#ifndef CTSNAS_TAP_SAMPLES_HPP
#define CTSNAS_TAP_SAMPLES_HPP

#include "ctsnas/pruner/pruner.hpp"
#include "ctsnas/stblock/trainer.hpp"
#include "ctsnas/tap/tap.hpp"

#include <filesystem>
#include <functional>
#include <mutex>
#include <tuple>

namespace ctsnas::tap {

// One TAP training row: stage -1 marks the final-space set S_e.
struct SampleRecord {
  int task_id = 0;
  Genotype genotype;
  double raw_val_mae = 0.0;
  double norm_val_mae = 0.0;
  int stage = 0;
};

class SampleStore {
 public:
  void add(SampleRecord r) { records_.push_back(std::move(r)); }
  const std::vector<SampleRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }

  // per-task min-max over every record sharing the task id
  void renormalize();

  std::vector<int> task_ids() const;

  void save_jsonl(const std::filesystem::path& path, const OperatorVocabulary& vocab) const;
  static SampleStore load_jsonl(const std::filesystem::path& path,
                                const OperatorVocabulary& vocab);

 private:
  std::vector<SampleRecord> records_;
};

// Callback for every fully trained block (donor persistence).
struct TrainedBlock {
  Genotype genotype;
  int task_id = 0;
  double raw_val_mae = 0.0;
  ctsdata::Tag tag = ctsdata::Tag::multi;
  const stblock::BlockModel* model = nullptr;  // valid during the callback only
};
using BlockSink = std::function<void(const TrainedBlock&)>;

// Trains sampled blocks round-robin over the registered tasks ("block j trains
// on task j"); used as the pruning accuracy source during pretraining.
class RealTrainingSource : public pruner::AccuracySource {
 public:
  RealTrainingSource(const std::vector<ForecastTask>& tasks, const OperatorVocabulary& vocab,
                     stblock::TrainOptions train, int hidden, BlockSink sink = nullptr);

  pruner::BlockEval evaluate(const Genotype& g, int stage, int comb_idx, int block_idx,
                             long global_idx, std::uint64_t seed) override;
  bool normalize_per_task() const override { return true; }

  // emits buffered donor callbacks in deterministic slot order
  void flush_ordered();

 private:
  const std::vector<ForecastTask>& tasks_;
  const OperatorVocabulary& vocab_;
  stblock::TrainOptions train_;
  int hidden_;
  BlockSink sink_;
  std::mutex mu_;
  std::map<std::tuple<int, int, int>, stblock::BlockModel> pending_;
  std::map<std::tuple<int, int, int>, std::pair<int, double>> pending_meta_;
};

struct CollectConfig {
  pruner::EdfConfig edf;
  stblock::TrainOptions train;
  int hidden = 8;
  int n_ops = 4;       // block size
  int z_final = 8;     // S_e: z blocks from the final space, cross r tasks
  int se_tasks = 0;    // r tasks for S_e; 0 = edf.blocks_per_comb
};

struct CollectResult {
  SampleStore store;
  pruner::PruneState prune;
};

// Runs the pruning loop with real training, then samples z blocks from the
// final space and trains each on the r round-robin tasks (S_e is the full
// cross product). Records are per-task min-max normalized at the end.
CollectResult collect_samples(const std::vector<ForecastTask>& tasks,
                              const OperatorVocabulary& vocab, const CollectConfig& cfg,
                              std::uint64_t seed, pruner::PruneSink* sink = nullptr,
                              const BlockSink& block_sink = nullptr);

struct PretrainOptions {
  int epochs = 100;
  int patience = 5;
  double lr = 1e-3;
  double weight_decay = 5e-4;
  int batch = 32;
  double holdout = 0.1;  // stratified by task
  std::uint64_t seed = 0;
};

struct PretrainReport {
  int epochs_run = 0;
  int best_epoch = -1;
  double best_holdout_mse = 0.0;
  std::vector<double> train_curve;
  std::vector<double> holdout_curve;
  bool diverged = false;
};

// MSE pretraining of the TAP on the sample store; task features must cover
// every task id present in the store. Also fits the statistical-vector
// normalization from the provided features.
PretrainReport pretrain(TapModel& tap, const SampleStore& store,
                        const std::map<int, TapTaskFeatures>& features,
                        const OperatorVocabulary& vocab, const PretrainOptions& opts);

}  // namespace ctsnas::tap

#endif
