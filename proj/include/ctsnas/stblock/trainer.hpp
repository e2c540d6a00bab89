#ifndef CTSNAS_STBLOCK_TRAINER_HPP
#define CTSNAS_STBLOCK_TRAINER_HPP

#include "ctsnas/ctsdata/metrics.hpp"
#include "ctsnas/stblock/model.hpp"

#include <cstdint>

namespace ctsnas::stblock {

struct TrainOptions {
  int epochs = 30;
  int patience = 5;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  int batch = 16;
  std::uint64_t seed = 0;
  bool compute_test_metrics = true;
};

struct TrainReport {
  int epochs_run = 0;
  int best_epoch = -1;
  double best_val_mae = 0.0;
  ctsdata::Metrics test;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
  bool diverged = false;
  std::vector<double> train_loss;  // per epoch, normalized units
  std::vector<double> val_mae;     // per epoch, data units
};

// MAE objective, Adam, chronological batches in seeded shuffled order, early
// stop on validation patience; weights of the best epoch are restored into
// the model. patience = 0 runs exactly one epoch.
TrainReport train_block(BlockModel& model, const ForecastTask& task, const TrainOptions& opts);

enum class Split { train, val, test };

ctsdata::Metrics evaluate_block(const BlockModel& model, const ForecastTask& task, Split split);

// predictions in data units for a whole split, [W, N, Q] or [W, N]
Tensor predict_split(const BlockModel& model, const ForecastTask& task, Split split);

}  // namespace ctsnas::stblock

#endif
