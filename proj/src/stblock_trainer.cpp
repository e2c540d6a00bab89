#include "ctsnas/stblock/trainer.hpp"

#include "ctsnas/common/rng.hpp"
#include "ctsnas/numgrad/adam.hpp"

#include <chrono>
#include <cmath>
#include <limits>

namespace ctsnas::stblock {

using numgrad::Adam;
using numgrad::AdamConfig;

namespace {

ctsdata::SplitView pick(const ctsdata::DatasetSplits& s, Split which) {
  switch (which) {
    case Split::train: return s.train;
    case Split::val: return s.val;
    case Split::test: return s.test;
  }
  throw std::invalid_argument("bad split");
}

// caches one training tape per batch size
struct TapeSlot {
  Graph g;
  Graph::NodeId input = -1, target = -1, loss = -1;
  std::map<std::string, Graph::NodeId> leaves;
};

}  // namespace

Tensor predict_split(const BlockModel& model, const ForecastTask& task, Split split) {
  const auto splits = ctsdata::split_dataset(task);
  const auto view = pick(splits, split);
  const auto starts = ctsdata::window_starts(view, task.input_len, task.horizon);
  if (starts.empty()) throw std::invalid_argument("empty split");
  const int total = static_cast<int>(starts.size());
  const int chunk = 64;
  Tensor all;  // assembled below
  std::vector<double> buf;
  numgrad::Shape out_shape;
  for (int from = 0; from < total; from += chunk) {
    const int count = std::min(chunk, total - from);
    auto batch = ctsdata::make_batch(task, starts, static_cast<std::size_t>(from),
                                     static_cast<std::size_t>(count));
    Graph g;
    auto input = g.value(normalize_input(batch.input, model.scaler()));
    auto pred = model.build_prediction(g, input, model.default_binder());
    Tensor out = denormalize_prediction(g.tensor(pred), model.scaler());
    if (out_shape.empty()) {
      out_shape = out.shape();
    }
    for (long i = 0; i < out.numel(); ++i) buf.push_back(out[i]);
  }
  out_shape[0] = total;
  return Tensor(out_shape, buf);
}

ctsdata::Metrics evaluate_block(const BlockModel& model, const ForecastTask& task, Split split) {
  const auto splits = ctsdata::split_dataset(task);
  const auto view = pick(splits, split);
  const auto starts = ctsdata::window_starts(view, task.input_len, task.horizon);
  if (starts.empty()) throw std::invalid_argument("empty split");
  Tensor pred = predict_split(model, task, split);
  auto batch = ctsdata::make_batch(task, starts, 0, starts.size());
  return ctsdata::compute_metrics(pred, batch.target, task.tag);
}

TrainReport train_block(BlockModel& model, const ForecastTask& task, const TrainOptions& opts) {
  if (opts.epochs < 1) throw std::invalid_argument("train_block: epochs must be >= 1");
  const auto t_start = std::chrono::steady_clock::now();
  const auto splits = ctsdata::split_dataset(task);
  auto starts = ctsdata::window_starts(splits.train, task.input_len, task.horizon);

  TrainReport rep;
  rep.seed = opts.seed;

  Adam opt(AdamConfig{.lr = opts.lr, .weight_decay = opts.weight_decay});
  std::map<int, TapeSlot> tapes;

  auto run_batch = [&](const std::vector<int>& order, std::size_t from, std::size_t count) {
    auto batch = ctsdata::make_batch(task, order, from, count);
    TapeSlot& slot = tapes[static_cast<int>(count)];
    if (slot.input < 0) {
      slot.input = slot.g.value(normalize_input(batch.input, model.scaler()));
      auto pred = model.build_prediction(slot.g, slot.input, model.default_binder(&slot.leaves));
      slot.target = slot.g.value(normalize_target(batch.target, model.scaler()));
      slot.loss = slot.g.mae(pred, slot.target);
    } else {
      slot.g.set_value(slot.input, normalize_input(batch.input, model.scaler()));
      slot.g.set_value(slot.target, normalize_target(batch.target, model.scaler()));
    }
    for (const auto& [name, leaf] : slot.leaves) slot.g.set_value(leaf, model.params().at(name));
    slot.g.forward();
    const double loss = slot.g.tensor(slot.loss).value();
    if (!std::isfinite(loss)) return loss;
    slot.g.zero_grad();
    slot.g.backward(slot.loss);
    opt.step(model.params(), slot.g.param_grads());
    return loss;
  };

  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  numgrad::ParamStore best;
  auto snapshot = [&]() {
    numgrad::ParamStore copy;
    for (const auto& [name, t] : model.params()) copy.create(name, t);
    return copy;
  };

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(opts.seed, 0x5f, static_cast<std::uint64_t>(epoch)));
    std::vector<int> order = starts;
    shuffle_rng.shuffle(order);
    double loss_sum = 0;
    int batches = 0;
    bool diverged = false;
    for (std::size_t from = 0; from < order.size(); from += static_cast<std::size_t>(opts.batch)) {
      const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(opts.batch),
                                                      order.size() - from);
      const double loss = run_batch(order, from, count);
      if (!std::isfinite(loss)) {
        diverged = true;
        break;
      }
      loss_sum += loss;
      ++batches;
    }
    rep.epochs_run = epoch + 1;
    if (diverged) {
      rep.diverged = true;
      break;
    }
    rep.train_loss.push_back(loss_sum / std::max(batches, 1));

    const auto val = evaluate_block(model, task, Split::val);
    const double val_mae = val.tag == ctsdata::Tag::multi ? val.mae : val.rrse;
    rep.val_mae.push_back(val_mae);
    if (val_mae < best_val) {
      best_val = val_mae;
      rep.best_epoch = epoch;
      since_best = 0;
      best = snapshot();
    } else {
      ++since_best;
    }
    if (since_best > opts.patience) break;
    if (opts.patience == 0 && epoch == 0) break;  // patience 0: exactly one epoch
  }

  if (rep.best_epoch >= 0) {
    for (auto& [name, t] : model.params()) {
      t = best.at(name);
      t.requires_grad = true;
    }
  }
  rep.best_val_mae = best_val;
  if (opts.compute_test_metrics && !rep.diverged)
    rep.test = evaluate_block(model, task, Split::test);
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return rep;
}

}  // namespace ctsnas::stblock
