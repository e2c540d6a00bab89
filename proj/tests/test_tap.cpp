#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"

#include "ctsnas/tap/samples.hpp"

#include <cmath>
#include <filesystem>

using namespace ctsnas;
using namespace ctsnas::tap;
using searchspace::Genotype;
using searchspace::OperatorVocabulary;

namespace {

TapConfig tiny_cfg(const OperatorVocabulary& vocab) {
  TapConfig cfg;
  cfg.gcn_layers = 2;
  cfg.gcn_hidden = 6;
  cfg.arch_embed = 5;
  cfg.set_dim = 6;
  cfg.align_dim = 5;
  cfg.reg_hidden = 6;
  cfg.window_len = 6;
  cfg.n_series = 3;
  cfg.n_windows = 3;
  cfg.feature_dim = vocab.size() + 2;
  return cfg;
}

Genotype random_genotype(const OperatorVocabulary& vocab, Rng& rng, int n) {
  Genotype g;
  for (int j = 0; j < n; ++j) {
    g.labels.push_back(static_cast<int>(rng.uniform_u64(static_cast<std::uint64_t>(vocab.size()))));
    g.preds.push_back(static_cast<int>(rng.uniform_u64(static_cast<std::uint64_t>(j + 1))));
  }
  return g;
}

}  // namespace

TEST_CASE("H_a is canonical: re-encoding the same genotype gives identical output") {
  auto vocab = OperatorVocabulary::defaults();
  TapModel tap(tiny_cfg(vocab), 5);
  Rng rng(2);
  Genotype g = random_genotype(vocab, rng, 4);
  // serialize and reload: same canonical DAG, same embedding
  Genotype g2 = searchspace::genotype_from_json(searchspace::genotype_to_json(g, vocab), vocab);
  auto ha1 = tap.afl_encode(searchspace::encode_genotype(g, vocab));
  auto ha2 = tap.afl_encode(searchspace::encode_genotype(g2, vocab));
  REQUIRE(ha1.numel() == ha2.numel());
  CHECK(ha1.numel() == tap.config().arch_embed);
  for (long i = 0; i < ha1.numel(); ++i) CHECK(ha1[i] == ha2[i]);
}

TEST_CASE("zero-weight GCN collapses H_a to a genotype-independent constant") {
  auto vocab = OperatorVocabulary::defaults();
  TapModel tap(tiny_cfg(vocab), 5);
  for (int l = 0; l < tap.config().gcn_layers; ++l) {
    tap.params().at("afl.gcn" + std::to_string(l) + ".w").flat().setZero();
    tap.params().at("afl.gcn" + std::to_string(l) + ".b").flat().setZero();
  }
  Rng rng(3);
  auto a = tap.afl_encode(searchspace::encode_genotype(random_genotype(vocab, rng, 3), vocab));
  auto b = tap.afl_encode(searchspace::encode_genotype(random_genotype(vocab, rng, 5), vocab));
  for (long i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("TFL is permutation invariant over series and windows") {
  auto vocab = OperatorVocabulary::defaults();
  TapModel tap(tiny_cfg(vocab), 9);
  Rng rng(7);
  const int s = 3, w = 3, l = tap.config().window_len;
  Tensor windows({s, w, l});
  for (long i = 0; i < windows.numel(); ++i) windows[i] = rng.normal();

  Tensor base = tap.tfl_semantic(windows);

  // permute series
  Tensor swapped = numgrad::gather(windows, 0, {2, 0, 1});
  Tensor perm_series = tap.tfl_semantic(swapped);
  for (long i = 0; i < base.numel(); ++i)
    CHECK(std::abs(base[i] - perm_series[i]) < 1e-9);

  // permute windows within every series
  Tensor wperm = numgrad::gather(windows, 1, {1, 2, 0});
  Tensor perm_windows = tap.tfl_semantic(wperm);
  for (long i = 0; i < base.numel(); ++i)
    CHECK(std::abs(base[i] - perm_windows[i]) < 1e-9);
}

TEST_CASE("duplicating every series leaves D_a unchanged (mean-style pooling)") {
  auto vocab = OperatorVocabulary::defaults();
  TapModel tap(tiny_cfg(vocab), 13);
  Rng rng(5);
  const int s = 2, w = 2, l = tap.config().window_len;
  Tensor windows({s, w, l});
  for (long i = 0; i < windows.numel(); ++i) windows[i] = rng.normal();
  Tensor doubled = numgrad::gather(windows, 0, {0, 1, 0, 1});
  Tensor a = tap.tfl_semantic(windows);
  Tensor b = tap.tfl_semantic(doubled);
  for (long i = 0; i < a.numel(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-9);
}

TEST_CASE("single series single window: D_a equals that window's pooled embedding") {
  auto vocab = OperatorVocabulary::defaults();
  TapModel tap(tiny_cfg(vocab), 21);
  Rng rng(9);
  Tensor one({1, 1, tap.config().window_len});
  for (long i = 0; i < one.numel(); ++i) one[i] = rng.normal();
  // degenerate sets: attention over a single element is that element, so the
  // result is the deterministic pooled embedding of the single window
  Tensor a = tap.tfl_semantic(one);
  Tensor b = tap.tfl_semantic(one);
  CHECK(a.numel() == tap.config().set_dim);
  for (long i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("zeroed final regressor layer predicts 0 for every input") {
  auto vocab = OperatorVocabulary::defaults();
  TapModel tap(tiny_cfg(vocab), 33);
  tap.params().at("reg.l2.w").flat().setZero();
  tap.params().at("reg.l2.b").flat().setZero();
  auto task = testing::tiny_task(19, 0.1);
  auto tf = prepare_task_features(tap.config(), task, 3);
  Rng rng(11);
  for (int rep = 0; rep < 5; ++rep) {
    Genotype g = random_genotype(vocab, rng, 4);
    CHECK(tap.predict_accuracy(g, vocab, tf) == 0.0);
  }
}

TEST_CASE("prediction is deterministic and mutates no weights") {
  auto vocab = OperatorVocabulary::defaults();
  TapModel tap(tiny_cfg(vocab), 77);
  auto task = testing::tiny_task(23, 0.2, 0.3);
  auto tf = prepare_task_features(tap.config(), task, 5);
  const std::uint64_t before = numgrad::content_hash(tap.params());
  Rng rng(13);
  Genotype g = random_genotype(vocab, rng, 5);
  const double p1 = tap.predict_accuracy(g, vocab, tf);
  auto temb = tap.task_embedding(tf);
  double acc = 0;
  for (int i = 0; i < 200; ++i) acc += tap.predict(searchspace::encode_genotype(g, vocab), temb);
  CHECK(acc / 200 == doctest::Approx(p1).epsilon(1e-15));
  CHECK(tap.predict_accuracy(g, vocab, tf) == p1);
  CHECK(numgrad::content_hash(tap.params()) == before);
}

TEST_CASE("full TAP loss passes gradcheck on a tiny config") {
  auto vocab = OperatorVocabulary::defaults();
  TapConfig cfg = tiny_cfg(vocab);
  cfg.gcn_hidden = 4;
  cfg.set_dim = 4;
  cfg.arch_embed = 3;
  cfg.align_dim = 3;
  cfg.reg_hidden = 3;
  cfg.window_len = 4;
  cfg.n_series = 2;
  cfg.n_windows = 2;
  TapModel tap(cfg, 3);
  auto task = testing::tiny_task(29, 0.15);
  auto tf = prepare_task_features(cfg, task, 7);
  Rng rng(17);
  Genotype geno = random_genotype(vocab, rng, 3);
  auto enc = searchspace::encode_genotype(geno, vocab);

  std::vector<std::string> names;
  std::vector<Tensor> inputs;
  for (const auto& [name, t] : tap.params()) {
    names.push_back(name);
    inputs.push_back(t);
  }
  auto fn = [&](numgrad::Graph& g, const std::vector<numgrad::Graph::NodeId>& leaves) {
    TapModel::Binder bind = [&](numgrad::Graph&, const std::string& name) {
      for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return leaves[i];
      throw numgrad::StateError("unexpected parameter " + name);
    };
    auto pred = tap.build_predict(g, bind, enc, tf);
    auto diff = g.sub(pred, g.value(Tensor::scalar(0.37)));
    return g.mul(diff, diff);
  };
  auto rep = numgrad::gradcheck(fn, inputs, 1e-5, 1e-4);
  INFO(rep.diagnostic);
  CHECK(rep.pass);
}

TEST_CASE("graph path and eval path agree") {
  auto vocab = OperatorVocabulary::defaults();
  TapModel tap(tiny_cfg(vocab), 99);
  auto task = testing::tiny_task(31, 0.1);
  auto tf = prepare_task_features(tap.config(), task, 9);
  Rng rng(19);
  Genotype geno = random_genotype(vocab, rng, 4);
  auto enc = searchspace::encode_genotype(geno, vocab);
  numgrad::Graph g;
  auto pred = tap.build_predict(g, tap.default_binder(), enc, tf);
  const double graph_value = g.tensor(pred).value();
  const double eval_value = tap.predict(enc, tap.task_embedding(tf));
  CHECK(graph_value == doctest::Approx(eval_value).epsilon(1e-12));
}

TEST_CASE("sample store: per-task min-max normalization and jsonl round trip") {
  auto vocab = OperatorVocabulary::defaults();
  Rng rng(23);
  SampleStore store;
  for (int task = 0; task < 3; ++task)
    for (int i = 0; i < 5; ++i) {
      SampleRecord r;
      r.task_id = task;
      r.genotype = random_genotype(vocab, rng, 3);
      r.raw_val_mae = (task + 1) * 10.0 + i;  // distinct scales per task
      r.stage = i % 2;
      store.add(r);
    }
  store.renormalize();
  for (int task = 0; task < 3; ++task) {
    double lo = 2, hi = -1;
    for (const auto& r : store.records())
      if (r.task_id == task) {
        lo = std::min(lo, r.norm_val_mae);
        hi = std::max(hi, r.norm_val_mae);
      }
    CHECK(lo == 0.0);  // each task's best block normalizes to 0
    CHECK(hi == 1.0);  // and its worst to 1
  }
  auto dir = std::filesystem::temp_directory_path() / "ctsnas_store_test";
  std::filesystem::create_directories(dir);
  store.save_jsonl(dir / "samples.jsonl", vocab);
  auto back = SampleStore::load_jsonl(dir / "samples.jsonl", vocab);
  REQUIRE(back.size() == store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    CHECK(back.records()[i].task_id == store.records()[i].task_id);
    CHECK(back.records()[i].genotype == store.records()[i].genotype);
    CHECK(back.records()[i].raw_val_mae == store.records()[i].raw_val_mae);
    CHECK(back.records()[i].norm_val_mae == store.records()[i].norm_val_mae);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("pretraining memorizes a small sample set and beats the constant predictor") {
  auto vocab = OperatorVocabulary::defaults();
  TapConfig cfg = tiny_cfg(vocab);
  cfg.gcn_hidden = 12;
  cfg.set_dim = 8;
  cfg.arch_embed = 8;
  cfg.align_dim = 8;
  cfg.reg_hidden = 12;
  TapModel tap(cfg, 1);

  // two tasks with different dynamics, planted labels driven by op counts
  std::vector<ctsdata::ForecastTask> tasks = {testing::tiny_task(41, 0.1, 0.0),
                                              testing::tiny_task(42, 0.3, 0.6)};
  std::map<int, TapTaskFeatures> features;
  for (int t = 0; t < 2; ++t)
    features.emplace(t, prepare_task_features(cfg, tasks[static_cast<std::size_t>(t)],
                                              derive_seed(4, static_cast<std::uint64_t>(t))));
  Rng rng(6);
  SampleStore store;
  for (int i = 0; i < 50; ++i) {
    SampleRecord r;
    r.task_id = i % 2;
    r.genotype = random_genotype(vocab, rng, 4);
    auto comb = searchspace::comb_of(r.genotype, vocab.size());
    r.raw_val_mae = 0.2 + 0.1 * comb.counts[1] + 0.15 * comb.counts[6] +
                    0.05 * (r.task_id == 0 ? comb.counts[3] : comb.counts[4]);
    store.add(r);
  }
  store.renormalize();

  PretrainOptions opts;
  opts.epochs = 200;
  opts.patience = 200;
  opts.holdout = 0.1;
  opts.lr = 3e-3;
  opts.weight_decay = 0.0;
  opts.batch = 16;
  opts.seed = 8;
  auto rep = pretrain(tap, store, features, vocab, opts);
  CHECK_FALSE(rep.diverged);
  // memorization: training MSE collapses
  CHECK(rep.train_curve.back() < 1e-3);

  // held-out MSE beats predicting the global label mean
  double mean = 0;
  for (const auto& r : store.records()) mean += r.norm_val_mae;
  mean /= static_cast<double>(store.size());
  double var = 0;
  for (const auto& r : store.records()) var += (r.norm_val_mae - mean) * (r.norm_val_mae - mean);
  var /= static_cast<double>(store.size());
  CHECK(rep.best_holdout_mse <= var);
}

TEST_CASE("pretraining is deterministic for a fixed seed") {
  auto vocab = OperatorVocabulary::defaults();
  auto make_store = [&]() {
    Rng rng(14);
    SampleStore store;
    for (int i = 0; i < 24; ++i) {
      SampleRecord r;
      r.task_id = 0;
      r.genotype = random_genotype(vocab, rng, 3);
      r.raw_val_mae = 0.1 * static_cast<double>(searchspace::comb_of(r.genotype, vocab.size()).counts[2]) + 0.3;
      store.add(r);
    }
    store.renormalize();
    return store;
  };
  auto task = testing::tiny_task(55, 0.05);
  auto run = [&]() {
    TapConfig cfg = tiny_cfg(vocab);
    TapModel tap(cfg, 7);
    std::map<int, TapTaskFeatures> features;
    features.emplace(0, prepare_task_features(cfg, task, 2));
    PretrainOptions opts;
    opts.epochs = 15;
    opts.patience = 15;
    opts.seed = 10;
    auto store = make_store();
    auto rep = pretrain(tap, store, features, vocab, opts);
    return std::make_pair(rep.train_curve, numgrad::content_hash(tap.params()));
  };
  auto [c1, h1] = run();
  auto [c2, h2] = run();
  CHECK(c1 == c2);
  CHECK(h1 == h2);
}

TEST_CASE("tap checkpoint round trip preserves predictions") {
  auto vocab = OperatorVocabulary::defaults();
  TapModel tap(tiny_cfg(vocab), 3);
  Tensor mean({tap.config().stat_dim}, 0.5), sd({tap.config().stat_dim}, 2.0);
  tap.set_stat_norm(mean, sd);
  auto dir = std::filesystem::temp_directory_path() / "ctsnas_tap_ckpt";
  std::filesystem::create_directories(dir);
  tap.save(dir / "tap");
  auto back = TapModel::load(dir / "tap");
  CHECK(numgrad::content_hash(back.params()) == numgrad::content_hash(tap.params()));
  auto task = testing::tiny_task(61, 0.1);
  auto tf = prepare_task_features(tap.config(), task, 4);
  Rng rng(29);
  Genotype g = random_genotype(vocab, rng, 4);
  CHECK(back.predict_accuracy(g, vocab, tf) == tap.predict_accuracy(g, vocab, tf));
  std::filesystem::remove_all(dir);
}
