#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"

#include "ctsnas/adapt/adapt.hpp"

#include <algorithm>
#include <numeric>
#include <set>

using namespace ctsnas;
using namespace ctsnas::adapt;
using searchspace::Genotype;
using searchspace::OperatorVocabulary;

namespace {

Genotype random_genotype(const OperatorVocabulary& vocab, Rng& rng, int n) {
  Genotype g;
  for (int j = 0; j < n; ++j) {
    g.labels.push_back(static_cast<int>(rng.uniform_u64(static_cast<std::uint64_t>(vocab.size()))));
    g.preds.push_back(static_cast<int>(rng.uniform_u64(static_cast<std::uint64_t>(j + 1))));
  }
  return g;
}

// independent oracle: minimum cost over every permutation of node mappings
int ged_brute_force(const Genotype& a, const Genotype& b) {
  const int n = a.n_ops();
  REQUIRE(b.n_ops() == n);
  auto edges = [](const Genotype& g) {
    std::set<std::pair<int, int>> e;
    std::vector<bool> succ(static_cast<std::size_t>(g.n_ops() + 1), false);
    for (int j = 0; j < g.n_ops(); ++j) {
      e.emplace(g.preds[static_cast<std::size_t>(j)], j + 1);
      succ[static_cast<std::size_t>(g.preds[static_cast<std::size_t>(j)])] = true;
    }
    for (int v = 1; v <= g.n_ops(); ++v)
      if (!succ[static_cast<std::size_t>(v)]) e.emplace(v, g.n_ops() + 1);
    return e;
  };
  const auto ea = edges(a), eb = edges(b);
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 1);
  int best = 1 << 30;
  do {
    int cost = 0;
    for (int j = 0; j < n; ++j)
      if (a.labels[static_cast<std::size_t>(j)] != b.labels[static_cast<std::size_t>(perm[static_cast<std::size_t>(j)] - 1)]) ++cost;
    auto map_node = [&](int v) {
      if (v == 0) return 0;
      if (v == n + 1) return n + 1;
      return perm[static_cast<std::size_t>(v - 1)];
    };
    std::set<std::pair<int, int>> mapped;
    for (const auto& [u, v] : ea) mapped.emplace(map_node(u), map_node(v));
    for (const auto& e : mapped)
      if (!eb.count(e)) ++cost;
    for (const auto& e : eb)
      if (!mapped.count(e)) ++cost;
    best = std::min(best, cost);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

struct DonorFixture {
  OperatorVocabulary vocab = OperatorVocabulary::defaults();
  ctsdata::ForecastTask task = testing::tiny_task(101, 0.05);
  std::vector<stblock::BlockModel> models;
  std::vector<DonorCandidate> candidates;
  std::vector<double> donor_val;

  void add_donor(const Genotype& g, std::uint64_t seed, int epochs = 6) {
    auto model = stblock::BlockModel::instantiate(g, vocab, task, 4, seed);
    stblock::TrainOptions opts;
    opts.epochs = epochs;
    opts.patience = epochs;
    opts.seed = seed;
    opts.compute_test_metrics = false;
    auto rep = stblock::train_block(model, task, opts);
    donor_val.push_back(rep.best_val_mae);
    models.push_back(std::move(model));
  }

  void finish() {
    for (std::size_t i = 0; i < models.size(); ++i) {
      DonorCandidate c;
      c.genotype = models[i].genotype();
      c.task_id = 0;
      c.tag = task.tag;
      c.raw_val_mae = donor_val[i];
      c.key = "donor" + std::to_string(i);
      c.params = &models[i].params();
      candidates.push_back(std::move(c));
    }
  }
};

tap::TapConfig tiny_tap_cfg(const OperatorVocabulary& vocab) {
  tap::TapConfig cfg;
  cfg.gcn_layers = 2;
  cfg.gcn_hidden = 6;
  cfg.arch_embed = 5;
  cfg.set_dim = 6;
  cfg.align_dim = 5;
  cfg.reg_hidden = 6;
  cfg.window_len = 6;
  cfg.n_series = 2;
  cfg.n_windows = 2;
  cfg.feature_dim = vocab.size() + 2;
  return cfg;
}

}  // namespace

TEST_CASE("GED: identity, single label substitution, symmetry") {
  auto vocab = OperatorVocabulary::defaults();
  Rng rng(3);
  for (int rep = 0; rep < 30; ++rep) {
    Genotype g = random_genotype(vocab, rng, 3 + static_cast<int>(rng.uniform_u64(3)));
    CHECK(graph_edit_distance(g, g) == 0);
  }
  Genotype a = random_genotype(vocab, rng, 4);
  Genotype b = a;
  b.labels[2] = (b.labels[2] + 1) % vocab.size();
  CHECK(graph_edit_distance(a, b) == 1);
  CHECK(ged_brute_force(a, b) == 1);

  for (int rep = 0; rep < 200; ++rep) {
    Genotype x = random_genotype(vocab, rng, 4);
    Genotype y = random_genotype(vocab, rng, 4);
    CHECK(graph_edit_distance(x, y) == graph_edit_distance(y, x));
  }
}

TEST_CASE("GED matches the brute-force oracle on random pairs") {
  auto vocab = OperatorVocabulary::defaults();
  Rng rng(17);
  for (int n : {3, 4, 5}) {
    for (int rep = 0; rep < 40; ++rep) {
      Genotype x = random_genotype(vocab, rng, n);
      Genotype y = random_genotype(vocab, rng, n);
      CHECK(graph_edit_distance(x, y) == ged_brute_force(x, y));
    }
  }
}

TEST_CASE("Borda order can differ from both single-criterion winners") {
  auto vocab = OperatorVocabulary::defaults();
  Rng rng(5);
  std::vector<Genotype> genos;
  for (int i = 0; i < 4; ++i) genos.push_back(random_genotype(vocab, rng, 3));
  //              cand:     0    1    2    3
  std::vector<int> ged = {1, 4, 2, 3};          // GED winner: 0
  std::vector<double> cos = {0.1, 0.9, 0.7, 0.2};  // cosine winner: 1
  auto order = borda_order(ged, cos, genos);
  CHECK(order.front() == 2);  // combined winner is neither
}

TEST_CASE("select_donors: the identified block itself ranks first") {
  DonorFixture fx;
  Genotype self;
  self.labels = {fx.vocab.index_of("cnn"), fx.vocab.index_of("gru")};
  self.preds = {0, 1};
  Genotype other;
  other.labels = {fx.vocab.index_of("gcn"), fx.vocab.index_of("nlinear")};
  other.preds = {0, 0};
  fx.add_donor(self, 11, 2);
  fx.add_donor(other, 12, 2);
  fx.finish();

  tap::TapModel tap(tiny_tap_cfg(fx.vocab), 3);
  auto identified = stblock::BlockModel::instantiate(self, fx.vocab, fx.task, 4, 77);
  auto sel = select_donors(identified, fx.candidates, tap, fx.vocab, 2);
  CHECK(sel.ged[0] == 0);
  CHECK(sel.cosine[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(sel.order.front() == 0);
  for (const auto& po : sel.per_op) {
    REQUIRE_FALSE(po.fallback);
    CHECK(po.donors.front() == 0);
  }
}

TEST_CASE("operators with no containing donor fall back to fresh init yet still train") {
  DonorFixture fx;
  Genotype donor;
  donor.labels = {fx.vocab.index_of("cnn"), fx.vocab.index_of("cnn")};
  donor.preds = {0, 1};
  fx.add_donor(donor, 21, 2);
  fx.finish();

  Genotype identified_geno;
  identified_geno.labels = {fx.vocab.index_of("cnn"), fx.vocab.index_of("agcn")};
  identified_geno.preds = {0, 1};
  tap::TapModel tap(tiny_tap_cfg(fx.vocab), 9);
  auto identified = stblock::BlockModel::instantiate(identified_geno, fx.vocab, fx.task, 4, 5);
  auto sel = select_donors(identified, fx.candidates, tap, fx.vocab, 2);
  bool saw_fallback = false, saw_cnn = false;
  for (const auto& po : sel.per_op) {
    if (po.op_name == "agcn") {
      CHECK(po.fallback);
      saw_fallback = true;
    }
    if (po.op_name == "cnn") {
      CHECK_FALSE(po.fallback);
      saw_cnn = true;
    }
  }
  CHECK(saw_fallback);
  CHECK(saw_cnn);

  auto plan = make_plan(identified, sel, fx.candidates, fx.vocab);
  auto w_init = build_w_init(plan, fx.candidates, identified);
  stblock::TrainOptions opts;
  opts.epochs = 1;
  opts.patience = 1;
  opts.seed = 2;
  auto rep = finetune(identified, w_init, fx.task, opts);  // shape contract holds
  CHECK_FALSE(rep.diverged);
}

TEST_CASE("build_w_init: identity at k=1, zero at alpha=0, linear in alpha") {
  DonorFixture fx;
  Genotype g;
  g.labels = {fx.vocab.index_of("gdcc")};
  g.preds = {0};
  fx.add_donor(g, 31, 2);
  fx.finish();

  tap::TapModel tap(tiny_tap_cfg(fx.vocab), 1);
  auto identified = stblock::BlockModel::instantiate(g, fx.vocab, fx.task, 4, 9);
  auto sel = select_donors(identified, fx.candidates, tap, fx.vocab, 1);
  auto plan = make_plan(identified, sel, fx.candidates, fx.vocab);
  REQUIRE(plan.instances.size() == 2);  // embedding + the gdcc node
  for (const auto& inst : plan.instances) REQUIRE(inst.groups.size() == 1);

  // k = 1, alpha = 1: exactly the donor weights
  auto w1 = build_w_init(plan, fx.candidates, identified);
  CHECK(w1.count("embed.w") == 1);
  CHECK(w1.count("op0.gdcc.wf") == 1);
  for (const auto& [name, t] : w1) {
    const auto& donor_t = fx.candidates[0].params->at(name);
    for (long i = 0; i < t.numel(); ++i) CHECK(t[i] == donor_t[i]);
  }

  // alpha = 0: zero init
  AdaptPlan zero = plan;
  for (auto& inst : zero.instances)
    for (auto& [suffix, values] : inst.alpha) values.assign(values.size(), 0.0);
  for (const auto& [name, t] : build_w_init(zero, fx.candidates, identified))
    for (long i = 0; i < t.numel(); ++i) CHECK(t[i] == 0.0);

  // exact linearity: W(c * alpha) = c * W(alpha)
  AdaptPlan scaled = plan;
  for (auto& inst : scaled.instances)
    for (auto& [suffix, values] : inst.alpha)
      for (double& v : values) v *= 3.0;
  auto w3 = build_w_init(scaled, fx.candidates, identified);
  for (const auto& [name, t] : w3)
    for (long i = 0; i < t.numel(); ++i) CHECK(t[i] == 3.0 * w1.at(name)[i]);
}

TEST_CASE("learn_alpha: zero budget keeps alpha at 1; donors never mutate") {
  DonorFixture fx;
  Genotype g;
  g.labels = {fx.vocab.index_of("cnn"), fx.vocab.index_of("gcn")};
  g.preds = {0, 1};
  fx.add_donor(g, 41, 4);
  fx.finish();
  const std::uint64_t donor_hash = numgrad::content_hash(fx.models[0].params());

  tap::TapModel tap(tiny_tap_cfg(fx.vocab), 2);
  auto identified = stblock::BlockModel::instantiate(g, fx.vocab, fx.task, 4, 3);
  auto sel = select_donors(identified, fx.candidates, tap, fx.vocab, 1);
  auto plan = make_plan(identified, sel, fx.candidates, fx.vocab);

  AlphaLearnOptions opts;
  opts.epochs = 0;
  auto rep = learn_alpha(plan, fx.candidates, identified, fx.task, opts);
  for (const auto& inst : plan.instances)
    for (const auto& [suffix, values] : inst.alpha)
      for (double v : values) CHECK(v == 1.0);
  CHECK(rep.val_at_learned == rep.val_at_one);

  opts.epochs = 3;
  opts.lr = 0.02;
  opts.seed = 7;
  auto rep2 = learn_alpha(plan, fx.candidates, identified, fx.task, opts);
  CHECK(rep2.val_at_learned <= rep2.val_at_one);  // best-checkpoint contract
  CHECK(numgrad::content_hash(fx.models[0].params()) == donor_hash);
}

TEST_CASE("self-transfer: learned alpha stays near 1 and finetune catches the donor fast") {
  DonorFixture fx;
  Genotype g;
  g.labels = {fx.vocab.index_of("cnn"), fx.vocab.index_of("nlinear")};
  g.preds = {0, 1};
  fx.add_donor(g, 51, 10);
  fx.finish();
  const double donor_val = fx.donor_val[0];

  tap::TapModel tap(tiny_tap_cfg(fx.vocab), 4);
  auto identified = stblock::BlockModel::instantiate(g, fx.vocab, fx.task, 4, 13);
  auto sel = select_donors(identified, fx.candidates, tap, fx.vocab, 1);
  auto plan = make_plan(identified, sel, fx.candidates, fx.vocab);

  AlphaLearnOptions aopts;
  aopts.epochs = 3;
  aopts.lr = 0.02;
  aopts.seed = 5;
  auto arep = learn_alpha(plan, fx.candidates, identified, fx.task, aopts);
  CHECK_FALSE(arep.reverted);
  for (const auto& inst : plan.instances)
    for (const auto& [suffix, values] : inst.alpha)
      for (double v : values) CHECK(std::abs(v - 1.0) < 0.1);

  auto w_init = build_w_init(plan, fx.candidates, identified);
  stblock::TrainOptions fopts;
  fopts.epochs = 2;
  fopts.patience = 2;
  fopts.seed = 5;
  fopts.compute_test_metrics = false;
  auto rep = finetune(identified, w_init, fx.task, fopts);
  CHECK(rep.best_val_mae <= donor_val * 1.05 + 1e-6);
}

TEST_CASE("finetune with a fixed seed is deterministic") {
  DonorFixture fx;
  Genotype g;
  g.labels = {fx.vocab.index_of("gru")};
  g.preds = {0};
  fx.add_donor(g, 61, 3);
  fx.finish();
  tap::TapModel tap(tiny_tap_cfg(fx.vocab), 6);

  auto run = [&]() {
    auto identified = stblock::BlockModel::instantiate(g, fx.vocab, fx.task, 4, 19);
    auto sel = select_donors(identified, fx.candidates, tap, fx.vocab, 1);
    auto plan = make_plan(identified, sel, fx.candidates, fx.vocab);
    auto w_init = build_w_init(plan, fx.candidates, identified);
    stblock::TrainOptions opts;
    opts.epochs = 3;
    opts.patience = 3;
    opts.seed = 23;
    opts.compute_test_metrics = false;
    return finetune(identified, w_init, fx.task, opts);
  };
  auto r1 = run();
  auto r2 = run();
  CHECK(r1.train_loss == r2.train_loss);
  CHECK(r1.val_mae == r2.val_mae);
  CHECK(r1.best_val_mae == r2.best_val_mae);
}

TEST_CASE("adaptation report carries donor tables and alpha trajectories") {
  DonorFixture fx;
  Genotype g;
  g.labels = {fx.vocab.index_of("cnn")};
  g.preds = {0};
  fx.add_donor(g, 71, 2);
  fx.finish();
  tap::TapModel tap(tiny_tap_cfg(fx.vocab), 8);
  auto identified = stblock::BlockModel::instantiate(g, fx.vocab, fx.task, 4, 31);
  auto sel = select_donors(identified, fx.candidates, tap, fx.vocab, 1);
  auto plan = make_plan(identified, sel, fx.candidates, fx.vocab);
  AlphaLearnOptions opts;
  opts.epochs = 1;
  auto arep = learn_alpha(plan, fx.candidates, identified, fx.task, opts);
  auto j = adaptation_report(plan, fx.candidates, arep, fx.vocab);
  CHECK(j.contains("candidates"));
  CHECK(j.contains("per_operator"));
  CHECK(j.contains("instances"));
  CHECK(j["alpha_val_curve"].size() == arep.val_curve.size());
}
