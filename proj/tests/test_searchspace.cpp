#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ctsnas/searchspace/encoding.hpp"

#include <map>
#include <set>

using namespace ctsnas;
using namespace ctsnas::searchspace;

namespace {

OperatorVocabulary paper_style_vocab() {
  // six-operator vocabulary used in the worked comb examples
  return OperatorVocabulary({{"skip", OpKind::skip},
                             {"cnn", OpKind::temporal},
                             {"gcn", OpKind::spatial},
                             {"inf_t", OpKind::temporal},
                             {"inf_s", OpKind::spatial},
                             {"gru", OpKind::temporal}});
}

}  // namespace

TEST_CASE("count_combs known values and enumeration oracle") {
  CHECK(count_combs(6, 7) == 792);
  CHECK(count_combs(1, 5) == 1);
  CHECK(count_combs(2, 2) == 3);
  for (int l = 1; l <= 4; ++l)
    for (int n = 1; n <= 5; ++n)
      CHECK(count_combs(l, n) == enumerate_combs(l, n).size());
}

TEST_CASE("comb_of matches the worked example") {
  auto vocab = paper_style_vocab();
  Genotype g;
  g.labels = {vocab.index_of("skip"), vocab.index_of("cnn"), vocab.index_of("cnn"),
              vocab.index_of("gcn"),  vocab.index_of("gcn"), vocab.index_of("inf_s"),
              vocab.index_of("gru"),  vocab.index_of("gru")};
  g.preds = {0, 0, 1, 2, 3, 4, 5, 6};
  Comb c = comb_of(g, vocab.size());
  CHECK(c.counts == std::vector<int>{1, 2, 2, 0, 1, 2});
  CHECK(c.total() == g.n_ops());
}

TEST_CASE("comb_of: all-skip and permutation invariance") {
  auto vocab = paper_style_vocab();
  Genotype g;
  g.labels.assign(5, vocab.index_of("skip"));
  g.preds = {0, 1, 0, 2, 1};
  Comb c = comb_of(g, vocab.size());
  CHECK(c.counts == std::vector<int>{5, 0, 0, 0, 0, 0});

  Rng rng(4);
  Genotype h;
  h.labels = {1, 2, 5, 2, 0};
  h.preds = {0, 1, 2, 0, 4};
  Comb before = comb_of(h, vocab.size());
  for (int rep = 0; rep < 10; ++rep) {
    rng.shuffle(h.labels);
    CHECK(comb_of(h, vocab.size()) == before);
  }
}

TEST_CASE("topology enumeration: counts and validity") {
  CHECK(enumerate_topologies(1).size() == 1);
  auto t3 = enumerate_topologies(3);
  CHECK(t3.size() == 6);
  CHECK(count_topologies(3) == 6);
  for (int n = 1; n <= 5; ++n) CHECK(enumerate_topologies(n).size() == count_topologies(n));
  for (const auto& preds : enumerate_topologies(5))
    for (std::size_t j = 0; j < preds.size(); ++j) CHECK(preds[j] <= static_cast<int>(j));
  CHECK_THROWS_WITH(enumerate_topologies(9, 8), doctest::Contains("sample"));
}

TEST_CASE("sampling: closure, forced labels, reproducibility") {
  Comb c;
  c.counts = {1, 2, 2, 0, 1, 2};
  auto blocks = sample_blocks_from_comb(c, 100, 123);
  CHECK(blocks.size() == 100);
  for (const auto& g : blocks) CHECK(comb_of(g, 6) == c);

  auto again = sample_blocks_from_comb(c, 100, 123);
  CHECK(blocks == again);

  Comb forced;
  forced.counts = {0, 4, 0};
  for (const auto& g : sample_blocks_from_comb(forced, 20, 7))
    CHECK(g.labels == std::vector<int>{1, 1, 1, 1});
}

TEST_CASE("sampling: topology distribution is near uniform (chi-square style)") {
  Comb c;
  c.counts = {3, 0};  // labels forced, only topology varies
  auto blocks = sample_blocks_from_comb(c, 6000, 2023);
  std::map<std::vector<int>, int> hist;
  for (const auto& g : blocks) ++hist[g.preds];
  CHECK(hist.size() == 6);
  for (const auto& [preds, count] : hist) {
    CHECK(count >= 950);   // within 5% of the uniform 1000
    CHECK(count <= 1050);
  }
}

TEST_CASE("combs partition the genotype space") {
  // every genotype maps to exactly one comb, and comb sizes sum to the
  // whole space: L^n * n! for L=3, n=4
  const int L = 3, n = 4;
  auto combs = enumerate_combs(L, n);
  std::uint64_t total = 0;
  for (const auto& c : combs) total += comb_block_count(c);
  std::uint64_t expect = 1;
  for (int i = 0; i < n; ++i) expect *= L;
  expect *= count_topologies(n);
  CHECK(total == expect);

  // brute-force: enumerate every block of every comb, check uniqueness
  std::set<std::string> seen;
  for (const auto& c : combs)
    for_each_block_in_comb(c, [&](const Genotype& g) {
      CHECK(comb_of(g, L) == c);
      CHECK(seen.insert(canonical_key(g)).second);
      return true;
    });
  CHECK(seen.size() == total);
}

TEST_CASE("encoding: single-operator block is a three-node chain") {
  auto vocab = OperatorVocabulary::defaults();
  Genotype g;
  g.labels = {vocab.index_of("gru")};
  g.preds = {0};
  auto enc = encode_genotype(g, vocab);
  CHECK(enc.adjacency.shape() == numgrad::Shape{3, 3});
  CHECK(enc.adjacency.at({0, 1}) == 1.0);
  CHECK(enc.adjacency.at({1, 2}) == 1.0);
  double edge_sum = 0;
  for (long i = 0; i < enc.adjacency.numel(); ++i) edge_sum += enc.adjacency[i];
  CHECK(edge_sum == 2.0);
}

TEST_CASE("encoding: one-hot rows and decode round trip on random genotypes") {
  auto vocab = OperatorVocabulary::defaults();
  Rng rng(99);
  for (int rep = 0; rep < 1000; ++rep) {
    const int n = 1 + static_cast<int>(rng.uniform_u64(7));
    Genotype g;
    for (int j = 0; j < n; ++j) {
      g.labels.push_back(static_cast<int>(rng.uniform_u64(static_cast<std::uint64_t>(vocab.size()))));
      g.preds.push_back(static_cast<int>(rng.uniform_u64(static_cast<std::uint64_t>(j + 1))));
    }
    auto enc = encode_genotype(g, vocab);
    for (int r = 0; r < enc.features.dim(0); ++r) {
      double row = 0;
      for (int f = 0; f < enc.features.dim(1); ++f) row += enc.features.at({r, f});
      CHECK(row == 1.0);
    }
    CHECK(decode_genotype(enc, vocab) == g);
  }
}

TEST_CASE("genotype json round trip is bit exact and vocabulary guarded") {
  auto vocab = OperatorVocabulary::defaults();
  Rng rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    Genotype g;
    for (int j = 0; j < 7; ++j) {
      g.labels.push_back(static_cast<int>(rng.uniform_u64(static_cast<std::uint64_t>(vocab.size()))));
      g.preds.push_back(static_cast<int>(rng.uniform_u64(static_cast<std::uint64_t>(j + 1))));
    }
    const std::string text = genotype_to_json(g, vocab);
    CHECK(genotype_from_json(text, vocab) == g);
    CHECK(genotype_to_json(genotype_from_json(text, vocab), vocab) == text);
  }
  Genotype g;
  g.labels = {0};
  g.preds = {0};
  const std::string text = genotype_to_json(g, vocab);
  auto other = paper_style_vocab();
  CHECK_THROWS(genotype_from_json(text, other));
}

TEST_CASE("vocabulary invariants") {
  CHECK_THROWS(OperatorVocabulary({{"skip", OpKind::skip}, {"cnn", OpKind::temporal}}));
  CHECK_THROWS(OperatorVocabulary(
      {{"a", OpKind::temporal}, {"a", OpKind::spatial}, {"skip", OpKind::skip}}));
  auto v = OperatorVocabulary::defaults();
  CHECK(v.size() == 9);
  CHECK(v.op(v.skip_index()).name == "skip");
  CHECK(v.index_of("agcn") == 7);
}

TEST_CASE("count_combs overflow is an error, not silent wraparound") {
  CHECK_THROWS_AS(count_combs(40, 60), std::overflow_error);
}
