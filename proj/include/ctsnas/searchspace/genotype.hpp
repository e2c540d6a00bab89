#ifndef CTSNAS_SEARCHSPACE_GENOTYPE_HPP
#define CTSNAS_SEARCHSPACE_GENOTYPE_HPP

#include "ctsnas/common/rng.hpp"
#include "ctsnas/searchspace/vocabulary.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace ctsnas::searchspace {

// One ST-block: operator labels plus, per operator node j, the DAG node it
// consumes. Node 0 is the block input and operator node j is DAG node j+1, so
// preds[j] <= j keeps the graph acyclic by construction.
struct Genotype {
  std::vector<int> labels;
  std::vector<int> preds;

  int n_ops() const { return static_cast<int>(labels.size()); }
  bool operator==(const Genotype& o) const = default;
};

void validate_genotype(const Genotype& g, int vocab_size);

// canonical order: labels lexicographic, then preds lexicographic
bool genotype_less(const Genotype& a, const Genotype& b);
std::string canonical_key(const Genotype& g);
std::uint64_t genotype_hash(const Genotype& g);

std::string genotype_to_json(const Genotype& g, const OperatorVocabulary& vocab);
Genotype genotype_from_json(const std::string& text, const OperatorVocabulary& vocab);

// Occurrence counts over the vocabulary; the partition key of the space.
struct Comb {
  std::vector<int> counts;

  int total() const;
  bool operator==(const Comb& o) const = default;
  bool operator<(const Comb& o) const { return counts < o.counts; }
};

Comb comb_of(const Genotype& g, int vocab_size);

// C(n_o + L - 1, L - 1); throws on 64-bit overflow.
std::uint64_t count_combs(int vocab_size, int n_ops);

// all combs in lexicographic order (small spaces only)
std::vector<Comb> enumerate_combs(int vocab_size, int n_ops);

std::uint64_t count_topologies(int n_ops);  // n_ops!

// All preds vectors for n_ops operator nodes. The cap guards accidental
// exponential blowups; exceeding it is an error instructing to sample.
std::vector<std::vector<int>> enumerate_topologies(int n_ops, int cap = 8);

// distinct label arrangements x topologies; saturates at uint64 max
std::uint64_t comb_block_count(const Comb& c);

Genotype sample_block_from_comb(const Comb& c, Rng& rng);
std::vector<Genotype> sample_blocks_from_comb(const Comb& c, int r, std::uint64_t seed);

// Visits every block of the comb in canonical order (arrangements in
// lexicographic label order, preds in odometer order). Returns false if the
// visitor aborted.
bool for_each_block_in_comb(const Comb& c, const std::function<bool(const Genotype&)>& fn);

}  // namespace ctsnas::searchspace

#endif
