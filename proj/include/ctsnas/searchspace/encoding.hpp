#ifndef CTSNAS_SEARCHSPACE_ENCODING_HPP
#define CTSNAS_SEARCHSPACE_ENCODING_HPP

#include "ctsnas/numgrad/tensor.hpp"
#include "ctsnas/searchspace/genotype.hpp"

namespace ctsnas::searchspace {

using numgrad::Tensor;

// DAG encoding consumed by the architecture encoder: adjacency over
// input node 0, operator nodes 1..n_o and an output node n_o+1 that
// aggregates every sink; features one-hot over {input} + vocabulary +
// {output}.
struct GenotypeEncoding {
  Tensor adjacency;  // [n_o+2, n_o+2], row i -> column j means edge i->j
  Tensor features;   // [n_o+2, L+2]
};

GenotypeEncoding encode_genotype(const Genotype& g, const OperatorVocabulary& vocab);
Genotype decode_genotype(const GenotypeEncoding& enc, const OperatorVocabulary& vocab);

}  // namespace ctsnas::searchspace

#endif
