#ifndef CTSNAS_SEARCHSPACE_VOCABULARY_HPP
#define CTSNAS_SEARCHSPACE_VOCABULARY_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace ctsnas::searchspace {

enum class OpKind { temporal, spatial, skip };

struct OperatorDescriptor {
  std::string name;
  OpKind kind = OpKind::temporal;
};

// Ordered operator set used to build ST-blocks. Invariants: unique names, at
// least one temporal and one spatial operator, and a skip operator.
class OperatorVocabulary {
 public:
  explicit OperatorVocabulary(std::vector<OperatorDescriptor> ops);

  // skip, 1-D conv, gated dilated causal conv, GRU, last-value-anchored
  // linear, temporal attention, fixed-graph conv, adaptive-graph conv,
  // spatial attention
  static OperatorVocabulary defaults();
  static OperatorVocabulary from_names(const std::vector<std::string>& names);

  int size() const { return static_cast<int>(ops_.size()); }
  const OperatorDescriptor& op(int i) const { return ops_[static_cast<std::size_t>(i)]; }
  int index_of(const std::string& name) const;
  int skip_index() const { return skip_index_; }

  // stable identifier for serialized genotypes
  std::string hash() const { return hash_; }

 private:
  std::vector<OperatorDescriptor> ops_;
  int skip_index_ = -1;
  std::string hash_;
};

}  // namespace ctsnas::searchspace

#endif
