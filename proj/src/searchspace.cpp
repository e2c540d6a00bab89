#include "ctsnas/searchspace/encoding.hpp"
#include "ctsnas/searchspace/genotype.hpp"
#include "ctsnas/searchspace/vocabulary.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace ctsnas::searchspace {

namespace {

std::string fnv_hex(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

OperatorVocabulary::OperatorVocabulary(std::vector<OperatorDescriptor> ops) : ops_(std::move(ops)) {
  std::set<std::string> names;
  bool temporal = false, spatial = false;
  for (int i = 0; i < size(); ++i) {
    const auto& d = ops_[static_cast<std::size_t>(i)];
    if (!names.insert(d.name).second)
      throw std::invalid_argument("duplicate operator name: " + d.name);
    switch (d.kind) {
      case OpKind::temporal: temporal = true; break;
      case OpKind::spatial: spatial = true; break;
      case OpKind::skip:
        if (skip_index_ >= 0) throw std::invalid_argument("multiple skip operators");
        skip_index_ = i;
        break;
    }
  }
  if (!temporal || !spatial || skip_index_ < 0)
    throw std::invalid_argument(
        "vocabulary needs at least one temporal operator, one spatial operator and skip");
  std::string joined;
  for (const auto& d : ops_) joined += d.name + ";";
  hash_ = fnv_hex(joined);
}

OperatorVocabulary OperatorVocabulary::defaults() {
  return OperatorVocabulary({{"skip", OpKind::skip},
                             {"cnn", OpKind::temporal},
                             {"gdcc", OpKind::temporal},
                             {"gru", OpKind::temporal},
                             {"nlinear", OpKind::temporal},
                             {"t_attn", OpKind::temporal},
                             {"gcn", OpKind::spatial},
                             {"agcn", OpKind::spatial},
                             {"s_attn", OpKind::spatial}});
}

OperatorVocabulary OperatorVocabulary::from_names(const std::vector<std::string>& names) {
  const OperatorVocabulary def = defaults();
  std::vector<OperatorDescriptor> ops;
  ops.reserve(names.size());
  for (const auto& n : names) {
    const int i = def.index_of(n);
    ops.push_back(def.op(i));
  }
  return OperatorVocabulary(std::move(ops));
}

int OperatorVocabulary::index_of(const std::string& name) const {
  for (int i = 0; i < size(); ++i)
    if (ops_[static_cast<std::size_t>(i)].name == name) return i;
  throw std::invalid_argument("unknown operator: " + name);
}

void validate_genotype(const Genotype& g, int vocab_size) {
  if (g.labels.size() != g.preds.size())
    throw std::invalid_argument("genotype: labels and preds lengths differ");
  if (g.labels.empty()) throw std::invalid_argument("genotype: empty block");
  for (std::size_t j = 0; j < g.labels.size(); ++j) {
    if (g.labels[j] < 0 || g.labels[j] >= vocab_size)
      throw std::invalid_argument("genotype: label " + std::to_string(g.labels[j]) +
                                  " outside vocabulary of size " + std::to_string(vocab_size));
    if (g.preds[j] < 0 || g.preds[j] > static_cast<int>(j))
      throw std::invalid_argument("genotype: preds[" + std::to_string(j) + "] = " +
                                  std::to_string(g.preds[j]) + " violates preds[j] <= j");
  }
}

bool genotype_less(const Genotype& a, const Genotype& b) {
  if (a.labels != b.labels) return a.labels < b.labels;
  return a.preds < b.preds;
}

std::string canonical_key(const Genotype& g) {
  std::ostringstream os;
  for (std::size_t i = 0; i < g.labels.size(); ++i) os << (i ? "," : "") << g.labels[i];
  os << '|';
  for (std::size_t i = 0; i < g.preds.size(); ++i) os << (i ? "," : "") << g.preds[i];
  return os.str();
}

std::uint64_t genotype_hash(const Genotype& g) {
  const std::string key = canonical_key(g);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : key) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string genotype_to_json(const Genotype& g, const OperatorVocabulary& vocab) {
  nlohmann::json j;
  j["labels"] = g.labels;
  j["preds"] = g.preds;
  j["vocab_hash"] = vocab.hash();
  return j.dump();
}

Genotype genotype_from_json(const std::string& text, const OperatorVocabulary& vocab) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (j.at("vocab_hash").get<std::string>() != vocab.hash())
    throw std::invalid_argument("genotype was serialized under a different vocabulary");
  Genotype g;
  g.labels = j.at("labels").get<std::vector<int>>();
  g.preds = j.at("preds").get<std::vector<int>>();
  validate_genotype(g, vocab.size());
  return g;
}

int Comb::total() const { return std::accumulate(counts.begin(), counts.end(), 0); }

Comb comb_of(const Genotype& g, int vocab_size) {
  validate_genotype(g, vocab_size);
  Comb c;
  c.counts.assign(static_cast<std::size_t>(vocab_size), 0);
  for (int l : g.labels) ++c.counts[static_cast<std::size_t>(l)];
  return c;
}

namespace {

std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b, const char* what) {
  std::uint64_t r;
  if (__builtin_mul_overflow(a, b, &r))
    throw std::overflow_error(std::string(what) + ": 64-bit overflow");
  return r;
}

std::uint64_t binomial(std::uint64_t n, std::uint64_t k, const char* what) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t r = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    // multiply before divide stays exact because r always holds C(n', i')
    r = checked_mul(r, n - k + i, what);
    r /= i;
  }
  return r;
}

}  // namespace

std::uint64_t count_combs(int vocab_size, int n_ops) {
  if (vocab_size < 1 || n_ops < 1)
    throw std::invalid_argument("count_combs: vocabulary size and block size must be >= 1");
  return binomial(static_cast<std::uint64_t>(n_ops + vocab_size - 1),
                  static_cast<std::uint64_t>(vocab_size - 1), "count_combs");
}

std::vector<Comb> enumerate_combs(int vocab_size, int n_ops) {
  std::vector<Comb> out;
  Comb cur;
  cur.counts.assign(static_cast<std::size_t>(vocab_size), 0);
  std::function<void(int, int)> rec = [&](int pos, int remaining) {
    if (pos == vocab_size - 1) {
      cur.counts[static_cast<std::size_t>(pos)] = remaining;
      out.push_back(cur);
      return;
    }
    for (int v = 0; v <= remaining; ++v) {
      cur.counts[static_cast<std::size_t>(pos)] = v;
      rec(pos + 1, remaining - v);
    }
  };
  rec(0, n_ops);
  return out;
}

std::uint64_t count_topologies(int n_ops) {
  std::uint64_t r = 1;
  for (int j = 1; j <= n_ops; ++j) r = checked_mul(r, static_cast<std::uint64_t>(j), "count_topologies");
  return r;
}

std::vector<std::vector<int>> enumerate_topologies(int n_ops, int cap) {
  if (n_ops < 1) throw std::invalid_argument("enumerate_topologies: n_ops must be >= 1");
  if (n_ops > cap)
    throw std::invalid_argument("enumerate_topologies: " + std::to_string(n_ops) +
                                " operator nodes exceed the cap of " + std::to_string(cap) +
                                "; sample topologies instead");
  std::vector<std::vector<int>> out;
  std::vector<int> preds(static_cast<std::size_t>(n_ops), 0);
  while (true) {
    out.push_back(preds);
    int j = n_ops - 1;
    while (j >= 0) {
      if (preds[static_cast<std::size_t>(j)] < j) {
        ++preds[static_cast<std::size_t>(j)];
        break;
      }
      preds[static_cast<std::size_t>(j)] = 0;
      --j;
    }
    if (j < 0) break;
  }
  return out;
}

std::uint64_t comb_block_count(const Comb& c) {
  const int n = c.total();
  // arrangements = n! / prod(counts!), computed as products of binomials
  std::uint64_t arrangements = 1;
  int remaining = n;
  for (int cnt : c.counts) {
    if (cnt == 0) continue;
    const std::uint64_t choose = binomial(static_cast<std::uint64_t>(remaining),
                                          static_cast<std::uint64_t>(cnt), "comb_block_count");
    if (arrangements > UINT64_MAX / std::max<std::uint64_t>(choose, 1)) return UINT64_MAX;
    arrangements *= choose;
    remaining -= cnt;
  }
  std::uint64_t topo = 1;
  for (int j = 1; j <= n; ++j) {
    if (topo > UINT64_MAX / static_cast<std::uint64_t>(j)) return UINT64_MAX;
    topo *= static_cast<std::uint64_t>(j);
  }
  if (arrangements > UINT64_MAX / std::max<std::uint64_t>(topo, 1)) return UINT64_MAX;
  return arrangements * topo;
}

Genotype sample_block_from_comb(const Comb& c, Rng& rng) {
  Genotype g;
  for (std::size_t i = 0; i < c.counts.size(); ++i)
    for (int k = 0; k < c.counts[i]; ++k) g.labels.push_back(static_cast<int>(i));
  rng.shuffle(g.labels);  // uniform over distinct arrangements
  const int n = static_cast<int>(g.labels.size());
  g.preds.resize(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j)
    g.preds[static_cast<std::size_t>(j)] = static_cast<int>(rng.uniform_u64(static_cast<std::uint64_t>(j + 1)));
  return g;
}

std::vector<Genotype> sample_blocks_from_comb(const Comb& c, int r, std::uint64_t seed) {
  if (r < 1) throw std::invalid_argument("sample_blocks_from_comb: r must be >= 1");
  Rng rng(seed);
  std::vector<Genotype> out;
  out.reserve(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) out.push_back(sample_block_from_comb(c, rng));
  return out;
}

bool for_each_block_in_comb(const Comb& c, const std::function<bool(const Genotype&)>& fn) {
  Genotype g;
  for (std::size_t i = 0; i < c.counts.size(); ++i)
    for (int k = 0; k < c.counts[i]; ++k) g.labels.push_back(static_cast<int>(i));
  std::sort(g.labels.begin(), g.labels.end());
  const int n = static_cast<int>(g.labels.size());
  do {
    g.preds.assign(static_cast<std::size_t>(n), 0);
    while (true) {
      if (!fn(g)) return false;
      int j = n - 1;
      while (j >= 0) {
        if (g.preds[static_cast<std::size_t>(j)] < j) {
          ++g.preds[static_cast<std::size_t>(j)];
          break;
        }
        g.preds[static_cast<std::size_t>(j)] = 0;
        --j;
      }
      if (j < 0) break;
    }
  } while (std::next_permutation(g.labels.begin(), g.labels.end()));
  return true;
}

GenotypeEncoding encode_genotype(const Genotype& g, const OperatorVocabulary& vocab) {
  validate_genotype(g, vocab.size());
  const int n = g.n_ops();
  const int nodes = n + 2;
  const int fdim = vocab.size() + 2;
  GenotypeEncoding enc;
  enc.adjacency = Tensor({nodes, nodes});
  enc.features = Tensor({nodes, fdim});

  enc.features.at({0, 0}) = 1.0;                      // input token
  enc.features.at({nodes - 1, fdim - 1}) = 1.0;       // output token
  for (int j = 0; j < n; ++j) enc.features.at({j + 1, 1 + g.labels[static_cast<std::size_t>(j)]}) = 1.0;

  std::vector<bool> has_successor(static_cast<std::size_t>(n + 1), false);
  for (int j = 0; j < n; ++j) {
    enc.adjacency.at({g.preds[static_cast<std::size_t>(j)], j + 1}) = 1.0;
    has_successor[static_cast<std::size_t>(g.preds[static_cast<std::size_t>(j)])] = true;
  }
  for (int v = 1; v <= n; ++v)
    if (!has_successor[static_cast<std::size_t>(v)]) enc.adjacency.at({v, nodes - 1}) = 1.0;
  return enc;
}

Genotype decode_genotype(const GenotypeEncoding& enc, const OperatorVocabulary& vocab) {
  const int nodes = enc.adjacency.dim(0);
  const int n = nodes - 2;
  const int fdim = vocab.size() + 2;
  if (enc.features.dim(0) != nodes || enc.features.dim(1) != fdim)
    throw std::invalid_argument("decode_genotype: feature matrix shape mismatch");
  Genotype g;
  g.labels.resize(static_cast<std::size_t>(n));
  g.preds.resize(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    int label = -1;
    for (int f = 1; f <= vocab.size(); ++f)
      if (enc.features.at({j + 1, f}) != 0.0) label = f - 1;
    if (label < 0) throw std::invalid_argument("decode_genotype: node without operator one-hot");
    g.labels[static_cast<std::size_t>(j)] = label;
    int pred = -1;
    for (int i = 0; i < nodes - 1; ++i)
      if (enc.adjacency.at({i, j + 1}) != 0.0) {
        if (pred >= 0) throw std::invalid_argument("decode_genotype: multiple predecessors");
        pred = i;
      }
    if (pred < 0) throw std::invalid_argument("decode_genotype: node without predecessor");
    g.preds[static_cast<std::size_t>(j)] = pred;
  }
  validate_genotype(g, vocab.size());
  return g;
}

}  // namespace ctsnas::searchspace
