#ifndef CTSNAS_STBLOCK_MODEL_HPP
#define CTSNAS_STBLOCK_MODEL_HPP

#include "ctsnas/ctsdata/dataset.hpp"
#include "ctsnas/numgrad/graph.hpp"
#include "ctsnas/numgrad/params.hpp"
#include "ctsnas/searchspace/genotype.hpp"

#include <functional>
#include <map>

namespace ctsnas::stblock {

using ctsdata::ForecastTask;
using ctsdata::Tag;
using numgrad::Graph;
using numgrad::ParamStore;
using numgrad::Tensor;
using searchspace::Genotype;
using searchspace::OperatorVocabulary;

struct BlockDims {
  int n_series = 0;    // N
  int input_len = 0;   // P
  int horizon = 0;     // Q
  int n_features = 1;  // F
  int hidden = 16;     // H
  int node_embed = 4;  // adaptive-graph embedding width
  Tag tag = Tag::multi;
};

// Maps a parameter name to the graph node supplying its value. The default
// binder creates a leaf per parameter; adaptation swaps in composed nodes.
using ParamBinder = std::function<Graph::NodeId(Graph&, const std::string&)>;

// Per-channel normalization fitted on the training split.
struct Scaler {
  double mean = 0.0;
  double std = 1.0;
};

// A genotype instantiated against one task: embedding -> operator DAG ->
// output head, with every operator holding the [batch, N, P, hidden] shape
// contract.
class BlockModel {
 public:
  static BlockModel instantiate(const Genotype& g, const OperatorVocabulary& vocab,
                                const ForecastTask& task, int hidden, std::uint64_t seed);

  const Genotype& genotype() const { return genotype_; }
  const BlockDims& dims() const { return dims_; }
  const std::vector<std::string>& op_names() const { return op_names_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const Eigen::MatrixXd& norm_adjacency() const { return norm_adjacency_; }
  const Scaler& scaler() const { return scaler_; }
  std::uint64_t seed() const { return seed_; }

  long param_count() const { return params_.total_numel(); }

  // Builds the forward pass from a [B, N, P, F] input node to the prediction
  // ([B, N, Q] multi / [B, N] single), in normalized units.
  Graph::NodeId build_prediction(Graph& g, Graph::NodeId input, const ParamBinder& bind) const;

  ParamBinder default_binder(std::map<std::string, Graph::NodeId>* leaves = nullptr) const;

  // closed-form parameter count for one operator
  static long operator_param_count(const std::string& op_name, const BlockDims& dims);
  static long analytic_param_count(const Genotype& g, const OperatorVocabulary& vocab,
                                   const BlockDims& dims);

  // parameter names owned by operator node j (prefix "op<j>.<name>.")
  std::vector<std::string> instance_param_names(int node) const;
  static std::string instance_prefix(int node, const std::string& op_name);

 private:
  Genotype genotype_;
  std::vector<std::string> op_names_;
  BlockDims dims_;
  ParamStore params_;
  Eigen::MatrixXd norm_adjacency_;
  Scaler scaler_;
  std::uint64_t seed_ = 0;
};

// normalization helpers shared by trainer and evaluation
Tensor normalize_input(const Tensor& input, const Scaler& s);
Tensor normalize_target(const Tensor& target, const Scaler& s);
Tensor denormalize_prediction(const Tensor& pred, const Scaler& s);
Scaler fit_scaler(const ForecastTask& task);

}  // namespace ctsnas::stblock

#endif
