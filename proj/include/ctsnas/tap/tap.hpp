#ifndef CTSNAS_TAP_TAP_HPP
#define CTSNAS_TAP_TAP_HPP

#include "ctsnas/ctsdata/features.hpp"
#include "ctsnas/numgrad/graph.hpp"
#include "ctsnas/numgrad/params.hpp"
#include "ctsnas/searchspace/encoding.hpp"

#include <filesystem>
#include <map>

namespace ctsnas::tap {

using ctsdata::ForecastTask;
using numgrad::Graph;
using numgrad::ParamStore;
using numgrad::Tensor;
using searchspace::Genotype;
using searchspace::GenotypeEncoding;
using searchspace::OperatorVocabulary;

struct TapConfig {
  int gcn_layers = 4;
  int gcn_hidden = 32;
  int arch_embed = 32;   // H_a width
  int set_dim = 32;      // set-attention width
  int align_dim = 32;    // MLP2/MLP3 output width
  int reg_hidden = 32;   // regressor hidden width
  int window_len = 16;   // semantic windows are resampled to this length
  int n_series = 4;      // semantic sampling
  int n_windows = 6;
  int stat_dim = 2 * ctsdata::kStatFeaturesPerSeries;
  int feature_dim = 11;  // vocabulary size + 2 (input/output tokens)
};

// Task features in TAP input form: raw statistics plus fixed-length windows.
struct TapTaskFeatures {
  Tensor stat;     // [stat_dim], unnormalized
  Tensor windows;  // [n_series, n_windows, window_len]
};

TapTaskFeatures prepare_task_features(const TapConfig& cfg, const ForecastTask& task,
                                      std::uint64_t seed);

// Precomputed task side of the predictor, reused across many genotypes.
struct TaskEmbedding {
  Tensor semantic_aligned;  // MLP2(D_a)
  Tensor stat_aligned;      // MLP3(T_a)
};

class TapModel {
 public:
  TapModel(TapConfig cfg, std::uint64_t seed);

  const TapConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // statistics used to standardize the statistical vector (set at pretrain)
  const Tensor& stat_mean() const { return stat_mean_; }
  const Tensor& stat_std() const { return stat_std_; }
  void set_stat_norm(Tensor mean, Tensor std);

  bool frozen() const { return frozen_; }
  void freeze() { frozen_ = true; }

  // ---- eval paths (no tape, no parameter mutation) ----
  Tensor afl_encode(const GenotypeEncoding& enc) const;          // H_a
  Tensor tfl_semantic(const Tensor& windows) const;              // D_a
  TaskEmbedding task_embedding(const TapTaskFeatures& tf) const;
  double predict(const GenotypeEncoding& enc, const TaskEmbedding& temb) const;
  double predict_accuracy(const Genotype& g, const OperatorVocabulary& vocab,
                          const TapTaskFeatures& tf) const;

  // ---- graph path (training / gradcheck) ----
  // binder resolves parameter names to graph nodes; reuse one binder per graph
  using Binder = std::function<Graph::NodeId(Graph&, const std::string&)>;
  Graph::NodeId build_predict(Graph& g, const Binder& bind, const GenotypeEncoding& enc,
                              const TapTaskFeatures& tf) const;
  // the task side alone, for sharing between samples of one task
  std::pair<Graph::NodeId, Graph::NodeId> build_task_embedding(Graph& g, const Binder& bind,
                                                               const TapTaskFeatures& tf) const;
  Graph::NodeId build_predict_with_task(Graph& g, const Binder& bind, const GenotypeEncoding& enc,
                                        Graph::NodeId sem_aligned, Graph::NodeId stat_aligned) const;

  Binder default_binder(std::map<std::string, Graph::NodeId>* leaves = nullptr) const;

  void save(const std::filesystem::path& base) const;  // base.json + base.bin
  static TapModel load(const std::filesystem::path& base);

 private:
  TapConfig cfg_;
  ParamStore params_;
  Tensor stat_mean_, stat_std_;
  bool frozen_ = false;
};

// symmetric normalization with self loops of the (directed) DAG adjacency
Tensor normalize_dag_adjacency(const Tensor& a);

}  // namespace ctsnas::tap

#endif
