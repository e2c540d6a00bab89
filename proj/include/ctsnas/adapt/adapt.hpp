#ifndef CTSNAS_ADAPT_ADAPT_HPP
#define CTSNAS_ADAPT_ADAPT_HPP

#include "ctsnas/stblock/trainer.hpp"
#include "ctsnas/tap/tap.hpp"

#include <json.hpp>

namespace ctsnas::adapt {

using ctsdata::ForecastTask;
using numgrad::ParamStore;
using numgrad::Tensor;
using searchspace::Genotype;
using searchspace::OperatorVocabulary;

// Label-substitution cost 1 per mismatched operator node, edge insert/delete
// cost 1 each; input and output nodes are pinned. Exact branch-and-bound up to
// exact_cap operator nodes, greedy beam beyond.
int graph_edit_distance(const Genotype& a, const Genotype& b, int exact_cap = 8,
                        int beam_width = 64);

// A pretrained block available for weight inheritance.
struct DonorCandidate {
  Genotype genotype;
  int task_id = 0;
  ctsdata::Tag tag = ctsdata::Tag::multi;
  double raw_val_mae = 0.0;
  std::string key;                 // blob reference, for reports
  const ParamStore* params = nullptr;
};

// Candidate indices ordered by Borda sum of the two rank lists (GED ascending,
// cosine descending); ties by lower GED, then canonical genotype order.
std::vector<int> borda_order(const std::vector<int>& ged, const std::vector<double>& cosine,
                             const std::vector<Genotype>& genotypes);

struct DonorSelection {
  struct PerOp {
    int label = -1;
    std::string op_name;
    std::vector<int> donors;  // candidate indices, best first, size <= n
    bool fallback = false;    // nothing compatible: fresh initialization
  };
  std::vector<PerOp> per_op;       // one entry per distinct label with parameters
  // The input embedding transfers with the operators (it sets the scale the
  // operator weights were trained against); heads always stay fresh.
  std::vector<int> embed_donors;
  bool embed_fallback = false;
  std::vector<int> ged;            // per candidate
  std::vector<double> cosine;      // per candidate
  std::vector<int> order;          // Borda order over candidates
};

DonorSelection select_donors(const stblock::BlockModel& identified,
                             const std::vector<DonorCandidate>& candidates,
                             const tap::TapModel& tap, const OperatorVocabulary& vocab, int n);

// One inheritance group: a donor instance of the operator.
struct AlphaGroup {
  int candidate = -1;   // index into the candidate list
  int donor_node = -1;  // operator node inside the donor genotype
};

struct InstanceAdaptation {
  int node = -1;  // operator node in the identified block; -1 is the embedding
  std::string op_name;
  bool fallback = false;
  std::vector<AlphaGroup> groups;  // k groups
  // per tensor suffix: k coefficients, initialized to 1
  std::map<std::string, std::vector<double>> alpha;
};

struct AdaptPlan {
  std::vector<InstanceAdaptation> instances;
  DonorSelection selection;
};

AdaptPlan make_plan(const stblock::BlockModel& identified, const DonorSelection& sel,
                    const std::vector<DonorCandidate>& candidates,
                    const OperatorVocabulary& vocab);

// W_init per adapted tensor: (sum_g alpha_g * W_g) / k. Names absent from the
// map keep the identified block's fresh initialization.
std::map<std::string, Tensor> build_w_init(const AdaptPlan& plan,
                                           const std::vector<DonorCandidate>& candidates,
                                           const stblock::BlockModel& identified);

struct AlphaLearnOptions {
  int epochs = 3;         // coefficient-only descent epochs
  int warmup_epochs = 2;  // fresh-parameter (head etc.) epochs at alpha = 1
  double lr = 0.05;
  int batch = 16;
  std::uint64_t seed = 0;
};

struct AlphaLearnReport {
  bool reverted = false;        // divergence: back to alpha = 1
  double val_at_one = 0.0;      // validation MAE of the plain average
  double val_at_learned = 0.0;  // validation MAE at the returned alpha
  std::vector<double> val_curve;
};

// Two phases. Warm-up trains only the non-donated parameters (head, and any
// fallback operators) against the alpha = 1 inherited weights, writing them
// back into `identified`; a frozen random head would otherwise reward
// shrinking every coefficient toward zero. The alpha phase then runs gradient
// descent on the coefficients only, with donor weights and the warmed fresh
// parameters frozen. Returns the best-by-validation alpha in the plan.
AlphaLearnReport learn_alpha(AdaptPlan& plan, const std::vector<DonorCandidate>& candidates,
                             stblock::BlockModel& identified, const ForecastTask& task,
                             const AlphaLearnOptions& opts);

// Writes W_init into the model and runs the standard training path.
stblock::TrainReport finetune(stblock::BlockModel& identified,
                              const std::map<std::string, Tensor>& w_init,
                              const ForecastTask& task, const stblock::TrainOptions& opts);

nlohmann::json adaptation_report(const AdaptPlan& plan,
                                 const std::vector<DonorCandidate>& candidates,
                                 const AlphaLearnReport& alpha_rep,
                                 const OperatorVocabulary& vocab);

}  // namespace ctsnas::adapt

#endif
