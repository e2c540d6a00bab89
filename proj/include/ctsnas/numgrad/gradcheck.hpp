#ifndef CTSNAS_NUMGRAD_GRADCHECK_HPP
#define CTSNAS_NUMGRAD_GRADCHECK_HPP

#include "ctsnas/numgrad/graph.hpp"

#include <functional>
#include <string>
#include <vector>

namespace ctsnas::numgrad {

// Builds a scalar loss from leaves already inserted in the graph (one per
// provided input, in order).
using ScalarFn = std::function<Graph::NodeId(Graph&, const std::vector<Graph::NodeId>&)>;

struct GradcheckItem {
  int input = 0;
  long index = 0;
  double analytic = 0;
  double numeric = 0;
  double rel_err = 0;
  bool kink = false;  // one-sided slopes disagree: non-differentiable point
};

struct GradcheckReport {
  bool pass = false;
  double max_rel_err = 0;
  GradcheckItem worst;
  std::vector<double> per_input_max;  // max relative error per input tensor
  std::string diagnostic;
};

struct GradcheckConfig {
  double eps = 1e-5;
  double tol = 1e-4;
  double kink_tol = 1e-3;  // on |right slope - left slope| / max(1, slopes)
};

GradcheckReport gradcheck(const ScalarFn& fn, const std::vector<Tensor>& inputs,
                          const GradcheckConfig& cfg = {});

inline GradcheckReport gradcheck(const ScalarFn& fn, const std::vector<Tensor>& inputs, double eps,
                                 double tol) {
  GradcheckConfig cfg;
  cfg.eps = eps;
  cfg.tol = tol;
  return gradcheck(fn, inputs, cfg);
}

}  // namespace ctsnas::numgrad

#endif
