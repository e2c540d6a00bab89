#ifndef CTSNAS_NUMGRAD_ADAM_HPP
#define CTSNAS_NUMGRAD_ADAM_HPP

#include "ctsnas/numgrad/params.hpp"

#include <map>
#include <string>

namespace ctsnas::numgrad {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Decoupled: the parameter is shrunk by lr*weight_decay before the moment
  // update is applied.
  double weight_decay = 0.0;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  long steps() const { return step_; }

  // Applies one update to every parameter that has a gradient entry.
  // Parameters without a gradient are left untouched.
  void step(ParamStore& params, const std::map<std::string, Tensor>& grads);

  void reset() {
    states_.clear();
    step_ = 0;
  }

 private:
  struct State {
    Tensor m, v;
  };
  AdamConfig cfg_;
  std::map<std::string, State> states_;
  long step_ = 0;
};

}  // namespace ctsnas::numgrad

#endif
