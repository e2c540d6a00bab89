#ifndef CTSNAS_TESTS_HELPERS_HPP
#define CTSNAS_TESTS_HELPERS_HPP

#include "ctsnas/ctsdata/synthetic.hpp"
#include "ctsnas/numgrad/gradcheck.hpp"
#include "ctsnas/stblock/model.hpp"

#include <string>
#include <vector>

namespace ctsnas::testing {

// Finite-difference check of the full block loss (embedding, one or more
// operators, head, MAE) against every parameter and the input batch.
inline numgrad::GradcheckReport gradcheck_block(const stblock::BlockModel& model,
                                                const ctsdata::ForecastTask& task, double eps,
                                                double tol) {
  using numgrad::Graph;
  using numgrad::Tensor;
  const auto splits = ctsdata::split_dataset(task);
  auto starts = ctsdata::window_starts(splits.train, task.input_len, task.horizon);
  auto batch = ctsdata::make_batch(task, starts, 0, std::min<std::size_t>(2, starts.size()));

  std::vector<std::string> names;
  std::vector<Tensor> inputs;
  for (const auto& [name, t] : model.params()) {
    names.push_back(name);
    inputs.push_back(t);
  }
  inputs.push_back(stblock::normalize_input(batch.input, model.scaler()));
  Tensor target = stblock::normalize_target(batch.target, model.scaler());

  auto fn = [&](Graph& g, const std::vector<Graph::NodeId>& leaves) {
    stblock::ParamBinder binder = [&](Graph&, const std::string& name) {
      for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return leaves[i];
      throw numgrad::StateError("unexpected parameter " + name);
    };
    auto pred = model.build_prediction(g, leaves.back(), binder);
    return g.mae(pred, g.value(target));
  };
  return numgrad::gradcheck(fn, inputs, eps, tol);
}

// small learnable task shared by several suites
inline ctsdata::ForecastTask tiny_task(std::uint64_t seed = 11, double noise = 0.0,
                                       double coupling = 0.0,
                                       ctsdata::Tag tag = ctsdata::Tag::multi) {
  ctsdata::SyntheticSpec spec;
  spec.name = "tiny";
  spec.n_series = 3;
  spec.t_len = 140;
  spec.input_len = 8;
  spec.horizon = 4;
  spec.tag = tag;
  spec.waves = 1;
  spec.periods = {8};
  spec.period_jitter = 0.0;
  spec.noise_sigma = noise;
  spec.coupling = coupling;
  return ctsdata::generate_synthetic_task(spec, seed);
}

}  // namespace ctsnas::testing

#endif
