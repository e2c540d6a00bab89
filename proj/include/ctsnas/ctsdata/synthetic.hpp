#ifndef CTSNAS_CTSDATA_SYNTHETIC_HPP
#define CTSNAS_CTSDATA_SYNTHETIC_HPP

#include "ctsnas/ctsdata/dataset.hpp"

#include <cstdint>

namespace ctsnas::ctsdata {

// Generator for the pretraining corpus: diffusion-coupled seasonal signals
// with optional trend and noise, so that temporal and spatial operators both
// have something real to model.
struct SyntheticSpec {
  std::string name = "synthetic";
  int n_series = 4;
  int t_len = 240;
  int input_len = 12;            // P
  int horizon = 6;               // Q
  Tag tag = Tag::multi;

  std::vector<int> periods = {12, 24};
  double period_jitter = 0.1;    // relative period perturbation; 0 = exact
  int waves = 2;                 // sinusoids mixed per series
  double amp_min = 0.6, amp_max = 1.4;
  double trend_scale = 0.0;      // max |total drift| over the series
  double coupling = 0.0;         // neighbour mixing weight in [0, 1)
  int coupling_rounds = 1;
  int coupling_lag = 1;
  double noise_sigma = 0.0;
  double adjacency_density = 0.5;
  bool time_feature = false;     // add a phase-of-period channel

  std::array<double, 3> split = {0.6, 0.2, 0.2};
};

ForecastTask generate_synthetic_task(const SyntheticSpec& spec, std::uint64_t seed);

}  // namespace ctsnas::ctsdata

#endif
