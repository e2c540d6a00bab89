#ifndef CTSNAS_CTSDATA_METRICS_HPP
#define CTSNAS_CTSDATA_METRICS_HPP

#include "ctsnas/ctsdata/dataset.hpp"

namespace ctsnas::ctsdata {

struct Metrics {
  Tag tag = Tag::multi;
  // multi-step
  double mae = 0, rmse = 0, mape = 0;
  // single-step
  double rrse = 0, corr = 0;
  // headline number: MAE for multi, RRSE for single
  double primary() const { return tag == Tag::multi ? mae : rrse; }
};

// Multi-step: MAE / RMSE / MAPE over all elements, MAPE masking |target| below
// mape_eps. Single-step: RRSE over all elements plus CORR averaged over series
// (pred/target interpreted as [samples, N]); series with zero variance on
// either side are excluded, and CORR is 0 when none remain.
Metrics compute_metrics(const Tensor& pred, const Tensor& target, Tag tag,
                        double mape_eps = 1e-8);

}  // namespace ctsnas::ctsdata

#endif
