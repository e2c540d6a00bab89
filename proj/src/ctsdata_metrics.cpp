#include "ctsnas/ctsdata/metrics.hpp"

#include <cmath>

namespace ctsnas::ctsdata {

Metrics compute_metrics(const Tensor& pred, const Tensor& target, Tag tag, double mape_eps) {
  if (pred.shape() != target.shape())
    throw numgrad::ShapeError("metrics: prediction shape " + numgrad::shape_str(pred.shape()) +
                              " does not match target shape " +
                              numgrad::shape_str(target.shape()));
  const long n = pred.numel();
  if (n == 0) throw std::invalid_argument("metrics: empty prediction");
  Metrics m;
  m.tag = tag;
  if (tag == Tag::multi) {
    double abs_sum = 0, sq_sum = 0, ape_sum = 0;
    long ape_count = 0;
    for (long i = 0; i < n; ++i) {
      const double e = pred[i] - target[i];
      abs_sum += std::abs(e);
      sq_sum += e * e;
      if (std::abs(target[i]) >= mape_eps) {
        ape_sum += std::abs(e / target[i]);
        ++ape_count;
      }
    }
    m.mae = abs_sum / static_cast<double>(n);
    m.rmse = std::sqrt(sq_sum / static_cast<double>(n));
    m.mape = ape_count > 0 ? ape_sum / static_cast<double>(ape_count) : 0.0;
    return m;
  }

  // single-step: RRSE over everything, CORR averaged over series
  double t_mean = 0;
  for (long i = 0; i < n; ++i) t_mean += target[i];
  t_mean /= static_cast<double>(n);
  double num = 0, den = 0;
  for (long i = 0; i < n; ++i) {
    const double e = pred[i] - target[i];
    num += e * e;
    const double d = target[i] - t_mean;
    den += d * d;
  }
  m.rrse = den > 0 ? std::sqrt(num / den) : (num > 0 ? std::numeric_limits<double>::infinity() : 0.0);

  if (pred.rank() != 2)
    throw numgrad::ShapeError("metrics: single-step CORR expects [samples, N], got " +
                              numgrad::shape_str(pred.shape()));
  const int samples = pred.dim(0), series = pred.dim(1);
  double corr_sum = 0;
  int corr_count = 0;
  for (int s = 0; s < series; ++s) {
    double mp = 0, mt = 0;
    for (int i = 0; i < samples; ++i) {
      mp += pred.at({i, s});
      mt += target.at({i, s});
    }
    mp /= samples;
    mt /= samples;
    double cpt = 0, vp = 0, vt = 0;
    for (int i = 0; i < samples; ++i) {
      const double dp = pred.at({i, s}) - mp;
      const double dt = target.at({i, s}) - mt;
      cpt += dp * dt;
      vp += dp * dp;
      vt += dt * dt;
    }
    if (vp > 0 && vt > 0) {
      corr_sum += cpt / std::sqrt(vp * vt);
      ++corr_count;
    }
  }
  m.corr = corr_count > 0 ? corr_sum / corr_count : 0.0;
  return m;
}

}  // namespace ctsnas::ctsdata
