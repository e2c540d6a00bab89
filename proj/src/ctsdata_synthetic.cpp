#include "ctsnas/ctsdata/synthetic.hpp"

#include "ctsnas/common/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace ctsnas::ctsdata {

ForecastTask generate_synthetic_task(const SyntheticSpec& spec, std::uint64_t seed) {
  const int n = spec.n_series, t_len = spec.t_len;
  if (n < 1 || t_len < 2) throw std::invalid_argument("synthetic: need n_series >= 1, t_len >= 2");
  if (spec.periods.empty() || spec.waves < 1)
    throw std::invalid_argument("synthetic: need at least one period and one wave");
  const int need = spec.input_len + spec.horizon;
  // every split segment must fit at least one window
  const int min_seg = static_cast<int>(std::floor(std::min({spec.split[0], spec.split[1], spec.split[2]}) * t_len));
  if (min_seg < need)
    throw std::invalid_argument("synthetic: t_len " + std::to_string(t_len) +
                                " too short for P+Q windows in every split");

  Rng rng(seed);

  // adjacency: symmetric, nonnegative, zero diagonal
  Eigen::MatrixXd adj = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (rng.uniform_real() < spec.adjacency_density) {
        const double w = rng.uniform(0.5, 1.5);
        adj(i, j) = w;
        adj(j, i) = w;
      }

  // base waves; using the wrapped phase keeps integer periods bit-exactly
  // periodic, which gives the zero-noise specs an exact seasonal repeat
  // With jitter on, every (series, wave) slot draws from its own disjoint
  // frequency band, so series share no spectral line and stay uncorrelated
  // unless the diffusion step couples them. With jitter off the configured
  // integer periods are used exactly (bit-exact seasonal repeats).
  std::vector<double> slot_freq;
  if (spec.period_jitter > 0) {
    const int slots = n * spec.waves;
    double p_lo = spec.periods.front(), p_hi = spec.periods.front();
    for (int p : spec.periods) {
      p_lo = std::min(p_lo, static_cast<double>(p));
      p_hi = std::max(p_hi, static_cast<double>(p));
    }
    p_lo *= 1.0 - spec.period_jitter;
    p_hi *= 1.0 + spec.period_jitter;
    const double f_lo = 1.0 / p_hi, f_hi = 1.0 / std::max(p_lo, 2.0);
    std::vector<int> order(static_cast<std::size_t>(slots));
    for (int s = 0; s < slots; ++s) order[static_cast<std::size_t>(s)] = s;
    rng.shuffle(order);
    const double width = (f_hi - f_lo) / slots;
    slot_freq.resize(static_cast<std::size_t>(slots));
    for (int s = 0; s < slots; ++s)
      slot_freq[static_cast<std::size_t>(s)] =
          f_lo + (order[static_cast<std::size_t>(s)] + 0.15 + 0.7 * rng.uniform_real()) * width;
  }

  Eigen::MatrixXd x(n, t_len);
  for (int i = 0; i < n; ++i) {
    x.row(i).setZero();
    for (int w = 0; w < spec.waves; ++w) {
      double period;
      if (spec.period_jitter > 0)
        period = 1.0 / slot_freq[static_cast<std::size_t>(i * spec.waves + w)];
      else
        period = static_cast<double>(
            spec.periods[static_cast<std::size_t>(i + w) % spec.periods.size()]);
      const double amp = rng.uniform(spec.amp_min, spec.amp_max);
      const double phase = rng.uniform(0.0, 1.0);
      for (int t = 0; t < t_len; ++t) {
        const double frac = std::fmod(static_cast<double>(t), period) / period;
        x(i, t) += amp * std::sin(2.0 * M_PI * (frac + phase));
      }
    }
    if (spec.trend_scale != 0.0) {
      const double drift = rng.uniform(-spec.trend_scale, spec.trend_scale);
      for (int t = 0; t < t_len; ++t) x(i, t) += drift * static_cast<double>(t) / t_len;
    }
  }

  // lagged graph diffusion mixes neighbour history into each series
  if (spec.coupling > 0.0) {
    Eigen::MatrixXd p = adj;
    for (int i = 0; i < n; ++i) {
      const double row_sum = p.row(i).sum();
      if (row_sum > 0)
        p.row(i) /= row_sum;
      else
        p(i, i) = 1.0;
    }
    for (int round = 0; round < spec.coupling_rounds; ++round) {
      Eigen::MatrixXd next(n, t_len);
      for (int t = 0; t < t_len; ++t) {
        const int tl = std::max(0, t - spec.coupling_lag);
        next.col(t) = (1.0 - spec.coupling) * x.col(t) + spec.coupling * (p * x.col(tl));
      }
      x = next;
    }
  }

  if (spec.noise_sigma > 0.0)
    for (int i = 0; i < n; ++i)
      for (int t = 0; t < t_len; ++t) x(i, t) += rng.normal(0.0, spec.noise_sigma);

  const int f = spec.time_feature ? 2 : 1;
  Tensor values({n, t_len, f});
  for (int i = 0; i < n; ++i)
    for (int t = 0; t < t_len; ++t) {
      values.at({i, t, 0}) = x(i, t);
      if (f == 2) {
        const double p0 = static_cast<double>(spec.periods.front());
        values.at({i, t, 1}) = std::fmod(static_cast<double>(t), p0) / p0;
      }
    }

  ForecastTask task;
  task.data = std::make_shared<CtsDataset>(std::move(values), std::move(adj), spec.name);
  task.input_len = spec.input_len;
  task.horizon = spec.horizon;
  task.tag = spec.tag;
  task.split = spec.split;
  task.id = spec.name;
  return task;
}

}  // namespace ctsnas::ctsdata
