#include "ctsnas/ctsdata/features.hpp"

#include "ctsnas/common/rng.hpp"

#include <algorithm>
#include <cmath>

namespace ctsnas::ctsdata {

namespace {
constexpr double kVarEps = 1e-12;
}

std::vector<double> series_stat_features(const double* x, int t_len) {
  const double n = static_cast<double>(t_len);
  double mean = 0;
  for (int t = 0; t < t_len; ++t) mean += x[t];
  mean /= n;
  double var = 0, m3 = 0, m4 = 0;
  for (int t = 0; t < t_len; ++t) {
    const double d = x[t] - mean;
    var += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  var /= n;
  m3 /= n;
  m4 /= n;
  const bool flat = var < kVarEps;
  const double sd = std::sqrt(var);

  std::vector<double> sorted(x, x + t_len);
  std::sort(sorted.begin(), sorted.end());
  const double median = t_len % 2 ? sorted[static_cast<std::size_t>(t_len / 2)]
                                  : 0.5 * (sorted[static_cast<std::size_t>(t_len / 2 - 1)] +
                                           sorted[static_cast<std::size_t>(t_len / 2)]);

  auto autocorr = [&](int lag) {
    if (flat || lag >= t_len) return 0.0;
    double acc = 0;
    for (int t = 0; t + lag < t_len; ++t) acc += (x[t] - mean) * (x[t + lag] - mean);
    return acc / (var * n);
  };

  double abs_energy = 0;
  for (int t = 0; t < t_len; ++t) abs_energy += x[t] * x[t];

  double mac = 0;
  for (int t = 0; t + 1 < t_len; ++t) mac += std::abs(x[t + 1] - x[t]);
  mac = t_len > 1 ? mac / (n - 1) : 0.0;

  double above = 0;
  for (int t = 0; t < t_len; ++t)
    if (x[t] > mean) above += 1;
  above /= n;

  // OLS slope against t
  double slope = 0;
  {
    const double tm = (n - 1) / 2.0;
    double sxy = 0, sxx = 0;
    for (int t = 0; t < t_len; ++t) {
      sxy += (t - tm) * (x[t] - mean);
      sxx += (t - tm) * (t - tm);
    }
    slope = sxx > 0 ? sxy / sxx : 0.0;
  }

  // direct DFT power spectrum over k = 1 .. T/2
  double dom_period = 0, flatness = 0;
  const int kmax = t_len / 2;
  if (!flat && kmax >= 1) {
    double best = -1;
    int best_k = 1;
    double log_sum = 0, lin_sum = 0;
    for (int k = 1; k <= kmax; ++k) {
      double re = 0, im = 0;
      const double w = 2.0 * M_PI * k / n;
      for (int t = 0; t < t_len; ++t) {
        re += (x[t] - mean) * std::cos(w * t);
        im -= (x[t] - mean) * std::sin(w * t);
      }
      const double p = re * re + im * im;
      if (p > best) {
        best = p;
        best_k = k;
      }
      log_sum += std::log(p + kVarEps);
      lin_sum += p;
    }
    dom_period = n / best_k;
    const double gm = std::exp(log_sum / kmax);
    const double am = lin_sum / kmax;
    flatness = am > 0 ? gm / am : 0.0;
  }

  return {mean,
          var,
          sorted.front(),
          sorted.back(),
          median,
          flat ? 0.0 : m3 / (sd * sd * sd),
          flat ? 0.0 : m4 / (var * var) - 3.0,
          autocorr(1),
          autocorr(2),
          autocorr(3),
          abs_energy,
          mac,
          above,
          slope,
          dom_period,
          flatness};
}

Tensor extract_stat_features(const CtsDataset& data) {
  const int n = data.n_series(), t_len = data.t_len();
  if (n == 0 || t_len == 0) throw std::invalid_argument("stat features: empty dataset");
  std::vector<std::vector<double>> rows;
  rows.reserve(static_cast<std::size_t>(n));
  std::vector<double> series(static_cast<std::size_t>(t_len));
  for (int s = 0; s < n; ++s) {
    for (int t = 0; t < t_len; ++t) series[static_cast<std::size_t>(t)] = data.at(s, t, 0);
    rows.push_back(series_stat_features(series.data(), t_len));
  }
  Tensor out({2 * kStatFeaturesPerSeries});
  for (int fidx = 0; fidx < kStatFeaturesPerSeries; ++fidx) {
    double mean = 0;
    for (int s = 0; s < n; ++s) mean += rows[static_cast<std::size_t>(s)][static_cast<std::size_t>(fidx)];
    mean /= n;
    double var = 0;
    for (int s = 0; s < n; ++s) {
      const double d = rows[static_cast<std::size_t>(s)][static_cast<std::size_t>(fidx)] - mean;
      var += d * d;
    }
    out[fidx] = mean;
    out[kStatFeaturesPerSeries + fidx] = std::sqrt(var / n);
  }
  return out;
}

SemanticWindows sample_semantic_windows(const CtsDataset& data, int n_series, int n_windows,
                                        int window_len, std::uint64_t seed) {
  if (window_len > data.t_len())
    throw std::invalid_argument("semantic windows: window length " + std::to_string(window_len) +
                                " exceeds series length " + std::to_string(data.t_len()));
  if (n_series < 1 || n_windows < 1)
    throw std::invalid_argument("semantic windows: need at least one series and one window");
  Rng rng(seed);
  SemanticWindows out;
  const int take = std::min(n_series, data.n_series());
  out.series = rng.sample_without_replacement(data.n_series(), take);
  out.windows = Tensor({take, n_windows, window_len});
  const int max_start = data.t_len() - window_len;
  for (int s = 0; s < take; ++s) {
    for (int w = 0; w < n_windows; ++w) {
      const int t0 = max_start == 0 ? 0 : static_cast<int>(rng.uniform_u64(static_cast<std::uint64_t>(max_start + 1)));
      double mean = 0;
      for (int t = 0; t < window_len; ++t)
        mean += data.at(out.series[static_cast<std::size_t>(s)], t0 + t, 0);
      mean /= window_len;
      double var = 0;
      for (int t = 0; t < window_len; ++t) {
        const double d = data.at(out.series[static_cast<std::size_t>(s)], t0 + t, 0) - mean;
        var += d * d;
      }
      const double sd = std::sqrt(var / window_len);
      const double inv = 1.0 / std::max(sd, 1e-12);
      for (int t = 0; t < window_len; ++t)
        out.windows.at({s, w, t}) =
            (data.at(out.series[static_cast<std::size_t>(s)], t0 + t, 0) - mean) * inv;
    }
  }
  return out;
}

TaskFeatureVector task_features(const ForecastTask& task, int n_series, int n_windows,
                                std::uint64_t seed) {
  TaskFeatureVector out;
  out.statistical = extract_stat_features(*task.data);
  out.semantic = sample_semantic_windows(*task.data, n_series, n_windows, task.input_len, seed);
  return out;
}

}  // namespace ctsnas::ctsdata
