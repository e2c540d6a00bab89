#ifndef CTSNAS_CTSDATA_FEATURES_HPP
#define CTSNAS_CTSDATA_FEATURES_HPP

#include "ctsnas/ctsdata/dataset.hpp"

#include <cstdint>

namespace ctsnas::ctsdata {

// Per-series descriptors of the target channel, in order:
//   mean, variance, min, max, median, skewness, kurtosis (excess),
//   autocorr lag 1..3, absolute energy, mean absolute change,
//   fraction above mean, linear trend slope, dominant period, spectral flatness
// Skewness/kurtosis/autocorrelation are 0 for (near-)constant series, and the
// dominant period and flatness are 0 when the spectrum is empty.
inline constexpr int kStatFeaturesPerSeries = 16;

std::vector<double> series_stat_features(const double* x, int t_len);

// Aggregates per-series features across series by mean then standard
// deviation: [mean_0..mean_15, std_0..std_15].
Tensor extract_stat_features(const CtsDataset& data);

struct SemanticWindows {
  Tensor windows;            // [n_series, n_windows, P], z-scored per window
  std::vector<int> series;   // source series indices
};

SemanticWindows sample_semantic_windows(const CtsDataset& data, int n_series, int n_windows,
                                        int window_len, std::uint64_t seed);

struct TaskFeatureVector {
  Tensor statistical;        // [2 * kStatFeaturesPerSeries]
  SemanticWindows semantic;
};

TaskFeatureVector task_features(const ForecastTask& task, int n_series, int n_windows,
                                std::uint64_t seed);

}  // namespace ctsnas::ctsdata

#endif
