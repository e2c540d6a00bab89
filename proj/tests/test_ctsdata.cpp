#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ctsnas/common/rng.hpp"
#include "ctsnas/ctsdata/csvio.hpp"
#include "ctsnas/ctsdata/features.hpp"
#include "ctsnas/ctsdata/metrics.hpp"
#include "ctsnas/ctsdata/synthetic.hpp"

#include <cmath>
#include <filesystem>

using namespace ctsnas;
using namespace ctsnas::ctsdata;

namespace {

ForecastTask toy_task(int n = 3, int t_len = 100, int p = 6, int q = 3, Tag tag = Tag::multi) {
  SyntheticSpec spec;
  spec.n_series = n;
  spec.t_len = t_len;
  spec.input_len = p;
  spec.horizon = q;
  spec.tag = tag;
  spec.noise_sigma = 0.05;
  return generate_synthetic_task(spec, 99);
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double c = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    c += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  return c / std::sqrt(va * vb);
}

}  // namespace

TEST_CASE("split boundaries for 0.6/0.2/0.2 on T=100") {
  ForecastTask task = toy_task();
  auto s = split_dataset(task);
  CHECK(s.train.begin == 0);
  CHECK(s.train.end == 60);
  CHECK(s.val.begin == 60);
  CHECK(s.val.end == 80);
  CHECK(s.test.begin == 80);
  CHECK(s.test.end == 100);
}

TEST_CASE("degenerate split fractions are rejected") {
  ForecastTask task = toy_task();
  task.split = {1.0, 0.0, 0.0};
  CHECK_THROWS(split_dataset(task));
}

TEST_CASE("window count matches brute-force enumeration") {
  ForecastTask task = toy_task(2, 100, 7, 4);
  auto s = split_dataset(task);
  for (const SplitView& v : {s.train, s.val, s.test}) {
    auto starts = window_starts(v, task.input_len, task.horizon);
    // brute force: count t where the whole window fits in [begin, end)
    int count = 0;
    for (int t = v.begin; t < v.end; ++t)
      if (t + task.input_len + task.horizon <= v.end) ++count;
    CHECK(static_cast<int>(starts.size()) == count);
    CHECK(count == v.len() - task.input_len - task.horizon + 1);
  }
}

TEST_CASE("splits never leak training timestamps into val/test targets") {
  ForecastTask task = toy_task(2, 120, 8, 4);
  auto s = split_dataset(task);
  auto train = window_starts(s.train, task.input_len, task.horizon);
  auto val = window_starts(s.val, task.input_len, task.horizon);
  const int train_max_target = train.back() + task.input_len + task.horizon - 1;
  const int val_min_target = val.front() + task.input_len;
  CHECK(train_max_target < s.val.begin + task.input_len);
  CHECK(val_min_target >= s.val.begin + task.input_len);
}

TEST_CASE("metrics: simple hand cases") {
  Tensor pred({2}, {1, 2});
  Tensor target({2}, {1, 4});
  auto m = compute_metrics(pred, target, Tag::multi);
  CHECK(m.mae == doctest::Approx(1.0));
  CHECK(m.rmse == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("metrics: perfect single-step prediction") {
  Tensor pred({4, 2}, {1, 5, 2, 6, 3, 7, 4, 8});
  auto m = compute_metrics(pred, pred, Tag::single);
  CHECK(m.rrse == doctest::Approx(0.0));
  CHECK(m.corr == doctest::Approx(1.0));
}

TEST_CASE("metrics: 2x3 case equals direct formula evaluation") {
  Tensor pred({2, 3}, {1.0, 2.0, 3.5, -1.0, 0.5, 2.0});
  Tensor target({2, 3}, {1.5, 1.0, 3.0, -2.0, 1.0, 2.5});
  auto m = compute_metrics(pred, target, Tag::multi);
  // independent evaluation of the definitions
  double abs_sum = 0, sq = 0, ape = 0;
  const double e[6] = {-0.5, 1.0, 0.5, 1.0, -0.5, -0.5};
  const double t[6] = {1.5, 1.0, 3.0, -2.0, 1.0, 2.5};
  for (int i = 0; i < 6; ++i) {
    abs_sum += std::abs(e[i]);
    sq += e[i] * e[i];
    ape += std::abs(e[i] / t[i]);
  }
  CHECK(m.mae == doctest::Approx(abs_sum / 6).epsilon(1e-12));
  CHECK(m.rmse == doctest::Approx(std::sqrt(sq / 6)).epsilon(1e-12));
  CHECK(m.mape == doctest::Approx(ape / 6).epsilon(1e-12));
}

TEST_CASE("metrics: MAE <= RMSE always, RRSE of mean predictor is 1") {
  Rng rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    Tensor pred({5, 3});
    Tensor target({5, 3});
    for (long i = 0; i < 15; ++i) {
      pred[i] = rng.normal();
      target[i] = rng.normal();
    }
    auto m = compute_metrics(pred, target, Tag::multi);
    CHECK(m.mae <= m.rmse + 1e-12);
  }
  Tensor target({6, 1});
  for (long i = 0; i < 6; ++i) target[i] = static_cast<double>(i) + 0.5;
  double mean = 0;
  for (long i = 0; i < 6; ++i) mean += target[i];
  mean /= 6;
  Tensor pred({6, 1}, mean);
  auto m = compute_metrics(pred, target, Tag::single);
  CHECK(m.rrse == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("metrics: shape mismatch raises") {
  CHECK_THROWS(compute_metrics(Tensor({2, 2}), Tensor({2, 3}), Tag::multi));
}

TEST_CASE("stat features: constant series conventions") {
  auto f = series_stat_features(std::vector<double>(50, 3.25).data(), 50);
  REQUIRE(static_cast<int>(f.size()) == kStatFeaturesPerSeries);
  CHECK(f[0] == doctest::Approx(3.25));  // mean
  CHECK(f[1] == doctest::Approx(0.0));   // variance
  CHECK(f[5] == 0.0);                    // skewness by convention
  CHECK(f[6] == 0.0);                    // kurtosis by convention
  CHECK(f[13] == doctest::Approx(0.0));  // slope
}

TEST_CASE("stat features: dominant period of a pure sine (FFT oracle)") {
  const int t_len = 240;
  std::vector<double> x(t_len);
  for (int t = 0; t < t_len; ++t) x[static_cast<std::size_t>(t)] = std::sin(2 * M_PI * t / 24.0);
  auto f = series_stat_features(x.data(), t_len);
  CHECK(std::abs(f[14] - 24.0) <= 1.0);
}

TEST_CASE("stat feature vector has 32 entries under the default config") {
  ForecastTask task = toy_task();
  Tensor v = extract_stat_features(*task.data);
  CHECK(v.numel() == 32);
}

TEST_CASE("semantic windows: reproducible, z-scored") {
  ForecastTask task = toy_task(4, 120, 10, 2);
  auto a = sample_semantic_windows(*task.data, 3, 4, 10, 77);
  auto b = sample_semantic_windows(*task.data, 3, 4, 10, 77);
  CHECK(a.series == b.series);
  for (long i = 0; i < a.windows.numel(); ++i) CHECK(a.windows[i] == b.windows[i]);
  // every window has mean ~0 and unit std
  for (int s = 0; s < 3; ++s)
    for (int w = 0; w < 4; ++w) {
      double mean = 0, var = 0;
      for (int t = 0; t < 10; ++t) mean += a.windows.at({s, w, t});
      mean /= 10;
      for (int t = 0; t < 10; ++t) {
        const double d = a.windows.at({s, w, t}) - mean;
        var += d * d;
      }
      CHECK(std::abs(mean) < 1e-9);
      CHECK(std::sqrt(var / 10) == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("semantic windows: full-length window is the whole normalized series") {
  ForecastTask task = toy_task(2, 60, 5, 2);
  auto w = sample_semantic_windows(*task.data, 1, 1, 60, 7);
  CHECK(w.windows.shape() == numgrad::Shape{1, 1, 60});
  CHECK_THROWS(sample_semantic_windows(*task.data, 1, 1, 61, 7));
}

TEST_CASE("synthetic: same seed gives identical tensors") {
  SyntheticSpec spec;
  spec.noise_sigma = 0.1;
  spec.coupling = 0.4;
  auto a = generate_synthetic_task(spec, 123);
  auto b = generate_synthetic_task(spec, 123);
  REQUIRE(a.data->values().numel() == b.data->values().numel());
  for (long i = 0; i < a.data->values().numel(); ++i)
    CHECK(a.data->values()[i] == b.data->values()[i]);
  auto c = generate_synthetic_task(spec, nextafter(123, 124) == 123 ? 124 : 124);
  bool any_diff = false;
  for (long i = 0; i < a.data->values().numel(); ++i)
    if (a.data->values()[i] != c.data->values()[i]) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("synthetic: zero coupling gives near-zero cross correlation") {
  SyntheticSpec spec;
  spec.n_series = 6;
  spec.t_len = 1200;
  spec.coupling = 0.0;
  spec.noise_sigma = 0.3;
  spec.period_jitter = 0.35;
  spec.periods = {11, 17, 23, 31};
  auto task = generate_synthetic_task(spec, 2024);
  const auto& d = *task.data;
  double worst = 0;
  for (int i = 0; i < d.n_series(); ++i)
    for (int j = i + 1; j < d.n_series(); ++j) {
      std::vector<double> a(static_cast<std::size_t>(d.t_len())), b(a);
      for (int t = 0; t < d.t_len(); ++t) {
        a[static_cast<std::size_t>(t)] = d.at(i, t, 0);
        b[static_cast<std::size_t>(t)] = d.at(j, t, 0);
      }
      worst = std::max(worst, std::abs(pearson(a, b)));
    }
  CHECK(worst < 0.1);
}

TEST_CASE("synthetic: strong coupling raises cross correlation") {
  SyntheticSpec spec;
  spec.n_series = 6;
  spec.t_len = 600;
  spec.adjacency_density = 1.0;
  spec.coupling = 0.7;
  spec.coupling_rounds = 3;
  spec.noise_sigma = 0.05;
  auto task = generate_synthetic_task(spec, 2024);
  const auto& d = *task.data;
  double best = 0;
  for (int i = 0; i < d.n_series(); ++i)
    for (int j = i + 1; j < d.n_series(); ++j) {
      std::vector<double> a(static_cast<std::size_t>(d.t_len())), b(a);
      for (int t = 0; t < d.t_len(); ++t) {
        a[static_cast<std::size_t>(t)] = d.at(i, t, 0);
        b[static_cast<std::size_t>(t)] = d.at(j, t, 0);
      }
      best = std::max(best, std::abs(pearson(a, b)));
    }
  CHECK(best > 0.5);
}

TEST_CASE("synthetic: pure sine with zero noise is perfectly forecastable") {
  SyntheticSpec spec;
  spec.n_series = 2;
  spec.t_len = 120;
  spec.waves = 1;
  spec.periods = {12};
  spec.period_jitter = 0.0;
  spec.noise_sigma = 0.0;
  spec.trend_scale = 0.0;
  spec.coupling = 0.0;
  spec.input_len = 12;
  spec.horizon = 6;
  auto task = generate_synthetic_task(spec, 5);
  auto s = split_dataset(task);
  auto starts = window_starts(s.test, task.input_len, task.horizon);
  Batch batch = make_batch(task, starts, 0, starts.size());
  // seasonal-naive oracle: value repeats every 12 steps
  Tensor pred(batch.target.shape());
  const int b = batch.input.dim(0), n = batch.input.dim(1);
  for (int i = 0; i < b; ++i)
    for (int sid = 0; sid < n; ++sid)
      for (int h = 0; h < task.horizon; ++h)
        pred.at({i, sid, h}) = batch.input.at({i, sid, task.input_len - 12 + h, 0});
  auto m = compute_metrics(pred, batch.target, Tag::multi);
  CHECK(m.mae == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("synthetic: too-short series is an error") {
  SyntheticSpec spec;
  spec.t_len = 30;
  spec.input_len = 12;
  spec.horizon = 6;
  CHECK_THROWS(generate_synthetic_task(spec, 1));
}

TEST_CASE("csv round trip and task descriptor") {
  auto dir = std::filesystem::temp_directory_path() / "ctsnas_csv_test";
  std::filesystem::create_directories(dir);
  SyntheticSpec spec;
  spec.n_series = 3;
  spec.t_len = 80;
  spec.input_len = 8;
  spec.horizon = 4;
  spec.noise_sigma = 0.07;
  auto task = generate_synthetic_task(spec, 31);
  write_values_csv(dir / "values.csv", *task.data);
  write_adjacency_csv(dir / "adj.csv", *task.data);
  save_task_descriptor(dir / "task.json", task, "values.csv", "adj.csv");

  auto loaded = load_task(dir / "task.json");
  CHECK(loaded.input_len == task.input_len);
  CHECK(loaded.horizon == task.horizon);
  CHECK(loaded.data->n_series() == 3);
  CHECK(loaded.data->t_len() == 80);
  for (int s = 0; s < 3; ++s)
    for (int t = 0; t < 80; ++t)
      CHECK(loaded.data->at(s, t, 0) == task.data->at(s, t, 0));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(loaded.data->adjacency()(i, j) == task.data->adjacency()(i, j));

  // descriptor with embedded generator regenerates the same data
  save_task_descriptor(dir / "gen.json", task, "", "", spec, 31);
  auto regen = load_task(dir / "gen.json");
  for (int s = 0; s < 3; ++s)
    for (int t = 0; t < 80; ++t)
      CHECK(regen.data->at(s, t, 0) == task.data->at(s, t, 0));
  std::filesystem::remove_all(dir);
}
