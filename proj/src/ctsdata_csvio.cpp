#include "ctsnas/ctsdata/csvio.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace ctsnas::ctsdata {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

void write_values_csv(const std::filesystem::path& path, const CtsDataset& data) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  for (int s = 0; s < data.n_series(); ++s) {
    if (s) f << ',';
    f << 's' << s;
  }
  f << '\n';
  for (int t = 0; t < data.t_len(); ++t) {
    for (int s = 0; s < data.n_series(); ++s) {
      if (s) f << ',';
      f << fmt_double(data.at(s, t, 0));
    }
    f << '\n';
  }
}

void write_adjacency_csv(const std::filesystem::path& path, const CtsDataset& data) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  const auto& a = data.adjacency();
  for (int i = 0; i < a.rows(); ++i) {
    for (int j = 0; j < a.cols(); ++j) {
      if (j) f << ',';
      f << fmt_double(a(i, j));
    }
    f << '\n';
  }
}

Tensor read_values_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error("empty CSV " + path.string());
  auto header = split_csv_line(line);
  std::size_t first_col = 0;
  if (!header.empty() && (header[0] == "timestamp" || header[0] == "time" || header[0] == "date"))
    first_col = 1;
  const std::size_t n = header.size() - first_col;
  if (n == 0) throw std::runtime_error("no series columns in " + path.string());

  std::vector<std::vector<double>> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw std::runtime_error("ragged CSV row in " + path.string());
    std::vector<double> row(n);
    for (std::size_t i = 0; i < n; ++i) {
      try {
        row[i] = std::stod(cells[first_col + i]);
      } catch (const std::exception&) {
        throw std::runtime_error("bad number '" + cells[first_col + i] + "' in " + path.string());
      }
      if (!std::isfinite(row[i]))
        throw std::runtime_error("non-finite value in " + path.string());
    }
    rows.push_back(std::move(row));
  }
  const int t_len = static_cast<int>(rows.size());
  if (t_len == 0) throw std::runtime_error("no data rows in " + path.string());
  Tensor values({static_cast<int>(n), t_len, 1});
  for (int t = 0; t < t_len; ++t)
    for (std::size_t s = 0; s < n; ++s)
      values.at({static_cast<int>(s), t, 0}) = rows[static_cast<std::size_t>(t)][s];
  return values;
}

Eigen::MatrixXd read_adjacency_csv(const std::filesystem::path& path, int n_series) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n_series, n_series);
  std::string line;
  int r = 0;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    if (r >= n_series) throw std::runtime_error("too many adjacency rows in " + path.string());
    auto cells = split_csv_line(line);
    if (static_cast<int>(cells.size()) != n_series)
      throw std::runtime_error("adjacency row width mismatch in " + path.string());
    for (int c = 0; c < n_series; ++c) a(r, c) = std::stod(cells[static_cast<std::size_t>(c)]);
    ++r;
  }
  if (r != n_series) throw std::runtime_error("adjacency row count mismatch in " + path.string());
  return a;
}

namespace {

nlohmann::json spec_to_json(const SyntheticSpec& s) {
  nlohmann::json j;
  j["name"] = s.name;
  j["n_series"] = s.n_series;
  j["t_len"] = s.t_len;
  j["input_len"] = s.input_len;
  j["horizon"] = s.horizon;
  j["tag"] = tag_name(s.tag);
  j["periods"] = s.periods;
  j["period_jitter"] = s.period_jitter;
  j["waves"] = s.waves;
  j["amp_min"] = s.amp_min;
  j["amp_max"] = s.amp_max;
  j["trend_scale"] = s.trend_scale;
  j["coupling"] = s.coupling;
  j["coupling_rounds"] = s.coupling_rounds;
  j["coupling_lag"] = s.coupling_lag;
  j["noise_sigma"] = s.noise_sigma;
  j["adjacency_density"] = s.adjacency_density;
  j["time_feature"] = s.time_feature;
  j["split"] = s.split;
  return j;
}

SyntheticSpec spec_from_json(const nlohmann::json& j) {
  SyntheticSpec s;
  s.name = j.value("name", s.name);
  s.n_series = j.value("n_series", s.n_series);
  s.t_len = j.value("t_len", s.t_len);
  s.input_len = j.value("input_len", s.input_len);
  s.horizon = j.value("horizon", s.horizon);
  s.tag = tag_from_name(j.value("tag", std::string("multi")));
  s.periods = j.value("periods", s.periods);
  s.period_jitter = j.value("period_jitter", s.period_jitter);
  s.waves = j.value("waves", s.waves);
  s.amp_min = j.value("amp_min", s.amp_min);
  s.amp_max = j.value("amp_max", s.amp_max);
  s.trend_scale = j.value("trend_scale", s.trend_scale);
  s.coupling = j.value("coupling", s.coupling);
  s.coupling_rounds = j.value("coupling_rounds", s.coupling_rounds);
  s.coupling_lag = j.value("coupling_lag", s.coupling_lag);
  s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
  s.adjacency_density = j.value("adjacency_density", s.adjacency_density);
  s.time_feature = j.value("time_feature", s.time_feature);
  s.split = j.value("split", s.split);
  return s;
}

}  // namespace

void save_task_descriptor(const std::filesystem::path& json_path, const ForecastTask& task,
                          const std::string& values_csv, const std::string& adjacency_csv,
                          const std::optional<SyntheticSpec>& generator,
                          std::uint64_t generator_seed) {
  nlohmann::json j;
  j["id"] = task.id;
  j["name"] = task.data->name();
  j["values_csv"] = values_csv;
  j["adjacency_csv"] = adjacency_csv;
  j["P"] = task.input_len;
  j["Q"] = task.horizon;
  j["tag"] = tag_name(task.tag);
  j["split"] = task.split;
  if (generator) {
    j["generator"] = spec_to_json(*generator);
    j["generator_seed"] = generator_seed;
  }
  std::ofstream f(json_path);
  if (!f) throw std::runtime_error("cannot write " + json_path.string());
  f << j.dump(2) << '\n';
}

ForecastTask load_task(const std::filesystem::path& json_path) {
  std::ifstream f(json_path);
  if (!f) throw std::runtime_error("cannot read " + json_path.string());
  nlohmann::json j = nlohmann::json::parse(f);

  if (j.contains("generator")) {
    SyntheticSpec spec = spec_from_json(j.at("generator"));
    ForecastTask task = generate_synthetic_task(spec, j.value("generator_seed", 0ULL));
    task.id = j.value("id", spec.name);
    return task;
  }

  const auto dir = json_path.parent_path();
  Tensor values = read_values_csv(dir / j.at("values_csv").get<std::string>());
  const int n = values.dim(0);
  Eigen::MatrixXd adj = Eigen::MatrixXd::Zero(n, n);
  if (j.contains("adjacency_csv") && !j.at("adjacency_csv").get<std::string>().empty())
    adj = read_adjacency_csv(dir / j.at("adjacency_csv").get<std::string>(), n);

  ForecastTask task;
  task.data = std::make_shared<CtsDataset>(std::move(values), std::move(adj),
                                           j.value("name", std::string("dataset")));
  task.input_len = j.at("P").get<int>();
  task.horizon = j.at("Q").get<int>();
  task.tag = tag_from_name(j.at("tag").get<std::string>());
  task.split = j.value("split", std::array<double, 3>{0.6, 0.2, 0.2});
  task.id = j.value("id", task.data->name());
  return task;
}

}  // namespace ctsnas::ctsdata
