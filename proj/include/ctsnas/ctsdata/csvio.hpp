#ifndef CTSNAS_CTSDATA_CSVIO_HPP
#define CTSNAS_CTSDATA_CSVIO_HPP

#include "ctsnas/ctsdata/dataset.hpp"
#include "ctsnas/ctsdata/synthetic.hpp"

#include <filesystem>
#include <optional>

namespace ctsnas::ctsdata {

// Wide CSV: one column per series, one row per timestamp. A leading
// "timestamp" column is skipped if the header names it.
void write_values_csv(const std::filesystem::path& path, const CtsDataset& data);
void write_adjacency_csv(const std::filesystem::path& path, const CtsDataset& data);

Tensor read_values_csv(const std::filesystem::path& path);          // [N, T, 1]
Eigen::MatrixXd read_adjacency_csv(const std::filesystem::path& path, int n_series);

// Task descriptor: structured text referencing the data files. When the
// descriptor embeds a generator, the data files are optional and the task is
// regenerated deterministically.
void save_task_descriptor(const std::filesystem::path& json_path, const ForecastTask& task,
                          const std::string& values_csv, const std::string& adjacency_csv,
                          const std::optional<SyntheticSpec>& generator = std::nullopt,
                          std::uint64_t generator_seed = 0);
ForecastTask load_task(const std::filesystem::path& json_path);

}  // namespace ctsnas::ctsdata

#endif
