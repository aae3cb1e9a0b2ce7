#pragma once

#include "tenmtl/model.hpp"
#include "tenmtl/simgen.hpp"
#include "tenmtl/tuning.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tenmtl::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

/// Malformed or out-of-schema configuration (CLI exit code 2).
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Filesystem read/write failure or unreadable file contents (CLI exit code 3).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Shortest decimal text that round-trips the double exactly.
std::string format_double(double v);

// ---------------------------------------------------------------------------
// Tensor files: <stem>.bin (little-endian float64, row-major) and
// <stem>.shape.json {"shape": [...], "dtype": "f64", "order": "row-major"}.

void write_tensor(const fs::path& stem, const DenseTensor& t);
DenseTensor read_tensor(const fs::path& stem);
fs::path bin_path(const fs::path& stem);
fs::path shape_path(const fs::path& stem);

// ---------------------------------------------------------------------------
// Dataset tree
//   <root>/manifest.json
//   <root>/task_<id>/y.csv      header "y,split", split in {train, test}
//   <root>/task_<id>/z.csv      header z1..zp (absent when p = 0)
//   <root>/task_<id>/x.bin      per-sample tensors stacked on a leading axis
//   <root>/task_<id>/x.shape.json

struct Dataset {
  std::vector<TaskDataset> train;
  std::vector<TaskDataset> test;  // same task order; a task may have no test rows
  Family family;
  json metadata = json::object();  // free-form provenance (e.g. generator settings)
};

/// Writes into a temporary sibling directory and renames it into place, so a
/// failure never leaves a partial tree at `root`. An existing tree is replaced.
void write_dataset(const fs::path& root, const Dataset& data);
Dataset read_dataset(const fs::path& root);

// ---------------------------------------------------------------------------
// JSON conversion with unknown-key rejection (throws ConfigError).

json to_json(const ScenarioConfig& c);
ScenarioConfig scenario_from_json(const json& j);
json to_json(const HyperParams& h);
HyperParams hyper_from_json(const json& j, HyperParams base = {});
json to_json(const GridTuple& t);
GridTuple tuple_from_json(const json& j);
json to_json(const Grid& g);
Grid grid_from_json(const json& j, Grid base = {});
json to_json(const FitTrace& t);
json to_json(const CvReport& r);

struct ExperimentFile {
  ExperimentConfig experiment;
  std::string csv_path;   // optional output locations named in the config
  std::string json_path;
};
ExperimentFile experiment_from_json(const json& j);
json to_json(const ExperimentConfig& c);

json read_json(const fs::path& path);
/// Atomic text write (temporary file + rename).
void write_text(const fs::path& path, const std::string& text);

// ---------------------------------------------------------------------------
// Model files: <dir>/model.json plus tensor blobs for every non-empty block.

struct SavedModel {
  std::string method;
  Family family;
  std::optional<TuckerState> state;         // tenmtl
  std::optional<HyperParams> hyper;         // tenmtl
  std::vector<PersonalizedModel> models;    // always present: per-task coefficients
};

void write_model(const fs::path& dir, const SavedModel& model);
SavedModel read_model(const fs::path& dir);

// ---------------------------------------------------------------------------
// Experiment outputs

/// One row per method x setting: scenario,beta_u,sigma_e,s,method,mean_rmse,std_rmse,reps
std::string results_csv(const ExperimentResult& r);
/// Pivot to (sigma_e, s) rows x method columns holding "mean (std)".
std::string results_table(const ExperimentResult& r, const ExperimentConfig& cfg);
json results_json(const ExperimentResult& r, const ExperimentConfig& cfg);
ExperimentResult results_from_json(const json& j);

}  // namespace tenmtl::io
