#pragma once

#include "tenmtl/model.hpp"
#include "tenmtl/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace tenmtl {

enum class Scenario { I, II, III };

std::string scenario_name(Scenario s);
Scenario parse_scenario(const std::string& name);

struct ScenarioConfig {
  Scenario scenario = Scenario::I;
  std::size_t tasks = 15;
  std::size_t n_train = 30;
  std::size_t n_test = 30;
  Shape dims{20};                       // feature dimensions [I_1..I_m]; Scenario I/II use m = 1
  std::size_t clusters = 3;
  std::vector<std::size_t> ranks{3, 4};  // true [R_0, R_1..R_m]
  double beta_x = 0.0;
  double sigma_x = 0.1;
  double sigma_u = 0.1;
  double beta_u = 0.0;
  double sigma_e = 0.5;
  double sparsity = 0.4;
  // Scenario II only.
  double beta_group = 1.0;
  double sigma_group = 0.1;
  double sigma_nongroup = 0.1;
  std::size_t n_groups = 8;          // in-group features per column of U_1
  double task_subset_min = 0.2;      // in-group task fraction per column of U_0 is
  double task_subset_max = 0.5;      // drawn uniformly between these bounds
  std::uint64_t seed = 1;

  void validate() const;
  /// Settings of the published simulation study for each scenario.
  static ScenarioConfig defaults(Scenario s);
};

struct GeneratedDataset {
  std::vector<TaskDataset> train_tasks;
  std::vector<TaskDataset> test_tasks;
  DenseTensor true_B;  // [N, I_1..I_m]; slice i is task i's coefficient tensor
  DenseTensor true_core;
  std::vector<Eigen::MatrixXd> true_factors;  // U_0, U_1..U_m
  std::vector<std::size_t> cluster_assignments;

  /// Task i's true coefficient tensor.
  DenseTensor true_coefficients(std::size_t i) const;
};

/// Draw order: cluster labels, cluster means h_c, core entries then the zeroed
/// positions, task factor U_0 (cluster means p_c first), feature factors
/// U_1..U_m, then for each task its training samples followed by its test
/// samples, each sample drawing its predictor entries (row-major) then noise.
GeneratedDataset generate_scenario1(const ScenarioConfig& cfg);
GeneratedDataset generate_scenario2(const ScenarioConfig& cfg);
GeneratedDataset generate_scenario3(const ScenarioConfig& cfg);
GeneratedDataset generate(const ScenarioConfig& cfg);

}  // namespace tenmtl
