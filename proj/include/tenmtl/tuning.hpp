#pragma once

#include "tenmtl/model.hpp"
#include "tenmtl/simgen.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace tenmtl {

/// sqrt(mean squared error).
double rmse(const Eigen::VectorXd& predictions, const Eigen::VectorXd& truth);

/// Fraction of labels matched by (p >= threshold).
double classification_accuracy(const Eigen::VectorXd& probabilities, const Eigen::VectorXd& labels,
                               double threshold = 0.5);

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double sample_std(const std::vector<double>& values);
double mean(const std::vector<double>& values);

struct GridTuple {
  std::vector<std::size_t> tensor_ranks;  // [R_0, R_f, ..., R_f]; empty without tensor predictors
  std::array<std::size_t, 2> scalar_ranks{0, 0};
  double lambda = 0.0;
  std::optional<std::size_t> shared_columns;

  std::size_t total_rank() const;
  HyperParams apply(HyperParams base) const;
  std::string describe() const;
};

struct Grid {
  std::vector<std::size_t> r0{2, 3, 4, 5};
  std::vector<std::size_t> r_feature{2, 3, 4, 5};
  std::vector<std::size_t> t0{2, 3, 4, 5};
  std::vector<std::size_t> t1{2, 3, 4, 5};
  std::vector<double> lambdas{1e-4, 5e-4, 1e-3, 5e-3, 0.01, 0.05, 0.1};
  std::vector<std::optional<std::size_t>> shared{std::nullopt};
  std::size_t folds = 5;
  std::uint64_t seed = 0;

  void validate() const;
  /// Cartesian product in the order R_0, R_f, T_0, T_1, Q0, lambda (lambda
  /// fastest). Rank axes that do not apply to the layout collapse, and
  /// tuples whose ranks exceed the data dimensions are dropped.
  std::vector<GridTuple> expand(const TaskLayout& layout) const;
};

struct CvReport {
  std::vector<GridTuple> tuples;
  std::vector<double> scores;       // mean held-out RMSE (error rate for Bernoulli); +inf on failure
  std::vector<std::string> errors;  // empty when the tuple fitted on every fold
  std::size_t selected = 0;
  std::vector<std::vector<std::size_t>> folds;  // fold of each sample, per task
  std::string metric;

  const GridTuple& best() const { return tuples.at(selected); }
};

/// Per-task fold labels: each task's samples are shuffled with a seed derived
/// from (seed, task index) and dealt round-robin, so every task contributes
/// to every fold.
std::vector<std::vector<std::size_t>> assign_folds(const std::vector<TaskDataset>& tasks,
                                                   std::size_t k, std::uint64_t seed);

/// Minimum score; ties go to the smallest total rank, then the smallest
/// lambda, then the earliest tuple.
std::size_t select_best(const std::vector<GridTuple>& tuples, const std::vector<double>& scores);

/// Joint k-fold cross-validation of TenMTL over the grid. Non-grid settings
/// (family, tolerances, iteration caps) come from `base`.
CvReport kfold_cv(const std::vector<TaskDataset>& tasks, const Grid& grid, const HyperParams& base,
                  std::size_t threads = 1);

// ---------------------------------------------------------------------------
// Replicated simulation experiments

enum class Method { TenMTL, TenMTLVector, Local, Global, LrTucker };

std::string method_name(Method m);
Method parse_method(const std::string& name);

/// Mean predictions of one model over every sample of a task.
Eigen::VectorXd predict_task(const PersonalizedModel& model, const TaskDataset& task, Family family);

/// Per-task evaluation of fitted models: RMSE between mean predictions and
/// responses.
std::vector<double> task_rmse(const std::vector<PersonalizedModel>& models,
                              const std::vector<TaskDataset>& tasks, Family family);

struct MethodFit {
  std::vector<PersonalizedModel> models;  // one per training task
  std::optional<FitResult> tenmtl;        // Method::TenMTL only
  std::optional<VectorFitResult> vector;  // Method::TenMTLVector only
};

/// Fits one method on the training tasks. Ranks and lambda come from `tuple`
/// (ignored by local and global); everything else from `base`.
MethodFit fit_method(Method method, const std::vector<TaskDataset>& train, const GridTuple& tuple,
                     const HyperParams& base, double ridge);

struct ExperimentSetting {
  double beta_u = 0.0;
  double sigma_e = 0.5;
  double sparsity = 0.4;
};

enum class Tuning { CrossValidation, Fixed };

struct ExperimentConfig {
  ScenarioConfig scenario;
  std::vector<ExperimentSetting> settings;  // empty: the scenario's own values
  std::vector<Method> methods{Method::TenMTL, Method::LrTucker, Method::Local, Method::Global};
  std::size_t replications = 30;
  std::vector<std::uint64_t> seeds;  // explicit replication seeds; derived from master_seed when empty
  std::uint64_t master_seed = 20240601;
  Tuning tuning = Tuning::CrossValidation;
  Grid grid;
  HyperParams hyper;  // base settings; ranks and lambda are used as-is under Tuning::Fixed
  double ridge = 1e-6;
  std::size_t threads = 1;

  void validate() const;
  std::vector<ExperimentSetting> resolved_settings() const;
  std::uint64_t replication_seed(std::size_t r) const;
};

struct ReplicationRecord {
  std::size_t setting = 0;
  std::size_t replication = 0;
  std::uint64_t seed = 0;
  Method method = Method::TenMTL;
  double rmse = 0.0;  // mean over tasks of per-task test RMSE
  std::vector<double> task_rmse;
  std::optional<GridTuple> selected;
  std::string error;  // non-empty when the fit failed; excluded from the summary
};

struct ExperimentRow {
  Scenario scenario = Scenario::I;
  ExperimentSetting setting;
  Method method = Method::TenMTL;
  double mean_rmse = 0.0;
  double std_rmse = 0.0;
  std::size_t reps = 0;
};

struct ExperimentResult {
  std::vector<ExperimentRow> rows;  // setting-major, then config method order
  std::vector<ReplicationRecord> records;
};

/// Replication r uses the same data seed under every setting (common random
/// numbers), so differences between settings are not masked by resampling.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

}  // namespace tenmtl
