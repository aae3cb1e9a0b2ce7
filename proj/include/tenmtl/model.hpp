#pragma once

#include "tenmtl/glm.hpp"
#include "tenmtl/tensor.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace tenmtl {

/// One task's samples: responses, scalar predictors (n x p, p may be 0) and
/// optional tensor predictors (one per sample, all of the same shape).
struct TaskDataset {
  std::string id;
  Eigen::VectorXd y;
  Eigen::MatrixXd z;
  std::vector<DenseTensor> x;

  std::size_t samples() const { return static_cast<std::size_t>(y.size()); }
  std::size_t scalar_features() const { return static_cast<std::size_t>(z.cols()); }
  bool has_tensor() const { return !x.empty(); }
  void validate() const;

  /// Subset of samples in the given order.
  TaskDataset select(const std::vector<std::size_t>& rows) const;
};

/// Shared layout of a task collection; validates that every task agrees.
struct TaskLayout {
  std::size_t tasks = 0;
  std::size_t scalar_features = 0;
  Shape tensor_shape;  // empty when tasks carry no tensor predictors

  bool has_tensor() const { return !tensor_shape.empty(); }
  bool has_scalar() const { return scalar_features > 0; }
  std::size_t tensor_size() const { return has_tensor() ? shape_size(tensor_shape) : 0; }
  std::size_t tensor_order() const { return tensor_shape.size(); }

  static TaskLayout of(const std::vector<TaskDataset>& tasks);
};

struct Penalties {
  double g = 0.0;  // core G
  double h = 0.0;  // core H
  double u = 0.0;  // every tensor feature factor U_d
  double v = 0.0;  // scalar feature factor V1

  static Penalties tied(double lambda) { return {lambda, lambda, lambda, lambda}; }
};

struct HyperParams {
  /// [R_0, R_1, ..., R_m]; ignored when tasks carry no tensor predictors.
  std::vector<std::size_t> tensor_ranks;
  /// [T_0, T_1]; ignored when p = 0.
  std::array<std::size_t, 2> scalar_ranks{0, 0};
  /// Q0, the number of task-factor columns shared by U0 and V0. Defaults to
  /// min(R_0, T_0) - 1 floored at zero, and to zero unless both sides exist.
  std::optional<std::size_t> shared_columns;
  Penalties lambda;
  double epsilon = 1e-5;
  std::size_t max_iter = 50;
  Family family;
  /// Ridge used by the local fits that seed the factorisation when n_i < dim.
  double init_ridge = 1e-6;
  double glm_tol = 1e-8;
  std::size_t glm_max_iter = 100;
  /// Record the objective after each block update (for diagnostics).
  bool trace_blocks = false;

  std::size_t resolved_shared(const TaskLayout& layout) const;
  void validate(const TaskLayout& layout) const;
};

/// The complete learned factorisation.
///   stacked B = G x_0 [W0 | F0] x_1 U_1 ... x_m U_m
///   Gamma     = H x_0 [W0 | D0] x_1 V1
struct TuckerState {
  std::vector<std::string> task_ids;
  Eigen::MatrixXd w0;              // N x Q0
  Eigen::MatrixXd f0;              // N x (R_0 - Q0)
  std::vector<Eigen::MatrixXd> u;  // U_d, I_d x R_d
  DenseTensor g;                   // [R_0, R_1..R_m]; absent without tensor predictors
  Eigen::MatrixXd d0;              // N x (T_0 - Q0)
  Eigen::MatrixXd v1;              // p x T1
  Eigen::MatrixXd h;               // T_0 x T_1; 0 x 0 without scalar predictors

  std::size_t tasks() const { return task_ids.size(); }
  std::size_t shared() const { return static_cast<std::size_t>(w0.cols()); }
  bool has_tensor() const { return !g.empty(); }
  bool has_scalar() const { return h.size() > 0; }

  Eigen::MatrixXd u0() const;  // [W0 | F0]
  Eigen::MatrixXd v0() const;  // [W0 | D0]
  Eigen::RowVectorXd u0_row(std::size_t i) const;
  Eigen::RowVectorXd v0_row(std::size_t i) const;
};

struct PersonalizedModel {
  std::string task_id;
  DenseTensor b;          // absent without tensor predictors
  Eigen::VectorXd gamma;  // length p

  /// Linear predictor gamma'z + <B, x>.
  double linear_predictor(const Eigen::VectorXd& z, const DenseTensor* x) const;
};

struct FitTrace {
  std::vector<double> objectives;        // l^0 (after initialisation), l^1, ...
  std::vector<double> block_objectives;  // after each block update, when requested
  std::size_t iterations = 0;
  bool converged = false;
  double final_relative_change = 0.0;
  std::size_t unconverged_subproblems = 0;
};

struct FitResult {
  TuckerState state;
  FitTrace trace;
};

double objective(const TuckerState& state, const std::vector<TaskDataset>& tasks,
                 const HyperParams& h);

TuckerState initialize(const std::vector<TaskDataset>& tasks, const HyperParams& h);

Eigen::RowVectorXd update_w0_row(std::size_t i, const TuckerState& state, const TaskDataset& task,
                                 const HyperParams& h);
Eigen::RowVectorXd update_f0_row(std::size_t i, const TuckerState& state, const TaskDataset& task,
                                 const HyperParams& h);
/// `d` is the 1-based feature mode, 1 <= d <= m.
Eigen::MatrixXd update_ud(std::size_t d, const TuckerState& state,
                          const std::vector<TaskDataset>& tasks, const HyperParams& h);
DenseTensor update_core_g(const TuckerState& state, const std::vector<TaskDataset>& tasks,
                          const HyperParams& h);
Eigen::RowVectorXd update_d0_row(std::size_t i, const TuckerState& state, const TaskDataset& task,
                                 const HyperParams& h);
Eigen::MatrixXd update_v1(const TuckerState& state, const std::vector<TaskDataset>& tasks,
                          const HyperParams& h);
Eigen::MatrixXd update_core_h(const TuckerState& state, const std::vector<TaskDataset>& tasks,
                              const HyperParams& h);

/// Initialises, then cycles W0, F0, {U_d}, G, D0, V1, H until the relative
/// objective change drops below epsilon or max_iter sweeps have run.
FitResult fit(const std::vector<TaskDataset>& tasks, const HyperParams& h);

/// Same loop from a caller-supplied starting state.
FitResult fit_from(TuckerState state, const std::vector<TaskDataset>& tasks, const HyperParams& h);

std::vector<PersonalizedModel> reconstruct_models(const TuckerState& state);

/// Mean response b'(gamma'z + <B, x>).
double predict(const PersonalizedModel& model, const Eigen::VectorXd& z, const DenseTensor* x,
               Family family);

// ---------------------------------------------------------------------------
// Vector-only special case: beta_i' = u0_i * G * U1'.

struct VectorState {
  Eigen::MatrixXd u0;  // N x R0
  Eigen::MatrixXd g;   // R0 x R1
  Eigen::MatrixXd u1;  // d x R1

  /// Row i holds beta_i'.
  Eigen::MatrixXd coefficients() const;
};

struct VectorFitResult {
  VectorState state;
  FitTrace trace;
};

struct VectorFitOptions {
  std::size_t task_rank = 1;     // R0
  std::size_t feature_rank = 1;  // R1
  double lambda_g = 0.0;
  double lambda_u = 0.0;
  Family family;
  double epsilon = 1e-5;
  std::size_t max_iter = 50;
  double init_ridge = 1e-6;
  double glm_tol = 1e-8;
};

/// Tasks must carry scalar predictors only.
VectorFitResult fit_vector(const std::vector<TaskDataset>& tasks, const VectorFitOptions& opt);

double vector_objective(const VectorState& state, const std::vector<TaskDataset>& tasks,
                        const VectorFitOptions& opt);

/// Converts order-1 tensor predictors into scalar predictors (appended after z).
std::vector<TaskDataset> flatten_to_scalar(const std::vector<TaskDataset>& tasks);

struct ImpliedCovariance {
  Eigen::MatrixXd covariance;  // p x p
  std::size_t rank = 0;
};

/// Covariance of beta_i = u0_i * L with u0_i ~ N(0, I) and L = G * U1'.
ImpliedCovariance implied_covariance(const Eigen::MatrixXd& core, const Eigen::MatrixXd& u1);
ImpliedCovariance implied_covariance(const VectorState& state);
/// Requires a single tensor feature mode (m = 1).
ImpliedCovariance implied_covariance(const TuckerState& state);

// ---------------------------------------------------------------------------
// Local GLM fits shared by initialisation and the baselines.

struct LocalFit {
  Eigen::VectorXd tensor_coef;  // vec(B_i), row-major
  Eigen::VectorXd scalar_coef;  // gamma_i
  bool converged = true;
};

/// Design rows are [vec(X_ij), z_ij].
Eigen::MatrixXd local_design(const TaskDataset& task);
LocalFit fit_local_glm(const TaskDataset& task, Family family, double ridge, double tol = 1e-8,
                       std::size_t max_iter = 100);

}  // namespace tenmtl
