#include "tenmtl/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tenmtl {

// ---------------------------------------------------------------------------
// Datasets and hyperparameters

void TaskDataset::validate() const {
  const auto n = y.size();
  if (z.cols() > 0 && z.rows() != n)
    throw ShapeError("task '" + id + "': z has " + std::to_string(z.rows()) + " rows, expected " +
                     std::to_string(n));
  if (!x.empty()) {
    if (static_cast<Eigen::Index>(x.size()) != n)
      throw ShapeError("task '" + id + "': tensor predictor count does not match responses");
    for (const auto& t : x)
      if (t.shape() != x.front().shape())
        throw ShapeError("task '" + id + "': tensor predictors have differing shapes");
  }
}

TaskDataset TaskDataset::select(const std::vector<std::size_t>& rows) const {
  TaskDataset out;
  out.id = id;
  const auto n = static_cast<Eigen::Index>(rows.size());
  out.y.resize(n);
  out.z.resize(n, z.cols());
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto src = static_cast<Eigen::Index>(rows[r]);
    out.y(r) = y(src);
    if (z.cols() > 0) out.z.row(r) = z.row(src);
    if (!x.empty()) out.x.push_back(x[rows[r]]);
  }
  return out;
}

TaskLayout TaskLayout::of(const std::vector<TaskDataset>& tasks) {
  if (tasks.empty()) throw std::invalid_argument("task collection is empty");
  TaskLayout layout;
  layout.tasks = tasks.size();
  layout.scalar_features = tasks.front().scalar_features();
  if (tasks.front().has_tensor()) layout.tensor_shape = tasks.front().x.front().shape();
  for (const auto& t : tasks) {
    t.validate();
    if (t.samples() < 1) throw std::invalid_argument("task '" + t.id + "' has no samples");
    if (t.scalar_features() != layout.scalar_features)
      throw ShapeError("tasks disagree on the number of scalar predictors");
    const Shape s = t.has_tensor() ? t.x.front().shape() : Shape{};
    if (s != layout.tensor_shape) throw ShapeError("tasks disagree on the tensor predictor shape");
  }
  if (!layout.has_tensor() && !layout.has_scalar())
    throw std::invalid_argument("tasks carry neither scalar nor tensor predictors");
  return layout;
}

std::size_t HyperParams::resolved_shared(const TaskLayout& layout) const {
  if (shared_columns) return *shared_columns;
  if (!layout.has_tensor() || !layout.has_scalar()) return 0;
  const std::size_t m = std::min(tensor_ranks.at(0), scalar_ranks[0]);
  return m > 0 ? m - 1 : 0;
}

void HyperParams::validate(const TaskLayout& layout) const {
  const std::size_t n = layout.tasks;
  const std::size_t q0 = resolved_shared(layout);
  if (layout.has_tensor()) {
    if (tensor_ranks.size() != layout.tensor_order() + 1)
      throw ShapeError("expected " + std::to_string(layout.tensor_order() + 1) +
                       " tensor ranks, got " + std::to_string(tensor_ranks.size()));
    if (tensor_ranks[0] < 1 || tensor_ranks[0] > n)
      throw ShapeError("task rank R_0 must lie in [1, N]");
    for (std::size_t d = 1; d < tensor_ranks.size(); ++d)
      if (tensor_ranks[d] < 1 || tensor_ranks[d] > layout.tensor_shape[d - 1])
        throw ShapeError("feature rank R_" + std::to_string(d) + " must lie in [1, I_" +
                         std::to_string(d) + "]");
    // The task factor rows are unpenalized; task ranks beyond the product of
    // the feature ranks leave core rows linearly dependent and those rows
    // unidentified.
    std::size_t feature_product = 1;
    for (std::size_t d = 1; d < tensor_ranks.size(); ++d) feature_product *= tensor_ranks[d];
    if (tensor_ranks[0] > feature_product)
      throw ShapeError("task rank R_0 = " + std::to_string(tensor_ranks[0]) +
                       " exceeds the product of the feature ranks (" + std::to_string(feature_product) + ")");
    if (q0 > tensor_ranks[0]) throw ShapeError("shared columns Q0 exceed R_0");
  }
  if (layout.has_scalar()) {
    if (scalar_ranks[0] < 1 || scalar_ranks[0] > n)
      throw ShapeError("scalar task rank T_0 must lie in [1, N]");
    if (scalar_ranks[1] < 1 || scalar_ranks[1] > layout.scalar_features)
      throw ShapeError("scalar feature rank T_1 must lie in [1, p]");
    if (scalar_ranks[0] > scalar_ranks[1])
      throw ShapeError("scalar task rank T_0 exceeds the scalar feature rank T_1");
    if (q0 > scalar_ranks[0]) throw ShapeError("shared columns Q0 exceed T_0");
  }
  if (q0 > 0 && !(layout.has_tensor() && layout.has_scalar()))
    throw ShapeError("shared columns require both tensor and scalar predictors");
  if (lambda.g < 0 || lambda.h < 0 || lambda.u < 0 || lambda.v < 0)
    throw std::invalid_argument("penalties must be nonnegative");
  if (!(epsilon > 0)) throw std::invalid_argument("epsilon must be positive");
}

Eigen::MatrixXd TuckerState::u0() const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(tasks()), w0.cols() + f0.cols());
  out << w0, f0;
  return out;
}

Eigen::MatrixXd TuckerState::v0() const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(tasks()), w0.cols() + d0.cols());
  out << w0, d0;
  return out;
}

Eigen::RowVectorXd TuckerState::u0_row(std::size_t i) const {
  const auto r = static_cast<Eigen::Index>(i);
  Eigen::RowVectorXd out(w0.cols() + f0.cols());
  out << w0.row(r), f0.row(r);
  return out;
}

Eigen::RowVectorXd TuckerState::v0_row(std::size_t i) const {
  const auto r = static_cast<Eigen::Index>(i);
  Eigen::RowVectorXd out(w0.cols() + d0.cols());
  out << w0.row(r), d0.row(r);
  return out;
}

double PersonalizedModel::linear_predictor(const Eigen::VectorXd& z, const DenseTensor* x) const {
  double theta = 0.0;
  if (gamma.size() > 0) {
    if (z.size() != gamma.size()) throw ShapeError("predict: scalar predictor length mismatch");
    theta += gamma.dot(z);
  }
  if (!b.empty()) {
    if (x == nullptr) throw ShapeError("predict: model expects a tensor predictor");
    theta += inner_product(b, *x);
  }
  return theta;
}

double predict(const PersonalizedModel& model, const Eigen::VectorXd& z, const DenseTensor* x,
               Family family) {
  return family.mean(model.linear_predictor(z, x));
}

// ---------------------------------------------------------------------------
// Per-sample building blocks

namespace {

Eigen::VectorXd scalar_row(const TaskDataset& task, std::size_t j) {
  if (task.z.cols() == 0) return {};
  return task.z.row(static_cast<Eigen::Index>(j)).transpose();
}

Eigen::VectorXd flat(const DenseTensor& t) { return t.as_vector(); }

// X x_1 U_1' ... x_m U_m', skipping feature mode `skip` (1-based; 0 skips none).
DenseTensor project(const DenseTensor& x, const std::vector<Eigen::MatrixXd>& u, std::size_t skip) {
  DenseTensor out = x;
  for (std::size_t d = 1; d <= u.size(); ++d)
    if (d != skip) out = mode_product(out, u[d - 1].transpose(), d - 1);
  return out;
}

// Linear pieces of theta_ij for one sample under the current state:
//   o = G_(0) K_0' vec(X)   (so <B_i, X> = u0_i o)
//   k = H V1' z             (so gamma_i'z = v0_i k)
struct SamplePieces {
  Eigen::VectorXd o;
  Eigen::VectorXd k;
};

SamplePieces sample_pieces(const TuckerState& s, const TaskDataset& task, std::size_t j) {
  SamplePieces p;
  if (s.has_tensor()) {
    const DenseTensor proj = project(task.x[j], s.u, 0);
    p.o = s.g.as_matrix() * flat(proj);
  }
  if (s.has_scalar()) p.k = s.h * (s.v1.transpose() * scalar_row(task, j));
  return p;
}

double tensor_part(const TuckerState& s, std::size_t i, const SamplePieces& p) {
  return s.has_tensor() ? s.u0_row(i).dot(p.o) : 0.0;
}

double scalar_part(const TuckerState& s, std::size_t i, const SamplePieces& p) {
  return s.has_scalar() ? s.v0_row(i).dot(p.k) : 0.0;
}

Eigen::VectorXd row_major(const Eigen::MatrixXd& m) {
  Eigen::VectorXd out(m.size());
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out(r * m.cols() + c) = m(r, c);
  return out;
}

Eigen::MatrixXd from_row_major(const Eigen::VectorXd& v, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = v(r * cols + c);
  return m;
}

std::size_t total_samples(const std::vector<TaskDataset>& tasks) {
  std::size_t n = 0;
  for (const auto& t : tasks) n += t.samples();
  return n;
}

GlmProblem make_problem(Eigen::Index rows, Eigen::Index cols, const HyperParams& h, double l1) {
  GlmProblem p;
  p.design.resize(rows, cols);
  p.response.resize(rows);
  p.offset.resize(rows);
  p.l1_penalty = l1;
  p.family = h.family;
  return p;
}

enum class RowBlock { W0, F0, D0 };

GlmSolution solve_row(RowBlock block, std::size_t i, const TuckerState& s, const TaskDataset& task,
                      const HyperParams& h) {
  const auto q0 = static_cast<Eigen::Index>(s.shared());
  Eigen::Index width = 0;
  Eigen::VectorXd init;
  const auto r = static_cast<Eigen::Index>(i);
  switch (block) {
    case RowBlock::W0: width = q0; init = s.w0.row(r).transpose(); break;
    case RowBlock::F0: width = s.f0.cols(); init = s.f0.row(r).transpose(); break;
    case RowBlock::D0: width = s.d0.cols(); init = s.d0.row(r).transpose(); break;
  }
  const auto n = static_cast<Eigen::Index>(task.samples());
  GlmProblem p = make_problem(n, width, h, 0.0);
  p.response = task.y;
  const Eigen::RowVectorXd w0 = s.w0.row(r);
  for (Eigen::Index j = 0; j < n; ++j) {
    const SamplePieces pc = sample_pieces(s, task, static_cast<std::size_t>(j));
    const Eigen::Index r0 = s.has_tensor() ? pc.o.size() - q0 : 0;
    const Eigen::Index t0 = s.has_scalar() ? pc.k.size() - q0 : 0;
    switch (block) {
      case RowBlock::W0:
        // design k1 + o1, offset psi + xi
        p.design.row(j) = (pc.k.head(q0) + pc.o.head(q0)).transpose();
        p.offset(j) = s.d0.row(r).dot(pc.k.tail(t0)) + s.f0.row(r).dot(pc.o.tail(r0));
        break;
      case RowBlock::F0:
        // design o2, offset delta + psi + omega
        p.design.row(j) = pc.o.tail(r0).transpose();
        p.offset(j) = scalar_part(s, i, pc) + (q0 > 0 ? w0.dot(pc.o.head(q0)) : 0.0);
        break;
      case RowBlock::D0:
        // design k2, offset delta + omega + xi
        p.design.row(j) = pc.k.tail(t0).transpose();
        p.offset(j) = (q0 > 0 ? w0.dot(pc.k.head(q0)) : 0.0) + tensor_part(s, i, pc);
        break;
    }
  }
  return fit_glm(p, init, h.glm_tol, h.glm_max_iter);
}

GlmSolution solve_ud(std::size_t d, const TuckerState& s, const std::vector<TaskDataset>& tasks,
                     const HyperParams& h) {
  if (!s.has_tensor() || d < 1 || d > s.u.size())
    throw ShapeError("update_ud: feature mode out of range");
  const Eigen::MatrixXd& ud = s.u[d - 1];
  const auto n = static_cast<Eigen::Index>(total_samples(tasks));
  GlmProblem p = make_problem(n, ud.size(), h, h.lambda.u);
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto& task = tasks[i];
    const DenseTensor core_i = contract(s.g, s.u0_row(i).transpose(), 0);
    const Eigen::MatrixXd core_unfold = matricize(core_i, d - 1);
    const Eigen::VectorXd gamma = s.has_scalar() ? Eigen::VectorXd(s.v1 * (s.h.transpose() *
                                                                  s.v0_row(i).transpose()))
                                                 : Eigen::VectorXd();
    for (std::size_t j = 0; j < task.samples(); ++j, ++row) {
      const DenseTensor y = project(task.x[j], s.u, d);
      const Eigen::MatrixXd design = matricize(y, d - 1) * core_unfold.transpose();
      p.design.row(row) = row_major(design).transpose();
      p.response(row) = task.y(static_cast<Eigen::Index>(j));
      p.offset(row) = gamma.size() > 0 ? gamma.dot(scalar_row(task, j)) : 0.0;
    }
  }
  return fit_glm(p, row_major(ud), h.glm_tol, h.glm_max_iter);
}

GlmSolution solve_core_g(const TuckerState& s, const std::vector<TaskDataset>& tasks,
                         const HyperParams& h) {
  if (!s.has_tensor()) throw ShapeError("update_core_g: no tensor predictors");
  const auto n = static_cast<Eigen::Index>(total_samples(tasks));
  const auto q = static_cast<Eigen::Index>(s.g.size());
  GlmProblem p = make_problem(n, q, h, h.lambda.g);
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto& task = tasks[i];
    const Eigen::RowVectorXd u0 = s.u0_row(i);
    const Eigen::VectorXd gamma = s.has_scalar() ? Eigen::VectorXd(s.v1 * (s.h.transpose() *
                                                                  s.v0_row(i).transpose()))
                                                 : Eigen::VectorXd();
    for (std::size_t j = 0; j < task.samples(); ++j, ++row) {
      const Eigen::VectorXd proj = flat(project(task.x[j], s.u, 0));
      const Eigen::Index block = proj.size();
      for (Eigen::Index r0 = 0; r0 < u0.size(); ++r0)
        p.design.row(row).segment(r0 * block, block) = u0(r0) * proj.transpose();
      p.response(row) = task.y(static_cast<Eigen::Index>(j));
      p.offset(row) = gamma.size() > 0 ? gamma.dot(scalar_row(task, j)) : 0.0;
    }
  }
  return fit_glm(p, flat(s.g), h.glm_tol, h.glm_max_iter);
}

// Offset shared by the V1 and H updates: a_ij = <B_i, X_ij>.
double tensor_offset(const TuckerState& s, std::size_t i, const TaskDataset& task, std::size_t j) {
  if (!s.has_tensor()) return 0.0;
  return s.u0_row(i).dot(s.g.as_matrix() * flat(project(task.x[j], s.u, 0)));
}

GlmSolution solve_v1(const TuckerState& s, const std::vector<TaskDataset>& tasks,
                     const HyperParams& h) {
  if (!s.has_scalar()) throw ShapeError("update_v1: no scalar predictors");
  const auto n = static_cast<Eigen::Index>(total_samples(tasks));
  const Eigen::Index t1 = s.v1.cols();
  GlmProblem p = make_problem(n, s.v1.size(), h, h.lambda.v);
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto& task = tasks[i];
    const Eigen::RowVectorXd kappa = s.v0_row(i) * s.h;
    for (std::size_t j = 0; j < task.samples(); ++j, ++row) {
      const Eigen::VectorXd z = scalar_row(task, j);
      for (Eigen::Index q = 0; q < z.size(); ++q)
        p.design.row(row).segment(q * t1, t1) = z(q) * kappa;
      p.response(row) = task.y(static_cast<Eigen::Index>(j));
      p.offset(row) = tensor_offset(s, i, task, j);
    }
  }
  return fit_glm(p, row_major(s.v1), h.glm_tol, h.glm_max_iter);
}

GlmSolution solve_core_h(const TuckerState& s, const std::vector<TaskDataset>& tasks,
                         const HyperParams& h) {
  if (!s.has_scalar()) throw ShapeError("update_core_h: no scalar predictors");
  const auto n = static_cast<Eigen::Index>(total_samples(tasks));
  const Eigen::Index t1 = s.h.cols();
  GlmProblem p = make_problem(n, s.h.size(), h, h.lambda.h);
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto& task = tasks[i];
    const Eigen::RowVectorXd v0 = s.v0_row(i);
    for (std::size_t j = 0; j < task.samples(); ++j, ++row) {
      const Eigen::RowVectorXd b = (s.v1.transpose() * scalar_row(task, j)).transpose();
      for (Eigen::Index t0 = 0; t0 < v0.size(); ++t0) p.design.row(row).segment(t0 * t1, t1) = v0(t0) * b;
      p.response(row) = task.y(static_cast<Eigen::Index>(j));
      p.offset(row) = tensor_offset(s, i, task, j);
    }
  }
  return fit_glm(p, row_major(s.h), h.glm_tol, h.glm_max_iter);
}

void check_tasks_match(const TuckerState& s, const std::vector<TaskDataset>& tasks) {
  if (tasks.size() != s.tasks()) throw ShapeError("task count does not match the state");
}

}  // namespace

// ---------------------------------------------------------------------------
// Objective and block updates

double objective(const TuckerState& state, const std::vector<TaskDataset>& tasks,
                 const HyperParams& h) {
  check_tasks_match(state, tasks);
  const auto models = reconstruct_models(state);
  double value = 0.0;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto& task = tasks[i];
    Eigen::VectorXd eta(static_cast<Eigen::Index>(task.samples()));
    for (std::size_t j = 0; j < task.samples(); ++j) {
      if (models[i].gamma.size() > 0 && task.z.cols() != models[i].gamma.size())
        throw ShapeError("objective: scalar predictor count mismatch");
      if (!models[i].b.empty() && (!task.has_tensor() || task.x[j].shape() != models[i].b.shape()))
        throw ShapeError("objective: tensor predictor shape mismatch");
      eta(static_cast<Eigen::Index>(j)) =
          models[i].linear_predictor(scalar_row(task, j), task.has_tensor() ? &task.x[j] : nullptr);
    }
    value += neg_log_likelihood(h.family, eta, task.y);
  }
  if (state.has_tensor()) {
    value += h.lambda.g * state.g.as_vector().lpNorm<1>();
    for (const auto& u : state.u) value += h.lambda.u * u.lpNorm<1>();
  }
  if (state.has_scalar()) {
    value += h.lambda.h * state.h.lpNorm<1>();
    value += h.lambda.v * state.v1.lpNorm<1>();
  }
  return value;
}

Eigen::RowVectorXd update_w0_row(std::size_t i, const TuckerState& state, const TaskDataset& task,
                                 const HyperParams& h) {
  if (state.shared() == 0) return {};
  return solve_row(RowBlock::W0, i, state, task, h).coefficients.transpose();
}

Eigen::RowVectorXd update_f0_row(std::size_t i, const TuckerState& state, const TaskDataset& task,
                                 const HyperParams& h) {
  if (state.f0.cols() == 0) return Eigen::RowVectorXd(0);
  return solve_row(RowBlock::F0, i, state, task, h).coefficients.transpose();
}

Eigen::RowVectorXd update_d0_row(std::size_t i, const TuckerState& state, const TaskDataset& task,
                                 const HyperParams& h) {
  if (state.d0.cols() == 0) return Eigen::RowVectorXd(0);
  return solve_row(RowBlock::D0, i, state, task, h).coefficients.transpose();
}

Eigen::MatrixXd update_ud(std::size_t d, const TuckerState& state,
                          const std::vector<TaskDataset>& tasks, const HyperParams& h) {
  check_tasks_match(state, tasks);
  const auto sol = solve_ud(d, state, tasks, h);
  const auto& ud = state.u.at(d - 1);
  return from_row_major(sol.coefficients, ud.rows(), ud.cols());
}

DenseTensor update_core_g(const TuckerState& state, const std::vector<TaskDataset>& tasks,
                          const HyperParams& h) {
  check_tasks_match(state, tasks);
  const auto sol = solve_core_g(state, tasks, h);
  return {state.g.shape(), {sol.coefficients.begin(), sol.coefficients.end()}};
}

Eigen::MatrixXd update_v1(const TuckerState& state, const std::vector<TaskDataset>& tasks,
                          const HyperParams& h) {
  if (!state.has_scalar()) return state.v1;
  check_tasks_match(state, tasks);
  const auto sol = solve_v1(state, tasks, h);
  return from_row_major(sol.coefficients, state.v1.rows(), state.v1.cols());
}

Eigen::MatrixXd update_core_h(const TuckerState& state, const std::vector<TaskDataset>& tasks,
                              const HyperParams& h) {
  if (!state.has_scalar()) return state.h;
  check_tasks_match(state, tasks);
  const auto sol = solve_core_h(state, tasks, h);
  return from_row_major(sol.coefficients, state.h.rows(), state.h.cols());
}

// ---------------------------------------------------------------------------
// Initialisation and the block coordinate descent loop

Eigen::MatrixXd local_design(const TaskDataset& task) {
  const auto n = static_cast<Eigen::Index>(task.samples());
  const Eigen::Index tensor_dim = task.has_tensor() ? static_cast<Eigen::Index>(task.x.front().size()) : 0;
  const Eigen::Index p = task.z.cols();
  Eigen::MatrixXd design(n, tensor_dim + p);
  for (Eigen::Index j = 0; j < n; ++j) {
    if (tensor_dim > 0) design.row(j).head(tensor_dim) = flat(task.x[j]).transpose();
    if (p > 0) design.row(j).tail(p) = task.z.row(j);
  }
  return design;
}

LocalFit fit_local_glm(const TaskDataset& task, Family family, double ridge, double tol,
                       std::size_t max_iter) {
  task.validate();
  GlmProblem p;
  p.design = local_design(task);
  p.response = task.y;
  p.offset = Eigen::VectorXd::Zero(task.y.size());
  p.l2_penalty = ridge;
  p.family = family;
  const auto sol = fit_glm(p, {}, tol, max_iter);
  const Eigen::Index tensor_dim = task.has_tensor() ? static_cast<Eigen::Index>(task.x.front().size()) : 0;
  LocalFit out;
  out.tensor_coef = sol.coefficients.head(tensor_dim);
  out.scalar_coef = sol.coefficients.tail(task.z.cols());
  out.converged = sol.converged;
  return out;
}

TuckerState initialize(const std::vector<TaskDataset>& tasks, const HyperParams& h) {
  const TaskLayout layout = TaskLayout::of(tasks);
  h.validate(layout);
  const std::size_t n_tasks = layout.tasks;
  const auto n = static_cast<Eigen::Index>(n_tasks);
  const auto q0 = static_cast<Eigen::Index>(h.resolved_shared(layout));
  const std::size_t dim = layout.tensor_size() + layout.scalar_features;

  std::vector<LocalFit> local;
  local.reserve(n_tasks);
  for (const auto& task : tasks)
    local.push_back(fit_local_glm(task, h.family, task.samples() < dim ? h.init_ridge : 0.0,
                                  h.glm_tol, h.glm_max_iter));

  TuckerState s;
  for (const auto& task : tasks) s.task_ids.push_back(task.id);

  Eigen::MatrixXd v0_init;
  if (layout.has_scalar()) {
    const auto p = static_cast<Eigen::Index>(layout.scalar_features);
    Eigen::MatrixXd gamma(n, p);
    for (Eigen::Index i = 0; i < n; ++i) gamma.row(i) = local[i].scalar_coef.transpose();
    const TuckerFactors sf =
        hosvd(DenseTensor::from_matrix(gamma), {h.scalar_ranks[0], h.scalar_ranks[1]});
    v0_init = sf.factors[0];
    s.v1 = sf.factors[1];
    s.h = sf.core.as_matrix();
    s.w0 = v0_init.leftCols(q0);
    s.d0 = v0_init.rightCols(v0_init.cols() - q0);
  } else {
    s.w0.resize(n, 0);
    s.d0.resize(n, 0);
    s.v1.resize(0, 0);
    s.h.resize(0, 0);
  }

  if (layout.has_tensor()) {
    Shape stacked_shape{n_tasks};
    stacked_shape.insert(stacked_shape.end(), layout.tensor_shape.begin(), layout.tensor_shape.end());
    std::vector<double> data;
    data.reserve(shape_size(stacked_shape));
    for (const auto& l : local) data.insert(data.end(), l.tensor_coef.begin(), l.tensor_coef.end());
    const DenseTensor stacked(stacked_shape, std::move(data));
    TuckerFactors tf = hosvd(stacked, h.tensor_ranks);
    const Eigen::MatrixXd& u0_init = tf.factors[0];
    s.f0 = u0_init.rightCols(u0_init.cols() - q0);
    s.u.assign(tf.factors.begin() + 1, tf.factors.end());
    if (q0 > 0) {
      // W0 came from the scalar side; refit the core for the assembled U0.
      const Eigen::MatrixXd u0 = s.u0();
      DenseTensor core = mode_product(stacked, u0.completeOrthogonalDecomposition().pseudoInverse(), 0);
      for (std::size_t d = 0; d < s.u.size(); ++d) core = mode_product(core, s.u[d].transpose(), d + 1);
      s.g = std::move(core);
    } else {
      s.g = std::move(tf.core);
    }
  } else {
    s.f0.resize(n, 0);
  }
  return s;
}

FitResult fit_from(TuckerState state, const std::vector<TaskDataset>& tasks, const HyperParams& h) {
  const TaskLayout layout = TaskLayout::of(tasks);
  h.validate(layout);
  check_tasks_match(state, tasks);
  FitResult result{std::move(state), {}};
  TuckerState& s = result.state;
  FitTrace& trace = result.trace;

  auto note = [&](const GlmSolution& sol) {
    if (!sol.converged) ++trace.unconverged_subproblems;
    return sol.coefficients;
  };
  auto after_block = [&] {
    if (h.trace_blocks) trace.block_objectives.push_back(objective(s, tasks, h));
  };

  double previous = objective(s, tasks, h);
  trace.objectives.push_back(previous);
  for (std::size_t it = 1; it <= h.max_iter; ++it) {
    if (s.shared() > 0) {
      for (std::size_t i = 0; i < tasks.size(); ++i)
        s.w0.row(static_cast<Eigen::Index>(i)) = note(solve_row(RowBlock::W0, i, s, tasks[i], h)).transpose();
      after_block();
    }
    if (s.f0.cols() > 0) {
      for (std::size_t i = 0; i < tasks.size(); ++i)
        s.f0.row(static_cast<Eigen::Index>(i)) = note(solve_row(RowBlock::F0, i, s, tasks[i], h)).transpose();
      after_block();
    }
    if (s.has_tensor()) {
      for (std::size_t d = 1; d <= s.u.size(); ++d) {
        const auto coef = note(solve_ud(d, s, tasks, h));
        s.u[d - 1] = from_row_major(coef, s.u[d - 1].rows(), s.u[d - 1].cols());
        after_block();
      }
      const auto coef = note(solve_core_g(s, tasks, h));
      s.g = DenseTensor(s.g.shape(), {coef.begin(), coef.end()});
      after_block();
    }
    if (s.d0.cols() > 0) {
      for (std::size_t i = 0; i < tasks.size(); ++i)
        s.d0.row(static_cast<Eigen::Index>(i)) = note(solve_row(RowBlock::D0, i, s, tasks[i], h)).transpose();
      after_block();
    }
    if (s.has_scalar()) {
      s.v1 = from_row_major(note(solve_v1(s, tasks, h)), s.v1.rows(), s.v1.cols());
      after_block();
      s.h = from_row_major(note(solve_core_h(s, tasks, h)), s.h.rows(), s.h.cols());
      after_block();
    }

    const double current = objective(s, tasks, h);
    trace.objectives.push_back(current);
    trace.iterations = it;
    trace.final_relative_change = std::abs(current - previous) / std::max(std::abs(previous), 1e-12);
    previous = current;
    if (trace.final_relative_change < h.epsilon) {
      trace.converged = true;
      break;
    }
  }
  return result;
}

FitResult fit(const std::vector<TaskDataset>& tasks, const HyperParams& h) {
  return fit_from(initialize(tasks, h), tasks, h);
}

std::vector<PersonalizedModel> reconstruct_models(const TuckerState& state) {
  std::vector<PersonalizedModel> models(state.tasks());
  for (std::size_t i = 0; i < state.tasks(); ++i) {
    auto& m = models[i];
    m.task_id = state.task_ids[i];
    if (state.has_tensor()) {
      DenseTensor b = contract(state.g, state.u0_row(i).transpose(), 0);
      for (std::size_t d = 0; d < state.u.size(); ++d) b = mode_product(b, state.u[d], d);
      m.b = std::move(b);
    }
    if (state.has_scalar())
      m.gamma = state.v1 * (state.h.transpose() * state.v0_row(i).transpose());
    else
      m.gamma.resize(0);
  }
  return models;
}

// ---------------------------------------------------------------------------
// Vector-only special case

Eigen::MatrixXd VectorState::coefficients() const { return u0 * g * u1.transpose(); }

std::vector<TaskDataset> flatten_to_scalar(const std::vector<TaskDataset>& tasks) {
  std::vector<TaskDataset> out;
  out.reserve(tasks.size());
  for (const auto& t : tasks) {
    TaskDataset v;
    v.id = t.id;
    v.y = t.y;
    v.z = local_design(t);
    out.push_back(std::move(v));
  }
  return out;
}

namespace {

void check_vector_tasks(const std::vector<TaskDataset>& tasks) {
  const TaskLayout layout = TaskLayout::of(tasks);
  if (layout.has_tensor() || !layout.has_scalar())
    throw std::invalid_argument("fit_vector: tasks must carry scalar predictors only");
}

}  // namespace

double vector_objective(const VectorState& state, const std::vector<TaskDataset>& tasks,
                        const VectorFitOptions& opt) {
  const Eigen::MatrixXd beta = state.coefficients();
  double value = 0.0;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const Eigen::VectorXd eta = tasks[i].z * beta.row(static_cast<Eigen::Index>(i)).transpose();
    value += neg_log_likelihood(opt.family, eta, tasks[i].y);
  }
  return value + opt.lambda_g * state.g.lpNorm<1>() + opt.lambda_u * state.u1.lpNorm<1>();
}

VectorFitResult fit_vector(const std::vector<TaskDataset>& tasks, const VectorFitOptions& opt) {
  check_vector_tasks(tasks);
  const auto n_tasks = static_cast<Eigen::Index>(tasks.size());
  const Eigen::Index d = tasks.front().z.cols();
  const auto r0 = static_cast<Eigen::Index>(opt.task_rank);
  const auto r1 = static_cast<Eigen::Index>(opt.feature_rank);
  if (r0 < 1 || r0 > n_tasks) throw ShapeError("fit_vector: R0 must lie in [1, N]");
  if (r1 < 1 || r1 > d) throw ShapeError("fit_vector: R1 must lie in [1, d]");

  Eigen::MatrixXd local(n_tasks, d);
  for (Eigen::Index i = 0; i < n_tasks; ++i) {
    const auto& task = tasks[static_cast<std::size_t>(i)];
    const double ridge = task.samples() < static_cast<std::size_t>(d) ? opt.init_ridge : 0.0;
    local.row(i) = fit_local_glm(task, opt.family, ridge, opt.glm_tol).scalar_coef.transpose();
  }
  const TuckerFactors tf = hosvd(DenseTensor::from_matrix(local), {opt.task_rank, opt.feature_rank});

  VectorFitResult result;
  VectorState& s = result.state;
  s.u0 = tf.factors[0];
  s.u1 = tf.factors[1];
  s.g = tf.core.as_matrix();
  FitTrace& trace = result.trace;
  auto note = [&](const GlmSolution& sol) {
    if (!sol.converged) ++trace.unconverged_subproblems;
    return sol.coefficients;
  };

  Eigen::Index total = 0;
  for (const auto& t : tasks) total += static_cast<Eigen::Index>(t.samples());

  double previous = vector_objective(s, tasks, opt);
  trace.objectives.push_back(previous);
  for (std::size_t it = 1; it <= opt.max_iter; ++it) {
    // u0_i: design k_ij = G U1' x_ij
    for (Eigen::Index i = 0; i < n_tasks; ++i) {
      const auto& task = tasks[static_cast<std::size_t>(i)];
      GlmProblem p;
      p.design = task.z * s.u1 * s.g.transpose();
      p.response = task.y;
      p.offset = Eigen::VectorXd::Zero(task.y.size());
      p.family = opt.family;
      s.u0.row(i) = note(fit_glm(p, s.u0.row(i).transpose(), opt.glm_tol)).transpose();
    }
    // U1: design h_ij = x_ij' (x) t_i, coefficients vec(U1') = row-major U1
    {
      GlmProblem p;
      p.design.resize(total, d * r1);
      p.response.resize(total);
      p.offset = Eigen::VectorXd::Zero(total);
      p.l1_penalty = opt.lambda_u;
      p.family = opt.family;
      Eigen::Index row = 0;
      for (Eigen::Index i = 0; i < n_tasks; ++i) {
        const auto& task = tasks[static_cast<std::size_t>(i)];
        const Eigen::RowVectorXd t = s.u0.row(i) * s.g;
        for (Eigen::Index j = 0; j < task.z.rows(); ++j, ++row) {
          for (Eigen::Index a = 0; a < d; ++a) p.design.row(row).segment(a * r1, r1) = task.z(j, a) * t;
          p.response(row) = task.y(j);
        }
      }
      const auto coef = note(fit_glm(p, row_major(s.u1), opt.glm_tol));
      s.u1 = from_row_major(coef, d, r1);
    }
    // G: design o_ij = m_ij' (x) u0_i with m_ij = U1' x_ij, coefficients vec(G) column-major
    {
      GlmProblem p;
      p.design.resize(total, r0 * r1);
      p.response.resize(total);
      p.offset = Eigen::VectorXd::Zero(total);
      p.l1_penalty = opt.lambda_g;
      p.family = opt.family;
      Eigen::Index row = 0;
      for (Eigen::Index i = 0; i < n_tasks; ++i) {
        const auto& task = tasks[static_cast<std::size_t>(i)];
        const Eigen::RowVectorXd u0 = s.u0.row(i);
        for (Eigen::Index j = 0; j < task.z.rows(); ++j, ++row) {
          const Eigen::VectorXd m = s.u1.transpose() * task.z.row(j).transpose();
          for (Eigen::Index b = 0; b < r1; ++b) p.design.row(row).segment(b * r0, r0) = m(b) * u0;
          p.response(row) = task.y(j);
        }
      }
      const Eigen::VectorXd init = Eigen::Map<const Eigen::VectorXd>(s.g.data(), s.g.size());
      const auto coef = note(fit_glm(p, init, opt.glm_tol));
      s.g = Eigen::Map<const Eigen::MatrixXd>(coef.data(), r0, r1);
    }

    const double current = vector_objective(s, tasks, opt);
    trace.objectives.push_back(current);
    trace.iterations = it;
    trace.final_relative_change = std::abs(current - previous) / std::max(std::abs(previous), 1e-12);
    previous = current;
    if (trace.final_relative_change < opt.epsilon) {
      trace.converged = true;
      break;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Random-effect diagnostic

ImpliedCovariance implied_covariance(const Eigen::MatrixXd& core, const Eigen::MatrixXd& u1) {
  if (core.cols() != u1.cols()) throw ShapeError("implied_covariance: core/U1 rank mismatch");
  const Eigen::MatrixXd l = core * u1.transpose();  // R0 x p
  ImpliedCovariance out;
  out.covariance = l.transpose() * l;
  if (out.covariance.size() == 0 || l.size() == 0) {
    out.covariance.setZero(u1.rows(), u1.rows());
    return out;
  }
  const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(out.covariance).singularValues();
  const double top = sv.size() > 0 ? sv(0) : 0.0;
  if (top > 0.0)
    out.rank = static_cast<std::size_t>((sv.array() > 1e-10 * top).count());
  return out;
}

ImpliedCovariance implied_covariance(const VectorState& state) {
  return implied_covariance(state.g, state.u1);
}

ImpliedCovariance implied_covariance(const TuckerState& state) {
  if (!state.has_tensor() || state.u.size() != 1)
    throw ShapeError("implied_covariance: requires exactly one tensor feature mode");
  return implied_covariance(state.g.as_matrix(), state.u[0]);
}

}  // namespace tenmtl
