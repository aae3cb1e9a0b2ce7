#include "tenmtl/baselines.hpp"

#include <stdexcept>

namespace tenmtl {

namespace {

std::size_t coefficient_count(const TaskLayout& layout) {
  return layout.tensor_size() + layout.scalar_features;
}

PersonalizedModel to_model(const std::string& id, const LocalFit& fit, const TaskLayout& layout) {
  PersonalizedModel m;
  m.task_id = id;
  if (layout.has_tensor())
    m.b = DenseTensor(layout.tensor_shape, {fit.tensor_coef.begin(), fit.tensor_coef.end()});
  m.gamma = fit.scalar_coef;
  return m;
}

}  // namespace

std::vector<PersonalizedModel> fit_local(const std::vector<TaskDataset>& tasks, Family family,
                                         double ridge) {
  const TaskLayout layout = TaskLayout::of(tasks);
  const std::size_t dim = coefficient_count(layout);
  std::vector<PersonalizedModel> out;
  out.reserve(tasks.size());
  for (const auto& task : tasks)
    out.push_back(to_model(task.id, fit_local_glm(task, family, task.samples() < dim ? ridge : 0.0),
                           layout));
  return out;
}

PersonalizedModel fit_global(const std::vector<TaskDataset>& tasks, Family family, double ridge) {
  const TaskLayout layout = TaskLayout::of(tasks);
  TaskDataset pooled;
  pooled.id = "global";
  std::size_t n = 0;
  for (const auto& t : tasks) n += t.samples();
  pooled.y.resize(static_cast<Eigen::Index>(n));
  pooled.z.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(layout.scalar_features));
  Eigen::Index row = 0;
  for (const auto& t : tasks) {
    pooled.y.segment(row, t.y.size()) = t.y;
    if (layout.has_scalar()) pooled.z.middleRows(row, t.z.rows()) = t.z;
    pooled.x.insert(pooled.x.end(), t.x.begin(), t.x.end());
    row += t.y.size();
  }
  const std::size_t dim = coefficient_count(layout);
  return to_model("global", fit_local_glm(pooled, family, n < dim ? ridge : 0.0), layout);
}

std::vector<PersonalizedModel> fit_lr_tucker(const std::vector<TaskDataset>& tasks, Family family,
                                             const std::vector<std::size_t>& tensor_ranks,
                                             std::array<std::size_t, 2> scalar_ranks,
                                             double ridge) {
  const TaskLayout layout = TaskLayout::of(tasks);
  auto models = fit_local(tasks, family, ridge);
  const std::size_t n = tasks.size();
  if (layout.has_tensor()) {
    Shape stacked_shape{n};
    stacked_shape.insert(stacked_shape.end(), layout.tensor_shape.begin(), layout.tensor_shape.end());
    std::vector<double> data;
    data.reserve(shape_size(stacked_shape));
    for (const auto& m : models) data.insert(data.end(), m.b.data().begin(), m.b.data().end());
    const DenseTensor smoothed = tucker_reconstruct(hosvd(DenseTensor(stacked_shape, std::move(data)), tensor_ranks));
    const std::size_t dim = layout.tensor_size();
    for (std::size_t i = 0; i < n; ++i)
      models[i].b = DenseTensor(layout.tensor_shape,
                                std::vector<double>(smoothed.data().begin() + i * dim,
                                                    smoothed.data().begin() + (i + 1) * dim));
  }
  if (layout.has_scalar()) {
    Eigen::MatrixXd gamma(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(layout.scalar_features));
    for (std::size_t i = 0; i < n; ++i) gamma.row(static_cast<Eigen::Index>(i)) = models[i].gamma.transpose();
    const Eigen::MatrixXd smoothed =
        tucker_reconstruct(hosvd(DenseTensor::from_matrix(gamma), {scalar_ranks[0], scalar_ranks[1]})).as_matrix();
    for (std::size_t i = 0; i < n; ++i) models[i].gamma = smoothed.row(static_cast<Eigen::Index>(i)).transpose();
  }
  return models;
}

}  // namespace tenmtl
