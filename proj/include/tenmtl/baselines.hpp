#pragma once

#include "tenmtl/model.hpp"

#include <array>
#include <vector>

namespace tenmtl {

enum class BaselineKind { Local, Global, LrTucker };

inline constexpr double kDefaultRidge = 1e-6;

/// Independent GLM per task on [vec(X), z]; the ridge is applied only to
/// tasks with fewer samples than coefficients.
std::vector<PersonalizedModel> fit_local(const std::vector<TaskDataset>& tasks, Family family,
                                         double ridge = kDefaultRidge);

/// One GLM on the pooled samples of every task (ridge when underdetermined).
PersonalizedModel fit_global(const std::vector<TaskDataset>& tasks, Family family,
                             double ridge = kDefaultRidge);

/// Local fits smoothed by a truncated HOSVD of the stacked parameters:
/// ranks [R_0..R_m] on the tensor side and [T_0, T_1] on the scalar side.
std::vector<PersonalizedModel> fit_lr_tucker(const std::vector<TaskDataset>& tasks, Family family,
                                             const std::vector<std::size_t>& tensor_ranks,
                                             std::array<std::size_t, 2> scalar_ranks,
                                             double ridge = kDefaultRidge);

}  // namespace tenmtl
