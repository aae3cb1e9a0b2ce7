#include "tenmtl/tuning.hpp"

#include "tenmtl/baselines.hpp"
#include "tenmtl/parallel.hpp"
#include "tenmtl/random.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace tenmtl {

double rmse(const Eigen::VectorXd& predictions, const Eigen::VectorXd& truth) {
  if (predictions.size() != truth.size()) throw ShapeError("rmse: length mismatch");
  if (truth.size() == 0) throw std::invalid_argument("rmse: empty input");
  return std::sqrt((predictions - truth).squaredNorm() / static_cast<double>(truth.size()));
}

double classification_accuracy(const Eigen::VectorXd& probabilities, const Eigen::VectorXd& labels,
                               double threshold) {
  if (probabilities.size() != labels.size()) throw ShapeError("classification_accuracy: length mismatch");
  if (labels.size() == 0) throw std::invalid_argument("classification_accuracy: empty input");
  Eigen::Index correct = 0;
  for (Eigen::Index j = 0; j < labels.size(); ++j) {
    if (labels(j) != 0.0 && labels(j) != 1.0)
      throw std::invalid_argument("classification_accuracy: labels must be 0 or 1");
    const double predicted = probabilities(j) >= threshold ? 1.0 : 0.0;
    if (predicted == labels(j)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double mean(const std::vector<double>& values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

double sample_std(const std::vector<double>& values) {
  if (values.size() < 2) return 0.0;
  const double m = mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

// ---------------------------------------------------------------------------
// Grid

std::size_t GridTuple::total_rank() const {
  std::size_t total = scalar_ranks[0] + scalar_ranks[1];
  for (auto r : tensor_ranks) total += r;
  return total;
}

HyperParams GridTuple::apply(HyperParams base) const {
  base.tensor_ranks = tensor_ranks;
  base.scalar_ranks = scalar_ranks;
  base.lambda = Penalties::tied(lambda);
  base.shared_columns = shared_columns;
  return base;
}

std::string GridTuple::describe() const {
  std::ostringstream os;
  os << "R=[";
  for (std::size_t k = 0; k < tensor_ranks.size(); ++k) os << (k ? "," : "") << tensor_ranks[k];
  os << "] T=[" << scalar_ranks[0] << "," << scalar_ranks[1] << "] lambda=" << lambda;
  if (shared_columns) os << " Q0=" << *shared_columns;
  return os.str();
}

void Grid::validate() const {
  if (r0.empty() || r_feature.empty() || t0.empty() || t1.empty() || lambdas.empty() || shared.empty())
    throw std::invalid_argument("grid: candidate lists must be non-empty");
  if (folds < 2) throw std::invalid_argument("grid: at least two folds are required");
  for (double l : lambdas)
    if (!(l >= 0.0)) throw std::invalid_argument("grid: lambda candidates must be nonnegative");
}

std::vector<GridTuple> Grid::expand(const TaskLayout& layout) const {
  validate();
  const std::vector<std::size_t> none{0};
  const auto& r0s = layout.has_tensor() ? r0 : none;
  const auto& rfs = layout.has_tensor() ? r_feature : none;
  const auto& t0s = layout.has_scalar() ? t0 : none;
  const auto& t1s = layout.has_scalar() ? t1 : none;
  std::vector<GridTuple> out;
  for (auto a : r0s)
    for (auto b : rfs)
      for (auto c : t0s)
        for (auto d : t1s)
          for (const auto& q : shared)
            for (double l : lambdas) {
              GridTuple t;
              if (layout.has_tensor()) {
                t.tensor_ranks.assign(layout.tensor_order() + 1, b);
                t.tensor_ranks[0] = a;
              }
              t.scalar_ranks = {c, d};
              t.lambda = l;
              t.shared_columns = q;
              try {
                HyperParams probe = t.apply({});
                probe.validate(layout);
              } catch (const std::exception&) {
                continue;
              }
              out.push_back(std::move(t));
            }
  if (out.empty()) throw std::invalid_argument("grid: no tuple is valid for the data dimensions");
  return out;
}

std::vector<std::vector<std::size_t>> assign_folds(const std::vector<TaskDataset>& tasks,
                                                   std::size_t k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("cross-validation needs at least two folds");
  std::vector<std::vector<std::size_t>> folds(tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const std::size_t n = tasks[i].samples();
    if (n < k)
      throw std::invalid_argument("task '" + tasks[i].id + "' has " + std::to_string(n) +
                                  " samples, fewer than the " + std::to_string(k) + " folds");
    Rng rng(derive_seed(seed, i));
    const auto order = rng.permutation(n);
    folds[i].resize(n);
    for (std::size_t pos = 0; pos < n; ++pos) folds[i][order[pos]] = pos % k;
  }
  return folds;
}

std::size_t select_best(const std::vector<GridTuple>& tuples, const std::vector<double>& scores) {
  if (tuples.empty() || tuples.size() != scores.size())
    throw std::invalid_argument("select_best: tuples and scores must be non-empty and aligned");
  std::size_t best = 0;
  for (std::size_t t = 1; t < tuples.size(); ++t) {
    const double a = scores[t], b = scores[best];
    if (std::isnan(a)) continue;
    bool better = std::isnan(b) || a < b;
    if (!better && a == b) {
      const auto ra = tuples[t].total_rank(), rb = tuples[best].total_rank();
      better = ra < rb || (ra == rb && tuples[t].lambda < tuples[best].lambda);
    }
    if (better) best = t;
  }
  return best;
}

namespace {

struct FoldSplit {
  std::vector<TaskDataset> train;
  std::vector<TaskDataset> holdout;
};

std::vector<FoldSplit> split_folds(const std::vector<TaskDataset>& tasks,
                                   const std::vector<std::vector<std::size_t>>& folds, std::size_t k) {
  std::vector<FoldSplit> out(k);
  for (std::size_t f = 0; f < k; ++f)
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      std::vector<std::size_t> in, out_rows;
      for (std::size_t j = 0; j < tasks[i].samples(); ++j) (folds[i][j] == f ? out_rows : in).push_back(j);
      out[f].train.push_back(tasks[i].select(in));
      out[f].holdout.push_back(tasks[i].select(out_rows));
    }
  return out;
}

}  // namespace

Eigen::VectorXd predict_task(const PersonalizedModel& m, const TaskDataset& task, Family family) {
  Eigen::VectorXd out(task.y.size());
  for (std::size_t j = 0; j < task.samples(); ++j) {
    const Eigen::VectorXd z = task.z.cols() > 0 ? Eigen::VectorXd(task.z.row(static_cast<Eigen::Index>(j)).transpose())
                                                : Eigen::VectorXd();
    out(static_cast<Eigen::Index>(j)) = predict(m, z, task.has_tensor() ? &task.x[j] : nullptr, family);
  }
  return out;
}

namespace {

// Pooled held-out RMSE (Gaussian) or misclassification rate (Bernoulli).
double holdout_score(const std::vector<PersonalizedModel>& models, const std::vector<TaskDataset>& holdout,
                     Family family) {
  std::vector<double> pred, truth;
  for (std::size_t i = 0; i < holdout.size(); ++i) {
    const Eigen::VectorXd p = predict_task(models[i], holdout[i], family);
    pred.insert(pred.end(), p.begin(), p.end());
    truth.insert(truth.end(), holdout[i].y.begin(), holdout[i].y.end());
  }
  const Eigen::Map<const Eigen::VectorXd> p(pred.data(), static_cast<Eigen::Index>(pred.size()));
  const Eigen::Map<const Eigen::VectorXd> t(truth.data(), static_cast<Eigen::Index>(truth.size()));
  if (family.kind == FamilyKind::Bernoulli) return 1.0 - classification_accuracy(p, t);
  return rmse(p, t);
}

}  // namespace

CvReport kfold_cv(const std::vector<TaskDataset>& tasks, const Grid& grid, const HyperParams& base,
                  std::size_t threads) {
  const TaskLayout layout = TaskLayout::of(tasks);
  CvReport report;
  report.tuples = grid.expand(layout);
  report.folds = assign_folds(tasks, grid.folds, grid.seed);
  report.metric = base.family.kind == FamilyKind::Bernoulli ? "error_rate" : "rmse";
  const auto splits = split_folds(tasks, report.folds, grid.folds);

  const std::size_t k = grid.folds;
  const std::size_t n_items = report.tuples.size() * k;
  std::vector<double> fold_scores(n_items, 0.0);
  std::vector<std::string> fold_errors(n_items);
  parallel_for(n_items, threads, [&](std::size_t item) {
    const auto& tuple = report.tuples[item / k];
    const auto& split = splits[item % k];
    try {
      const FitResult fitted = fit(split.train, tuple.apply(base));
      fold_scores[item] = holdout_score(reconstruct_models(fitted.state), split.holdout, base.family);
    } catch (const std::exception& e) {
      fold_scores[item] = std::numeric_limits<double>::infinity();
      fold_errors[item] = e.what();
    }
  });

  report.scores.resize(report.tuples.size());
  report.errors.resize(report.tuples.size());
  for (std::size_t t = 0; t < report.tuples.size(); ++t) {
    double s = 0.0;
    for (std::size_t f = 0; f < k; ++f) {
      s += fold_scores[t * k + f];
      if (report.errors[t].empty() && !fold_errors[t * k + f].empty())
        report.errors[t] = "fold " + std::to_string(f) + ": " + fold_errors[t * k + f];
    }
    report.scores[t] = s / static_cast<double>(k);
  }
  report.selected = select_best(report.tuples, report.scores);
  return report;
}

// ---------------------------------------------------------------------------
// Experiments

std::string method_name(Method m) {
  switch (m) {
    case Method::TenMTL: return "tenmtl";
    case Method::TenMTLVector: return "tenmtl-vector";
    case Method::Local: return "local";
    case Method::Global: return "global";
    case Method::LrTucker: return "lr-tucker";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  for (Method m : {Method::TenMTL, Method::TenMTLVector, Method::Local, Method::Global, Method::LrTucker})
    if (method_name(m) == name) return m;
  throw std::invalid_argument("unknown method '" + name + "'");
}

std::vector<double> task_rmse(const std::vector<PersonalizedModel>& models,
                              const std::vector<TaskDataset>& tasks, Family family) {
  if (models.size() != tasks.size()) throw ShapeError("task_rmse: model and task counts differ");
  std::vector<double> out;
  out.reserve(tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i)
    out.push_back(rmse(predict_task(models[i], tasks[i], family), tasks[i].y));
  return out;
}

void ExperimentConfig::validate() const {
  scenario.validate();
  if (methods.empty()) throw std::invalid_argument("experiment: no methods given");
  if (replications < 1 && seeds.empty()) throw std::invalid_argument("experiment: replications must be positive");
  for (const auto& s : resolved_settings()) {
    ScenarioConfig c = scenario;
    c.beta_u = s.beta_u;
    c.sigma_e = s.sigma_e;
    c.sparsity = s.sparsity;
    c.validate();
  }
  if (tuning == Tuning::CrossValidation) {
    grid.validate();
  } else if (hyper.tensor_ranks.empty()) {
    throw std::invalid_argument("experiment: fixed tuning requires tensor ranks");
  }
  if (!(ridge >= 0.0)) throw std::invalid_argument("experiment: ridge must be nonnegative");
}

std::vector<ExperimentSetting> ExperimentConfig::resolved_settings() const {
  if (!settings.empty()) return settings;
  return {{scenario.beta_u, scenario.sigma_e, scenario.sparsity}};
}

std::uint64_t ExperimentConfig::replication_seed(std::size_t r) const {
  if (!seeds.empty()) return seeds.at(r);
  return derive_seed(master_seed, r);
}

namespace {

std::vector<PersonalizedModel> vector_models(const std::vector<TaskDataset>& train,
                                             const GridTuple& tuple, const HyperParams& base,
                                             std::optional<VectorFitResult>& keep) {
  for (const auto& t : train)
    if (!t.has_tensor() || t.x.front().order() != 1 || t.z.cols() > 0)
      throw std::invalid_argument("tenmtl-vector requires order-1 predictors only");
  VectorFitOptions opt;
  opt.task_rank = tuple.tensor_ranks.at(0);
  opt.feature_rank = tuple.tensor_ranks.at(1);
  opt.lambda_g = opt.lambda_u = tuple.lambda;
  opt.family = base.family;
  opt.epsilon = base.epsilon;
  opt.max_iter = base.max_iter;
  opt.init_ridge = base.init_ridge;
  opt.glm_tol = base.glm_tol;
  keep = fit_vector(flatten_to_scalar(train), opt);
  const Eigen::MatrixXd beta = keep->state.coefficients();
  std::vector<PersonalizedModel> out(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    out[i].task_id = train[i].id;
    const Eigen::VectorXd row = beta.row(static_cast<Eigen::Index>(i)).transpose();
    out[i].b = DenseTensor(train[i].x.front().shape(), {row.begin(), row.end()});
    out[i].gamma.resize(0);
  }
  return out;
}

GridTuple fixed_tuple(const HyperParams& h) {
  GridTuple t;
  t.tensor_ranks = h.tensor_ranks;
  t.scalar_ranks = h.scalar_ranks;
  t.lambda = h.lambda.g;
  t.shared_columns = h.shared_columns;
  return t;
}

}  // namespace

MethodFit fit_method(Method method, const std::vector<TaskDataset>& train, const GridTuple& tuple,
                     const HyperParams& base, double ridge) {
  MethodFit out;
  switch (method) {
    case Method::TenMTL:
      out.tenmtl = fit(train, tuple.apply(base));
      out.models = reconstruct_models(out.tenmtl->state);
      break;
    case Method::TenMTLVector:
      out.models = vector_models(train, tuple, base, out.vector);
      break;
    case Method::Local:
      out.models = fit_local(train, base.family, ridge);
      break;
    case Method::Global:
      out.models.assign(train.size(), fit_global(train, base.family, ridge));
      for (std::size_t i = 0; i < train.size(); ++i) out.models[i].task_id = train[i].id;
      break;
    case Method::LrTucker:
      out.models = fit_lr_tucker(train, base.family, tuple.tensor_ranks, tuple.scalar_ranks, ridge);
      break;
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto settings = cfg.resolved_settings();
  const std::size_t reps = cfg.seeds.empty() ? cfg.replications : cfg.seeds.size();
  const std::size_t n_methods = cfg.methods.size();
  const Family family = cfg.hyper.family;
  const std::size_t n_items = settings.size() * reps;

  std::vector<ReplicationRecord> records(n_items * n_methods);
  parallel_for(n_items, cfg.threads, [&](std::size_t item) {
    const std::size_t s = item / reps, r = item % reps;
    ScenarioConfig sc = cfg.scenario;
    sc.beta_u = settings[s].beta_u;
    sc.sigma_e = settings[s].sigma_e;
    sc.sparsity = settings[s].sparsity;
    sc.seed = cfg.replication_seed(r);

    auto* slot = &records[item * n_methods];
    for (std::size_t m = 0; m < n_methods; ++m) {
      slot[m].setting = s;
      slot[m].replication = r;
      slot[m].seed = sc.seed;
      slot[m].method = cfg.methods[m];
    }
    GeneratedDataset data;
    try {
      data = generate(sc);
    } catch (const std::exception& e) {
      for (std::size_t m = 0; m < n_methods; ++m) slot[m].error = e.what();
      return;
    }

    // Rank/lambda selection is shared by the methods that need it.
    std::optional<GridTuple> tuple;
    std::string tuple_error;
    auto selected = [&]() -> const GridTuple& {
      if (!tuple && tuple_error.empty()) {
        try {
          if (cfg.tuning == Tuning::CrossValidation) {
            Grid grid = cfg.grid;
            grid.seed = derive_seed(sc.seed, 0xC5);
            const CvReport report = kfold_cv(data.train_tasks, grid, cfg.hyper, 1);
            if (!std::isfinite(report.scores[report.selected]))
              throw std::runtime_error("every grid tuple failed: " + report.errors[report.selected]);
            tuple = report.best();
          } else {
            tuple = fixed_tuple(cfg.hyper);
          }
        } catch (const std::exception& e) {
          tuple_error = e.what();
        }
      }
      if (!tuple) throw std::runtime_error("hyperparameter selection failed: " + tuple_error);
      return *tuple;
    };

    for (std::size_t m = 0; m < n_methods; ++m) {
      auto& rec = slot[m];
      try {
        const bool tuned = rec.method != Method::Local && rec.method != Method::Global;
        const GridTuple t = tuned ? selected() : GridTuple{};
        if (tuned) rec.selected = t;
        const auto models = fit_method(rec.method, data.train_tasks, t, cfg.hyper, cfg.ridge).models;
        rec.task_rmse = task_rmse(models, data.test_tasks, family);
        rec.rmse = mean(rec.task_rmse);
      } catch (const std::exception& e) {
        rec.error = e.what();
      }
    }
  });

  ExperimentResult result;
  result.records = std::move(records);
  for (std::size_t s = 0; s < settings.size(); ++s)
    for (std::size_t m = 0; m < n_methods; ++m) {
      std::vector<double> values;
      for (std::size_t r = 0; r < reps; ++r) {
        const auto& rec = result.records[(s * reps + r) * n_methods + m];
        if (rec.error.empty()) values.push_back(rec.rmse);
      }
      ExperimentRow row;
      row.scenario = cfg.scenario.scenario;
      row.setting = settings[s];
      row.method = cfg.methods[m];
      row.mean_rmse = mean(values);
      row.std_rmse = sample_std(values);
      row.reps = values.size();
      result.rows.push_back(row);
    }
  return result;
}

}  // namespace tenmtl
