#include "tenmtl/baselines.hpp"
#include "tenmtl/glm.hpp"
#include "tenmtl/model.hpp"
#include "tenmtl/simgen.hpp"
#include "tenmtl/tensor.hpp"
#include "tenmtl/tuning.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace tenmtl;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

DenseTensor to_tensor(const Array& a) {
  if (a.ndim() == 0) throw ShapeError("expected an array with at least one axis");
  Shape shape(a.shape(), a.shape() + a.ndim());
  return {shape, std::vector<double>(a.data(), a.data() + a.size())};
}

Array to_array(const DenseTensor& t) {
  if (t.empty()) return Array(std::vector<py::ssize_t>{0});
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

// x stacked on a leading sample axis.
std::vector<DenseTensor> split_samples(const Array& x) {
  std::vector<DenseTensor> out;
  if (x.ndim() < 2) throw ShapeError("x must have shape (n, I_1, ..., I_m)");
  const Shape dims(x.shape() + 1, x.shape() + x.ndim());
  const std::size_t per = shape_size(dims);
  for (py::ssize_t j = 0; j < x.shape(0); ++j)
    out.emplace_back(dims, std::vector<double>(x.data() + j * per, x.data() + (j + 1) * per));
  return out;
}

Array stack_samples(const TaskDataset& t) {
  if (!t.has_tensor()) return Array(std::vector<py::ssize_t>{static_cast<py::ssize_t>(t.samples()), 0});
  std::vector<py::ssize_t> shape{static_cast<py::ssize_t>(t.samples())};
  for (auto d : t.x.front().shape()) shape.push_back(static_cast<py::ssize_t>(d));
  Array out(shape);
  double* dst = out.mutable_data();
  for (const auto& s : t.x) dst = std::copy(s.data().begin(), s.data().end(), dst);
  return out;
}

TaskDataset make_task(std::string id, const Eigen::VectorXd& y, std::optional<Eigen::MatrixXd> z,
                      std::optional<Array> x) {
  TaskDataset t;
  t.id = std::move(id);
  t.y = y;
  t.z = z ? *z : Eigen::MatrixXd(y.size(), 0);
  if (x) t.x = split_samples(*x);
  t.validate();
  return t;
}

py::dict cv_dict(const CvReport& r) {
  py::list rows;
  for (std::size_t k = 0; k < r.tuples.size(); ++k) {
    py::dict row;
    row["tensor_ranks"] = r.tuples[k].tensor_ranks;
    row["scalar_ranks"] = r.tuples[k].scalar_ranks;
    row["lambda"] = r.tuples[k].lambda;
    row["score"] = r.scores[k];
    row["error"] = r.errors[k];
    rows.append(row);
  }
  py::dict out;
  out["scores"] = rows;
  out["selected"] = r.selected;
  out["metric"] = r.metric;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Tensor-based multi-task learning with personalized models";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);

  // --- tensor algebra --------------------------------------------------------
  m.def("matricize", [](const Array& t, std::size_t mode) { return matricize(to_tensor(t), mode); },
        py::arg("tensor"), py::arg("mode"));
  m.def("fold",
        [](const Eigen::MatrixXd& mat, std::size_t mode, const Shape& shape) { return to_array(fold(mat, mode, shape)); },
        py::arg("matrix"), py::arg("mode"), py::arg("shape"));
  m.def("mode_product",
        [](const Array& t, const Eigen::MatrixXd& a, std::size_t mode) {
          return to_array(mode_product(to_tensor(t), a, mode));
        },
        py::arg("tensor"), py::arg("matrix"), py::arg("mode"));
  m.def("kronecker", &kronecker);
  m.def("hosvd",
        [](const Array& t, const std::vector<std::size_t>& ranks) {
          const TuckerFactors f = hosvd(to_tensor(t), ranks);
          return py::make_tuple(to_array(f.core), f.factors);
        },
        py::arg("tensor"), py::arg("ranks"));
  m.def("tucker_reconstruct",
        [](const Array& core, const std::vector<Eigen::MatrixXd>& factors) {
          return to_array(tucker_reconstruct({to_tensor(core), factors}));
        },
        py::arg("core"), py::arg("factors"));

  // --- GLM -------------------------------------------------------------------
  m.def("fit_glm",
        [](const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::optional<Eigen::VectorXd> offset, double l1,
           double l2, const std::string& family, double tol) {
          GlmProblem p;
          p.design = x;
          p.response = y;
          p.offset = offset ? *offset : Eigen::VectorXd::Zero(y.size());
          p.l1_penalty = l1;
          p.l2_penalty = l2;
          p.family = Family::parse(family);
          const GlmSolution s = fit_glm(p, {}, tol);
          py::dict out;
          out["coefficients"] = s.coefficients;
          out["objective"] = s.objective;
          out["kkt_residual"] = s.kkt_residual;
          out["converged"] = s.converged;
          out["iterations"] = s.iterations;
          return out;
        },
        py::arg("x"), py::arg("y"), py::arg("offset") = py::none(), py::arg("l1") = 0.0, py::arg("l2") = 0.0,
        py::arg("family") = "gaussian", py::arg("tol") = 1e-8);

  // --- data ------------------------------------------------------------------
  py::class_<TaskDataset>(m, "Task")
      .def(py::init(&make_task), py::arg("id"), py::arg("y"), py::arg("z") = py::none(), py::arg("x") = py::none())
      .def_readonly("id", &TaskDataset::id)
      .def_readonly("y", &TaskDataset::y)
      .def_readonly("z", &TaskDataset::z)
      .def_property_readonly("x", &stack_samples)
      .def_property_readonly("samples", &TaskDataset::samples);

  py::class_<ScenarioConfig>(m, "ScenarioConfig")
      .def_static("defaults", [](const std::string& s) { return ScenarioConfig::defaults(parse_scenario(s)); })
      .def_property_readonly("scenario", [](const ScenarioConfig& c) { return scenario_name(c.scenario); })
      .def_readwrite("tasks", &ScenarioConfig::tasks)
      .def_readwrite("n_train", &ScenarioConfig::n_train)
      .def_readwrite("n_test", &ScenarioConfig::n_test)
      .def_readwrite("dims", &ScenarioConfig::dims)
      .def_readwrite("clusters", &ScenarioConfig::clusters)
      .def_readwrite("ranks", &ScenarioConfig::ranks)
      .def_readwrite("beta_x", &ScenarioConfig::beta_x)
      .def_readwrite("sigma_x", &ScenarioConfig::sigma_x)
      .def_readwrite("sigma_u", &ScenarioConfig::sigma_u)
      .def_readwrite("beta_u", &ScenarioConfig::beta_u)
      .def_readwrite("sigma_e", &ScenarioConfig::sigma_e)
      .def_readwrite("sparsity", &ScenarioConfig::sparsity)
      .def_readwrite("seed", &ScenarioConfig::seed);

  m.def("generate", [](const ScenarioConfig& cfg) {
    const GeneratedDataset d = generate(cfg);
    py::dict out;
    out["train"] = d.train_tasks;
    out["test"] = d.test_tasks;
    out["true_B"] = to_array(d.true_B);
    out["true_core"] = to_array(d.true_core);
    out["true_factors"] = d.true_factors;
    out["clusters"] = d.cluster_assignments;
    return out;
  });

  // --- estimator -------------------------------------------------------------
  py::class_<HyperParams>(m, "HyperParams")
      .def(py::init([](std::vector<std::size_t> tensor_ranks, std::array<std::size_t, 2> scalar_ranks, double lam,
                       std::optional<std::size_t> shared, const std::string& family, double epsilon,
                       std::size_t max_iter) {
             HyperParams h;
             h.tensor_ranks = std::move(tensor_ranks);
             h.scalar_ranks = scalar_ranks;
             h.lambda = Penalties::tied(lam);
             h.shared_columns = shared;
             h.family = Family::parse(family);
             h.epsilon = epsilon;
             h.max_iter = max_iter;
             return h;
           }),
           py::arg("tensor_ranks") = std::vector<std::size_t>{}, py::arg("scalar_ranks") = std::array<std::size_t, 2>{0, 0},
           py::arg("lam") = 0.0, py::arg("shared_columns") = py::none(), py::arg("family") = "gaussian",
           py::arg("epsilon") = 1e-5, py::arg("max_iter") = 50)
      .def_readwrite("tensor_ranks", &HyperParams::tensor_ranks)
      .def_readwrite("scalar_ranks", &HyperParams::scalar_ranks)
      .def_readwrite("shared_columns", &HyperParams::shared_columns)
      .def_readwrite("epsilon", &HyperParams::epsilon)
      .def_readwrite("max_iter", &HyperParams::max_iter)
      .def_readwrite("trace_blocks", &HyperParams::trace_blocks)
      .def_property("lambda_g", [](const HyperParams& h) { return h.lambda.g; }, [](HyperParams& h, double v) { h.lambda.g = v; })
      .def_property("lambda_h", [](const HyperParams& h) { return h.lambda.h; }, [](HyperParams& h, double v) { h.lambda.h = v; })
      .def_property("lambda_u", [](const HyperParams& h) { return h.lambda.u; }, [](HyperParams& h, double v) { h.lambda.u = v; })
      .def_property("lambda_v", [](const HyperParams& h) { return h.lambda.v; }, [](HyperParams& h, double v) { h.lambda.v = v; })
      .def_property_readonly("family", [](const HyperParams& h) { return std::string(h.family.name()); });

  py::class_<TuckerState>(m, "TuckerState")
      .def_readonly("task_ids", &TuckerState::task_ids)
      .def_readonly("w0", &TuckerState::w0)
      .def_readonly("f0", &TuckerState::f0)
      .def_readonly("u", &TuckerState::u)
      .def_property_readonly("g", [](const TuckerState& s) { return to_array(s.g); })
      .def_readonly("d0", &TuckerState::d0)
      .def_readonly("v1", &TuckerState::v1)
      .def_readonly("h", &TuckerState::h)
      .def("u0", &TuckerState::u0)
      .def("v0", &TuckerState::v0);

  py::class_<FitTrace>(m, "FitTrace")
      .def_readonly("objectives", &FitTrace::objectives)
      .def_readonly("block_objectives", &FitTrace::block_objectives)
      .def_readonly("iterations", &FitTrace::iterations)
      .def_readonly("converged", &FitTrace::converged)
      .def_readonly("unconverged_subproblems", &FitTrace::unconverged_subproblems);

  py::class_<FitResult>(m, "FitResult").def_readonly("state", &FitResult::state).def_readonly("trace", &FitResult::trace);

  py::class_<PersonalizedModel>(m, "Model")
      .def_readonly("task_id", &PersonalizedModel::task_id)
      .def_property_readonly("b", [](const PersonalizedModel& p) { return to_array(p.b); })
      .def_readonly("gamma", &PersonalizedModel::gamma);

  m.def("fit", &fit, py::arg("tasks"), py::arg("hyper"), py::call_guard<py::gil_scoped_release>());
  m.def("objective", &objective, py::arg("state"), py::arg("tasks"), py::arg("hyper"));
  m.def("reconstruct_models", &reconstruct_models, py::arg("state"));
  m.def("predict",
        [](const PersonalizedModel& model, const TaskDataset& task, const std::string& family) {
          return predict_task(model, task, Family::parse(family));
        },
        py::arg("model"), py::arg("task"), py::arg("family") = "gaussian");
  m.def("implied_covariance",
        [](const Eigen::MatrixXd& core, const Eigen::MatrixXd& u1) {
          const ImpliedCovariance c = implied_covariance(core, u1);
          return py::make_tuple(c.covariance, c.rank);
        },
        py::arg("core"), py::arg("u1"));

  // --- baselines and tuning ----------------------------------------------------
  m.def("fit_local",
        [](const std::vector<TaskDataset>& tasks, const std::string& family, double ridge) {
          return fit_local(tasks, Family::parse(family), ridge);
        },
        py::arg("tasks"), py::arg("family") = "gaussian", py::arg("ridge") = kDefaultRidge);
  m.def("fit_global",
        [](const std::vector<TaskDataset>& tasks, const std::string& family, double ridge) {
          return fit_global(tasks, Family::parse(family), ridge);
        },
        py::arg("tasks"), py::arg("family") = "gaussian", py::arg("ridge") = kDefaultRidge);
  m.def("fit_lr_tucker",
        [](const std::vector<TaskDataset>& tasks, const std::vector<std::size_t>& ranks,
           std::array<std::size_t, 2> scalar_ranks, const std::string& family, double ridge) {
          return fit_lr_tucker(tasks, Family::parse(family), ranks, scalar_ranks, ridge);
        },
        py::arg("tasks"), py::arg("tensor_ranks"), py::arg("scalar_ranks") = std::array<std::size_t, 2>{0, 0},
        py::arg("family") = "gaussian", py::arg("ridge") = kDefaultRidge);
  m.def("task_rmse",
        [](const std::vector<PersonalizedModel>& models, const std::vector<TaskDataset>& tasks, const std::string& family) {
          return task_rmse(models, tasks, Family::parse(family));
        },
        py::arg("models"), py::arg("tasks"), py::arg("family") = "gaussian");
  m.def("kfold_cv",
        [](const std::vector<TaskDataset>& tasks, std::vector<std::size_t> r0, std::vector<std::size_t> r_feature,
           std::vector<double> lambdas, std::vector<std::size_t> t0, std::vector<std::size_t> t1, std::size_t folds,
           std::uint64_t seed, const HyperParams& base, std::size_t threads) {
          Grid g;
          g.r0 = std::move(r0);
          g.r_feature = std::move(r_feature);
          g.lambdas = std::move(lambdas);
          g.t0 = std::move(t0);
          g.t1 = std::move(t1);
          g.folds = folds;
          g.seed = seed;
          py::gil_scoped_release release;
          const CvReport r = kfold_cv(tasks, g, base, threads);
          py::gil_scoped_acquire acquire;
          return cv_dict(r);
        },
        py::arg("tasks"), py::arg("r0") = Grid{}.r0, py::arg("r_feature") = Grid{}.r_feature,
        py::arg("lambdas") = Grid{}.lambdas, py::arg("t0") = Grid{}.t0, py::arg("t1") = Grid{}.t1,
        py::arg("folds") = 5, py::arg("seed") = 0, py::arg("base") = HyperParams{}, py::arg("threads") = 1);
}
