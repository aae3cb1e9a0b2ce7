#include "tenmtl/simgen.hpp"

#include "tenmtl/random.hpp"

#include <cmath>
#include <stdexcept>

namespace tenmtl {

std::string scenario_name(Scenario s) {
  switch (s) {
    case Scenario::I: return "I";
    case Scenario::II: return "II";
    case Scenario::III: return "III";
  }
  return "?";
}

Scenario parse_scenario(const std::string& name) {
  if (name == "I" || name == "1") return Scenario::I;
  if (name == "II" || name == "2") return Scenario::II;
  if (name == "III" || name == "3") return Scenario::III;
  throw std::invalid_argument("unknown scenario '" + name + "'");
}

void ScenarioConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("scenario config: " + msg); };
  if (tasks < 1) fail("tasks must be positive");
  if (n_train < 1) fail("n_train must be positive");
  if (dims.empty()) fail("dims must be non-empty");
  for (auto d : dims)
    if (d < 1) fail("dims must be positive");
  if (scenario != Scenario::III && dims.size() != 1) fail("scenarios I and II take a single feature dimension");
  if (clusters < 1 || clusters > tasks) fail("clusters must lie in [1, tasks]");
  if (ranks.size() != dims.size() + 1) fail("ranks must have one entry per mode plus the task mode");
  if (ranks[0] < 1 || ranks[0] > tasks) fail("R_0 must lie in [1, tasks]");
  for (std::size_t d = 0; d < dims.size(); ++d)
    if (ranks[d + 1] < 1 || ranks[d + 1] > dims[d]) fail("feature ranks must lie in [1, I_d]");
  for (double s : {beta_x, sigma_x, sigma_u, beta_u, sigma_e, sigma_group, sigma_nongroup})
    if (!(s >= 0.0)) fail("dispersion parameters must be nonnegative");
  if (!(sparsity >= 0.0 && sparsity <= 1.0)) fail("sparsity must lie in [0, 1]");
  if (scenario == Scenario::II) {
    if (n_groups > dims[0]) fail("n_groups exceeds the feature count");
    if (!(task_subset_min >= 0.0 && task_subset_min <= task_subset_max && task_subset_max <= 1.0))
      fail("task subset fractions must satisfy 0 <= min <= max <= 1");
  }
}

ScenarioConfig ScenarioConfig::defaults(Scenario s) {
  ScenarioConfig c;
  c.scenario = s;
  if (s == Scenario::III) {
    c.tasks = 10;
    c.dims = {4, 5};
    c.clusters = 2;
    c.ranks = {2, 2, 2};
    c.beta_u = 0.5;
    c.sigma_e = 0.1;
  } else if (s == Scenario::II) {
    c.sigma_e = 1.0;
  }
  return c;
}

DenseTensor GeneratedDataset::true_coefficients(std::size_t i) const {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(true_B.dim(0)));
  e(static_cast<Eigen::Index>(i)) = 1.0;
  return contract(true_B, e, 0);
}

namespace {

DenseTensor sparse_core(const std::vector<std::size_t>& ranks, double sparsity, Rng& rng) {
  DenseTensor core{Shape(ranks.begin(), ranks.end())};
  for (std::size_t k = 0; k < core.size(); ++k) core[k] = rng.normal();
  const auto zeros = static_cast<std::size_t>(std::llround(sparsity * static_cast<double>(core.size())));
  for (auto k : rng.sample_without_replacement(core.size(), zeros)) core[k] = 0.0;
  return core;
}

Eigen::MatrixXd task_factor(const ScenarioConfig& cfg, const std::vector<std::size_t>& cluster,
                            Rng& rng) {
  std::vector<double> p(cfg.clusters);
  for (auto& v : p) v = rng.normal(1.0, cfg.beta_u);
  const auto n = static_cast<Eigen::Index>(cfg.tasks);
  const auto r0 = static_cast<Eigen::Index>(cfg.ranks[0]);
  Eigen::MatrixXd u0(n, r0);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index r = 0; r < r0; ++r) u0(i, r) = rng.normal(p[cluster[i]], cfg.sigma_u);
  return u0;
}

Eigen::MatrixXd gaussian_factor(std::size_t rows, std::size_t cols, Rng& rng) {
  Eigen::MatrixXd u(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < u.rows(); ++i)
    for (Eigen::Index j = 0; j < u.cols(); ++j) u(i, j) = rng.normal();
  return u;
}

// Columns with a random in-group index subset; subset sizes are drawn per
// column when `size_min != size_max`.
Eigen::MatrixXd grouped_factor(std::size_t rows, std::size_t cols, std::size_t size_min,
                               std::size_t size_max, const ScenarioConfig& cfg, Rng& rng) {
  Eigen::MatrixXd u(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index c = 0; c < u.cols(); ++c) {
    const std::size_t size = size_min + rng.index(size_max - size_min + 1);
    std::vector<char> in_group(rows, 0);
    for (auto k : rng.sample_without_replacement(rows, size)) in_group[k] = 1;
    for (Eigen::Index r = 0; r < u.rows(); ++r)
      u(r, c) = in_group[r] ? rng.normal(cfg.beta_group, cfg.sigma_group)
                            : rng.normal(0.0, cfg.sigma_nongroup);
  }
  return u;
}

GeneratedDataset assemble(const ScenarioConfig& cfg, double h_mean, bool grouped) {
  cfg.validate();
  Rng rng(cfg.seed);
  GeneratedDataset out;
  const std::size_t n_tasks = cfg.tasks;

  out.cluster_assignments.resize(n_tasks);
  for (auto& c : out.cluster_assignments) c = rng.index(cfg.clusters);
  std::vector<double> h(cfg.clusters);
  for (auto& v : h) v = rng.normal(h_mean, cfg.beta_x);

  out.true_core = sparse_core(cfg.ranks, cfg.sparsity, rng);
  if (grouped) {
    const auto lo = static_cast<std::size_t>(std::ceil(cfg.task_subset_min * static_cast<double>(n_tasks) - 1e-12));
    const auto hi = std::max(lo, static_cast<std::size_t>(std::floor(cfg.task_subset_max * static_cast<double>(n_tasks) + 1e-12)));
    out.true_factors.push_back(grouped_factor(n_tasks, cfg.ranks[0], lo, hi, cfg, rng));
    out.true_factors.push_back(grouped_factor(cfg.dims[0], cfg.ranks[1], cfg.n_groups, cfg.n_groups, cfg, rng));
  } else {
    out.true_factors.push_back(task_factor(cfg, out.cluster_assignments, rng));
    for (std::size_t d = 0; d < cfg.dims.size(); ++d)
      out.true_factors.push_back(gaussian_factor(cfg.dims[d], cfg.ranks[d + 1], rng));
  }
  out.true_B = tucker_reconstruct({out.true_core, out.true_factors});

  const std::size_t dim = shape_size(cfg.dims);
  for (std::size_t i = 0; i < n_tasks; ++i) {
    const DenseTensor b = DenseTensor(cfg.dims, std::vector<double>(out.true_B.data().begin() + i * dim,
                                                                   out.true_B.data().begin() + (i + 1) * dim));
    const double mean = h[out.cluster_assignments[i]];
    auto draw = [&](std::size_t n) {
      TaskDataset t;
      t.id = std::to_string(i);
      t.y.resize(static_cast<Eigen::Index>(n));
      t.z.resize(static_cast<Eigen::Index>(n), 0);
      t.x.reserve(n);
      for (std::size_t j = 0; j < n; ++j) {
        std::vector<double> x(dim);
        for (auto& v : x) v = rng.normal(mean, cfg.sigma_x);
        DenseTensor xt(cfg.dims, std::move(x));
        t.y(static_cast<Eigen::Index>(j)) = inner_product(b, xt) + rng.normal(0.0, cfg.sigma_e);
        t.x.push_back(std::move(xt));
      }
      return t;
    };
    out.train_tasks.push_back(draw(cfg.n_train));
    out.test_tasks.push_back(draw(cfg.n_test));
  }
  return out;
}

void require(const ScenarioConfig& cfg, Scenario s) {
  if (cfg.scenario != s)
    throw std::invalid_argument("scenario config is for scenario " + scenario_name(cfg.scenario) +
                                ", expected " + scenario_name(s));
}

}  // namespace

GeneratedDataset generate_scenario1(const ScenarioConfig& cfg) {
  require(cfg, Scenario::I);
  return assemble(cfg, 1.0, false);
}

GeneratedDataset generate_scenario2(const ScenarioConfig& cfg) {
  require(cfg, Scenario::II);
  return assemble(cfg, 1.0, true);
}

GeneratedDataset generate_scenario3(const ScenarioConfig& cfg) {
  require(cfg, Scenario::III);
  return assemble(cfg, 0.0, false);
}

GeneratedDataset generate(const ScenarioConfig& cfg) {
  switch (cfg.scenario) {
    case Scenario::I: return generate_scenario1(cfg);
    case Scenario::II: return generate_scenario2(cfg);
    case Scenario::III: return generate_scenario3(cfg);
  }
  throw std::invalid_argument("unknown scenario");
}

}  // namespace tenmtl
