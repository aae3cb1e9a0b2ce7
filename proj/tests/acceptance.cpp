// Acceptance checks: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (0 when everything passes).
//
//   acceptance [--reps N] [--threads T] [--only K]

#include "support.hpp"

#include "tenmtl/baselines.hpp"
#include "tenmtl/glm.hpp"
#include "tenmtl/io.hpp"
#include "tenmtl/model.hpp"
#include "tenmtl/parallel.hpp"
#include "tenmtl/simgen.hpp"
#include "tenmtl/tuning.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <sys/wait.h>

using namespace tenmtl;
using namespace testsupport;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

std::string fmt(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

struct Options {
  std::size_t reps = 30;
  std::size_t threads = 0;
  int only = 0;
};

double row_mean(const ExperimentResult& r, std::size_t setting_index, Method m, std::size_t n_methods,
                const std::vector<Method>& order) {
  for (std::size_t k = 0; k < n_methods; ++k)
    if (order[k] == m) return r.rows[setting_index * n_methods + k].mean_rmse;
  throw std::logic_error("method not in experiment");
}

ExperimentConfig study(Scenario s, std::vector<Method> methods, const Options& o) {
  ExperimentConfig cfg;
  cfg.scenario = ScenarioConfig::defaults(s);
  cfg.methods = std::move(methods);
  cfg.replications = o.reps;
  cfg.threads = resolve_threads(o.threads);
  cfg.tuning = Tuning::CrossValidation;
  return cfg;
}

void describe_rows(Outcome& out, const ExperimentResult& r, const ExperimentConfig& cfg, std::size_t setting) {
  for (std::size_t k = 0; k < cfg.methods.size(); ++k) {
    const auto& row = r.rows[setting * cfg.methods.size() + k];
    out.detail << " " << method_name(row.method) << "=" << fmt(row.mean_rmse) << "(" << fmt(row.std_rmse) << ",n="
               << row.reps << ")";
  }
}

// --- criteria ---------------------------------------------------------------

Outcome criterion1(const Options& o, ExperimentResult& kept) {
  Outcome out;
  ExperimentConfig cfg = study(Scenario::I, {Method::TenMTL, Method::LrTucker, Method::Local, Method::Global}, o);
  cfg.settings = {{0.0, 0.5, 0.4}};
  const auto t0 = Clock::now();
  kept = run_experiment(cfg);
  const double core_seconds = seconds_since(t0) * static_cast<double>(cfg.threads);
  const double tm = row_mean(kept, 0, Method::TenMTL, 4, cfg.methods);
  const double lrt = row_mean(kept, 0, Method::LrTucker, 4, cfg.methods);
  const double local = row_mean(kept, 0, Method::Local, 4, cfg.methods);
  out.detail << "scenario I beta_u=0 reps=" << cfg.replications << ":";
  describe_rows(out, kept, cfg, 0);
  out.detail << " core-seconds=" << fmt(core_seconds, 0);
  out.require(tm >= 0.45 && tm <= 0.75, "tenmtl mean in [0.45, 0.75]");
  out.require(tm < local, "tenmtl < local");
  out.require(tm < lrt, "tenmtl < lr-tucker");
  out.require(core_seconds <= 600.0, "runtime <= 10 min per core");
  return out;
}

Outcome criterion2(const Options& o, const ExperimentResult& first) {
  Outcome out;
  ExperimentConfig cfg = study(Scenario::I, {Method::TenMTL, Method::Global}, o);
  cfg.settings = {{1.0, 0.5, 0.4}};
  const ExperimentResult r = run_experiment(cfg);
  const double tm = r.rows[0].mean_rmse, global = r.rows[1].mean_rmse;
  out.detail << "scenario I beta_u=1:";
  describe_rows(out, r, cfg, 0);

  ExperimentConfig sweep = study(Scenario::I, {Method::Global}, o);
  sweep.tuning = Tuning::Fixed;  // global needs no tuning
  sweep.hyper.tensor_ranks = {3, 4};
  sweep.settings = {{0.0, 0.5, 0.4}, {0.2, 0.5, 0.4}, {0.5, 0.5, 0.4}, {1.0, 0.5, 0.4}};
  const ExperimentResult g = run_experiment(sweep);
  out.detail << "; global over beta_u {0,0.2,0.5,1}:";
  bool monotone = true;
  for (std::size_t s = 0; s < 4; ++s) {
    out.detail << " " << fmt(g.rows[s].mean_rmse);
    if (s > 0 && g.rows[s].mean_rmse < g.rows[s - 1].mean_rmse) monotone = false;
  }
  // the beta_u = 0 global mean is shared with criterion 1 through common seeds
  if (!first.rows.empty()) {
    const double c1 = first.rows[3].mean_rmse;
    out.require(std::abs(c1 - g.rows[0].mean_rmse) <= 1e-12, "global at beta_u=0 reproduces criterion 1");
  }
  out.require(tm >= 0.45 && tm <= 0.80, "tenmtl mean in [0.45, 0.80]");
  out.require(global > 1.5, "global mean > 1.5");
  out.require(monotone, "global non-decreasing in beta_u");
  return out;
}

Outcome criterion3(const Options& o) {
  Outcome out;
  ExperimentConfig cfg = study(Scenario::II, {Method::TenMTL, Method::LrTucker, Method::Local, Method::Global}, o);
  cfg.settings = {{0.0, 1.0, 0.4}};
  const ExperimentResult r = run_experiment(cfg);
  const double tm = r.rows[0].mean_rmse, lrt = r.rows[1].mean_rmse, local = r.rows[2].mean_rmse;
  out.detail << "scenario II sigma_e=1:";
  describe_rows(out, r, cfg, 0);
  out.require(tm < lrt, "tenmtl < lr-tucker");
  out.require(lrt < local, "lr-tucker < local");
  out.require(tm >= 0.95 && tm <= 1.35, "tenmtl mean in [0.95, 1.35]");
  return out;
}

Outcome criterion4(const Options& o) {
  Outcome out;
  ExperimentConfig cfg = study(Scenario::III, {Method::TenMTL, Method::LrTucker, Method::Local, Method::Global}, o);
  cfg.settings = {{0.5, 0.1, 0.4}};
  const ExperimentResult r = run_experiment(cfg);
  const double tm = r.rows[0].mean_rmse, lrt = r.rows[1].mean_rmse, local = r.rows[2].mean_rmse;
  out.detail << "scenario III sigma_e=0.1:";
  describe_rows(out, r, cfg, 0);
  out.require(tm >= 0.09 && tm <= 0.16, "tenmtl mean in [0.09, 0.16]");
  out.require(tm < lrt, "tenmtl < lr-tucker");
  out.require(lrt < local, "lr-tucker < local");

  double worst = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    ScenarioConfig sc = ScenarioConfig::defaults(Scenario::III);
    sc.sigma_e = 0.0;
    sc.seed = seed;
    const GeneratedDataset d = generate(sc);
    HyperParams h;
    h.tensor_ranks = sc.ranks;
    h.lambda = Penalties::tied(0.0);
    h.max_iter = 200;
    h.epsilon = 1e-12;
    const auto models = reconstruct_models(fit(d.train_tasks, h).state);
    worst = std::max(worst, mean(task_rmse(models, d.train_tasks, h.family)));
  }
  out.detail << "; noiseless train rmse (5 seeds, worst)=" << sci(worst);
  out.require(worst <= 1e-3, "noiseless train rmse <= 1e-3");
  return out;
}

GlmProblem random_glm(Rng& rng, Family family, Eigen::Index n, Eigen::Index q) {
  GlmProblem p;
  p.family = family;
  p.design = random_matrix(rng, n, q);
  p.offset = 0.3 * random_vector(rng, n);
  const Eigen::VectorXd truth = random_vector(rng, q);
  p.response.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double eta = p.design.row(j).dot(truth) + p.offset(j);
    p.response(j) = family.kind == FamilyKind::Gaussian ? eta + 0.5 * rng.normal()
                                                        : (rng.uniform() < family.mean(eta) ? 1.0 : 0.0);
  }
  return p;
}

Outcome criterion5() {
  Outcome out;
  Rng rng(501);
  double worst_kkt = 0;
  int declared = 0;
  for (int k = 0; k < 100; ++k) {
    GlmProblem p = random_glm(rng, k % 2 ? Family::bernoulli() : Family::gaussian(), 40,
                              2 + static_cast<Eigen::Index>(rng.index(12)));
    p.l1_penalty = rng.uniform() * lambda_max(p);
    const GlmSolution s = fit_glm(p, {}, 1e-8);
    if (!s.converged) continue;
    ++declared;
    worst_kkt = std::max(worst_kkt, kkt_check(p, s.coefficients));
  }
  out.detail << "(a) converged " << declared << "/100, worst kkt=" << sci(worst_kkt);
  out.require(worst_kkt <= 1e-6, "kkt <= 1e-6");
  out.require(declared == 100, "all instances converge");

  double worst_grad = 0;
  for (int k = 0; k < 40; ++k) {
    GlmProblem p = random_glm(rng, k % 2 ? Family::bernoulli() : Family::gaussian(), 30, 5);
    const Eigen::VectorXd beta = random_vector(rng, 5);
    const Eigen::VectorXd g = glm_gradient(p, beta);
    for (Eigen::Index c = 0; c < 5; ++c) {
      const double h = 1e-6 * std::max(1.0, std::abs(beta(c)));
      Eigen::VectorXd up = beta, dn = beta;
      up(c) += h;
      dn(c) -= h;
      const double num = (glm_objective(p, up) - glm_objective(p, dn)) / (2 * h);
      worst_grad = std::max(worst_grad, std::abs(num - g(c)) / std::max(1.0, std::abs(g(c))));
    }
  }
  out.detail << "; (b) worst gradient relative error=" << sci(worst_grad);
  out.require(worst_grad <= 1e-5, "gradient within 1e-5");

  bool zero = true;
  for (int k = 0; k < 40; ++k) {
    GlmProblem p = random_glm(rng, k % 2 ? Family::bernoulli() : Family::gaussian(), 30, 6);
    p.l1_penalty = lambda_max(p) * (k % 4 == 0 ? 1.0 : 1.0 + rng.uniform());
    zero = zero && fit_glm(p, random_vector(rng, 6)).coefficients == Eigen::VectorXd::Zero(6);
  }
  out.detail << "; (c) lambda >= lambda_max gives zero: " << (zero ? "yes" : "no");
  out.require(zero, "exact zero at lambda_max");
  return out;
}

Outcome criterion6() {
  Outcome out;
  Rng rng(601);
  double worst_rise = 0;
  std::size_t blocks = 0;
  bool shared_identical = true;
  for (int k = 0; k < 20; ++k) {
    const bool bern = k % 3 == 2;
    const std::size_t p = k % 4 == 1 ? 0 : 3;
    const Shape dims = k % 4 == 2 ? Shape{} : (k % 4 == 3 ? Shape{3, 3} : Shape{5});
    const auto tasks = random_tasks(rng, 6, 25, p, dims, bern);
    HyperParams h;
    h.family = bern ? Family::bernoulli() : Family::gaussian();
    if (!dims.empty()) h.tensor_ranks = dims.size() == 2 ? std::vector<std::size_t>{2, 2, 2} : std::vector<std::size_t>{2, 2};
    if (p) h.scalar_ranks = {2, 3};
    h.lambda = Penalties::tied(0.02);
    h.trace_blocks = true;
    TuckerState s = initialize(tasks, h);
    double prev = objective(s, tasks, h);
    HyperParams one = h;
    one.max_iter = 1;
    for (int it = 0; it < 15; ++it) {
      const FitResult r = fit_from(s, tasks, one);
      for (double v : r.trace.block_objectives) {
        worst_rise = std::max(worst_rise, (v - prev) / std::max(1.0, std::abs(prev)));
        prev = v;
        ++blocks;
      }
      s = r.state;
      if (s.shared() > 0)
        shared_identical = shared_identical && s.u0().leftCols(s.shared()) == s.v0().leftCols(s.shared());
    }
  }
  out.detail << "(a) " << blocks << " block updates, largest relative rise=" << sci(worst_rise);
  out.require(worst_rise <= 1e-9, "objective non-increasing within 1e-9");

  std::size_t most_iters = 0;
  bool terminated = true;
  for (Scenario sc : {Scenario::I, Scenario::II, Scenario::III}) {
    const ScenarioConfig cfg = ScenarioConfig::defaults(sc);
    const GeneratedDataset d = generate(cfg);
    HyperParams h;  // max_iter = 50, epsilon = 1e-5
    h.tensor_ranks = cfg.ranks;
    h.lambda = Penalties::tied(0.01);
    const FitResult r = fit(d.train_tasks, h);
    most_iters = std::max(most_iters, r.trace.iterations);
    terminated = terminated && r.trace.iterations <= 50 && std::isfinite(r.trace.objectives.back());
  }
  out.detail << "; (b) defaults terminate on all scenarios, most iterations=" << most_iters;
  out.require(terminated, "termination under defaults");
  out.detail << "; (c) W0 identical in U0 and V0: " << (shared_identical ? "yes" : "no");
  out.require(shared_identical, "W0 shared bit-identically");
  return out;
}

Outcome criterion7() {
  Outcome out;
  Rng rng(701);
  double worst = 0, worst_hosvd = 0, worst_recon = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const Shape shape = random_shape(rng, 1, 4);
    const DenseTensor t = random_tensor(rng, shape);
    for (std::size_t n = 0; n < shape.size(); ++n) {
      const Eigen::MatrixXd m = matricize(t, n);
      const Eigen::MatrixXd a = random_matrix(rng, 3, static_cast<Eigen::Index>(shape[n]));
      const DenseTensor prod = mode_product(t, a, n);
      for_each_index(shape, [&](const std::vector<std::size_t>& idx) {
        std::size_t col = 0, stride = 1;
        for (std::size_t k = 0; k < shape.size(); ++k) {
          if (k == n) continue;
          col += idx[k] * stride;
          stride *= shape[k];
        }
        worst = std::max(worst, std::abs(m(static_cast<Eigen::Index>(idx[n]), static_cast<Eigen::Index>(col)) - t.at(idx)));
      });
      Shape os = shape;
      os[n] = 3;
      for_each_index(os, [&](const std::vector<std::size_t>& idx) {
        double sum = 0;
        std::vector<std::size_t> src = idx;
        for (std::size_t k = 0; k < shape[n]; ++k) {
          src[n] = k;
          sum += a(static_cast<Eigen::Index>(idx[n]), static_cast<Eigen::Index>(k)) * t.at(src);
        }
        worst = std::max(worst, std::abs(sum - prod.at(idx)));
      });
    }
    const Eigen::MatrixXd a = random_matrix(rng, 1 + rng.index(3), 1 + rng.index(3));
    const Eigen::MatrixXd b = random_matrix(rng, 1 + rng.index(3), 1 + rng.index(3));
    const Eigen::MatrixXd k = kronecker(a, b);
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      for (Eigen::Index j = 0; j < a.cols(); ++j)
        for (Eigen::Index p = 0; p < b.rows(); ++p)
          for (Eigen::Index q = 0; q < b.cols(); ++q)
            worst = std::max(worst, std::abs(k(i * b.rows() + p, j * b.cols() + q) - a(i, j) * b(p, q)));

    TuckerFactors f;
    f.core = random_tensor(rng, random_shape(rng, 1, 4, 3));
    Shape full;
    for (auto r : f.core.shape()) {
      full.push_back(1 + rng.index(4));
      f.factors.push_back(random_matrix(rng, static_cast<Eigen::Index>(full.back()), static_cast<Eigen::Index>(r)));
    }
    const DenseTensor rec = tucker_reconstruct(f);
    for_each_index(full, [&](const std::vector<std::size_t>& i) {
      double sum = 0;
      for_each_index(f.core.shape(), [&](const std::vector<std::size_t>& r) {
        double term = f.core.at(r);
        for (std::size_t d = 0; d < r.size(); ++d)
          term *= f.factors[d](static_cast<Eigen::Index>(i[d]), static_cast<Eigen::Index>(r[d]));
        sum += term;
      });
      worst = std::max(worst, std::abs(sum - rec.at(i)));
    });

    const DenseTensor h = random_tensor(rng, random_shape(rng, 1, 4, 5));
    worst_hosvd = std::max(worst_hosvd, (tucker_reconstruct(hosvd(h, h.shape())).as_vector() - h.as_vector())
                                            .cwiseAbs()
                                            .maxCoeff());
  }
  for (int trial = 0; trial < 20; ++trial) {
    TuckerState s;
    const std::size_t n = 4, m = 1 + rng.index(3);
    Shape core{2};
    for (std::size_t d = 0; d < m; ++d) {
      core.push_back(1 + rng.index(3));
      s.u.push_back(random_matrix(rng, 2 + rng.index(3), core.back()));
    }
    core[0] = std::min<std::size_t>(2, shape_size(Shape(core.begin() + 1, core.end())));
    for (std::size_t i = 0; i < n; ++i) s.task_ids.push_back(std::to_string(i));
    s.w0 = Eigen::MatrixXd(n, 0);
    s.f0 = random_matrix(rng, n, core[0]);
    s.d0 = Eigen::MatrixXd(n, 0);
    s.g = random_tensor(rng, core);
    const auto models = reconstruct_models(s);
    Eigen::MatrixXd kron = s.u[0];
    for (std::size_t d = 1; d < m; ++d) kron = kronecker(s.u[d], kron);
    const Eigen::MatrixXd expect = s.u0() * matricize(s.g, 0) * kron.transpose();
    for (std::size_t i = 0; i < n; ++i) {
      // row i of the stacked mode-0 unfolding is vec(B_i) in column order of the remaining modes
      Shape bs{1};
      bs.insert(bs.end(), models[i].b.shape().begin(), models[i].b.shape().end());
      const DenseTensor one(bs, models[i].b.values());
      worst_recon = std::max(worst_recon,
                             (matricize(one, 0).row(0) - expect.row(static_cast<Eigen::Index>(i))).cwiseAbs().maxCoeff());
    }
  }
  out.detail << "index-loop oracles worst=" << sci(worst) << "; hosvd round trip worst=" << sci(worst_hosvd)
             << "; reconstruct_models vs unfolded identity worst=" << sci(worst_recon);
  out.require(worst <= 1e-12, "algebra oracles within 1e-12");
  out.require(worst_hosvd <= 1e-10, "hosvd within 1e-10");
  out.require(worst_recon <= 1e-12, "reconstruct within 1e-12");
  return out;
}

Outcome criterion8() {
  Outcome out;
  Rng rng(801);
  std::size_t violations = 0, degenerate = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto r0 = static_cast<Eigen::Index>(trial < 20 ? trial % 2 : rng.index(6));
    const auto r1 = static_cast<Eigen::Index>(1 + rng.index(5));
    const auto p = static_cast<Eigen::Index>(1 + rng.index(8));
    VectorState s;
    s.u0 = random_matrix(rng, 5, r0);
    s.g = random_matrix(rng, r0, r1);
    s.u1 = random_matrix(rng, p, r1);
    const ImpliedCovariance c = implied_covariance(s);
    const auto bound = static_cast<std::size_t>(std::min({r0, r1, p}));
    if (c.rank > bound) ++violations;
    if (r0 <= 1) {
      ++degenerate;
      if (c.rank != static_cast<std::size_t>(r0)) ++violations;
      if (r0 == 0 && c.covariance.cwiseAbs().maxCoeff() != 0.0) ++violations;
    }
  }
  out.detail << "50 random states (" << degenerate << " with R0 in {0,1}), rank-bound violations=" << violations;
  out.require(violations == 0, "rank <= min(R0, R1, p)");
  return out;
}

// --- criterion 9 --------------------------------------------------------------

#ifdef TENMTL_CLI_PATH
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string tree_bytes(const fs::path& root) {
  if (fs::is_regular_file(root)) return slurp(root);
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::string out;
  for (const auto& f : files) out += fs::relative(f, root).string() + "\n" + slurp(f);
  return out;
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(TENMTL_CLI_PATH) + " " + args + " >" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}
#endif

Outcome criterion9(Clock::time_point suite_start) {
  Outcome out;
#ifdef TENMTL_CLI_PATH
  const fs::path work = fs::temp_directory_path() / ("tenmtl_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(work);
  fs::create_directories(work);
  std::ofstream(work / "bench.json") << R"({"scenario": {"scenario": "III"}, "methods": ["tenmtl", "lr-tucker", "local", "global"],
    "replications": 2, "master_seed": 7, "grid": {"r0": [2, 3], "r_feature": [2], "lambdas": [0.001, 0.01]}})";
  struct Command {
    std::string name, args, output;
  };
  const std::string d = (work / "data").string();
  const std::vector<Command> commands = {
      {"simulate", "simulate --scenario III --seed 11 --out {}", "{}"},
      {"fit tenmtl", "fit --data " + d + " --ranks 2,2,2 --lambda 0.001 --out {}", "{}"},
      {"fit local", "fit --data " + d + " --method local --out {}", "{}"},
      {"fit global", "fit --data " + d + " --method global --out {}", "{}"},
      {"fit lr-tucker", "fit --data " + d + " --method lr-tucker --ranks 3,2,2 --out {}", "{}"},
      {"tune", "tune --data " + d + " --r0 2,3 --r-feature 2 --lambdas 0.001,0.01 --out {}", "{}"},
      {"bench csv", "bench --config " + (work / "bench.json").string() + " --out {}", "{}"},
      {"bench json", "bench --config " + (work / "bench.json").string() + " --format json --out {}", "{}"},
      {"bench table", "bench --config " + (work / "bench.json").string() + " --table --out {}", "{}"},
  };
  auto expand = [](std::string s, const std::string& v) {
    for (auto pos = s.find("{}"); pos != std::string::npos; pos = s.find("{}")) s.replace(pos, 2, v);
    return s;
  };
  std::size_t identical = 0;
  // the dataset the fit/tune commands read
  run_cli("simulate --scenario III --seed 11 --out " + d, work / "log");
  for (const auto& c : commands) {
    std::string bytes[2], logs[2];
    int codes[2];
    for (int k = 0; k < 2; ++k) {
      const fs::path target = work / (std::to_string(k) + "_" + std::to_string(&c - commands.data()));
      codes[k] = run_cli(expand(c.args, target.string()), work / "log");
      bytes[k] = fs::exists(target) ? tree_bytes(target) : "";
      logs[k] = slurp(work / "log");
      // stdout may echo the output path; strip the per-run target name
      for (auto pos = logs[k].find(target.string()); pos != std::string::npos; pos = logs[k].find(target.string()))
        logs[k].erase(pos, target.string().size());
    }
    const bool same = codes[0] == 0 && codes[1] == 0 && !bytes[0].empty() && bytes[0] == bytes[1] && logs[0] == logs[1];
    identical += same;
    if (!same) out.detail << " [" << c.name << " differs or failed]";
  }
  const fs::path json_out = work / "0_7";
  std::string rep[2];
  for (int k = 0; k < 2; ++k) {
    run_cli("report --in " + json_out.string() + " --table --out " + (work / ("rep" + std::to_string(k))).string(),
            work / "log");
    rep[k] = slurp(work / ("rep" + std::to_string(k)));
  }
  const bool report_same = !rep[0].empty() && rep[0] == rep[1];
  identical += report_same;
  fs::remove_all(work);
  out.detail << "byte-identical reruns " << identical << "/" << commands.size() + 1;
  out.require(identical == commands.size() + 1, "every CLI command byte-deterministic");
#else
  out.require(false, "CLI path not configured");
#endif
  const double total = seconds_since(suite_start);
  out.detail << "; suite wall time " << fmt(total / 60.0, 1) << " min on " << resolve_threads(0) << " core(s)";
  out.require(total <= 45 * 60, "suite <= 45 min");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  Options o;
  app.add_option("--reps", o.reps, "Replications per simulation study");
  app.add_option("--threads", o.threads, "Worker threads (0 = all cores)");
  app.add_option("--only", o.only, "Run a single criterion");
  CLI11_PARSE(app, argc, argv);

  const auto start = Clock::now();
  int failed = 0, ran = 0;
  ExperimentResult first;
  auto report = [&](int k, auto&& body) {
    if (o.only && o.only != k) return;
    const auto t0 = Clock::now();
    Outcome r;
    try {
      r = body();
    } catch (const std::exception& e) {
      r.pass = false;
      r.detail << "threw: " << e.what();
    }
    failed += !r.pass;
    ++ran;
    std::cout << "criterion " << k << ": " << (r.pass ? "PASS" : "FAIL") << " | " << r.detail.str() << " ("
              << fmt(seconds_since(t0), 1) << " s)" << std::endl;
  };
  report(1, [&] { return criterion1(o, first); });
  report(2, [&] { return criterion2(o, first); });
  report(3, [&] { return criterion3(o); });
  report(4, [&] { return criterion4(o); });
  report(5, [&] { return criterion5(); });
  report(6, [&] { return criterion6(); });
  report(7, [&] { return criterion7(); });
  report(8, [&] { return criterion8(); });
  report(9, [&] { return criterion9(start); });
  std::cout << "acceptance: " << (ran - failed) << "/" << ran << " criteria passed" << std::endl;
  return failed;
}
