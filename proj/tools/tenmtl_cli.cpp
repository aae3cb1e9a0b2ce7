// Command-line front end: simulate, fit, tune, bench, report.
//
// Exit codes: 0 success, 2 configuration or precondition error, 3 I/O
// failure, 4 numerical failure.

#include "tenmtl/baselines.hpp"
#include "tenmtl/io.hpp"
#include "tenmtl/model.hpp"
#include "tenmtl/simgen.hpp"
#include "tenmtl/tuning.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace tenmtl;
using io::json;

namespace {

enum Exit { kOk = 0, kConfig = 2, kIo = 3, kNumerical = 4 };

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

io::ExperimentFile load_config(const std::string& path) {
  if (path.empty()) return {};
  return io::experiment_from_json(io::read_json(path));
}

void emit(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") std::cout << text;
  else io::write_text(out, text);
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  std::string config, out, scenario;
  std::optional<std::uint64_t> seed;
  std::optional<double> beta_u, sigma_e, sparsity;
  std::optional<std::size_t> tasks, n_train, n_test;
};

int run_simulate(const SimulateArgs& a) {
  ScenarioConfig cfg;
  if (!a.config.empty()) cfg = load_config(a.config).experiment.scenario;
  else if (!a.scenario.empty()) cfg = ScenarioConfig::defaults(parse_scenario(a.scenario));
  if (!a.config.empty() && !a.scenario.empty() && parse_scenario(a.scenario) != cfg.scenario)
    throw io::ConfigError("--scenario disagrees with the config file");
  if (a.seed) cfg.seed = *a.seed;
  if (a.beta_u) cfg.beta_u = *a.beta_u;
  if (a.sigma_e) cfg.sigma_e = *a.sigma_e;
  if (a.sparsity) cfg.sparsity = *a.sparsity;
  if (a.tasks) cfg.tasks = *a.tasks;
  if (a.n_train) cfg.n_train = *a.n_train;
  if (a.n_test) cfg.n_test = *a.n_test;
  cfg.validate();

  const GeneratedDataset data = generate(cfg);
  io::Dataset ds;
  ds.train = data.train_tasks;
  ds.test = data.test_tasks;
  ds.family = Family::gaussian();
  ds.metadata = {{"generator", io::to_json(cfg)}};
  io::write_dataset(a.out, ds);
  std::cout << "scenario=" << scenario_name(cfg.scenario) << " N=" << cfg.tasks << " n_train=" << cfg.n_train
            << " n_test=" << cfg.n_test << " dims=" << shape_string(cfg.dims) << " seed=" << cfg.seed << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// fit

struct HyperFlags {
  std::vector<std::size_t> ranks, scalar_ranks;
  std::optional<double> lambda;
  std::optional<std::size_t> shared, max_iter;
  std::optional<double> epsilon;
};

HyperParams resolve_hyper(HyperParams h, const HyperFlags& f) {
  if (!f.ranks.empty()) h.tensor_ranks = f.ranks;
  if (!f.scalar_ranks.empty()) {
    if (f.scalar_ranks.size() != 2) throw io::ConfigError("--scalar-ranks expects T0,T1");
    h.scalar_ranks = {f.scalar_ranks[0], f.scalar_ranks[1]};
  }
  if (f.lambda) h.lambda = Penalties::tied(*f.lambda);
  if (f.shared) h.shared_columns = *f.shared;
  if (f.max_iter) h.max_iter = *f.max_iter;
  if (f.epsilon) h.epsilon = *f.epsilon;
  return h;
}

GridTuple tuple_of(const HyperParams& h) {
  GridTuple t;
  t.tensor_ranks = h.tensor_ranks;
  t.scalar_ranks = h.scalar_ranks;
  t.lambda = h.lambda.g;
  t.shared_columns = h.shared_columns;
  return t;
}

double task_metric(const PersonalizedModel& m, const TaskDataset& t, Family family) {
  const Eigen::VectorXd p = predict_task(m, t, family);
  if (!p.allFinite()) throw NumericalError("non-finite predictions for task '" + t.id + "'");
  if (family.kind == FamilyKind::Bernoulli) return classification_accuracy(p, t.y);
  return rmse(p, t.y);
}

double mean_of_present(const std::vector<double>& v) {
  std::vector<double> kept;
  for (double x : v)
    if (!std::isnan(x)) kept.push_back(x);
  return kept.empty() ? std::nan("") : mean(kept);
}

struct FitArgs {
  std::string data, out, config, method = "tenmtl";
  HyperFlags hyper;
  std::optional<double> ridge;
};

int run_fit(const FitArgs& a) {
  const Method method = parse_method(a.method);
  const io::Dataset ds = io::read_dataset(a.data);
  const io::ExperimentFile file = load_config(a.config);
  HyperParams h = resolve_hyper(file.experiment.hyper, a.hyper);
  h.family = ds.family;
  const double ridge = a.ridge.value_or(file.experiment.ridge);
  const TaskLayout layout = TaskLayout::of(ds.train);
  const bool tuned = method != Method::Local && method != Method::Global;
  if (tuned) {
    if (layout.has_tensor() && h.tensor_ranks.empty()) throw io::ConfigError("--ranks is required for " + a.method);
    if (layout.has_scalar() && h.scalar_ranks[0] == 0 && method != Method::TenMTLVector)
      throw io::ConfigError("--scalar-ranks is required for " + a.method);
    if (method == Method::TenMTL) h.validate(layout);
  }

  const fs::path out(a.out);
  MethodFit fitted;
  try {
    fitted = fit_method(method, ds.train, tuple_of(h), h, ridge);
  } catch (const std::invalid_argument&) {
    throw;
  } catch (const std::exception& e) {
    io::write_text(out / "trace.json", json({{"method", a.method}, {"error", e.what()}}).dump(2) + "\n");
    throw NumericalError(std::string("fit failed: ") + e.what());
  }

  json trace = {{"method", a.method}};
  if (fitted.tenmtl) trace["trace"] = io::to_json(fitted.tenmtl->trace);
  if (fitted.vector) trace["trace"] = io::to_json(fitted.vector->trace);
  io::write_text(out / "trace.json", trace.dump(2) + "\n");

  std::vector<double> train_m, test_m;
  json tasks = json::array();
  for (std::size_t i = 0; i < ds.train.size(); ++i) {
    train_m.push_back(task_metric(fitted.models[i], ds.train[i], ds.family));
    test_m.push_back(ds.test[i].samples() ? task_metric(fitted.models[i], ds.test[i], ds.family) : std::nan(""));
    tasks.push_back({{"id", ds.train[i].id},
                     {"train", train_m.back()},
                     {"test", std::isnan(test_m.back()) ? json(nullptr) : json(test_m.back())}});
  }
  const double mtrain = mean_of_present(train_m), mtest = mean_of_present(test_m);
  const json metrics = {{"method", a.method},
                        {"family", std::string(ds.family.name())},
                        {"metric", ds.family.kind == FamilyKind::Bernoulli ? "accuracy" : "rmse"},
                        {"tasks", tasks},
                        {"mean_train", mtrain},
                        {"mean_test", std::isnan(mtest) ? json(nullptr) : json(mtest)}};

  io::SavedModel saved;
  saved.method = a.method;
  saved.family = ds.family;
  saved.models = fitted.models;
  if (fitted.tenmtl) {
    saved.state = fitted.tenmtl->state;
    saved.hyper = h;
  }
  io::write_model(out / "model", saved);
  io::write_text(out / "metrics.json", metrics.dump(2) + "\n");
  std::cout << "method=" << a.method << " tasks=" << ds.train.size() << " mean_train=" << io::format_double(mtrain)
            << " mean_test=" << (std::isnan(mtest) ? std::string("na") : io::format_double(mtest)) << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// tune

struct TuneArgs {
  std::string data, out, config;
  std::vector<std::size_t> r0, r_feature, t0, t1;
  std::vector<double> lambdas;
  std::optional<std::size_t> folds, threads;
  std::optional<std::uint64_t> seed;
};

int run_tune(const TuneArgs& a) {
  const io::Dataset ds = io::read_dataset(a.data);
  const io::ExperimentFile file = load_config(a.config);
  Grid g = file.experiment.grid;
  if (!a.r0.empty()) g.r0 = a.r0;
  if (!a.r_feature.empty()) g.r_feature = a.r_feature;
  if (!a.t0.empty()) g.t0 = a.t0;
  if (!a.t1.empty()) g.t1 = a.t1;
  if (!a.lambdas.empty()) g.lambdas = a.lambdas;
  if (a.folds) g.folds = *a.folds;
  if (a.seed) g.seed = *a.seed;
  g.validate();
  HyperParams base = file.experiment.hyper;
  base.family = ds.family;
  const CvReport report = kfold_cv(ds.train, g, base, a.threads.value_or(file.experiment.threads));
  if (!std::isfinite(report.scores[report.selected]))
    throw NumericalError("every grid tuple failed: " + report.errors[report.selected]);
  emit(a.out, io::to_json(report).dump(2) + "\n");
  if (!a.out.empty() && a.out != "-")
    std::cout << "selected " << report.best().describe() << " score=" << io::format_double(report.scores[report.selected])
              << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// bench and report

struct BenchArgs {
  std::string config, out, format = "csv", scenario, tuning;
  bool table = false;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> reps, threads;
  std::vector<std::string> methods;
};

std::string render(const ExperimentResult& r, const ExperimentConfig& cfg, const std::string& format, bool table) {
  if (format == "json") return io::results_json(r, cfg).dump(2) + "\n";
  return table ? io::results_table(r, cfg) : io::results_csv(r);
}

int run_bench(const BenchArgs& a) {
  io::ExperimentFile file = load_config(a.config);
  ExperimentConfig& cfg = file.experiment;
  if (a.config.empty() && !a.scenario.empty()) cfg.scenario = ScenarioConfig::defaults(parse_scenario(a.scenario));
  if (a.seed) cfg.master_seed = *a.seed;
  if (a.reps) {
    cfg.replications = *a.reps;
    cfg.seeds.clear();
  }
  if (a.threads) cfg.threads = *a.threads;
  if (!a.methods.empty()) {
    cfg.methods.clear();
    for (const auto& m : a.methods) cfg.methods.push_back(parse_method(m));
  }
  if (a.tuning == "fixed") cfg.tuning = Tuning::Fixed;
  else if (a.tuning == "cv") cfg.tuning = Tuning::CrossValidation;
  cfg.validate();
  const ExperimentResult r = run_experiment(cfg);
  std::string out = a.out;
  if (out.empty()) out = a.format == "json" ? file.json_path : file.csv_path;
  emit(out, render(r, cfg, a.format, a.table));
  // The config may name both outputs; write the other one too.
  if (a.out.empty()) {
    if (a.format != "json" && !file.json_path.empty()) io::write_text(file.json_path, render(r, cfg, "json", false));
    if (a.format == "json" && !file.csv_path.empty()) io::write_text(file.csv_path, render(r, cfg, "csv", a.table));
  }
  for (const auto& rec : r.records)
    if (!rec.error.empty()) {
      std::cerr << "replication " << rec.replication << " (" << method_name(rec.method) << ") failed: " << rec.error
                << "\n";
    }
  for (const auto& row : r.rows)
    if (row.reps == 0) throw NumericalError("method " + method_name(row.method) + " failed on every replication");
  return kOk;
}

struct ReportArgs {
  std::string in, out, format = "csv";
  bool table = false;
};

int run_report(const ReportArgs& a) {
  const json j = io::read_json(a.in);
  const ExperimentResult r = io::results_from_json(j);
  ExperimentConfig cfg;
  if (j.contains("config")) cfg = io::experiment_from_json(j.at("config")).experiment;
  if (a.format == "json") {
    emit(a.out, j.dump(2) + "\n");
  } else {
    emit(a.out, a.table ? io::results_table(r, cfg) : io::results_csv(r));
  }
  return kOk;
}

template <class F>
int guarded(F&& body) {
  try {
    return body();
  } catch (const io::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfig;
  } catch (const io::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumerical;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tensor-based multi-task learning with personalized models"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Generate a simulation dataset tree");
  simulate->add_option("--config", sim.config, "Experiment config JSON (its scenario section is used)");
  simulate->add_option("--out", sim.out, "Output dataset directory")->required();
  simulate->add_option("--scenario", sim.scenario, "I, II or III (defaults of the simulation study)");
  simulate->add_option("--seed", sim.seed, "Generator seed");
  simulate->add_option("--beta-u", sim.beta_u);
  simulate->add_option("--sigma-e", sim.sigma_e);
  simulate->add_option("--sparsity", sim.sparsity);
  simulate->add_option("--tasks", sim.tasks);
  simulate->add_option("--n-train", sim.n_train);
  simulate->add_option("--n-test", sim.n_test);

  FitArgs fa;
  auto* fitc = app.add_subcommand("fit", "Fit one method to a dataset tree");
  fitc->add_option("--data", fa.data, "Dataset directory")->required();
  fitc->add_option("--out", fa.out, "Output directory for model, metrics.json and trace.json")->required();
  fitc->add_option("--method", fa.method, "tenmtl, tenmtl-vector, local, global or lr-tucker");
  fitc->add_option("--config", fa.config, "Experiment config JSON (hyper and ridge sections)");
  fitc->add_option("--ranks", fa.hyper.ranks, "Tensor ranks R0,R1,..,Rm")->delimiter(',');
  fitc->add_option("--scalar-ranks", fa.hyper.scalar_ranks, "Scalar ranks T0,T1")->delimiter(',');
  fitc->add_option("--lambda", fa.hyper.lambda, "Penalty shared by every block");
  fitc->add_option("--shared", fa.hyper.shared, "Shared task columns Q0");
  fitc->add_option("--max-iter", fa.hyper.max_iter);
  fitc->add_option("--epsilon", fa.hyper.epsilon);
  fitc->add_option("--ridge", fa.ridge, "Ridge for underdetermined local/global fits");

  TuneArgs ta;
  auto* tune = app.add_subcommand("tune", "Cross-validate TenMTL over a grid");
  tune->add_option("--data", ta.data, "Dataset directory")->required();
  tune->add_option("--out", ta.out, "CvReport JSON path (stdout when omitted)");
  tune->add_option("--config", ta.config, "Experiment config JSON (grid and hyper sections)");
  tune->add_option("--r0", ta.r0)->delimiter(',');
  tune->add_option("--r-feature", ta.r_feature)->delimiter(',');
  tune->add_option("--t0", ta.t0)->delimiter(',');
  tune->add_option("--t1", ta.t1)->delimiter(',');
  tune->add_option("--lambdas", ta.lambdas)->delimiter(',');
  tune->add_option("--folds", ta.folds);
  tune->add_option("--seed", ta.seed, "Fold assignment seed");
  tune->add_option("--threads", ta.threads, "Worker threads (0 = all cores)");

  BenchArgs ba;
  auto* bench = app.add_subcommand("bench", "Run a replicated simulation experiment");
  bench->add_option("--config", ba.config, "Experiment config JSON");
  bench->add_option("--out", ba.out, "Output path (config output or stdout when omitted)");
  bench->add_option("--format", ba.format)->check(CLI::IsMember({"csv", "json"}));
  bench->add_flag("--table", ba.table, "Pivot CSV to (sigma_e, s) rows by method columns");
  bench->add_option("--scenario", ba.scenario, "Scenario defaults when no config is given");
  bench->add_option("--seed", ba.seed, "Master seed");
  bench->add_option("--reps", ba.reps, "Replications");
  bench->add_option("--threads", ba.threads, "Worker threads (0 = all cores)");
  bench->add_option("--method", ba.methods, "Methods to run")->delimiter(',');
  bench->add_option("--tuning", ba.tuning)->check(CLI::IsMember({"cv", "fixed"}));

  ReportArgs ra;
  auto* report = app.add_subcommand("report", "Re-emit a bench JSON result as CSV or table");
  report->add_option("--in", ra.in, "bench JSON output")->required();
  report->add_option("--out", ra.out, "Output path (stdout when omitted)");
  report->add_option("--format", ra.format)->check(CLI::IsMember({"csv", "json"}));
  report->add_flag("--table", ra.table);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  if (simulate->parsed()) return guarded([&] { return run_simulate(sim); });
  if (fitc->parsed()) return guarded([&] { return run_fit(fa); });
  if (tune->parsed()) return guarded([&] { return run_tune(ta); });
  if (bench->parsed()) return guarded([&] { return run_bench(ba); });
  return guarded([&] { return run_report(ra); });
}
