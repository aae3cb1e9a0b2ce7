#include "tenmtl/io.hpp"

#include <bit>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unistd.h>

namespace tenmtl::io {

static_assert(std::endian::native == std::endian::little, "tensor files assume a little-endian host");

std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

namespace {

// --- small JSON helpers -----------------------------------------------------

void check_object(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items())
    if (!ok.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

template <class T>
T field(const json& j, const char* key, const std::string& where, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

std::size_t count_field(const json& j, const char* key, const std::string& where, std::size_t fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0)
    throw ConfigError(where + "." + key + ": expected a nonnegative integer");
  return v.get<std::size_t>();
}

std::vector<std::size_t> count_list(const json& j, const char* key, const std::string& where,
                                    std::vector<std::size_t> fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_array()) throw ConfigError(where + "." + key + ": expected an array");
  std::vector<std::size_t> out;
  for (const auto& e : v) {
    if (!e.is_number_integer() || e.get<long long>() < 0)
      throw ConfigError(where + "." + key + ": expected nonnegative integers");
    out.push_back(e.get<std::size_t>());
  }
  return out;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  if (in.bad()) throw IoError("cannot read " + path.string());
  return os.str();
}

fs::path temp_sibling(const fs::path& target) {
  static int counter = 0;
  const fs::path parent = target.parent_path().empty() ? fs::path(".") : target.parent_path();
  return parent / ("." + target.filename().string() + ".tmp-" + std::to_string(::getpid()) + "-" +
                   std::to_string(counter++));
}

void write_raw(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.close();
  if (!out) throw IoError("cannot write " + path.string());
}

// Builds a directory at a temporary sibling, then swaps it into place.
template <class Fill>
void write_directory_atomically(const fs::path& target, Fill&& fill) {
  // "out/" has an empty filename; rename the directory itself, not its contents.
  const fs::path root = target.has_filename() ? target : target.parent_path();
  const fs::path tmp = temp_sibling(root);
  try {
    fs::create_directories(tmp);
    fill(tmp);
    if (fs::exists(root)) fs::remove_all(root);
    fs::rename(tmp, root);
  } catch (const fs::filesystem_error& e) {
    std::error_code ec;
    fs::remove_all(tmp, ec);
    throw IoError(e.what());
  } catch (...) {
    std::error_code ec;
    fs::remove_all(tmp, ec);
    throw;
  }
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

void check_id(const std::string& id) {
  if (id.empty()) throw ConfigError("task ids must be non-empty");
  for (char c : id)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.'))
      throw ConfigError("task id '" + id + "' may only contain letters, digits, '.', '_' and '-'");
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const fs::path& file) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IoError(file.string() + ": cannot parse number '" + s + "'");
  }
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::istringstream is(slurp(path));
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

json matrix_entry(const fs::path& dir, const std::string& name, const Eigen::MatrixXd& m) {
  json e = {{"rows", m.rows()}, {"cols", m.cols()}};
  if (m.size() > 0) {
    write_tensor(dir / name, DenseTensor::from_matrix(m));
    e["file"] = name;
  }
  return e;
}

Eigen::MatrixXd read_matrix_entry(const fs::path& dir, const json& e) {
  const auto rows = e.at("rows").get<Eigen::Index>();
  const auto cols = e.at("cols").get<Eigen::Index>();
  if (rows * cols == 0) return Eigen::MatrixXd(rows, cols);
  const DenseTensor t = read_tensor(dir / e.at("file").get<std::string>());
  if (t.order() != 2 || static_cast<Eigen::Index>(t.dim(0)) != rows || static_cast<Eigen::Index>(t.dim(1)) != cols)
    throw IoError("matrix blob shape does not match model.json");
  return t.as_matrix();
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor files

fs::path bin_path(const fs::path& stem) { return fs::path(stem.string() + ".bin"); }
fs::path shape_path(const fs::path& stem) { return fs::path(stem.string() + ".shape.json"); }

void write_tensor(const fs::path& stem, const DenseTensor& t) {
  if (t.empty()) throw std::invalid_argument("write_tensor: tensor is empty");
  const auto data = t.data();
  write_raw(bin_path(stem), std::string(reinterpret_cast<const char*>(data.data()), data.size() * sizeof(double)));
  const json shape = {{"shape", t.shape()}, {"dtype", "f64"}, {"order", "row-major"}};
  write_raw(shape_path(stem), dump(shape));
}

DenseTensor read_tensor(const fs::path& stem) {
  json meta;
  try {
    meta = json::parse(slurp(shape_path(stem)));
  } catch (const json::exception& e) {
    throw IoError(shape_path(stem).string() + ": " + e.what());
  }
  Shape shape;
  try {
    check_object(meta, {"shape", "dtype", "order"}, shape_path(stem).string());
    if (meta.value("dtype", "f64") != "f64" || meta.value("order", "row-major") != "row-major")
      throw IoError(shape_path(stem).string() + ": only f64 row-major tensors are supported");
    shape = meta.at("shape").get<Shape>();
  } catch (const json::exception& e) {
    throw IoError(shape_path(stem).string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw IoError(e.what());
  }
  const std::string bytes = slurp(bin_path(stem));
  const std::size_t n = shape_size(shape);
  if (bytes.size() != n * sizeof(double))
    throw IoError(bin_path(stem).string() + ": expected " + std::to_string(n * sizeof(double)) +
                  " bytes, found " + std::to_string(bytes.size()));
  std::vector<double> data(n);
  std::memcpy(data.data(), bytes.data(), bytes.size());
  try {
    return {shape, std::move(data)};
  } catch (const std::exception& e) {
    throw IoError(bin_path(stem).string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Dataset tree

void write_dataset(const fs::path& root, const Dataset& data) {
  if (data.train.empty()) throw ConfigError("dataset has no tasks");
  if (!data.test.empty() && data.test.size() != data.train.size())
    throw ConfigError("train and test task lists differ in length");
  const TaskLayout layout = TaskLayout::of(data.train);
  for (const auto& t : data.train) check_id(t.id);

  json tasks = json::array();
  for (std::size_t i = 0; i < data.train.size(); ++i)
    tasks.push_back({{"id", data.train[i].id},
                     {"dir", "task_" + data.train[i].id},
                     {"n_train", data.train[i].samples()},
                     {"n_test", data.test.empty() ? 0 : data.test[i].samples()}});
  const json manifest = {{"format", "tenmtl-dataset"},
                         {"version", 1},
                         {"family", std::string(data.family.name())},
                         {"N", layout.tasks},
                         {"p", layout.scalar_features},
                         {"dims", layout.tensor_shape},
                         {"tasks", tasks},
                         {"metadata", data.metadata}};

  write_directory_atomically(root, [&](const fs::path& dir) {
    write_raw(dir / "manifest.json", dump(manifest));
    for (std::size_t i = 0; i < data.train.size(); ++i) {
      const TaskDataset& train = data.train[i];
      const TaskDataset* test = data.test.empty() ? nullptr : &data.test[i];
      if (test && test->id != train.id) throw ConfigError("train and test task ids differ");
      const fs::path tdir = dir / ("task_" + train.id);
      fs::create_directories(tdir);

      std::string y = "y,split\n";
      std::string z;
      if (layout.has_scalar()) {
        for (std::size_t k = 1; k <= layout.scalar_features; ++k) z += (k > 1 ? ",z" : "z") + std::to_string(k);
        z += "\n";
      }
      std::vector<double> x;
      auto emit = [&](const TaskDataset& t, const char* split) {
        for (std::size_t j = 0; j < t.samples(); ++j) {
          const auto r = static_cast<Eigen::Index>(j);
          y += format_double(t.y(r)) + "," + split + "\n";
          if (layout.has_scalar()) {
            for (Eigen::Index k = 0; k < t.z.cols(); ++k) z += (k ? "," : "") + format_double(t.z(r, k));
            z += "\n";
          }
          if (layout.has_tensor()) x.insert(x.end(), t.x[j].data().begin(), t.x[j].data().end());
        }
      };
      emit(train, "train");
      if (test) emit(*test, "test");
      write_raw(tdir / "y.csv", y);
      if (layout.has_scalar()) write_raw(tdir / "z.csv", z);
      if (layout.has_tensor()) {
        Shape shape{train.samples() + (test ? test->samples() : 0)};
        shape.insert(shape.end(), layout.tensor_shape.begin(), layout.tensor_shape.end());
        write_tensor(tdir / "x", DenseTensor(shape, std::move(x)));
      }
    }
  });
}

Dataset read_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw IoError(root.string() + " is not a directory");
  const json manifest = read_json(root / "manifest.json");
  Dataset out;
  std::size_t p = 0;
  Shape dims;
  json tasks;
  try {
    if (manifest.value("format", "") != "tenmtl-dataset") throw IoError("manifest.json: not a dataset manifest");
    out.family = Family::parse(manifest.at("family").get<std::string>());
    p = manifest.at("p").get<std::size_t>();
    dims = manifest.at("dims").get<Shape>();
    tasks = manifest.at("tasks");
    if (manifest.contains("metadata")) out.metadata = manifest.at("metadata");
  } catch (const json::exception& e) {
    throw IoError("manifest.json: " + std::string(e.what()));
  }
  for (const auto& entry : tasks) {
    const std::string id = entry.at("id").get<std::string>();
    const fs::path tdir = root / entry.at("dir").get<std::string>();
    const auto lines = read_lines(tdir / "y.csv");
    if (lines.empty() || lines.front() != "y,split") throw IoError((tdir / "y.csv").string() + ": bad header");
    const std::size_t n = lines.size() - 1;
    std::vector<double> y(n);
    std::vector<bool> is_train(n);
    for (std::size_t j = 0; j < n; ++j) {
      const auto cells = split_csv_line(lines[j + 1]);
      if (cells.size() != 2 || (cells[1] != "train" && cells[1] != "test"))
        throw IoError((tdir / "y.csv").string() + ": malformed row " + std::to_string(j + 2));
      y[j] = parse_double(cells[0], tdir / "y.csv");
      is_train[j] = cells[1] == "train";
    }
    Eigen::MatrixXd z(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    if (p > 0) {
      const auto zl = read_lines(tdir / "z.csv");
      if (zl.size() != n + 1) throw IoError((tdir / "z.csv").string() + ": row count does not match y.csv");
      if (split_csv_line(zl.front()).size() != p) throw IoError((tdir / "z.csv").string() + ": bad header");
      for (std::size_t j = 0; j < n; ++j) {
        const auto cells = split_csv_line(zl[j + 1]);
        if (cells.size() != p) throw IoError((tdir / "z.csv").string() + ": malformed row " + std::to_string(j + 2));
        for (std::size_t k = 0; k < p; ++k)
          z(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = parse_double(cells[k], tdir / "z.csv");
      }
    }
    std::vector<DenseTensor> x;
    if (!dims.empty()) {
      const DenseTensor stacked = read_tensor(tdir / "x");
      Shape expect{n};
      expect.insert(expect.end(), dims.begin(), dims.end());
      if (stacked.shape() != expect) throw IoError((tdir / "x.bin").string() + ": shape does not match manifest");
      const std::size_t dim = shape_size(dims);
      for (std::size_t j = 0; j < n; ++j)
        x.emplace_back(dims, std::vector<double>(stacked.data().begin() + j * dim, stacked.data().begin() + (j + 1) * dim));
    }
    TaskDataset all;
    all.id = id;
    all.y = Eigen::Map<Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(n));
    all.z = z;
    all.x = std::move(x);
    std::vector<std::size_t> train_rows, test_rows;
    for (std::size_t j = 0; j < n; ++j) (is_train[j] ? train_rows : test_rows).push_back(j);
    out.train.push_back(all.select(train_rows));
    out.test.push_back(all.select(test_rows));
  }
  if (out.train.empty()) throw IoError("manifest.json lists no tasks");
  return out;
}

// ---------------------------------------------------------------------------
// JSON conversions

json to_json(const ScenarioConfig& c) {
  return {{"scenario", scenario_name(c.scenario)},
          {"tasks", c.tasks},
          {"n_train", c.n_train},
          {"n_test", c.n_test},
          {"dims", c.dims},
          {"clusters", c.clusters},
          {"ranks", c.ranks},
          {"beta_x", c.beta_x},
          {"sigma_x", c.sigma_x},
          {"sigma_u", c.sigma_u},
          {"beta_u", c.beta_u},
          {"sigma_e", c.sigma_e},
          {"sparsity", c.sparsity},
          {"beta_group", c.beta_group},
          {"sigma_group", c.sigma_group},
          {"sigma_nongroup", c.sigma_nongroup},
          {"n_groups", c.n_groups},
          {"task_subset_min", c.task_subset_min},
          {"task_subset_max", c.task_subset_max},
          {"seed", c.seed}};
}

ScenarioConfig scenario_from_json(const json& j) {
  const std::string w = "scenario";
  check_object(j, {"scenario", "tasks", "n_train", "n_test", "dims", "clusters", "ranks", "beta_x", "sigma_x",
                   "sigma_u", "beta_u", "sigma_e", "sparsity", "beta_group", "sigma_group", "sigma_nongroup",
                   "n_groups", "task_subset_min", "task_subset_max", "seed"},
               w);
  Scenario s = Scenario::I;
  try {
    s = parse_scenario(field<std::string>(j, "scenario", w, "I"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(w + ": " + e.what());
  }
  ScenarioConfig c = ScenarioConfig::defaults(s);
  c.tasks = count_field(j, "tasks", w, c.tasks);
  c.n_train = count_field(j, "n_train", w, c.n_train);
  c.n_test = count_field(j, "n_test", w, c.n_test);
  c.dims = count_list(j, "dims", w, c.dims);
  c.clusters = count_field(j, "clusters", w, c.clusters);
  c.ranks = count_list(j, "ranks", w, c.ranks);
  c.beta_x = field(j, "beta_x", w, c.beta_x);
  c.sigma_x = field(j, "sigma_x", w, c.sigma_x);
  c.sigma_u = field(j, "sigma_u", w, c.sigma_u);
  c.beta_u = field(j, "beta_u", w, c.beta_u);
  c.sigma_e = field(j, "sigma_e", w, c.sigma_e);
  c.sparsity = field(j, "sparsity", w, c.sparsity);
  c.beta_group = field(j, "beta_group", w, c.beta_group);
  c.sigma_group = field(j, "sigma_group", w, c.sigma_group);
  c.sigma_nongroup = field(j, "sigma_nongroup", w, c.sigma_nongroup);
  c.n_groups = count_field(j, "n_groups", w, c.n_groups);
  c.task_subset_min = field(j, "task_subset_min", w, c.task_subset_min);
  c.task_subset_max = field(j, "task_subset_max", w, c.task_subset_max);
  c.seed = field<std::uint64_t>(j, "seed", w, c.seed);
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

json to_json(const HyperParams& h) {
  json j = {{"tensor_ranks", h.tensor_ranks},
            {"scalar_ranks", h.scalar_ranks},
            {"lambda", {{"g", h.lambda.g}, {"h", h.lambda.h}, {"u", h.lambda.u}, {"v", h.lambda.v}}},
            {"epsilon", h.epsilon},
            {"max_iter", h.max_iter},
            {"family", std::string(h.family.name())},
            {"init_ridge", h.init_ridge},
            {"glm_tol", h.glm_tol},
            {"glm_max_iter", h.glm_max_iter}};
  j["shared_columns"] = h.shared_columns ? json(*h.shared_columns) : json(nullptr);
  return j;
}

HyperParams hyper_from_json(const json& j, HyperParams h) {
  const std::string w = "hyper";
  check_object(j, {"tensor_ranks", "scalar_ranks", "shared_columns", "lambda", "epsilon", "max_iter", "family",
                   "init_ridge", "glm_tol", "glm_max_iter"},
               w);
  h.tensor_ranks = count_list(j, "tensor_ranks", w, h.tensor_ranks);
  if (j.contains("scalar_ranks")) {
    const auto t = count_list(j, "scalar_ranks", w, {});
    if (t.size() != 2) throw ConfigError("hyper.scalar_ranks: expected [T0, T1]");
    h.scalar_ranks = {t[0], t[1]};
  }
  if (j.contains("shared_columns"))
    h.shared_columns = j.at("shared_columns").is_null() ? std::nullopt
                                                         : std::optional(count_field(j, "shared_columns", w, 0));
  if (j.contains("lambda")) {
    const auto& l = j.at("lambda");
    if (l.is_number()) {
      h.lambda = Penalties::tied(l.get<double>());
    } else {
      check_object(l, {"g", "h", "u", "v"}, "hyper.lambda");
      h.lambda.g = field(l, "g", "hyper.lambda", h.lambda.g);
      h.lambda.h = field(l, "h", "hyper.lambda", h.lambda.h);
      h.lambda.u = field(l, "u", "hyper.lambda", h.lambda.u);
      h.lambda.v = field(l, "v", "hyper.lambda", h.lambda.v);
    }
  }
  h.epsilon = field(j, "epsilon", w, h.epsilon);
  h.max_iter = count_field(j, "max_iter", w, h.max_iter);
  if (j.contains("family")) {
    try {
      h.family = Family::parse(field<std::string>(j, "family", w, "gaussian"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(w + ".family: " + e.what());
    }
  }
  h.init_ridge = field(j, "init_ridge", w, h.init_ridge);
  h.glm_tol = field(j, "glm_tol", w, h.glm_tol);
  h.glm_max_iter = count_field(j, "glm_max_iter", w, h.glm_max_iter);
  if (!(h.epsilon > 0) || !(h.glm_tol > 0) || !(h.init_ridge >= 0))
    throw ConfigError("hyper: tolerances must be positive and init_ridge nonnegative");
  if (h.lambda.g < 0 || h.lambda.h < 0 || h.lambda.u < 0 || h.lambda.v < 0)
    throw ConfigError("hyper.lambda: penalties must be nonnegative");
  return h;
}

json to_json(const GridTuple& t) {
  json j = {{"tensor_ranks", t.tensor_ranks}, {"scalar_ranks", t.scalar_ranks}, {"lambda", t.lambda}};
  j["shared_columns"] = t.shared_columns ? json(*t.shared_columns) : json(nullptr);
  return j;
}

GridTuple tuple_from_json(const json& j) {
  check_object(j, {"tensor_ranks", "scalar_ranks", "lambda", "shared_columns"}, "tuple");
  GridTuple t;
  t.tensor_ranks = count_list(j, "tensor_ranks", "tuple", {});
  const auto s = count_list(j, "scalar_ranks", "tuple", {0, 0});
  if (s.size() != 2) throw ConfigError("tuple.scalar_ranks: expected two entries");
  t.scalar_ranks = {s[0], s[1]};
  t.lambda = field(j, "lambda", "tuple", 0.0);
  if (j.contains("shared_columns") && !j.at("shared_columns").is_null())
    t.shared_columns = count_field(j, "shared_columns", "tuple", 0);
  return t;
}

json to_json(const Grid& g) {
  json shared = json::array();
  for (const auto& q : g.shared) shared.push_back(q ? json(*q) : json(nullptr));
  return {{"r0", g.r0}, {"r_feature", g.r_feature}, {"t0", g.t0},      {"t1", g.t1},
          {"lambdas", g.lambdas}, {"shared", shared}, {"folds", g.folds}, {"seed", g.seed}};
}

Grid grid_from_json(const json& j, Grid g) {
  const std::string w = "grid";
  check_object(j, {"r0", "r_feature", "t0", "t1", "lambdas", "shared", "folds", "seed"}, w);
  g.r0 = count_list(j, "r0", w, g.r0);
  g.r_feature = count_list(j, "r_feature", w, g.r_feature);
  g.t0 = count_list(j, "t0", w, g.t0);
  g.t1 = count_list(j, "t1", w, g.t1);
  g.lambdas = field(j, "lambdas", w, g.lambdas);
  if (j.contains("shared")) {
    if (!j.at("shared").is_array()) throw ConfigError("grid.shared: expected an array");
    g.shared.clear();
    for (const auto& q : j.at("shared")) {
      if (q.is_null()) g.shared.emplace_back(std::nullopt);
      else if (q.is_number_integer() && q.get<long long>() >= 0) g.shared.emplace_back(q.get<std::size_t>());
      else throw ConfigError("grid.shared: entries must be null or nonnegative integers");
    }
  }
  g.folds = count_field(j, "folds", w, g.folds);
  g.seed = field<std::uint64_t>(j, "seed", w, g.seed);
  try {
    g.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return g;
}

json to_json(const FitTrace& t) {
  return {{"objectives", t.objectives},
          {"block_objectives", t.block_objectives},
          {"iterations", t.iterations},
          {"converged", t.converged},
          {"final_relative_change", t.final_relative_change},
          {"unconverged_subproblems", t.unconverged_subproblems}};
}

json to_json(const CvReport& r) {
  json rows = json::array();
  for (std::size_t t = 0; t < r.tuples.size(); ++t) {
    json row = to_json(r.tuples[t]);
    row["score"] = std::isfinite(r.scores[t]) ? json(r.scores[t]) : json(nullptr);
    if (!r.errors[t].empty()) row["error"] = r.errors[t];
    rows.push_back(row);
  }
  return {{"metric", r.metric}, {"selected_index", r.selected}, {"selected", to_json(r.best())},
          {"best_score", r.scores[r.selected]}, {"scores", rows}, {"folds", r.folds}};
}

json to_json(const ExperimentConfig& c) {
  json settings = json::array();
  for (const auto& s : c.settings) settings.push_back({{"beta_u", s.beta_u}, {"sigma_e", s.sigma_e}, {"sparsity", s.sparsity}});
  json methods = json::array();
  for (auto m : c.methods) methods.push_back(method_name(m));
  return {{"scenario", to_json(c.scenario)},
          {"settings", settings},
          {"methods", methods},
          {"replications", c.replications},
          {"seeds", c.seeds},
          {"master_seed", c.master_seed},
          {"tuning", c.tuning == Tuning::CrossValidation ? "cv" : "fixed"},
          {"grid", to_json(c.grid)},
          {"hyper", to_json(c.hyper)},
          {"ridge", c.ridge},
          {"threads", c.threads}};
}

ExperimentFile experiment_from_json(const json& j) {
  const std::string w = "config";
  check_object(j, {"scenario", "settings", "methods", "replications", "seeds", "master_seed", "tuning", "grid",
                   "hyper", "ridge", "threads", "output"},
               w);
  ExperimentFile f;
  ExperimentConfig& c = f.experiment;
  if (j.contains("scenario")) c.scenario = scenario_from_json(j.at("scenario"));
  if (j.contains("settings")) {
    if (!j.at("settings").is_array()) throw ConfigError("config.settings: expected an array");
    for (const auto& s : j.at("settings")) {
      check_object(s, {"beta_u", "sigma_e", "sparsity"}, "config.settings[]");
      c.settings.push_back({field(s, "beta_u", "settings", c.scenario.beta_u),
                            field(s, "sigma_e", "settings", c.scenario.sigma_e),
                            field(s, "sparsity", "settings", c.scenario.sparsity)});
    }
  }
  if (j.contains("methods")) {
    c.methods.clear();
    for (const auto& m : field<std::vector<std::string>>(j, "methods", w, {})) {
      try {
        c.methods.push_back(parse_method(m));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config.methods: ") + e.what());
      }
    }
  }
  c.replications = count_field(j, "replications", w, c.replications);
  c.seeds = field(j, "seeds", w, c.seeds);
  c.master_seed = field<std::uint64_t>(j, "master_seed", w, c.master_seed);
  const auto tuning = field<std::string>(j, "tuning", w, "cv");
  if (tuning == "cv") c.tuning = Tuning::CrossValidation;
  else if (tuning == "fixed") c.tuning = Tuning::Fixed;
  else throw ConfigError("config.tuning: expected \"cv\" or \"fixed\"");
  if (j.contains("grid")) c.grid = grid_from_json(j.at("grid"));
  if (j.contains("hyper")) c.hyper = hyper_from_json(j.at("hyper"));
  c.ridge = field(j, "ridge", w, c.ridge);
  c.threads = count_field(j, "threads", w, c.threads);
  if (j.contains("output")) {
    check_object(j.at("output"), {"csv", "json"}, "config.output");
    f.csv_path = field<std::string>(j.at("output"), "csv", "config.output", "");
    f.json_path = field<std::string>(j.at("output"), "json", "config.output", "");
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return f;
}

json read_json(const fs::path& path) {
  const std::string text = slurp(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = temp_sibling(path);
  try {
    if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
    write_raw(tmp, text);
    fs::rename(tmp, path);
  } catch (const fs::filesystem_error& e) {
    std::error_code ec;
    fs::remove(tmp, ec);
    throw IoError(e.what());
  } catch (...) {
    std::error_code ec;
    fs::remove(tmp, ec);
    throw;
  }
}

// ---------------------------------------------------------------------------
// Model files

void write_model(const fs::path& dir, const SavedModel& model) {
  write_directory_atomically(dir, [&](const fs::path& out) {
    json j = {{"format", "tenmtl-model"}, {"version", 1}, {"method", model.method},
              {"family", std::string(model.family.name())}};
    if (model.hyper) j["hyper"] = to_json(*model.hyper);
    if (model.state) {
      const TuckerState& s = *model.state;
      json u = json::array();
      for (std::size_t d = 0; d < s.u.size(); ++d) u.push_back(matrix_entry(out, "u" + std::to_string(d + 1), s.u[d]));
      json state = {{"task_ids", s.task_ids},
                    {"w0", matrix_entry(out, "w0", s.w0)},
                    {"f0", matrix_entry(out, "f0", s.f0)},
                    {"u", u},
                    {"d0", matrix_entry(out, "d0", s.d0)},
                    {"v1", matrix_entry(out, "v1", s.v1)},
                    {"h", matrix_entry(out, "h", s.h)}};
      if (s.has_tensor()) {
        write_tensor(out / "g", s.g);
        state["g"] = {{"shape", s.g.shape()}, {"file", "g"}};
      } else {
        state["g"] = nullptr;
      }
      j["state"] = state;
    }
    json models = json::array();
    for (std::size_t i = 0; i < model.models.size(); ++i) {
      const auto& m = model.models[i];
      json e = {{"task_id", m.task_id}, {"gamma", std::vector<double>(m.gamma.begin(), m.gamma.end())}};
      if (!m.b.empty()) {
        const std::string name = "b_" + std::to_string(i);
        write_tensor(out / name, m.b);
        e["b"] = name;
      } else {
        e["b"] = nullptr;
      }
      models.push_back(e);
    }
    j["models"] = models;
    write_raw(out / "model.json", dump(j));
  });
}

SavedModel read_model(const fs::path& dir) {
  const json j = read_json(dir / "model.json");
  SavedModel m;
  try {
    if (j.value("format", "") != "tenmtl-model") throw IoError("model.json: not a model file");
    m.method = j.at("method").get<std::string>();
    m.family = Family::parse(j.at("family").get<std::string>());
    if (j.contains("hyper")) m.hyper = hyper_from_json(j.at("hyper"));
    if (j.contains("state")) {
      const json& s = j.at("state");
      TuckerState st;
      st.task_ids = s.at("task_ids").get<std::vector<std::string>>();
      st.w0 = read_matrix_entry(dir, s.at("w0"));
      st.f0 = read_matrix_entry(dir, s.at("f0"));
      for (const auto& e : s.at("u")) st.u.push_back(read_matrix_entry(dir, e));
      st.d0 = read_matrix_entry(dir, s.at("d0"));
      st.v1 = read_matrix_entry(dir, s.at("v1"));
      st.h = read_matrix_entry(dir, s.at("h"));
      if (!s.at("g").is_null()) st.g = read_tensor(dir / s.at("g").at("file").get<std::string>());
      m.state = std::move(st);
    }
    for (const auto& e : j.at("models")) {
      PersonalizedModel pm;
      pm.task_id = e.at("task_id").get<std::string>();
      const auto gamma = e.at("gamma").get<std::vector<double>>();
      pm.gamma = Eigen::Map<const Eigen::VectorXd>(gamma.data(), static_cast<Eigen::Index>(gamma.size()));
      if (!e.at("b").is_null()) pm.b = read_tensor(dir / e.at("b").get<std::string>());
      m.models.push_back(std::move(pm));
    }
  } catch (const json::exception& e) {
    throw IoError("model.json: " + std::string(e.what()));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Experiment outputs

std::string results_csv(const ExperimentResult& r) {
  std::string out = "scenario,beta_u,sigma_e,s,method,mean_rmse,std_rmse,reps\n";
  for (const auto& row : r.rows)
    out += scenario_name(row.scenario) + "," + format_double(row.setting.beta_u) + "," +
           format_double(row.setting.sigma_e) + "," + format_double(row.setting.sparsity) + "," +
           method_name(row.method) + "," + format_double(row.mean_rmse) + "," + format_double(row.std_rmse) + "," +
           std::to_string(row.reps) + "\n";
  return out;
}

std::string results_table(const ExperimentResult& r, const ExperimentConfig& cfg) {
  std::vector<Method> methods;
  for (const auto& row : r.rows)
    if (std::find(methods.begin(), methods.end(), row.method) == methods.end()) methods.push_back(row.method);
  (void)cfg;
  std::string out = "beta_u,sigma_e,s";
  for (auto m : methods) out += "," + method_name(m);
  out += "\n";
  std::map<std::tuple<double, double, double>, std::map<Method, std::string>> cells;
  std::vector<std::tuple<double, double, double>> order;
  for (const auto& row : r.rows) {
    const auto key = std::make_tuple(row.setting.beta_u, row.setting.sigma_e, row.setting.sparsity);
    if (!cells.count(key)) order.push_back(key);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f (%.3f)", row.mean_rmse, row.std_rmse);
    cells[key][row.method] = buf;
  }
  for (const auto& key : order) {
    out += format_double(std::get<0>(key)) + "," + format_double(std::get<1>(key)) + "," + format_double(std::get<2>(key));
    for (auto m : methods) out += "," + cells[key][m];
    out += "\n";
  }
  return out;
}

json results_json(const ExperimentResult& r, const ExperimentConfig& cfg) {
  json rows = json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"scenario", scenario_name(row.scenario)},
                    {"beta_u", row.setting.beta_u},
                    {"sigma_e", row.setting.sigma_e},
                    {"s", row.setting.sparsity},
                    {"method", method_name(row.method)},
                    {"mean_rmse", row.mean_rmse},
                    {"std_rmse", row.std_rmse},
                    {"reps", row.reps}});
  json reps = json::array();
  for (const auto& rec : r.records) {
    json e = {{"setting", rec.setting},
              {"replication", rec.replication},
              {"seed", rec.seed},
              {"method", method_name(rec.method)}};
    if (rec.error.empty()) {
      e["rmse"] = rec.rmse;
      e["task_rmse"] = rec.task_rmse;
    } else {
      e["error"] = rec.error;
    }
    if (rec.selected) e["selected"] = to_json(*rec.selected);
    reps.push_back(e);
  }
  return {{"config", to_json(cfg)}, {"rows", rows}, {"replications", reps}};
}

ExperimentResult results_from_json(const json& j) {
  ExperimentResult r;
  try {
    for (const auto& row : j.at("rows")) {
      ExperimentRow out;
      out.scenario = parse_scenario(row.at("scenario").get<std::string>());
      out.setting = {row.at("beta_u").get<double>(), row.at("sigma_e").get<double>(), row.at("s").get<double>()};
      out.method = parse_method(row.at("method").get<std::string>());
      out.mean_rmse = row.at("mean_rmse").is_null() ? std::nan("") : row.at("mean_rmse").get<double>();
      out.std_rmse = row.at("std_rmse").get<double>();
      out.reps = row.at("reps").get<std::size_t>();
      r.rows.push_back(out);
    }
  } catch (const std::exception& e) {
    throw IoError(std::string("results file: ") + e.what());
  }
  return r;
}

}  // namespace tenmtl::io
