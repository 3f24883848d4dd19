#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "lpk/experiment.hpp"

using namespace lpk;

namespace {

namespace fs = std::filesystem;

std::string fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// the two-sample scalar quadratic: l(w, z) = (w - z)^2 / 2 with z in {0, 2}
std::string write_quadratic_csv(const std::string& dir) {
  const std::string path = dir + "/quad.csv";
  std::ofstream out(path);
  out << "x0,y0\n1,0\n1,2\n";
  return path;
}

ExperimentConfig quadratic_config(const std::string& dir) {
  ExperimentConfig cfg = ExperimentConfig::parse_string(R"(
experiment = train-bound
seed = 7
data.kind = csv
data.d = 1
model.kind = linear
model.input_dim = 1
model.zero_init = true
loss.kind = square
flow.eta = 1e-4
flow.time = 1
bound.regime = convex
bound.delta = 0.05
bound.probes = 8
)");
  cfg.set("data.csv_path", write_quadratic_csv(dir));
  return cfg;
}

}  // namespace

TEST_CASE("config parsing") {
  const ExperimentConfig cfg = ExperimentConfig::parse_string(
      "# comment\n"
      "experiment = train-bound\n"
      "seed = 42   # trailing comment\n"
      "flow.eta = 1e-3\n"
      "noise.fractions = 0, 0.2,0.4\n"
      "model.zero_init = true\n");
  CHECK(cfg.get("experiment") == "train-bound");
  CHECK(cfg.get_long("seed") == 42);
  CHECK(cfg.get_double("flow.eta") == 1e-3);
  CHECK(cfg.get_double_list("noise.fractions") == std::vector<double>{0.0, 0.2, 0.4});
  CHECK(cfg.get_bool_or("model.zero_init", false));
  CHECK(cfg.get_or("missing", "dflt") == "dflt");
  CHECK_THROWS_WITH_AS(cfg.get("model.kind"), doctest::Contains("model.kind"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::parse_string("no equals sign\n"), ConfigError);

  ExperimentConfig copy = cfg;
  copy.set("seed", "43");
  CHECK(copy.canonical() != cfg.canonical());
}

TEST_CASE("validate_config names the missing block") {
  ExperimentConfig cfg = ExperimentConfig::parse_string(
      "experiment = train-bound\nseed = 1\ndata.kind = two-cluster\ndata.n = 8\ndata.d = 2\n"
      "data.separation = 3\n");
  CHECK_THROWS_WITH_AS(validate_config(cfg), doctest::Contains("model"), ConfigError);
  cfg.set("model.kind", "linear");
  cfg.set("model.input_dim", "2");
  CHECK_THROWS_WITH_AS(validate_config(cfg), doctest::Contains("loss"), ConfigError);
  cfg.set("loss.kind", "logistic");
  CHECK_THROWS_WITH_AS(validate_config(cfg), doctest::Contains("flow"), ConfigError);
  cfg.set("flow.eta", "0.01");
  cfg.set("flow.time", "1");
  validate_config(cfg);  // now complete
}

TEST_CASE("train-bound on the scalar quadratic reproduces the analytic gamma") {
  const std::string dir = fresh_dir("lpk_run_quad");
  const ExperimentConfig cfg = quadratic_config(dir);
  const RunManifest manifest = run_train_bound(cfg, dir + "/out");

  const auto report = nlohmann::json::parse(slurp(dir + "/out/report.json"));
  CHECK(report["gamma"].get<double>() == doctest::Approx(1.113).epsilon(2e-3));
  CHECK(report["total"].get<double>() >= report["gamma"].get<double>());
  CHECK(report["regime"] == "convex");

  // manifest lists exactly the produced files and they exist
  CHECK(manifest.files.size() == 2);  // report.json, trace.csv
  for (const auto& f : manifest.files) CHECK(fs::exists(dir + "/out/" + f.name));
  CHECK(fs::exists(dir + "/out/manifest.json"));
  fs::remove_all(dir);
}

TEST_CASE("train-bound determinism: identical config and seed give identical bytes") {
  const std::string dir = fresh_dir("lpk_run_det");
  const ExperimentConfig cfg = quadratic_config(dir);
  const RunManifest m1 = run_train_bound(cfg, dir + "/a");
  const RunManifest m2 = run_train_bound(cfg, dir + "/b");
  REQUIRE(m1.files.size() == m2.files.size());
  for (size_t i = 0; i < m1.files.size(); ++i) {
    CHECK(m1.files[i].name == m2.files[i].name);
    CHECK(m1.files[i].hash == m2.files[i].hash);
    CHECK(slurp(dir + "/a/" + m1.files[i].name) == slurp(dir + "/b/" + m2.files[i].name));
  }
  CHECK(m1.config_hash == m2.config_hash);
  fs::remove_all(dir);
}

TEST_CASE("train-bound with a stationary start has an identically zero gamma trace") {
  const std::string dir = fresh_dir("lpk_run_flat");
  const std::string csv = dir + "/flat.csv";
  {
    std::ofstream out(csv);
    out << "x0,y0\n1,-1\n1,1\n";
  }
  ExperimentConfig cfg = quadratic_config(dir);
  cfg.set("data.csv_path", csv);
  run_train_bound(cfg, dir + "/out");
  const std::string trace = slurp(dir + "/out/trace.csv");
  std::stringstream ss(trace);
  std::string line;
  std::getline(ss, line);  // header
  while (std::getline(ss, line)) {
    const auto first_comma = line.find(',');
    const auto second_comma = line.find(',', first_comma + 1);
    const auto third_comma = line.find(',', second_comma + 1);
    const double gamma = std::stod(line.substr(second_comma + 1, third_comma - second_comma - 1));
    CHECK(gamma == 0.0);
  }
  fs::remove_all(dir);
}

TEST_CASE("noise sweep rows and the clean-run reduction") {
  const std::string dir = fresh_dir("lpk_run_sweep");
  ExperimentConfig cfg = ExperimentConfig::parse_string(R"(
experiment = noise-sweep
seed = 11
data.kind = two-cluster
data.n = 24
data.d = 3
data.separation = 4
data.test_n = 24
model.kind = linear
model.input_dim = 3
model.zero_init = true
loss.kind = logistic
flow.eta = 0.01
flow.time = 1
bound.regime = convex
noise.fractions = 0,0.5
noise.seeds = 2
)");
  run_noise_sweep(cfg, dir + "/out");
  const std::string rows = slurp(dir + "/out/sweep.csv");
  CHECK(std::count(rows.begin(), rows.end(), '\n') == 1 + 2 * 2);  // header + fractions x seeds

  // p = 0 reproduces the train-bound gamma on clean data
  ExperimentConfig tb = cfg;
  tb.set("experiment", "train-bound");
  run_train_bound(tb, dir + "/tb");
  const auto report = nlohmann::json::parse(slurp(dir + "/tb/report.json"));
  const auto sweep = nlohmann::json::parse(slurp(dir + "/out/report.json"));
  CHECK(sweep["mean_gamma"][0].get<double>() > 0.0);
  std::stringstream ss(rows);
  std::string line;
  std::getline(ss, line);
  std::getline(ss, line);  // fraction 0, seed 0
  std::stringstream cells(line);
  std::string cell;
  std::getline(cells, cell, ',');
  std::getline(cells, cell, ',');
  std::getline(cells, cell, ',');
  CHECK(std::stod(cell) == doctest::Approx(report["gamma"].get<double>()).epsilon(1e-12));
  fs::remove_all(dir);
}

TEST_CASE("krr runner cross-checks the closed form") {
  const std::string dir = fresh_dir("lpk_run_krr");
  ExperimentConfig cfg = ExperimentConfig::parse_string(R"(
experiment = krr
seed = 3
krr.n = 20
krr.p = 8
krr.lambda = 0.1
krr.time = 2
krr.eta = 1e-3
)");
  run_krr(cfg, dir + "/out");
  const auto report = nlohmann::json::parse(slurp(dir + "/out/report.json"));
  CHECK(report["relative_gap"].get<double>() <= 0.01);
  CHECK(report["identity_residual"].get<double>() <= 1e-10);
  fs::remove_all(dir);
}

TEST_CASE("single-index runner emits overlap traces") {
  const std::string dir = fresh_dir("lpk_run_si");
  ExperimentConfig cfg = ExperimentConfig::parse_string(R"(
experiment = single-index
seed = 5
data.n = 128
data.d = 6
data.link = he1
data.noise = 0.1
single.width = 8
single.lambda = 0.05
single.rho = 1
single.support = 2
single.warm_time = 1
single.time = 2
single.eta = 0.01
single.seeds = 2
)");
  run_single_index(cfg, dir + "/out");
  const auto report = nlohmann::json::parse(slurp(dir + "/out/report.json"));
  CHECK(report["overlaps"].size() == 2);
  CHECK(report["mean_gamma"].get<double>() >= 0.0);
  CHECK(fs::exists(dir + "/out/overlap.csv"));
  CHECK(fs::exists(dir + "/out/runs.csv"));
  fs::remove_all(dir);
}

TEST_CASE("cli exit codes") {
  const std::string dir = fresh_dir("lpk_cli");
  const std::string cfg_path = dir + "/cfg.txt";
  {
    ExperimentConfig cfg = quadratic_config(dir);
    std::ofstream out(cfg_path);
    out << cfg.canonical();
  }
  const std::string cli = LPK_CLI_PATH;
  auto run = [&](const std::string& args) {
    const std::string cmd = cli + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
  };
  CHECK(run("train-bound --config " + cfg_path + " --dry-run") == 0);
  CHECK(run("train-bound --config " + cfg_path + " --out " + dir + "/out") == 0);
  CHECK(run("train-bound --config " + dir + "/missing.txt") == 2);

  // invalid block: negative step size
  {
    ExperimentConfig bad = quadratic_config(dir);
    bad.set("flow.eta", "-1");
    std::ofstream out(dir + "/bad.txt");
    out << bad.canonical();
  }
  CHECK(run("train-bound --config " + dir + "/bad.txt") == 2);

  // divergent recipe: exit code 3
  {
    ExperimentConfig div = quadratic_config(dir);
    div.set("flow.eta", "4");
    div.set("flow.time", "4000");
    std::ofstream out(dir + "/div.txt");
    out << div.canonical();
  }
  CHECK(run("train-bound --config " + dir + "/div.txt") == 3);

  // unreadable data file: exit code 4
  {
    ExperimentConfig io = quadratic_config(dir);
    io.set("data.csv_path", dir + "/nope.csv");
    std::ofstream out(dir + "/io.txt");
    out << io.canonical();
  }
  CHECK(run("train-bound --config " + dir + "/io.txt") == 4);
  fs::remove_all(dir);
}
