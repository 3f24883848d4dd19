#include "lpk/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "lpk/pathkernel.hpp"

namespace lpk {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

ExperimentConfig ExperimentConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_string(ss.str());
}

ExperimentConfig ExperimentConfig::parse_string(const std::string& text) {
  ExperimentConfig cfg;
  std::stringstream ss(text);
  std::string line;
  long line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: expected key = value at line " + std::to_string(line_no));
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config: empty key at line " + std::to_string(line_no));
    cfg.entries_[key] = value;
  }
  return cfg;
}

bool ExperimentConfig::has(const std::string& key) const { return entries_.count(key) > 0; }

const std::string& ExperimentConfig::get(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError("config: missing key '" + key + "'");
  return it->second;
}

std::string ExperimentConfig::get_or(const std::string& key, const std::string& dflt) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? dflt : it->second;
}

double ExperimentConfig::get_double(const std::string& key) const {
  try {
    return std::stod(get(key));
  } catch (const std::invalid_argument&) {
    throw ConfigError("config: key '" + key + "' is not a number");
  }
}

double ExperimentConfig::get_double_or(const std::string& key, double dflt) const {
  return has(key) ? get_double(key) : dflt;
}

long ExperimentConfig::get_long(const std::string& key) const {
  try {
    return std::stol(get(key));
  } catch (const std::invalid_argument&) {
    throw ConfigError("config: key '" + key + "' is not an integer");
  }
}

long ExperimentConfig::get_long_or(const std::string& key, long dflt) const {
  return has(key) ? get_long(key) : dflt;
}

bool ExperimentConfig::get_bool_or(const std::string& key, bool dflt) const {
  if (!has(key)) return dflt;
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config: key '" + key + "' is not a boolean");
}

std::vector<double> ExperimentConfig::get_double_list(const std::string& key) const {
  std::vector<double> out;
  std::stringstream ss(get(key));
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    cell = trim(cell);
    if (cell.empty()) continue;
    try {
      out.push_back(std::stod(cell));
    } catch (const std::invalid_argument&) {
      throw ConfigError("config: key '" + key + "' has a non-numeric entry '" + cell + "'");
    }
  }
  if (out.empty()) throw ConfigError("config: key '" + key + "' is an empty list");
  return out;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  entries_[key] = value;
}

std::string ExperimentConfig::canonical() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
  return out;
}

uint64_t fnv1a64(std::string_view bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(uint64_t value) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<size_t>(i)] = digits[value & 0xf];
    value >>= 4;
  }
  return out;
}

// ---------------------------------------------------------------------------
// config -> blocks

ModelSpec model_from_config(const ExperimentConfig& cfg) {
  if (!cfg.has("model.kind")) throw ConfigError("config: missing block 'model'");
  ModelSpec spec;
  const std::string kind = cfg.get("model.kind");
  if (kind == "linear")
    spec.kind = ModelKind::Linear;
  else if (kind == "feature-map")
    spec.kind = ModelKind::FeatureMap;
  else if (kind == "mlp2")
    spec.kind = ModelKind::Mlp2;
  else
    throw ConfigError("config: unknown model.kind '" + kind + "'");
  spec.input_dim = static_cast<int>(cfg.get_long("model.input_dim"));
  spec.output_dim = static_cast<int>(cfg.get_long_or("model.output_dim", 1));
  if (spec.kind == ModelKind::Mlp2) {
    spec.width = static_cast<int>(cfg.get_long("model.width"));
    const std::string act = cfg.get_or("model.activation", "softplus");
    if (act == "softplus")
      spec.activation = Activation::Softplus;
    else if (act == "relu")
      spec.activation = Activation::Relu;
    else
      throw ConfigError("config: unknown model.activation '" + act + "'");
    const std::string scaling = cfg.get_or("model.scaling", "standard");
    if (scaling == "standard")
      spec.scaling = OutputScaling::Standard;
    else if (scaling == "ntk")
      spec.scaling = OutputScaling::NtkSqrtWidth;
    else
      throw ConfigError("config: unknown model.scaling '" + scaling + "'");
    spec.train_hidden = cfg.get_bool_or("model.train_hidden", true);
    spec.train_output = cfg.get_bool_or("model.train_output", true);
  }
  if (spec.kind == ModelKind::FeatureMap) {
    spec.feature_id = cfg.get("model.feature_id");
    spec.feature_dim = static_cast<int>(cfg.get_long("model.feature_dim"));
  }
  spec.validate();
  return spec;
}

LossSpec loss_from_config(const ExperimentConfig& cfg) {
  if (!cfg.has("loss.kind")) throw ConfigError("config: missing block 'loss'");
  LossSpec loss;
  const std::string kind = cfg.get("loss.kind");
  if (kind == "square")
    loss.kind = LossKind::Square;
  else if (kind == "logistic")
    loss.kind = LossKind::Logistic;
  else if (kind == "regularized-square") {
    loss.kind = LossKind::RegularizedSquare;
    loss.ridge = cfg.get_double("loss.ridge");
  } else
    throw ConfigError("config: unknown loss.kind '" + kind + "'");
  loss.validate();
  return loss;
}

FlowConfig flow_from_config(const ExperimentConfig& cfg) {
  if (!cfg.has("flow.eta")) throw ConfigError("config: missing block 'flow'");
  FlowConfig flow;
  flow.eta = cfg.get_double("flow.eta");
  flow.total_time = cfg.get_double("flow.time");
  const std::string mode = cfg.get_or("flow.mode", "gf");
  if (mode == "gf")
    flow.mode = FlowMode::Gf;
  else if (mode == "sgf") {
    flow.mode = FlowMode::Sgf;
    flow.batch_size = static_cast<int>(cfg.get_long("flow.batch_size"));
  } else
    throw ConfigError("config: unknown flow.mode '" + mode + "'");
  flow.checkpoint_stride = cfg.get_long_or("flow.checkpoint_stride", 0);
  flow.snapshot_stride = cfg.get_long_or("flow.snapshot_stride", 0);
  const std::string record = cfg.get_or("flow.record", "gamma-only");
  if (record == "gamma-only") {
  } else if (record == "full-gram")
    flow.record.full_gram = true;
  else if (record == "checkpoints")
    flow.record.param_snapshots = true;
  else
    throw ConfigError("config: unknown flow.record '" + record + "'");
  // sgf traces are reported per unit interval
  if (flow.mode == FlowMode::Sgf && flow.checkpoint_stride == 0)
    flow.checkpoint_stride = flow.steps_per_unit();
  return flow;
}

Dataset dataset_from_config(const ExperimentConfig& cfg, Rng& rng) {
  if (!cfg.has("data.kind")) throw ConfigError("config: missing block 'data'");
  const std::string kind = cfg.get("data.kind");
  if (kind == "two-cluster")
    return gen_two_cluster(cfg.get_long("data.n"), static_cast<int>(cfg.get_long("data.d")),
                           cfg.get_double("data.separation"), rng);
  if (kind == "gaussian-linear")
    return gen_gaussian_linear(cfg.get_long("data.n"), static_cast<int>(cfg.get_long("data.d")),
                               cfg.get_double_or("data.noise", 0.0), rng);
  if (kind == "single-index") {
    const std::string link = cfg.get_or("data.link", "he2");
    HermiteLink h = link == "he1"   ? HermiteLink::He1
                    : link == "he2" ? HermiteLink::He2
                    : link == "he3" ? HermiteLink::He3
                                    : throw ConfigError("config: unknown data.link '" + link + "'");
    return gen_single_index(cfg.get_long("data.n"), static_cast<int>(cfg.get_long("data.d")), h,
                            cfg.get_double_or("data.noise", 0.0), rng);
  }
  if (kind == "csv") {
    CsvSchema schema;
    schema.d = static_cast<int>(cfg.get_long("data.d"));
    schema.k = static_cast<int>(cfg.get_long_or("data.k", 1));
    return load_csv(cfg.get("data.csv_path"), schema);
  }
  if (kind == "idx") {
    std::pair<int, int> filter{static_cast<int>(cfg.get_long("data.digit_a")),
                               static_cast<int>(cfg.get_long("data.digit_b"))};
    return load_mnist_idx(cfg.get("data.idx_images"), cfg.get("data.idx_labels"), &filter,
                          cfg.get_long_or("data.max_n", -1));
  }
  throw ConfigError("config: unknown data.kind '" + kind + "'");
}

std::optional<Dataset> test_set_from_config(const ExperimentConfig& cfg, Rng& rng) {
  const std::string kind = cfg.get("data.kind");
  if (kind == "idx") {
    if (!cfg.has("data.idx_images_test")) return std::nullopt;
    std::pair<int, int> filter{static_cast<int>(cfg.get_long("data.digit_a")),
                               static_cast<int>(cfg.get_long("data.digit_b"))};
    return load_mnist_idx(cfg.get("data.idx_images_test"), cfg.get("data.idx_labels_test"), &filter,
                          cfg.get_long_or("data.test_n", -1));
  }
  const long test_n = cfg.get_long_or("data.test_n", 0);
  if (test_n <= 0) return std::nullopt;
  ExperimentConfig copy = cfg;
  copy.set("data.n", std::to_string(test_n));
  return dataset_from_config(copy, rng);
}

void validate_config(const ExperimentConfig& cfg) {
  const std::string kind = cfg.get("experiment");
  if (!cfg.has("seed")) throw ConfigError("config: missing key 'seed'");
  Rng probe(static_cast<uint64_t>(cfg.get_long("seed")));
  if (kind == "train-bound" || kind == "correlation" || kind == "noise-sweep" ||
      kind == "stability" || kind == "ntk") {
    ExperimentConfig copy = cfg;
    if (copy.get_or("data.kind", "") == "idx" || copy.get_or("data.kind", "") == "csv") {
      // path existence is an I/O concern checked at run time
    } else {
      copy.set("data.n", "8");
      Rng r = probe.stream(1);
      dataset_from_config(copy, r);
    }
    model_from_config(cfg);
    loss_from_config(cfg);
    flow_from_config(cfg);
    if (kind != "stability") {
      regime_from_name(cfg.get_or("bound.regime", "non-convex"));
      const double delta = cfg.get_double_or("bound.delta", 0.05);
      if (delta <= 0 || delta >= 1) throw ConfigError("config: bound.delta must be in (0,1)");
    } else {
      regime_from_name(cfg.get("stability.regime"));
    }
    if (kind == "noise-sweep") cfg.get_double_list("noise.fractions");
  } else if (kind == "krr") {
    cfg.get_long("krr.n");
    cfg.get_long("krr.p");
    cfg.get_double("krr.lambda");
    cfg.get_double("krr.time");
    cfg.get_double("krr.eta");
  } else if (kind == "single-index") {
    cfg.get_long("data.n");
    cfg.get_long("data.d");
    cfg.get_long("single.width");
    cfg.get_double("single.time");
    cfg.get_double("single.warm_time");
    cfg.get_double("single.eta");
    cfg.get_double("single.lambda");
  } else {
    throw ConfigError("config: unknown experiment kind '" + kind + "'");
  }
}

// ---------------------------------------------------------------------------
// run machinery

namespace {

struct RunContext {
  std::string dir;
  std::vector<ManifestFile> files;
  std::vector<std::string> warnings;

  void write_text(const std::string& name, const std::string& content) {
    std::filesystem::create_directories(dir);
    const std::string path = dir + "/" + name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("run: cannot open " + path);
    out << content;
    out.close();
    files.push_back({name, content.size(), hex64(fnv1a64(content))});
  }
};

RunManifest finish(const ExperimentConfig& cfg, RunContext& ctx,
                   std::chrono::steady_clock::time_point t0) {
  RunManifest manifest;
  manifest.config_hash = hex64(fnv1a64(cfg.canonical()));
  manifest.artifact_version = kArtifactVersion;
  manifest.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  manifest.files = ctx.files;
  manifest.warnings = ctx.warnings;

  nlohmann::json j;
  j["config_hash"] = manifest.config_hash;
  j["artifact_version"] = manifest.artifact_version;
  j["wall_clock_seconds"] = manifest.wall_clock_seconds;
  j["files"] = nlohmann::json::array();
  for (const auto& f : manifest.files)
    j["files"].push_back({{"name", f.name}, {"bytes", f.bytes}, {"hash", f.hash}});
  j["warnings"] = manifest.warnings;
  // manifest written last: its presence marks a completed run
  std::filesystem::create_directories(ctx.dir);
  std::ofstream out(ctx.dir + "/manifest.json", std::ios::binary);
  out << j.dump(2) << "\n";
  return manifest;
}

struct TrainedRun {
  Dataset data;
  std::optional<Dataset> test;
  ModelSpec spec;
  LossSpec loss;
  FlowConfig flow;
  ParamVector w0;
  TrajectoryRecord traj;
  double gamma = 0.0;
  ConstantEstimates constants;
  Regime regime = Regime::NonConvex;
  double delta = 0.05;
  std::optional<double> gap;
  std::vector<double> sgf_gamma_cumulative;
};

std::optional<double> ridge_assertion(const LossSpec& loss, Regime regime) {
  if (regime == Regime::StronglyConvex && loss.kind == LossKind::RegularizedSquare &&
      loss.ridge > 0)
    return loss.ridge;
  return std::nullopt;
}

TrainedRun train_from_config(const ExperimentConfig& cfg, long run_index) {
  const uint64_t seed = static_cast<uint64_t>(cfg.get_long("seed"));
  Rng master(seed);

  TrainedRun run;
  Rng data_rng = master.stream(1);
  run.data = dataset_from_config(cfg, data_rng);
  const double corrupt = cfg.get_double_or("data.corrupt_fraction", 0.0);
  if (corrupt > 0) {
    Rng noise_rng = master.stream(6);
    run.data = corrupt_labels(run.data, corrupt, noise_rng);
  }
  Rng test_rng = master.stream(2);
  run.test = test_set_from_config(cfg, test_rng);
  run.spec = model_from_config(cfg);
  run.loss = loss_from_config(cfg);
  run.flow = flow_from_config(cfg);
  run.regime = regime_from_name(cfg.get_or("bound.regime", "non-convex"));
  run.delta = cfg.get_double_or("bound.delta", 0.05);

  Rng init_rng = master.stream(300 + static_cast<uint64_t>(run_index));
  run.w0 = init_params(run.spec, init_rng, {cfg.get_bool_or("model.zero_init", false)});

  const Dataset* test_ptr = run.test ? &*run.test : nullptr;
  if (run.flow.mode == FlowMode::Gf) {
    run.traj = integrate_gf(run.spec, run.loss, run.w0, run.data, run.flow, nullptr, test_ptr);
  } else {
    Rng sched_rng = master.stream(4);
    const BatchSchedule schedule = make_schedule(run.data.n(), run.flow.batch_size,
                                                 std::lround(run.flow.total_time), sched_rng);
    run.traj = integrate_sgf(run.spec, run.loss, run.w0, run.data, run.flow, schedule, nullptr,
                             test_ptr);
  }
  if (run.traj.diverged)
    throw DivergenceError("training diverged", run.traj.divergence_step);

  if (run.flow.mode == FlowMode::Gf) {
    const LpkGram gram = accumulate(run.traj, run.flow.record.full_gram ? GramMode::Full
                                                                        : GramMode::DiagOnly);
    run.gamma = gamma_gf(gram);
  } else {
    const IntervalGrams grams = accumulate_intervals(run.traj);
    run.sgf_gamma_cumulative = gamma_sgf_cumulative(grams);
    run.gamma = run.sgf_gamma_cumulative.empty() ? 0.0 : run.sgf_gamma_cumulative.back();
  }

  Rng const_rng = master.stream(5);
  run.constants = estimate_constants(run.traj, run.spec, run.loss, run.data, const_rng,
                                     static_cast<int>(cfg.get_long_or("bound.probes", 32)),
                                     ridge_assertion(run.loss, run.regime));
  if (run.test) {
    const auto& last = run.traj.checkpoints.back();
    run.gap = last.eval_loss - last.train_loss;
  }
  return run;
}

std::string trace_csv(const TrainedRun& run) {
  std::ostringstream out;
  out.precision(17);
  out << "step,time,gamma,train_loss,eval_loss,gap,epsilon,total\n";
  const std::vector<double> gammas = run.flow.mode == FlowMode::Gf
                                         ? gamma_trace(run.traj)
                                         : std::vector<double>();
  const double slack = 3.0 * std::sqrt(std::log(4.0 * static_cast<double>(run.traj.n) / run.delta) /
                                       (2.0 * static_cast<double>(run.traj.n)));
  for (size_t c = 0; c < run.traj.checkpoints.size(); ++c) {
    const auto& ck = run.traj.checkpoints[c];
    double gamma_c;
    if (run.flow.mode == FlowMode::Gf) {
      gamma_c = gammas[c];
    } else {
      // completed unit intervals at this checkpoint
      const long done = std::min<long>(ck.step / run.flow.steps_per_unit(),
                                       static_cast<long>(run.sgf_gamma_cumulative.size()));
      gamma_c = done == 0 ? 0.0 : run.sgf_gamma_cumulative[static_cast<size_t>(done - 1)];
    }
    double eps_c = 0.0;
    if (run.flow.mode == FlowMode::Gf) {
      eps_c = epsilon_term(run.regime, run.constants, ck.time, run.traj.n, run.delta).value;
    } else {
      eps_c = sgf_remainder(ck.time, run.traj.n, run.delta, run.constants);
    }
    const double total = gamma_c + eps_c + (run.flow.mode == FlowMode::Gf ? slack : 0.0);
    out << ck.step << "," << ck.time << "," << gamma_c << "," << ck.train_loss << ",";
    if (ck.has_eval)
      out << ck.eval_loss << "," << (ck.eval_loss - ck.train_loss);
    else
      out << ",";
    out << "," << eps_c << "," << total << "\n";
  }
  return out.str();
}

}  // namespace

RunManifest run_train_bound(const ExperimentConfig& cfg, const std::string& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  RunContext ctx{out_dir};

  TrainedRun run = train_from_config(cfg, 0);

  BoundReport report;
  if (run.flow.mode == FlowMode::Gf) {
    const EpsilonResult eps =
        epsilon_term(run.regime, run.constants, run.flow.total_time, run.traj.n, run.delta);
    report = full_gf_bound(run.gamma, eps, run.regime, run.constants, run.traj.n, run.delta,
                           run.gap);
  } else {
    const double remainder =
        sgf_remainder(run.flow.total_time, run.traj.n, run.delta, run.constants);
    const double slack =
        3.0 * std::sqrt((run.flow.total_time * std::log(static_cast<double>(run.traj.n)) +
                         std::log(2.0 / run.delta)) /
                        (2.0 * static_cast<double>(run.traj.n)));
    EpsilonResult eps;
    eps.value = remainder - slack;
    report = full_gf_bound(run.gamma, eps, run.regime, run.constants, run.traj.n, run.delta,
                           run.gap);
    report.slack = slack;
    report.total = report.gamma + report.epsilon + report.slack;
    report.warnings.push_back("stochastic run: epsilon/slack from the interval chain");
  }
  for (const auto& w : run.traj.warnings) report.warnings.push_back(w);

  ctx.write_text("report.json", bound_report_json(report) + "\n");
  ctx.write_text("trace.csv", trace_csv(run));
  if (run.flow.record.full_gram) {
    const LpkGram gram = accumulate(run.traj, GramMode::Full);
    std::ostringstream gcsv;
    gcsv.precision(17);
    gcsv << "i,j,value\n";
    for (long i = 0; i < gram.n; ++i)
      for (long j = i; j < gram.n; ++j) gcsv << i << "," << j << "," << gram.full(i, j) << "\n";
    ctx.write_text("gram.csv", gcsv.str());
  }
  ctx.warnings = run.traj.warnings;
  return finish(cfg, ctx, t0);
}

RunManifest run_noise_sweep(const ExperimentConfig& cfg, const std::string& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  RunContext ctx{out_dir};
  const std::vector<double> fractions = cfg.get_double_list("noise.fractions");
  const long seeds = cfg.get_long_or("noise.seeds", 3);
  const uint64_t seed = static_cast<uint64_t>(cfg.get_long("seed"));
  Rng master(seed);

  Rng data_rng = master.stream(1);
  const Dataset clean = dataset_from_config(cfg, data_rng);
  Rng test_rng = master.stream(2);
  const std::optional<Dataset> test = test_set_from_config(cfg, test_rng);
  const ModelSpec spec = model_from_config(cfg);
  const LossSpec loss = loss_from_config(cfg);
  const FlowConfig flow = flow_from_config(cfg);
  const Regime regime = regime_from_name(cfg.get_or("bound.regime", "non-convex"));
  const double delta = cfg.get_double_or("bound.delta", 0.05);

  std::ostringstream rows;
  rows.precision(17);
  rows << "fraction,seed,gamma,train_loss,test_loss,gap\n";
  std::vector<double> mean_gamma(fractions.size(), 0.0), mean_gap(fractions.size(), 0.0);

  for (size_t pi = 0; pi < fractions.size(); ++pi) {
    for (long s = 0; s < seeds; ++s) {
      Rng corrupt_rng = master.stream(600 + 97 * static_cast<uint64_t>(pi) + static_cast<uint64_t>(s));
      const Dataset noisy = fractions[pi] > 0 ? corrupt_labels(clean, fractions[pi], corrupt_rng)
                                              : clean;
      // the training set is drawn from the corrupted distribution, so the
      // held-out gap is measured against an independently corrupted copy
      std::optional<Dataset> noisy_test = test;
      if (noisy_test && fractions[pi] > 0) {
        Rng test_corrupt_rng =
            master.stream(800 + 97 * static_cast<uint64_t>(pi) + static_cast<uint64_t>(s));
        noisy_test = corrupt_labels(*test, fractions[pi], test_corrupt_rng);
      }
      Rng init_rng = master.stream(300 + static_cast<uint64_t>(s));
      const ParamVector w0 = init_params(spec, init_rng, {cfg.get_bool_or("model.zero_init", false)});
      TrajectoryRecord traj;
      if (flow.mode == FlowMode::Gf) {
        traj = integrate_gf(spec, loss, w0, noisy, flow, nullptr,
                            noisy_test ? &*noisy_test : nullptr);
      } else {
        Rng sched_rng = master.stream(4).stream(static_cast<uint64_t>(s));
        const BatchSchedule schedule =
            make_schedule(noisy.n(), flow.batch_size, std::lround(flow.total_time), sched_rng);
        traj = integrate_sgf(spec, loss, w0, noisy, flow, schedule, nullptr,
                             noisy_test ? &*noisy_test : nullptr);
      }
      if (traj.diverged) throw DivergenceError("noise sweep run diverged", traj.divergence_step);
      const double gamma = gamma_gf(accumulate(traj, GramMode::DiagOnly));
      const auto& last = traj.checkpoints.back();
      const double gap = last.has_eval ? last.eval_loss - last.train_loss : 0.0;
      rows << fractions[pi] << "," << s << "," << gamma << "," << last.train_loss << ","
           << (last.has_eval ? last.eval_loss : 0.0) << "," << gap << "\n";
      mean_gamma[pi] += gamma / static_cast<double>(seeds);
      mean_gap[pi] += gap / static_cast<double>(seeds);
    }
  }

  nlohmann::json j;
  j["fractions"] = fractions;
  j["seeds"] = seeds;
  j["mean_gamma"] = mean_gamma;
  j["mean_gap"] = mean_gap;
  j["regime"] = regime_name(regime);
  j["delta"] = delta;
  ctx.write_text("report.json", j.dump(2) + "\n");
  ctx.write_text("sweep.csv", rows.str());
  return finish(cfg, ctx, t0);
}

RunManifest run_stability(const ExperimentConfig& cfg, const std::string& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  RunContext ctx{out_dir};
  const uint64_t seed = static_cast<uint64_t>(cfg.get_long("seed"));
  Rng master(seed);

  Rng data_rng = master.stream(1);
  const Dataset data = dataset_from_config(cfg, data_rng);
  const ModelSpec spec = model_from_config(cfg);
  const LossSpec loss = loss_from_config(cfg);
  const FlowConfig flow = flow_from_config(cfg);
  const Regime regime = regime_from_name(cfg.get("stability.regime"));
  const long count = cfg.get_long_or("stability.count", 10);
  const double margin = cfg.get_double_or("stability.margin", 0.05);

  Rng init_rng = master.stream(300);
  const ParamVector w0 = init_params(spec, init_rng, {cfg.get_bool_or("model.zero_init", false)});

  Rng pick_rng = master.stream(7);
  Rng const_rng = master.stream(5);

  nlohmann::json summary = nlohmann::json::array();
  bool any_violation = false;
  double sup_ratio = 0.0;
  for (long k = 0; k < count; ++k) {
    const long i = static_cast<long>(pick_rng.below(static_cast<uint64_t>(data.n())));
    auto [zx, zy] = draw_point(data, pick_rng);
    const StabilityReport report = paired_divergence(
        spec, loss, w0, data, i, zx, zy, flow, regime, const_rng,
        static_cast<int>(cfg.get_long_or("bound.probes", 32)),
        ridge_assertion(loss, regime), margin);
    std::ostringstream csv;
    csv.precision(17);
    csv << "time,divergence,envelope\n";
    for (size_t s = 0; s < report.times.size(); ++s)
      csv << report.times[s] << "," << report.divergence[s] << "," << report.envelope[s] << "\n";
    ctx.write_text("stability_" + std::to_string(k) + ".csv", csv.str());
    double ratio = 0.0;
    for (size_t s = 0; s < report.times.size(); ++s)
      if (report.envelope[s] > 0) ratio = std::max(ratio, report.divergence[s] / report.envelope[s]);
    sup_ratio = std::max(sup_ratio, ratio);
    any_violation = any_violation || report.violation;
    summary.push_back({{"index", report.perturbed_index},
                       {"sup_ratio", ratio},
                       {"violation", report.violation},
                       {"L", report.constants.lipschitz}});
  }
  nlohmann::json j;
  j["regime"] = regime_name(regime);
  j["margin"] = margin;
  j["runs"] = summary;
  j["sup_ratio"] = sup_ratio;
  j["any_violation"] = any_violation;
  ctx.write_text("report.json", j.dump(2) + "\n");
  return finish(cfg, ctx, t0);
}

RunManifest run_krr(const ExperimentConfig& cfg, const std::string& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  RunContext ctx{out_dir};
  const uint64_t seed = static_cast<uint64_t>(cfg.get_long("seed"));
  Rng master(seed);

  const long n = cfg.get_long("krr.n");
  const long p = cfg.get_long("krr.p");
  const double lambda = cfg.get_double("krr.lambda");
  const double T = cfg.get_double("krr.time");
  const double eta = cfg.get_double("krr.eta");
  const bool zero_init = cfg.get_bool_or("krr.zero_init", true);
  const double target_noise = cfg.get_double_or("krr.noise", 0.1);

  Rng feat_rng = master.stream(1);
  Matrix features(p, n);
  for (long r = 0; r < p; ++r)
    for (long i = 0; i < n; ++i) features(r, i) = feat_rng.gaussian() / std::sqrt(static_cast<double>(p));
  std::vector<double> w_true = feat_rng.sphere(static_cast<size_t>(p));
  std::vector<double> y(static_cast<size_t>(n), 0.0);
  for (long i = 0; i < n; ++i) {
    double v = 0.0;
    for (long r = 0; r < p; ++r) v += features(r, i) * w_true[static_cast<size_t>(r)];
    y[static_cast<size_t>(i)] = v + target_noise * feat_rng.gaussian();
  }

  Rng init_rng = master.stream(300);
  std::vector<double> w0(static_cast<size_t>(p), 0.0);
  if (!zero_init)
    for (auto& v : w0) v = init_rng.gaussian() / std::sqrt(static_cast<double>(p));

  const KrrClosedForm closed = krr_closed_form(features, y, lambda, w0, T);

  // Euler cross-check: linear model over the feature vectors as inputs
  Dataset data;
  data.X = Matrix(n, p);
  for (long i = 0; i < n; ++i)
    for (long r = 0; r < p; ++r) data.X(i, r) = features(r, i);
  data.Y = Matrix(n, 1);
  for (long i = 0; i < n; ++i) data.Y(i, 0) = y[static_cast<size_t>(i)];
  data.source = "krr-features";

  ModelSpec spec;
  spec.kind = ModelKind::Linear;
  spec.input_dim = static_cast<int>(p);
  LossSpec loss;
  if (lambda > 0) {
    loss.kind = LossKind::RegularizedSquare;
    loss.ridge = lambda;
  }
  FlowConfig flow;
  flow.eta = eta;
  flow.total_time = T;
  const TrajectoryRecord traj = integrate_gf(spec, loss, w0, data, flow);
  if (traj.diverged) throw DivergenceError("krr euler run diverged", traj.divergence_step);
  const LpkGram gram = accumulate(traj, GramMode::DiagOnly);
  const double gamma_euler = gamma_gf(gram);

  nlohmann::json j;
  j["n"] = n;
  j["p"] = p;
  j["lambda"] = lambda;
  j["time"] = T;
  j["gamma_closed"] = closed.gamma_closed;
  j["gamma_euler"] = gamma_euler;
  j["relative_gap"] = std::abs(closed.gamma_closed - gamma_euler) /
                      std::max(closed.gamma_closed, 1e-300);
  j["loss_drop_closed"] = closed.loss_drop;
  j["loss_drop_euler"] = traj.loss_drop();
  j["identity_residual"] = std::abs(closed.total_gram_sum / (static_cast<double>(n) * n) -
                                    closed.loss_drop);
  j["k_max"] = closed.k_max;
  if (closed.has_cor4) j["cor4_rhs"] = closed.cor4_rhs;
  if (closed.has_cor4_zero_init) j["cor4_rhs_zero_init"] = closed.cor4_rhs_zero_init;
  ctx.write_text("report.json", j.dump(2) + "\n");
  return finish(cfg, ctx, t0);
}

RunManifest run_ntk(const ExperimentConfig& cfg, const std::string& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  RunContext ctx{out_dir};

  ExperimentConfig copy = cfg;
  copy.set("flow.record", "checkpoints");
  TrainedRun run = train_from_config(copy, 0);

  // path-wise tangent-gram extremes at the snapshots
  double lambda_min = std::numeric_limits<double>::infinity();
  double lambda_max = 0.0;
  std::ostringstream trace;
  trace.precision(17);
  trace << "step,time,train_loss,residual_sq,lambda_min,lambda_max\n";
  for (const auto& snap : run.traj.snapshots) {
    const Matrix gram_t = ntk_gram(run.spec, snap.params, run.data.X);
    const SymEig eig = sym_eig(gram_t);
    const double lmin = eig.values.back();
    const double lmax = eig.values.front();
    lambda_min = std::min(lambda_min, lmin);
    lambda_max = std::max(lambda_max, lmax);
    // square loss: ||f(X)-y||^2 = 2 n L_S
    double loss_at = 0.0;
    for (const auto& ck : run.traj.checkpoints)
      if (ck.step == snap.step) loss_at = ck.train_loss;
    trace << snap.step << "," << snap.time << "," << loss_at << ","
          << 2.0 * static_cast<double>(run.traj.n) * loss_at << "," << lmin << "," << lmax << "\n";
  }
  const double init_residual_sq = 2.0 * static_cast<double>(run.traj.n) * run.traj.train_loss.front();
  double bound = std::numeric_limits<double>::quiet_NaN();
  if (lambda_min > 0)
    bound = ntk_corollary_bound(lambda_max, lambda_min, init_residual_sq, run.traj.n,
                                run.flow.total_time);

  nlohmann::json j;
  j["gamma"] = run.gamma;
  j["lambda_min_path"] = lambda_min;
  j["lambda_max_path"] = lambda_max;
  j["init_residual_sq"] = init_residual_sq;
  j["final_train_loss"] = run.traj.train_loss.back();
  j["ntk_bound"] = bound;
  j["bound_holds"] = lambda_min > 0 && run.gamma <= bound;
  ctx.write_text("report.json", j.dump(2) + "\n");
  ctx.write_text("trace.csv", trace.str());
  return finish(cfg, ctx, t0);
}

RunManifest run_single_index(const ExperimentConfig& cfg, const std::string& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  RunContext ctx{out_dir};
  const uint64_t seed = static_cast<uint64_t>(cfg.get_long("seed"));
  Rng master(seed);

  const long n = cfg.get_long("data.n");
  const int d = static_cast<int>(cfg.get_long("data.d"));
  const std::string link_name = cfg.get_or("data.link", "he2");
  const HermiteLink link = link_name == "he1"   ? HermiteLink::He1
                           : link_name == "he2" ? HermiteLink::He2
                                                : HermiteLink::He3;
  const double noise = cfg.get_double_or("data.noise", 0.1);
  const long seeds = cfg.get_long_or("single.seeds", 9);

  SingleIndexConfig sic;
  sic.width = static_cast<int>(cfg.get_long("single.width"));
  sic.tau = cfg.get_double_or("single.tau", 2.0);
  sic.lambda = cfg.get_double("single.lambda");
  sic.rho = cfg.get_double_or("single.rho", 1.0);
  sic.sparse_support = static_cast<int>(cfg.get_long_or("single.support", 4));
  sic.warm_time = cfg.get_double("single.warm_time");
  sic.total_time = cfg.get_double("single.time");
  sic.eta = cfg.get_double("single.eta");

  std::ostringstream rows;
  rows.precision(17);
  rows << "seed,overlap_initial,overlap_final,gamma,loss_drop\n";
  std::vector<double> overlaps;
  double mean_gamma = 0.0;
  for (long s = 0; s < seeds; ++s) {
    Rng data_rng = master.stream(10 + static_cast<uint64_t>(s));
    const Dataset data = gen_single_index(n, d, link, noise, data_rng);
    Rng net_rng = master.stream(40 + static_cast<uint64_t>(s));
    const TwoStageRecord rec = integrate_two_stage(data, data.generator_direction, sic, net_rng);
    double diag_sum = 0.0;
    for (double v : rec.diag) diag_sum += v;
    const double gamma = 2.0 / static_cast<double>(n) *
                         std::sqrt(std::max(rec.loss_drop, 0.0)) * std::sqrt(diag_sum);
    rows << s << "," << std::abs(rec.overlap.front()) << "," << std::abs(rec.overlap.back()) << ","
         << gamma << "," << rec.loss_drop << "\n";
    overlaps.push_back(std::abs(rec.overlap.back()));
    mean_gamma += gamma / static_cast<double>(seeds);
    if (s == 0) {
      std::ostringstream otrace;
      otrace.precision(17);
      otrace << "time,overlap,train_loss\n";
      for (size_t c = 0; c < rec.times.size(); ++c)
        otrace << rec.times[c] << "," << rec.overlap[c] << "," << rec.train_loss[c] << "\n";
      ctx.write_text("overlap.csv", otrace.str());
    }
  }

  nlohmann::json j;
  j["seeds"] = seeds;
  j["overlaps"] = overlaps;
  j["mean_gamma"] = mean_gamma;
  long recovered = 0;
  for (double o : overlaps)
    if (o >= cfg.get_double_or("single.overlap_threshold", 0.7)) ++recovered;
  j["recovered"] = recovered;
  ctx.write_text("report.json", j.dump(2) + "\n");
  ctx.write_text("runs.csv", rows.str());
  return finish(cfg, ctx, t0);
}

RunManifest run_experiment(const ExperimentConfig& cfg, const std::string& out_dir) {
  const std::string kind = cfg.get("experiment");
  if (kind == "train-bound" || kind == "correlation") return run_train_bound(cfg, out_dir);
  if (kind == "noise-sweep") return run_noise_sweep(cfg, out_dir);
  if (kind == "stability") return run_stability(cfg, out_dir);
  if (kind == "krr") return run_krr(cfg, out_dir);
  if (kind == "ntk") return run_ntk(cfg, out_dir);
  if (kind == "single-index") return run_single_index(cfg, out_dir);
  throw ConfigError("config: unknown experiment kind '" + kind + "'");
}

}  // namespace lpk
