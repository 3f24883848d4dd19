#include "lpk/flow.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "json.hpp"

namespace lpk {

namespace {

long checked_ratio(double num, double den, const char* what) {
  const long r = std::lround(num / den);
  if (r < 1 || std::abs(static_cast<double>(r) * den - num) > 1e-9 * std::max(1.0, std::abs(num)))
    throw ConfigError(std::string("flow: ") + what + " must be integral");
  return r;
}

}  // namespace

long FlowConfig::steps() const { return checked_ratio(total_time, eta, "total_time/eta"); }

long FlowConfig::steps_per_unit() const { return checked_ratio(1.0, eta, "1/eta"); }

void FlowConfig::validate(long n) const {
  if (eta <= 0) throw ConfigError("flow: eta must be positive");
  if (total_time <= 0) throw ConfigError("flow: total_time must be positive");
  steps();
  if (checkpoint_stride < 0 || snapshot_stride < 0)
    throw ConfigError("flow: strides must be nonnegative");
  if (mode == FlowMode::Sgf) {
    if (batch_size < 1 || batch_size > n) throw DomainError("flow: batch size out of range");
    const long T = std::lround(total_time);
    if (std::abs(total_time - static_cast<double>(T)) > 1e-9)
      throw ConfigError("flow: sgf requires integral total_time");
    steps_per_unit();
  }
  if (record.full_gram && n > full_gram_max_n)
    throw ConfigError("flow: full-gram recording guarded to n <= " + std::to_string(full_gram_max_n));
}

BatchSchedule make_schedule(long n, int m, long T, Rng& rng) {
  if (m < 1 || m > n) throw DomainError("make_schedule: need 1 <= m <= n");
  if (T < 1) throw DomainError("make_schedule: T must be >= 1");
  BatchSchedule out;
  out.sets.reserve(static_cast<size_t>(T));
  std::vector<int> pool(static_cast<size_t>(n));
  for (long t = 0; t < T; ++t) {
    std::iota(pool.begin(), pool.end(), 0);
    // partial Fisher-Yates: first m entries are a uniform sample without replacement
    for (int i = 0; i < m; ++i) {
      const auto j = i + static_cast<int>(rng.below(static_cast<uint64_t>(n - i)));
      std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
    }
    std::vector<int> set(pool.begin(), pool.begin() + m);
    std::sort(set.begin(), set.end());
    out.sets.push_back(std::move(set));
  }
  return out;
}

double TrajectoryRecord::diag_sum() const {
  double s = 0.0;
  for (double v : diag) s += v;
  return s;
}

namespace {

bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

TrajectoryRecord integrate(const ModelSpec& spec, const LossSpec& loss, const ParamVector& w0,
                           const Dataset& data, const FlowConfig& config,
                           const BatchSchedule* schedule, const Dataset* probes,
                           const Dataset* eval_set) {
  data.validate();
  config.validate(data.n());
  const long n = data.n();
  const long steps = config.steps();
  const long spu = config.mode == FlowMode::Sgf ? config.steps_per_unit() : steps;
  const long intervals = config.mode == FlowMode::Sgf ? steps / spu : 0;
  if (config.mode == FlowMode::Sgf) {
    if (!schedule) throw ConfigError("flow: sgf requires a batch schedule");
    if (static_cast<long>(schedule->sets.size()) != intervals)
      throw ConfigError("flow: schedule length must equal total_time");
    for (const auto& s : schedule->sets) {
      if (static_cast<int>(s.size()) != config.batch_size)
        throw ConfigError("flow: schedule set size != batch size");
      for (size_t i = 0; i + 1 < s.size(); ++i)
        if (s[i] >= s[i + 1]) throw ConfigError("flow: schedule sets must be ascending and unique");
      if (s.front() < 0 || s.back() >= n) throw DomainError("flow: schedule index out of range");
    }
  }

  Evaluator ev(spec, loss, data.X, data.Y);
  const long p = ev.p();
  if (static_cast<long>(w0.size()) != p) throw DimensionError("flow: w0 length mismatch");

  TrajectoryRecord rec;
  rec.eta = config.eta;
  rec.steps = steps;
  rec.total_time = config.total_time;
  rec.n = n;
  rec.p = p;
  rec.mode = config.mode;
  rec.record = config.record;
  rec.checkpoint_stride = config.checkpoint_stride > 0 ? config.checkpoint_stride
                                                       : std::max<long>(1, steps / 512);
  rec.snapshot_stride = config.snapshot_stride > 0
                            ? config.snapshot_stride
                            : std::max<long>(rec.checkpoint_stride, (steps + 63) / 64);
  rec.train_loss.reserve(static_cast<size_t>(steps) + 1);
  rec.step_grad_norm_sq.reserve(static_cast<size_t>(steps));
  rec.diag.assign(static_cast<size_t>(n), 0.0);
  rec.initial_params = w0;
  if (config.record.full_gram) rec.full_gram = Matrix(n, n);
  if (config.mode == FlowMode::Gf) rec.total_sum_valid = true;

  std::optional<Evaluator> probe_ev;
  std::vector<double> probe_buf;
  if (probes) {
    probe_ev.emplace(spec, loss, probes->X, probes->Y);
    rec.probe_km.assign(static_cast<size_t>(probes->n()), 0.0);
    probe_buf.resize(static_cast<size_t>(p));
  }
  std::optional<Evaluator> eval_ev;
  if (eval_set) eval_ev.emplace(spec, loss, eval_set->X, eval_set->Y);

  std::vector<int> all_idx(static_cast<size_t>(n));
  std::iota(all_idx.begin(), all_idx.end(), 0);

  std::vector<double> w = w0;
  std::vector<double> g(static_cast<size_t>(p), 0.0);
  std::vector<double> g_prev;
  double cum_diag = 0.0, cum_total = 0.0;

  const double eta = config.eta;
  IntervalDigest* cur_interval = nullptr;

  auto push_checkpoint = [&](long s, double train_loss_val, std::span<const double> params) {
    Checkpoint ck{s, static_cast<double>(s) * eta, train_loss_val, cum_diag, cum_total};
    if (eval_ev) {
      eval_ev->set_params(params);
      ck.eval_loss = eval_ev->mean_loss_all();
      ck.has_eval = true;
    }
    rec.checkpoints.push_back(std::move(ck));
  };

  for (long s = 0; s < steps; ++s) {
    try {
      ev.set_params(w);
    } catch (const NumericError&) {
      rec.diverged = true;
      rec.divergence_step = s;
      rec.warnings.push_back("diverged at step " + std::to_string(s));
      break;
    }
    const double train_loss = ev.mean_loss_all();
    rec.train_loss.push_back(train_loss);
    if (config.mode == FlowMode::Gf && s > 0 && train_loss > rec.train_loss[static_cast<size_t>(s - 1)])
      rec.monotonicity_warning = true;

    const long interval_idx = config.mode == FlowMode::Sgf ? s / spu : 0;
    if (config.mode == FlowMode::Sgf && s % spu == 0) {
      const auto& batch = schedule->sets[static_cast<size_t>(interval_idx)];
      if (cur_interval) cur_interval->batch_loss_end = ev.mean_loss(cur_interval->batch);
      rec.intervals.push_back({});
      cur_interval = &rec.intervals.back();
      cur_interval->batch = batch;
      cur_interval->diag.assign(static_cast<size_t>(n), 0.0);
      cur_interval->batch_block = Matrix(config.batch_size, config.batch_size);
      cur_interval->batch_loss_start = ev.mean_loss(batch);
    }

    if (s % rec.checkpoint_stride == 0) push_checkpoint(s, train_loss, w);
    if (config.record.param_snapshots && s % rec.snapshot_stride == 0)
      rec.snapshots.push_back({s, static_cast<double>(s) * eta, w});

    // per-sample kernel digests at the left endpoint
    double diag_step = 0.0;
    for (long i = 0; i < n; ++i) {
      const double q = ev.grad_norm_sq(i);
      rec.diag[static_cast<size_t>(i)] += eta * q;
      diag_step += q;
      rec.max_sample_grad_norm_sq = std::max(rec.max_sample_grad_norm_sq, q);
      if (cur_interval) cur_interval->diag[static_cast<size_t>(i)] += eta * q;
    }
    cum_diag += eta * diag_step;

    if (config.record.full_gram) {
      for (long i = 0; i < n; ++i) {
        rec.full_gram(i, i) += eta * ev.grad_norm_sq(i);
        for (long j = i + 1; j < n; ++j) {
          const double v = eta * ev.grad_inner(i, j);
          rec.full_gram(i, j) += v;
          rec.full_gram(j, i) += v;
        }
      }
    }

    const std::span<const int> batch = config.mode == FlowMode::Sgf
                                           ? std::span<const int>(schedule->sets[static_cast<size_t>(interval_idx)])
                                           : std::span<const int>(all_idx);
    ev.mean_grad(batch, g);
    const double gsq = norm_sq(g);
    rec.step_grad_norm_sq.push_back(gsq);

    if (config.mode == FlowMode::Gf) {
      cum_total += eta * static_cast<double>(n) * static_cast<double>(n) * gsq;
    } else {
      cur_interval->batch_sq_integral += eta * gsq;
      Matrix& block = cur_interval->batch_block;
      for (int bi = 0; bi < config.batch_size; ++bi) {
        block(bi, bi) += eta * ev.grad_norm_sq(batch[static_cast<size_t>(bi)]);
        for (int bj = bi + 1; bj < config.batch_size; ++bj) {
          const double v = eta * ev.grad_inner(batch[static_cast<size_t>(bi)], batch[static_cast<size_t>(bj)]);
          block(bi, bj) += v;
          block(bj, bi) += v;
        }
      }
    }

    if (probe_ev) {
      probe_ev->set_params(w);
      if (s == 0) {
        rec.probe_loss_start.resize(rec.probe_km.size());
        for (size_t j = 0; j < rec.probe_km.size(); ++j)
          rec.probe_loss_start[j] = probe_ev->loss_of(static_cast<long>(j));
      }
      for (size_t j = 0; j < rec.probe_km.size(); ++j) {
        probe_ev->grad_of(static_cast<long>(j), probe_buf);
        rec.probe_km[j] += eta * dot(probe_buf, g);
      }
    }

    // curvature proxy: ||g_s - g_{s-1}|| / (eta ||g_{s-1}||), flags eta*beta > 2
    if (!g_prev.empty()) {
      double dsq = 0.0;
      for (long t = 0; t < p; ++t) {
        const double dd = g[static_cast<size_t>(t)] - g_prev[static_cast<size_t>(t)];
        dsq += dd * dd;
      }
      const double prev_sq = norm_sq(g_prev);
      if (prev_sq > 0 && dsq > 4.0 * prev_sq) rec.step_size_warning = true;
    }
    g_prev = g;

    for (long t = 0; t < p; ++t) w[static_cast<size_t>(t)] -= eta * g[static_cast<size_t>(t)];
    if (!all_finite(w)) {
      rec.diverged = true;
      rec.divergence_step = s;
      rec.warnings.push_back("non-finite parameter after step " + std::to_string(s));
      break;
    }
  }

  if (!rec.diverged) {
    ev.set_params(w);
    const double final_loss = ev.mean_loss_all();
    rec.train_loss.push_back(final_loss);
    if (cur_interval) cur_interval->batch_loss_end = ev.mean_loss(cur_interval->batch);
    push_checkpoint(steps, final_loss, w);
    rec.final_params = w;
    if (config.mode == FlowMode::Gf) {
      rec.total_sum = cum_total;
    } else if (config.record.full_gram) {
      double s2 = 0.0;
      for (long i = 0; i < n; ++i)
        for (long j = 0; j < n; ++j) s2 += rec.full_gram(i, j);
      rec.total_sum = s2;
      rec.total_sum_valid = true;
    }
    if (probe_ev) {
      probe_ev->set_params(w);
      rec.probe_loss_end.resize(rec.probe_km.size());
      for (size_t j = 0; j < rec.probe_km.size(); ++j)
        rec.probe_loss_end[j] = probe_ev->loss_of(static_cast<long>(j));
    }
  } else {
    rec.final_params = w;
  }
  if (rec.monotonicity_warning) rec.warnings.push_back("training loss increased on the grid");
  if (rec.step_size_warning) rec.warnings.push_back("eta exceeds curvature heuristic (eta*beta > 2)");
  return rec;
}

}  // namespace

TrajectoryRecord integrate_gf(const ModelSpec& spec, const LossSpec& loss, const ParamVector& w0,
                              const Dataset& data, const FlowConfig& config, const Dataset* probes,
                              const Dataset* eval_set) {
  if (config.mode != FlowMode::Gf) throw ConfigError("integrate_gf: config mode must be gf");
  return integrate(spec, loss, w0, data, config, nullptr, probes, eval_set);
}

TrajectoryRecord integrate_sgf(const ModelSpec& spec, const LossSpec& loss, const ParamVector& w0,
                               const Dataset& data, const FlowConfig& config,
                               const BatchSchedule& schedule, const Dataset* probes,
                               const Dataset* eval_set) {
  if (config.mode != FlowMode::Sgf) throw ConfigError("integrate_sgf: config mode must be sgf");
  return integrate(spec, loss, w0, data, config, &schedule, probes, eval_set);
}

std::vector<double> sphere_step(std::span<const double> theta, std::span<const double> g,
                                double eta) {
  if (theta.size() != g.size()) throw DimensionError("sphere_step: length mismatch");
  const double nrm = norm(theta);
  if (std::abs(nrm - 1.0) > 1e-10) throw DomainError("sphere_step: theta must be unit norm");
  const double radial = dot(theta, g);
  std::vector<double> out(theta.size());
  for (size_t i = 0; i < theta.size(); ++i)
    out[i] = theta[i] - eta * (g[i] - radial * theta[i]);
  const double newnrm = norm(out);
  if (newnrm < 1e-300) throw DomainError("sphere_step: degenerate step produced zero vector");
  for (double& v : out) v /= newnrm;
  return out;
}

TwoStageRecord integrate_two_stage(const Dataset& data, std::span<const double> theta_star,
                                   const SingleIndexConfig& cfg, Rng& rng) {
  data.validate();
  const long n = data.n();
  const int d = data.d();
  const int N = cfg.width;
  if (N < 1) throw ConfigError("two-stage: width must be positive");
  if (cfg.sparse_support < 1 || cfg.sparse_support > N)
    throw ConfigError("two-stage: sparse support out of range");
  if (cfg.warm_time > cfg.total_time)
    throw ConfigError("two-stage: warm_time must be <= total_time");
  if (cfg.eta <= 0) throw ConfigError("two-stage: eta must be positive");
  if (!theta_star.empty() && static_cast<int>(theta_star.size()) != d)
    throw DimensionError("two-stage: theta_star dim mismatch");

  const long steps = std::lround(cfg.total_time / cfg.eta);
  const long warm_steps = std::lround(cfg.warm_time / cfg.eta);
  const long stride = cfg.checkpoint_stride > 0 ? cfg.checkpoint_stride
                                                : std::max<long>(1, steps / 512);

  TwoStageRecord rec;
  rec.theta = rng.sphere(static_cast<size_t>(d));
  rec.sigma.resize(static_cast<size_t>(N));
  rec.bias.resize(static_cast<size_t>(N));
  for (int j = 0; j < N; ++j) {
    rec.sigma[static_cast<size_t>(j)] = rng.rademacher();
    rec.bias[static_cast<size_t>(j)] = cfg.tau * rng.gaussian();
  }
  // c(0): uniform over {||c||_0 = N0, ||c||_2 = rho}
  rec.c.assign(static_cast<size_t>(N), 0.0);
  {
    const std::vector<int> support = rng.perm(N);
    std::vector<double> vals = rng.sphere(static_cast<size_t>(cfg.sparse_support));
    for (int j = 0; j < cfg.sparse_support; ++j)
      rec.c[static_cast<size_t>(support[static_cast<size_t>(j)])] = cfg.rho * vals[static_cast<size_t>(j)];
  }
  rec.theta0 = rec.theta;
  rec.c0 = rec.c;
  rec.diag.assign(static_cast<size_t>(n), 0.0);

  const double root_n = std::sqrt(static_cast<double>(N));
  std::vector<double> z(static_cast<size_t>(n));
  std::vector<double> resid(static_cast<size_t>(n));
  std::vector<double> act(static_cast<size_t>(n));  // a_i = (1/sqrt N) sum_j c_j sigma_j relu'(...)
  std::vector<double> fout(static_cast<size_t>(n));
  std::vector<double> phi_norm_sq(static_cast<size_t>(n));
  std::vector<double> theta_grad(static_cast<size_t>(d));
  std::vector<double> c_grad(static_cast<size_t>(N));
  std::vector<double> phi(static_cast<size_t>(N));

  auto record_checkpoint = [&](long s, double loss_val) {
    rec.times.push_back(static_cast<double>(s) * cfg.eta);
    rec.train_loss.push_back(loss_val);
    rec.overlap.push_back(theta_star.empty() ? 0.0 : dot(rec.theta, theta_star));
  };

  double first_loss = 0.0, last_loss = 0.0;
  for (long s = 0; s <= steps; ++s) {
    // forward pass at theta_s, c_s
    double loss_val = 0.0;
    std::fill(theta_grad.begin(), theta_grad.end(), 0.0);
    std::fill(c_grad.begin(), c_grad.end(), 0.0);
    const bool c_active = s >= warm_steps;
    const double c_sq = norm_sq(rec.c);
    for (long i = 0; i < n; ++i) {
      const double zi = dot(data.X.row(i), rec.theta);
      z[static_cast<size_t>(i)] = zi;
      double fi = 0.0, ai = 0.0, pn = 0.0;
      for (int j = 0; j < N; ++j) {
        const double u = rec.sigma[static_cast<size_t>(j)] * zi + rec.bias[static_cast<size_t>(j)];
        const double ph = u > 0 ? u / root_n : 0.0;
        phi[static_cast<size_t>(j)] = ph;
        pn += ph * ph;
        fi += rec.c[static_cast<size_t>(j)] * ph;
        if (u > 0)
          ai += rec.c[static_cast<size_t>(j)] * rec.sigma[static_cast<size_t>(j)] / root_n;
      }
      fout[static_cast<size_t>(i)] = fi;
      act[static_cast<size_t>(i)] = ai;
      phi_norm_sq[static_cast<size_t>(i)] = pn;
      const double r = fi - data.Y(i, 0);
      resid[static_cast<size_t>(i)] = r;
      loss_val += r * r;

      if (s < steps) {
        const double coef = 2.0 * r * ai / static_cast<double>(n);
        for (int t = 0; t < d; ++t)
          theta_grad[static_cast<size_t>(t)] += coef * data.X(i, t);
        if (c_active) {
          const double ccoef = 2.0 * r / static_cast<double>(n);
          for (int j = 0; j < N; ++j) {
            const double u = rec.sigma[static_cast<size_t>(j)] * z[static_cast<size_t>(i)] +
                             rec.bias[static_cast<size_t>(j)];
            if (u > 0) c_grad[static_cast<size_t>(j)] += ccoef * u / root_n;
          }
        }
      }
    }
    loss_val = loss_val / static_cast<double>(n) + cfg.lambda * c_sq;
    if (s == 0) first_loss = loss_val;
    last_loss = loss_val;
    if (s % stride == 0 || s == steps) record_checkpoint(s, loss_val);
    if (s == warm_steps) rec.c_norm_at_warm_end = std::sqrt(c_sq);
    if (s == steps) break;

    // kernel diagonal digest at the left endpoint, over moving parameters only
    for (long i = 0; i < n; ++i) {
      const double r = resid[static_cast<size_t>(i)];
      const double ai = act[static_cast<size_t>(i)];
      const double xi_sq = norm_sq(data.X.row(i));
      const double zi = z[static_cast<size_t>(i)];
      double q = 4.0 * r * r * ai * ai * std::max(xi_sq - zi * zi, 0.0);
      if (c_active) {
        const double fi = fout[static_cast<size_t>(i)];
        q += 4.0 * r * r * phi_norm_sq[static_cast<size_t>(i)] +
             8.0 * cfg.lambda * r * fi + 4.0 * cfg.lambda * cfg.lambda * c_sq;
      }
      rec.diag[static_cast<size_t>(i)] += cfg.eta * q;
    }

    rec.theta = sphere_step(rec.theta, theta_grad, cfg.eta);
    if (c_active) {
      for (int j = 0; j < N; ++j)
        rec.c[static_cast<size_t>(j)] -=
            cfg.eta * (c_grad[static_cast<size_t>(j)] + 2.0 * cfg.lambda * rec.c[static_cast<size_t>(j)]);
    }
    if (!all_finite(rec.theta) || !all_finite(rec.c))
      throw DivergenceError("two-stage flow diverged", s);
  }
  rec.loss_drop = first_loss - last_loss;
  return rec;
}

void save_trajectory_csv(const TrajectoryRecord& traj, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("save_trajectory_csv: cannot open " + path);
  out << "step,time,train_loss,grad_norm_sq_sum,checkpoint_id\n";
  out.precision(17);
  size_t ck = 0;
  for (long s = 0; s < static_cast<long>(traj.train_loss.size()); ++s) {
    long checkpoint_id = -1;
    if (ck < traj.checkpoints.size() && traj.checkpoints[ck].step == s) {
      checkpoint_id = static_cast<long>(ck);
      ++ck;
    }
    const double gsq =
        s < static_cast<long>(traj.step_grad_norm_sq.size()) ? traj.step_grad_norm_sq[static_cast<size_t>(s)] : 0.0;
    out << s << "," << static_cast<double>(s) * traj.eta << "," << traj.train_loss[static_cast<size_t>(s)]
        << "," << gsq << "," << checkpoint_id << "\n";
  }
}

void save_checkpoints(const TrajectoryRecord& traj, const std::string& dir,
                      const std::string& spec_hash) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (size_t i = 0; i < traj.snapshots.size(); ++i) {
    const auto& snap = traj.snapshots[i];
    const std::string base = dir + "/checkpoint_" + std::to_string(snap.step);
    std::ofstream bin(base + ".f64", std::ios::binary);
    if (!bin) throw FormatError("save_checkpoints: cannot open " + base + ".f64");
    static_assert(std::endian::native == std::endian::little,
                  "checkpoint files are little-endian");
    bin.write(reinterpret_cast<const char*>(snap.params.data()),
              static_cast<std::streamsize>(snap.params.size() * sizeof(double)));
    nlohmann::json meta = {{"spec_hash", spec_hash}, {"step", snap.step}, {"time", snap.time}};
    std::ofstream side(base + ".json");
    side << meta.dump(2) << "\n";
  }
}

}  // namespace lpk
