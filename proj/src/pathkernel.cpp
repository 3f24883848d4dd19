#include "lpk/pathkernel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace lpk {

double LpkGram::diag_sum() const {
  double s = 0.0;
  for (double v : diag) s += v;
  return s;
}

LpkGram accumulate(const TrajectoryRecord& traj, GramMode mode) {
  if (mode == GramMode::Full && !traj.record.full_gram)
    throw ConfigError("accumulate: full mode needs a full-gram record");
  LpkGram out;
  out.n = traj.n;
  out.mode = mode;
  out.diag = traj.diag;
  if (mode == GramMode::Full) out.full = traj.full_gram;
  out.total_sum = traj.total_sum;
  out.total_sum_valid = traj.total_sum_valid;
  out.loss_drop = traj.loss_drop();
  out.time_span = traj.total_time;
  out.negative_drop_warning = out.loss_drop < 0.0;
  return out;
}

IntervalGrams accumulate_intervals(const TrajectoryRecord& traj) {
  if (traj.mode != FlowMode::Sgf) throw ConfigError("accumulate_intervals: sgf trajectory required");
  if (traj.intervals.empty()) throw ConfigError("accumulate_intervals: no interval digests recorded");
  IntervalGrams out;
  out.n = traj.n;
  out.m = static_cast<int>(traj.intervals.front().batch.size());
  out.eta = traj.eta;
  for (const auto& iv : traj.intervals) {
    out.batches.push_back(iv.batch);
    out.diag.push_back(iv.diag);
    out.batch_blocks.push_back(iv.batch_block);
    out.batch_sq_integral.push_back(iv.batch_sq_integral);
    out.batch_loss_drop.push_back(iv.batch_loss_start - iv.batch_loss_end);
  }
  return out;
}

double gamma_gf(const LpkGram& gram) {
  const double drop = std::max(gram.loss_drop, 0.0);
  return 2.0 / static_cast<double>(gram.n) * std::sqrt(drop) * std::sqrt(gram.diag_sum());
}

namespace {

double interval_gamma(const IntervalGrams& grams, long t) {
  const auto& block = grams.batch_blocks[static_cast<size_t>(t)];
  double block_sum = 0.0;
  for (long i = 0; i < block.rows(); ++i)
    for (long j = 0; j < block.cols(); ++j) block_sum += block(i, j);
  const double m2 = static_cast<double>(grams.m) * static_cast<double>(grams.m);
  double diag_sum = 0.0;
  for (double v : grams.diag[static_cast<size_t>(t)]) diag_sum += v;
  return 2.0 / static_cast<double>(grams.n) * std::sqrt(std::max(block_sum / m2, 0.0)) *
         std::sqrt(std::max(diag_sum, 0.0));
}

}  // namespace

double gamma_sgf(const IntervalGrams& grams) {
  if (grams.batches.empty()) throw ConfigError("gamma_sgf: batch sets missing");
  double total = 0.0;
  for (long t = 0; t < grams.intervals(); ++t) total += interval_gamma(grams, t);
  return total;
}

std::vector<double> gamma_sgf_cumulative(const IntervalGrams& grams) {
  std::vector<double> out;
  double total = 0.0;
  for (long t = 0; t < grams.intervals(); ++t) {
    total += interval_gamma(grams, t);
    out.push_back(total);
  }
  return out;
}

double km_residual(const TrajectoryRecord& traj, long probe_index) {
  if (probe_index < 0 || probe_index >= static_cast<long>(traj.probe_km.size()))
    throw ConfigError("km_residual: probe index out of range (no probe digest recorded)");
  if (traj.diverged) throw ConfigError("km_residual: trajectory diverged");
  const size_t j = static_cast<size_t>(probe_index);
  return std::abs(traj.probe_loss_end[j] - traj.probe_loss_start[j] + traj.probe_km[j]);
}

namespace {

double replay_weight(const TrajectoryRecord& traj, size_t snap_idx) {
  const long s = traj.snapshots[snap_idx].step;
  const long next = snap_idx + 1 < traj.snapshots.size() ? traj.snapshots[snap_idx + 1].step
                                                         : traj.steps;
  return traj.eta * static_cast<double>(next - s);
}

}  // namespace

double km_residual_replay(const TrajectoryRecord& traj, const ModelSpec& spec, const LossSpec& loss,
                          const Dataset& train, std::span<const double> x,
                          std::span<const double> y) {
  if (traj.mode != FlowMode::Gf) throw ConfigError("km_residual_replay: gradient-flow runs only");
  if (traj.snapshots.empty()) throw ConfigError("km_residual_replay: no parameter snapshots");
  std::vector<int> all(static_cast<size_t>(train.n()));
  for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  double acc = 0.0;
  for (size_t si = 0; si < traj.snapshots.size(); ++si) {
    const auto& w = traj.snapshots[si].params;
    const ParamVector gz = per_sample_grad(spec, loss, w, x, y);
    const ParamVector gbar = batch_grad(spec, loss, w, train, all);
    acc += replay_weight(traj, si) * dot(gz, gbar);
  }
  const double l0 = per_sample_loss(spec, loss, traj.initial_params, x, y);
  const double lT = per_sample_loss(spec, loss, traj.final_params, x, y);
  return std::abs(lT - l0 + acc);
}

double eval_at(const TrajectoryRecord& traj, const ModelSpec& spec, const LossSpec& loss,
               std::span<const double> x1, std::span<const double> y1,
               std::span<const double> x2, std::span<const double> y2) {
  if (traj.snapshots.empty()) throw ConfigError("eval_at: no parameter snapshots");
  double acc = 0.0;
  for (size_t si = 0; si < traj.snapshots.size(); ++si) {
    const auto& w = traj.snapshots[si].params;
    const ParamVector g1 = per_sample_grad(spec, loss, w, x1, y1);
    const ParamVector g2 = per_sample_grad(spec, loss, w, x2, y2);
    acc += replay_weight(traj, si) * dot(g1, g2);
  }
  return acc;
}

double gram_sum_residual(const LpkGram& gram) {
  if (!gram.total_sum_valid) throw ConfigError("gram_sum_residual: total_sum not recorded");
  const double n2 = static_cast<double>(gram.n) * static_cast<double>(gram.n);
  return std::abs(gram.total_sum / n2 - gram.loss_drop);
}

std::vector<double> gamma_trace(const TrajectoryRecord& traj) {
  std::vector<double> out;
  out.reserve(traj.checkpoints.size());
  const double l0 = traj.train_loss.empty() ? 0.0 : traj.train_loss.front();
  for (const auto& ck : traj.checkpoints) {
    const double drop = std::max(l0 - ck.train_loss, 0.0);
    out.push_back(2.0 / static_cast<double>(traj.n) * std::sqrt(drop) * std::sqrt(ck.cum_diag_sum));
  }
  return out;
}

void save_gram_csv(const LpkGram& gram, const std::string& path) {
  if (gram.mode != GramMode::Full) throw ConfigError("save_gram_csv: full gram required");
  std::ofstream out(path);
  if (!out) throw FormatError("save_gram_csv: cannot open " + path);
  out << "i,j,value\n";
  out.precision(17);
  for (long i = 0; i < gram.n; ++i)
    for (long j = i; j < gram.n; ++j) out << i << "," << j << "," << gram.full(i, j) << "\n";
}

void save_gamma_trace_csv(const TrajectoryRecord& traj, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("save_gamma_trace_csv: cannot open " + path);
  out << "step,time,gamma,train_loss,eval_loss,gap\n";
  out.precision(17);
  const std::vector<double> trace = gamma_trace(traj);
  for (size_t i = 0; i < traj.checkpoints.size(); ++i) {
    const auto& ck = traj.checkpoints[i];
    out << ck.step << "," << ck.time << "," << trace[i] << "," << ck.train_loss << ",";
    if (ck.has_eval)
      out << ck.eval_loss << "," << (ck.eval_loss - ck.train_loss);
    else
      out << "," << "";
    out << "\n";
  }
}

}  // namespace lpk
