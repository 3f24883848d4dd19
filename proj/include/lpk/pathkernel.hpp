#pragma once

#include <string>
#include <vector>

#include "lpk/flow.hpp"

namespace lpk {

enum class GramMode { DiagOnly, Full };

/// Accumulated path-kernel Gram over a trajectory: K(z,z') integrates the
/// per-sample loss-gradient inner products along the parameter path
/// (left-endpoint Riemann sum on the Euler grid).
struct LpkGram {
  long n = 0;
  GramMode mode = GramMode::DiagOnly;
  std::vector<double> diag;      // K(z_i, z_i)
  Matrix full;                   // mode == Full
  double total_sum = 0.0;        // sum_ij K(z_i, z_j)
  bool total_sum_valid = false;
  double loss_drop = 0.0;        // L_S(w_0) - L_S(w_T)
  double time_span = 0.0;
  bool negative_drop_warning = false;

  double diag_sum() const;
};

LpkGram accumulate(const TrajectoryRecord& traj, GramMode mode);

/// Per-interval kernels of a stochastic run, with the batch index sets and
/// the m x m kernel blocks restricted to them.
struct IntervalGrams {
  long n = 0;
  int m = 0;
  double eta = 0.0;
  std::vector<std::vector<int>> batches;
  std::vector<std::vector<double>> diag;      // per interval, length n
  std::vector<Matrix> batch_blocks;           // per interval, m x m
  std::vector<double> batch_sq_integral;      // int ||grad L_{S_t}||^2 per interval
  std::vector<double> batch_loss_drop;        // batch-loss drop per interval
  long intervals() const { return static_cast<long>(batches.size()); }
};

IntervalGrams accumulate_intervals(const TrajectoryRecord& traj);

/// Gamma = (2/n) sqrt(loss drop) sqrt(sum_i K(z_i, z_i)); a negative drop is
/// clamped to zero with the warning flag set on the gram.
double gamma_gf(const LpkGram& gram);

/// Stochastic version: sum over intervals of
/// (2/n) sqrt((1/m^2) sum_{i,j in S_t} K_t(z_i,z_j)) sqrt(sum_i K_t(z_i,z_i)).
double gamma_sgf(const IntervalGrams& grams);
std::vector<double> gamma_sgf_cumulative(const IntervalGrams& grams);  // one value per interval end

/// Kernel-machine identity residual
/// |l(w_T, z) - l(w_0, z) + accumulated probe kernel row| for a probe that was
/// attached to the integration.
double km_residual(const TrajectoryRecord& traj, long probe_index);

/// Replay variant: reconstructs the identity from parameter snapshots at the
/// snapshot stride (gradient-flow runs only).
double km_residual_replay(const TrajectoryRecord& traj, const ModelSpec& spec, const LossSpec& loss,
                          const Dataset& train, std::span<const double> x,
                          std::span<const double> y);

/// Stride-c approximation of K_T(z, z') from parameter snapshots.
double eval_at(const TrajectoryRecord& traj, const ModelSpec& spec, const LossSpec& loss,
               std::span<const double> x1, std::span<const double> y1,
               std::span<const double> x2, std::span<const double> y2);

/// |total_sum / n^2 - loss_drop|; for gradient flow total_sum/n^2 also equals
/// eta * sum_s ||grad L_S(w_s)||^2.
double gram_sum_residual(const LpkGram& gram);

/// Gamma evaluated at every checkpoint of a gradient-flow run.
std::vector<double> gamma_trace(const TrajectoryRecord& traj);

void save_gram_csv(const LpkGram& gram, const std::string& path);
void save_gamma_trace_csv(const TrajectoryRecord& traj, const std::string& path);

}  // namespace lpk
