#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lpk/data.hpp"
#include "lpk/model.hpp"
#include "lpk/numkit.hpp"

namespace lpk {

enum class FlowMode { Gf, Sgf };

struct RecordOptions {
  bool full_gram = false;       // accumulate the n x n path-kernel matrix
  bool param_snapshots = false; // keep parameter vectors for replay
};

struct FlowConfig {
  double eta = 0.0;
  double total_time = 0.0;
  FlowMode mode = FlowMode::Gf;
  int batch_size = 0;           // sgf
  long checkpoint_stride = 0;   // trace cadence; 0 -> max(1, steps/512)
  long snapshot_stride = 0;     // parameter replay cadence; 0 -> <= 64 snapshots
  RecordOptions record;
  long full_gram_max_n = 2048;

  long steps() const;
  long steps_per_unit() const;  // sgf interval resolution, 1/eta
  void validate(long n) const;
};

struct BatchSchedule {
  std::vector<std::vector<int>> sets;  // ascending indices, one set per unit interval
};

/// T index sets of size m, each drawn uniformly without replacement.
BatchSchedule make_schedule(long n, int m, long T, Rng& rng);

struct Checkpoint {
  long step = 0;
  double time = 0.0;
  double train_loss = 0.0;
  double cum_diag_sum = 0.0;   // eta * sum_{s<step} sum_i ||grad l_i||^2
  double cum_total_sum = 0.0;  // n^2 eta * sum_{s<step} ||grad L_S||^2 (gf)
  double eval_loss = 0.0;      // held-out loss when an eval set is supplied
  bool has_eval = false;
};

struct ParamSnapshot {
  long step = 0;
  double time = 0.0;
  std::vector<double> params;
};

struct IntervalDigest {
  std::vector<int> batch;
  std::vector<double> diag;       // per-sample kernel diagonal over the interval
  Matrix batch_block;             // m x m kernel block over the interval
  double batch_sq_integral = 0.0; // int ||grad L_{S_t}||^2 dt over the interval
  double batch_loss_start = 0.0, batch_loss_end = 0.0;
};

struct TrajectoryRecord {
  double eta = 0.0;
  long steps = 0;
  double total_time = 0.0;
  long n = 0, p = 0;
  FlowMode mode = FlowMode::Gf;
  RecordOptions record;
  long checkpoint_stride = 1, snapshot_stride = 1;

  std::vector<double> train_loss;         // steps+1 values on the grid
  std::vector<double> step_grad_norm_sq;  // per step, gradient used for the update

  std::vector<double> diag;               // per-sample whole-path kernel diagonal
  double total_sum = 0.0;                 // sum_ij K_T(z_i,z_j) (gf; full-gram for sgf)
  bool total_sum_valid = false;
  Matrix full_gram;
  std::vector<IntervalDigest> intervals;  // sgf
  double max_sample_grad_norm_sq = 0.0;

  std::vector<double> initial_params, final_params;
  std::vector<Checkpoint> checkpoints;
  std::vector<ParamSnapshot> snapshots;

  std::vector<double> probe_km;           // eta * sum_s <grad l(probe), step gradient>
  std::vector<double> probe_loss_start, probe_loss_end;

  bool diverged = false;
  long divergence_step = -1;
  bool monotonicity_warning = false;
  bool step_size_warning = false;  // eta times curvature proxy exceeded 2
  std::vector<std::string> warnings;

  double loss_drop() const { return train_loss.front() - train_loss.back(); }
  double diag_sum() const;
};

TrajectoryRecord integrate_gf(const ModelSpec& spec, const LossSpec& loss, const ParamVector& w0,
                              const Dataset& data, const FlowConfig& config,
                              const Dataset* probes = nullptr, const Dataset* eval_set = nullptr);

/// Same grid as integrate_gf; within unit interval [t, t+1) the Euler step uses
/// the mean gradient over schedule set t only. With m = n the parameter
/// trajectory matches integrate_gf bitwise.
TrajectoryRecord integrate_sgf(const ModelSpec& spec, const LossSpec& loss, const ParamVector& w0,
                               const Dataset& data, const FlowConfig& config,
                               const BatchSchedule& schedule, const Dataset* probes = nullptr,
                               const Dataset* eval_set = nullptr);

/// Projected step on the unit sphere: normalize(theta - eta (I - theta theta^T) g).
std::vector<double> sphere_step(std::span<const double> theta, std::span<const double> g,
                                double eta);

struct SingleIndexConfig {
  int width = 0;          // N
  double tau = 2.0;       // frozen bias scale
  double lambda = 0.0;    // ridge on the output weights
  double rho = 1.0;       // ||c(0)||
  int sparse_support = 1; // N0 = ||c(0)||_0
  double warm_time = 0.0; // T0: output weights frozen before this time
  double total_time = 0.0;
  double eta = 0.0;
  long checkpoint_stride = 0;
};

struct TwoStageRecord {
  std::vector<double> theta, c;     // final state
  std::vector<double> sigma, bias;  // frozen first-layer randomness
  std::vector<double> theta0, c0;

  std::vector<double> times;        // checkpoint grid
  std::vector<double> overlap;      // <theta_t, theta*>
  std::vector<double> train_loss;

  std::vector<double> diag;         // per-sample int ||grad l_i||^2 over moving params
  double loss_drop = 0.0;
  double c_norm_at_warm_end = 0.0;
};

/// Two-stage spherical flow: theta moves on the sphere throughout, the output
/// weights stay frozen until warm_time and then follow plain Euler.
TwoStageRecord integrate_two_stage(const Dataset& data, std::span<const double> theta_star,
                                   const SingleIndexConfig& cfg, Rng& rng);

void save_trajectory_csv(const TrajectoryRecord& traj, const std::string& path);
void save_checkpoints(const TrajectoryRecord& traj, const std::string& dir,
                      const std::string& spec_hash);

}  // namespace lpk
