#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lpk/flow.hpp"
#include "lpk/pathkernel.hpp"

namespace lpk {

enum class Regime { StronglyConvex, Convex, NonConvex };

std::string regime_name(Regime r);
Regime regime_from_name(const std::string& name);

/// Empirical path-wise surrogates for the Lipschitz / smoothness /
/// strong-convexity constants. Bound validity is as-instantiated on the
/// trajectory that produced them.
struct ConstantEstimates {
  double lipschitz = 0.0;        // max per-sample gradient norm seen
  double smoothness = 0.0;       // max finite-difference Hessian action
  double strong_convexity = 0.0; // user-asserted (e.g. ridge weight)
  bool has_smoothness = false;
  bool has_strong_convexity = false;
  std::string provenance;
};

/// smoothness probes use random (snapshot, sample, direction) triples with
/// central differences at h = 1e-4; probes = 0 leaves smoothness unset.
ConstantEstimates estimate_constants(const TrajectoryRecord& traj, const ModelSpec& spec,
                                     const LossSpec& loss, const Dataset& data, Rng& rng,
                                     int probes,
                                     std::optional<double> asserted_strong_convexity = {});

struct EpsilonResult {
  double value = 0.0;
  double chain_branch = 0.0;  // explicit concentration-chain evaluation
  double sqrt_branch = 0.0;   // 2 L sqrt(T/n)
  bool overflow_fallback = false;
};

/// Explicit instantiation of the epsilon term, with every log factor written
/// out; convex and non-convex regimes take the min with the sqrt(T/n) branch.
EpsilonResult epsilon_term(Regime regime, const ConstantEstimates& constants, double T, long n,
                           double delta);

struct BoundReport {
  double gamma = 0.0;
  double epsilon = 0.0;
  double slack = 0.0;  // 3 sqrt(ln(4n/delta) / 2n)
  double total = 0.0;
  double gap = 0.0;
  bool has_gap = false;
  Regime regime = Regime::NonConvex;
  double delta = 0.05;
  ConstantEstimates constants;
  std::vector<std::string> warnings;
};

BoundReport full_gf_bound(double gamma, const EpsilonResult& eps, Regime regime,
                          const ConstantEstimates& constants, long n, double delta,
                          std::optional<double> gap = {});

std::string bound_report_json(const BoundReport& report);

/// sqrt(2 lmax R0^2 / (lmin n) (1 - e^{-2 lmin T / n})).
double ntk_corollary_bound(double lambda_max, double lambda_min, double init_residual_sq, long n,
                           double T);

/// Exact kernel-ridge trajectory functionals in the eigenbasis of
/// features * features^T, plus the closed-form gamma and its bound.
struct KrrClosedForm {
  std::vector<double> w_star;
  std::vector<double> w_final;
  double loss_start = 0.0, loss_end = 0.0, loss_drop = 0.0;
  double mean_grad_sq_integral = 0.0;   // int ||grad L_S||^2 dt
  double per_sample_sq_integral = 0.0;  // sum_i int ||grad l_i||^2 dt
  double total_gram_sum = 0.0;          // n^2 * mean_grad_sq_integral
  double gamma_closed = 0.0;
  double k_max = 0.0;
  double cor4_rhs = 0.0;            // (1/n) sqrt(Kmax) ||w0-w*|| ||Phi^T (w0-w*)||, lambda = 0
  bool has_cor4 = false;
  double cor4_rhs_zero_init = 0.0;  // (1/n) sqrt(Kmax) sqrt(y^T K^-1 y) ||y||, lambda = 0, w0 = 0
  bool has_cor4_zero_init = false;
};

KrrClosedForm krr_closed_form(const Matrix& features /* p x n */, std::span<const double> y,
                              double lambda, std::span<const double> w0, double T);

/// Explicit slack of the stochastic bound:
/// 3 sqrt((T ln n + ln(2/delta)) / 2n) plus the per-interval correction with
/// Delta = L^2.
double sgf_remainder(double T, long n, double delta, const ConstantEstimates& constants);

}  // namespace lpk
