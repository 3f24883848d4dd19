#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "lpk/bounds.hpp"
#include "lpk/flow.hpp"

namespace lpk {

/// Copy of the dataset with point i replaced; the original is untouched.
Dataset perturb_dataset(const Dataset& data, long i, std::span<const double> x,
                        std::span<const double> y);

/// Worst-case parameter displacement allowed at time t for two runs whose
/// datasets differ in one point.
double stability_envelope(Regime regime, const ConstantEstimates& constants, long n, double t);

/// Kernel-value displacement allowed over horizon T under the same coupling.
double kernel_perturbation_envelope(Regime regime, const ConstantEstimates& constants, long n,
                                    double T);

struct StabilityReport {
  std::vector<double> times;
  std::vector<double> divergence;  // ||w_t - w'_t|| on the checkpoint grid
  std::vector<double> envelope;    // regime envelope at the same times
  Regime regime = Regime::Convex;
  long perturbed_index = -1;
  ConstantEstimates constants;     // union of both trajectories
  double margin = 0.05;
  bool violation = false;          // divergence > envelope * (1 + margin) anywhere
  TrajectoryRecord base_run, perturbed_run;
};

/// Trains the base and perturbed datasets from the same initialization (and,
/// for sgf, the same coupled schedule) and measures the divergence.
StabilityReport paired_divergence(const ModelSpec& spec, const LossSpec& loss,
                                  const ParamVector& w0, const Dataset& data, long i,
                                  std::span<const double> zx, std::span<const double> zy,
                                  const FlowConfig& config, Regime regime, Rng& rng,
                                  int smoothness_probes = 32,
                                  std::optional<double> asserted_strong_convexity = {},
                                  double margin = 0.05, const BatchSchedule* schedule = nullptr);

struct ProbePair {
  std::vector<double> x1, y1, x2, y2;
};

struct KernelPerturbationReport {
  std::vector<double> deviation;  // per probe pair
  double envelope = 0.0;
  Regime regime = Regime::Convex;
  ConstantEstimates constants;
  double margin = 0.1;
  bool violation = false;
};

/// |K_T(z, z''; S) - K_T(z, z''; S^(i))| for each probe pair, via snapshot
/// replay of both trajectories, against the regime envelope.
KernelPerturbationReport lpk_perturbation(const ModelSpec& spec, const LossSpec& loss,
                                          const ParamVector& w0, const Dataset& data, long i,
                                          std::span<const double> zx, std::span<const double> zy,
                                          const std::vector<ProbePair>& probes,
                                          const FlowConfig& config, Regime regime, Rng& rng,
                                          int smoothness_probes = 32,
                                          std::optional<double> asserted_strong_convexity = {},
                                          double margin = 0.1);

void save_stability_csv(const StabilityReport& report, const std::string& path);
std::string stability_report_json(const StabilityReport& report);

}  // namespace lpk
