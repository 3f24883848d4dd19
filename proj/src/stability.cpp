#include "lpk/stability.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

#include "lpk/pathkernel.hpp"

namespace lpk {

Dataset perturb_dataset(const Dataset& data, long i, std::span<const double> x,
                        std::span<const double> y) {
  if (i < 0 || i >= data.n()) throw DomainError("perturb_dataset: index out of range");
  if (static_cast<int>(x.size()) != data.d() || static_cast<int>(y.size()) != data.k())
    throw DimensionError("perturb_dataset: replacement dims mismatch");
  Dataset out = data;
  std::copy(x.begin(), x.end(), out.X.row(i).begin());
  std::copy(y.begin(), y.end(), out.Y.row(i).begin());
  out.validate();
  return out;
}

double stability_envelope(Regime regime, const ConstantEstimates& c, long n, double t) {
  const double nn = static_cast<double>(n);
  switch (regime) {
    case Regime::Convex:
      return 2.0 * c.lipschitz * t / nn;
    case Regime::StronglyConvex:
      if (!c.has_strong_convexity) throw ConfigError("stability envelope: gamma estimate missing");
      return 2.0 * c.lipschitz / (c.strong_convexity * nn);
    case Regime::NonConvex:
      if (!c.has_smoothness) throw ConfigError("stability envelope: beta estimate missing");
      if (c.smoothness <= 0.0) return 2.0 * c.lipschitz * t / nn;  // beta -> 0 limit
      return 2.0 * c.lipschitz / (c.smoothness * nn) * (std::exp(c.smoothness * t) - 1.0);
  }
  throw ConfigError("stability envelope: unknown regime");
}

double kernel_perturbation_envelope(Regime regime, const ConstantEstimates& c, long n, double T) {
  const double nn = static_cast<double>(n);
  const double L2 = c.lipschitz * c.lipschitz;
  switch (regime) {
    case Regime::Convex:
      if (!c.has_smoothness) throw ConfigError("kernel envelope: beta estimate missing");
      return 2.0 * L2 * c.smoothness * T * T / nn;
    case Regime::StronglyConvex:
      if (!c.has_smoothness || !c.has_strong_convexity)
        throw ConfigError("kernel envelope: constants missing");
      return 4.0 * L2 * c.smoothness * T / (c.strong_convexity * nn);
    case Regime::NonConvex: {
      if (!c.has_smoothness) throw ConfigError("kernel envelope: beta estimate missing");
      if (c.smoothness <= 0.0) return 0.0;
      const double bt = c.smoothness * T;
      return 4.0 * L2 / (c.smoothness * nn) * (std::exp(bt) - bt - 1.0);
    }
  }
  throw ConfigError("kernel envelope: unknown regime");
}

namespace {

ConstantEstimates union_constants(const TrajectoryRecord& a, const TrajectoryRecord& b,
                                  const ModelSpec& spec, const LossSpec& loss,
                                  const Dataset& data_a, const Dataset& data_b, Rng& rng,
                                  int probes, std::optional<double> asserted_sc) {
  Rng r1 = rng.stream(101);
  Rng r2 = rng.stream(102);
  ConstantEstimates ca = estimate_constants(a, spec, loss, data_a, r1, probes, asserted_sc);
  ConstantEstimates cb = estimate_constants(b, spec, loss, data_b, r2, probes, asserted_sc);
  ConstantEstimates out = ca;
  out.lipschitz = std::max(ca.lipschitz, cb.lipschitz);
  out.smoothness = std::max(ca.smoothness, cb.smoothness);
  out.has_smoothness = ca.has_smoothness && cb.has_smoothness;
  out.provenance = "union of paired trajectories";
  return out;
}

FlowConfig snapshot_config(const FlowConfig& config, long steps) {
  FlowConfig out = config;
  out.record.param_snapshots = true;
  if (out.checkpoint_stride == 0) out.checkpoint_stride = std::max<long>(1, steps / 512);
  if (out.snapshot_stride == 0) out.snapshot_stride = out.checkpoint_stride;
  return out;
}

}  // namespace

StabilityReport paired_divergence(const ModelSpec& spec, const LossSpec& loss,
                                  const ParamVector& w0, const Dataset& data, long i,
                                  std::span<const double> zx, std::span<const double> zy,
                                  const FlowConfig& config, Regime regime, Rng& rng,
                                  int smoothness_probes,
                                  std::optional<double> asserted_strong_convexity, double margin,
                                  const BatchSchedule* schedule) {
  const Dataset perturbed = perturb_dataset(data, i, zx, zy);
  const FlowConfig run_cfg = snapshot_config(config, config.steps());
  if (run_cfg.mode == FlowMode::Sgf && !schedule)
    throw ConfigError("paired_divergence: sgf requires a coupled schedule");

  TrajectoryRecord base = run_cfg.mode == FlowMode::Gf
                              ? integrate_gf(spec, loss, w0, data, run_cfg)
                              : integrate_sgf(spec, loss, w0, data, run_cfg, *schedule);
  TrajectoryRecord other = run_cfg.mode == FlowMode::Gf
                               ? integrate_gf(spec, loss, w0, perturbed, run_cfg)
                               : integrate_sgf(spec, loss, w0, perturbed, run_cfg, *schedule);
  if (base.diverged || other.diverged)
    throw DivergenceError("paired_divergence: a trajectory diverged",
                          base.diverged ? base.divergence_step : other.divergence_step);

  StabilityReport report;
  report.regime = regime;
  report.perturbed_index = i;
  report.margin = margin;
  report.constants = union_constants(base, other, spec, loss, data, perturbed, rng,
                                     smoothness_probes, asserted_strong_convexity);

  if (base.snapshots.size() != other.snapshots.size())
    throw NumericError("paired_divergence: snapshot grids differ");
  for (size_t s = 0; s < base.snapshots.size(); ++s) {
    const auto& wa = base.snapshots[s].params;
    const auto& wb = other.snapshots[s].params;
    double dsq = 0.0;
    for (size_t t = 0; t < wa.size(); ++t) {
      const double d = wa[t] - wb[t];
      dsq += d * d;
    }
    const double t = base.snapshots[s].time;
    report.times.push_back(t);
    report.divergence.push_back(std::sqrt(dsq));
    report.envelope.push_back(stability_envelope(regime, report.constants, data.n(), t));
  }
  // final point
  {
    double dsq = 0.0;
    for (size_t t = 0; t < base.final_params.size(); ++t) {
      const double d = base.final_params[t] - other.final_params[t];
      dsq += d * d;
    }
    report.times.push_back(base.total_time);
    report.divergence.push_back(std::sqrt(dsq));
    report.envelope.push_back(
        stability_envelope(regime, report.constants, data.n(), base.total_time));
  }
  for (size_t s = 0; s < report.times.size(); ++s)
    if (report.divergence[s] > report.envelope[s] * (1.0 + margin) + 1e-15) report.violation = true;

  report.base_run = std::move(base);
  report.perturbed_run = std::move(other);
  return report;
}

KernelPerturbationReport lpk_perturbation(const ModelSpec& spec, const LossSpec& loss,
                                          const ParamVector& w0, const Dataset& data, long i,
                                          std::span<const double> zx, std::span<const double> zy,
                                          const std::vector<ProbePair>& probes,
                                          const FlowConfig& config, Regime regime, Rng& rng,
                                          int smoothness_probes,
                                          std::optional<double> asserted_strong_convexity,
                                          double margin) {
  const Dataset perturbed = perturb_dataset(data, i, zx, zy);
  const FlowConfig run_cfg = snapshot_config(config, config.steps());
  TrajectoryRecord base = integrate_gf(spec, loss, w0, data, run_cfg);
  TrajectoryRecord other = integrate_gf(spec, loss, w0, perturbed, run_cfg);
  if (base.diverged || other.diverged)
    throw DivergenceError("lpk_perturbation: a trajectory diverged",
                          base.diverged ? base.divergence_step : other.divergence_step);

  KernelPerturbationReport report;
  report.regime = regime;
  report.margin = margin;
  report.constants = union_constants(base, other, spec, loss, data, perturbed, rng,
                                     smoothness_probes, asserted_strong_convexity);
  report.envelope =
      kernel_perturbation_envelope(regime, report.constants, data.n(), config.total_time);
  for (const auto& pr : probes) {
    const double ka = eval_at(base, spec, loss, pr.x1, pr.y1, pr.x2, pr.y2);
    const double kb = eval_at(other, spec, loss, pr.x1, pr.y1, pr.x2, pr.y2);
    report.deviation.push_back(std::abs(ka - kb));
    if (report.deviation.back() > report.envelope * (1.0 + margin) + 1e-15)
      report.violation = true;
  }
  return report;
}

void save_stability_csv(const StabilityReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("save_stability_csv: cannot open " + path);
  out << "time,divergence,envelope\n";
  out.precision(17);
  for (size_t s = 0; s < report.times.size(); ++s)
    out << report.times[s] << "," << report.divergence[s] << "," << report.envelope[s] << "\n";
}

std::string stability_report_json(const StabilityReport& report) {
  nlohmann::json j;
  j["regime"] = regime_name(report.regime);
  j["perturbed_index"] = report.perturbed_index;
  j["margin"] = report.margin;
  j["violation"] = report.violation;
  j["constants"] = {{"L", report.constants.lipschitz},
                    {"beta", report.constants.smoothness},
                    {"gamma_sc", report.constants.strong_convexity}};
  double sup_ratio = 0.0;
  for (size_t s = 0; s < report.times.size(); ++s)
    if (report.envelope[s] > 0) sup_ratio = std::max(sup_ratio, report.divergence[s] / report.envelope[s]);
  j["sup_divergence_over_envelope"] = sup_ratio;
  return j.dump(2);
}

}  // namespace lpk
