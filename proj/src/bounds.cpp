#include "lpk/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"

namespace lpk {

std::string regime_name(Regime r) {
  switch (r) {
    case Regime::StronglyConvex:
      return "strongly-convex";
    case Regime::Convex:
      return "convex";
    case Regime::NonConvex:
      return "non-convex";
  }
  throw ConfigError("regime_name: unknown regime");
}

Regime regime_from_name(const std::string& name) {
  if (name == "strongly-convex") return Regime::StronglyConvex;
  if (name == "convex") return Regime::Convex;
  if (name == "non-convex") return Regime::NonConvex;
  throw ConfigError("unknown regime: " + name);
}

ConstantEstimates estimate_constants(const TrajectoryRecord& traj, const ModelSpec& spec,
                                     const LossSpec& loss, const Dataset& data, Rng& rng,
                                     int probes, std::optional<double> asserted_strong_convexity) {
  ConstantEstimates out;
  out.lipschitz = std::sqrt(traj.max_sample_grad_norm_sq);
  out.provenance = "path-wise empirical surrogates";

  if (probes > 0) {
    // probe pool: snapshots when present, otherwise the path endpoints
    std::vector<const std::vector<double>*> pool;
    for (const auto& snap : traj.snapshots) pool.push_back(&snap.params);
    if (pool.empty()) {
      pool.push_back(&traj.initial_params);
      if (!traj.final_params.empty()) pool.push_back(&traj.final_params);
    }
    const double h = 1e-4;
    double worst = 0.0;
    std::vector<double> wp, wm;
    for (int probe = 0; probe < probes; ++probe) {
      const auto& base = *pool[rng.below(pool.size())];
      const long i = static_cast<long>(rng.below(static_cast<uint64_t>(data.n())));
      std::vector<double> dir = rng.gaussian_vec(base.size());
      const double dn = norm(dir);
      if (dn == 0.0) continue;
      for (double& v : dir) v /= dn;
      wp = base;
      wm = base;
      for (size_t t = 0; t < base.size(); ++t) {
        wp[t] += h * dir[t];
        wm[t] -= h * dir[t];
      }
      const ParamVector gp = per_sample_grad(spec, loss, wp, data.X.row(i), data.Y.row(i));
      const ParamVector gm = per_sample_grad(spec, loss, wm, data.X.row(i), data.Y.row(i));
      double diff_sq = 0.0;
      for (size_t t = 0; t < gp.size(); ++t) {
        const double d = gp[t] - gm[t];
        diff_sq += d * d;
      }
      worst = std::max(worst, std::sqrt(diff_sq) / (2.0 * h));
    }
    out.smoothness = worst;
    out.has_smoothness = true;
  }
  if (asserted_strong_convexity) {
    if (*asserted_strong_convexity <= 0)
      throw DomainError("estimate_constants: asserted strong convexity must be positive");
    out.strong_convexity = *asserted_strong_convexity;
    out.has_strong_convexity = true;
  }
  return out;
}

namespace {

double regularity_constant(Regime regime, const ConstantEstimates& c, double T) {
  const double L2 = c.lipschitz * c.lipschitz;
  switch (regime) {
    case Regime::Convex:
      return L2 * c.smoothness * T * T;
    case Regime::StronglyConvex:
      return 2.0 * L2 * c.smoothness * T / c.strong_convexity;
    case Regime::NonConvex: {
      const double bt = c.smoothness * T;
      if (c.smoothness <= 0.0) return 0.0;
      return 2.0 * L2 / c.smoothness * (std::exp(bt) - bt - 1.0);
    }
  }
  throw ConfigError("regularity_constant: unknown regime");
}

}  // namespace

EpsilonResult epsilon_term(Regime regime, const ConstantEstimates& c, double T, long n,
                           double delta) {
  if (delta <= 0.0 || delta >= 1.0) throw DomainError("epsilon_term: delta must be in (0,1)");
  if (n < 2) throw DomainError("epsilon_term: n must be >= 2");
  if (T < 0) throw DomainError("epsilon_term: T must be >= 0");
  if (!c.has_smoothness) throw ConfigError("epsilon_term: smoothness estimate unavailable");
  if (regime == Regime::StronglyConvex && !c.has_strong_convexity)
    throw ConfigError("epsilon_term: strongly-convex regime needs a strong-convexity constant");

  const double L = c.lipschitz;
  const double L2 = L * L;
  const double nn = static_cast<double>(n);

  EpsilonResult out;
  out.sqrt_branch = 2.0 * L * std::sqrt(T / nn);

  if (regime == Regime::NonConvex && c.smoothness * T > 700.0) {
    out.overflow_fallback = true;
    out.chain_branch = std::numeric_limits<double>::infinity();
    out.value = out.sqrt_branch;
    return out;
  }

  const double c_reg = regularity_constant(regime, c, T);
  const double delta_cap = L2 * T;  // sup |K_T| over pairs
  const double kappa_excess = (L2 * T + c_reg) * (std::sqrt(2.0 * nn * std::log(2.0 * nn)) +
                                                  std::sqrt(2.0 * nn * std::log(4.0 / delta))) +
                              L2 * T + 2.0 * c_reg + std::log(2.0 / delta);
  const double hoeffding = 4.0 * delta_cap * std::sqrt(6.0 * nn * std::log(2.0 * nn)) +
                           8.0 * delta_cap;
  const double trace_cap = nn * L2 * T + kappa_excess + hoeffding;
  out.chain_branch = std::sqrt(kappa_excess + hoeffding) / nn + std::sqrt(trace_cap) / (nn * nn);
  // the sqrt(T/n) envelope only needs the Lipschitz cap, so it applies to
  // every regime; keeping it for strongly convex preserves the regime
  // ordering on small-n grids
  out.value = std::min(out.chain_branch, out.sqrt_branch);
  return out;
}

BoundReport full_gf_bound(double gamma, const EpsilonResult& eps, Regime regime,
                          const ConstantEstimates& constants, long n, double delta,
                          std::optional<double> gap) {
  if (delta <= 0.0 || delta >= 1.0) throw DomainError("full_gf_bound: delta must be in (0,1)");
  BoundReport report;
  report.gamma = gamma;
  report.epsilon = eps.value;
  report.slack = 3.0 * std::sqrt(std::log(4.0 * static_cast<double>(n) / delta) /
                                 (2.0 * static_cast<double>(n)));
  report.total = report.gamma + report.epsilon + report.slack;
  report.regime = regime;
  report.delta = delta;
  report.constants = constants;
  if (gap) {
    report.gap = *gap;
    report.has_gap = true;
  }
  if (eps.overflow_fallback)
    report.warnings.push_back("epsilon chain overflowed (beta*T > 700); sqrt(T/n) branch used");
  report.warnings.push_back("epsilon is a proof-chain instantiation with empirical constants");
  return report;
}

std::string bound_report_json(const BoundReport& report) {
  nlohmann::json j;
  j["gamma"] = report.gamma;
  j["epsilon"] = report.epsilon;
  j["slack"] = report.slack;
  j["total"] = report.total;
  if (report.has_gap)
    j["gap"] = report.gap;
  else
    j["gap"] = nullptr;
  j["regime"] = regime_name(report.regime);
  j["delta"] = report.delta;
  j["constants"] = {{"L", report.constants.lipschitz},
                    {"beta", report.constants.has_smoothness
                                 ? nlohmann::json(report.constants.smoothness)
                                 : nlohmann::json(nullptr)},
                    {"gamma_sc", report.constants.has_strong_convexity
                                     ? nlohmann::json(report.constants.strong_convexity)
                                     : nlohmann::json(nullptr)}};
  j["warnings"] = report.warnings;
  return j.dump(2);
}

double ntk_corollary_bound(double lambda_max, double lambda_min, double init_residual_sq, long n,
                           double T) {
  if (lambda_min <= 0.0) throw DomainError("ntk_corollary_bound: lambda_min must be positive");
  if (lambda_max < lambda_min)
    throw DomainError("ntk_corollary_bound: lambda_max must be >= lambda_min");
  if (init_residual_sq < 0.0) throw DomainError("ntk_corollary_bound: residual must be >= 0");
  const double nn = static_cast<double>(n);
  return std::sqrt(2.0 * lambda_max * init_residual_sq / (lambda_min * nn) *
                   (1.0 - std::exp(-2.0 * lambda_min * T / nn)));
}

namespace {

// int_0^T e^{-mu t} dt
double exp_integral(double mu, double T) {
  if (mu <= 0.0) return T;
  return (1.0 - std::exp(-mu * T)) / mu;
}

}  // namespace

KrrClosedForm krr_closed_form(const Matrix& features, std::span<const double> y, double lambda,
                              std::span<const double> w0, double T) {
  const long p = features.rows();
  const long n = features.cols();
  if (static_cast<long>(y.size()) != n) throw DimensionError("krr: y length mismatch");
  if (static_cast<long>(w0.size()) != p) throw DimensionError("krr: w0 length mismatch");
  if (lambda < 0.0) throw DomainError("krr: lambda must be >= 0");
  if (T <= 0.0) throw DomainError("krr: T must be positive");

  const double nn = static_cast<double>(n);
  const Matrix cov = gram(features);  // features * features^T, p x p
  const SymEig eig = sym_eig(cov);
  const double lead = eig.values.empty() ? 0.0 : std::max(eig.values.front(), 0.0);
  if (lead <= 0.0) throw NumericError("krr: zero feature matrix");
  const double rank_tol = 1e-12 * lead;
  long rank = 0;
  for (double v : eig.values)
    if (v > rank_tol) ++rank;

  // Phi y and projections
  std::vector<double> phi_y(static_cast<size_t>(p), 0.0);
  for (long r = 0; r < p; ++r) {
    double s = 0.0;
    for (long i = 0; i < n; ++i) s += features(r, i) * y[static_cast<size_t>(i)];
    phi_y[static_cast<size_t>(r)] = s;
  }

  auto project = [&](std::span<const double> v, long k) {
    double s = 0.0;
    for (long r = 0; r < p; ++r) s += eig.vectors(r, k) * v[static_cast<size_t>(r)];
    return s;
  };

  KrrClosedForm out;
  out.w_star.assign(static_cast<size_t>(p), 0.0);
  std::vector<double> mu(static_cast<size_t>(p), 0.0);
  std::vector<double> astar(static_cast<size_t>(p), 0.0);
  for (long k = 0; k < p; ++k) {
    const double lam = eig.values[static_cast<size_t>(k)];
    mu[static_cast<size_t>(k)] = (lam > rank_tol ? lam : 0.0) / nn + lambda;
    astar[static_cast<size_t>(k)] = project(phi_y, k) / nn;
  }
  for (long k = 0; k < p; ++k) {
    const double m = mu[static_cast<size_t>(k)];
    const double coef = m > 0 ? astar[static_cast<size_t>(k)] / m : 0.0;
    for (long r = 0; r < p; ++r) out.w_star[static_cast<size_t>(r)] += coef * eig.vectors(r, k);
  }

  // residual direction in the eigenbasis
  std::vector<double> delta0(static_cast<size_t>(p));
  for (long r = 0; r < p; ++r)
    delta0[static_cast<size_t>(r)] = w0[static_cast<size_t>(r)] - out.w_star[static_cast<size_t>(r)];
  std::vector<double> b(static_cast<size_t>(p));
  for (long k = 0; k < p; ++k) b[static_cast<size_t>(k)] = project(delta0, k);

  // w_T = w* + e^{-M T}(w0 - w*), M = (1/n) Phi Phi^T + lambda I
  out.w_final = out.w_star;
  for (long k = 0; k < p; ++k) {
    const double decay = std::exp(-mu[static_cast<size_t>(k)] * T) * b[static_cast<size_t>(k)];
    for (long r = 0; r < p; ++r) out.w_final[static_cast<size_t>(r)] += decay * eig.vectors(r, k);
  }

  auto total_loss = [&](std::span<const double> w) {
    double s = 0.0;
    for (long i = 0; i < n; ++i) {
      double f = 0.0;
      for (long r = 0; r < p; ++r) f += features(r, i) * w[static_cast<size_t>(r)];
      const double resid = f - y[static_cast<size_t>(i)];
      s += resid * resid;
    }
    return s / (2.0 * nn) + 0.5 * lambda * norm_sq(w);
  };
  out.loss_start = total_loss(w0);
  out.loss_end = total_loss(out.w_final);
  out.loss_drop = out.loss_start - out.loss_end;

  // int ||grad L_S||^2 dt = 1/2 sum_k mu_k b_k^2 (1 - e^{-2 mu_k T})
  double mean_sq = 0.0;
  for (long k = 0; k < p; ++k) {
    const double m = mu[static_cast<size_t>(k)];
    const double bk = b[static_cast<size_t>(k)];
    mean_sq += 0.5 * m * bk * bk * (1.0 - std::exp(-2.0 * m * T));
  }
  out.mean_grad_sq_integral = mean_sq;
  out.total_gram_sum = nn * nn * mean_sq;

  // per-sample gradients: grad l_i(t) = r_i(t) phi_i + lambda w_t with
  // r_i(t) = c_i + sum_k e^{-mu_k t} d_ik
  double per_sample = 0.0;
  std::vector<double> d(static_cast<size_t>(p));
  const double w_star_sq = norm_sq(out.w_star);
  double w_sq_integral = w_star_sq * T;
  for (long k = 0; k < p; ++k) {
    double u_dot_wstar = 0.0;
    for (long r = 0; r < p; ++r) u_dot_wstar += eig.vectors(r, k) * out.w_star[static_cast<size_t>(r)];
    w_sq_integral += 2.0 * b[static_cast<size_t>(k)] * u_dot_wstar * exp_integral(mu[static_cast<size_t>(k)], T);
    w_sq_integral += b[static_cast<size_t>(k)] * b[static_cast<size_t>(k)] *
                     exp_integral(2.0 * mu[static_cast<size_t>(k)], T);
  }
  out.k_max = 0.0;
  for (long i = 0; i < n; ++i) {
    double phi_sq = 0.0, f_star = 0.0;
    for (long r = 0; r < p; ++r) {
      const double v = features(r, i);
      phi_sq += v * v;
      f_star += v * out.w_star[static_cast<size_t>(r)];
    }
    out.k_max = std::max(out.k_max, phi_sq);
    const double ci = f_star - y[static_cast<size_t>(i)];
    for (long k = 0; k < p; ++k) {
      double phi_dot_u = 0.0;
      for (long r = 0; r < p; ++r) phi_dot_u += features(r, i) * eig.vectors(r, k);
      d[static_cast<size_t>(k)] = phi_dot_u * b[static_cast<size_t>(k)];
    }
    double int_r = ci * T;
    double int_r_sq = ci * ci * T;
    for (long k = 0; k < p; ++k) {
      const double ik = exp_integral(mu[static_cast<size_t>(k)], T);
      int_r += d[static_cast<size_t>(k)] * ik;
      int_r_sq += 2.0 * ci * d[static_cast<size_t>(k)] * ik;
      for (long k2 = 0; k2 < p; ++k2)
        int_r_sq += d[static_cast<size_t>(k)] * d[static_cast<size_t>(k2)] *
                    exp_integral(mu[static_cast<size_t>(k)] + mu[static_cast<size_t>(k2)], T);
    }
    per_sample += (phi_sq + 2.0 * lambda) * int_r_sq + 2.0 * lambda * y[static_cast<size_t>(i)] * int_r;
  }
  per_sample += nn * lambda * lambda * w_sq_integral;
  out.per_sample_sq_integral = per_sample;

  out.gamma_closed = 2.0 / nn * std::sqrt(std::max(out.loss_drop, 0.0)) *
                     std::sqrt(std::max(out.per_sample_sq_integral, 0.0));

  if (lambda == 0.0) {
    double phit_delta_sq = 0.0;
    for (long i = 0; i < n; ++i) {
      double s = 0.0;
      for (long r = 0; r < p; ++r) s += features(r, i) * delta0[static_cast<size_t>(r)];
      phit_delta_sq += s * s;
    }
    out.cor4_rhs = std::sqrt(out.k_max) * norm(delta0) * std::sqrt(phit_delta_sq) / nn;
    out.has_cor4 = true;

    const bool zero_init = std::all_of(w0.begin(), w0.end(), [](double v) { return v == 0.0; });
    if (zero_init && rank == n) {
      // K = Phi^T Phi shares its nonzero eigenvalues lam_k with Phi Phi^T and
      // has eigenvectors v_k = Phi^T u_k / sqrt(lam_k), so
      // y^T K^{-1} y = sum_k (u_k^T Phi y)^2 / lam_k^2.
      double quad = 0.0;
      for (long k = 0; k < p; ++k) {
        const double lam = eig.values[static_cast<size_t>(k)];
        if (lam <= rank_tol) continue;
        const double proj = project(phi_y, k);
        quad += proj * proj / (lam * lam);
      }
      double y_sq = 0.0;
      for (double v : y) y_sq += v * v;
      out.cor4_rhs_zero_init = std::sqrt(out.k_max) * std::sqrt(quad) * std::sqrt(y_sq) / nn;
      out.has_cor4_zero_init = true;
    }
  }
  return out;
}

double sgf_remainder(double T, long n, double delta, const ConstantEstimates& constants) {
  if (delta <= 0.0 || delta >= 1.0) throw DomainError("sgf_remainder: delta must be in (0,1)");
  if (n < 2) throw DomainError("sgf_remainder: n must be >= 2");
  if (T < 0) throw DomainError("sgf_remainder: T must be >= 0");
  const double nn = static_cast<double>(n);
  const double slack = 3.0 * std::sqrt((T * std::log(nn) + std::log(2.0 / delta)) / (2.0 * nn));
  const double cap = constants.lipschitz * constants.lipschitz;  // per-interval sup |K_{t,t+1}|
  const double hoeffding = 4.0 * cap * std::sqrt(6.0 * nn * std::log(2.0 * nn)) + 8.0 * cap;
  const double per_interval = std::sqrt(cap * nn + hoeffding) / nn +
                              std::sqrt(2.0 * cap * nn + hoeffding) / (nn * nn);
  return slack + 2.0 * T * per_interval;
}

}  // namespace lpk
