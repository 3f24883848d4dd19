#include "doctest.h"

#include <cmath>
#include <set>

#include "lpk/flow.hpp"

using namespace lpk;

namespace {

// two scalar samples z1, z2 under l(w, z) = (w - z)^2 / 2, via a linear model
// with input 1
Dataset scalar_pair(double z1, double z2) {
  Dataset d;
  d.X = Matrix(2, 1);
  d.Y = Matrix(2, 1);
  d.X(0, 0) = 1.0;
  d.X(1, 0) = 1.0;
  d.Y(0, 0) = z1;
  d.Y(1, 0) = z2;
  d.source = "scalar-pair";
  return d;
}

ModelSpec scalar_model() {
  ModelSpec spec;
  spec.kind = ModelKind::Linear;
  spec.input_dim = 1;
  return spec;
}

const LossSpec kSquare{LossKind::Square, 0.0};

double euler_final_w(double eta, double T) {
  FlowConfig cfg;
  cfg.eta = eta;
  cfg.total_time = T;
  const auto traj = integrate_gf(scalar_model(), kSquare, {0.0}, scalar_pair(0.0, 2.0), cfg);
  return traj.final_params[0];
}

}  // namespace

TEST_CASE("flow config grid validation") {
  FlowConfig cfg;
  cfg.eta = 1e-2;
  cfg.total_time = 1.0;
  CHECK(cfg.steps() == 100);
  cfg.eta = 3e-3;  // 1/eta not integral
  CHECK_THROWS_AS(cfg.steps(), ConfigError);
  cfg.eta = 0.0;
  CHECK_THROWS_AS(cfg.validate(4), ConfigError);
}

TEST_CASE("stationary start stays put") {
  FlowConfig cfg;
  cfg.eta = 1e-2;
  cfg.total_time = 1.0;
  const auto traj = integrate_gf(scalar_model(), kSquare, {0.0}, scalar_pair(-1.0, 1.0), cfg);
  CHECK(traj.final_params[0] == 0.0);
  for (double l : traj.train_loss) CHECK(l == traj.train_loss.front());
  CHECK_FALSE(traj.diverged);
}

TEST_CASE("scalar linear ode matches the analytic solution") {
  // dw/dt = -(w - 1), w(0) = 0  =>  w(t) = 1 - e^{-t}
  const double w_final = euler_final_w(1e-4, 1.0);
  CHECK(std::abs(w_final - (1.0 - std::exp(-1.0))) <= 1e-3);
}

TEST_CASE("euler refinement halves the discretization error") {
  const double exact = 1.0 - std::exp(-1.0);
  const double e1 = std::abs(euler_final_w(1e-2, 1.0) - exact);
  const double e2 = std::abs(euler_final_w(5e-3, 1.0) - exact);
  const double e3 = std::abs(euler_final_w(2.5e-3, 1.0) - exact);
  CHECK(e1 / e2 >= 1.8);
  CHECK(e1 / e2 <= 2.2);
  CHECK(e2 / e3 >= 1.8);
  CHECK(e2 / e3 <= 2.2);
}

TEST_CASE("trajectory record bookkeeping") {
  FlowConfig cfg;
  cfg.eta = 1e-2;
  cfg.total_time = 1.0;
  cfg.checkpoint_stride = 10;
  cfg.record.param_snapshots = true;
  cfg.snapshot_stride = 20;
  const auto traj = integrate_gf(scalar_model(), kSquare, {0.0}, scalar_pair(0.0, 2.0), cfg);
  CHECK(traj.steps == 100);
  CHECK(traj.train_loss.size() == 101);
  CHECK(traj.checkpoints.size() == 11);  // steps 0,10,...,90 plus the final step
  CHECK(traj.checkpoints.back().step == 100);
  CHECK(traj.snapshots.size() == 5);
  CHECK(traj.snapshots.front().step == 0);
  // cumulative diagonal at the last checkpoint equals the whole-path diagonal
  CHECK(traj.checkpoints.back().cum_diag_sum ==
        doctest::Approx(traj.diag_sum()).epsilon(1e-12));
  // loss is non-increasing for this convex instance
  CHECK_FALSE(traj.monotonicity_warning);
}

TEST_CASE("divergence is flagged with the step index") {
  FlowConfig cfg;
  cfg.eta = 4.0;  // far beyond 2/beta for this problem
  cfg.total_time = 4000.0;
  const auto traj = integrate_gf(scalar_model(), kSquare, {0.5}, scalar_pair(0.0, 2.0), cfg);
  CHECK(traj.diverged);
  CHECK(traj.divergence_step >= 0);
  CHECK(traj.train_loss.size() >= 1);
  CHECK(traj.monotonicity_warning);
}

TEST_CASE("make_schedule support and reduction") {
  Rng rng(3);
  const BatchSchedule full = make_schedule(5, 5, 3, rng);
  for (const auto& s : full.sets) {
    CHECK(s.size() == 5);
    for (int i = 0; i < 5; ++i) CHECK(s[static_cast<size_t>(i)] == i);
  }
  const BatchSchedule singles = make_schedule(5, 1, 3, rng);
  CHECK(singles.sets.size() == 3);
  for (const auto& s : singles.sets) {
    CHECK(s.size() == 1);
    CHECK(s[0] >= 0);
    CHECK(s[0] < 5);
  }
  CHECK_THROWS_AS(make_schedule(4, 5, 2, rng), DomainError);
}

TEST_CASE("make_schedule inclusion frequency") {
  Rng rng(5);
  const long trials = 10000;
  const int n = 10, m = 3;
  const BatchSchedule sched = make_schedule(n, m, trials, rng);
  long hits = 0;
  for (const auto& s : sched.sets) {
    std::set<int> uniq(s.begin(), s.end());
    CHECK(uniq.size() == static_cast<size_t>(m));
    hits += uniq.count(0);
  }
  const double p = static_cast<double>(m) / n;
  const double freq = static_cast<double>(hits) / trials;
  const double band = 3.0 * std::sqrt(p * (1 - p) / static_cast<double>(trials));
  CHECK(std::abs(freq - p) <= band);
}

TEST_CASE("sgf with full batches reduces to gf bitwise") {
  Rng rng(7);
  ModelSpec spec;
  spec.kind = ModelKind::Mlp2;
  spec.input_dim = 2;
  spec.width = 6;
  Dataset data;
  data.X = Matrix(4, 2);
  data.Y = Matrix(4, 1);
  for (long i = 0; i < 4; ++i) {
    data.X(i, 0) = rng.gaussian();
    data.X(i, 1) = rng.gaussian();
    data.Y(i, 0) = rng.gaussian();
  }
  const ParamVector w0 = init_params(spec, rng);

  FlowConfig gf_cfg;
  gf_cfg.eta = 0.05;
  gf_cfg.total_time = 2.0;
  const auto gf = integrate_gf(spec, kSquare, w0, data, gf_cfg);

  FlowConfig sgf_cfg = gf_cfg;
  sgf_cfg.mode = FlowMode::Sgf;
  sgf_cfg.batch_size = 4;
  Rng srng(9);
  const auto sched = make_schedule(4, 4, 2, srng);
  const auto sgf = integrate_sgf(spec, kSquare, w0, data, sgf_cfg, sched);

  REQUIRE(gf.final_params.size() == sgf.final_params.size());
  for (size_t t = 0; t < gf.final_params.size(); ++t)
    CHECK(gf.final_params[t] == sgf.final_params[t]);  // bitwise
  CHECK(sgf.intervals.size() == 2);
}

TEST_CASE("sgf alternating singletons match the piecewise exponential") {
  // interval with active sample z: w <- z + (w - z) e^{-dt}
  FlowConfig cfg;
  cfg.mode = FlowMode::Sgf;
  cfg.eta = 1e-4;
  cfg.total_time = 4.0;
  cfg.batch_size = 1;
  BatchSchedule sched;
  sched.sets = {{0}, {1}, {0}, {1}};
  const auto traj =
      integrate_sgf(scalar_model(), kSquare, {0.0}, scalar_pair(0.0, 2.0), cfg, sched);

  double w = 0.0;
  const double decay = std::exp(-1.0);
  for (int t = 0; t < 4; ++t) {
    const double z = (t % 2 == 0) ? 0.0 : 2.0;
    w = z + (w - z) * decay;
  }
  CHECK(std::abs(traj.final_params[0] - w) <= 1e-3);
}

TEST_CASE("sgf zero-gradient start is constant") {
  FlowConfig cfg;
  cfg.mode = FlowMode::Sgf;
  cfg.eta = 0.1;
  cfg.total_time = 2.0;
  cfg.batch_size = 2;
  BatchSchedule sched;
  sched.sets = {{0, 1}, {0, 1}};
  // both samples equal -> stationary at the shared value
  const auto traj =
      integrate_sgf(scalar_model(), kSquare, {1.5}, scalar_pair(1.5, 1.5), cfg, sched);
  CHECK(traj.final_params[0] == 1.5);
}

TEST_CASE("sphere_step geometry") {
  const std::vector<double> theta = {1.0, 0.0};
  const std::vector<double> radial = {2.0, 0.0};
  const auto same = sphere_step(theta, radial, 0.7);
  CHECK(same[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(same[1] == doctest::Approx(0.0).epsilon(1e-14));

  const auto unchanged = sphere_step(theta, std::vector<double>{0.0, 0.0}, 0.7);
  CHECK(unchanged[0] == 1.0);

  const auto moved = sphere_step(theta, std::vector<double>{0.0, 1.0}, 1.0);
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  CHECK(moved[0] == doctest::Approx(inv_sqrt2).epsilon(1e-14));
  CHECK(moved[1] == doctest::Approx(-inv_sqrt2).epsilon(1e-14));

  CHECK_THROWS_AS(sphere_step(std::vector<double>{0.5, 0.0}, std::vector<double>{0.0, 1.0}, 1.0), DomainError);
}

TEST_CASE("sphere_step keeps unit norm over many iterations") {
  Rng rng(11);
  std::vector<double> theta = rng.sphere(8);
  for (int i = 0; i < 500; ++i) {
    const auto g = rng.gaussian_vec(8);
    theta = sphere_step(theta, g, 0.05);
    CHECK(std::abs(norm(theta) - 1.0) <= 1e-14);
  }
}

TEST_CASE("two-stage flow freezes the output weights during warmup") {
  Rng data_rng(13);
  const Dataset data = gen_single_index(64, 4, HermiteLink::He1, 0.1, data_rng);

  SingleIndexConfig cfg;
  cfg.width = 8;
  cfg.lambda = 0.01;
  cfg.rho = 1.0;
  cfg.sparse_support = 2;
  cfg.warm_time = 1.0;
  cfg.total_time = 1.0;  // warm == total: second stage empty
  cfg.eta = 0.01;
  Rng net_rng(17);
  const auto rec = integrate_two_stage(data, data.generator_direction, cfg, net_rng);
  CHECK(rec.c == rec.c0);
  CHECK(std::abs(norm(rec.theta) - 1.0) <= 1e-12);
}

TEST_CASE("two-stage flow shrinks the output weights under heavy ridge") {
  Rng data_rng(19);
  const Dataset data = gen_single_index(64, 4, HermiteLink::He1, 0.1, data_rng);
  SingleIndexConfig cfg;
  cfg.width = 8;
  cfg.lambda = 5.0;
  cfg.rho = 1.0;
  cfg.sparse_support = 2;
  cfg.warm_time = 0.5;
  cfg.total_time = 2.0;
  cfg.eta = 0.01;
  Rng net_rng(23);
  const auto rec = integrate_two_stage(data, data.generator_direction, cfg, net_rng);
  CHECK(norm(rec.c) < rec.c_norm_at_warm_end);
}

TEST_CASE("two-stage flow recovers an easy single-index direction") {
  // information exponent 1, small dimension: overlap should grow in most seeds
  int improved = 0;
  const int seeds = 5;
  for (int s = 0; s < seeds; ++s) {
    Rng data_rng(100 + static_cast<uint64_t>(s));
    const Dataset data = gen_single_index(512, 8, HermiteLink::He1, 0.1, data_rng);
    SingleIndexConfig cfg;
    cfg.width = 16;
    cfg.tau = 2.0;
    cfg.lambda = 0.05;
    cfg.rho = 1.0;
    cfg.sparse_support = 4;
    cfg.warm_time = 4.0;
    cfg.total_time = 8.0;
    cfg.eta = 0.01;
    Rng net_rng(200 + static_cast<uint64_t>(s));
    const auto rec = integrate_two_stage(data, data.generator_direction, cfg, net_rng);
    if (std::abs(rec.overlap.back()) > std::abs(rec.overlap.front())) ++improved;
  }
  CHECK(improved * 3 >= seeds * 2);  // at least 2/3 of seeds
}
