#include "doctest.h"

#include <cmath>

#include "lpk/stability.hpp"

using namespace lpk;

namespace {

ModelSpec linear_spec(int d) {
  ModelSpec spec;
  spec.kind = ModelKind::Linear;
  spec.input_dim = d;
  return spec;
}

}  // namespace

TEST_CASE("perturb_dataset is a copy with one row replaced") {
  Rng rng(3);
  const Dataset data = gen_two_cluster(8, 3, 4.0, rng);
  const std::vector<double> x = {0.1, 0.2, 0.3};
  const std::vector<double> y = {1.0};
  const Dataset moved = perturb_dataset(data, 5, x, y);
  CHECK(moved.n() == data.n());
  for (long i = 0; i < data.n(); ++i) {
    if (i == 5) continue;
    for (int j = 0; j < 3; ++j) CHECK(moved.X(i, j) == data.X(i, j));
    CHECK(moved.Y(i, 0) == data.Y(i, 0));
  }
  CHECK(moved.X(5, 0) == 0.1);
  CHECK(moved.Y(5, 0) == 1.0);

  // replace back: involution
  const Dataset back = perturb_dataset(moved, 5, data.X.row(5), data.Y.row(5));
  for (long i = 0; i < data.n(); ++i)
    for (int j = 0; j < 3; ++j) CHECK(back.X(i, j) == data.X(i, j));

  // identical replacement point: datasets equal
  const Dataset same = perturb_dataset(data, 2, data.X.row(2), data.Y.row(2));
  for (long i = 0; i < data.n(); ++i)
    for (int j = 0; j < 3; ++j) CHECK(same.X(i, j) == data.X(i, j));

  CHECK_THROWS_AS(perturb_dataset(data, 99, x, y), DomainError);
}

TEST_CASE("envelope formulas") {
  ConstantEstimates c;
  c.lipschitz = 1.0;
  c.smoothness = 1.0;
  c.has_smoothness = true;
  c.strong_convexity = 2.0;
  c.has_strong_convexity = true;
  CHECK(stability_envelope(Regime::Convex, c, 10, 2.0) == doctest::Approx(0.4));
  CHECK(stability_envelope(Regime::StronglyConvex, c, 10, 2.0) == doctest::Approx(0.1));
  CHECK(stability_envelope(Regime::NonConvex, c, 10, 1.0) ==
        doctest::Approx(0.2 * (std::exp(1.0) - 1.0)));

  ConstantEstimates missing;
  missing.lipschitz = 1.0;
  CHECK_THROWS_AS(stability_envelope(Regime::StronglyConvex, missing, 10, 1.0), ConfigError);
  CHECK_THROWS_AS(stability_envelope(Regime::NonConvex, missing, 10, 1.0), ConfigError);

  // kernel perturbation envelopes
  CHECK(kernel_perturbation_envelope(Regime::Convex, c, 10, 3.0) ==
        doctest::Approx(2.0 * 9.0 / 10.0));
  CHECK(kernel_perturbation_envelope(Regime::StronglyConvex, c, 10, 3.0) ==
        doctest::Approx(4.0 * 3.0 / 20.0));
  CHECK(kernel_perturbation_envelope(Regime::NonConvex, c, 10, 1.0) ==
        doctest::Approx(0.4 * (std::exp(1.0) - 2.0)));
}

TEST_CASE("identical replacement gives a bitwise-identical pair") {
  Rng rng(5);
  const Dataset data = gen_two_cluster(20, 3, 4.0, rng);
  const ModelSpec spec = linear_spec(3);
  const LossSpec loss{LossKind::Logistic, 0.0};
  Rng wr(7);
  const ParamVector w0 = init_params(spec, wr);
  FlowConfig cfg;
  cfg.eta = 0.01;
  cfg.total_time = 2.0;
  Rng crng(9);
  const StabilityReport rep = paired_divergence(spec, loss, w0, data, 4, data.X.row(4),
                                                data.Y.row(4), cfg, Regime::Convex, crng, 8);
  for (double d : rep.divergence) CHECK(d == 0.0);
  CHECK_FALSE(rep.violation);
}

TEST_CASE("logistic pair stays under the convex envelope") {
  Rng rng(11);
  const Dataset data = gen_two_cluster(40, 3, 4.0, rng);
  const ModelSpec spec = linear_spec(3);
  const LossSpec loss{LossKind::Logistic, 0.0};
  Rng wr(13);
  const ParamVector w0 = init_params(spec, wr);
  FlowConfig cfg;
  cfg.eta = 0.01;
  cfg.total_time = 5.0;
  Rng drng(15);
  for (long i : {0L, 17L, 39L}) {
    Rng crng(17);
    auto [zx, zy] = draw_point(data, drng);
    const StabilityReport rep =
        paired_divergence(spec, loss, w0, data, i, zx, zy, cfg, Regime::Convex, crng, 8);
    CHECK_FALSE(rep.violation);
    CHECK(rep.divergence.front() == 0.0);
    for (size_t s = 0; s < rep.times.size(); ++s)
      CHECK(rep.divergence[s] <= rep.envelope[s] * 1.05 + 1e-15);
  }
}

TEST_CASE("ridge pair stays under the strongly convex envelope") {
  Rng rng(19);
  const Dataset data = gen_gaussian_linear(40, 3, 0.2, rng);
  const ModelSpec spec = linear_spec(3);
  const LossSpec loss{LossKind::RegularizedSquare, 0.5};
  Rng wr(21);
  const ParamVector w0 = init_params(spec, wr);
  FlowConfig cfg;
  cfg.eta = 0.01;
  cfg.total_time = 8.0;
  Rng drng(23);
  for (long i : {3L, 25L}) {
    Rng crng(29);
    auto [zx, zy] = draw_point(data, drng);
    const StabilityReport rep = paired_divergence(spec, loss, w0, data, i, zx, zy, cfg,
                                                  Regime::StronglyConvex, crng, 8, 0.5);
    CHECK_FALSE(rep.violation);
    const double cap = 2.0 * rep.constants.lipschitz / (0.5 * static_cast<double>(data.n()));
    for (double d : rep.divergence) CHECK(d <= cap * 1.05);
  }
}

TEST_CASE("divergence curves are stable under grid refinement") {
  Rng rng(31);
  const Dataset data = gen_two_cluster(30, 3, 4.0, rng);
  const ModelSpec spec = linear_spec(3);
  const LossSpec loss{LossKind::Logistic, 0.0};
  Rng wr(33);
  const ParamVector w0 = init_params(spec, wr);
  Rng drng(35);
  auto [zx, zy] = draw_point(data, drng);

  auto curve_at = [&](double eta, long stride) {
    FlowConfig cfg;
    cfg.eta = eta;
    cfg.total_time = 4.0;
    cfg.checkpoint_stride = stride;
    Rng crng(37);
    return paired_divergence(spec, loss, w0, data, 7, zx, zy, cfg, Regime::Convex, crng, 4);
  };
  const StabilityReport coarse = curve_at(0.01, 50);
  const StabilityReport fine = curve_at(0.005, 100);
  REQUIRE(coarse.times.size() == fine.times.size());
  double sup_diff = 0.0, sup_val = 0.0;
  for (size_t s = 0; s < coarse.times.size(); ++s) {
    CHECK(coarse.times[s] == doctest::Approx(fine.times[s]));
    sup_diff = std::max(sup_diff, std::abs(coarse.divergence[s] - fine.divergence[s]));
    sup_val = std::max(sup_val, fine.divergence[s]);
  }
  CHECK(sup_diff <= 0.05 * sup_val);
}

TEST_CASE("coupled sgf pair with identical replacement stays identical") {
  Rng rng(41);
  const Dataset data = gen_two_cluster(16, 3, 4.0, rng);
  const ModelSpec spec = linear_spec(3);
  const LossSpec loss{LossKind::Logistic, 0.0};
  Rng wr(43);
  const ParamVector w0 = init_params(spec, wr);
  FlowConfig cfg;
  cfg.mode = FlowMode::Sgf;
  cfg.eta = 0.01;
  cfg.total_time = 3.0;
  cfg.batch_size = 4;
  Rng srng(45);
  const BatchSchedule sched = make_schedule(16, 4, 3, srng);
  Rng crng(47);
  const StabilityReport rep =
      paired_divergence(spec, loss, w0, data, 2, data.X.row(2), data.Y.row(2), cfg,
                        Regime::Convex, crng, 4, std::nullopt, 0.05, &sched);
  for (double d : rep.divergence) CHECK(d == 0.0);

  // without a schedule, sgf mode is rejected
  Rng crng2(49);
  CHECK_THROWS_AS(paired_divergence(spec, loss, w0, data, 2, data.X.row(2), data.Y.row(2), cfg,
                                    Regime::Convex, crng2, 4),
                  ConfigError);
}

TEST_CASE("kernel perturbation measured against the envelopes") {
  Rng rng(51);
  const Dataset data = gen_gaussian_linear(24, 3, 0.2, rng);
  const ModelSpec spec = linear_spec(3);
  const LossSpec ridge{LossKind::RegularizedSquare, 0.5};
  Rng wr(53);
  const ParamVector w0 = init_params(spec, wr);

  Rng drng(55);
  auto [zx, zy] = draw_point(data, drng);
  std::vector<ProbePair> probes;
  for (int k = 0; k < 2; ++k) {
    auto [x1, y1] = draw_point(data, drng);
    auto [x2, y2] = draw_point(data, drng);
    probes.push_back({x1, y1, x2, y2});
  }

  FlowConfig cfg;
  cfg.eta = 0.01;
  cfg.total_time = 1.0;
  cfg.snapshot_stride = 1;

  // identical replacement: zero deviation
  Rng crng(57);
  const auto same = lpk_perturbation(spec, ridge, w0, data, 3, data.X.row(3), data.Y.row(3),
                                     probes, cfg, Regime::StronglyConvex, crng, 8, 0.5);
  for (double d : same.deviation) CHECK(d == 0.0);

  // real replacement: below the strongly convex envelope with 10% margin
  Rng crng2(59);
  const auto moved = lpk_perturbation(spec, ridge, w0, data, 3, zx, zy, probes, cfg,
                                      Regime::StronglyConvex, crng2, 8, 0.5, 0.1);
  CHECK_FALSE(moved.violation);
  for (double d : moved.deviation) CHECK(d <= moved.envelope * 1.1);

  // convex instance: doubling T quadruples the envelope, deviation stays below
  const LossSpec square{LossKind::Square, 0.0};
  Rng crng3(61);
  const auto conv1 = lpk_perturbation(spec, square, w0, data, 3, zx, zy, probes, cfg,
                                      Regime::Convex, crng3, 8);
  FlowConfig cfg2 = cfg;
  cfg2.total_time = 2.0;
  Rng crng4(63);
  const auto conv2 = lpk_perturbation(spec, square, w0, data, 3, zx, zy, probes, cfg2,
                                      Regime::Convex, crng4, 8);
  const double ratio = conv2.envelope / conv1.envelope;
  // constants are re-estimated per horizon, so the T^2 scaling is approximate
  CHECK(ratio >= 3.5);
  CHECK_FALSE(conv1.violation);
  CHECK_FALSE(conv2.violation);
}
