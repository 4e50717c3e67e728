#include "doctest.h"

#include <cmath>

#include "minmax/trainer.hpp"
#include "support.hpp"

using namespace minmax;

namespace {

ProblemInstance small_ot() {
  return preset_ot(Distribution1D::normal(0, 1), Distribution1D::normal(0, 2),
                   CostFunction::positive_sum());
}

NetworkConfig small_net() { return {8, 8, 3}; }

TrainConfig small_cfg(std::uint64_t seed = 7) {
  TrainConfig c;
  c.batch = 32;
  c.iterations = 20;
  c.return_window = 5;
  c.seed = seed;
  c.generator_adam.learning_rate = 1e-3;
  c.discriminator_adam.learning_rate = 1e-3;
  return c;
}

}  // namespace

TEST_CASE("replay is deterministic") {
  auto p = small_ot();
  for (auto mode : {RegularizationConfig::none(), RegularizationConfig::divergence(5.0),
                    RegularizationConfig::lipschitz_penalty(1.0)}) {
    TrainConfig cfg = small_cfg();
    cfg.regularization = mode;
    cfg.unroll = 2;
    cfg.mixtures = 3;
    const auto a = train(p, make_networks(p, small_net(), 3, cfg.seed), cfg);
    const auto b = train(p, make_networks(p, small_net(), 3, cfg.seed), cfg);
    CHECK(a.phi == b.phi);
    CHECK(a.networks.generator == b.networks.generator);
    CHECK(a.networks.discriminators == b.networks.discriminators);
    cfg.seed = 8;
    const auto c = train(p, make_networks(p, small_net(), 3, cfg.seed), cfg);
    CHECK_FALSE(a.phi == c.phi);
  }
}

TEST_CASE("unrolling leaves the live discriminators alone") {
  auto p = small_ot();
  TrainConfig cfg = small_cfg();
  cfg.unroll = 5;
  Trainer t(p, make_networks(p, small_net(), 1, cfg.seed), cfg);
  t.iterate();
  const DiscriminatorSet before = t.networks().discriminators;
  const AdamState state = t.discriminator_adam();
  const GeneratorEnsemble gen = t.networks().generator;
  t.generator_step();
  CHECK(t.networks().discriminators == before);
  CHECK(t.discriminator_adam() == state);
  CHECK_FALSE(t.networks().generator == gen);
}

TEST_CASE("stream consumption per iteration") {
  auto p = small_ot();
  // draws used by one batch, counted on fresh streams
  Stream lat(0), route(1), mu0(2), mu1(3);
  p.latent.sample(32, lat);
  GeneratorEnsemble probe = make_generator(2, 2, 4, 2, 3, std::nullopt, route);
  const std::uint64_t route_init = route.draws();
  probe.route(32, route);
  sample_mu_side(p.terms[0], 32, mu0);
  sample_mu_side(p.terms[1], 32, mu1);
  const std::vector<std::uint64_t> per_batch{lat.draws(), route.draws() - route_init,
                                             mu0.draws(), mu1.draws()};

  for (std::size_t unroll : {0u, 3u}) {
    for (std::size_t inner : {1u, 4u}) {
      TrainConfig cfg = small_cfg();
      cfg.unroll = unroll;
      cfg.inner_steps = inner;
      cfg.mixtures = 3;
      Trainer t(p, make_networks(p, small_net(), 3, cfg.seed), cfg);
      t.iterate();
      t.iterate();
      const auto d = t.stream_draws();
      const std::uint64_t batches = 2 * (inner + unroll + 1);
      for (std::size_t k = 0; k < 4; ++k) CHECK(d[k] == batches * per_batch[k]);
    }
  }
}

TEST_CASE("warm-up skips discriminator steps") {
  auto p = small_ot();
  TrainConfig cfg = small_cfg();
  cfg.warmup = 3;
  Trainer t(p, make_networks(p, small_net(), 1, cfg.seed), cfg);
  const DiscriminatorSet init = t.networks().discriminators;
  const GeneratorEnsemble gen = t.networks().generator;
  for (int k = 0; k < 3; ++k) t.iterate();
  CHECK(t.networks().discriminators == init);
  CHECK(t.discriminator_adam().step == 0);
  CHECK_FALSE(t.networks().generator == gen);
  t.iterate();
  CHECK_FALSE(t.networks().discriminators == init);
  CHECK(t.discriminator_adam().step == 1);
}

TEST_CASE("running return is the trailing mean of phi") {
  auto p = small_ot();
  TrainConfig cfg = small_cfg();
  cfg.trace_stride = 4;
  std::vector<TraceRow> rows;
  const auto r = train(p, make_networks(p, small_net(), 1, cfg.seed), cfg,
                       [&](const TraceRow& row) { rows.push_back(row); });
  REQUIRE(rows.size() == 20);
  for (std::size_t t = 0; t < 20; ++t) {
    const std::size_t k = std::min<std::size_t>(t + 1, 5);
    double acc = 0;
    for (std::size_t i = t + 1 - k; i <= t; ++i) acc += rows[i].phi;
    CHECK(rows[t].running_return == doctest::Approx(acc / k).epsilon(1e-14));
  }
  CHECK(r.value == rows.back().running_return);
  CHECK(r.trace.size() == 5);
  CHECK(r.trace.front().iter == 4);

  CHECK(stability_metric({1.0, 3.0}, 10) == 1.0);
  CHECK(stability_metric({5.0, 1.0, 3.0}, 2) == 1.0);
  CHECK(trailing_mean({1, 2, 3, 4}, 3, 2) == 2.5);
  CHECK_THROWS(trailing_mean({1.0}, 2, 1));
}

TEST_CASE("frozen zero discriminators record only the cost") {
  auto p = small_ot();
  TrainConfig cfg = small_cfg();
  cfg.discriminator_adam.learning_rate = 0.0;
  Networks n = make_networks(p, small_net(), 1, cfg.seed);
  for (auto& net : n.discriminators.nets) {
    net.weight(net.layers() - 1).value.fill(0.0);
    net.bias(net.layers() - 1).value.fill(0.0);
  }
  cfg.unroll = 2;
  std::vector<TraceRow> rows;
  train(p, n, cfg, [&](const TraceRow& r) { rows.push_back(r); });
  for (const auto& r : rows) {
    CHECK(r.phi == r.cost_term);
    for (double c : r.constraint) CHECK(c == 0.0);
  }
}

TEST_CASE("non-finite values abort with the iteration") {
  auto p = small_ot();
  TrainConfig cfg = small_cfg();
  Networks n = make_networks(p, small_net(), 1, cfg.seed);
  for (auto& v : n.generator.members()[0].bias(2).value.storage()) v = std::nan("");
  try {
    train(p, n, cfg);
    FAIL("expected TrainingAborted");
  } catch (const TrainingAborted& e) {
    CHECK(e.iteration == 1);
  }
}

TEST_CASE("configuration validation") {
  auto p = small_ot();
  TrainConfig cfg = small_cfg();
  cfg.return_window = 21;
  CHECK_THROWS(Trainer(p, make_networks(p, small_net(), 1, 1), cfg));
  cfg = small_cfg();
  cfg.mixtures = 0;
  CHECK_THROWS(cfg.validate());
  cfg = small_cfg();
  CHECK_THROWS(Trainer(p, make_networks(preset_mot(), small_net(), 1, 1), cfg));
}
