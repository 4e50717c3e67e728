#include "minmax/trainer.hpp"

#include <chrono>
#include <cmath>
#include <string>

namespace minmax {

void TrainConfig::validate() const {
  if (batch == 0) throw std::invalid_argument("batch must be >= 1");
  if (iterations == 0) throw std::invalid_argument("iterations must be >= 1");
  if (return_window == 0 || return_window > iterations) {
    throw std::invalid_argument("return window must satisfy 1 <= N_r <= N");
  }
  if (inner_steps == 0) throw std::invalid_argument("inner steps must be >= 1");
  if (mixtures == 0) throw std::invalid_argument("mixture count must be >= 1");
  if (trace_stride == 0) throw std::invalid_argument("trace stride must be >= 1");
  for (const AdamHyper* h : {&generator_adam, &discriminator_adam}) {
    if (!(h->learning_rate >= 0.0) || !(h->beta1 >= 0.0 && h->beta1 < 1.0) ||
        !(h->beta2 >= 0.0 && h->beta2 < 1.0) || !(h->epsilon > 0.0)) {
      throw std::invalid_argument("invalid Adam hyperparameters");
    }
  }
}

Networks make_networks(const ProblemInstance& problem, const NetworkConfig& net,
                       std::size_t mixtures, std::uint64_t seed) {
  Stream gen_rng(seed, streams::generator_init);
  Stream disc_rng(seed, streams::discriminator_init);
  return {make_generator(problem.latent.dim, problem.dim, net.generator_hidden, net.depth,
                         mixtures, problem.support_box, gen_rng),
          make_discriminators(problem.term_dims(), net.discriminator_hidden, net.depth,
                              disc_rng)};
}

Trainer::Trainer(const ProblemInstance& problem, Networks networks, TrainConfig cfg)
    : problem_(problem),
      nets_(std::move(networks)),
      cfg_(std::move(cfg)),
      latent_rng_(cfg_.seed, streams::latent),
      routing_rng_(cfg_.seed, streams::routing) {
  problem_.validate();
  cfg_.validate();
  cfg_.regularization.validate(problem_.terms.size());
  if (nets_.discriminators.nets.size() != problem_.terms.size()) {
    throw std::invalid_argument("one discriminator per constraint term required");
  }
  if (nets_.generator.output_dim() != problem_.dim ||
      nets_.generator.latent_dim() != problem_.latent.dim) {
    throw ShapeError("generator dimensions do not match the problem");
  }
  for (std::size_t j = 0; j < problem_.terms.size(); ++j) {
    mu_rng_.emplace_back(cfg_.seed, streams::mu_base + j);
  }
}

std::vector<std::uint64_t> Trainer::stream_draws() const {
  std::vector<std::uint64_t> d{latent_rng_.draws(), routing_rng_.draws()};
  for (const Stream& s : mu_rng_) d.push_back(s.draws());
  return d;
}

Trainer::Batch Trainer::draw_batch() {
  Batch b;
  b.latents = problem_.latent.sample(cfg_.batch, latent_rng_);
  b.routes = nets_.generator.route(cfg_.batch, routing_rng_);
  for (std::size_t j = 0; j < problem_.terms.size(); ++j) {
    b.mu.push_back(sample_mu_side(problem_.terms[j], cfg_.batch, mu_rng_[j]));
  }
  return b;
}

ObjectiveBreakdown Trainer::discriminator_step_on(DiscriminatorSet& disc, AdamState& state) {
  const Batch b = draw_batch();
  ad::Tape tape;
  ad::Var x = tape.constant(nets_.generator.sample(b.latents, b.routes));
  const ObjectiveGraph g =
      build_objective(tape, problem_, x, b.mu, disc, cfg_.regularization, true, true);
  ObjectiveBreakdown out = g.breakdown();
  try {
    check_finite(out, problem_);
    tape.backward(g.discriminator_loss);
  } catch (const NumericError& e) {
    throw TrainingAborted(std::string("discriminator step: ") + e.what(), t_, out);
  }
  auto params = disc.parameters();
  adam_step(params, state, cfg_.discriminator_adam);
  return out;
}

ObjectiveBreakdown Trainer::discriminator_step() {
  ObjectiveBreakdown b = discriminator_step_on(nets_.discriminators, disc_state_);
  last_disc_ = b;
  return b;
}

ObjectiveBreakdown Trainer::generator_step() {
  // First-order lookahead: advance a copy of the discriminators and their
  // optimizer, then treat the advanced weights as constants.
  std::optional<DiscriminatorSet> ahead;
  if (cfg_.unroll > 0) {
    ahead = nets_.discriminators;
    AdamState ahead_state = disc_state_;
    for (std::size_t u = 0; u < cfg_.unroll; ++u) discriminator_step_on(*ahead, ahead_state);
  }

  const Batch b = draw_batch();
  ad::Tape tape;
  ad::Var x = nets_.generator.generate(tape, b.latents, b.routes, true);
  DiscriminatorSet& opponent = ahead ? *ahead : nets_.discriminators;
  const ObjectiveGraph g =
      build_objective(tape, problem_, x, b.mu, opponent, cfg_.regularization, false, false);

  ObjectiveBreakdown recorded = g.breakdown();
  if (ahead) {
    ad::Tape live;
    recorded = build_objective(live, problem_, live.constant(x.value()), b.mu,
                               nets_.discriminators, cfg_.regularization, false, false)
                   .breakdown();
  }
  try {
    check_finite(recorded, problem_);
    tape.backward(g.generator_loss);
  } catch (const NumericError& e) {
    throw TrainingAborted(std::string("generator step: ") + e.what(), t_, recorded);
  }
  auto params = nets_.generator.parameters();
  adam_step(params, gen_state_, cfg_.generator_adam);
  return recorded;
}

TraceRow Trainer::iterate() {
  ++t_;
  if (t_ > cfg_.warmup) {
    for (std::size_t k = 0; k < cfg_.inner_steps; ++k) discriminator_step();
  }
  const ObjectiveBreakdown b = generator_step();
  phi_.push_back(b.phi);
  running_.push_back(trailing_mean(phi_, phi_.size(), cfg_.return_window));

  TraceRow row;
  row.iter = t_;
  row.phi = b.phi;
  row.cost_term = b.cost_term;
  row.constraint = b.constraint;
  if (cfg_.regularization.mode == RegularizationConfig::Mode::lipschitz) {
    // The gradient penalty lives only in the discriminator loss.
    row.penalty = last_disc_ ? last_disc_->penalty
                             : std::vector<double>(problem_.terms.size(), 0.0);
  } else {
    row.penalty = b.penalty;
  }
  row.running_return = running_.back();
  return row;
}

TrainResult Trainer::run(const std::function<void(const TraceRow&)>& on_row) {
  const auto start = std::chrono::steady_clock::now();
  TrainResult result;
  while (t_ < cfg_.iterations) {
    TraceRow row = iterate();
    if (on_row) on_row(row);
    if (row.iter % cfg_.trace_stride == 0 || row.iter == cfg_.iterations) {
      result.trace.push_back(std::move(row));
    }
  }
  result.value = trailing_mean(phi_, phi_.size(), cfg_.return_window);
  result.phi = phi_;
  result.running_return = running_;
  result.networks = nets_;
  result.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

TrainResult train(const ProblemInstance& problem, Networks networks, const TrainConfig& cfg,
                  const std::function<void(const TraceRow&)>& on_row) {
  Trainer trainer(problem, std::move(networks), cfg);
  return trainer.run(on_row);
}

double trailing_mean(const std::vector<double>& values, std::size_t t, std::size_t window) {
  if (t == 0 || t > values.size() || window == 0) {
    throw std::invalid_argument("trailing mean needs 1 <= t <= size and window >= 1");
  }
  const std::size_t k = std::min(t, window);
  double acc = 0.0;
  for (std::size_t i = t - k; i < t; ++i) acc += values[i];
  return acc / static_cast<double>(k);
}

double stability_metric(const std::vector<double>& values, std::size_t window) {
  if (values.empty() || window == 0) return 0.0;
  const std::size_t k = std::min(window, values.size());
  const std::size_t first = values.size() - k;
  double mean = 0.0;
  for (std::size_t i = first; i < values.size(); ++i) mean += values[i];
  mean /= static_cast<double>(k);
  double acc = 0.0;
  for (std::size_t i = first; i < values.size(); ++i) {
    acc += (values[i] - mean) * (values[i] - mean);
  }
  return std::sqrt(acc / static_cast<double>(k));
}

}  // namespace minmax
