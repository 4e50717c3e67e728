#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "minmax/autodiff.hpp"
#include "minmax/nets.hpp"
#include "minmax/objective.hpp"
#include "minmax/problems.hpp"
#include "minmax/rng.hpp"

namespace minmax {

/// Sub-stream ids derived from the run seed.
namespace streams {
inline constexpr std::uint64_t latent = 1;
inline constexpr std::uint64_t routing = 2;
inline constexpr std::uint64_t generator_init = 10;
inline constexpr std::uint64_t discriminator_init = 11;
/// Term j draws its mu batches from stream mu_base + j.
inline constexpr std::uint64_t mu_base = 100;
}  // namespace streams

struct NetworkConfig {
  std::size_t generator_hidden = 64;
  std::size_t discriminator_hidden = 64;
  std::size_t depth = 4;
};

struct Networks {
  GeneratorEnsemble generator;
  DiscriminatorSet discriminators;
};

struct TrainConfig {
  std::size_t batch = 256;
  std::size_t iterations = 15000;
  std::size_t inner_steps = 1;
  std::size_t return_window = 500;
  std::size_t warmup = 0;
  std::size_t unroll = 0;
  std::size_t mixtures = 1;
  RegularizationConfig regularization;
  AdamHyper generator_adam;
  AdamHyper discriminator_adam;
  std::uint64_t seed = 0;
  std::size_t trace_stride = 1;

  void validate() const;
};

/// Generator and discriminators for `problem`, initialized from the
/// generator_init and discriminator_init sub-streams of `seed`.
Networks make_networks(const ProblemInstance& problem, const NetworkConfig& net,
                       std::size_t mixtures, std::uint64_t seed);

struct TraceRow {
  std::size_t iter = 0;
  double phi = 0.0;
  double cost_term = 0.0;
  std::vector<double> constraint;
  std::vector<double> penalty;
  double running_return = 0.0;
};

struct TrainResult {
  /// Mean of the last N_r values of phi.
  double value = 0.0;
  /// Rows every trace_stride iterations, plus the final one.
  std::vector<TraceRow> trace;
  std::vector<double> phi;
  std::vector<double> running_return;
  Networks networks;
  double wall_clock_seconds = 0.0;
};

/// Raised when phi or a gradient stops being finite.
struct TrainingAborted : std::runtime_error {
  TrainingAborted(const std::string& what, std::size_t iteration, ObjectiveBreakdown breakdown)
      : std::runtime_error(what), iteration(iteration), breakdown(std::move(breakdown)) {}
  std::size_t iteration;
  ObjectiveBreakdown breakdown;
};

/// Gradient descent-ascent with Adam on both players.
///
/// Each iteration runs N_inf discriminator steps (skipped during warm-up)
/// and then one generator step. Every step draws fresh latents, routes and
/// mu batches from the seeded sub-streams.
class Trainer {
 public:
  Trainer(const ProblemInstance& problem, Networks networks, TrainConfig cfg);

  /// One Adam step of the live discriminators on fresh batches.
  ObjectiveBreakdown discriminator_step();
  /// One generator step, unrolled when cfg.unroll > 0. Returns phi of the
  /// generator's batch against the live discriminators, before the update.
  ObjectiveBreakdown generator_step();
  /// A full supremum iteration; returns its trace row.
  TraceRow iterate();
  TrainResult run(const std::function<void(const TraceRow&)>& on_row = {});

  std::size_t iteration() const noexcept { return t_; }
  const Networks& networks() const noexcept { return nets_; }
  Networks& networks() noexcept { return nets_; }
  const AdamState& discriminator_adam() const noexcept { return disc_state_; }
  const AdamState& generator_adam() const noexcept { return gen_state_; }
  const std::vector<double>& phi_history() const noexcept { return phi_; }
  const std::vector<double>& running_return() const noexcept { return running_; }
  /// Draws consumed by each sub-stream so far: latent, routing, then one per term.
  std::vector<std::uint64_t> stream_draws() const;

 private:
  struct Batch {
    Array latents;
    std::vector<std::size_t> routes;
    std::vector<std::optional<Array>> mu;
  };
  Batch draw_batch();
  ObjectiveBreakdown discriminator_step_on(DiscriminatorSet& disc, AdamState& state);

  const ProblemInstance& problem_;
  Networks nets_;
  TrainConfig cfg_;
  AdamState gen_state_, disc_state_;
  Stream latent_rng_, routing_rng_;
  std::vector<Stream> mu_rng_;
  std::size_t t_ = 0;
  std::vector<double> phi_, running_;
  std::optional<ObjectiveBreakdown> last_disc_;
};

TrainResult train(const ProblemInstance& problem, Networks networks, const TrainConfig& cfg,
                  const std::function<void(const TraceRow&)>& on_row = {});

/// Mean of the last min(t, window) entries of values[0..t).
double trailing_mean(const std::vector<double>& values, std::size_t t, std::size_t window);

/// Population standard deviation of the last `window` values (all of them
/// when fewer are available).
double stability_metric(const std::vector<double>& values, std::size_t window);

}  // namespace minmax
