#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "minmax/autodiff.hpp"
#include "minmax/rng.hpp"

namespace minmax {

enum class Activation { relu, tanh };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

/// Plain feed-forward stack: `depth` affine layers, activation on hidden
/// layers only, final layer affine.
struct MLPConfig {
  std::size_t input_dim = 1;
  std::size_t output_dim = 1;
  std::size_t depth = 4;
  std::size_t hidden_dim = 64;
  Activation activation = Activation::relu;

  void validate() const;
  friend bool operator==(const MLPConfig&, const MLPConfig&) = default;
};

class MLP {
 public:
  /// Tape nodes produced by one forward pass.
  struct Trace {
    ad::Var output;
    std::vector<ad::Var> weights;
    /// Hidden activations a_l (after the nonlinearity), one per hidden layer.
    std::vector<ad::Var> hidden;
    /// Pre-activations z_l of the hidden layers.
    std::vector<ad::Var> pre_activations;
  };

  MLP() = default;
  /// Takes ownership of weights/biases in layer order; shapes are checked.
  MLP(MLPConfig cfg, std::vector<Array> weights, std::vector<Array> biases);

  const MLPConfig& config() const noexcept { return cfg_; }
  std::size_t layers() const noexcept { return params_.size() / 2; }
  Parameter& weight(std::size_t layer) { return params_.at(2 * layer); }
  Parameter& bias(std::size_t layer) { return params_.at(2 * layer + 1); }
  const Parameter& weight(std::size_t layer) const { return params_.at(2 * layer); }
  const Parameter& bias(std::size_t layer) const { return params_.at(2 * layer + 1); }

  /// Parameters in the order w0, b0, w1, b1, ...
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

  /// Forward on a tape. With `trainable == false` the weights enter as
  /// constants and no gradient flows into them.
  Trace trace(ad::Tape& tape, ad::Var x, bool trainable = true);
  ad::Var forward(ad::Tape& tape, ad::Var x, bool trainable = true) {
    return trace(tape, x, trainable).output;
  }

  /// Differentiable graph of the input gradient (n x input_dim) for a
  /// scalar-output network, built by the layerwise chain rule on top of an
  /// existing forward trace.
  ad::Var input_gradient(ad::Tape& tape, const Trace& forward_trace);
  ad::Var input_gradient(ad::Tape& tape, ad::Var x, bool trainable = true) {
    return input_gradient(tape, trace(tape, x, trainable));
  }

  /// Tape-free forward pass on a batch (n x input_dim).
  Array evaluate(const Array& x) const;

  friend bool operator==(const MLP&, const MLP&);

 private:
  MLPConfig cfg_{};
  std::vector<Parameter> params_;
};

/// Glorot-normal weights, N(0, 2 / (fan_in + fan_out)); zero biases.
MLP init_mlp(const MLPConfig& cfg, Stream& rng);

/// Per-coordinate interval [lo_i, hi_i].
struct Box {
  std::vector<double> lo;
  std::vector<double> hi;

  std::size_t dim() const noexcept { return lo.size(); }
  void validate() const;
  friend bool operator==(const Box&, const Box&) = default;
};

/// The generator T: one or more tanh MLPs R^K -> R^d. Each latent sample is
/// routed uniformly at random to one member; outputs are clamped into the
/// support box when one is set.
class GeneratorEnsemble {
 public:
  GeneratorEnsemble() = default;
  GeneratorEnsemble(std::vector<MLP> members, std::optional<Box> support_box = std::nullopt);

  std::size_t latent_dim() const { return members_.front().config().input_dim; }
  std::size_t output_dim() const { return members_.front().config().output_dim; }
  std::size_t size() const noexcept { return members_.size(); }
  std::vector<MLP>& members() noexcept { return members_; }
  const std::vector<MLP>& members() const noexcept { return members_; }
  const std::optional<Box>& support_box() const noexcept { return box_; }

  std::vector<Parameter*> parameters();

  /// Member index per sample. A single-member ensemble draws nothing.
  std::vector<std::size_t> route(std::size_t n, Stream& rng) const;

  /// Generated batch on a tape. Rows are grouped by member in member order,
  /// so row order differs from `latents` when there are several members.
  ad::Var generate(ad::Tape& tape, const Array& latents,
                   const std::vector<std::size_t>& routes, bool trainable = true);
  ad::Var generate(ad::Tape& tape, const Array& latents, Stream& rng, bool trainable = true) {
    return generate(tape, latents, route(latents.rows(), rng), trainable);
  }

  /// Tape-free sampling with the same row grouping as `generate`.
  Array sample(const Array& latents, const std::vector<std::size_t>& routes) const;
  Array sample(const Array& latents, Stream& rng) const {
    return sample(latents, route(latents.rows(), rng));
  }

  friend bool operator==(const GeneratorEnsemble&, const GeneratorEnsemble&) = default;

 private:
  std::vector<MLP> members_;
  std::optional<Box> box_;
};

GeneratorEnsemble make_generator(std::size_t latent_dim, std::size_t output_dim,
                                 std::size_t hidden_dim, std::size_t depth,
                                 std::size_t members, std::optional<Box> box, Stream& rng);

/// One ReLU network h_j per constraint term.
struct DiscriminatorSet {
  std::vector<MLP> nets;

  std::vector<Parameter*> parameters();
  /// h_j evaluated on z (n x d_j), returned as an n x 1 array.
  Array eval_h(std::size_t j, const Array& z) const;

  friend bool operator==(const DiscriminatorSet&, const DiscriminatorSet&) = default;
};

DiscriminatorSet make_discriminators(const std::vector<std::size_t>& input_dims,
                                     std::size_t hidden_dim, std::size_t depth, Stream& rng);

// Checkpoints: JSON with a versioned header and named arrays.
inline constexpr const char* kCheckpointFormat = "minmax-measure/checkpoint";
inline constexpr int kCheckpointVersion = 1;

nlohmann::json mlp_to_json(const MLP& mlp);
MLP mlp_from_json(const nlohmann::json& j);

nlohmann::json checkpoint_to_json(const GeneratorEnsemble& generator,
                                  const DiscriminatorSet& discriminators);
void checkpoint_from_json(const nlohmann::json& j, GeneratorEnsemble& generator,
                          DiscriminatorSet& discriminators);
void save_checkpoint(const std::filesystem::path& path, const GeneratorEnsemble& generator,
                     const DiscriminatorSet& discriminators);
void load_checkpoint(const std::filesystem::path& path, GeneratorEnsemble& generator,
                     DiscriminatorSet& discriminators);

}  // namespace minmax
