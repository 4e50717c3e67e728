#pragma once

#include <cstdint>
#include <optional>
#include <random>

namespace minmax {

/// SplitMix64 finalizer, used to derive independent sub-stream seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream_id);

/// Seeded random stream with a draw counter.
///
/// Normals come from Box-Muller on the stream's own uniforms, so every
/// sample is reproducible across standard libraries.
class Stream {
 public:
  Stream() : Stream(0) {}
  explicit Stream(std::uint64_t seed) : engine_(seed), seed_(seed) {}
  Stream(std::uint64_t seed, std::uint64_t stream_id)
      : Stream(mix_seed(seed, stream_id)) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on (0, 1), safe for logarithms.
  double uniform_open();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t uniform_index(std::size_t n);
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  /// Student-t via Z / sqrt(chi2(df) / df) with chi2 built from df squared normals.
  double student_t(unsigned df);

  /// Number of 64-bit words consumed so far.
  std::uint64_t draws() const noexcept { return draws_; }
  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t next() {
    ++draws_;
    return engine_();
  }

  std::mt19937_64 engine_;
  std::uint64_t seed_ = 0;
  std::uint64_t draws_ = 0;
  std::optional<double> spare_normal_;
};

}  // namespace minmax
