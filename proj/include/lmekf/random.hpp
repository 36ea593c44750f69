#pragma once

#include <cstdint>
#include <random>

namespace lmekf {

/// Seeded random stream with deterministic, counter-based splitting.
///
/// A child stream is keyed by an integer; its seed is
/// splitmix64(splitmix64(parent_seed) ^ splitmix64(key + golden_gamma)), so a
/// child depends only on the parent seed and the key, never on how many draws
/// the parent has already produced. Trials, filters, time steps, members and
/// localization windows all get their own substream this way, which keeps
/// results bit-stable regardless of execution order or thread count.
class RandomStream {
 public:
  using Engine = std::mt19937_64;

  explicit RandomStream(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }

  RandomStream split(std::uint64_t key) const;

  Engine& engine() { return engine_; }

  double normal();
  double uniform(double lo, double hi);
  /// Standard Student-t draw (unit scale, variance dof/(dof-2)).
  double student_t(double dof);

 private:
  std::uint64_t seed_;
  Engine engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::student_t_distribution<double> student_{6.0};
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace lmekf
