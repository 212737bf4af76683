#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>

#include "ssm/numeric/matrix.hpp"

namespace ssm {

// Child seed for stream `stream` of `seed` (splitmix64 finalizer over the
// combined words). Used to hand independent streams to parallel workers and
// to separate model-init, data and shuffle randomness within one run.
std::uint64_t split_seed(std::uint64_t seed, std::uint64_t stream);

/// Deterministic random source.
///
/// Built on std::mt19937_64, whose output sequence is fixed by the standard.
/// The distributions are implemented here rather than taken from <random>
/// because the standard library distributions are implementation-defined,
/// and identical seeds must give identical draws on every platform.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  // Uniform integer on [0, n). n must be positive.
  std::uint64_t uniform_int(std::uint64_t n);
  // Uniform integer on [lo, hi].
  std::int64_t uniform_range(std::int64_t lo, std::int64_t hi);
  // Standard normal via Box-Muller.
  double gaussian();

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = uniform_int(i);
      std::swap(items[i - 1], items[j]);
    }
  }

  SeededRng child(std::uint64_t stream) const { return SeededRng(split_seed(seed_, stream)); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

// i.i.d. N(mean, std^2) entries. std == 0 yields a constant matrix.
Matrix seeded_gaussian(SeededRng& rng, std::size_t rows, std::size_t cols, double mean, double std);

}  // namespace ssm
