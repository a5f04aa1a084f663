#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace lingscrub {

/// Child seed for stream `stream` of `root`. Every random draw in the
/// pipeline goes through a seed derived this way from the top-level seed.
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream);
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on 0..n-1 by rejection, so the sequence does not depend on the
  /// standard library's distribution implementation.
  std::uint64_t index(std::uint64_t n);
  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace lingscrub
