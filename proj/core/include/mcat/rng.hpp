#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace mcat {

/// Mixes a list of integers into one 64-bit seed (splitmix64 finaliser chain).
/// Used to derive independent per-sample / per-class streams from a run seed so
/// results do not depend on evaluation order.
std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts) noexcept;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  std::uint64_t next() { return engine_(); }
  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace mcat
