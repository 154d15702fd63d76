#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace dspace {

// Seeded generator with platform-independent real conversions
// (std::uniform_real_distribution is implementation defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(engine_() % span);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller, one value per call.
  double normal();

  // Independent generator derived from the construction seed.
  Rng split(std::uint64_t stream) const;

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

// Radical-inverse Halton sequence, first `dims` primes as bases.
class Halton {
 public:
  explicit Halton(int dims, std::uint64_t skip = 1);

  // Next point in [0,1)^dims.
  const std::vector<double>& next();

 private:
  std::vector<int> bases_;
  std::vector<double> point_;
  std::uint64_t index_;
};

}  // namespace dspace
