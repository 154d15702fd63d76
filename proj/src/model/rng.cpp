#include "dspace/rng.hpp"

#include <cmath>
#include <numbers>

namespace dspace {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Rng Rng::split(std::uint64_t stream) const {
  return Rng(splitmix64(seed_ ^ splitmix64(stream + 0x632be59bd9b4e019ULL)));
}

Halton::Halton(int dims, std::uint64_t skip) : point_(dims, 0.0), index_(skip) {
  int candidate = 2;
  while (static_cast<int>(bases_.size()) < dims) {
    bool prime = true;
    for (int b : bases_) {
      if (b * b > candidate) break;
      if (candidate % b == 0) {
        prime = false;
        break;
      }
    }
    if (prime) bases_.push_back(candidate);
    ++candidate;
  }
}

const std::vector<double>& Halton::next() {
  for (std::size_t d = 0; d < bases_.size(); ++d) {
    const auto base = static_cast<std::uint64_t>(bases_[d]);
    double f = 1.0;
    double r = 0.0;
    std::uint64_t i = index_;
    while (i > 0) {
      f /= static_cast<double>(base);
      r += f * static_cast<double>(i % base);
      i /= base;
    }
    point_[d] = r;
  }
  ++index_;
  return point_;
}

}  // namespace dspace
