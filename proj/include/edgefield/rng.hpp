#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace edgefield::rng {

// Every random stream in the library is a std::mt19937_64 seeded from
// (seed, domain, index) through splitmix64, so stream j of a run does not
// depend on how many values other streams consumed.
using Engine = std::mt19937_64;

enum class Domain : std::uint64_t {
  field_draw = 1,
  chain = 2,
  counts = 3,
  irregular_graph = 4,
  init = 5,
};

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline Engine substream(std::uint64_t seed, Domain domain, std::uint64_t index) {
  const std::uint64_t key =
      splitmix64(splitmix64(seed) ^ splitmix64(static_cast<std::uint64_t>(domain) * 0x100000001B3ull + index));
  return Engine(key);
}

inline Eigen::VectorXd standard_normal(Engine& engine, Eigen::Index size) {
  std::normal_distribution<double> normal;
  Eigen::VectorXd z(size);
  for (Eigen::Index i = 0; i < size; ++i) z(i) = normal(engine);
  return z;
}

}  // namespace edgefield::rng
