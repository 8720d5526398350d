#ifndef BMVAE_RNG_HPP_
#define BMVAE_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

namespace bmvae
{

/*
 * Random streams.
 *
 * Every stream is a std::mt19937_64 engine (the 64-bit Mersenne Twister, whose output
 * sequence is fixed by the C++ standard). Stream seeds are derived from a root seed and
 * a stream index with SplitMix64, and all conversions to doubles / integers / normals
 * are done here rather than through the implementation-defined <random> distributions,
 * so a given (seed, index) produces the same numbers on every platform.
 */
using engine = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x)
{
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Seed of stream `index` under `seed`.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index)
{
  return splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632BE59BD9B4E019ull));
}

inline engine make_stream(std::uint64_t seed, std::uint64_t index)
{
  return engine(derive_seed(seed, index));
}

// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(engine& rng)
{
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(engine& rng, double lo, double hi)
{
  return lo + (hi - lo) * uniform01(rng);
}

// Uniform integer in [0, n), unbiased by rejection.
inline std::uint64_t uniform_index(engine& rng, std::uint64_t n)
{
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do
    x = rng();
  while (x >= limit);
  return x % n;
}

// Standard normal via Box-Muller (one draw per call, the sine branch is discarded).
inline double standard_normal(engine& rng)
{
  double u1 = uniform01(rng);
  while (u1 <= 0.0)
    u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

template<typename T>
void shuffle(engine& rng, std::vector<T>& values)
{
  for (std::size_t i = values.size(); i > 1; --i)
  {
    const auto j = static_cast<std::size_t>(uniform_index(rng, i));
    std::swap(values[i - 1], values[j]);
  }
}

} // namespace bmvae

#endif
