#include "dopf/rng.hpp"

#include <cmath>

namespace dopf {

namespace {

constexpr std::uint64_t kPhiloxM0 = 0xD2E7470EE14C6C93ull;
constexpr std::uint64_t kPhiloxM1 = 0xCA5A826395121157ull;
constexpr std::uint64_t kPhiloxW0 = 0x9E3779B97F4A7C15ull;  // golden ratio
constexpr std::uint64_t kPhiloxW1 = 0xBB67AE8584CAA73Bull;  // sqrt(3) - 1

inline std::uint64_t mulhilo(std::uint64_t a, std::uint64_t b,
                             std::uint64_t& hi) {
  const unsigned __int128 prod =
      static_cast<unsigned __int128>(a) * static_cast<unsigned __int128>(b);
  hi = static_cast<std::uint64_t>(prod >> 64);
  return static_cast<std::uint64_t>(prod);
}

}  // namespace

std::array<std::uint64_t, 4> philox4x64(std::array<std::uint64_t, 4> ctr,
                                        std::array<std::uint64_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    std::uint64_t hi0, hi1;
    const std::uint64_t lo0 = mulhilo(kPhiloxM0, ctr[0], hi0);
    const std::uint64_t lo1 = mulhilo(kPhiloxM1, ctr[2], hi1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kPhiloxW0;
    key[1] += kPhiloxW1;
  }
  return ctr;
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
  // Fold each part into a running splitmix64 state and feed the output
  // back, so both the values and their order matter.
  std::uint64_t state = 0x6A09E667F3BCC909ull;
  std::uint64_t out = splitmix64(state);
  for (const std::uint64_t part : parts) {
    state ^= part;
    out = splitmix64(state);
    state ^= out;
  }
  return out;
}

std::uint64_t CounterRng::raw(std::uint64_t iteration, std::uint64_t element,
                              std::uint32_t slot) const {
  const auto block = philox4x64({iteration, element, slot >> 2, 0}, key_);
  return block[slot & 3];
}

double CounterRng::uniform(std::uint64_t iteration, std::uint64_t element,
                           std::uint32_t slot) const {
  // Top 53 bits, shifted into (0, 1]: (w >> 11) + 1 lies in [1, 2^53].
  return static_cast<double>((raw(iteration, element, slot) >> 11) + 1) *
         0x1p-53;
}

double CounterRng::normal(std::uint64_t iteration, std::uint64_t element,
                          std::uint32_t slot) const {
  const double u1 = uniform(iteration, element, 2 * slot);
  const double u2 = uniform(iteration, element, 2 * slot + 1);
  // u1 > 0 by construction, so the log is finite.
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * 3.14159265358979323846 * u2);
}

}  // namespace dopf
