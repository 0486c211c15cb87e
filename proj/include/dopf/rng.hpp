#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>

namespace dopf {

// One block of Philox-4x64 with 10 rounds (Salmon et al., "Parallel random
// numbers: as easy as 1, 2, 3").  256-bit counter + 128-bit key -> 256 bits
// of output.  Pure function: the same (counter, key) always gives the same
// block, which is what makes every draw in a simulation addressable.
std::array<std::uint64_t, 4> philox4x64(std::array<std::uint64_t, 4> counter,
                                        std::array<std::uint64_t, 2> key);

// splitmix64: advance `state` by the Weyl constant and return the next
// output.  Used for seed derivation, not for the simulation streams.
std::uint64_t splitmix64(std::uint64_t& state);

// Collapse an ordered list of integers (base seed, grid-point id, run
// index, ...) into a single 64-bit seed.  Order-sensitive, avalanching.
std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts);

// A stateless random stream.  Draws are addressed by (iteration, element,
// slot) rather than produced sequentially, so concurrent consumers can
// never reorder them: the value of a draw depends only on its address and
// the stream key.  One Philox block serves four consecutive slots.
class CounterRng {
public:
  CounterRng() = default;
  CounterRng(std::uint64_t seed, std::uint64_t stream) : key_{seed, stream} {}

  std::uint64_t raw(std::uint64_t iteration, std::uint64_t element,
                    std::uint32_t slot) const;

  // Uniform on (0, 1]: 53 random bits, never exactly zero (safe under log).
  double uniform(std::uint64_t iteration, std::uint64_t element,
                 std::uint32_t slot) const;

  // Standard normal via Box-Muller; consumes uniform slots 2*slot and
  // 2*slot + 1 of the same (iteration, element) cell.
  double normal(std::uint64_t iteration, std::uint64_t element,
                std::uint32_t slot) const;

  std::uint64_t seed() const { return key_[0]; }
  std::uint64_t stream() const { return key_[1]; }

private:
  std::array<std::uint64_t, 2> key_{0, 0};
};

}  // namespace dopf
