#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace mobpart {

// Philox4x32-10 counter-based generator (Salmon et al., Random123). A block
// of four 32-bit words is a pure function of (key, counter), so any
// replicate can be regenerated independently of execution order.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

// Sequential view over a Philox stream identified by (seed, stream, replicate).
class PhiloxStream {
 public:
  PhiloxStream(std::uint64_t seed, std::uint32_t stream, std::uint32_t replicate);

  std::uint32_t next_u32();
  // Uniform integer in [0, bound) without modulo bias. bound > 0.
  std::uint32_t below(std::uint32_t bound);
  // Uniform double in (0, 1).
  double uniform();

 private:
  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> ctr_;
  std::array<std::uint32_t, 4> buf_{};
  int used_ = 4;
};

// In-place Fisher-Yates shuffle.
void shuffle(std::span<std::size_t> v, PhiloxStream& rng);

}  // namespace mobpart
