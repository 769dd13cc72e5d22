#pragma once

// Philox4x32-10 counter-based generator (Salmon et al., "Parallel random
// numbers: as easy as 1, 2, 3"). The 64-bit seed is the key; the upper half
// of the 128-bit counter selects an independent substream, the lower half
// counts blocks. Output is a pure function of (seed, stream, position), so
// draws are identical across platforms and independent of thread scheduling.
//
// Continuous variates are built only from +, *, log, sqrt, cos and sin on
// doubles, without std:: distributions, whose algorithms are
// implementation-defined.

#include <array>
#include <cstdint>

namespace cqfm {

class Philox {
 public:
  using result_type = std::uint64_t;

  explicit Philox(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  // A generator for substream `id`, independent of this one.
  Philox substream(std::uint64_t id) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  std::uint32_t next_u32();
  result_type operator()();

  // Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  // Gamma(shape, 1) via Marsaglia-Tsang; shape > 0.
  double gamma(double shape);
  double chi_squared(double df) { return 2.0 * gamma(0.5 * df); }
  double exponential();

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int used_ = 4;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

// One Philox4x32-10 block, exposed for known-answer tests.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key);

}  // namespace cqfm
