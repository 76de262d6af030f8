#pragma once

#include <array>
#include <cstdint>

namespace repton {

// Philox4x64-10 counter-based generator. The key is (seed, stream): every
// trajectory / chain gets its own stream index, so ensembles produce the
// same numbers no matter how the work is scheduled across threads.
// Output order matches numpy.random.Philox raw output (KAT in unit_rng).
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_{seed, stream} {}

  std::uint64_t next_u64();
  double uniform();  // open interval (0,1), 53-bit mantissa
  double normal();   // standard Gaussian (Box-Muller)

  std::uint64_t seed() const { return key_[0]; }
  std::uint64_t stream() const { return key_[1]; }

 private:
  void refill();

  std::array<std::uint64_t, 2> key_;
  std::array<std::uint64_t, 4> ctr_{0, 0, 0, 0};
  std::array<std::uint64_t, 4> buf_{};
  int pos_ = 4;  // empty buffer, refill on first draw
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace repton
