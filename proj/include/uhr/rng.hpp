#pragma once

#include <cstdint>

#include "uhr/errors.hpp"

namespace uhr::rng {

// Philox 4x32 with 10 rounds. Counter-based: the draw sequence is a pure
// function of (key, counter), so any stream can be regenerated independently
// of every other stream.
//
// Stream layout: key = user seed split into two 32-bit words; counter words
// c3:c2 hold the stream id built as (replication << 32) | batch, and c1:c0
// hold the running block index within the stream. Replication and batch must
// each fit in 32 bits. Draws within one stream are sequential; streams with
// distinct (seed, replication, batch) never share a counter/key pair.
class Philox4x32 {
 public:
  Philox4x32(std::uint64_t seed, std::uint64_t replication, std::uint64_t batch);

  // Raw key/counter access, used to check the generator against the
  // published test vectors for this algorithm.
  static Philox4x32 raw(std::uint32_t k0, std::uint32_t k1, std::uint32_t c0,
                        std::uint32_t c1, std::uint32_t c2, std::uint32_t c3);

  std::uint64_t next_u64();

  // Uniform on [0, 1), 53-bit mantissa.
  double uniform01();
  // Uniform on the open interval (0, 1); safe to feed into log().
  double uniform_open();
  // Uniform integer on [0, n), unbiased via rejection.
  std::uint64_t next_below(std::uint64_t n);

  // Standard normal via Box-Muller; generated in pairs, one cached.
  double gaussian();
  // Student t with integer degrees of freedom: z / sqrt(chi2(df) / df).
  double student_t(int df);
  // Standard Cauchy.
  double cauchy();

 private:
  Philox4x32() = default;
  void refill();

  std::uint32_t key_[2] = {0, 0};
  std::uint32_t ctr_[4] = {0, 0, 0, 0};
  std::uint32_t out_[4] = {0, 0, 0, 0};
  int avail_ = 0;
  double spare_ = 0;
  bool has_spare_ = false;
};

}  // namespace uhr::rng
