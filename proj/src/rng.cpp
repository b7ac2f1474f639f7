#include "uhr/rng.hpp"

#include <cmath>

namespace uhr::rng {

namespace {

constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
constexpr std::uint32_t kMult0 = 0xD2511F53u;
constexpr std::uint32_t kMult1 = 0xCD9E8D57u;

inline std::uint32_t mul_hi(std::uint32_t a, std::uint32_t b) {
  return static_cast<std::uint32_t>(
      (static_cast<std::uint64_t>(a) * b) >> 32);
}

inline void philox_round(std::uint32_t ctr[4], const std::uint32_t key[2]) {
  const std::uint32_t hi0 = mul_hi(kMult0, ctr[0]);
  const std::uint32_t lo0 = kMult0 * ctr[0];
  const std::uint32_t hi1 = mul_hi(kMult1, ctr[2]);
  const std::uint32_t lo1 = kMult1 * ctr[2];
  const std::uint32_t next[4] = {hi1 ^ ctr[1] ^ key[0], lo1,
                                 hi0 ^ ctr[3] ^ key[1], lo0};
  ctr[0] = next[0];
  ctr[1] = next[1];
  ctr[2] = next[2];
  ctr[3] = next[3];
}

}  // namespace

Philox4x32::Philox4x32(std::uint64_t seed, std::uint64_t replication,
                       std::uint64_t batch) {
  if (replication >> 32)
    throw InvalidInput("Philox4x32: replication must fit in 32 bits");
  if (batch >> 32) throw InvalidInput("Philox4x32: batch must fit in 32 bits");
  key_[0] = static_cast<std::uint32_t>(seed);
  key_[1] = static_cast<std::uint32_t>(seed >> 32);
  ctr_[0] = 0;
  ctr_[1] = 0;
  ctr_[2] = static_cast<std::uint32_t>(batch);
  ctr_[3] = static_cast<std::uint32_t>(replication);
}

Philox4x32 Philox4x32::raw(std::uint32_t k0, std::uint32_t k1,
                           std::uint32_t c0, std::uint32_t c1,
                           std::uint32_t c2, std::uint32_t c3) {
  Philox4x32 g;
  g.key_[0] = k0;
  g.key_[1] = k1;
  g.ctr_[0] = c0;
  g.ctr_[1] = c1;
  g.ctr_[2] = c2;
  g.ctr_[3] = c3;
  return g;
}

void Philox4x32::refill() {
  std::uint32_t block[4] = {ctr_[0], ctr_[1], ctr_[2], ctr_[3]};
  std::uint32_t key[2] = {key_[0], key_[1]};
  for (int round = 0; round < 10; ++round) {
    philox_round(block, key);
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  out_[0] = block[0];
  out_[1] = block[1];
  out_[2] = block[2];
  out_[3] = block[3];
  avail_ = 4;
  // 64-bit block index in c1:c0; c2/c3 stay fixed as the stream id.
  if (++ctr_[0] == 0) ++ctr_[1];
}

std::uint64_t Philox4x32::next_u64() {
  if (avail_ < 2) refill();
  const std::uint32_t lo = out_[4 - avail_];
  const std::uint32_t hi = out_[5 - avail_];
  avail_ -= 2;
  return static_cast<std::uint64_t>(hi) << 32 | lo;
}

double Philox4x32::uniform01() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Philox4x32::uniform_open() {
  return (static_cast<double>(next_u64() >> 12) + 0.5) * 0x1.0p-52;
}

std::uint64_t Philox4x32::next_below(std::uint64_t n) {
  if (n == 0) throw InvalidInput("next_below: n must be positive");
  const std::uint64_t limit = ~std::uint64_t{0} - ~std::uint64_t{0} % n;
  for (;;) {
    const std::uint64_t x = next_u64();
    if (x < limit) return x % n;
  }
}

double Philox4x32::gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform_open();
  const double u2 = uniform01();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * M_PI * u2;
  spare_ = r * std::sin(a);
  has_spare_ = true;
  return r * std::cos(a);
}

double Philox4x32::student_t(int df) {
  if (df < 1) throw InvalidInput("student_t: df must be positive");
  const double z = gaussian();
  double chi2 = 0;
  for (int i = 0; i < df; ++i) {
    const double g = gaussian();
    chi2 += g * g;
  }
  return z / std::sqrt(chi2 / df);
}

double Philox4x32::cauchy() {
  return std::tan(M_PI * (uniform_open() - 0.5));
}

}  // namespace uhr::rng
