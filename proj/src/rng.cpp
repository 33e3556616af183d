#include "oscfield/rng.hpp"

#include <cmath>
#include <numbers>

namespace oscfield {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

// 53-bit uniform in (0,1): never returns 0, so log() below is safe.
inline double uniform53(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 32) | lo;
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1p-53;
}

}  // namespace

std::array<std::uint32_t, 4> Philox4x32::block(std::array<std::uint32_t, 4> ctr) const {
  std::uint32_t k0 = key[0], k1 = key[1];
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kPhiloxM0, ctr[0], hi0, lo0);
    mulhilo(kPhiloxM1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0};
    k0 += kWeyl0;
    k1 += kWeyl1;
  }
  return ctr;
}

NormalStream::NormalStream(std::uint64_t seed, std::uint32_t level, std::uint64_t sample_index) {
  gen_.key = {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  ctr_base_ = {0, level, static_cast<std::uint32_t>(sample_index),
               static_cast<std::uint32_t>(sample_index >> 32)};
}

double NormalStream::next() {
  if (has_pending_) {
    has_pending_ = false;
    return pending_;
  }
  auto ctr = ctr_base_;
  ctr[0] = block_++;
  const auto r = gen_.block(ctr);
  const double u1 = uniform53(r[0], r[1]);
  const double u2 = uniform53(r[2], r[3]);
  const double mag = std::sqrt(-2.0 * std::log(u1));
  const double ang = 2.0 * std::numbers::pi * u2;
  pending_ = mag * std::sin(ang);
  has_pending_ = true;
  return mag * std::cos(ang);
}

void NormalStream::fill(std::span<double> out) {
  for (double& v : out) v = next();
}

}  // namespace oscfield
