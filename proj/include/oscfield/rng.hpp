#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace oscfield {

/**
 * Counter-based Philox4x32-10 block generator (Salmon et al., SC'11).
 *
 * Stateless apart from the (key, counter) pair, so any block of the stream
 * can be generated independently; this is what makes per-sample random
 * streams reproducible across worker counts and platforms.
 */
struct Philox4x32 {
  std::array<std::uint32_t, 2> key;

  std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr) const;
};

/**
 * Deterministic standard-normal stream, one per (seed, level, sample_index).
 *
 * Uniforms come from Philox4x32-10 keyed by the 64-bit seed with the
 * (level, sample_index) pair in the counter, so streams never overlap.
 * Normals use the Box-Muller transform on 53-bit uniforms; consumption is
 * fixed at one Philox block per two normals.
 */
class NormalStream {
 public:
  NormalStream(std::uint64_t seed, std::uint32_t level, std::uint64_t sample_index);

  double next();
  void fill(std::span<double> out);

 private:
  Philox4x32 gen_;
  std::array<std::uint32_t, 4> ctr_base_;
  std::uint32_t block_ = 0;
  double pending_ = 0.0;
  bool has_pending_ = false;
};

}  // namespace oscfield
