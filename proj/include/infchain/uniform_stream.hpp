#pragma once

#include <array>
#include <cstdint>
#include <optional>

namespace infchain {

/// Address of one uniform variable: U_time for a replication, or
/// U_time^{a} when past_id names a window a of the coalescence past set.
struct StreamKey {
  std::uint64_t seed = 0;
  std::uint64_t replication = 0;
  std::int64_t time = 0;
  std::optional<std::uint32_t> past_id;
};

/// Philox4x32-10 block for a 128-bit counter under a 64-bit key.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// Uniform in [0,1) with 53 random bits; a pure function of the key.
double uniform_at(const StreamKey& key);

/// The uniforms of one replication. Values at different times are computed
/// independently, so extending the past never perturbs consumed values.
///
/// `rekey_before` swaps in a different seed for every time strictly below
/// the threshold; the locality checks use it to scramble the far past.
class UniformStream {
 public:
  UniformStream(std::uint64_t seed, std::uint64_t replication)
      : seed_(seed), replication_(replication) {}

  UniformStream rekeyed_before(std::int64_t time, std::uint64_t other_seed) const {
    UniformStream s = *this;
    s.rekey_before_ = time;
    s.other_seed_ = other_seed;
    return s;
  }

  /// Only the uniforms in [lo, hi] keep the base seed.
  UniformStream rekeyed_outside(std::int64_t lo, std::int64_t hi,
                                std::uint64_t other_seed) const {
    UniformStream s = *this;
    s.keep_lo_ = lo;
    s.keep_hi_ = hi;
    s.other_seed_ = other_seed;
    return s;
  }

  double at(std::int64_t time, std::optional<std::uint32_t> past_id = std::nullopt) const {
    return uniform_at({seed_for(time), replication_, time, past_id});
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t replication() const { return replication_; }

 private:
  std::uint64_t seed_for(std::int64_t time) const {
    if (rekey_before_ && time < *rekey_before_) return other_seed_;
    if (keep_lo_ && (time < *keep_lo_ || time > *keep_hi_)) return other_seed_;
    return seed_;
  }

  std::uint64_t seed_;
  std::uint64_t replication_;
  std::optional<std::int64_t> rekey_before_;
  std::optional<std::int64_t> keep_lo_;
  std::optional<std::int64_t> keep_hi_;
  std::uint64_t other_seed_ = 0;
};

}  // namespace infchain
