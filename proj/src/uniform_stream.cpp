#include "infchain/uniform_stream.hpp"

namespace infchain {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi,
                    std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kPhiloxM0, ctr[0], hi0, lo0);
    mulhilo(kPhiloxM1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kPhiloxW0;
    key[1] += kPhiloxW1;
  }
  return ctr;
}

double uniform_at(const StreamKey& k) {
  // The key absorbs (seed, replication); the counter carries (time, past).
  const std::uint64_t key64 = splitmix64(k.seed ^ splitmix64(k.replication));
  const auto time = static_cast<std::uint64_t>(k.time);
  const std::uint64_t past = k.past_id ? static_cast<std::uint64_t>(*k.past_id) + 1 : 0;
  const auto out = philox4x32(
      {static_cast<std::uint32_t>(time), static_cast<std::uint32_t>(time >> 32),
       static_cast<std::uint32_t>(past), static_cast<std::uint32_t>(past >> 32)},
      {static_cast<std::uint32_t>(key64), static_cast<std::uint32_t>(key64 >> 32)});
  const std::uint64_t bits =
      (static_cast<std::uint64_t>(out[0]) << 32 | out[1]) >> 11;
  return static_cast<double>(bits) * 0x1.0p-53;
}

}  // namespace infchain
