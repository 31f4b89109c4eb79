#include <doctest.h>

#include <cmath>
#include <vector>

#include "infchain/uniform_stream.hpp"

using namespace infchain;

namespace {

// Lag-one autocorrelation of a sequence.
double lag1(const std::vector<double>& x) {
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    den += (x[i] - mean) * (x[i] - mean);
    if (i + 1 < x.size()) num += (x[i] - mean) * (x[i + 1] - mean);
  }
  return num / den;
}

}  // namespace

// Known-answer vectors published with the Random123 library.
TEST_CASE("philox4x32-10 known answers") {
  using A4 = std::array<std::uint32_t, 4>;
  CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) == A4{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        A4{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        A4{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("uniform_at is a pure function of the key") {
  StreamKey key{42, 7, -13, std::nullopt};
  const double a = uniform_at(key);
  CHECK(uniform_at(key) == a);
  key.past_id = 3;
  CHECK(uniform_at(key) == uniform_at(StreamKey{42, 7, -13, 3}));
  CHECK(uniform_at(key) != a);
  CHECK(uniform_at({42, 8, -13, std::nullopt}) != a);
  CHECK(uniform_at({43, 7, -13, std::nullopt}) != a);
}

TEST_CASE("values lie in [0,1) with sane moments") {
  UniformStream s(1, 0);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int t = 0; t < n; ++t) {
    const double u = s.at(-t);
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
    sq += u * u;
  }
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
  CHECK(sq / n - (sum / n) * (sum / n) == doctest::Approx(1.0 / 12).epsilon(0.01));
}

TEST_CASE("serial correlation across time and past ids") {
  const int n = 1'000'000;
  std::vector<double> by_time(n), by_past(n);
  UniformStream s(2024, 5);
  for (int i = 0; i < n; ++i) {
    by_time[i] = s.at(-i);
    by_past[i] = s.at(-17, static_cast<std::uint32_t>(i));
  }
  CHECK(std::abs(lag1(by_time)) < 0.01);
  CHECK(std::abs(lag1(by_past)) < 0.01);
}

TEST_CASE("rekeying touches only the named times") {
  UniformStream s(9, 1);
  auto before = s.rekeyed_before(-10, 77);
  for (std::int64_t t = -30; t <= 0; ++t) {
    if (t < -10)
      CHECK(before.at(t) != s.at(t));
    else
      CHECK(before.at(t) == s.at(t));
  }
  CHECK(before.at(-20) == UniformStream(77, 1).at(-20));
  auto inside = s.rekeyed_outside(-5, -2, 77);
  for (std::int64_t t = -8; t <= 0; ++t) {
    if (t >= -5 && t <= -2)
      CHECK(inside.at(t, 4u) == s.at(t, 4u));
    else
      CHECK(inside.at(t, 4u) != s.at(t, 4u));
  }
  CHECK(s.seed() == 9);
  CHECK(s.replication() == 1);
}
