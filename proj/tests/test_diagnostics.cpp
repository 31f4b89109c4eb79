#include <doctest.h>

#include <cmath>

#include "infchain/cftp_spontaneous.hpp"
#include "infchain/diagnostics.hpp"
#include "infchain/gallery.hpp"

using namespace infchain;

namespace {

KernelPtr ar() { return make_kernel("autoregressive", {{"q", "0.5"}, {"delta", "0.3"}}); }

double product_one_minus_half_powers(int n) {
  double p = 1.0;
  for (int j = 1; j <= n; ++j) p *= 1.0 - std::ldexp(1.0, -j);
  return p;
}

}  // namespace

TEST_CASE("rho on the autoregressive kernel") {
  auto k = ar();
  CHECK(rho_exact(*k, 1).value == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(rho_exact(*k, 2).value == doctest::Approx(0.375).epsilon(1e-15));
  auto seq = rho_sequence(*k, 10);
  REQUIRE(seq.size() == 10);
  for (int n = 1; n <= 10; ++n) {
    CAPTURE(n);
    CHECK(std::abs(seq[n - 1].value - product_one_minus_half_powers(n)) <= 1e-12);
    CHECK(seq[n - 1].tail_bound == 0.0);
  }
}

TEST_CASE("rho is one for a memoryless kernel") {
  auto k = make_iid({0.3, 0.7});
  for (auto& v : rho_sequence(*k, 6)) CHECK(v.value == doctest::Approx(1.0));
}

TEST_CASE("rho of the truncated imitation kernel respects the ladder bound") {
  auto c = SpontaneousWeights::geometric(0.5, 0.5);
  auto k = make_imitation(c);
  auto r = rho_exact(*k, 3, Letter{20});
  CHECK(r.tail_bound > 0.0);
  const double c1 = c.weight(0), c2 = c.weight(1), c3 = c.weight(2), rest = 1.0 - c.total();
  CHECK(r.value >= c1 * (c1 + c2 + rest) * (c1 + c2 + c3 + rest));
}

TEST_CASE("enumeration budget") {
  auto k = make_kernel("imitation", {});
  EnumerationBudget tiny{100};
  CHECK_THROWS_AS(rho_exact(*k, 5, Letter{20}, tiny), ExplosionGuard);
  CHECK_THROWS_AS(exact_T0_tail(*k, 6, Letter{20}, tiny), ExplosionGuard);
  // The autoregressive kernel falls back to its closed form.
  auto t = exact_T0_tail(*ar(), 6, {}, tiny);
  CHECK(t.method != "enumeration");
  CHECK(t.value == doctest::Approx((*ar()->star_tail_closed_form(6))[6]));
}

TEST_CASE("rho tilde on the cyclic kernel follows the definition") {
  auto theta = MemoryWeights::geometric(0.5);
  auto k = make_cyclic4(theta);
  auto a = find_nhat(*k, 6).analysis;
  REQUIRE(a);
  auto seq = rho_tilde_sequence(*k, *a, 6);
  REQUIRE(seq.size() == 6);
  for (int n = 1; n <= 6; ++n) {
    CAPTURE(n);
    // Sum over the four closed-class states of prod_{j=2}^{n+1} (1 - s_j).
    CHECK(std::abs(seq[n - 1].value - closed_form::cyclic_rho_tilde_summed(theta, n, 4)) <=
          1e-12);
    if (n > 1) CHECK(seq[n - 1].value <= seq[n - 2].value);
  }
  CHECK(rho_tilde_exact(*k, *a, 1).value == doctest::Approx(3.0));
}

TEST_CASE("rho tilde by hand on a two-letter kernel") {
  // theta = (0.5, 0.25, 0.25), delta = 0.3: alpha(.|0) = (0.4, 0.35),
  // alpha(.|1) = (0.15, 0.6), both letters in the closed class.
  auto k = make_autoregressive(MemoryWeights::list({0.5, 0.25, 0.25}), 0.3);
  auto a = build_markov_analysis(*k, 1);
  REQUIRE(a.closed_class_states().size() == 2);
  CHECK(k->alpha(0, make_window({0})) == doctest::Approx(0.4));
  CHECK(k->alpha(1, make_window({0})) == doctest::Approx(0.35));
  CHECK(k->alpha(0, make_window({1})) == doctest::Approx(0.15));
  CHECK(k->alpha(1, make_window({1})) == doctest::Approx(0.6));
  CHECK(rho_tilde_exact(*k, a, 1).value == doctest::Approx(0.4 + 0.35 + 0.15 + 0.6));
  // Every two-letter window has beta = 1.
  CHECK(rho_tilde_exact(*k, a, 2).value == doctest::Approx(1.5));
  CHECK(rho_tilde_exact(*k, a, 2).value <= rho_tilde_exact(*k, a, 1).value + 1e-15);
}

TEST_CASE("T[0] tail") {
  auto k = ar();
  auto seq = exact_T0_tail_sequence(*k, 6);
  CHECK(seq[0].value == 0.5);
  CHECK(seq[1].value == doctest::Approx(0.375));
  auto cf = *k->star_tail_closed_form(6);
  for (int n = 0; n <= 6; ++n) {
    CAPTURE(n);
    CHECK(seq[n].method == "enumeration");
    CHECK(std::abs(seq[n].value - cf[n]) <= 1e-12);
  }
  for (auto& v : exact_T0_tail_sequence(*make_iid({0.5, 0.5}), 4)) CHECK(v.value == 0.0);
}

TEST_CASE("theorem conditions") {
  SUBCASE("autoregressive kernel") {
    auto r = check_theorem_conditions(*ar(), 30);
    CHECK(r.algorithm1_applicable);
    REQUIRE(r.c_hat);
    CHECK(*r.c_hat == doctest::Approx(0.288788).epsilon(1e-5));
    CHECK(*r.mean_bound == doctest::Approx(2.4627).epsilon(1e-4));
    CHECK(r.rho.size() == 30);
    CHECK(r.raabe_eps);
    auto j = to_json(r);
    CHECK(j.contains("verdict"));
    CHECK(j["c_hat"].get<double>() == doctest::Approx(*r.c_hat));
  }
  SUBCASE("memoryless kernel") {
    auto r = check_theorem_conditions(*make_iid({0.5, 0.5}), 10);
    REQUIRE(r.c_hat);
    CHECK(*r.c_hat == doctest::Approx(1.0));
    CHECK(*r.mean_bound == doctest::Approx(0.0));
  }
  SUBCASE("flipflop satisfies neither algorithm") {
    auto r = check_theorem_conditions(*make_flipflop(RunWeights(2.0)), 10);
    CHECK_FALSE(r.algorithm1_applicable);
    CHECK_FALSE(r.nhat);
    CHECK(r.max_closed_classes == 2);
    CHECK(r.verdict.find("neither") != std::string::npos);
  }
  SUBCASE("cyclic kernel qualifies for coalescence only") {
    auto r = check_theorem_conditions(*make_cyclic4(MemoryWeights::geometric(0.5)), 10);
    CHECK_FALSE(r.algorithm1_applicable);
    REQUIRE(r.nhat);
    CHECK(*r.nhat == 1);
    CHECK(*r.n0 == 2);
    CHECK_FALSE(r.rho_tilde.empty());
  }
}

TEST_CASE("renewal diagnostic") {
  SUBCASE("autoregressive kernel is stationary") {
    auto r = renewal_diagnostic(*ar(), 50, 5000, UniformStream(21, 0));
    CHECK(r.renewals.size() > 100);
    CHECK(r.means_agree);
    CHECK(r.z <= 3.0);
    CHECK_FALSE(r.low_counts);
    CHECK(r.truncation_bias == doctest::Approx(exact_T0_tail(*ar(), 50).value));
    CHECK(r.truncation_bias < 1e-3);
    auto j = to_json(r);
    CHECK(j.contains("chi_square"));
  }
  SUBCASE("every time is a renewal for a memoryless kernel") {
    auto r = renewal_diagnostic(*make_iid({0.5, 0.5}), 5, 200, UniformStream(22, 0));
    CHECK(r.renewals.size() == 201);
    CHECK(r.mean_first == 1.0);
    CHECK(r.mean_second == 1.0);
    CHECK(r.se_first == 0.0);
  }
  SUBCASE("rare spontaneous symbols flag low counts") {
    auto k = make_autoregressive(MemoryWeights::geometric(0.97), 0.3);
    auto r = renewal_diagnostic(*k, 50, 300, UniformStream(23, 0));
    CHECK(r.low_counts);
  }
}

TEST_CASE("concentration bound") {
  for (double n : {1.0, 5.0, 20.0})
    CHECK(concentration_bound(n, n, 0.0) ==
          doctest::Approx(std::min(1.0, 4.0 * std::exp(-2.0 * n / 9.0))));
  CHECK(concentration_bound(1e-9, 1.0, 0.0) == 1.0);
  CHECK_THROWS_AS(concentration_bound(0.0, 1.0, 0.0), std::invalid_argument);

  // Window averages of perfect samples never exceed the bound's frequency.
  auto k = ar();
  const int n = 50, reps = 20000;
  const double eps = 0.2;
  const double bound = concentration_bound(eps, 1.0 / n, 2.4627);
  int far = 0;
  for (int i = 0; i < reps; ++i) {
    auto s = run_algorithm1(*k, n - 1, UniformStream(24, i)).symbols;
    double mean = 0.0;
    for (auto x : s) mean += x.letter();
    far += std::abs(mean / n - 0.7) > eps;
  }
  CHECK(static_cast<double>(far) / reps <= bound);
}

TEST_CASE("forward simulation") {
  auto k = ar();
  auto path = forward_simulate(*k, make_window({1}), 1000, 100000, UniformStream(25, 0));
  REQUIRE(path.size() == 100000);
  double mean = 0.0;
  for (auto x : path) mean += x;
  CHECK(mean / path.size() == doctest::Approx(0.7).epsilon(0.03));
  CHECK_THROWS_AS(forward_simulate(*k, {}, 1, 1, UniformStream(1, 0)), std::invalid_argument);
  CHECK_THROWS_AS(forward_simulate(*make_kernel("imitation", {}), make_window({0}), 1, 1,
                                   UniformStream(1, 0)),
                  std::invalid_argument);
}
