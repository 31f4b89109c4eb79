#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "infchain/diagnostics.hpp"
#include "infchain/gallery.hpp"
#include "infchain/markov_analysis.hpp"

using namespace infchain;

namespace {

// p(g | x) of the imitation kernel for a fully specified past (letter
// indices, newest first, index i carries label i + 1).
double imitation_p(const SpontaneousWeights& c, Letter g, const std::vector<Letter>& x) {
  const Letter len = x[0] + 1;
  int count = 0;
  for (Letter k = 0; k < len; ++k) count += x[k] == g ? 1 : 0;
  return c.weight(g) + (1.0 - c.total()) * (static_cast<double>(count) / len);
}

// Infimum of p(g | x) over all length-`ext` completions of w over `letters`.
double brute_infimum(const SpontaneousWeights& c, Letter letters, Letter g, ContextView w,
                     int ext) {
  std::vector<Letter> x(ext);
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> free;
  for (int i = 0; i < ext; ++i) {
    if (i < static_cast<int>(w.size()) && w[i].is_letter())
      x[i] = w[i].letter();
    else
      free.push_back(i);
  }
  const std::uint64_t total = static_cast<std::uint64_t>(std::pow(letters, free.size()));
  for (std::uint64_t code = 0; code < total; ++code) {
    std::uint64_t r = code;
    for (int i : free) {
      x[i] = static_cast<Letter>(r % letters);
      r /= letters;
    }
    best = std::min(best, imitation_p(c, g, x));
  }
  return best;
}

void all_windows(Letter letters, int max_len, std::vector<ContextWindow>& out) {
  out.push_back({});
  std::vector<ContextWindow> frontier{{}};
  for (int len = 1; len <= max_len; ++len) {
    std::vector<ContextWindow> next;
    for (const auto& w : frontier)
      for (Letter g = -1; g < letters; ++g) {
        auto v = w;
        v.push_back(g < 0 ? Symbol::star() : Symbol::letter(g));
        next.push_back(v);
      }
    out.insert(out.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
}

}  // namespace

TEST_CASE("memory weights") {
  auto g = MemoryWeights::geometric(0.5);
  CHECK(g.weight(0) == doctest::Approx(0.5));
  CHECK(g.tail(0) == doctest::Approx(1.0));
  CHECK(g.tail(3) == doctest::Approx(0.125));
  auto h = MemoryWeights::harmonic(0.5);
  CHECK(h.tail(1) == doctest::Approx(0.5));
  CHECK(h.tail(10) == doctest::Approx(0.05));
  auto l = MemoryWeights::list({0.5, 0.25, 0.25});
  CHECK(l.weight(3) == 0.0);
  CHECK(l.tail(2) == doctest::Approx(0.25));
  CHECK(l.support_end() == 3);
  CHECK_THROWS_AS(MemoryWeights::list({0.5, 0.2}), ParameterError);
  CHECK_THROWS_AS(MemoryWeights::geometric(1.0), ParameterError);
}

TEST_CASE("autoregressive kernel") {
  auto theta = MemoryWeights::geometric(0.5);
  auto k = make_autoregressive(theta, 0.3);
  CHECK(k->beta({}) == doctest::Approx(0.5));
  for (int n = 1; n <= 8; ++n) {
    ContextWindow ones(n, Symbol::letter(1));
    double expect = 0.5 * 0.7;
    for (int j = 1; j <= n; ++j) expect += theta.weight(j);
    CHECK(k->alpha(1, ones) == doctest::Approx(expect).epsilon(1e-14));
    // beta of any fully known window of length n is theta_0 + ... + theta_n
    CHECK(k->beta(ones) == doctest::Approx(1.0 - theta.tail(n + 1)).epsilon(1e-14));
  }
  CHECK(*k->memory_tail(4) == doctest::Approx(0.0625));
  CHECK_THROWS_AS(make_autoregressive(theta, 0.0), ParameterError);
  CHECK_THROWS_AS(make_autoregressive(theta, 1.0), ParameterError);
}

TEST_CASE("imitation kernel single-window values") {
  auto c = SpontaneousWeights::geometric(0.5, 0.5);
  auto k = make_imitation(c);
  for (Letter g = 0; g < 6; ++g) CHECK(k->alpha(g, {}) == doctest::Approx(c.weight(g)));
  // x_{-1} = 1: memory length one, copy is certain.
  auto w = make_window({0});
  CHECK(k->alpha(0, w) == doctest::Approx(c.weight(0) + (1.0 - c.total())));
  CHECK(k->alpha(1, w) == doctest::Approx(c.weight(1)));
  CHECK(k->letter_label(0) == "1");
  CHECK(!k->finite());
}

TEST_CASE("imitation kernel matches the brute-force adversarial infimum") {
  auto c = SpontaneousWeights::list({0.2, 0.15, 0.1, 0.05});
  const Letter letters = 4;
  auto k = make_imitation(c, letters);
  std::vector<ContextWindow> windows;
  all_windows(letters, 3, windows);
  CHECK(windows.size() == 1 + 5 + 25 + 125);
  for (const auto& w : windows) {
    for (Letter g = 0; g < letters; ++g) {
      CAPTURE(format_window(*k, w));
      CAPTURE(g);
      CHECK(k->alpha(g, w) == brute_infimum(c, letters, g, w, 8));
    }
  }
}

TEST_CASE("imitation_general with uniform law equals imitation") {
  auto c = SpontaneousWeights::geometric(0.6, 0.4);
  auto a = make_imitation(c);
  auto b = make_imitation_general(c, CopyLaw::kUniform, 0.5);
  std::mt19937_64 rng(1);
  std::bernoulli_distribution hide(0.3);
  for (int t = 0; t < 100; ++t) {
    auto w = random_admissible_window(*a, t % 7, rng);
    REQUIRE(w);
    for (auto& s : *w)
      if (hide(rng)) s = Symbol::star();
    for (Letter g = 0; g < 10; ++g) CHECK(a->alpha(g, *w) == b->alpha(g, *w));
  }
}

TEST_CASE("imitation rho lower bounds") {
  SUBCASE("uniform copy law") {
    auto c = SpontaneousWeights::geometric(0.5, 0.5);
    auto k = make_imitation(c);
    const double bound = closed_form::ladder_rho_lower_bound(c, std::vector<double>(8, 1.0), 3);
    CHECK(bound == doctest::Approx(0.25 * (0.25 + 0.125 + 0.5) *
                                   (0.25 + 0.125 + 0.0625 + 0.5)));
    auto r = rho_exact(*k, 3, Letter{20});
    CHECK(r.value + r.tail_bound >= bound);
    CHECK(r.value >= bound);
  }
  SUBCASE("spill law") {
    auto c = SpontaneousWeights::geometric(0.5, 0.5);
    const double rate = 0.5;
    auto k = make_imitation_general(c, CopyLaw::kSpill, rate);
    std::vector<double> d;
    for (int m = 1; m <= 8; ++m) d.push_back(1.0 - std::pow(rate, m));
    auto r = rho_exact(*k, 3, Letter{20});
    CHECK(r.value + r.tail_bound >= closed_form::ladder_rho_lower_bound(c, d, 3));
  }
}

TEST_CASE("ladder kernel") {
  auto c = SpontaneousWeights::geometric(0.5, 0.5);
  auto k = make_ladder(c, LadderLaw::kUniform);
  // Y = 1 is forced by x_{-1} = 1.
  auto w = make_window({0});
  CHECK(k->alpha(0, w) == doctest::Approx(c.weight(0) + 0.5));
  CHECK(k->alpha(1, w) == doctest::Approx(c.weight(1)));
  for (Letter g = 0; g < 6; ++g) {
    CHECK(k->alpha(g, {}) == c.weight(g));
    CHECK(k->alpha(g, make_window({-1, -1, -1})) == c.weight(g));
  }
  auto point = make_ladder(c, LadderLaw::kPoint);
  // Labels 2,1: excess 1 then 0 at m = 2, so Y = 2 and q = delta_2.
  auto w2 = make_window({1, 0});
  CHECK(point->alpha(1, w2) == doctest::Approx(c.weight(1) + 0.5));
  auto r = rho_exact(*k, 3, Letter{20});
  CHECK(r.value + r.tail_bound >=
        closed_form::ladder_rho_lower_bound(c, std::vector<double>(8, 1.0), 3));
}

TEST_CASE("cyclic kernel") {
  auto theta = MemoryWeights::geometric(0.5);
  auto k = make_cyclic4(theta);
  CHECK(k->beta({}) == 0.0);
  for (int g = 0; g < 4; ++g) {
    auto w = make_window({g});
    for (int b = 0; b < 4; ++b) {
      const bool near = b == g || b == (g + 1) % 4 || b == (g + 3) % 4;
      const double expect = (near ? theta.weight(0) / 3 : 0.0) + (b == g ? theta.weight(1) : 0.0);
      CHECK(k->alpha(b, w) == doctest::Approx(expect).epsilon(1e-14));
    }
  }
  // 0 and 2 are not neighbours.
  CHECK_FALSE(k->admissible_window(make_window({0, 2})));
  CHECK(k->admissible_window(make_window({0, 1, 2})));
}

TEST_CASE("graph walk on the 4-cycle reproduces the cyclic analysis") {
  auto theta = MemoryWeights::geometric(0.5);
  auto a = make_cyclic4(theta);
  auto b = make_graph_walk(Graph::cycle(4), theta);
  for (int n = 1; n <= 3; ++n) {
    auto ma = build_markov_analysis(*a, n);
    auto mb = build_markov_analysis(*b, n);
    CHECK(ma.states == mb.states);
    CHECK(ma.closed_classes.size() == mb.closed_classes.size());
    CHECK(ma.period == mb.period);
    CHECK(ma.successors == mb.successors);
    CHECK(ma.beta_n == doctest::Approx(mb.beta_n));
  }
  CHECK(*find_nhat(*b, 6).nhat == 1);
}

TEST_CASE("graph walk on the star graph rejects leaf-to-leaf windows") {
  auto k = make_graph_walk(Graph::star(3), MemoryWeights::geometric(0.5));
  // Vertex 0 is the hub.
  CHECK(k->admissible_window(make_window({1, 0, 2})));
  CHECK_FALSE(k->admissible_window(make_window({1, 2})));
  CHECK_FALSE(k->admissible_window(make_window({3, 1})));
  CHECK(k->admissible_window(make_window({1, 1, 0})));
}

TEST_CASE("graph construction") {
  CHECK(Graph::complete(3).adjacent(0, 2));
  CHECK_FALSE(Graph::path(3).adjacent(0, 2));
  CHECK(Graph::cycle(5).connected());
  CHECK_FALSE(Graph::from_edges(4, {{0, 1}, {2, 3}}).connected());
  CHECK_THROWS_AS(make_graph_walk(Graph::from_edges(4, {{0, 1}, {2, 3}}),
                                  MemoryWeights::geometric(0.5)),
                  ParameterError);
}

TEST_CASE("flipflop kernel") {
  auto k = make_flipflop(RunWeights(2.0));
  for (int n = 1; n <= 8; ++n) {
    ContextWindow zeros(n, Symbol::letter(0)), ones(n, Symbol::letter(1));
    CHECK(k->alpha(1, zeros) == 0.0);
    CHECK(k->alpha(0, ones) == 0.0);
    CHECK(k->alpha(0, zeros) == doctest::Approx(RunWeights(2.0)(n)));
  }
}

TEST_CASE("three-letter alternating kernel") {
  auto r = make_three_letter_alternating(RunWeights(2.0), true);
  for (int b = 0; b < 3; ++b)
    for (int g = 0; g < 3; ++g)
      CHECK(r->alpha(g, make_window({b})) == (g != b ? 0.5 : 0.0));
  CHECK_FALSE(r->admissible_window(make_window({1, 1})));
  auto u = make_three_letter_alternating(RunWeights(2.0), false);
  CHECK(u->admissible_window(make_window({1, 1})));
  // After a run of one, staying is impossible and moves share the mass.
  CHECK(u->alpha(0, make_window({0, 1})) == 0.0);
}

TEST_CASE("registry") {
  CHECK(gallery().size() >= 10);
  for (const auto& e : gallery()) {
    CAPTURE(e.name);
    auto k = make_kernel(e.name, {});
    CHECK(k->name() == e.name);
    CHECK(k->parameters().is_object());
  }
  CHECK_THROWS_AS(make_kernel("nope", {}), ParameterError);
  CHECK_THROWS_AS(make_kernel("autoregressive", {{"bogus", "1"}}), ParameterError);
  CHECK_THROWS_AS(make_kernel("autoregressive", {{"delta", "abc"}}), ParameterError);
  CHECK_THROWS_AS(make_kernel("iid", {{"p", "0.5,0.6"}}), ParameterError);
  CHECK(make_kernel("autoregressive", {{"q", "0.25"}})->beta({}) == doctest::Approx(0.75));
}
