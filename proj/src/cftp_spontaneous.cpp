#include "infchain/cftp_spontaneous.hpp"

#include <algorithm>

namespace infchain {

namespace {
std::atomic<std::uint64_t> g_once_fixed_checks{0};
}

std::uint64_t once_fixed_checks() { return g_once_fixed_checks.load(); }
void count_once_fixed_checks(std::uint64_t n) { g_once_fixed_checks += n; }

std::int64_t StoppingRecord::range(std::int64_t m, std::int64_t n) const {
  if (m > n) throw std::invalid_argument("StoppingRecord::range: m > n");
  std::int64_t t = at(m);
  for (std::int64_t j = m + 1; j <= n; ++j) t = std::min(t, at(j));
  return t;
}

SampleResult run_algorithm1(const Kernel& kernel, std::int64_t k, const UniformStream& stream,
                            const Algorithm1Options& options) {
  if (k < 0) throw std::invalid_argument("run_algorithm1: k must be >= 0");
  if (options.max_rounds < 1) throw std::invalid_argument("run_algorithm1: max_rounds < 1");
  if (!(kernel.beta({}) > 0.0))
    throw std::domain_error("run_algorithm1: beta = 0, no spontaneous symbols");

  // Index i holds time -i. temp is round n, prev is round n - 1; covered[i]
  // is the mass already scanned for position i (its next threshold).
  std::vector<Symbol> temp, prev;
  std::vector<double> covered;
  std::vector<std::int64_t> fixed_round;
  std::int64_t unresolved = k + 1;  // target positions still starred

  for (std::uint64_t round = 0;; ++round) {
    if (round >= options.max_rounds) {
      std::vector<Symbol> partial(temp.begin(), temp.begin() + std::min<std::int64_t>(
                                                                  k + 1, temp.size()));
      partial.resize(static_cast<std::size_t>(k + 1), Symbol::star());
      std::reverse(partial.begin(), partial.end());
      throw MaxRoundsExceeded(round, std::move(partial));
    }
    const auto n = static_cast<std::int64_t>(round);
    prev = temp;
    const Draw fresh = sample_symbol(kernel, stream.at(-n), {});
    temp.push_back(fresh.symbol);
    covered.push_back(fresh.covered);
    fixed_round.push_back(fresh.symbol.is_letter() ? n : -1);
    if (fresh.symbol.is_letter() && n <= k) --unresolved;

    if (fresh.symbol.is_letter()) {
      // Forward in time: index n-1 down to 0, so contexts already carry
      // this round's updates.
      for (std::int64_t m = n - 1; m >= 0; --m) {
        const auto i = static_cast<std::size_t>(m);
        if (prev[i].is_letter()) continue;
        const ContextView w_new(temp.data() + i + 1, static_cast<std::size_t>(n - m));
        const ContextView w_old(prev.data() + i + 1, static_cast<std::size_t>(n - 1 - m));
        const Draw d =
            sample_symbol_increment(kernel, stream.at(-m), w_new, w_old, covered[i]);
        temp[i] = d.symbol;
        covered[i] = d.covered;
        if (d.symbol.is_letter()) {
          fixed_round[i] = n;
          if (m <= k) --unresolved;
        }
      }
    }

    // Once a letter, always that letter.
    for (std::size_t i = 0; i < prev.size(); ++i)
      if (prev[i].is_letter() && temp[i] != prev[i])
        throw OnceFixedViolation("run_algorithm1: symbol at time -" + std::to_string(i) +
                                 " changed in round " + std::to_string(n));
    count_once_fixed_checks(prev.size());

    if (n >= k && unresolved == 0) {
      SampleResult out;
      out.symbols.assign(temp.rend() - (k + 1), temp.rend());
      out.record.k = k;
      out.record.rounds_used = round;
      out.record.uniforms_consumed = round + 1;
      out.record.T.resize(static_cast<std::size_t>(k + 1));
      for (std::int64_t t = -k; t <= 0; ++t)
        out.record.T[static_cast<std::size_t>(t + k)] = -fixed_round[static_cast<std::size_t>(-t)];
      return out;
    }
  }
}

std::vector<Symbol> run_auxiliary_chain(const Kernel& kernel, std::int64_t horizon,
                                        const UniformStream& stream) {
  if (horizon < 0) throw std::invalid_argument("run_auxiliary_chain: horizon must be >= 0");
  const auto len = static_cast<std::size_t>(horizon + 1);
  // Filled from the back so that each context is a newest-first span.
  std::vector<Symbol> buf(len);
  for (std::size_t j = 0; j < len; ++j) {
    const ContextView ctx(buf.data() + len - j, j);
    buf[len - 1 - j] = sample_symbol(kernel, stream.at(static_cast<std::int64_t>(j)), ctx).symbol;
  }
  return {buf.rbegin(), buf.rend()};
}

}  // namespace infchain
