#pragma once

#include <atomic>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "infchain/kernel.hpp"
#include "infchain/uniform_stream.hpp"

namespace infchain {

/// A run hit its round budget before every requested symbol was fixed.
class MaxRoundsExceeded : public std::runtime_error {
 public:
  MaxRoundsExceeded(std::uint64_t rounds, std::vector<Symbol> partial)
      : std::runtime_error("round budget exhausted after " + std::to_string(rounds) +
                           " rounds"),
        rounds(rounds), partial(std::move(partial)) {}

  std::uint64_t rounds;
  std::vector<Symbol> partial;  // X_{-k..0} as far as known, oldest first
};

/// A symbol fixed in an earlier round changed later. Signals a bug, never a
/// property of the kernel.
class OnceFixedViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Number of once-fixed checks performed process-wide (for reporting).
std::uint64_t once_fixed_checks();
void count_once_fixed_checks(std::uint64_t n);

/// Stopping times of one run, indexed by time n = -k..0.
struct StoppingRecord {
  std::int64_t k = 0;
  std::vector<std::int64_t> T;  // T[n] at index n + k
  std::uint64_t rounds_used = 0;
  std::uint64_t uniforms_consumed = 0;

  std::int64_t at(std::int64_t n) const { return T.at(static_cast<std::size_t>(n + k)); }
  /// T[m, n]: the smallest T[j] over m <= j <= n.
  std::int64_t range(std::int64_t m, std::int64_t n) const;
};

struct SampleResult {
  std::vector<Symbol> symbols;  // X_{-k}, ..., X_0 (oldest first)
  StoppingRecord record;
};

struct Algorithm1Options {
  std::uint64_t max_rounds = 1'000'000;
};

/// Perfect sample of X_{-k..0} by backward search for spontaneous symbols
/// with forward update cascades. Requires beta > 0.
SampleResult run_algorithm1(const Kernel& kernel, std::int64_t k, const UniformStream& stream,
                            const Algorithm1Options& options = {});

/// Forward auxiliary chain Y_0..Y_n with P(Y_j = g | Y_0..Y_{j-1}) =
/// alpha(g | Y_{j-1}, ..., Y_0), stars included. Uses U_j at time j.
std::vector<Symbol> run_auxiliary_chain(const Kernel& kernel, std::int64_t horizon,
                                        const UniformStream& stream);

}  // namespace infchain
