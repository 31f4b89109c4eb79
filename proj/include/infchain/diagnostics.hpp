#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "infchain/kernel.hpp"
#include "infchain/markov_analysis.hpp"
#include "infchain/uniform_stream.hpp"

namespace infchain {

/// An enumeration would visit more nodes than its budget allows.
class ExplosionGuard : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EnumerationBudget {
  std::uint64_t max_nodes = 20'000'000;
};

/// Exact value of an enumeration oracle. For countable alphabets the sum
/// runs over letters below the truncation and tail_bound bounds the mass
/// left out (value <= exact <= value + tail_bound).
struct OracleValue {
  double value = 0.0;
  double tail_bound = 0.0;
  std::uint64_t nodes = 0;
  std::string method = "enumeration";
};

/// Letters enumerated for countable kernels unless told otherwise.
inline constexpr Letter kDefaultTruncation = 50;

/// rho_1..rho_N by one depth-first enumeration over star-free strings.
std::vector<OracleValue> rho_sequence(const Kernel& kernel, int N,
                                      std::optional<Letter> truncation = {},
                                      const EnumerationBudget& budget = {});
OracleValue rho_exact(const Kernel& kernel, int n, std::optional<Letter> truncation = {},
                      const EnumerationBudget& budget = {});

/// rho~_1..rho~_N over the closed class of the analysis.
std::vector<OracleValue> rho_tilde_sequence(const Kernel& kernel, const MarkovAnalysis& analysis,
                                            int N, const EnumerationBudget& budget = {});
OracleValue rho_tilde_exact(const Kernel& kernel, const MarkovAnalysis& analysis, int n,
                            const EnumerationBudget& budget = {});

/// P(|T[0]| > n) for n = 0..n_max by enumeration over strings with stars;
/// falls back to a kernel closed form when the enumeration is over budget.
std::vector<OracleValue> exact_T0_tail_sequence(const Kernel& kernel, int n_max,
                                                std::optional<Letter> truncation = {},
                                                const EnumerationBudget& budget = {});
OracleValue exact_T0_tail(const Kernel& kernel, int n, std::optional<Letter> truncation = {},
                          const EnumerationBudget& budget = {});

struct ConditionReport {
  std::string kernel;
  double beta = 0.0;
  bool algorithm1_applicable = false;
  std::vector<OracleValue> rho;  // rho_1..rho_k for the k reached
  std::optional<double> c_hat;
  std::optional<double> mean_bound;  // (1 - c_hat) / c_hat
  std::vector<double> rho_partial_sums;
  std::optional<double> raabe_eps;  // min over checked n of 1 - n s_n
  std::optional<int> nhat;
  std::optional<int> n0;
  std::size_t max_closed_classes = 0;
  std::vector<OracleValue> rho_tilde;
  std::optional<double> c_tilde_hat;
  std::vector<std::string> notes;
  std::string verdict;
};

ConditionReport check_theorem_conditions(const Kernel& kernel, int N,
                                         const EnumerationBudget& budget = {},
                                         int n_max = 6);

nlohmann::json to_json(const ConditionReport& report);

struct RenewalReport {
  std::int64_t horizon = 0;
  std::int64_t window = 0;
  std::vector<std::int64_t> renewals;  // times n with T[n, n+H] = n
  std::size_t gaps_first = 0, gaps_second = 0;
  double mean_first = 0.0, mean_second = 0.0;
  double se_first = 0.0, se_second = 0.0;
  double z = 0.0;  // |mean difference| / combined SE
  double chi_square = 0.0;
  int chi_square_dof = 0;
  double truncation_bias = 0.0;  // P(|T[0]| > H)
  bool low_counts = false;
  bool means_agree = false;  // within 3 SE
};

/// Runs Algorithm 1 once on times -(W+H)..0 and reads the renewal set of
/// the first W+1 times from the horizon-truncated stopping times.
RenewalReport renewal_diagnostic(const Kernel& kernel, std::int64_t horizon, std::int64_t window,
                                 const UniformStream& stream);

nlohmann::json to_json(const RenewalReport& report);

/// Plain forward simulation through Kernel::transition: starts from a
/// star-free past (newest first), discards `burn_in` steps and returns the
/// next `steps` letters, oldest first. Step t >= 1 uses uniform U_t of the
/// stream. Only the newest `history_cap` symbols are passed to the kernel,
/// which completes them by its own convention.
std::vector<Letter> forward_simulate(const Kernel& kernel, ContextView initial_past,
                                     std::int64_t burn_in, std::int64_t steps,
                                     const UniformStream& stream, std::size_t history_cap = 128);

/// 4 exp(-2 eps^2 / (9 (1 + E T)^2 ||delta f||^2)), clamped to [0, 1].
double concentration_bound(double epsilon, double delta_f_l2_norm_squared, double expected_T0);

}  // namespace infchain
