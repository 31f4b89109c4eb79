#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "infchain/cftp_spontaneous.hpp"
#include "infchain/markov_analysis.hpp"

namespace infchain {

/// The kernel fails the unique-closed-aperiodic-class requirement (or n0
/// could not be found), so coalescence sampling is not available.
class AssumptionViolated : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything Algorithm 2 needs: the Markov order nhat, the window length
/// n0, and the analysis whose states form the past set C.
struct CoalescencePlan {
  int nhat = 0;
  int n0 = 0;
  MarkovAnalysis analysis;

  std::size_t past_count() const { return analysis.states.size(); }
  /// l_j = (j - 1) n0 + 1, first time of window I_j.
  std::int64_t window_start(std::int64_t j) const { return (j - 1) * n0 + 1; }
};

/// Runs find_nhat and compute_n0; throws AssumptionViolated on failure.
CoalescencePlan prepare_coalescence(const Kernel& kernel, int n_max = 6, int m_max = 64);

struct Algorithm2Options {
  std::uint64_t max_rounds = 1'000'000;
};

/// Perfect sample of X_{-k..0} without spontaneous symbols. The record's T
/// holds T~[n] (window indices); uniforms are U_m^a with past_id = index of
/// a in plan.analysis.states.
SampleResult run_algorithm2(const Kernel& kernel, const CoalescencePlan& plan, std::int64_t k,
                            const UniformStream& stream, const Algorithm2Options& options = {});

/// Phase one alone for window I_j (j <= 0): merged symbols oldest first,
/// star where the coupled trajectories disagree.
std::vector<Symbol> coalesce_window(const Kernel& kernel, const CoalescencePlan& plan,
                                    std::int64_t j, const UniformStream& stream);

}  // namespace infchain
