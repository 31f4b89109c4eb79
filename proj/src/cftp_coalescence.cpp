#include "infchain/cftp_coalescence.hpp"

#include <algorithm>
#include <limits>
#include <optional>

namespace infchain {

CoalescencePlan prepare_coalescence(const Kernel& kernel, int n_max, int m_max) {
  if (!kernel.finite())
    throw AssumptionViolated(kernel.name() + ": coalescence needs a finite alphabet");
  NhatResult found = find_nhat(kernel, n_max);
  if (!found.nhat)
    throw AssumptionViolated(kernel.name() + ": no order n <= " + std::to_string(n_max) +
                             " has a unique aperiodic closed class");
  CoalescencePlan plan;
  plan.nhat = *found.nhat;
  plan.analysis = std::move(*found.analysis);
  try {
    plan.n0 = compute_n0(plan.analysis, m_max);
  } catch (const NotFoundWithin& e) {
    throw AssumptionViolated(kernel.name() + ": " + e.what());
  }
  return plan;
}

namespace {

// Phase-one state of one window: for each past a, the trajectory buffer
// (n0 trajectory symbols newest first, then a) and the scanned mass per step.
struct WindowRun {
  std::vector<Symbol> buffers;  // |C| * (n0 + nhat)
  std::vector<double> covered;  // |C| * n0, by step
  std::vector<Symbol> merged;   // by step (oldest first)
};

WindowRun run_window(const Kernel& kernel, const CoalescencePlan& plan, std::int64_t first_time,
                     const UniformStream& stream) {
  const std::size_t n0 = static_cast<std::size_t>(plan.n0);
  const std::size_t nh = static_cast<std::size_t>(plan.nhat);
  const std::size_t pasts = plan.past_count();
  const std::size_t stride = n0 + nh;
  WindowRun r;
  r.buffers.resize(pasts * stride);
  r.covered.resize(pasts * n0);
  r.merged.assign(n0, Symbol::star());
  for (std::size_t a = 0; a < pasts; ++a) {
    Symbol* buf = r.buffers.data() + a * stride;
    std::copy(plan.analysis.states[a].begin(), plan.analysis.states[a].end(), buf + n0);
    for (std::size_t s = 0; s < n0; ++s) {
      const ContextView ctx(buf + n0 - s, s + nh);
      const double u = stream.at(first_time + static_cast<std::int64_t>(s),
                                 static_cast<std::uint32_t>(a));
      const Draw d = sample_symbol(kernel, u, ctx);
      buf[n0 - 1 - s] = d.symbol;
      r.covered[a * n0 + s] = d.covered;
    }
  }
  for (std::size_t s = 0; s < n0; ++s) {
    const Symbol first = r.buffers[n0 - 1 - s];
    bool agree = first.is_letter();
    for (std::size_t a = 1; a < pasts && agree; ++a)
      agree = r.buffers[a * stride + n0 - 1 - s] == first;
    if (agree) r.merged[s] = first;
  }
  return r;
}

}  // namespace

std::vector<Symbol> coalesce_window(const Kernel& kernel, const CoalescencePlan& plan,
                                    std::int64_t j, const UniformStream& stream) {
  if (j > 0) throw std::invalid_argument("coalesce_window: window index must be <= 0");
  return run_window(kernel, plan, plan.window_start(j), stream).merged;
}

SampleResult run_algorithm2(const Kernel& kernel, const CoalescencePlan& plan, std::int64_t k,
                            const UniformStream& stream, const Algorithm2Options& options) {
  if (k < 0) throw std::invalid_argument("run_algorithm2: k must be >= 0");
  if (plan.n0 < 1 || plan.nhat < 1 || plan.n0 < plan.nhat || !plan.analysis.nhat_found)
    throw AssumptionViolated("run_algorithm2: invalid coalescence plan");
  if (options.max_rounds < 1) throw std::invalid_argument("run_algorithm2: max_rounds < 1");

  const auto n0 = static_cast<std::int64_t>(plan.n0);
  const auto nh = static_cast<std::size_t>(plan.nhat);
  const std::size_t stride = static_cast<std::size_t>(n0) + nh;
  const std::size_t pasts = plan.past_count();
  const std::size_t letters = *kernel.alphabet_size();

  // Index j holds time -j; window I_{-w} covers j in [w n0, (w+1) n0 - 1].
  // fixed_round[j] is the round that fixed position j (-1 while starred);
  // a position is "old" in round n when 0 <= fixed_round[j] < n.
  std::vector<Symbol> temp;
  std::vector<double> covered;
  std::vector<double> alphas;  // per position: alpha(. | last context scanned)
  std::vector<std::int64_t> fixed_round;
  std::vector<WindowRun> windows;
  ContextWindow b(nh);
  std::int64_t oldest_letter = -1;
  std::uint64_t checks = 0;

  for (std::uint64_t round = 0;; ++round) {
    const auto n = static_cast<std::int64_t>(round);
    auto fixed_before = [&](std::size_t j) {
      return fixed_round[j] >= 0 && fixed_round[j] < n;
    };
    if (round >= options.max_rounds) {
      count_once_fixed_checks(checks);
      std::vector<Symbol> partial(static_cast<std::size_t>(k + 1), Symbol::star());
      for (std::int64_t j = 0; j <= k && j < static_cast<std::int64_t>(temp.size()); ++j)
        partial[static_cast<std::size_t>(k - j)] = temp[static_cast<std::size_t>(j)];
      throw MaxRoundsExceeded(round, std::move(partial));
    }

    // Phase one on I_{-n}: times -(n+1) n0 + 1 .. -n n0.
    windows.push_back(run_window(kernel, plan, -(n + 1) * n0 + 1, stream));
    const WindowRun& fresh = windows.back();
    // Oldest index whose letter was fixed this round; contexts of newer
    // positions are unchanged (up to trailing stars) when there is none.
    std::optional<std::size_t> changed;
    for (std::int64_t s = n0 - 1; s >= 0; --s) {
      temp.push_back(fresh.merged[static_cast<std::size_t>(s)]);
      covered.push_back(std::numeric_limits<double>::quiet_NaN());
      fixed_round.push_back(temp.back().is_letter() ? n : -1);
      if (temp.back().is_letter()) {
        if (!changed) changed = temp.size() - 1;
        oldest_letter = std::max<std::int64_t>(oldest_letter, temp.size() - 1);
      }
    }
    alphas.resize(temp.size() * letters);

    // Phase two: older windows first, each swept forward in time. Every
    // update needs a letter fixed this round at an older index, and the
    // only source of such letters is the fresh window, so a round without
    // a fresh merge leaves everything as it was.
    const auto oldest = static_cast<std::size_t>((n + 1) * n0 - 1);
    for (std::int64_t w = changed ? n - 1 : -1; w >= 0; --w) {
      const auto left = static_cast<std::size_t>((w + 1) * n0);
      bool complete = true, was_complete = true;
      for (std::size_t i = 0; i < nh; ++i) {
        complete = complete && temp[left + i].is_letter();
        was_complete = was_complete && fixed_before(left + i);
        b[i] = temp[left + i];
      }
      if (!complete) continue;
      const int bi = plan.analysis.state_index(b);
      if (bi < 0) continue;
      const WindowRun& own = windows[static_cast<std::size_t>(w)];
      const Symbol* traj = own.buffers.data() + static_cast<std::size_t>(bi) * stride;

      for (std::size_t j = left; j-- > static_cast<std::size_t>(w * n0);) {
        if (fixed_before(j)) continue;
        // Nothing older than j changed: the increment would be empty.
        if (was_complete && !(changed && *changed > j)) continue;
        const double u = stream.at(-static_cast<std::int64_t>(j), static_cast<std::uint32_t>(bi));
        // Trailing stars do not change alpha, so contexts stop at the oldest letter.
        const std::size_t reach = static_cast<std::size_t>(std::max<std::int64_t>(oldest_letter, j));
        const ContextView w_new(temp.data() + j + 1, std::min(oldest, reach) - j);
        const std::span<double> cache(alphas.data() + j * letters, letters);
        Draw d;
        if (was_complete) {
          d = sample_symbol_increment_cached(kernel, u, w_new, cache, covered[j]);
        } else {
          // First completion of b: continue the scan of b's own trajectory.
          const std::size_t s = left - 1 - j;
          const std::size_t at = static_cast<std::size_t>(n0) - 1 - s;
          const double cov = own.covered[static_cast<std::size_t>(bi) * n0 + s];
          if (traj[at].is_letter()) {
            d = {traj[at], cov};
          } else {
            const ContextView w_old(traj + at + 1, s + nh);
            for (std::size_t g = 0; g < letters; ++g)
              cache[g] = kernel.alpha(static_cast<Letter>(g), w_old);
            d = sample_symbol_increment_cached(kernel, u, w_new, cache, cov);
          }
        }
        // Once fixed, a symbol never changes: no write may touch a letter
        // from an earlier round.
        ++checks;
        if (temp[j].is_letter() && fixed_round[j] != n)
          throw OnceFixedViolation("run_algorithm2: symbol at time -" + std::to_string(j) +
                                   " rewritten in round " + std::to_string(n));
        temp[j] = d.symbol;
        covered[j] = d.covered;
        if (d.symbol.is_letter()) {
          fixed_round[j] = n;
          if (!changed || *changed < j) changed = j;
          oldest_letter = std::max<std::int64_t>(oldest_letter, j);
        }
      }
    }

    if (static_cast<std::int64_t>(temp.size()) > k) {
      bool done = true;
      for (std::int64_t j = 0; j <= k && done; ++j) done = temp[static_cast<std::size_t>(j)].is_letter();
      if (done) {
        count_once_fixed_checks(checks);
        SampleResult out;
        out.symbols.assign(temp.rend() - (k + 1), temp.rend());
        out.record.k = k;
        out.record.rounds_used = round;
        out.record.uniforms_consumed = (round + 1) * static_cast<std::uint64_t>(n0) * pasts;
        out.record.T.resize(static_cast<std::size_t>(k + 1));
        for (std::int64_t t = -k; t <= 0; ++t)
          out.record.T[static_cast<std::size_t>(t + k)] =
              -fixed_round[static_cast<std::size_t>(-t)];
        return out;
      }
    }
  }
}

}  // namespace infchain
