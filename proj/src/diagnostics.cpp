#include "infchain/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "infchain/cftp_coalescence.hpp"
#include "infchain/cftp_spontaneous.hpp"

namespace infchain {

namespace {

// Depth-first enumeration of alpha-weighted strings built oldest to newest.
// The buffer is filled from the back so each context is a newest-first span
// followed by an optional fixed suffix (the closed-class window for rho~).
class Enumerator {
 public:
  Enumerator(const Kernel& kernel, int depth, std::optional<Letter> truncation,
             const EnumerationBudget& budget, ContextView suffix = {})
      : kernel_(kernel), depth_(depth), budget_(budget) {
    if (kernel.finite()) {
      letters_ = static_cast<Letter>(*kernel.alphabet_size());
    } else {
      letters_ = truncation.value_or(kDefaultTruncation);
      countable_ = true;
    }
    if (letters_ < 1) throw std::invalid_argument("enumeration: truncation must be >= 1");
    buf_.resize(static_cast<std::size_t>(depth) + suffix.size());
    std::copy(suffix.begin(), suffix.end(), buf_.begin() + depth);
    suffix_ = suffix.size();
    value.assign(static_cast<std::size_t>(depth) + 1, 0.0);
    tail.assign(static_cast<std::size_t>(depth) + 2, 0.0);
  }

  /// with_stars: also branch on the star symbol and accumulate
  /// weight * alpha(* | ctx) per depth (the T[0] tail); otherwise
  /// accumulate the weight of star-free strings per depth (rho).
  void run(bool with_stars) {
    with_stars_ = with_stars;
    visit(0, 1.0);
  }

  std::uint64_t nodes = 0;
  std::vector<double> value;  // by depth
  std::vector<double> tail;   // omitted mass entering at each depth

 private:
  ContextView ctx(int d) const {
    return {buf_.data() + depth_ - d, static_cast<std::size_t>(d) + suffix_};
  }

  void visit(int d, double weight) {
    if (++nodes > budget_.max_nodes)
      throw ExplosionGuard("enumeration exceeded " + std::to_string(budget_.max_nodes) +
                           " nodes");
    const ContextView w = ctx(d);
    double star = 0.0;
    if (with_stars_) {
      star = alpha_star(kernel_, w);
      value[d] += weight * star;
    } else if (d > 0) {
      value[d] += weight;
    }
    if (d == depth_) return;
    double kept = 0.0;
    for (Letter g = 0; g < letters_; ++g) {
      const double a = kernel_.alpha(g, w);
      kept += a;
      if (!(a > 0.0)) continue;
      buf_[depth_ - 1 - d] = Symbol::letter(g);
      visit(d + 1, weight * a);
    }
    if (countable_) {
      const double missing = std::max(0.0, kernel_.beta(w) - kept);
      tail[d + 1] += weight * missing;
    }
    if (with_stars_ && star > 0.0) {
      buf_[depth_ - 1 - d] = Symbol::star();
      visit(d + 1, weight * star);
    }
  }

  const Kernel& kernel_;
  int depth_;
  EnumerationBudget budget_;
  Letter letters_ = 0;
  bool countable_ = false;
  bool with_stars_ = false;
  std::vector<Symbol> buf_;
  std::size_t suffix_ = 0;
};

// Omitted mass at depth d is bounded by everything dropped at depths <= d.
std::vector<OracleValue> collect(const Enumerator& e, int from, int to) {
  std::vector<OracleValue> out;
  double bound = 0.0;
  for (int d = 0; d <= to; ++d) {
    bound += e.tail[d];
    if (d >= from) out.push_back({e.value[d], bound, e.nodes, "enumeration"});
  }
  return out;
}

// Unpruned node count of a full enumeration, saturating.
double full_tree_size(double branching, int depth) {
  double total = 1.0, level = 1.0;
  for (int d = 0; d < depth; ++d) {
    level *= branching;
    total += level;
    if (total > 1e30) break;
  }
  return total;
}

double branching(const Kernel& kernel, std::optional<Letter> truncation) {
  return kernel.finite() ? static_cast<double>(*kernel.alphabet_size())
                         : static_cast<double>(truncation.value_or(kDefaultTruncation));
}

}  // namespace

std::vector<OracleValue> rho_sequence(const Kernel& kernel, int N,
                                      std::optional<Letter> truncation,
                                      const EnumerationBudget& budget) {
  if (N < 0) throw std::invalid_argument("rho_sequence: N must be >= 0");
  if (N == 0) return {};
  Enumerator e(kernel, N, truncation, budget);
  e.run(false);
  return collect(e, 1, N);
}

OracleValue rho_exact(const Kernel& kernel, int n, std::optional<Letter> truncation,
                      const EnumerationBudget& budget) {
  if (n < 1) throw std::invalid_argument("rho_exact: n must be >= 1");
  return rho_sequence(kernel, n, truncation, budget).back();
}

std::vector<OracleValue> rho_tilde_sequence(const Kernel& kernel, const MarkovAnalysis& analysis,
                                            int N, const EnumerationBudget& budget) {
  if (N < 0) throw std::invalid_argument("rho_tilde_sequence: N must be >= 0");
  const auto closed = analysis.closed_class_states();
  if (closed.empty())
    throw std::invalid_argument("rho_tilde_sequence: analysis has no unique closed class");
  std::vector<OracleValue> out(static_cast<std::size_t>(N));
  EnumerationBudget left = budget;
  for (int x : closed) {
    Enumerator e(kernel, N, std::nullopt, left, analysis.states[x]);
    e.run(false);
    for (int d = 1; d <= N; ++d) out[d - 1].value += e.value[d];
    for (auto& o : out) o.nodes += e.nodes;
    left.max_nodes -= std::min(left.max_nodes, e.nodes);
  }
  return out;
}

OracleValue rho_tilde_exact(const Kernel& kernel, const MarkovAnalysis& analysis, int n,
                            const EnumerationBudget& budget) {
  if (n < 1) throw std::invalid_argument("rho_tilde_exact: n must be >= 1");
  return rho_tilde_sequence(kernel, analysis, n, budget).back();
}

std::vector<OracleValue> exact_T0_tail_sequence(const Kernel& kernel, int n_max,
                                                std::optional<Letter> truncation,
                                                const EnumerationBudget& budget) {
  if (n_max < 0) throw std::invalid_argument("exact_T0_tail: n must be >= 0");
  const double size = full_tree_size(branching(kernel, truncation) + 1.0, n_max);
  if (size > static_cast<double>(budget.max_nodes)) {
    if (auto closed = kernel.star_tail_closed_form(n_max)) {
      std::vector<OracleValue> out;
      for (double v : *closed) out.push_back({v, 0.0, 0, "closed_form"});
      return out;
    }
  }
  Enumerator e(kernel, n_max, truncation, budget);
  e.run(true);
  return collect(e, 0, n_max);
}

OracleValue exact_T0_tail(const Kernel& kernel, int n, std::optional<Letter> truncation,
                          const EnumerationBudget& budget) {
  return exact_T0_tail_sequence(kernel, n, truncation, budget).back();
}

ConditionReport check_theorem_conditions(const Kernel& kernel, int N,
                                         const EnumerationBudget& budget, int n_max) {
  if (N < 0) throw std::invalid_argument("check_theorem_conditions: N must be >= 0");
  ConditionReport r;
  r.kernel = kernel.name();
  r.beta = kernel.beta({});
  r.algorithm1_applicable = r.beta > 0.0;
  r.notes.push_back("values are necessary-condition evidence at finite N, not a proof");

  if (r.algorithm1_applicable && N > 0) {
    // Enumerate as deep as the budget allows, then use the closed form.
    int depth = 0;
    const double b = branching(kernel, std::nullopt);
    while (depth < N && full_tree_size(b, depth + 1) <= static_cast<double>(budget.max_nodes))
      ++depth;
    if (depth > 0) r.rho = rho_sequence(kernel, depth, std::nullopt, budget);
    for (int n = depth + 1; n <= N; ++n) {
      auto v = kernel.rho_closed_form(n);
      if (!v) {
        r.notes.push_back("rho enumeration stopped at n = " + std::to_string(depth) +
                          " (budget); no closed form available");
        break;
      }
      r.rho.push_back({*v, 0.0, 0, "closed_form"});
    }
    double partial = 0.0;
    for (const auto& v : r.rho) r.rho_partial_sums.push_back(partial += v.value);
    if (!r.rho.empty()) {
      r.c_hat = r.rho.back().value;
      if (*r.c_hat > 0.0) r.mean_bound = (1.0 - *r.c_hat) / *r.c_hat;
    }
    if (kernel.memory_tail(1)) {
      double eps = 1.0;
      const int from = std::max(1, N / 2);
      for (int n = from; n <= std::max(N, 1); ++n)
        eps = std::min(eps, 1.0 - n * *kernel.memory_tail(n));
      r.raabe_eps = eps;
      r.notes.push_back(eps > 0.0 ? "s_n <= (1 - eps)/n holds on the checked range"
                                  : "s_n <= (1 - eps)/n fails on the checked range");
    }
  } else if (!r.algorithm1_applicable) {
    r.notes.push_back("beta = 0: rho path unavailable, no spontaneous symbols");
  }

  if (kernel.finite()) {
    NhatResult found = find_nhat(kernel, n_max);
    r.max_closed_classes = found.max_closed_classes;
    if (found.nhat) {
      r.nhat = found.nhat;
      try {
        r.n0 = compute_n0(*found.analysis, 64);
      } catch (const NotFoundWithin&) {
        r.notes.push_back("n0 not found within 64 steps");
      }
      try {
        if (N > 0) r.rho_tilde = rho_tilde_sequence(kernel, *found.analysis, N, budget);
        if (!r.rho_tilde.empty()) r.c_tilde_hat = r.rho_tilde.back().value;
      } catch (const ExplosionGuard& e) {
        r.notes.push_back(std::string("rho~ enumeration: ") + e.what());
      }
    } else {
      r.notes.push_back("no order n <= " + std::to_string(n_max) +
                        " has a unique aperiodic closed class");
    }
  }

  const bool algo2 = r.beta == 0.0 && r.nhat.has_value() && r.n0.has_value();
  if (r.algorithm1_applicable) {
    r.verdict = "algorithm 1 applicable (beta > 0)";
    if (r.c_hat && *r.c_hat > 0.0) r.verdict += "; rho_N stays positive at N";
  } else if (algo2) {
    r.verdict = "algorithm 2 applicable (beta = 0, unique aperiodic closed class)";
  } else {
    r.verdict = "neither algorithm's sufficient conditions hold";
  }
  return r;
}

namespace {

nlohmann::json values_json(const std::vector<OracleValue>& v) {
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t i = 0; i < v.size(); ++i)
    out.push_back({{"n", i + 1}, {"value", v[i].value}, {"tail_bound", v[i].tail_bound},
                   {"method", v[i].method}});
  return out;
}

template <class T>
nlohmann::json opt(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

nlohmann::json to_json(const ConditionReport& r) {
  return {{"kernel", r.kernel},
          {"beta", r.beta},
          {"algorithm1_applicable", r.algorithm1_applicable},
          {"rho", values_json(r.rho)},
          {"rho_partial_sums", r.rho_partial_sums},
          {"c_hat", opt(r.c_hat)},
          {"mean_T0_bound", opt(r.mean_bound)},
          {"raabe_eps", opt(r.raabe_eps)},
          {"nhat", opt(r.nhat)},
          {"n0", opt(r.n0)},
          {"max_closed_classes", r.max_closed_classes},
          {"rho_tilde", values_json(r.rho_tilde)},
          {"c_tilde_hat", opt(r.c_tilde_hat)},
          {"notes", r.notes},
          {"verdict", r.verdict}};
}

RenewalReport renewal_diagnostic(const Kernel& kernel, std::int64_t horizon, std::int64_t window,
                                 const UniformStream& stream) {
  if (horizon < 0 || window < 1)
    throw std::invalid_argument("renewal_diagnostic: need horizon >= 0 and window >= 1");
  RenewalReport r;
  r.horizon = horizon;
  r.window = window;
  const std::int64_t k = window + horizon;
  const SampleResult run = run_algorithm1(kernel, k, stream);

  const std::int64_t lo = -k, hi = -horizon;
  for (std::int64_t t = lo; t <= hi; ++t)
    if (run.record.range(t, t + horizon) == t) r.renewals.push_back(t);

  const std::int64_t mid = lo + (hi - lo) / 2;
  std::vector<double> first, second;
  for (std::size_t i = 1; i < r.renewals.size(); ++i) {
    const double gap = static_cast<double>(r.renewals[i] - r.renewals[i - 1]);
    (r.renewals[i - 1] < mid ? first : second).push_back(gap);
  }
  auto stats = [](const std::vector<double>& v, double& mean, double& se) {
    if (v.empty()) return;
    mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() < 2) return;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    se = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  };
  r.gaps_first = first.size();
  r.gaps_second = second.size();
  stats(first, r.mean_first, r.se_first);
  stats(second, r.mean_second, r.se_second);
  const double se = std::hypot(r.se_first, r.se_second);
  const double diff = std::abs(r.mean_first - r.mean_second);
  r.z = se > 0.0 ? diff / se : (diff == 0.0 ? 0.0 : INFINITY);
  r.means_agree = r.z <= 3.0;
  r.low_counts = first.size() < 30 || second.size() < 30;

  // Two-sample chi-square on gap histograms, last bin pooling gaps >= 10.
  constexpr int kBins = 10;
  std::vector<double> h1(kBins, 0.0), h2(kBins, 0.0);
  for (double g : first) h1[std::min<int>(static_cast<int>(g), kBins) - 1] += 1.0;
  for (double g : second) h2[std::min<int>(static_cast<int>(g), kBins) - 1] += 1.0;
  const double n1 = static_cast<double>(first.size()), n2 = static_cast<double>(second.size());
  int used = 0;
  if (n1 > 0 && n2 > 0) {
    for (int b = 0; b < kBins; ++b) {
      const double tot = h1[b] + h2[b];
      if (tot == 0.0) continue;
      ++used;
      const double e1 = tot * n1 / (n1 + n2), e2 = tot * n2 / (n1 + n2);
      r.chi_square += (h1[b] - e1) * (h1[b] - e1) / e1 + (h2[b] - e2) * (h2[b] - e2) / e2;
    }
  }
  r.chi_square_dof = std::max(used - 1, 0);
  r.truncation_bias = exact_T0_tail(kernel, static_cast<int>(horizon)).value;
  return r;
}

nlohmann::json to_json(const RenewalReport& r) {
  return {{"horizon", r.horizon},
          {"window", r.window},
          {"renewal_count", r.renewals.size()},
          {"gaps_first_half", r.gaps_first},
          {"gaps_second_half", r.gaps_second},
          {"gap_mean_first", r.mean_first},
          {"gap_mean_second", r.mean_second},
          {"gap_se_first", r.se_first},
          {"gap_se_second", r.se_second},
          {"z", r.z},
          {"means_agree_3se", r.means_agree},
          {"chi_square", r.chi_square},
          {"chi_square_dof", r.chi_square_dof},
          {"truncation_bias_bound", r.truncation_bias},
          {"low_counts", r.low_counts}};
}

std::vector<Letter> forward_simulate(const Kernel& kernel, ContextView initial_past,
                                     std::int64_t burn_in, std::int64_t steps,
                                     const UniformStream& stream, std::size_t history_cap) {
  if (!kernel.finite()) throw std::invalid_argument("forward_simulate: needs a finite alphabet");
  if (initial_past.empty() || !star_free(initial_past))
    throw std::invalid_argument("forward_simulate: needs a non-empty star-free past");
  if (burn_in < 0 || steps < 0 || history_cap == 0)
    throw std::invalid_argument("forward_simulate: negative length or zero history cap");
  const auto letters = static_cast<Letter>(*kernel.alphabet_size());

  // Newest symbol at buf[pos]; when pos reaches zero the newest block is
  // moved back to the end, so the view stays contiguous.
  const std::size_t cap = std::max(history_cap, initial_past.size());
  std::vector<Symbol> buf(4 * cap);
  std::size_t pos = buf.size() - initial_past.size();
  std::copy(initial_past.begin(), initial_past.end(), buf.begin() + static_cast<long>(pos));
  std::size_t filled = initial_past.size();

  std::vector<Letter> out;
  out.reserve(static_cast<std::size_t>(steps));
  for (std::int64_t t = 1; t <= burn_in + steps; ++t) {
    const ContextView history(buf.data() + pos, std::min(filled, history_cap));
    const double u = stream.at(t);
    double cum = 0.0;
    Letter next = -1;
    for (Letter g = 0; g < letters; ++g) {
      auto p = kernel.transition(g, history);
      if (!p) throw std::invalid_argument(kernel.name() + ": no forward transition");
      cum += *p;
      if (u < cum) {
        next = g;
        break;
      }
    }
    // Rounding can leave cum a hair below one; the last positive letter takes it.
    if (next < 0)
      for (Letter g = letters; g-- > 0;)
        if (*kernel.transition(g, history) > 0.0) {
          next = g;
          break;
        }
    if (pos == 0) {
      std::copy(buf.begin(), buf.begin() + static_cast<long>(cap), buf.end() - static_cast<long>(cap));
      pos = buf.size() - cap;
      filled = std::min(filled, cap);
    }
    buf[--pos] = Symbol::letter(next);
    ++filled;
    if (t > burn_in) out.push_back(next);
  }
  return out;
}

double concentration_bound(double epsilon, double delta_f_l2_norm_squared, double expected_T0) {
  if (!(epsilon > 0.0) || !(delta_f_l2_norm_squared > 0.0) || !(expected_T0 >= 0.0))
    throw std::invalid_argument("concentration_bound: need eps > 0, norm > 0, E T >= 0");
  const double a = 1.0 + expected_T0;
  const double v = 4.0 * std::exp(-2.0 * epsilon * epsilon /
                                  (9.0 * a * a * delta_f_l2_norm_squared));
  return std::clamp(v, 0.0, 1.0);
}

}  // namespace infchain
