#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "infchain/symbol.hpp"

namespace infchain {

/// Raised when a kernel breaks the lower-bound contract (negative
/// increments, mass above one) while an algorithm is consuming it.
class KernelContractViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Infinite-memory kernel seen through its infimum probabilities.
///
/// alpha(g, w) is the infimum of p(g | x) over admissible histories x
/// agreeing with w on every letter position of w (stars are free).
/// Implementations must be pure and must satisfy:
///  - alpha(g, w') >= alpha(g, w) whenever w' refines w (star replaced by a
///    letter, or symbols appended at the old end);
///  - trailing stars do not change alpha;
///  - for letters g >= context_bound(w), alpha(g, w) is bit-identical to
///    alpha(g, {}) and non-increasing in g (countable alphabets only).
class Kernel {
 public:
  virtual ~Kernel() = default;

  virtual std::string name() const = 0;
  virtual nlohmann::json parameters() const = 0;

  /// Number of letters, or nullopt for the countable alphabet 0, 1, 2, ...
  virtual std::optional<std::size_t> alphabet_size() const = 0;

  virtual double alpha(Letter g, ContextView w) const = 0;

  /// Finite alphabets: out[g] = alpha(g, w) for every letter, bit-identical
  /// to separate alpha calls. Kernels override it to share work.
  virtual void alpha_all(ContextView w, std::span<double> out) const;

  /// First letter from which alpha no longer depends on the window.
  virtual Letter context_bound(ContextView w) const;

  /// True iff the star-free window extends to an admissible history.
  virtual bool admissible_window(ContextView w) const;

  virtual std::string letter_label(Letter g) const { return std::to_string(g); }

  /// Full kernel probability p(g | history) where the finite star-free
  /// history is completed by the kernel's own convention. Kernels that do
  /// not support forward simulation return nullopt.
  virtual std::optional<double> transition(Letter g, ContextView history) const;

  /// Closed-form memory tail s_n, when the kernel is built from one.
  virtual std::optional<double> memory_tail(int n) const;

  /// Closed-form rho_n, when known.
  virtual std::optional<double> rho_closed_form(int n) const;

  /// Closed-form P(|T[0]| > n) for n = 0..n_max, when known.
  virtual std::optional<std::vector<double>> star_tail_closed_form(int n_max) const;

  /// beta(w): the sum of alpha(g, w) in alphabet order. Every sampler
  /// accumulates in the same order, so "star iff u >= beta(w)" holds
  /// bit-exactly.
  double beta(ContextView w) const;

  bool finite() const { return alphabet_size().has_value(); }
};

/// Outcome of one inverse-CDF scan: the symbol plus the upper end of the
/// probability mass examined so far (the threshold for later increments).
struct Draw {
  Symbol symbol;
  double covered = 0.0;
};

/// alpha(* | w) = 1 - beta(w), clamped to [0, 1].
double alpha_star(const Kernel& kernel, ContextView w);

/// Smallest letter g with u < sum_{b <= g} alpha(b, w); star when u >= beta(w).
Draw sample_symbol(const Kernel& kernel, double u, ContextView w);

/// Continues a scan that ended at `covered_old` for context w_old, now that
/// w_new carries more information. Requires u >= covered_old.
Draw sample_symbol_increment(const Kernel& kernel, double u, ContextView w_new,
                             ContextView w_old, double covered_old);

/// Finite alphabets: the same scan as sample_symbol_increment with
/// alpha(. | w_old) supplied in `alphas`. On return `alphas` holds
/// alpha(. | w_new) for every letter scanned (all of them when the result is
/// a star), so it can serve as the next call's old values.
Draw sample_symbol_increment_cached(const Kernel& kernel, double u, ContextView w_new,
                                    std::span<double> alphas, double covered_old);

/// Tolerance for validation assertions only; sampling never uses it.
inline constexpr double kValidationTolerance = 1e-12;

struct Violation {
  std::string kind;  // "monotonicity", "trailing_star", "normalization", "negative"
  Letter letter = 0;
  ContextWindow coarse;
  ContextWindow fine;
  double coarse_value = 0.0;
  double fine_value = 0.0;
};

struct ValidationReport {
  std::string kernel;
  std::size_t trials = 0;
  std::vector<Violation> violations;

  bool passed() const { return violations.empty(); }
};

/// Randomized check of the structural properties every kernel must satisfy.
ValidationReport validate_kernel(const Kernel& kernel, std::size_t trials,
                                 std::uint64_t rng_seed);

/// Random star-free window of the given length that the kernel accepts.
/// Returns nullopt if none was found within a bounded number of attempts.
std::optional<ContextWindow> random_admissible_window(const Kernel& kernel,
                                                      std::size_t length,
                                                      std::mt19937_64& rng);

std::string format_window(const Kernel& kernel, ContextView w);

nlohmann::json to_json(const Kernel& kernel, const ValidationReport& report);

}  // namespace infchain
