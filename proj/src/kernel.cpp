#include "infchain/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace infchain {

namespace {

// Hard stop for countable scans; the gallery kernels stabilise far earlier.
constexpr Letter kCountableScanLimit = 1 << 22;

}  // namespace

Letter Kernel::context_bound(ContextView) const {
  auto n = alphabet_size();
  return n ? static_cast<Letter>(*n) : 0;
}

bool Kernel::admissible_window(ContextView) const { return true; }

void Kernel::alpha_all(ContextView w, std::span<double> out) const {
  const auto n = alphabet_size();
  if (!n || out.size() != *n) throw std::invalid_argument("alpha_all: needs one slot per letter");
  for (Letter g = 0; g < static_cast<Letter>(*n); ++g) out[g] = alpha(g, w);
}

std::optional<double> Kernel::transition(Letter, ContextView) const {
  return std::nullopt;
}

std::optional<double> Kernel::memory_tail(int) const { return std::nullopt; }

std::optional<double> Kernel::rho_closed_form(int) const { return std::nullopt; }

std::optional<std::vector<double>> Kernel::star_tail_closed_form(int) const {
  return std::nullopt;
}

double Kernel::beta(ContextView w) const {
  double cum = 0.0;
  if (auto n = alphabet_size()) {
    for (Letter g = 0; g < static_cast<Letter>(*n); ++g) cum += alpha(g, w);
    return cum;
  }
  const Letter bound = context_bound(w);
  for (Letter g = 0; g < kCountableScanLimit; ++g) {
    const double next = cum + alpha(g, w);
    if (g >= bound && next == cum) return cum;
    cum = next;
  }
  throw KernelContractViolation(name() + ": countable mass did not stabilise");
}

double alpha_star(const Kernel& kernel, ContextView w) {
  return std::clamp(1.0 - kernel.beta(w), 0.0, 1.0);
}

Draw sample_symbol(const Kernel& kernel, double u, ContextView w) {
  if (!(u >= 0.0 && u < 1.0))
    throw std::invalid_argument("sample_symbol: u must lie in [0,1)");
  double cum = 0.0;
  if (auto n = kernel.alphabet_size()) {
    for (Letter g = 0; g < static_cast<Letter>(*n); ++g) {
      cum += kernel.alpha(g, w);
      if (u < cum) return {Symbol::letter(g), cum};
    }
    return {Symbol::star(), cum};
  }
  // Same accumulation and stopping rule as Kernel::beta, so the star region
  // is exactly [beta(w), 1).
  const Letter bound = kernel.context_bound(w);
  for (Letter g = 0; g < kCountableScanLimit; ++g) {
    const double next = cum + kernel.alpha(g, w);
    if (g >= bound && next == cum) return {Symbol::star(), cum};
    cum = next;
    if (u < cum) return {Symbol::letter(g), cum};
  }
  throw KernelContractViolation(kernel.name() + ": countable mass did not stabilise");
}

Draw sample_symbol_increment(const Kernel& kernel, double u, ContextView w_new,
                             ContextView w_old, double covered_old) {
  if (!(u >= 0.0 && u < 1.0))
    throw std::invalid_argument("sample_symbol_increment: u must lie in [0,1)");
  if (u < covered_old)
    throw std::invalid_argument(
        "sample_symbol_increment: u lies below the mass already covered");
  // Past the larger context bound both windows give alpha(g, {}), so every
  // later increment is exactly zero.
  const Letter end = kernel.finite()
                         ? static_cast<Letter>(*kernel.alphabet_size())
                         : std::max(kernel.context_bound(w_new),
                                    kernel.context_bound(w_old));
  double cum = covered_old;
  for (Letter g = 0; g < end; ++g) {
    const double inc = kernel.alpha(g, w_new) - kernel.alpha(g, w_old);
    if (inc < -kValidationTolerance) {
      std::ostringstream msg;
      msg << kernel.name() << ": alpha(" << kernel.letter_label(g) << " | "
          << format_window(kernel, w_new) << ") < alpha(" << kernel.letter_label(g)
          << " | " << format_window(kernel, w_old) << ") by " << -inc;
      throw KernelContractViolation(msg.str());
    }
    cum += inc;
    if (u < cum) return {Symbol::letter(g), cum};
  }
  return {Symbol::star(), cum};
}

Draw sample_symbol_increment_cached(const Kernel& kernel, double u, ContextView w_new,
                                    std::span<double> alphas, double covered_old) {
  if (!kernel.finite() || alphas.size() != *kernel.alphabet_size())
    throw std::invalid_argument("sample_symbol_increment_cached: needs one value per letter");
  if (!(u >= 0.0 && u < 1.0))
    throw std::invalid_argument("sample_symbol_increment_cached: u must lie in [0,1)");
  if (u < covered_old)
    throw std::invalid_argument(
        "sample_symbol_increment_cached: u lies below the mass already covered");
  thread_local std::vector<double> fresh_all;
  fresh_all.resize(alphas.size());
  kernel.alpha_all(w_new, fresh_all);
  double cum = covered_old;
  for (Letter g = 0; g < static_cast<Letter>(alphas.size()); ++g) {
    const double fresh = fresh_all[g];
    const double inc = fresh - alphas[g];
    if (inc < -kValidationTolerance) {
      std::ostringstream msg;
      msg << kernel.name() << ": alpha(" << kernel.letter_label(g) << " | "
          << format_window(kernel, w_new) << ") fell below its value for a coarser window by "
          << -inc;
      throw KernelContractViolation(msg.str());
    }
    alphas[g] = fresh;
    cum += inc;
    if (u < cum) return {Symbol::letter(g), cum};
  }
  return {Symbol::star(), cum};
}

std::optional<ContextWindow> random_admissible_window(const Kernel& kernel,
                                                      std::size_t length,
                                                      std::mt19937_64& rng) {
  auto draw_letter = [&]() -> Letter {
    if (auto n = kernel.alphabet_size()) {
      std::uniform_int_distribution<Letter> pick(0, static_cast<Letter>(*n) - 1);
      return pick(rng);
    }
    // Small letters carry the interesting structure of countable kernels.
    std::geometric_distribution<Letter> pick(0.35);
    return std::min<Letter>(pick(rng), 12);
  };
  // Grow from the oldest symbol towards the newest. Admissibility survives
  // dropping the newest symbols, so a dead end only needs a fresh draw.
  for (int attempt = 0; attempt < 200; ++attempt) {
    ContextWindow w;  // newest first
    bool stuck = false;
    while (w.size() < length && !stuck) {
      stuck = true;
      for (int tries = 0; tries < 64; ++tries) {
        w.insert(w.begin(), Symbol::letter(draw_letter()));
        if (kernel.admissible_window(w)) {
          stuck = false;
          break;
        }
        w.erase(w.begin());
      }
    }
    if (!stuck) return w;
  }
  return std::nullopt;
}

ValidationReport validate_kernel(const Kernel& kernel, std::size_t trials,
                                 std::uint64_t rng_seed) {
  if (trials == 0) throw std::invalid_argument("validate_kernel: trials must be >= 1");
  ValidationReport report;
  report.kernel = kernel.name();
  report.trials = trials;
  std::mt19937_64 rng(rng_seed);
  std::uniform_int_distribution<std::size_t> pick_len(0, 8);
  std::bernoulli_distribution hide(0.4);

  auto letters_for = [&](ContextView a, ContextView b) {
    if (auto n = kernel.alphabet_size()) return static_cast<Letter>(*n);
    return std::max(kernel.context_bound(a), kernel.context_bound(b)) + 3;
  };
  auto record = [&](std::string kind, Letter g, ContextView coarse, ContextView fine,
                    double cv, double fv) {
    report.violations.push_back(
        {std::move(kind), g, ContextWindow(coarse.begin(), coarse.end()),
         ContextWindow(fine.begin(), fine.end()), cv, fv});
  };
  auto check_refinement = [&](ContextView coarse, ContextView fine) {
    const Letter end = letters_for(coarse, fine);
    for (Letter g = 0; g < end; ++g) {
      const double a_coarse = kernel.alpha(g, coarse);
      const double a_fine = kernel.alpha(g, fine);
      if (a_fine < a_coarse - kValidationTolerance)
        record("monotonicity", g, coarse, fine, a_coarse, a_fine);
      if (a_coarse < -kValidationTolerance)
        record("negative", g, coarse, coarse, a_coarse, a_coarse);
    }
  };
  auto check_trailing_star = [&](ContextView w) {
    ContextWindow padded(w.begin(), w.end());
    padded.push_back(Symbol::star());
    const Letter end = letters_for(w, padded);
    for (Letter g = 0; g < end; ++g) {
      const double a = kernel.alpha(g, w);
      const double b = kernel.alpha(g, padded);
      if (std::abs(a - b) > kValidationTolerance)
        record("trailing_star", g, padded, w, b, a);
    }
  };
  auto check_mass = [&](ContextView w) {
    const double mass = kernel.beta(w);
    if (mass > 1.0 + kValidationTolerance) record("normalization", -1, w, w, mass, 1.0);
  };

  for (std::size_t t = 0; t < trials; ++t) {
    auto fine = random_admissible_window(kernel, pick_len(rng), rng);
    if (!fine) continue;
    ContextWindow coarse = *fine;
    for (auto& s : coarse)
      if (hide(rng)) s = Symbol::star();
    std::uniform_int_distribution<std::size_t> pick_prefix(0, fine->size());
    const ContextWindow prefix(fine->begin(),
                               fine->begin() + static_cast<long>(pick_prefix(rng)));

    check_refinement(coarse, *fine);
    check_refinement(prefix, *fine);
    check_refinement(ContextView{}, coarse);
    check_trailing_star(*fine);
    check_trailing_star(coarse);
    check_mass(*fine);
    check_mass(coarse);
    check_mass(ContextView{});
  }
  return report;
}

std::string format_window(const Kernel& kernel, ContextView w) {
  std::string out = "[";
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (i) out += ',';
    out += w[i].is_star() ? std::string("*") : kernel.letter_label(w[i].letter());
  }
  return out + "]";
}

nlohmann::json to_json(const Kernel& kernel, const ValidationReport& report) {
  nlohmann::json j;
  j["kernel"] = report.kernel;
  j["trials"] = report.trials;
  j["passed"] = report.passed();
  auto& list = j["violations"] = nlohmann::json::array();
  for (const auto& v : report.violations) {
    list.push_back({{"kind", v.kind},
                    {"letter", v.letter < 0 ? std::string("-") : kernel.letter_label(v.letter)},
                    {"coarse", format_window(kernel, v.coarse)},
                    {"fine", format_window(kernel, v.fine)},
                    {"coarse_value", v.coarse_value},
                    {"fine_value", v.fine_value}});
  }
  return j;
}

}  // namespace infchain
