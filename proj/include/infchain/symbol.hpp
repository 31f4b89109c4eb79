#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace infchain {

/// Ordinal of a letter in a kernel's declared alphabet order.
using Letter = std::int32_t;

/// An alphabet letter or the star marker for an unknown past position.
class Symbol {
 public:
  constexpr Symbol() = default;

  static constexpr Symbol star() { return Symbol{}; }
  static constexpr Symbol letter(Letter g) { return Symbol{g}; }

  constexpr bool is_star() const { return code_ < 0; }
  constexpr bool is_letter() const { return code_ >= 0; }
  constexpr Letter letter() const { return code_; }

  friend constexpr bool operator==(Symbol, Symbol) = default;

 private:
  constexpr explicit Symbol(Letter g) : code_(g) {}

  Letter code_ = -1;
};

/// Read-only context, newest first: element 0 is time -1, element k is
/// time -(k+1). An empty view means no past is fixed.
using ContextView = std::span<const Symbol>;

/// Owning context window, same newest-first layout as ContextView.
using ContextWindow = std::vector<Symbol>;

/// Length of the window once trailing stars are dropped.
inline std::size_t effective_length(ContextView w) {
  std::size_t n = w.size();
  while (n > 0 && w[n - 1].is_star()) --n;
  return n;
}

/// Equality up to trailing stars.
inline bool same_context(ContextView a, ContextView b) {
  const std::size_t na = effective_length(a);
  if (na != effective_length(b)) return false;
  for (std::size_t i = 0; i < na; ++i)
    if (a[i] != b[i]) return false;
  return true;
}

inline bool star_free(ContextView w) {
  for (Symbol s : w)
    if (s.is_star()) return false;
  return true;
}

/// Builds a window from letter ordinals given newest first; negative
/// entries become stars.
inline ContextWindow make_window(std::initializer_list<int> newest_first) {
  ContextWindow w;
  w.reserve(newest_first.size());
  for (int v : newest_first)
    w.push_back(v < 0 ? Symbol::star() : Symbol::letter(v));
  return w;
}

}  // namespace infchain
