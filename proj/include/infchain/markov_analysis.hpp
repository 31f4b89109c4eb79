#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "infchain/kernel.hpp"

namespace infchain {

/// beta_n = 0: the order-n lower-bound matrix is undefined.
class BetaNZero : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Order-n lower-bound Markov chain on the admissible windows of length n.
struct MarkovAnalysis {
  int order = 0;
  double beta_n = 0.0;
  std::vector<ContextWindow> states;  // C, newest first, lexicographic order
  std::vector<double> state_beta;     // beta(w) per state
  /// matrix[s][g] = alpha(g | w_s) / beta(w_s)
  std::vector<std::vector<double>> matrix;
  /// successors[s] = (letter, target state) with positive alpha
  std::vector<std::vector<std::pair<Letter, int>>> successors;
  std::vector<int> component;                 // SCC id per state
  std::vector<std::vector<int>> components;   // members per SCC
  std::vector<int> closed_classes;            // SCC ids without exits
  std::optional<int> period;                  // of the closed class, when unique
  bool nhat_found = false;

  int state_index(ContextView w) const;  // -1 if not in C
  /// Members of the unique closed class (empty unless exactly one exists).
  std::vector<int> closed_class_states() const;
};

/// Enumerates C and builds the order-n matrix; throws BetaNZero when
/// min_{w in C} beta(w) = 0 (the class data are still not computed then).
MarkovAnalysis build_markov_analysis(const Kernel& kernel, int n);

struct NhatResult {
  std::optional<int> nhat;  // empty means NotFound(n_max)
  int n_max = 0;
  std::optional<MarkovAnalysis> analysis;  // at nhat when found
  /// Per order tried: beta_n, number of closed classes (-1 if beta_n = 0).
  std::vector<std::pair<double, int>> tried;
  std::size_t max_closed_classes = 0;
};

NhatResult find_nhat(const Kernel& kernel, int n_max);

/// No m <= m_max satisfied the exact-length reachability condition.
class NotFoundWithin : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Smallest m >= nhat such that from every start window there is a walk of
/// exactly m steps ending at every window of the closed class.
int compute_n0(const MarkovAnalysis& analysis, int m_max);

/// True iff the exact-m reachability condition holds.
bool n0_condition_holds(const MarkovAnalysis& analysis, int m);

nlohmann::json to_json(const Kernel& kernel, const MarkovAnalysis& analysis);

}  // namespace infchain
