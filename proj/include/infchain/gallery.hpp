#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "infchain/kernel.hpp"

namespace infchain {

using KernelPtr = std::shared_ptr<const Kernel>;

/// Raised for invalid gallery parameters.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Memory weights theta_0, theta_1, ... summing to one, with tails
/// s_n = sum_{j >= n} theta_j.
class MemoryWeights {
 public:
  /// theta_j = (1 - q) q^j, so s_n = q^n.
  static MemoryWeights geometric(double q);
  /// s_n = min(1, (1 - eps) / n) for n >= 1: infinite mean memory.
  static MemoryWeights harmonic(double eps);
  /// Finite list theta_0..theta_{m-1}; zero afterwards.
  static MemoryWeights list(std::vector<double> theta);

  double weight(std::size_t j) const;
  double tail(std::size_t n) const;

  /// theta_j == 0.0 for every j >= support_end() (in double arithmetic).
  std::size_t support_end() const { return support_end_; }

  nlohmann::json describe() const;

 private:
  enum class Family { kGeometric, kHarmonic, kList };
  MemoryWeights(Family f, double param, std::vector<double> table);

  Family family_;
  double param_;
  std::vector<double> table_;  // theta_j for j < table_.size()
  std::size_t support_end_;
};

/// Spontaneous weights c_1, c_2, ... of the imitation-type kernels, stored
/// by letter index (index 0 is letter 1). Their total c is below one.
class SpontaneousWeights {
 public:
  /// c_g = total (1 - r) r^{g-1}.
  static SpontaneousWeights geometric(double total, double ratio);
  static SpontaneousWeights list(std::vector<double> c);

  double weight(Letter index) const;
  double total() const { return total_; }
  /// Sum of c over letter indices >= index.
  double tail(Letter index) const;
  /// Letters at or beyond this index have non-increasing weights.
  Letter monotone_from() const { return monotone_from_; }
  /// Restricts to the first `letters` letters, renormalising nothing.
  SpontaneousWeights truncated(Letter letters) const;

  nlohmann::json describe() const;

 private:
  bool geometric_ = false;
  double ratio_ = 0.0;
  double scale_ = 0.0;
  std::vector<double> list_;
  std::optional<Letter> cut_;
  double total_ = 0.0;
  Letter monotone_from_ = 0;
};

/// r_n = n / (n + kappa): increasing to one, with sum_n prod_{j<=n} r_j
/// finite exactly when kappa > 1.
class RunWeights {
 public:
  explicit RunWeights(double kappa);
  double operator()(std::size_t n) const;
  double kappa() const { return kappa_; }

 private:
  double kappa_;
};

/// Copy-position laws f_m of the generalized imitation kernel.
enum class CopyLaw {
  kUniform,  // f_m uniform on {1..m}
  kSpill,    // mass d_m = 1 - rate^m uniform on {1..m}, rest geometric(1/2) beyond m
};

/// Laws q_k of the ladder kernel.
enum class LadderLaw {
  kUniform,  // q_k uniform on {1..k}
  kPoint,    // q_k = delta_k
};

/// Undirected graph on vertices 0..n-1; every vertex is its own neighbour.
struct Graph {
  std::vector<std::vector<int>> neighbours;  // sorted, includes the vertex

  static Graph cycle(int n);
  static Graph complete(int n);
  static Graph star(int leaves);
  static Graph path(int n);
  static Graph from_edges(int n, const std::vector<std::pair<int, int>>& edges);

  int size() const { return static_cast<int>(neighbours.size()); }
  bool adjacent(int a, int b) const;
  bool connected() const;
};

KernelPtr make_autoregressive(MemoryWeights theta, double delta);
KernelPtr make_imitation(SpontaneousWeights c, std::optional<Letter> max_letter = {});
KernelPtr make_imitation_general(SpontaneousWeights c, CopyLaw law, double d_rate,
                                 std::optional<Letter> max_letter = {});
KernelPtr make_ladder(SpontaneousWeights c, LadderLaw law);
KernelPtr make_graph_walk(Graph graph, MemoryWeights theta, std::string name = "graph_walk");
KernelPtr make_cyclic4(MemoryWeights theta);
KernelPtr make_flipflop(RunWeights r);
KernelPtr make_three_letter_alternating(RunWeights r, bool restricted);
/// Memoryless kernel: alpha(g | w) = p_g for every window (beta = 1).
KernelPtr make_iid(std::vector<double> p);
/// Order-one Markov chain; admissible histories follow positive transitions.
KernelPtr make_markov1(std::vector<std::vector<double>> matrix);

/// Closed forms used as cross-checks.
namespace closed_form {

/// prod_{j=1}^{n} (1 - s_j).
double autoregressive_rho(const MemoryWeights& theta, int n);
/// P(|T[0]| > n) for the autoregressive kernel via the renewal recursion
/// p_n = sum_{j=1}^{n} theta_j p_{n-j} + s_{n+1}, p_0 = s_1.
std::vector<double> autoregressive_star_tail(const MemoryWeights& theta, int n_max);
/// prod_{j=1}^{n+1} (1 - s_j), the value printed for the cyclic kernel.
double cyclic_rho_tilde_printed(const MemoryWeights& theta, int n);
/// |U| prod_{j=2}^{n+1} (1 - s_j): the sum over the closed class as defined.
double cyclic_rho_tilde_summed(const MemoryWeights& theta, int n, int class_size);
/// c_1 (c_1 + c_2 + (1-c) d_1) ... (c_1 + ... + c_n + (1-c) d_{n-1}), d_0 = 0.
double ladder_rho_lower_bound(const SpontaneousWeights& c, const std::vector<double>& d,
                              int n);

}  // namespace closed_form

using ParamMap = std::map<std::string, std::string>;

struct GalleryEntry {
  std::string name;
  std::string summary;
  std::vector<std::string> parameters;  // "key=default: meaning"
  std::function<KernelPtr(const ParamMap&)> build;
};

const std::vector<GalleryEntry>& gallery();

/// Builds a gallery kernel by name; unknown names or keys raise ParameterError.
KernelPtr make_kernel(const std::string& name, const ParamMap& params);

/// Parses a probability-like decimal, rejecting text that does not
/// survive conversion to double.
double parse_decimal(const std::string& key, const std::string& text);

}  // namespace infchain
