#include "infchain/markov_analysis.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <queue>

#include <boost/graph/adjacency_list.hpp>
#include <boost/graph/strong_components.hpp>

namespace infchain {

namespace {

constexpr std::uint64_t kMaxStates = 1u << 22;

// All windows of length n over the finite alphabet, newest first, in
// lexicographic order of (w_{-1}, w_{-2}, ...).
std::vector<ContextWindow> all_windows(std::size_t letters, int n) {
  std::uint64_t count = 1;
  for (int i = 0; i < n; ++i) {
    count *= letters;
    if (count > kMaxStates) throw std::length_error("markov analysis: too many windows");
  }
  std::vector<ContextWindow> out;
  out.reserve(count);
  ContextWindow w(static_cast<std::size_t>(n), Symbol::letter(0));
  for (std::uint64_t c = 0; c < count; ++c) {
    out.push_back(w);
    for (int i = n - 1; i >= 0; --i) {
      const Letter next = w[i].letter() + 1;
      if (next < static_cast<Letter>(letters)) {
        w[i] = Symbol::letter(next);
        break;
      }
      w[i] = Symbol::letter(0);
    }
  }
  return out;
}

}  // namespace

int MarkovAnalysis::state_index(ContextView w) const {
  auto it = std::lower_bound(states.begin(), states.end(), w,
                             [](const ContextWindow& a, ContextView b) {
                               return std::lexicographical_compare(
                                   a.begin(), a.end(), b.begin(), b.end(),
                                   [](Symbol x, Symbol y) { return x.letter() < y.letter(); });
                             });
  if (it == states.end() || !std::equal(it->begin(), it->end(), w.begin(), w.end())) return -1;
  return static_cast<int>(it - states.begin());
}

std::vector<int> MarkovAnalysis::closed_class_states() const {
  if (closed_classes.size() != 1) return {};
  return components[closed_classes.front()];
}

MarkovAnalysis build_markov_analysis(const Kernel& kernel, int n) {
  if (n < 1) throw std::invalid_argument("build_markov_analysis: order must be >= 1");
  const auto letters = kernel.alphabet_size();
  if (!letters) throw std::invalid_argument("build_markov_analysis: alphabet must be finite");

  MarkovAnalysis a;
  a.order = n;
  for (auto& w : all_windows(*letters, n))
    if (kernel.admissible_window(w)) a.states.push_back(std::move(w));
  if (a.states.empty()) throw BetaNZero("build_markov_analysis: no admissible window");

  a.beta_n = std::numeric_limits<double>::infinity();
  a.state_beta.reserve(a.states.size());
  for (const auto& w : a.states) {
    a.state_beta.push_back(kernel.beta(w));
    a.beta_n = std::min(a.beta_n, a.state_beta.back());
  }
  if (!(a.beta_n > 0.0))
    throw BetaNZero("beta_" + std::to_string(n) + " = 0 for " + kernel.name());

  const int count = static_cast<int>(a.states.size());
  a.matrix.assign(count, std::vector<double>(*letters, 0.0));
  a.successors.resize(count);
  using G = boost::adjacency_list<boost::vecS, boost::vecS, boost::directedS>;
  G graph(count);
  ContextWindow shifted(static_cast<std::size_t>(n));
  for (int s = 0; s < count; ++s) {
    const auto& w = a.states[s];
    for (Letter g = 0; g < static_cast<Letter>(*letters); ++g) {
      const double al = kernel.alpha(g, w);
      a.matrix[s][g] = al / a.state_beta[s];
      if (!(al > 0.0)) continue;
      shifted[0] = Symbol::letter(g);
      std::copy(w.begin(), w.end() - 1, shifted.begin() + 1);
      const int t = a.state_index(shifted);
      if (t < 0)
        throw KernelContractViolation(kernel.name() + ": positive alpha leads to " +
                                      format_window(kernel, shifted) +
                                      ", which the kernel calls inadmissible");
      a.successors[s].emplace_back(g, t);
      boost::add_edge(s, t, graph);
    }
  }

  a.component.assign(count, 0);
  const int ncomp = boost::strong_components(
      graph, boost::make_iterator_property_map(a.component.begin(),
                                               boost::get(boost::vertex_index, graph)));
  a.components.assign(ncomp, {});
  for (int s = 0; s < count; ++s) a.components[a.component[s]].push_back(s);
  std::vector<char> open(ncomp, 0);
  for (int s = 0; s < count; ++s)
    for (auto [g, t] : a.successors[s])
      if (a.component[t] != a.component[s]) open[a.component[s]] = 1;
  // Report closed classes in order of their smallest state.
  for (int s = 0; s < count; ++s) {
    const int c = a.component[s];
    if (!open[c] && a.components[c].front() == s) a.closed_classes.push_back(c);
  }

  if (a.closed_classes.size() == 1) {
    // Period: gcd over in-class edges of level(u) + 1 - level(v), BFS levels.
    const auto& members = a.components[a.closed_classes.front()];
    const int cls = a.closed_classes.front();
    std::vector<int> level(count, -1);
    std::queue<int> q;
    level[members.front()] = 0;
    q.push(members.front());
    int g = 0;
    while (!q.empty()) {
      const int u = q.front();
      q.pop();
      for (auto [letter, v] : a.successors[u]) {
        if (a.component[v] != cls) continue;
        if (level[v] < 0) {
          level[v] = level[u] + 1;
          q.push(v);
        } else {
          g = std::gcd(g, std::abs(level[u] + 1 - level[v]));
        }
      }
    }
    a.period = g == 0 ? 0 : g;
    a.nhat_found = g == 1;
  }
  return a;
}

NhatResult find_nhat(const Kernel& kernel, int n_max) {
  NhatResult r;
  r.n_max = n_max;
  for (int n = 1; n <= n_max; ++n) {
    try {
      MarkovAnalysis a = build_markov_analysis(kernel, n);
      r.tried.emplace_back(a.beta_n, static_cast<int>(a.closed_classes.size()));
      r.max_closed_classes = std::max(r.max_closed_classes, a.closed_classes.size());
      if (a.nhat_found) {
        r.nhat = n;
        r.analysis = std::move(a);
        return r;
      }
    } catch (const BetaNZero&) {
      r.tried.emplace_back(0.0, -1);
    }
  }
  return r;
}

bool n0_condition_holds(const MarkovAnalysis& a, int m) {
  if (!a.nhat_found) throw std::invalid_argument("n0: analysis has no valid closed class");
  if (m < a.order) return false;
  const auto targets = a.closed_class_states();
  const int count = static_cast<int>(a.states.size());
  std::vector<char> cur(count), next(count);
  for (int start = 0; start < count; ++start) {
    std::fill(cur.begin(), cur.end(), 0);
    cur[start] = 1;
    for (int step = 0; step < m; ++step) {
      std::fill(next.begin(), next.end(), 0);
      for (int s = 0; s < count; ++s)
        if (cur[s])
          for (auto [g, t] : a.successors[s]) next[t] = 1;
      cur.swap(next);
    }
    for (int b : targets)
      if (!cur[b]) return false;
  }
  return true;
}

int compute_n0(const MarkovAnalysis& a, int m_max) {
  if (!a.nhat_found) throw std::invalid_argument("compute_n0: analysis has no valid closed class");
  const auto targets = a.closed_class_states();
  const int count = static_cast<int>(a.states.size());
  // reach[start] = windows reachable in exactly m steps; advanced together.
  std::vector<std::vector<char>> reach(count, std::vector<char>(count, 0));
  for (int s = 0; s < count; ++s) reach[s][s] = 1;
  std::vector<char> next(count);
  for (int m = 1; m <= m_max; ++m) {
    bool ok = m >= a.order;
    for (int start = 0; start < count; ++start) {
      std::fill(next.begin(), next.end(), 0);
      for (int s = 0; s < count; ++s)
        if (reach[start][s])
          for (auto [g, t] : a.successors[s]) next[t] = 1;
      reach[start].swap(next);
      if (ok)
        for (int b : targets)
          if (!reach[start][b]) {
            ok = false;
            break;
          }
    }
    if (ok) return m;
  }
  throw NotFoundWithin("compute_n0: no m <= " + std::to_string(m_max));
}

nlohmann::json to_json(const Kernel& kernel, const MarkovAnalysis& a) {
  nlohmann::json j;
  j["order"] = a.order;
  j["beta_n"] = a.beta_n;
  auto& states = j["states"] = nlohmann::json::array();
  for (const auto& w : a.states) states.push_back(format_window(kernel, w));
  j["matrix"] = a.matrix;
  auto& comps = j["components"] = nlohmann::json::array();
  for (const auto& c : a.components) {
    auto& list = comps.emplace_back(nlohmann::json::array());
    for (int s : c) list.push_back(format_window(kernel, a.states[s]));
  }
  auto& closed = j["closed_classes"] = nlohmann::json::array();
  for (int c : a.closed_classes) {
    auto& list = closed.emplace_back(nlohmann::json::array());
    for (int s : a.components[c]) list.push_back(format_window(kernel, a.states[s]));
  }
  j["period"] = a.period ? nlohmann::json(*a.period) : nlohmann::json(nullptr);
  j["unique_aperiodic_closed_class"] = a.nhat_found;
  return j;
}

}  // namespace infchain
