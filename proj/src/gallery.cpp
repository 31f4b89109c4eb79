#include "infchain/gallery.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <sstream>

namespace infchain {

namespace {

constexpr double kSumTolerance = 1e-12;
constexpr std::size_t kHarmonicTable = 4096;
constexpr std::size_t kUnbounded = std::numeric_limits<std::size_t>::max();

void require(bool ok, const std::string& what) {
  if (!ok) throw ParameterError(what);
}

Letter max_known(ContextView w) {
  Letter m = -1;
  for (Symbol s : w)
    if (s.is_letter()) m = std::max(m, s.letter());
  return m;
}

// Extracts the newest `limit` symbols of a star-free history.
ContextView capped(ContextView history, std::size_t limit) {
  return history.first(std::min(history.size(), limit));
}

}  // namespace

// ---------------------------------------------------------------- weights

MemoryWeights::MemoryWeights(Family f, double param, std::vector<double> table)
    : family_(f), param_(param), table_(std::move(table)), support_end_(kUnbounded) {}

MemoryWeights MemoryWeights::geometric(double q) {
  require(q >= 0.0 && q < 1.0, "geometric theta: q must lie in [0,1)");
  std::vector<double> t;
  for (std::size_t j = 0;; ++j) {
    const double v = (1.0 - q) * std::pow(q, static_cast<double>(j));
    if (v == 0.0) break;
    t.push_back(v);
  }
  MemoryWeights m(Family::kGeometric, q, std::move(t));
  m.support_end_ = m.table_.size();
  return m;
}

MemoryWeights MemoryWeights::harmonic(double eps) {
  require(eps > 0.0 && eps < 1.0, "harmonic theta: eps must lie in (0,1)");
  MemoryWeights m(Family::kHarmonic, eps, {});
  m.table_.reserve(kHarmonicTable);
  for (std::size_t j = 0; j < kHarmonicTable; ++j)
    m.table_.push_back(m.tail(j) - m.tail(j + 1));
  return m;
}

MemoryWeights MemoryWeights::list(std::vector<double> theta) {
  require(!theta.empty(), "theta list must not be empty");
  double sum = 0.0;
  for (double v : theta) {
    require(v >= 0.0 && std::isfinite(v), "theta entries must be non-negative");
    sum += v;
  }
  require(std::abs(sum - 1.0) <= kSumTolerance, "theta entries must sum to one");
  while (theta.size() > 1 && theta.back() == 0.0) theta.pop_back();
  MemoryWeights m(Family::kList, 0.0, std::move(theta));
  m.support_end_ = m.table_.size();
  return m;
}

double MemoryWeights::weight(std::size_t j) const {
  if (j < table_.size()) return table_[j];
  if (family_ == Family::kHarmonic) return tail(j) - tail(j + 1);
  return 0.0;
}

double MemoryWeights::tail(std::size_t n) const {
  switch (family_) {
    case Family::kGeometric:
      return std::pow(param_, static_cast<double>(n));
    case Family::kHarmonic:
      return n == 0 ? 1.0 : std::min(1.0, (1.0 - param_) / static_cast<double>(n));
    case Family::kList: {
      double s = 0.0;
      for (std::size_t j = table_.size(); j-- > n;) s += table_[j];
      return n == 0 ? 1.0 : s;
    }
  }
  return 0.0;
}

nlohmann::json MemoryWeights::describe() const {
  switch (family_) {
    case Family::kGeometric:
      return {{"family", "geometric"}, {"q", param_}};
    case Family::kHarmonic:
      return {{"family", "harmonic"}, {"eps", param_}};
    case Family::kList:
      return {{"family", "list"}, {"theta", table_}};
  }
  return {};
}

SpontaneousWeights SpontaneousWeights::geometric(double total, double ratio) {
  require(total > 0.0 && total < 1.0, "c must lie in (0,1)");
  require(ratio >= 0.0 && ratio < 1.0, "c_ratio must lie in [0,1)");
  SpontaneousWeights s;
  s.geometric_ = true;
  s.ratio_ = ratio;
  s.scale_ = total * (1.0 - ratio);
  s.total_ = total;
  return s;
}

SpontaneousWeights SpontaneousWeights::list(std::vector<double> c) {
  require(!c.empty(), "c list must not be empty");
  double total = 0.0;
  for (double v : c) {
    require(v >= 0.0 && std::isfinite(v), "c entries must be non-negative");
    total += v;
  }
  require(total < 1.0, "c entries must sum below one");
  require(c.front() > 0.0, "c_1 must be positive");
  SpontaneousWeights s;
  s.list_ = std::move(c);
  s.total_ = total;
  s.monotone_from_ = static_cast<Letter>(s.list_.size());
  return s;
}

double SpontaneousWeights::weight(Letter index) const {
  if (index < 0 || (cut_ && index >= *cut_)) return 0.0;
  if (geometric_) return scale_ * std::pow(ratio_, static_cast<double>(index));
  return static_cast<std::size_t>(index) < list_.size() ? list_[index] : 0.0;
}

double SpontaneousWeights::tail(Letter index) const {
  if (geometric_ && !cut_) return total_ * std::pow(ratio_, static_cast<double>(index));
  const Letter end = cut_ ? *cut_ : static_cast<Letter>(list_.size());
  double s = 0.0;
  for (Letter g = end; g-- > std::max<Letter>(index, 0);) s += weight(g);
  return s;
}

SpontaneousWeights SpontaneousWeights::truncated(Letter letters) const {
  require(letters >= 1, "truncation must keep at least one letter");
  SpontaneousWeights s = *this;
  s.cut_ = letters;
  s.total_ = 0.0;
  for (Letter g = 0; g < letters; ++g) s.total_ += s.weight(g);
  s.monotone_from_ = std::min(monotone_from_, letters);
  return s;
}

nlohmann::json SpontaneousWeights::describe() const {
  nlohmann::json j;
  if (geometric_) {
    j = {{"family", "geometric"}, {"c", total_}, {"ratio", ratio_}};
  } else {
    j = {{"family", "list"}, {"c_list", list_}};
  }
  if (cut_) j["letters"] = *cut_;
  return j;
}

RunWeights::RunWeights(double kappa) : kappa_(kappa) {
  require(kappa > 0.0 && std::isfinite(kappa), "kappa must be positive");
}

double RunWeights::operator()(std::size_t n) const {
  const double x = static_cast<double>(n);
  return x / (x + kappa_);
}

// ------------------------------------------------------------------ graph

Graph Graph::from_edges(int n, const std::vector<std::pair<int, int>>& edges) {
  require(n >= 1, "graph needs at least one vertex");
  Graph g;
  g.neighbours.resize(n);
  for (int v = 0; v < n; ++v) g.neighbours[v].push_back(v);
  for (auto [a, b] : edges) {
    require(a >= 0 && a < n && b >= 0 && b < n, "edge endpoint out of range");
    g.neighbours[a].push_back(b);
    g.neighbours[b].push_back(a);
  }
  for (auto& nb : g.neighbours) {
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }
  return g;
}

Graph Graph::cycle(int n) {
  require(n >= 3, "cycle needs at least three vertices");
  std::vector<std::pair<int, int>> e;
  for (int v = 0; v < n; ++v) e.emplace_back(v, (v + 1) % n);
  return from_edges(n, e);
}

Graph Graph::complete(int n) {
  std::vector<std::pair<int, int>> e;
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) e.emplace_back(a, b);
  return from_edges(n, e);
}

Graph Graph::star(int leaves) {
  require(leaves >= 1, "star needs at least one leaf");
  std::vector<std::pair<int, int>> e;
  for (int v = 1; v <= leaves; ++v) e.emplace_back(0, v);
  return from_edges(leaves + 1, e);
}

Graph Graph::path(int n) {
  std::vector<std::pair<int, int>> e;
  for (int v = 0; v + 1 < n; ++v) e.emplace_back(v, v + 1);
  return from_edges(n, e);
}

bool Graph::adjacent(int a, int b) const {
  const auto& nb = neighbours[a];
  return std::binary_search(nb.begin(), nb.end(), b);
}

bool Graph::connected() const {
  std::vector<char> seen(neighbours.size(), 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    for (int u : neighbours[v])
      if (!seen[u]) seen[u] = 1, stack.push_back(u);
  }
  return std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; });
}

// ---------------------------------------------------------------- kernels

namespace {

class AutoregressiveKernel final : public Kernel {
 public:
  AutoregressiveKernel(MemoryWeights theta, double delta)
      : theta_(std::move(theta)), delta_(delta) {
    require(delta > 0.0 && delta < 1.0, "delta must lie in (0,1)");
    require(theta_.weight(0) > 0.0, "theta_0 must be positive");
  }

  std::string name() const override { return "autoregressive"; }
  nlohmann::json parameters() const override {
    return {{"theta", theta_.describe()}, {"delta", delta_}};
  }
  std::optional<std::size_t> alphabet_size() const override { return 2; }

  double alpha(Letter g, ContextView w) const override {
    double a = theta_.weight(0) * (g == 1 ? 1.0 - delta_ : delta_);
    const std::size_t end = std::min(w.size(), theta_.support_end());
    for (std::size_t i = 0; i < end; ++i)
      if (w[i].is_letter() && w[i].letter() == g) a += theta_.weight(i + 1);
    return a;
  }

  // Beyond the supplied history the oldest symbol is taken to repeat.
  std::optional<double> transition(Letter g, ContextView history) const override {
    history = capped(history, theta_.support_end());
    double p = alpha(g, history);
    if (!history.empty() && history.back().letter() == g) p += theta_.tail(history.size() + 1);
    return p;
  }

  std::optional<double> memory_tail(int n) const override {
    return theta_.tail(static_cast<std::size_t>(n));
  }
  std::optional<double> rho_closed_form(int n) const override {
    return closed_form::autoregressive_rho(theta_, n);
  }
  std::optional<std::vector<double>> star_tail_closed_form(int n_max) const override {
    return closed_form::autoregressive_star_tail(theta_, n_max);
  }

 private:
  MemoryWeights theta_;
  double delta_;
};

// Imitation kernels; letter index i carries label i + 1. The copy term for
// a memory length L = x_{-1} sums f_L(k) over positions k whose symbol is
// known to equal g; unknown positions are set adversarially to another letter.
class ImitationKernel final : public Kernel {
 public:
  ImitationKernel(std::string name, SpontaneousWeights c, CopyLaw law, double d_rate,
                  std::optional<Letter> max_letter)
      : name_(std::move(name)), c_(std::move(c)), law_(law), d_rate_(d_rate),
        max_letter_(max_letter) {
    if (max_letter_) {
      require(*max_letter_ >= 2, "max_letter must be at least 2");
      c_ = c_.truncated(*max_letter_);
    }
    require(c_.weight(0) > 0.0, "c_1 must be positive");
    require(c_.total() < 1.0, "c must be below one");
    if (law_ == CopyLaw::kSpill)
      require(d_rate_ >= 0.5 && d_rate_ < 1.0, "d_rate must lie in [0.5,1)");
  }

  std::string name() const override { return name_; }
  nlohmann::json parameters() const override {
    nlohmann::json j{{"c", c_.describe()}};
    if (name_ != "imitation") {
      j["law"] = law_ == CopyLaw::kUniform ? "uniform" : "spill";
      j["d_rate"] = d_rate_;
    }
    if (max_letter_) j["max_letter"] = *max_letter_;
    return j;
  }
  std::optional<std::size_t> alphabet_size() const override {
    if (max_letter_) return static_cast<std::size_t>(*max_letter_);
    return std::nullopt;
  }
  std::string letter_label(Letter g) const override { return std::to_string(g + 1); }

  Letter context_bound(ContextView w) const override {
    if (max_letter_) return *max_letter_;
    return std::max(max_known(w) + 1, c_.monotone_from());
  }

  double alpha(Letter g, ContextView w) const override {
    double copy = 0.0;
    if (!w.empty() && w[0].is_letter()) {
      copy = copy_term(g, w, w[0].letter() + 1);
    } else if (max_letter_) {
      copy = std::numeric_limits<double>::infinity();
      for (Letter len = 1; len <= *max_letter_; ++len)
        copy = std::min(copy, copy_term(g, w, len));
    }
    // Countable alphabet with x_{-1} unknown: the memory length can be made
    // arbitrarily large, which drives every copy weight to zero.
    return c_.weight(g) + (1.0 - c_.total()) * copy;
  }

  std::optional<double> transition(Letter g, ContextView history) const override {
    if (history.empty()) return std::nullopt;
    return alpha(g, history);
  }

 private:
  double f(Letter len, std::size_t k) const {
    const double d = 1.0 - std::pow(d_rate_, len);
    if (k <= static_cast<std::size_t>(len)) return d / len;
    return (1.0 - d) * std::ldexp(1.0, -static_cast<int>(k - len));
  }

  // Position 1 (index 0) holds the letter with label len.
  double copy_term(Letter g, ContextView w, Letter len) const {
    auto hit = [&](std::size_t i) {
      if (i == 0) return len - 1 == g;
      return w[i].is_letter() && w[i].letter() == g;
    };
    if (law_ == CopyLaw::kUniform) {
      const std::size_t end = std::min<std::size_t>(w.size() ? w.size() : 1, len);
      int count = 0;
      for (std::size_t i = 0; i < end; ++i) count += hit(i) ? 1 : 0;
      return static_cast<double>(count) / len;
    }
    double s = 0.0;
    const std::size_t end = std::max<std::size_t>(w.size(), 1);
    for (std::size_t i = 0; i < end; ++i)
      if (hit(i)) s += f(len, i + 1);
    return s;
  }

  std::string name_;
  SpontaneousWeights c_;
  CopyLaw law_;
  double d_rate_;
  std::optional<Letter> max_letter_;
};

class LadderKernel final : public Kernel {
 public:
  LadderKernel(SpontaneousWeights c, LadderLaw law) : c_(std::move(c)), law_(law) {
    require(c_.weight(0) > 0.0, "c_1 must be positive");
  }

  std::string name() const override { return "ladder"; }
  nlohmann::json parameters() const override {
    return {{"c", c_.describe()}, {"law", law_ == LadderLaw::kUniform ? "uniform" : "point"}};
  }
  std::optional<std::size_t> alphabet_size() const override { return std::nullopt; }
  std::string letter_label(Letter g) const override { return std::to_string(g + 1); }

  Letter context_bound(ContextView w) const override {
    const Letter y = static_cast<Letter>(resolve(w).value_or(0));
    return std::max({max_known(w) + 1, y, c_.monotone_from()});
  }

  double alpha(Letter g, ContextView w) const override {
    const auto y = resolve(w);
    const double q = y ? law(*y, g) : 0.0;
    return c_.weight(g) + (1.0 - c_.total()) * q;
  }

 private:
  // Y is pinned only when a fully known prefix reaches the ladder threshold.
  // Any unknown symbol before that point can be taken huge, pushing Y past
  // every bound, where both q families vanish.
  static std::optional<std::size_t> resolve(ContextView w) {
    long long excess = 0;
    for (std::size_t m = 1; m <= w.size(); ++m) {
      if (w[m - 1].is_star()) return std::nullopt;
      excess += static_cast<long long>(w[m - 1].letter() + 1) - static_cast<long long>(m);
      if (excess <= 0) return m;
    }
    return std::nullopt;
  }

  double law(std::size_t y, Letter g) const {
    if (law_ == LadderLaw::kUniform)
      return static_cast<std::size_t>(g) < y ? 1.0 / static_cast<double>(y) : 0.0;
    return static_cast<std::size_t>(g) + 1 == y ? 1.0 : 0.0;
  }

  SpontaneousWeights c_;
  LadderLaw law_;
};

// Walk on a graph: stay on c = x_{-1} or move to a neighbour, with copies of
// past positions redirected as in the cyclic example.
class GraphWalkKernel final : public Kernel {
 public:
  GraphWalkKernel(Graph graph, MemoryWeights theta, std::string name)
      : graph_(std::move(graph)), theta_(std::move(theta)), name_(std::move(name)) {
    require(graph_.connected(), "graph must be connected");
    require(theta_.weight(0) > 0.0, "theta_0 must be positive");
    const int n = graph_.size();
    in_s_.assign(static_cast<std::size_t>(n * n), {});
    exit_dist_.assign(static_cast<std::size_t>(n * n), {});
    for (int c = 0; c < n; ++c)
      for (int g : graph_.neighbours[c]) {
        auto& s = in_s_[idx(c, g)];
        s.assign(n, 0);
        if (g == c) {
          for (int v = 0; v < n; ++v) s[v] = (v == c || !graph_.adjacent(c, v)) ? 1 : 0;
        } else {
          s[g] = 1;
        }
        exit_dist_[idx(c, g)] = distances_out(s);
      }
    if (n <= 64) {
      nbr_mask_.assign(n, 0);
      for (int v = 0; v < n; ++v)
        for (int u : graph_.neighbours[v]) nbr_mask_[v] |= std::uint64_t{1} << u;
    }
    if (theta_.support_end() != kUnbounded) {
      std::size_t z = std::max<std::size_t>(theta_.support_end(), 2);
      while (theta_.tail(z) != 0.0) ++z;
      zero_from_ = z;
    }
    for (std::size_t j = 0; j < std::min<std::size_t>(zero_from_, 1 << 16); ++j)
      tail_table_.push_back(theta_.tail(j));
  }

  std::string name() const override { return name_; }
  nlohmann::json parameters() const override {
    nlohmann::json adj = nlohmann::json::array();
    for (const auto& nb : graph_.neighbours) adj.push_back(nb);
    return {{"theta", theta_.describe()}, {"neighbours", adj}};
  }
  std::optional<std::size_t> alphabet_size() const override {
    return static_cast<std::size_t>(graph_.size());
  }

  bool admissible_window(ContextView w) const override {
    for (std::size_t i = 0; i + 1 < w.size(); ++i)
      if (w[i].is_letter() && w[i + 1].is_letter() &&
          !graph_.adjacent(w[i].letter(), w[i + 1].letter()))
        return false;
    return true;
  }

  double alpha(Letter g, ContextView w) const override {
    w = w.first(effective_length(w));
    return alpha_with(g, w, feasibility(w));
  }

  void alpha_all(ContextView w, std::span<double> out) const override {
    w = w.first(effective_length(w));
    const std::uint64_t* f = feasibility(w);
    for (int g = 0; g < graph_.size(); ++g) out[g] = alpha_with(g, w, f);
  }

  // Beyond the supplied history the oldest vertex is taken to repeat.
  std::optional<double> transition(Letter g, ContextView history) const override {
    if (history.empty()) return std::nullopt;
    history = capped(history, theta_.support_end());
    const int c = history[0].letter();
    if (!graph_.adjacent(c, g)) return 0.0;
    const auto& s = in_s_[idx(c, g)];
    double p = theta_.weight(0) / static_cast<double>(graph_.neighbours[c].size());
    for (std::size_t i = 0; i < history.size(); ++i)
      if (s[history[i].letter()]) p += theta_.weight(i + 1);
    if (s[history.back().letter()]) p += theta_.tail(history.size() + 1);
    return p;
  }

  std::optional<double> memory_tail(int n) const override {
    return theta_.tail(static_cast<std::size_t>(n));
  }

 private:
  std::size_t idx(int c, int g) const {
    return static_cast<std::size_t>(c * graph_.size() + g);
  }

  bool linked(int a, int b) const {
    return nbr_mask_.empty() ? graph_.adjacent(a, b) : (nbr_mask_[a] >> b) & 1;
  }

  // Hops from each vertex to the nearest vertex outside s (-1 if none).
  std::vector<int> distances_out(const std::vector<char>& s) const {
    const int n = graph_.size();
    std::vector<int> d(n, -1);
    std::deque<int> queue;
    for (int v = 0; v < n; ++v)
      if (!s[v]) d[v] = 0, queue.push_back(v);
    while (!queue.empty()) {
      const int v = queue.front();
      queue.pop_front();
      for (int u : graph_.neighbours[v])
        if (d[u] < 0) d[u] = d[v] + 1, queue.push_back(u);
    }
    return d;
  }

  double alpha_with(Letter g, ContextView w, const std::uint64_t* feas) const {
    const int n = graph_.size();
    double best = std::numeric_limits<double>::infinity();
    for (int c = 0; c < n; ++c) {
      if (!w.empty() && w[0].is_letter() && w[0].letter() != c) continue;
      best = std::min(best, best_value(g, c, w, feas));
      if (best == 0.0) break;
    }
    // No admissible completion at all: inf over the empty set is zero.
    return std::isinf(best) ? 0.0 : best;
  }

  // feas[p] (p = 1..len): vertices at path position p that extend to a path
  // matching w at positions p+1..len. Null when masks do not fit.
  const std::uint64_t* feasibility(ContextView w) const {
    const int n = graph_.size();
    if (n > 64) return nullptr;
    thread_local std::vector<std::uint64_t> feas;
    const std::size_t len = std::max<std::size_t>(w.size(), 1);
    if (feas.size() < len + 1) feas.resize(len + 1);
    std::uint64_t ok = ~std::uint64_t{0} >> (64 - n);
    feas[len] = ok;
    for (std::size_t j = len; j > 1; --j) {
      const Symbol sym = w[j - 1];
      if (sym.is_letter()) {
        ok = (ok >> sym.letter()) & 1 ? nbr_mask_[sym.letter()] : 0;
      } else {
        std::uint64_t prev = 0;
        for (int v = 0; v < n; ++v)
          if ((ok >> v) & 1) prev |= nbr_mask_[v];
        ok = prev;
      }
      feas[j - 1] = ok;
    }
    return feas.data();
  }

  // Minimal p(g | x) over admissible histories with x_{-1} = c matching w;
  // +inf when no such history exists. Path position j (1-based, newest
  // first) costs theta_j when its vertex lies in S(c, g).
  double best_value(Letter g, int c, ContextView w, const std::uint64_t* feas) const {
    const std::size_t len = std::max<std::size_t>(w.size(), 1);
    const int n = graph_.size();
    const double inf = std::numeric_limits<double>::infinity();
    const bool reachable_g = graph_.adjacent(c, g);
    // Unreachable g costs nothing along any path: only feasibility is left.
    if (!reachable_g && feas) return (feas[1] >> c) & 1 ? 0.0 : inf;
    static const std::vector<char> kNone;
    const auto& s = reachable_g ? in_s_[idx(c, g)] : kNone;
    auto cost = [&](int v, std::size_t j) {
      return reachable_g && s[v] ? theta_.weight(j) : 0.0;
    };

    // Later positions can only matter through feasibility once the costs
    // still to come are too small to move any partial sum: at or past
    // zero_from_ they are zero, and a sum v with v + s_j == v absorbs every
    // later addend (each is at most s_j) without rounding up.
    const bool masks = feas != nullptr;
    auto absorbed = [&](std::size_t j, double v) {
      if (j >= zero_from_) return true;
      return j < tail_table_.size() && v + tail_table_[j] == v;
    };
    std::size_t last = len;

    thread_local std::vector<double> cur, next;
    cur.assign(n, inf);
    next.resize(n);
    // While every surviving path sits on one vertex, track it as a scalar.
    int single = c;
    double value = cost(c, 1);
    auto expand = [&] {
      if (single < 0) return;
      std::fill(cur.begin(), cur.end(), inf);
      if (single < n) cur[single] = value;
      single = -1;
    };
    for (std::size_t j = 2; j <= len; ++j) {
      if (masks && reachable_g) {
        bool stop = true;
        if (single >= 0) {
          stop = single == n || absorbed(j, value);
        } else {
          for (int v = 0; v < n && stop; ++v) stop = std::isinf(cur[v]) || absorbed(j, cur[v]);
        }
        if (stop) {
          last = j - 1;
          break;
        }
      }
      const Symbol sym = w[j - 1];
      if (sym.is_letter()) {
        const int u = sym.letter();
        if (single >= 0) {
          if (single < n && !linked(single, u)) single = n;  // infeasible
          if (single < n) single = u, value += cost(u, j);
          continue;
        }
        double m = inf;
        for (int v : graph_.neighbours[u]) m = std::min(m, cur[v]);
        single = std::isinf(m) ? n : u;
        value = m + cost(u, j);
        continue;
      }
      expand();
      std::fill(next.begin(), next.end(), inf);
      for (int v = 0; v < n; ++v) {
        if (std::isinf(cur[v])) continue;
        for (int u : graph_.neighbours[v]) next[u] = std::min(next[u], cur[v] + cost(u, j));
      }
      std::swap(cur, next);
    }
    expand();
    const bool cut = last < len;

    double best = inf;
    if (cut) {
      const std::uint64_t ok = feas[last];
      for (int v = 0; v < n; ++v)
        if (ok & (std::uint64_t{1} << v)) best = std::min(best, cur[v]);
    } else {
      for (int v = 0; v < n; ++v) {
        if (std::isinf(cur[v])) continue;
        double tail = 0.0;
        if (reachable_g) {
          const int d = exit_dist_[idx(c, g)][v];
          if (d < 0) {
            tail = theta_.tail(len + 1);
          } else {
            for (int i = 1; i < d; ++i) tail += theta_.weight(len + i);
          }
        }
        best = std::min(best, cur[v] + tail);
      }
    }
    if (std::isinf(best) || !reachable_g) return best;
    return theta_.weight(0) / static_cast<double>(graph_.neighbours[c].size()) + best;
  }

  Graph graph_;
  MemoryWeights theta_;
  std::string name_;
  std::vector<std::vector<char>> in_s_;
  std::vector<std::vector<int>> exit_dist_;
  std::vector<std::uint64_t> nbr_mask_;
  std::size_t zero_from_ = kUnbounded;  // theta_j = 0 and s_j = 0 for j >= this
  std::vector<double> tail_table_;      // s_j
};

// Run-length bounds for the current block of equal symbols given x_{-1} = c.
struct RunRange {
  std::size_t lo;
  std::size_t hi;  // kUnbounded when the run may continue past the window
};

RunRange run_range(Letter c, ContextView w) {
  std::size_t lo = 1;
  while (lo < w.size() && w[lo].is_letter() && w[lo].letter() == c) ++lo;
  std::size_t i = 1;
  while (i < w.size() && (w[i].is_star() || w[i].letter() == c)) ++i;
  return {lo, i < w.size() ? i : kUnbounded};
}

std::size_t history_run(ContextView history) {
  std::size_t t = 1;
  while (t < history.size() && history[t] == history[0]) ++t;
  return t;
}

class FlipflopKernel final : public Kernel {
 public:
  explicit FlipflopKernel(RunWeights r) : r_(r) {}

  std::string name() const override { return "flipflop"; }
  nlohmann::json parameters() const override { return {{"kappa", r_.kappa()}}; }
  std::optional<std::size_t> alphabet_size() const override { return 2; }

  double alpha(Letter g, ContextView w) const override {
    double best = 1.0;
    for (Letter c = 0; c < 2; ++c) {
      if (!w.empty() && w[0].is_letter() && w[0].letter() != c) continue;
      const RunRange t = run_range(c, w);
      const double v = g == c ? r_(t.lo) : (t.hi == kUnbounded ? 0.0 : 1.0 - r_(t.hi));
      best = std::min(best, v);
    }
    return best;
  }

  std::optional<double> transition(Letter g, ContextView history) const override {
    if (history.empty()) return std::nullopt;
    const double r = r_(history_run(history));
    return g == history[0].letter() ? r : 1.0 - r;
  }

 private:
  RunWeights r_;
};

class AlternatingKernel final : public Kernel {
 public:
  AlternatingKernel(RunWeights r, bool restricted) : r_(r), restricted_(restricted) {}

  std::string name() const override { return "three_letter_alternating"; }
  nlohmann::json parameters() const override {
    return {{"kappa", r_.kappa()}, {"restricted", restricted_}};
  }
  std::optional<std::size_t> alphabet_size() const override { return 3; }

  bool admissible_window(ContextView w) const override {
    if (!restricted_) return true;
    for (std::size_t i = 0; i + 1 < w.size(); ++i)
      if (w[i].is_letter() && w[i] == w[i + 1]) return false;
    return true;
  }

  double alpha(Letter g, ContextView w) const override {
    if (restricted_) {
      if (!admissible_window(w)) return 0.0;
      if (!w.empty() && w[0].is_letter()) return w[0].letter() != g ? 0.5 : 0.0;
      // x_{-1} may be g unless the symbol before it is known to be g.
      return w.size() > 1 && w[1].is_letter() && w[1].letter() == g ? 0.5 : 0.0;
    }
    double best = 1.0;
    for (Letter c = 0; c < 3; ++c) {
      if (!w.empty() && w[0].is_letter() && w[0].letter() != c) continue;
      const RunRange t = run_range(c, w);
      double v;
      if (g == c) {
        v = t.lo == 1 ? 0.0 : r_(t.lo);
      } else if (t.hi == 1) {
        v = 0.5;
      } else {
        v = t.hi == kUnbounded ? 0.0 : 0.5 * (1.0 - r_(t.hi));
      }
      best = std::min(best, v);
    }
    return best;
  }

  std::optional<double> transition(Letter g, ContextView history) const override {
    if (history.empty()) return std::nullopt;
    const std::size_t t = history_run(history);
    const bool same = g == history[0].letter();
    if (t == 1) return same ? 0.0 : 0.5;
    return same ? r_(t) : 0.5 * (1.0 - r_(t));
  }

 private:
  RunWeights r_;
  bool restricted_;
};

class IidKernel final : public Kernel {
 public:
  explicit IidKernel(std::vector<double> p) : p_(std::move(p)) {
    require(!p_.empty(), "iid needs at least one letter");
    double s = 0.0;
    for (double v : p_) {
      require(v >= 0.0, "iid probabilities must be non-negative");
      s += v;
    }
    require(std::abs(s - 1.0) <= kSumTolerance, "iid probabilities must sum to one");
  }
  std::string name() const override { return "iid"; }
  nlohmann::json parameters() const override { return {{"p", p_}}; }
  std::optional<std::size_t> alphabet_size() const override { return p_.size(); }
  double alpha(Letter g, ContextView) const override { return p_[g]; }
  std::optional<double> transition(Letter g, ContextView) const override { return p_[g]; }

 private:
  std::vector<double> p_;
};

class Markov1Kernel final : public Kernel {
 public:
  explicit Markov1Kernel(std::vector<std::vector<double>> m) : m_(std::move(m)) {
    const std::size_t n = m_.size();
    require(n >= 1, "matrix must be non-empty");
    for (const auto& row : m_) {
      require(row.size() == n, "matrix must be square");
      double s = 0.0;
      for (double v : row) {
        require(v >= 0.0, "matrix entries must be non-negative");
        s += v;
      }
      require(std::abs(s - 1.0) <= kSumTolerance, "matrix rows must sum to one");
    }
    // States admitting an infinite backward path.
    alive_.assign(n, 1);
    for (bool changed = true; changed;) {
      changed = false;
      for (std::size_t v = 0; v < n; ++v) {
        if (!alive_[v]) continue;
        bool has_pred = false;
        for (std::size_t u = 0; u < n && !has_pred; ++u) has_pred = alive_[u] && m_[u][v] > 0.0;
        if (!has_pred) alive_[v] = 0, changed = true;
      }
    }
  }

  std::string name() const override { return "markov1"; }
  nlohmann::json parameters() const override { return {{"matrix", m_}}; }
  std::optional<std::size_t> alphabet_size() const override { return m_.size(); }

  bool admissible_window(ContextView w) const override {
    return !newest_states(w).empty();
  }

  double alpha(Letter g, ContextView w) const override {
    double best = std::numeric_limits<double>::infinity();
    for (Letter c : newest_states(w)) best = std::min(best, m_[c][g]);
    return std::isinf(best) ? 0.0 : best;
  }

  std::optional<double> transition(Letter g, ContextView history) const override {
    if (history.empty()) return std::nullopt;
    return m_[history[0].letter()][g];
  }

 private:
  // States x_{-1} can take in some admissible history matching w.
  std::vector<Letter> newest_states(ContextView w) const {
    const std::size_t n = m_.size();
    const std::size_t len = effective_length(w);
    std::vector<char> cur(alive_);
    for (std::size_t k = len; k-- > 0;) {
      std::vector<char> next(n, 0);
      for (std::size_t v = 0; v < n; ++v) {
        if (w[k].is_letter() && static_cast<std::size_t>(w[k].letter()) != v) continue;
        if (k + 1 == len) {
          next[v] = cur[v];
          continue;
        }
        for (std::size_t u = 0; u < n && !next[v]; ++u) next[v] = cur[u] && m_[u][v] > 0.0;
      }
      cur.swap(next);
    }
    std::vector<Letter> out;
    for (std::size_t v = 0; v < n; ++v)
      if (cur[v]) out.push_back(static_cast<Letter>(v));
    return out;
  }

  std::vector<std::vector<double>> m_;
  std::vector<char> alive_;
};

}  // namespace

KernelPtr make_autoregressive(MemoryWeights theta, double delta) {
  return std::make_shared<AutoregressiveKernel>(std::move(theta), delta);
}
KernelPtr make_imitation(SpontaneousWeights c, std::optional<Letter> max_letter) {
  return std::make_shared<ImitationKernel>("imitation", std::move(c), CopyLaw::kUniform, 0.5,
                                           max_letter);
}
KernelPtr make_imitation_general(SpontaneousWeights c, CopyLaw law, double d_rate,
                                 std::optional<Letter> max_letter) {
  return std::make_shared<ImitationKernel>("imitation_general", std::move(c), law, d_rate,
                                           max_letter);
}
KernelPtr make_ladder(SpontaneousWeights c, LadderLaw law) {
  return std::make_shared<LadderKernel>(std::move(c), law);
}
KernelPtr make_graph_walk(Graph graph, MemoryWeights theta, std::string name) {
  return std::make_shared<GraphWalkKernel>(std::move(graph), std::move(theta), std::move(name));
}
KernelPtr make_cyclic4(MemoryWeights theta) {
  return make_graph_walk(Graph::cycle(4), std::move(theta), "cyclic4");
}
KernelPtr make_flipflop(RunWeights r) { return std::make_shared<FlipflopKernel>(r); }
KernelPtr make_three_letter_alternating(RunWeights r, bool restricted) {
  return std::make_shared<AlternatingKernel>(r, restricted);
}
KernelPtr make_iid(std::vector<double> p) { return std::make_shared<IidKernel>(std::move(p)); }
KernelPtr make_markov1(std::vector<std::vector<double>> matrix) {
  return std::make_shared<Markov1Kernel>(std::move(matrix));
}

// ----------------------------------------------------------- closed forms

namespace closed_form {

double autoregressive_rho(const MemoryWeights& theta, int n) {
  double p = 1.0;
  for (int j = 1; j <= n; ++j) p *= 1.0 - theta.tail(j);
  return p;
}

std::vector<double> autoregressive_star_tail(const MemoryWeights& theta, int n_max) {
  std::vector<double> p(static_cast<std::size_t>(std::max(n_max, 0)) + 1);
  for (int n = 0; n <= n_max; ++n) {
    double v = theta.tail(n + 1);
    for (int j = 1; j <= n; ++j) v += theta.weight(j) * p[n - j];
    p[n] = v;
  }
  return p;
}

double cyclic_rho_tilde_printed(const MemoryWeights& theta, int n) {
  return autoregressive_rho(theta, n + 1);
}

double cyclic_rho_tilde_summed(const MemoryWeights& theta, int n, int class_size) {
  double p = class_size;
  for (int j = 2; j <= n + 1; ++j) p *= 1.0 - theta.tail(j);
  return p;
}

double ladder_rho_lower_bound(const SpontaneousWeights& c, const std::vector<double>& d,
                              int n) {
  double p = 1.0, partial = 0.0;
  for (int k = 1; k <= n; ++k) {
    partial += c.weight(k - 1);
    const double dk = k == 1 ? 0.0 : d.at(static_cast<std::size_t>(k - 2));
    p *= partial + (1.0 - c.total()) * dk;
  }
  return p;
}

}  // namespace closed_form

// --------------------------------------------------------------- registry

double parse_decimal(const std::string& key, const std::string& text) {
  double v = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v))
    throw ParameterError(key + ": not a decimal number: '" + text + "'");
  // More than 17 significant digits cannot survive the trip through double.
  int digits = 0;
  bool leading = true;
  for (const char* p = begin; p != end && *p != 'e' && *p != 'E'; ++p) {
    if (*p < '0' || *p > '9') continue;
    if (leading && *p == '0') continue;
    leading = false;
    ++digits;
  }
  if (digits > 17) throw ParameterError(key + ": precision lost converting '" + text + "'");
  return v;
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep))
    if (!cur.empty()) out.push_back(cur);
  return out;
}

std::vector<double> parse_list(const std::string& key, const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split(s, ',')) out.push_back(parse_decimal(key, item));
  if (out.empty()) throw ParameterError(key + ": empty list");
  return out;
}

long long parse_int(const std::string& key, const std::string& s) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ParameterError(key + ": not an integer: '" + s + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ParameterError(key + ": expected true or false, got '" + s + "'");
}

class Params {
 public:
  Params(const ParamMap& given, const std::vector<std::string>& schema) : given_(given) {
    for (const auto& line : schema) {
      const auto eq = line.find('=');
      const auto colon = line.find(':');
      const std::string key = line.substr(0, eq);
      defaults_[key] = line.substr(eq + 1, colon - eq - 1);
    }
    for (const auto& [k, v] : given_)
      if (!defaults_.count(k)) throw ParameterError("unknown parameter '" + k + "'");
  }
  const std::string& str(const std::string& k) const {
    auto it = given_.find(k);
    return it != given_.end() ? it->second : defaults_.at(k);
  }
  double num(const std::string& k) const { return parse_decimal(k, str(k)); }
  long long integer(const std::string& k) const { return parse_int(k, str(k)); }
  bool flag(const std::string& k) const { return parse_bool(k, str(k)); }

 private:
  const ParamMap& given_;
  std::map<std::string, std::string> defaults_;
};

const std::vector<std::string> kThetaSchema = {
    "theta=geometric: memory weight family (geometric, harmonic, list)",
    "q=0.5: ratio of the geometric family, s_n = q^n",
    "eps=0.5: harmonic family, s_n = min(1, (1-eps)/n)",
    "theta_list=1: comma-separated theta_0, theta_1, ... for the list family"};

const std::vector<std::string> kCSchema = {
    "c_family=geometric: spontaneous weight family (geometric, list)",
    "c=0.5: total spontaneous mass of the geometric family",
    "c_ratio=0.5: ratio of the geometric family",
    "c_list=0.5: comma-separated c_1, c_2, ... for the list family"};

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

MemoryWeights theta_from(const Params& p) {
  const std::string& f = p.str("theta");
  if (f == "geometric") return MemoryWeights::geometric(p.num("q"));
  if (f == "harmonic") return MemoryWeights::harmonic(p.num("eps"));
  if (f == "list") return MemoryWeights::list(parse_list("theta_list", p.str("theta_list")));
  throw ParameterError("theta: unknown family '" + f + "'");
}

SpontaneousWeights c_from(const Params& p) {
  const std::string& f = p.str("c_family");
  if (f == "geometric") return SpontaneousWeights::geometric(p.num("c"), p.num("c_ratio"));
  if (f == "list") return SpontaneousWeights::list(parse_list("c_list", p.str("c_list")));
  throw ParameterError("c_family: unknown family '" + f + "'");
}

std::optional<Letter> max_letter_from(const Params& p) {
  const long long k = p.integer("max_letter");
  if (k == 0) return std::nullopt;
  if (k < 2 || k > 1 << 16) throw ParameterError("max_letter must be 0 or in [2, 65536]");
  return static_cast<Letter>(k);
}

Graph graph_from(const Params& p) {
  const std::string& kind = p.str("graph");
  const long long n = p.integer("vertices");
  if (n < 1 || n > 4096) throw ParameterError("vertices must lie in [1, 4096]");
  const int v = static_cast<int>(n);
  if (kind == "cycle") return Graph::cycle(v);
  if (kind == "complete") return Graph::complete(v);
  if (kind == "star") return Graph::star(v - 1);
  if (kind == "path") return Graph::path(v);
  if (kind == "edges") {
    std::vector<std::pair<int, int>> e;
    for (const auto& item : split(p.str("edges"), ',')) {
      const auto parts = split(item, '-');
      if (parts.size() != 2) throw ParameterError("edges: expected a-b, got '" + item + "'");
      e.emplace_back(static_cast<int>(parse_int("edges", parts[0])),
                     static_cast<int>(parse_int("edges", parts[1])));
    }
    return Graph::from_edges(v, e);
  }
  throw ParameterError("graph: unknown kind '" + kind + "'");
}

std::vector<GalleryEntry> build_gallery() {
  std::vector<GalleryEntry> g;
  g.push_back({"autoregressive", "binary linear autoregressive model (copy position j w.p. theta_j)",
               concat(kThetaSchema, {"delta=0.3: spontaneous draw is 0 with probability delta"}),
               nullptr});
  g.back().build = [schema = g.back().parameters](const ParamMap& m) {
    Params p(m, schema);
    return make_autoregressive(theta_from(p), p.num("delta"));
  };

  g.push_back({"imitation", "copy uniformly one of the last x_{-1} symbols",
               concat(kCSchema, {"max_letter=0: restrict to letters 1..K (0 = countable)"}),
               nullptr});
  g.back().build = [schema = g.back().parameters](const ParamMap& m) {
    Params p(m, schema);
    return make_imitation(c_from(p), max_letter_from(p));
  };

  g.push_back({"imitation_general", "imitation with copy position law f_{x_{-1}}",
               concat(kCSchema, {"law=spill: copy law (uniform, spill)",
                                 "d_rate=0.5: spill law keeps mass 1 - d_rate^m on 1..m",
                                 "max_letter=0: restrict to letters 1..K (0 = countable)"}),
               nullptr});
  g.back().build = [schema = g.back().parameters](const ParamMap& m) {
    Params p(m, schema);
    const std::string& law = p.str("law");
    CopyLaw l;
    if (law == "uniform") l = CopyLaw::kUniform;
    else if (law == "spill") l = CopyLaw::kSpill;
    else throw ParameterError("law: unknown copy law '" + law + "'");
    return make_imitation_general(c_from(p), l, p.num("d_rate"), max_letter_from(p));
  };

  g.push_back({"ladder", "next law q_Y chosen by the ladder time Y of the past",
               concat(kCSchema, {"law=uniform: q_k law (uniform on 1..k, point at k)"}), nullptr});
  g.back().build = [schema = g.back().parameters](const ParamMap& m) {
    Params p(m, schema);
    const std::string& law = p.str("law");
    LadderLaw l;
    if (law == "uniform") l = LadderLaw::kUniform;
    else if (law == "point") l = LadderLaw::kPoint;
    else throw ParameterError("law: unknown ladder law '" + law + "'");
    return make_ladder(c_from(p), l);
  };

  g.push_back({"cyclic4", "nearest-neighbour walk on the 4-cycle with infinite memory",
               kThetaSchema, nullptr});
  g.back().build = [schema = g.back().parameters](const ParamMap& m) {
    Params p(m, schema);
    return make_cyclic4(theta_from(p));
  };

  g.push_back({"graph_walk", "neighbour walk on a connected graph with infinite memory",
               concat(kThetaSchema,
                      {"graph=cycle: graph kind (cycle, complete, star, path, edges)",
                       "vertices=4: number of vertices",
                       "edges=: comma-separated a-b pairs for graph=edges"}),
               nullptr});
  g.back().build = [schema = g.back().parameters](const ParamMap& m) {
    Params p(m, schema);
    return make_graph_walk(graph_from(p), theta_from(p));
  };

  g.push_back({"flipflop", "two-letter hold/flip chain; no unique closed class",
               {"kappa=2: run weights r_n = n/(n+kappa)"}, nullptr});
  g.back().build = [schema = g.back().parameters](const ParamMap& m) {
    Params p(m, schema);
    return make_flipflop(RunWeights(p.num("kappa")));
  };

  g.push_back({"three_letter_alternating", "three-letter run kernel; admissibility matters",
               {"kappa=2: run weights r_n = n/(n+kappa)",
                "restricted=true: restrict histories to no equal neighbours"},
               nullptr});
  g.back().build = [schema = g.back().parameters](const ParamMap& m) {
    Params p(m, schema);
    return make_three_letter_alternating(RunWeights(p.num("kappa")), p.flag("restricted"));
  };

  g.push_back({"iid", "memoryless draws", {"p=0.5,0.5: comma-separated letter probabilities"},
               nullptr});
  g.back().build = [schema = g.back().parameters](const ParamMap& m) {
    Params p(m, schema);
    return make_iid(parse_list("p", p.str("p")));
  };

  g.push_back({"markov1", "order-one Markov chain",
               {"matrix=0.5,0.5;0.5,0.5: rows separated by ';'"}, nullptr});
  g.back().build = [schema = g.back().parameters](const ParamMap& m) {
    Params p(m, schema);
    std::vector<std::vector<double>> rows;
    for (const auto& r : split(p.str("matrix"), ';')) rows.push_back(parse_list("matrix", r));
    return make_markov1(std::move(rows));
  };
  return g;
}

}  // namespace

const std::vector<GalleryEntry>& gallery() {
  static const std::vector<GalleryEntry> entries = build_gallery();
  return entries;
}

KernelPtr make_kernel(const std::string& name, const ParamMap& params) {
  for (const auto& e : gallery())
    if (e.name == name) return e.build(params);
  throw ParameterError("unknown kernel '" + name + "'");
}

}  // namespace infchain
