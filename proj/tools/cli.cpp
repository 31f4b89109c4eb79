// Batch front end: sample, diagnose, analyze-markov, validate.
//
// Every run resolves a flat key=value configuration (file first, then
// command-line flags) and writes <out>.json plus CSV tables. Outputs depend
// only on the resolved configuration, never on thread count or timing.

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "infchain/cftp_coalescence.hpp"
#include "infchain/cftp_spontaneous.hpp"
#include "infchain/diagnostics.hpp"
#include "infchain/gallery.hpp"
#include "infchain/markov_analysis.hpp"
#include "infchain/parallel.hpp"

using namespace infchain;
using nlohmann::json;

namespace {

constexpr int kSchemaVersion = 1;

enum Exit { kOk = 0, kConfigError = 2, kAssumption = 3, kBudget = 4 };

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Keys that configure the run itself; every other key is a kernel parameter.
const std::map<std::string, std::string> kReserved = {
    {"kernel", ""},          {"algo", "algo1"},      {"k", "0"},
    {"reps", "1000"},        {"seed", "1"},          {"out", ""},
    {"max_rounds", "1000000"}, {"truncation", "50"}, {"horizon", "50"},
    {"window", "5000"},      {"rho_depth", "10"},    {"tail_depth", "6"},
    {"n_max", "6"},          {"m_max", "64"},
};

struct Config {
  std::string command;
  std::map<std::string, std::string> run;  // reserved keys, all resolved
  ParamMap params;                         // kernel parameters
  unsigned threads = 0;                    // not echoed: outputs do not depend on it

  const std::string& get(const std::string& key) const { return run.at(key); }

  template <class Int>
  Int integer(const std::string& key, Int lo) const {
    const std::string& s = get(key);
    Int v{};
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
      throw ConfigError(key + ": not an integer: '" + s + "'");
    if (v < lo) throw ConfigError(key + ": must be >= " + std::to_string(lo));
    return v;
  }

  std::uint64_t seed() const { return integer<std::uint64_t>("seed", 0); }

  json echo() const {
    json j;
    j["command"] = command;
    for (const auto& [k, v] : run) j[k] = v;
    j["params"] = json(params);
    return j;
  }
};

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::pair<std::string, std::string> split_assignment(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + text + "'");
  std::string key = trim(text.substr(0, eq)), value = trim(text.substr(eq + 1));
  if (key.empty()) throw ConfigError("empty key in '" + text + "'");
  if (key == "name") key = "kernel";
  return {key, value};
}

void assign(Config& c, const std::string& key, const std::string& value) {
  if (kReserved.count(key))
    c.run[key] = value;
  else
    c.params[key] = value;
}

void load_file(Config& c, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::string line;
  for (int no = 1; std::getline(in, line); ++no) {
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    try {
      const auto [k, v] = split_assignment(line);
      assign(c, k, v);
    } catch (const ConfigError& e) {
      throw ConfigError(path + ":" + std::to_string(no) + ": " + e.what());
    }
  }
}

struct Flags {
  std::string config, kernel, algo, out;
  std::vector<std::string> params;
  std::optional<std::string> k, reps, seed, max_rounds, truncation, horizon, window, rho_depth,
      tail_depth, n_max;
  unsigned threads = 0;
};

Config resolve(const std::string& command, const Flags& f) {
  Config c;
  c.command = command;
  c.run = kReserved;
  if (!f.config.empty()) load_file(c, f.config);
  for (const auto& p : f.params) {
    const auto [k, v] = split_assignment(p);
    if (kReserved.count(k)) throw ConfigError("--param " + k + ": use the dedicated flag");
    c.params[k] = v;
  }
  auto set = [&](const char* key, const std::optional<std::string>& v) {
    if (v) c.run[key] = *v;
  };
  if (!f.kernel.empty()) c.run["kernel"] = f.kernel;
  if (!f.algo.empty()) c.run["algo"] = f.algo;
  if (!f.out.empty()) c.run["out"] = f.out;
  set("k", f.k);
  set("reps", f.reps);
  set("seed", f.seed);
  set("max_rounds", f.max_rounds);
  set("truncation", f.truncation);
  set("horizon", f.horizon);
  set("window", f.window);
  set("rho_depth", f.rho_depth);
  set("tail_depth", f.tail_depth);
  set("n_max", f.n_max);
  if (c.get("kernel").empty()) throw ConfigError("no kernel given (--kernel or kernel=...)");
  if (c.get("out").empty()) c.run["out"] = command;
  c.threads = f.threads;
  return c;
}

KernelPtr build_kernel(const Config& c) {
  try {
    return make_kernel(c.get("kernel"), c.params);
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
}

json header(const Config& c, const Kernel& kernel) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["seed"] = c.get("seed");
  j["config"] = c.echo();
  j["kernel"] = {{"name", kernel.name()}, {"parameters", kernel.parameters()}};
  return j;
}

// Comment lines that precede the CSV header row.
std::string csv_preamble(const Config& c) {
  std::ostringstream o;
  o << "# schema_version=" << kSchemaVersion << "\n# seed=" << c.get("seed") << "\n# config="
    << c.echo().dump() << "\n";
  return o.str();
}

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  return json(v).dump();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << text;
}

void write_json(const std::string& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

double se_of(double p, std::size_t n) { return n ? std::sqrt(p * (1.0 - p) / n) : 0.0; }

// ---------------------------------------------------------------- sample

struct Row {
  std::string status = "ok";
  std::vector<Symbol> symbols;
  std::int64_t abs_T = 0;
  std::uint64_t rounds = 0, uniforms = 0;
};

int cmd_sample(const Config& c) {
  const KernelPtr kernel = build_kernel(c);
  const std::string algo = c.get("algo");
  if (algo != "algo1" && algo != "algo2" && algo != "auxiliary")
    throw ConfigError("algo must be algo1, algo2 or auxiliary");
  const auto k = c.integer<std::int64_t>("k", 0);
  const auto reps = c.integer<std::uint64_t>("reps", 0);
  const auto max_rounds = c.integer<std::uint64_t>("max_rounds", 1);
  const auto horizon = c.integer<std::int64_t>("horizon", 0);
  const std::uint64_t seed = c.seed();
  json summary = header(c, *kernel);
  summary["algorithm"] = algo;

  std::optional<CoalescencePlan> plan;
  if (algo == "algo1" && !(kernel->beta({}) > 0.0))
    throw AssumptionViolated("BetaZeroForAlgo1: beta = 0 for " + kernel->name());
  if (algo == "algo2") {
    plan = prepare_coalescence(*kernel, c.integer<int>("n_max", 1), c.integer<int>("m_max", 1));
    summary["nhat"] = plan->nhat;
    summary["n0"] = plan->n0;
  }

  const std::int64_t len = algo == "auxiliary" ? horizon + 1 : k + 1;
  std::vector<Row> rows(reps);
  parallel_for(reps, c.threads, [&](std::size_t r) {
    const UniformStream stream(seed, r);
    Row& row = rows[r];
    if (algo == "auxiliary") {
      row.symbols = run_auxiliary_chain(*kernel, horizon, stream);
      return;
    }
    try {
      SampleResult s = algo == "algo1"
                           ? run_algorithm1(*kernel, k, stream, {max_rounds})
                           : run_algorithm2(*kernel, *plan, k, stream, {max_rounds});
      row.symbols = std::move(s.symbols);
      row.abs_T = -s.record.at(0);
      row.rounds = s.record.rounds_used;
      row.uniforms = s.record.uniforms_consumed;
    } catch (const MaxRoundsExceeded& e) {
      row.status = "budget_exceeded";
      row.symbols = e.partial;
      row.rounds = e.rounds;
    }
  });

  std::ostringstream csv;
  csv << csv_preamble(c) << "replication,status";
  const std::string prefix = algo == "auxiliary" ? "y_" : "x_";
  for (std::int64_t i = 0; i < len; ++i)
    csv << "," << prefix << (algo == "auxiliary" ? i : i - k);
  if (algo != "auxiliary") csv << "," << (algo == "algo2" ? "abs_T_tilde0" : "abs_T0")
                               << ",rounds,uniforms_consumed";
  csv << "\n";
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Row& row = rows[r];
    csv << r << "," << row.status;
    for (Symbol s : row.symbols) csv << "," << (s.is_letter() ? kernel->letter_label(s.letter()) : "*");
    if (algo != "auxiliary") {
      if (row.status == "ok")
        csv << "," << row.abs_T << "," << row.rounds << "," << row.uniforms;
      else
        csv << ",,," << row.rounds;
    }
    csv << "\n";
  }

  std::size_t ok = 0;
  for (const Row& row : rows) ok += row.status == "ok";
  summary["replications"] = reps;
  summary["completed"] = ok;
  summary["budget_exceeded"] = reps - ok;

  if (algo == "auxiliary") {
    json tail = json::array();
    for (std::int64_t n = 0; n <= horizon; ++n) {
      std::size_t stars = 0;
      for (const Row& row : rows) stars += row.symbols[n].is_star();
      const double p = reps ? static_cast<double>(stars) / reps : 0.0;
      tail.push_back({{"n", n}, {"p_star", p}, {"se", se_of(p, reps)}});
    }
    summary["star_frequency"] = tail;
  } else {
    std::map<Letter, std::size_t> counts;
    double sum_T = 0.0, sum_T2 = 0.0;
    for (const Row& row : rows) {
      if (row.status != "ok") continue;
      ++counts[row.symbols.back().letter()];
      sum_T += row.abs_T;
      sum_T2 += static_cast<double>(row.abs_T) * row.abs_T;
    }
    json marginal = json::array();
    for (const auto& [g, n] : counts) {
      const double p = static_cast<double>(n) / ok;
      marginal.push_back({{"letter", kernel->letter_label(g)}, {"count", n}, {"frequency", p},
                          {"se", se_of(p, ok)}});
    }
    summary["x0_marginal"] = marginal;
    if (ok) {
      const double mean = sum_T / ok;
      const double var = ok > 1 ? (sum_T2 - ok * mean * mean) / (ok - 1) : 0.0;
      summary["mean_abs_T0"] = mean;
      summary["mean_abs_T0_se"] = std::sqrt(std::max(var, 0.0) / ok);
      summary["abs_T0_unit"] = algo == "algo2" ? "windows" : "time steps";
    }
  }

  const std::string out = c.get("out");
  write_file(out + ".csv", csv.str());
  write_json(out + ".json", summary);
  if (ok < reps && algo != "auxiliary") {
    std::cerr << "error: MaxRoundsExceeded in " << (reps - ok) << " of " << reps
              << " replications\n";
    return kBudget;
  }
  return kOk;
}

// -------------------------------------------------------------- diagnose

// Deepest enumeration (branching^depth nodes) that fits the budget.
int affordable_depth(double branching, int wanted, std::uint64_t budget) {
  int d = 0;
  double nodes = 1.0, level = 1.0;
  while (d < wanted) {
    level *= branching;
    if (nodes + level > static_cast<double>(budget)) break;
    nodes += level;
    ++d;
  }
  return d;
}

int cmd_diagnose(const Config& c) {
  const KernelPtr kernel = build_kernel(c);
  const int rho_depth = c.integer<int>("rho_depth", 0);
  const int tail_depth = c.integer<int>("tail_depth", 0);
  const auto reps = c.integer<std::uint64_t>("reps", 0);
  const auto truncation = c.integer<Letter>("truncation", 1);
  const auto horizon = c.integer<std::int64_t>("horizon", 0);
  const auto window = c.integer<std::int64_t>("window", 0);
  const auto max_rounds = c.integer<std::uint64_t>("max_rounds", 1);
  const std::uint64_t seed = c.seed();
  const EnumerationBudget budget;
  json report = header(c, *kernel);

  ConditionReport cond = check_theorem_conditions(*kernel, rho_depth, budget,
                                                  c.integer<int>("n_max", 1));
  report["conditions"] = to_json(cond);

  std::ostringstream rho_csv;
  rho_csv << csv_preamble(c) << "n,rho,rho_tail_bound,rho_method,rho_partial_sum,rho_tilde\n";
  const std::size_t rows = std::max(cond.rho.size(), cond.rho_tilde.size());
  for (std::size_t i = 0; i < rows; ++i) {
    rho_csv << i + 1 << ",";
    if (i < cond.rho.size())
      rho_csv << num(cond.rho[i].value) << "," << num(cond.rho[i].tail_bound) << ","
              << cond.rho[i].method << "," << num(cond.rho_partial_sums[i]);
    else
      rho_csv << ",,,";
    rho_csv << "," << (i < cond.rho_tilde.size() ? num(cond.rho_tilde[i].value) : "") << "\n";
  }

  // Exact tail of |T[0]| against Algorithm 1 frequencies.
  std::ostringstream tail_csv;
  tail_csv << csv_preamble(c) << "n,exact_tail,tail_bound,method,mc_tail,mc_se,within_4se\n";
  json notes = json::array();
  std::vector<OracleValue> exact;
  {
    const double branching = (kernel->finite() ? *kernel->alphabet_size() : truncation) + 1.0;
    int depth = tail_depth;
    if (!kernel->star_tail_closed_form(0))
      depth = std::min(depth, affordable_depth(branching, tail_depth, budget.max_nodes));
    if (depth < tail_depth)
      notes.push_back("exact tail enumeration limited to n <= " + std::to_string(depth));
    exact = exact_T0_tail_sequence(*kernel, depth, truncation, budget);
  }
  std::vector<std::int64_t> absT;
  const bool algo1 = kernel->beta({}) > 0.0;
  if (algo1 && reps > 0) {
    absT.assign(reps, -1);
    parallel_for(reps, c.threads, [&](std::size_t r) {
      try {
        absT[r] = -run_algorithm1(*kernel, 0, UniformStream(seed, r), {max_rounds}).record.at(0);
      } catch (const MaxRoundsExceeded&) {
      }
    });
  }
  std::size_t exceeded = std::count(absT.begin(), absT.end(), -1);
  for (std::size_t n = 0; n < exact.size(); ++n) {
    tail_csv << n << "," << num(exact[n].value) << "," << num(exact[n].tail_bound) << ","
             << exact[n].method;
    if (!absT.empty()) {
      std::size_t above = exceeded;
      for (auto t : absT) above += t > static_cast<std::int64_t>(n);
      const double p = static_cast<double>(above) / reps;
      const double se = se_of(exact[n].value, reps);
      const bool agree = std::abs(p - exact[n].value) <= 4.0 * se + exact[n].tail_bound;
      tail_csv << "," << num(p) << "," << num(se_of(p, reps)) << "," << (agree ? 1 : 0);
    } else {
      tail_csv << ",,,";
    }
    tail_csv << "\n";
  }
  report["tail_replications"] = absT.size();
  report["tail_budget_exceeded"] = absT.empty() ? 0 : exceeded;

  if (algo1 && window > 0) {
    try {
      RenewalReport rr = renewal_diagnostic(*kernel, horizon, window, UniformStream(seed, reps));
      report["renewal"] = to_json(rr);
    } catch (const MaxRoundsExceeded& e) {
      notes.push_back(std::string("renewal run: ") + e.what());
    } catch (const ExplosionGuard& e) {
      notes.push_back(std::string("renewal truncation bias: ") + e.what());
    }
  } else {
    report["renewal"] = nullptr;
  }
  report["notes"] = notes;

  const std::string out = c.get("out");
  write_json(out + ".json", report);
  write_file(out + "_rho.csv", rho_csv.str());
  write_file(out + "_tail.csv", tail_csv.str());
  return kOk;
}

// -------------------------------------------------------- analyze-markov

int cmd_analyze_markov(const Config& c) {
  const KernelPtr kernel = build_kernel(c);
  if (!kernel->finite())
    throw AssumptionViolated(kernel->name() + ": Markov analysis needs a finite alphabet");
  const int n_max = c.integer<int>("n_max", 1);
  NhatResult found = find_nhat(*kernel, n_max);
  json report = header(c, *kernel);
  json tried = json::array();
  for (std::size_t i = 0; i < found.tried.size(); ++i)
    tried.push_back({{"order", i + 1},
                     {"beta_n", found.tried[i].first},
                     {"closed_classes",
                      found.tried[i].second < 0 ? json(nullptr) : json(found.tried[i].second)}});
  report["orders_tried"] = tried;
  report["n_max"] = n_max;
  // nhat and n0 are left out entirely when no order qualifies.
  if (found.nhat) report["nhat"] = *found.nhat;
  report["closed_classes"] = found.max_closed_classes;

  std::ostringstream csv;
  csv << csv_preamble(c) << "state,letter,target,probability\n";
  if (found.nhat) {
    const MarkovAnalysis& a = *found.analysis;
    report["closed_classes"] = a.closed_classes.size();
    report["period"] = a.period ? json(*a.period) : json(nullptr);
    try {
      report["n0"] = compute_n0(a, c.integer<int>("m_max", 1));
    } catch (const NotFoundWithin& e) {
      report["n0_error"] = e.what();
    }
    report["analysis"] = to_json(*kernel, a);
    ContextWindow next(static_cast<std::size_t>(a.order));
    for (std::size_t s = 0; s < a.states.size(); ++s)
      for (auto [g, t] : a.successors[s])
        csv << format_window(*kernel, a.states[s]) << "," << kernel->letter_label(g) << ","
            << format_window(*kernel, a.states[t]) << "," << num(a.matrix[s][g]) << "\n";
  }
  const std::string out = c.get("out");
  write_json(out + ".json", report);
  write_file(out + "_matrix.csv", csv.str());
  return kOk;
}

// -------------------------------------------------------------- validate

int cmd_validate(const Config& c) {
  const KernelPtr kernel = build_kernel(c);
  const ValidationReport v = validate_kernel(*kernel, c.integer<std::size_t>("reps", 0), c.seed());
  json report = header(c, *kernel);
  report["validation"] = to_json(*kernel, v);
  write_json(c.get("out") + ".json", report);
  if (!v.passed()) {
    std::cerr << "error: " << v.violations.size() << " kernel property violations\n";
    return kAssumption;
  }
  return kOk;
}

void add_common(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config, "flat key=value configuration file");
  sub->add_option("--kernel", f.kernel, "gallery kernel name");
  sub->add_option("--param", f.params, "kernel parameter key=val (repeatable)");
  sub->add_option("--algo", f.algo, "algo1 | algo2 | auxiliary");
  sub->add_option("--k", f.k, "sample X_{-k..0}");
  sub->add_option("--reps", f.reps, "replications (validate: randomized trials)");
  sub->add_option("--seed", f.seed, "master seed");
  sub->add_option("--out", f.out, "output path prefix");
  sub->add_option("--max-rounds", f.max_rounds, "round budget per replication");
  sub->add_option("--truncation", f.truncation, "letters enumerated for countable alphabets");
  sub->add_option("--horizon", f.horizon, "renewal horizon H / auxiliary chain length");
  sub->add_option("--window", f.window, "renewal window W");
  sub->add_option("--rho-depth", f.rho_depth, "N for the rho tables");
  sub->add_option("--tail-depth", f.tail_depth, "largest n for the exact tail table");
  sub->add_option("--n-max", f.n_max, "largest Markov order searched");
  sub->add_option("--threads", f.threads, "worker threads (0 = all cores)");
}

std::string gallery_help() {
  std::ostringstream o;
  o << "\nKernels:\n";
  for (const auto& e : gallery()) {
    o << "  " << e.name << "  " << e.summary << "\n";
    for (const auto& p : e.parameters) o << "      " << p << "\n";
  }
  return o.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Perfect sampling for chains of infinite order"};
  app.footer(gallery_help());
  app.require_subcommand(1);
  Flags flags;
  std::map<CLI::App*, std::function<int(const Config&)>> commands;
  auto add = [&](const char* name, const char* help, std::function<int(const Config&)> fn) {
    CLI::App* sub = app.add_subcommand(name, help);
    add_common(sub, flags);
    commands[sub] = std::move(fn);
  };
  add("sample", "perfect samples of X_{-k..0}", cmd_sample);
  add("diagnose", "condition report, rho and tail tables, renewal check", cmd_diagnose);
  add("analyze-markov", "lower-bound Markov chain analysis (nhat, n0)", cmd_analyze_markov);
  add("validate", "randomized kernel property checks", cmd_validate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    for (auto& [sub, fn] : commands)
      if (sub->parsed()) return fn(resolve(sub->get_name(), flags));
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const ParameterError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const AssumptionViolated& e) {
    std::cerr << "assumption violated: " << e.what() << "\n";
    return kAssumption;
  } catch (const ExplosionGuard& e) {
    std::cerr << "budget exceeded: " << e.what() << "\n";
    return kBudget;
  }
  return kConfigError;
}
