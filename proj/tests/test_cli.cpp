#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Scratch directory per test binary run, removed at exit.
struct Scratch {
  fs::path dir;
  Scratch() {
    dir = fs::temp_directory_path() / ("infchain_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
};

const Scratch& scratch() {
  static Scratch s;
  return s;
}

int run(const std::string& args) {
  const std::string cmd = "cd '" + scratch().dir.string() + "' && '" INFCHAIN_CLI "' " + args +
                          " > last_stdout.txt 2> last_stderr.txt";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& name) {
  std::ifstream in(scratch().dir / name, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json load(const std::string& name) { return json::parse(slurp(name)); }

// CSV lines without the '#' preamble.
std::vector<std::string> csv_rows(const std::string& name) {
  std::istringstream in(slurp(name));
  std::vector<std::string> rows;
  for (std::string line; std::getline(in, line);)
    if (!line.empty() && line[0] != '#') rows.push_back(line);
  return rows;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) out.push_back(item);
  if (!s.empty() && s.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

TEST_CASE("sample reproduces the stationary mean") {
  REQUIRE(run("sample --kernel autoregressive --param q=0.5 --param delta=0.3 --k 0 "
              "--reps 100000 --seed 3 --out ar") == 0);
  const json j = load("ar.json");
  CHECK(j["schema_version"] == 1);
  CHECK(j["seed"] == "3");
  CHECK(j["config"]["kernel"] == "autoregressive");
  CHECK(j["completed"] == 100000);
  double p1 = 0.0, se = 0.0;
  for (const auto& m : j["x0_marginal"])
    if (m["letter"] == "1") p1 = m["frequency"], se = m["se"];
  CHECK(std::abs(p1 - 0.7) < 3 * se);
  auto rows = csv_rows("ar.csv");
  CHECK(rows.size() == 100001);
  CHECK(rows[0] == "replication,status,x_0,abs_T0,rounds,uniforms_consumed");
  CHECK(slurp("ar.csv").rfind("# schema_version=1\n", 0) == 0);
}

TEST_CASE("reruns are byte-identical") {
  const std::string args =
      "sample --kernel cyclic4 --algo algo2 --k 2 --reps 200 --seed 17 --out rerun";
  REQUIRE(run(args) == 0);
  const std::string csv = slurp("rerun.csv"), js = slurp("rerun.json");
  REQUIRE(run(args + " --threads 1") == 0);
  CHECK(slurp("rerun.csv") == csv);
  CHECK(slurp("rerun.json") == js);
  REQUIRE(run("diagnose --kernel autoregressive --reps 500 --window 300 --seed 5 --out d1") == 0);
  const std::string d = slurp("d1.json"), dt = slurp("d1_tail.csv");
  REQUIRE(run("diagnose --kernel autoregressive --reps 500 --window 300 --seed 5 --out d1") == 0);
  CHECK(slurp("d1.json") == d);
  CHECK(slurp("d1_tail.csv") == dt);
}

TEST_CASE("zero replications give a header-only CSV") {
  REQUIRE(run("sample --kernel autoregressive --reps 0 --out empty") == 0);
  auto rows = csv_rows("empty.csv");
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].rfind("replication,status", 0) == 0);
  CHECK(load("empty.json")["replications"] == 0);
}

TEST_CASE("algo2 on the flipflop kernel is an assumption violation") {
  CHECK(run("sample --kernel flipflop --algo algo2 --reps 10 --out ff") == 3);
  CHECK(slurp("last_stderr.txt").find("assumption violated") != std::string::npos);
  CHECK(run("sample --kernel cyclic4 --algo algo1 --reps 10 --out c1") == 3);
  CHECK(slurp("last_stderr.txt").find("BetaZeroForAlgo1") != std::string::npos);
}

TEST_CASE("configuration errors exit with 2") {
  CHECK(run("sample --reps 3") == 2);
  CHECK(run("sample --kernel nosuchkernel") == 2);
  CHECK(run("sample --kernel autoregressive --param delta=1.5") == 2);
  CHECK(run("sample --kernel autoregressive --param bogus=1") == 2);
  CHECK(run("sample --kernel autoregressive --algo algo9") == 2);
  CHECK(run("sample --kernel autoregressive --reps -4") == 2);
  CHECK(run("sample --kernel autoregressive --no-such-flag 1") == 2);
  CHECK(run("sample --kernel autoregressive --param novalue") == 2);
  CHECK(run("sample --config missing.cfg") == 2);
  CHECK(run("frobnicate") == 2);
}

TEST_CASE("round budget exits with 4") {
  CHECK(run("sample --kernel autoregressive --reps 200 --max-rounds 1 --out tight") == 4);
  const json j = load("tight.json");
  CHECK(j["budget_exceeded"].get<int>() > 0);
  bool marked = false;
  for (const auto& r : csv_rows("tight.csv")) marked = marked || r.find("budget_exceeded") != std::string::npos;
  CHECK(marked);
}

TEST_CASE("config file with command-line overrides") {
  {
    std::ofstream cfg(scratch().dir / "run.cfg");
    cfg << "# comment\nkernel = autoregressive\nq=0.25\nreps=50\nseed=9\nout=fromfile\n";
  }
  REQUIRE(run("sample --config run.cfg --reps 20") == 0);
  const json j = load("fromfile.json");
  CHECK(j["replications"] == 20);
  CHECK(j["seed"] == "9");
  CHECK(j["kernel"]["parameters"]["theta"]["q"] == 0.25);
  {
    std::ofstream cfg(scratch().dir / "bad.cfg");
    cfg << "kernel autoregressive\n";
  }
  CHECK(run("sample --config bad.cfg") == 2);
}

TEST_CASE("auxiliary chain output") {
  REQUIRE(run("sample --kernel autoregressive --algo auxiliary --horizon 3 --reps 4000 --out aux") == 0);
  const json j = load("aux.json");
  REQUIRE(j["star_frequency"].size() == 4);
  CHECK(std::abs(j["star_frequency"][0]["p_star"].get<double>() - 0.5) < 0.04);
  CHECK(csv_rows("aux.csv")[0] == "replication,status,y_0,y_1,y_2,y_3");
}

TEST_CASE("diagnose writes the rho and tail tables") {
  REQUIRE(run("diagnose --kernel autoregressive --param q=0.5 --rho-depth 10 --reps 2000 "
              "--window 500 --out diag") == 0);
  auto rows = csv_rows("diag_rho.csv");
  REQUIRE(rows.size() == 11);
  double prod = 1.0;
  for (int n = 1; n <= 10; ++n) {
    prod *= 1.0 - std::ldexp(1.0, -n);
    auto f = split(rows[n]);
    CHECK(std::stoi(f[0]) == n);
    CHECK(std::abs(std::stod(f[1]) - prod) <= 1e-12);
  }
  auto tail = csv_rows("diag_tail.csv");
  CHECK(tail.size() == 8);
  CHECK(split(tail[1])[1] == "0.5");
  const json j = load("diag.json");
  CHECK(j["conditions"]["algorithm1_applicable"] == true);
  CHECK(j["renewal"].is_object());
}

TEST_CASE("diagnose flags the flipflop kernel") {
  REQUIRE(run("diagnose --kernel flipflop --out dff") == 0);
  const json j = load("dff.json");
  CHECK(j["conditions"]["algorithm1_applicable"] == false);
  CHECK(j["conditions"]["nhat"].is_null());
  CHECK(j["conditions"]["verdict"].get<std::string>().find("neither") != std::string::npos);
}

TEST_CASE("diagnose with N = 0 writes empty tables") {
  REQUIRE(run("diagnose --kernel autoregressive --rho-depth 0 --reps 0 --window 0 --out dz") == 0);
  CHECK(csv_rows("dz_rho.csv").size() == 1);
}

TEST_CASE("analyze-markov") {
  REQUIRE(run("analyze-markov --kernel cyclic4 --out cy") == 0);
  json j = load("cy.json");
  CHECK(j["nhat"] == 1);
  CHECK(j["n0"] == 2);
  CHECK(j["period"] == 1);
  CHECK(j["closed_classes"] == 1);
  CHECK(csv_rows("cy_matrix.csv").size() == 1 + 12);

  REQUIRE(run("analyze-markov --kernel three_letter_alternating --param restricted=true --out alt") == 0);
  CHECK(load("alt.json")["nhat"] == 1);

  REQUIRE(run("analyze-markov --kernel three_letter_alternating --param restricted=false --out unr") == 0);
  j = load("unr.json");
  CHECK_FALSE(j.contains("nhat"));
  // Three constant windows plus the class of windows without repeats.
  CHECK(j["closed_classes"] == 4);

  CHECK(run("analyze-markov --kernel imitation --out imi") == 3);
}

TEST_CASE("validate") {
  REQUIRE(run("validate --kernel ladder --reps 300 --out val") == 0);
  const json j = load("val.json");
  CHECK(j["validation"]["passed"] == true);
  CHECK(j["validation"]["trials"] == 300);
}
