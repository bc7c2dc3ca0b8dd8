#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <unistd.h>

#include "moedr/commands.hpp"
#include "moedr/data_table.hpp"
#include "moedr/metrics.hpp"
#include "moedr/mixture_model.hpp"
#include "moedr/run_config.hpp"

using namespace moedr;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Fresh directory under the system temp path, removed on destruction.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path = fs::temp_directory_path() / ("moedr-test-" + tag + "-" + std::to_string(::getpid()) + "-" +
                                        std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str(const std::string& name = "") const { return (name.empty() ? path : path / name).string(); }
};

void write(const std::string& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

json read_json(const std::string& path) { return json::parse(read_file(path)); }

std::string strip_wall_time(const std::string& text) {
  std::istringstream in(text);
  std::string line, out;
  while (std::getline(in, line))
    if (line.find("\"wall_time\"") == std::string::npos) out += line + "\n";
  return out;
}

struct Run {
  int code;
  std::string out, err;
};

Run fit_config(const std::string& config) {
  std::ostringstream out, err;
  const int code = cli::cmd_fit({config, std::nullopt}, out, err);
  return {code, out.str(), err.str()};
}

/// Writes a CSV of y ~ 5 + 0.01 N(0, 1) and an intercept-only single Normal config.
std::string constant_mean_setup(const TempDir& dir, double* mean) {
  Rng rng(1);
  std::normal_distribution<double> z;
  Eigen::VectorXd y(400);
  for (auto& v : y) v = 5.0 + 0.01 * z(rng);
  *mean = y.mean();
  DataTable d;
  d.add_numeric("y", y);
  write(dir.str("data.csv"), d.to_csv());
  const json cfg = {
      {"model", {{"family", "normal"}, {"components", 1}}},
      {"optimizer", {{"learning_rate", 0.02}, {"batch_size", 400}, {"max_epochs", 6000}, {"patience", 6000}, {"seed", 3}}},
      {"data", {{"csv", "data.csv"}}},
      {"output", {{"directory", dir.str("out")}}}};
  write(dir.str("config.json"), cfg.dump(2));
  return dir.str("config.json");
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("fit recovers the mean of an intercept-only model") {
    TempDir dir("mean");
    double mean = 0.0;
    const Run r = fit_config(constant_mean_setup(dir, &mean));
    REQUIRE(r.code == cli::kExitOk);
    const json res = read_json(dir.str("out/result.json"));
    CHECK(res["status"] == "ok");
    CHECK(res["coefficients"][0]["name"] == "c1.location:(intercept)");
    CHECK(std::fabs(res["coefficients"][0]["value"].get<double>() - mean) < 1e-3);
    CHECK(res["pi_bar"].size() == 1);
    CHECK(fs::exists(dir.str("out/responsibilities.csv")));
    CHECK(fs::exists(dir.str("out/fitted.csv")));
  }

  TEST_CASE("result files round trip to the same log score") {
    TempDir dir("roundtrip");
    double mean = 0.0;
    REQUIRE(fit_config(constant_mean_setup(dir, &mean)).code == cli::kExitOk);
    const json res = read_json(dir.str("out/result.json"));
    const RunConfig rc = load_run_config(dir.str("config.json"));
    const DataTable data = DataTable::read_csv(dir.str("data.csv"));
    const MixtureModel model(rc.model, data, "y");
    Eigen::VectorXd psi(static_cast<Eigen::Index>(res["psi"].size()));
    for (Eigen::Index k = 0; k < psi.size(); ++k) psi(k) = res["psi"][static_cast<std::size_t>(k)].get<double>();
    // The training rows exclude the validation split only inside the optimizer.
    CHECK(predict_log_density(model, psi, data, data.numeric("y")).mean() == res["train_pls"].get<double>());

    const std::string csv = read_file(dir.str("out/responsibilities.csv"));
    CHECK(csv.rfind("r1\r\n", 0) == 0);
    const DataTable back = DataTable::read_csv(dir.str("out/fitted.csv"));
    CHECK(back.rows() == 400);
    CHECK(back.has("c1.location"));
    CHECK(back.has("pi1"));
  }

  TEST_CASE("config errors exit with code one and name the key") {
    TempDir dir("bad");
    double mean = 0.0;
    const std::string path = constant_mean_setup(dir, &mean);
    json cfg = read_json(path);
    cfg["model"]["family"] = "Cauchy";
    write(path, cfg.dump());
    Run r = fit_config(path);
    CHECK(r.code == cli::kExitConfig);
    CHECK(r.err.find("model") != std::string::npos);

    cfg["model"]["family"] = "normal";
    cfg["optimizer"]["momentum"] = 0.9;
    write(path, cfg.dump());
    r = fit_config(path);
    CHECK(r.code == cli::kExitConfig);
    CHECK(r.err.find("optimizer.momentum") != std::string::npos);

    cfg["optimizer"].erase("momentum");
    cfg["data"]["response"] = "nope";
    write(path, cfg.dump());
    r = fit_config(path);
    CHECK(r.code == cli::kExitConfig);
    CHECK(r.err.find("nope") != std::string::npos);

    CHECK(fit_config(dir.str("missing.json")).code == cli::kExitConfig);
  }

  TEST_CASE("config schema parsing") {
    const json doc = {
        {"model",
         {{"families", {"normal", "laplace"}},
          {"params", {{"location", {{"linear", {"x1"}}, {"smooth", {"x2", {{"vars", {"x3", "x4"}}, {"lambda", 2.0}}}}}},
                      {"scale", {{"intercept", true}}}}},
          {"gating", {{"linear", {"x1"}}}},
          {"xi", 0.01}}},
        {"optimizer", {{"method", "rmsprop"}, {"cyclic_lr", {{"base", 1e-4}, {"max", 1e-2}, {"period", 500}}}}},
        {"data", {{"csv", "d.csv"}, {"test_fraction", 0.2}}},
        {"output", {{"directory", "/tmp/x"}, {"formats", {"json"}}}}};
    const RunConfig rc = parse_run_config(doc, "/base");
    CHECK(rc.model.components() == 2);
    CHECK(rc.model.families[1].kind() == FamilyKind::Laplace);
    CHECK(rc.model.params[0][0].smooth.size() == 2);
    CHECK(rc.model.params[0][0].smooth[0].basis.df == 10.0);
    CHECK(rc.model.params[0][0].smooth[1].vars.size() == 2);
    CHECK_FALSE(rc.model.params[0][0].smooth[1].basis.df.has_value());
    CHECK(rc.model.entropy_xi == 0.01);
    CHECK(rc.optimizer.method == Method::RMSprop);
    CHECK(rc.optimizer.cyclic_lr.has_value());
    CHECK(rc.data.csv == "/base/d.csv");
    CHECK(rc.output.json);
    CHECK_FALSE(rc.output.csv);

    json bad = doc;
    bad["model"]["params"]["rate"] = json::object();
    CHECK_THROWS_AS(parse_run_config(bad, "/base"), SpecError);
  }

  TEST_CASE("fit is deterministic") {
    TempDir dir("det");
    double mean = 0.0;
    const std::string path = constant_mean_setup(dir, &mean);
    json cfg = read_json(path);
    cfg["optimizer"]["max_epochs"] = 50;
    write(path, cfg.dump());
    REQUIRE(fit_config(path).code == cli::kExitOk);
    const std::string first = read_file(dir.str("out/result.json"));
    REQUIRE(fit_config(path).code == cli::kExitOk);
    CHECK(strip_wall_time(first) == strip_wall_time(read_file(dir.str("out/result.json"))));
  }

  TEST_CASE("simulate writes data and truth") {
    TempDir dir("sim");
    SimDesign d;
    d.n = 300;
    d.seed = 7;
    std::ostringstream out, err;
    REQUIRE(cli::cmd_simulate({d, dir.str("a")}, out, err) == cli::kExitOk);
    const DataTable data = DataTable::read_csv(dir.str("a/data.csv"));
    CHECK(data.rows() == 300);
    CHECK(data.has("true_label"));
    const json truth = read_json(dir.str("a/truth.json"));
    for (const auto& p : truth["pi"]) CHECK(p.get<double>() >= 0.03);

    REQUIRE(cli::cmd_simulate({d, dir.str("b")}, out, err) == cli::kExitOk);
    CHECK(read_file(dir.str("a/data.csv")) == read_file(dir.str("b/data.csv")));
    CHECK(read_file(dir.str("a/truth.json")) == read_file(dir.str("b/truth.json")));

    SimDesign o;
    o.scenario = Scenario::OverfitMixture;
    o.pm = 10;
    o.seed = 1;
    REQUIRE(cli::cmd_simulate({o, dir.str("c")}, out, err) == cli::kExitOk);
    const double pi1 = read_json(dir.str("c/truth.json"))["pi"][0].get<double>();
    CHECK(pi1 > 0.06);
    CHECK(pi1 < 0.094);

    SimDesign bad;
    bad.n = 301;
    std::ostringstream e2;
    CHECK(cli::cmd_simulate({bad, dir.str("d")}, out, e2) == cli::kExitConfig);
    CHECK(e2.str().find("2500") != std::string::npos);
  }

  TEST_CASE("benchmark output schema") {
    TempDir dir("bench");
    cli::BenchmarkOptions o;
    o.suite = "em-vs-nmdr";
    o.reps = 2;
    o.quick = true;
    o.output_dir = dir.str("out");
    std::ostringstream out, err;
    REQUIRE(cli::cmd_benchmark(o, out, err) == cli::kExitOk);
    const DataTable metrics = DataTable::read_csv(dir.str("out/metrics.csv"));
    for (const char* c : {"scenario", "method", "rep", "metric", "value"}) CHECK(metrics.has(c));
    const std::vector<std::string>& methods = metrics.column("method").levels;
    for (const char* m : {"EM", "NMDR", "NMDR_3"})
      CHECK(std::find(methods.begin(), methods.end(), m) != methods.end());
    const json summary = read_json(dir.str("out/summary.json"));
    CHECK(summary["reps"] == 2);

    o.suite = "unknown";
    CHECK(cli::cmd_benchmark(o, out, err) == cli::kExitConfig);
  }

  TEST_CASE("entropy path") {
    TempDir dir("path");
    SimDesign d;
    d.scenario = Scenario::OverfitMixture;
    d.n = 300;
    d.pm = 10;
    d.seed = 2;
    std::ostringstream out, err;
    REQUIRE(cli::cmd_simulate({d, dir.str("sim")}, out, err) == cli::kExitOk);
    std::vector<std::string> x;
    for (int k = 1; k <= 10; ++k) x.push_back("x" + std::to_string(k));
    const json pred = {{"linear", x}};
    const json cfg = {{"model", {{"family", "normal"}, {"components", 5}, {"params", {{"location", pred}, {"scale", pred}}}}},
                      {"optimizer", {{"learning_rate", 0.003}, {"max_epochs", 300}, {"patience", 30}, {"seed", 4}}},
                      {"data", {{"csv", "sim/data.csv"}}},
                      {"output", {{"directory", dir.str("fit")}}}};
    write(dir.str("config.json"), cfg.dump(2));

    cli::PathOptions p{dir.str("config.json"), {0.0, 1.0}, dir.str("path")};
    REQUIRE(cli::cmd_path(p, out, err) == cli::kExitOk);
    const DataTable path = DataTable::read_csv(dir.str("path/path.csv"));
    CHECK(path.rows() == 10);
    for (const char* c : {"xi", "component", "pi_hat", "pls"}) CHECK(path.has(c));
    auto entropy = [&](double xi) {
      double h = 0.0;
      for (Eigen::Index i = 0; i < path.rows(); ++i)
        if (path.numeric("xi")(i) == xi) {
          const double p = path.numeric("pi_hat")(i);
          if (p > 0) h -= p * std::log(p);
        }
      return h;
    };
    CHECK(entropy(1.0) < entropy(0.0));

    // A single-point grid at zero reproduces the plain fit.
    cli::PathOptions zero{dir.str("config.json"), {0.0}, dir.str("path0")};
    REQUIRE(cli::cmd_path(zero, out, err) == cli::kExitOk);
    REQUIRE(fit_config(dir.str("config.json")).code == cli::kExitOk);
    const json res = read_json(dir.str("fit/result.json"));
    const DataTable p0 = DataTable::read_csv(dir.str("path0/path.csv"));
    REQUIRE(p0.rows() == 5);
    for (Eigen::Index m = 0; m < 5; ++m)
      CHECK(p0.numeric("pi_hat")(m) == res["pi_bar"][static_cast<std::size_t>(m)].get<double>());

    cli::PathOptions bad{dir.str("config.json"), {1.0, 0.0}, dir.str("bad")};
    CHECK(cli::cmd_path(bad, out, err) == cli::kExitConfig);
  }
}
