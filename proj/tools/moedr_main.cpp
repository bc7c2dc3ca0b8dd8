#include <CLI11.hpp>

#include <iostream>

#include "moedr/commands.hpp"
#include "moedr/error.hpp"

int main(int argc, char** argv) {
  using namespace moedr;
  using namespace moedr::cli;

  CLI::App app{"moedr: mixture-of-experts distributional regression"};
  app.require_subcommand(1);

  FitOptions fit_opts;
  std::string fit_out;
  auto* fit = app.add_subcommand("fit", "Fit a model from a JSON config");
  fit->add_option("config", fit_opts.config, "Config file")->required();
  fit->add_option("-o,--output", fit_out, "Output directory (overrides the config)");

  SimulateOptions sim;
  sim.output_dir = default_output_dir();
  std::string scenario = "linear", family = "normal", weights = "uniform";
  long long sim_n = -1;
  auto* simc = app.add_subcommand("simulate", "Draw a simulated dataset");
  simc->add_option("--scenario", scenario, "linear, additive or overfit");
  simc->add_option("-n", sim_n, "Rows (default 300; 2500 for additive)");
  simc->add_option("-M,--components", sim.design.components, "True number of components");
  simc->add_option("--pm", sim.design.pm, "Covariates per predictor");
  simc->add_option("--family", family, "normal, laplace, logistic or poisson");
  simc->add_option("--scale", sim.design.scale, "Additive design: 2 or 4");
  simc->add_option("--weights", weights, "Additive design: uniform or unequal");
  simc->add_option("--noise-vars", sim.design.noise_vars, "Additive design: 3 or 10");
  simc->add_option("--seed", sim.design.seed, "Seed");
  simc->add_option("-o,--output", sim.output_dir, "Output directory");

  BenchmarkOptions bench;
  bench.output_dir = default_output_dir();
  auto* benchc = app.add_subcommand("benchmark", "Run a simulation benchmark suite");
  benchc->add_option("suite", bench.suite, "em-vs-nmdr, optimizers, additive or sparsity")->required();
  benchc->add_option("--reps", bench.reps, "Replications per setting");
  benchc->add_option("--seed", bench.seed, "Base seed; replication r uses seed + r");
  benchc->add_option("--threads", bench.threads, "Worker threads");
  benchc->add_flag("--quick", bench.quick, "Reduced grid");
  benchc->add_option("-o,--output", bench.output_dir, "Output directory");

  PathOptions path;
  std::string path_out;
  auto* pathc = app.add_subcommand("path", "Entropy penalty path with warm starts");
  pathc->add_option("config", path.config, "Config file")->required();
  pathc->add_option("--xi", path.xi, "Non-decreasing xi grid")->required()->delimiter(',');
  pathc->add_option("-o,--output", path_out, "Output directory (overrides the config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  if (*fit) {
    if (!fit_out.empty()) fit_opts.output_dir = fit_out;
    return cmd_fit(fit_opts, std::cout, std::cerr);
  }
  if (*simc) {
    try {
      sim.design.scenario = scenario_from_name(scenario);
      sim.design.family = family_from_name(family).kind();
      if (weights != "uniform" && weights != "unequal")
        throw SpecError("--weights must be one of {uniform, unequal}");
      sim.design.uniform_weights = weights == "uniform";
    } catch (const Error& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kExitConfig;
    }
    if (sim.design.scenario == Scenario::AdditiveMixture) {
      if (!simc->count("-M")) sim.design.components = 3;
    } else if (sim.design.scenario == Scenario::OverfitMixture) {
      if (!simc->count("--pm")) sim.design.pm = 10;
    }
    sim.design.n = sim_n > 0 ? sim_n : (sim.design.scenario == Scenario::AdditiveMixture ? 2500 : 300);
    return cmd_simulate(sim, std::cout, std::cerr);
  }
  if (*benchc) return cmd_benchmark(bench, std::cout, std::cerr);
  if (!path_out.empty()) path.output_dir = path_out;
  return cmd_path(path, std::cout, std::cerr);
}
