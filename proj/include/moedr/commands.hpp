#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "moedr/simgen.hpp"

namespace moedr::cli {

/// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitNumerical = 2;

struct FitOptions {
  std::string config;
  std::optional<std::string> output_dir;  ///< overrides the config's output block
};

struct SimulateOptions {
  SimDesign design;
  std::string output_dir;
};

struct BenchmarkOptions {
  std::string suite;
  int reps = 10;
  std::uint64_t seed = 1;
  int threads = 1;
  bool quick = false;
  std::string output_dir;
};

struct PathOptions {
  std::string config;
  std::vector<double> xi;
  std::optional<std::string> output_dir;
};

/// Each command reports errors on `err` and returns an exit code.
int cmd_fit(const FitOptions& opts, std::ostream& out, std::ostream& err);
int cmd_simulate(const SimulateOptions& opts, std::ostream& out, std::ostream& err);
int cmd_benchmark(const BenchmarkOptions& opts, std::ostream& out, std::ostream& err);
int cmd_path(const PathOptions& opts, std::ostream& out, std::ostream& err);

/// Default output directory: $MOEDR_OUTPUT_DIR, else "moedr-out".
std::string default_output_dir();

}  // namespace moedr::cli
