#pragma once

#include <Eigen/Core>

#include <optional>
#include <string>
#include <vector>

#include "moedr/em_baseline.hpp"
#include "moedr/metrics.hpp"
#include "moedr/optimizers.hpp"
#include "moedr/simgen.hpp"

namespace moedr {

/// One fitted method evaluated against a simulated truth.
struct MethodOutcome {
  std::string method;
  bool failed = false;
  std::string failure;
  double coef_rmse = 0.0;   ///< linear designs only
  double pi_rmse = 0.0;
  double curve_rmse = 0.0;  ///< additive design: worst component on the evaluation grid
  double accuracy = 0.0;
  double ari = 0.0;
  double train_pls = 0.0;
  double test_pls = 0.0;
  double seconds = 0.0;
  Eigen::VectorXd pi_hat;   ///< marginal weights on the training rows
  Eigen::VectorXd psi;
  LabelAssignment assignment;
};

/// Mini-batch settings used by the benchmark suites for NMDR fits.
OptimConfig nmdr_config(int restarts, std::uint64_t seed);

/// Mean test log density of an intercept-only single Normal fitted by maximum likelihood.
double normal_baseline_pls(const Eigen::VectorXd& y_train, const Eigen::VectorXd& y_test);

/// Scores a finished fit of `model` against the truth behind `train`.
MethodOutcome evaluate_fit(const std::string& method, const MixtureModel& model, const FitResult& fit,
                           const SimDataset& train, const SimDataset& test);

struct LinearComparison {
  std::vector<MethodOutcome> outcomes;  ///< EM, then one NMDR entry per restart count
  double baseline_pls = 0.0;
};

struct LinearSettings {
  std::optional<EmConfig> em = EmConfig{};
  std::vector<int> nmdr_restarts = {1, 3};
  std::optional<OptimConfig> optim;  ///< overrides nmdr_config; restarts are replaced
  Eigen::Index test_rows = 0;        ///< defaults to the training size
};

/// EM against NMDR on one draw of a linear (or overfit) design, fitting the true M.
LinearComparison compare_linear(const SimDesign& design, const LinearSettings& settings = {});

/// NMDR with `fit_components` components on one draw of a linear or overfit design.
MethodOutcome fit_linear_nmdr(const SimDesign& design, int fit_components, double xi,
                              const OptimConfig& cfg, const std::string& method);

/// Evaluation grid for additive curves: x1 = x2 = (k + 0.5) / points, noise covariates at 0.5.
DataTable additive_grid(const SimDesign& design, int points = 200);

struct AdditiveSettings {
  double df = -1.0;             ///< < 0 picks 10 (Normal) or 6 (Poisson)
  int num_basis = 15;
  std::optional<OptimConfig> optim;
  bool em = true;               ///< EM with linear predictors for comparison
  bool oracle = true;
  Eigen::Index test_rows = 0;
};

/// NMDR, linear EM and the label oracle on one draw of the additive design.
std::vector<MethodOutcome> compare_additive(const SimDesign& design, const AdditiveSettings& settings = {});

/// Sparsity outcome of one fit on the overfit design.
struct SparsityOutcome {
  MethodOutcome fit;
  double spurious_max = 0.0;  ///< largest π̄ among unmatched components
  double true_error = 0.0;    ///< largest |π̄ − π| among matched components
  double entropy = 0.0;       ///< H(π̄)
};

SparsityOutcome evaluate_sparsity(const SimDataset& train, const MethodOutcome& fit);

}  // namespace moedr
