#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "moedr/data_table.hpp"
#include "moedr/fit_result.hpp"
#include "moedr/mixture_model.hpp"

namespace moedr {

enum class Scenario {
  LinearMixture,    ///< linear location and scale predictors, constant weights
  AdditiveMixture,  ///< smooth mean predictors with noise covariates
  OverfitMixture,   ///< two true Normal components with p = 10
};

Scenario scenario_from_name(std::string_view name);
std::string_view scenario_name(Scenario s);

struct SimDesign {
  Scenario scenario = Scenario::LinearMixture;
  Eigen::Index n = 300;
  int components = 2;       ///< true M (fixed to 3 for additive, 2 for overfit)
  int pm = 2;               ///< covariates per predictor (linear / overfit)
  FamilyKind family = FamilyKind::Normal;
  double scale = 2.0;       ///< additive: Gaussian SD or Poisson multiplicative offset
  bool uniform_weights = true;  ///< additive: (1/3,1/3,1/3) or (0.1,0.3,0.6)
  int noise_vars = 3;       ///< additive: extra U(0,1) covariates
  std::uint64_t seed = 1;

  /// Throws SpecError naming the legal set when a value is off the design grid.
  void validate() const;
};

/// Generating parameters; everything needed to draw more data from the same truth.
struct SimTruth {
  SimDesign design;
  Eigen::VectorXd pi;
  Eigen::MatrixXd location;  ///< (1 + pm) x M coefficients (linear / overfit)
  Eigen::MatrixXd scale;     ///< (1 + pm) x M log-scale coefficients
};

struct SimDataset {
  DataTable data;  ///< covariates, "y" and, for Poisson, "log_offset"
  Eigen::VectorXd y;
  std::vector<int> labels;
  Eigen::VectorXd true_psi;  ///< in the layout of `true_spec`; empty for the additive scenario
  Eigen::VectorXd true_pi;
  ModelSpec true_spec;       ///< correctly specified model
  SimTruth truth;
};

inline constexpr const char* kResponse = "y";

double additive_f1(double x);
double additive_f2(double x);
double additive_f3(double x);
/// True mean predictor η_m(x1, x2) of additive component m (0-based).
double additive_eta(int m, double x1, double x2);

SimDataset gen_linear_mixture(const SimDesign& design);
SimDataset gen_additive_mixture(const SimDesign& design);
SimDataset gen_overfit_mixture(const SimDesign& design);
SimDataset simulate(const SimDesign& design);

/// New sample of `n` rows from the truth of `source`, e.g. an independent test set.
SimDataset resample(const SimDataset& source, Eigen::Index n, std::uint64_t seed);

/// Model specs matching the generators. `components` may exceed the truth (overfitting).
ModelSpec linear_model_spec(FamilyKind family, int components, int pm);
ModelSpec additive_model_spec(FamilyKind family, int components, int noise_vars, double df,
                              int num_basis = 15);

/// Fit with known labels: each component is fitted on its own rows and the
/// weights set to the label frequencies. Throws SpecError when a component
/// has fewer rows than coefficients.
FitResult oracle_fit(const MixtureModel& model, std::span<const int> labels);

}  // namespace moedr
