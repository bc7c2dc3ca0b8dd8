#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

#include "moedr/fit_result.hpp"
#include "moedr/mixture_model.hpp"

namespace moedr {

struct EmConfig {
  int max_iter = 500;
  double tol = 1e-6;       ///< relative change of the observed-data log-likelihood
  int restarts = 20;
  int inner_steps = 25;    ///< numeric M-step iterations (Newton or Adam)
  double inner_lr = 0.05;  ///< Adam step size for the numeric M-steps
  /// Damped Newton instead of Adam for Normal log-scale and Poisson log-rate predictors.
  bool newton = false;
  std::uint64_t seed = 1;

  void validate() const;
};

/// EM for mixtures with constant weights and unpenalized predictors.
///
/// E-step: responsibilities. M-step: π̂_m = mean_i r_im; per component,
/// Normal location by weighted least squares given the current scales.
/// Intercept-only Normal scales and Poisson rates have closed forms; every
/// other parameter takes `inner_steps` of full-batch Adam on the weighted
/// likelihood, keeping the best iterate (or damped Newton with `newton`).
/// A run fails on a non-finite likelihood, a weight below 1e-8, a singular
/// weighted design or a scale predictor driven onto the clamp boundary.
/// The best of `restarts` runs by final log-likelihood is returned; restart 0
/// starts from `init` when given, all others from a random partition.
FitResult em_fit(const MixtureModel& model, const EmConfig& cfg,
                 const Eigen::VectorXd* init = nullptr);

/// Observed-data log-likelihood after each EM iteration.
const std::vector<double>& loglik_trace(const FitResult& result);

/// Maximizes the complete-data likelihood for fixed responsibilities
/// (rows x M), cycling component M-steps until ψ stabilizes. Smooth terms are
/// handled through their quadratic penalties. Always uses Newton steps, so
/// Normal and Poisson fits are exact. Used for oracle fits with known labels.
FitResult fit_fixed_responsibilities(const MixtureModel& model, const Eigen::MatrixXd& resp,
                                     const EmConfig& cfg = {});

}  // namespace moedr
