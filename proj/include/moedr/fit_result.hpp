#pragma once

#include <Eigen/Core>

#include <string>
#include <vector>

namespace moedr {

/// Outcome of a model fit, shared by the first-order optimizers and EM.
struct FitResult {
  Eigen::VectorXd psi;                ///< best coefficients; empty when no restart succeeded
  std::vector<double> train_trace;    ///< per-epoch (or per-iteration) training objective
  std::vector<double> val_trace;      ///< per-epoch validation objective (optimizers only)
  std::vector<double> loglik_trace;   ///< observed-data log-likelihood per EM iteration
  double best_value = 0.0;            ///< validation objective (optimizers) or log-likelihood (EM)
  int best_epoch = -1;
  int restart_index = -1;
  int restarts_run = 0;
  int diverged_restarts = 0;
  int iterations = 0;                 ///< epochs (optimizers) or EM iterations of the winner
  bool diverged = false;              ///< every restart hit a non-finite objective
  bool converged = false;
  std::string failure;                ///< reason when !ok()
  std::vector<std::string> warnings;
  double wall_time = 0.0;             ///< seconds

  bool ok() const { return psi.size() > 0 && failure.empty(); }
};

}  // namespace moedr
