#pragma once

#include <Eigen/Core>

#include <span>
#include <vector>

#include "moedr/mixture_model.hpp"

namespace moedr {

/// Mapping of estimated component labels onto true labels. When the label
/// counts differ the smaller side is padded with dummy labels; an estimated
/// label mapped to index >= true_count matches nothing.
struct LabelAssignment {
  std::vector<int> est_to_true;
  int true_count = 0;
  int est_count = 0;
  long matches = 0;  ///< trace of the permuted confusion matrix

  /// Estimated label assigned to true label t, or -1.
  int est_for_true(int t) const;
};

/// Square assignment maximizing Σ_i w(i, σ(i)); among optimal permutations
/// returns the lexicographically smallest.
std::vector<int> max_weight_assignment(const Eigen::MatrixXd& weights);

/// Accuracy-optimal relabeling of `est` onto `truth` (labels are 0-based).
/// Label counts default to max label + 1 and may be raised to include unused labels.
LabelAssignment optimal_assignment(std::span<const int> truth, std::span<const int> est,
                                   int true_count = 0, int est_count = 0);

/// Fraction of matches under the optimal assignment.
double accuracy(std::span<const int> truth, std::span<const int> est);

/// Hubert–Arabie adjusted Rand index.
double adjusted_rand_index(std::span<const int> truth, std::span<const int> est);

double rmse(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// Concatenated coefficients of all distribution-parameter predictors of component m.
Eigen::VectorXd component_coefficients(const ModelSpec& spec, const DesignSet& design,
                                       const Eigen::VectorXd& psi, int m);

/// RMSE over distribution-parameter coefficients after relabeling estimated
/// components onto true ones; both ψ share `design`'s layout. Gating
/// coefficients are excluded (compare weights with `weight_rmse`).
double coefficient_rmse(const ModelSpec& spec, const DesignSet& design,
                        const Eigen::VectorXd& psi_true, const Eigen::VectorXd& psi_est,
                        const LabelAssignment& assignment);

/// RMSE on the π scale; unmatched estimated components are compared to zero.
double weight_rmse(const Eigen::VectorXd& pi_true, const Eigen::VectorXd& pi_est,
                   const LabelAssignment& assignment);

/// Mean held-out log density.
double predictive_log_score(const MixtureModel& model, const Eigen::VectorXd& psi,
                            const DataTable& data, const Eigen::VectorXd& y);

}  // namespace moedr
