#pragma once

#include <Eigen/Core>

#include <string>

#include "moedr/data_table.hpp"
#include "moedr/predictors.hpp"

namespace moedr {

/// A mixture-of-experts distributional regression model bound to training data.
///
/// Holds the declarative spec, the evaluated designs of all K + M additive
/// predictors and the response. Coefficient vectors ψ are passed separately so
/// a single model can be evaluated at many parameter values.
class MixtureModel {
 public:
  MixtureModel(ModelSpec spec, const DataTable& data, const std::string& response);
  MixtureModel(ModelSpec spec, DesignSet design, Eigen::VectorXd response);

  const ModelSpec& spec() const { return spec_; }
  const DesignSet& design() const { return design_; }
  const Eigen::VectorXd& response() const { return y_; }
  Eigen::Index rows() const { return y_.size(); }
  int components() const { return spec_.components(); }
  Eigen::Index psi_size() const { return design_.psi_size(); }

  /// Same model structure (knots, constraints, λ) evaluated on other rows.
  MixtureModel with_data(const DataTable& data, const Eigen::VectorXd& response,
                         int* extrapolated = nullptr) const;
  MixtureModel with_xi(double xi) const;

 private:
  ModelSpec spec_;
  DesignSet design_;
  Eigen::VectorXd y_;
};

/// Softmax of gating logits by max subtraction. Accepts an M-vector or an
/// M x n matrix (one column per observation).
Eigen::MatrixXd mixture_weights(const Eigen::MatrixXd& logits);
Eigen::MatrixXd log_mixture_weights(const Eigen::MatrixXd& logits);

/// ξ·H(π̄) = -ξ Σ π̄ log π̄ with 0 log 0 = 0; lies in [0, ξ log M].
double entropy_penalty(const Eigen::VectorXd& pi_bar, double xi);

/// Negative log-likelihood Σ_i -LSE_m[log π_m(x_i) + log f_m(y_i)] over `rows`.
double nll(const MixtureModel& model, const Eigen::VectorXd& psi, const RowSet& rows);

/// Per-row log f_{Y|x}(y_i) for `rows`.
Eigen::VectorXd log_density_rows(const MixtureModel& model, const Eigen::VectorXd& psi,
                                 const RowSet& rows);

/// |rows| x M posterior membership probabilities.
Eigen::MatrixXd responsibilities(const MixtureModel& model, const Eigen::VectorXd& psi,
                                 const RowSet& rows);

/// Average of π_m(x_i) over `rows` (the marginal mixture weights).
Eigen::VectorXd marginal_weights(const MixtureModel& model, const Eigen::VectorXd& psi,
                                 const RowSet& rows);

struct ObjectiveTerms {
  double nll = 0.0;
  double smooth_penalty = 0.0;  ///< already scaled by |rows| / reference_rows
  double entropy = 0.0;         ///< |rows| · ξ · H(π̄)
  double total = 0.0;
};

/// Penalized objective on `rows`:
///   nll + (|rows|/N) Σ λ γᵀPγ + |rows| ξ H(π̄),
/// where N = `reference_rows` (defaults to the model's row count). Dividing
/// by |rows| gives the per-observation objective that the optimizers follow;
/// mini-batch values are unbiased for the full smoothing penalty.
ObjectiveTerms objective_terms(const MixtureModel& model, const Eigen::VectorXd& psi,
                               const RowSet& rows, Eigen::Index reference_rows = 0);
double objective(const MixtureModel& model, const Eigen::VectorXd& psi, const RowSet& rows,
                 Eigen::Index reference_rows = 0);

struct ObjectiveGradient {
  ObjectiveTerms terms;
  Eigen::VectorXd gradient;
};

/// Objective and its analytic ψ-gradient in one pass.
ObjectiveGradient objective_and_gradient(const MixtureModel& model, const Eigen::VectorXd& psi,
                                         const RowSet& rows, Eigen::Index reference_rows = 0);
Eigen::VectorXd gradient(const MixtureModel& model, const Eigen::VectorXd& psi,
                         const RowSet& rows, Eigen::Index reference_rows = 0);

/// log f_{Y|x}(y | ϑ̂(x)) for new rows, using the training knots and constraints.
/// `extrapolated` counts spline evaluations clamped to the training range.
Eigen::VectorXd predict_log_density(const MixtureModel& model, const Eigen::VectorXd& psi,
                                    const DataTable& data, const Eigen::VectorXd& y,
                                    int* extrapolated = nullptr);

/// rows x (K + M): transformed distribution parameters followed by the weights π.
Eigen::MatrixXd predicted_parameters(const MixtureModel& model, const Eigen::VectorXd& psi);

/// MAP component per row (0-based).
std::vector<int> map_labels(const Eigen::MatrixXd& responsibilities);

}  // namespace moedr
