#pragma once

#include <Eigen/Core>

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "moedr/data_table.hpp"
#include "moedr/families.hpp"
#include "moedr/smooth_basis.hpp"

namespace moedr {

/// Row subset of the data used by one objective evaluation.
using RowSet = std::vector<Eigen::Index>;

RowSet all_rows(Eigen::Index n);

/// A smooth of one variable, or a tensor-product smooth of two.
struct SmoothSpec {
  std::vector<std::string> vars;
  BasisConfig basis;
};

/// Additive predictor: intercept + linear terms + smooth terms (+ fixed offset column).
struct PredictorSpec {
  bool intercept = true;
  std::vector<std::string> linear;
  std::vector<SmoothSpec> smooth;
  std::optional<std::string> offset;

  bool has_smooth() const { return !smooth.empty(); }
  bool intercept_only() const { return intercept && linear.empty() && smooth.empty(); }
};

/// M components with one predictor per distribution parameter, plus one
/// gating structure shared by all M mixture logits.
struct ModelSpec {
  std::vector<Family> families;
  std::vector<std::vector<PredictorSpec>> params;  ///< params[m][j]
  PredictorSpec gating;
  double entropy_xi = 0.0;

  int components() const { return static_cast<int>(families.size()); }
  /// K, the total number of distribution parameters.
  int theta_count() const;
  /// Index of the predictor for parameter j of component m.
  int param_predictor(int m, int j) const;
  int gating_predictor(int m) const { return theta_count() + m; }
  int predictor_count() const { return theta_count() + components(); }

  void validate() const;

  /// Same family and the same predictor for every parameter of every component.
  static ModelSpec homogeneous(Family family, int components, const PredictorSpec& param,
                               const PredictorSpec& gating = {});
};

enum class TermKind { Intercept, Linear, Categorical, Smooth };

/// One evaluated additive term together with what is needed to re-evaluate it on new rows.
struct Term {
  TermKind kind = TermKind::Intercept;
  std::string label;
  std::vector<std::string> vars;
  std::vector<std::string> levels;    ///< categorical: training levels, first is reference
  std::vector<BSplineBasis> margins;  ///< smooth: one or two margins
  Eigen::MatrixXd constraint;         ///< smooth: sum-to-zero map
  Eigen::MatrixXd penalty;            ///< smooth: constrained penalty
  double lambda = 0.0;
  double df = 0.0;                    ///< smooth: effective df at lambda
  Eigen::MatrixXd matrix;             ///< training design; empty for the intercept
  Eigen::Index width = 1;

  bool penalized() const { return kind == TermKind::Smooth && lambda > 0.0; }

  /// Design of this term on `data`; `extrapolated` accumulates clamped spline rows.
  Eigen::MatrixXd evaluate(const DataTable& data, int* extrapolated = nullptr) const;
};

struct Predictor {
  std::string name;
  std::vector<std::shared_ptr<const Term>> terms;
  std::vector<Eigen::Index> starts;  ///< offset of each term's coefficients in ψ
  Eigen::VectorXd offset;            ///< fixed additive offset; empty if none
  Eigen::Index width = 0;
};

struct Slice {
  Eigen::Index start = 0;
  Eigen::Index width = 0;
};

/// Evaluated designs for all K + M predictors plus the flat ψ layout.
class DesignSet {
 public:
  DesignSet() = default;

  Eigen::Index rows() const { return rows_; }
  Eigen::Index psi_size() const { return psi_size_; }
  int predictor_count() const { return static_cast<int>(predictors_.size()); }
  const Predictor& predictor(int j) const { return predictors_.at(static_cast<std::size_t>(j)); }
  Slice slice(int j, int term) const;
  Slice predictor_slice(int j) const;

  /// (K+M) x |rows| matrix of predictor values.
  Eigen::MatrixXd eval_eta(const Eigen::VectorXd& psi, const RowSet& rows) const;
  Eigen::MatrixXd eval_eta(const Eigen::VectorXd& psi) const;

  /// Chain rule ∂ℓ/∂ψ = Σ_j Z_jᵀ ∂ℓ/∂η_j for a (K+M) x |rows| matrix of predictor gradients.
  Eigen::VectorXd backprop(const Eigen::MatrixXd& d_eta, const RowSet& rows) const;

  /// Σ λ γᵀPγ over all penalized terms of all predictors.
  double penalty(const Eigen::VectorXd& psi) const;
  /// grad += scale · 2λPγ for all penalized terms.
  void add_penalty_gradient(const Eigen::VectorXd& psi, double scale, Eigen::VectorXd& grad) const;

  /// Per-predictor, per-term coefficient vectors.
  std::vector<std::vector<Eigen::VectorXd>> unpack(const Eigen::VectorXd& psi) const;
  Eigen::VectorXd pack(const std::vector<std::vector<Eigen::VectorXd>>& coefs) const;

  /// "predictor:term[k]" label for every ψ entry.
  std::vector<std::string> coefficient_names() const;

  /// Same terms (knots, constraints, λ, levels) evaluated on new data.
  DesignSet rebuild(const DataTable& data, int* extrapolated = nullptr) const;

  friend DesignSet build_design(const ModelSpec& spec, const DataTable& data);

 private:
  void check_psi(const Eigen::VectorXd& psi) const;

  std::vector<Predictor> predictors_;
  std::vector<std::optional<std::string>> offset_columns_;
  Eigen::Index rows_ = 0;
  Eigen::Index psi_size_ = 0;
};

/// Evaluates every predictor term on `data`, calibrating smooth λ from df targets.
DesignSet build_design(const ModelSpec& spec, const DataTable& data);

}  // namespace moedr
