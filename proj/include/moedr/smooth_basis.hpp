#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <string_view>

namespace moedr {

/// Settings for one penalized B-spline (P-spline) margin.
struct BasisConfig {
  int num_basis = 10;
  int degree = 3;
  int penalty_order = 2;
  /// Target effective degrees of freedom; absent means use `lambda` as given.
  std::optional<double> df;
  double lambda = 0.0;

  void validate() const;
};

/// Clamped B-spline basis on [lo, hi] with equally spaced interior knots.
class BSplineBasis {
 public:
  BSplineBasis(double lo, double hi, int num_basis, int degree);

  /// Builds the basis over the range of `x`; requires n >= num_basis and max(x) > min(x).
  static BSplineBasis over(const Eigen::VectorXd& x, const BasisConfig& cfg);

  int size() const { return num_basis_; }
  int degree() const { return degree_; }
  double lower() const { return lo_; }
  double upper() const { return hi_; }
  const Eigen::VectorXd& knots() const { return knots_; }

  /// Writes all basis values at x into `out` (length size()). Values outside
  /// [lo, hi] are evaluated at the nearest boundary; returns true in that case.
  bool evaluate(double x, Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> out) const;

  /// n x size() design; `extrapolated` counts clamped rows if non-null.
  Eigen::MatrixXd design(const Eigen::VectorXd& x, int* extrapolated = nullptr) const;

 private:
  double lo_;
  double hi_;
  int num_basis_;
  int degree_;
  Eigen::VectorXd knots_;
};

/// Raw (n x O) B-spline design for `x` under `cfg`.
Eigen::MatrixXd bspline_design(const Eigen::VectorXd& x, const BasisConfig& cfg);

/// DᵀD for the order-th difference operator D on `num_basis` coefficients.
Eigen::MatrixXd difference_penalty(int num_basis, int order);

/// Design and penalty of a smooth before identifiability constraints.
struct RawSmooth {
  Eigen::MatrixXd design;
  Eigen::MatrixXd penalty;
};

/// Row-wise Kronecker product of two margins with penalty P_a ⊗ I + I ⊗ P_b.
RawSmooth tensor_product(const RawSmooth& a, const RawSmooth& b);

/// A smooth term after the sum-to-zero reparameterization.
struct SmoothTerm {
  Eigen::MatrixXd design;      ///< n x (O-1), columns sum to zero
  Eigen::MatrixXd penalty;     ///< (O-1) x (O-1), symmetric PSD
  Eigen::MatrixXd constraint;  ///< O x (O-1) orthonormal map into the raw basis
  double lambda = 0.0;
};

/// Reparameterizes onto the orthogonal complement of the column sums of `raw.design`.
/// Throws SpecError naming `label` if the constrained design is rank deficient.
SmoothTerm apply_sum_to_zero(const RawSmooth& raw, std::string_view label = "smooth");

/// Effective degrees of freedom trace(Z (ZᵀZ + λP)⁻¹ Zᵀ) as a function of λ.
///
/// Whitening with the Cholesky factor of ZᵀZ reduces the trace to
/// Σ_k 1 / (1 + λ d_k), where d_k are the eigenvalues of the whitened penalty,
/// so each evaluation costs O(columns).
class DfCurve {
 public:
  DfCurve(const Eigen::MatrixXd& design, const Eigen::MatrixXd& penalty);

  double operator()(double lambda) const;
  int columns() const { return static_cast<int>(eigenvalues_.size()); }
  /// Dimension of the penalty nullspace, i.e. the λ → ∞ limit of df.
  int nullity() const { return nullity_; }

 private:
  Eigen::VectorXd eigenvalues_;
  int nullity_ = 0;
};

struct LambdaSolution {
  double lambda = 0.0;
  double df = 0.0;
  int iterations = 0;
};

inline constexpr double kLog10LambdaMin = -12.0;
inline constexpr double kLog10LambdaMax = 12.0;

/// Finds λ with df(λ) = df_target by bisection on log10 λ over [-12, 12].
/// Throws SpecError reporting the attainable range if the target lies outside it.
LambdaSolution lambda_from_df(const Eigen::MatrixXd& design, const Eigen::MatrixXd& penalty,
                              double df_target);

}  // namespace moedr
