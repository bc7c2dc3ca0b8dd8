#include "moedr/smooth_basis.hpp"

#include <cmath>
#include <sstream>
#include <vector>

#include "moedr/error.hpp"

namespace moedr {

void BasisConfig::validate() const {
  if (degree < 0) throw SpecError("basis degree must be non-negative");
  if (num_basis <= degree + 1) {
    std::ostringstream os;
    os << "num_basis (" << num_basis << ") must exceed degree + 1 (" << degree + 1 << ")";
    throw SpecError(os.str());
  }
  if (penalty_order < 0 || penalty_order >= num_basis)
    throw SpecError("penalty_order must lie in [0, num_basis)");
  if (df && !(*df > 0)) throw SpecError("df must be positive");
  if (!(lambda >= 0)) throw SpecError("lambda must be non-negative");
}

BSplineBasis::BSplineBasis(double lo, double hi, int num_basis, int degree)
    : lo_(lo), hi_(hi), num_basis_(num_basis), degree_(degree) {
  if (!(hi > lo)) throw SpecError("B-spline range is degenerate (max <= min)");
  if (num_basis <= degree) throw SpecError("B-spline needs more basis functions than its degree");
  const int spans = num_basis - degree;
  const double h = (hi - lo) / spans;
  knots_.resize(num_basis + degree + 1);
  for (int i = 0; i < knots_.size(); ++i) {
    if (i <= degree) {
      knots_(i) = lo;
    } else if (i >= num_basis) {
      knots_(i) = hi;
    } else {
      knots_(i) = lo + (i - degree) * h;
    }
  }
}

BSplineBasis BSplineBasis::over(const Eigen::VectorXd& x, const BasisConfig& cfg) {
  cfg.validate();
  if (x.size() < cfg.num_basis) {
    std::ostringstream os;
    os << "B-spline basis needs at least " << cfg.num_basis << " rows, got " << x.size();
    throw SpecError(os.str());
  }
  return BSplineBasis(x.minCoeff(), x.maxCoeff(), cfg.num_basis, cfg.degree);
}

bool BSplineBasis::evaluate(double x, Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> out) const {
  out.setZero();
  bool clamped = false;
  if (x < lo_) {
    x = lo_;
    clamped = true;
  } else if (x > hi_) {
    x = hi_;
    clamped = true;
  }
  const int p = degree_;
  // knot span s with t_s <= x < t_{s+1}, s in [p, num_basis - 1]
  int s = num_basis_ - 1;
  if (x < hi_) {
    const double h = (hi_ - lo_) / (num_basis_ - p);
    s = p + static_cast<int>(std::floor((x - lo_) / h));
    s = std::clamp(s, p, num_basis_ - 1);
    while (s > p && x < knots_(s)) --s;
    while (s < num_basis_ - 1 && x >= knots_(s + 1)) ++s;
  }

  double basis[32];
  double left[32];
  double right[32];
  basis[0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = x - knots_(s + 1 - j);
    right[j] = knots_(s + j) - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double temp = basis[r] / (right[r + 1] + left[j - r]);
      basis[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    basis[j] = saved;
  }
  for (int r = 0; r <= p; ++r) out(s - p + r) = basis[r];
  return clamped;
}

Eigen::MatrixXd BSplineBasis::design(const Eigen::VectorXd& x, int* extrapolated) const {
  if (degree_ >= 31) throw SpecError("B-spline degree too large");
  Eigen::MatrixXd z(x.size(), num_basis_);
  int clamped = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) clamped += evaluate(x(i), z.row(i)) ? 1 : 0;
  if (extrapolated) *extrapolated = clamped;
  return z;
}

Eigen::MatrixXd bspline_design(const Eigen::VectorXd& x, const BasisConfig& cfg) {
  return BSplineBasis::over(x, cfg).design(x);
}

Eigen::MatrixXd difference_penalty(int num_basis, int order) {
  if (order < 0 || order >= num_basis) {
    std::ostringstream os;
    os << "difference order " << order << " must be below the number of coefficients "
       << num_basis;
    throw SpecError(os.str());
  }
  Eigen::MatrixXd d = Eigen::MatrixXd::Identity(num_basis, num_basis);
  for (int k = 0; k < order; ++k) {
    const Eigen::Index rows = d.rows() - 1;
    d = (d.bottomRows(rows) - d.topRows(rows)).eval();
  }
  return d.transpose() * d;
}

RawSmooth tensor_product(const RawSmooth& a, const RawSmooth& b) {
  if (a.design.rows() != b.design.rows())
    throw ShapeMismatch("tensor product margins have different row counts");
  const Eigen::Index oa = a.design.cols();
  const Eigen::Index ob = b.design.cols();
  if (a.penalty.rows() != oa || b.penalty.rows() != ob)
    throw ShapeMismatch("tensor product margin penalty does not match its design");

  RawSmooth out;
  out.design.resize(a.design.rows(), oa * ob);
  for (Eigen::Index i = 0; i < oa; ++i)
    out.design.middleCols(i * ob, ob) = b.design.array().colwise() * a.design.col(i).array();

  out.penalty = Eigen::MatrixXd::Zero(oa * ob, oa * ob);
  for (Eigen::Index i = 0; i < oa; ++i) {
    for (Eigen::Index k = 0; k < oa; ++k) {
      auto block = out.penalty.block(i * ob, k * ob, ob, ob);
      block.diagonal().array() += a.penalty(i, k);
      if (i == k) block += b.penalty;
    }
  }
  return out;
}

SmoothTerm apply_sum_to_zero(const RawSmooth& raw, std::string_view label) {
  const Eigen::Index o = raw.design.cols();
  if (o < 2) throw SpecError("smooth term '" + std::string(label) + "' has fewer than two columns");
  if (raw.penalty.rows() != o || raw.penalty.cols() != o)
    throw ShapeMismatch("penalty of smooth term '" + std::string(label) + "' does not match design");

  const Eigen::MatrixXd sums = raw.design.colwise().sum().transpose();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(sums);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(o, o);

  SmoothTerm term;
  term.constraint = q.rightCols(o - 1);
  term.design = raw.design * term.constraint;
  term.penalty = term.constraint.transpose() * raw.penalty * term.constraint;
  term.penalty = (0.5 * (term.penalty + term.penalty.transpose())).eval();

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> rank_check(term.design);
  rank_check.setThreshold(1e-10);
  if (rank_check.rank() < o - 1) {
    std::ostringstream os;
    os << "smooth term '" << label << "' is rank deficient after centering (rank "
       << rank_check.rank() << " < " << o - 1 << "); reduce num_basis or check the covariate";
    throw SpecError(os.str());
  }
  return term;
}

DfCurve::DfCurve(const Eigen::MatrixXd& design, const Eigen::MatrixXd& penalty) {
  if (penalty.rows() != design.cols() || penalty.cols() != design.cols())
    throw ShapeMismatch("penalty dimension does not match design columns");
  const Eigen::MatrixXd gram = design.transpose() * design;
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success) throw NumericalFailure("design Gram matrix is not positive definite");
  // R⁻ᵀ P R⁻¹ with gram = RᵀR
  const Eigen::MatrixXd r = llt.matrixU();
  const Eigen::MatrixXd rinv = r.triangularView<Eigen::Upper>().solve(
      Eigen::MatrixXd::Identity(r.rows(), r.cols()));
  Eigen::MatrixXd whitened = rinv.transpose() * penalty * rinv;
  whitened = (0.5 * (whitened + whitened.transpose())).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(whitened, Eigen::EigenvaluesOnly);
  eigenvalues_ = eig.eigenvalues().cwiseMax(0.0);
  const double scale = eigenvalues_.size() ? eigenvalues_.maxCoeff() : 0.0;
  nullity_ = 0;
  for (Eigen::Index k = 0; k < eigenvalues_.size(); ++k)
    if (eigenvalues_(k) <= 1e-9 * scale) {
      eigenvalues_(k) = 0.0;
      ++nullity_;
    }
}

double DfCurve::operator()(double lambda) const {
  return (1.0 / (1.0 + lambda * eigenvalues_.array())).sum();
}

LambdaSolution lambda_from_df(const Eigen::MatrixXd& design, const Eigen::MatrixXd& penalty,
                              double df_target) {
  const DfCurve curve(design, penalty);
  const double max_df = curve.columns();
  const double min_df = curve.nullity();
  if (!(df_target >= min_df - 1e-12 && df_target <= max_df + 1e-12)) {
    std::ostringstream os;
    os << "df target " << df_target << " outside attainable range [" << min_df << ", " << max_df
       << "]";
    throw SpecError(os.str());
  }
  if (df_target >= max_df - 1e-12) return {0.0, max_df, 0};

  const double lambda_max = std::pow(10.0, kLog10LambdaMax);
  if (df_target <= curve(lambda_max)) return {lambda_max, curve(lambda_max), 0};

  double lo = kLog10LambdaMin;
  double hi = kLog10LambdaMax;
  LambdaSolution sol;
  for (int it = 1; it <= 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double lambda = std::pow(10.0, mid);
    const double df = curve(lambda);
    sol = {lambda, df, it};
    if (std::abs(df - df_target) < 1e-10) break;
    if (df > df_target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return sol;
}

}  // namespace moedr
