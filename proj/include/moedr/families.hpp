#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <string_view>

#include "moedr/error.hpp"

namespace moedr {

using Rng = std::mt19937_64;

/// Distribution parameters of a single component; at most two entries.
template <typename Scalar>
using ParamVec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1, Eigen::ColMajor, 2, 1>;

enum class FamilyKind { Normal, Laplace, Logistic, Poisson };
enum class TransformKind { Identity, Exp };

/// Predictor values are clamped to this magnitude before exponentiation.
inline constexpr double kEtaClamp = 30.0;

/// Inverse link h mapping an additive predictor onto a parameter's domain.
struct Transform {
  TransformKind kind = TransformKind::Identity;

  template <typename Scalar>
  Scalar apply(Scalar eta) const {
    if (kind == TransformKind::Identity) return eta;
    const Scalar c = static_cast<Scalar>(kEtaClamp);
    return std::exp(std::clamp(eta, -c, c));
  }

  // Derivative of the clamped map, so it is zero outside [-30, 30].
  template <typename Scalar>
  Scalar deriv(Scalar eta) const {
    if (kind == TransformKind::Identity) return Scalar(1);
    const Scalar c = static_cast<Scalar>(kEtaClamp);
    if (eta < -c || eta > c) return Scalar(0);
    return std::exp(eta);
  }
};

class Family {
 public:
  constexpr explicit Family(FamilyKind kind = FamilyKind::Normal) : kind_(kind) {}

  constexpr FamilyKind kind() const { return kind_; }
  constexpr int param_count() const { return kind_ == FamilyKind::Poisson ? 1 : 2; }
  constexpr bool discrete() const { return kind_ == FamilyKind::Poisson; }

  /// Location parameters use the identity, scale and rate the exponential.
  Transform transform(int j) const {
    if (kind_ == FamilyKind::Poisson || j == 1) return {TransformKind::Exp};
    return {TransformKind::Identity};
  }

  std::string_view name() const;
  std::string_view param_name(int j) const;

  friend constexpr bool operator==(Family a, Family b) { return a.kind_ == b.kind_; }

 private:
  FamilyKind kind_;
};

/// Parses "normal", "laplace", "logistic" or "poisson" (case-insensitive).
Family family_from_name(std::string_view name);

namespace detail {
[[noreturn]] void throw_invalid(std::string_view family, std::string_view what, double value);
}

/// Checks that theta lies in the family's domain; throws InvalidParameter otherwise.
template <typename Scalar>
void validate_theta(const Family& family, const ParamVec<Scalar>& theta) {
  if (theta.size() != family.param_count())
    throw ShapeMismatch("parameter vector has wrong length for family " + std::string(family.name()));
  const int positive = family.kind() == FamilyKind::Poisson ? 0 : 1;
  const Scalar v = theta(positive);
  if (!(v > Scalar(0)) || !std::isfinite(static_cast<double>(v)))
    detail::throw_invalid(family.name(), family.param_name(positive), static_cast<double>(v));
}

/// log f(y | theta). Poisson returns -inf for non-integer y and throws on negative counts.
template <typename Scalar>
Scalar log_density(const Family& family, Scalar y, const ParamVec<Scalar>& theta) {
  validate_theta(family, theta);
  using std::abs, std::exp, std::log, std::log1p;
  switch (family.kind()) {
    case FamilyKind::Normal: {
      const Scalar z = (y - theta(0)) / theta(1);
      return -Scalar(0.5) * log(Scalar(2) * std::numbers::pi_v<Scalar>) - log(theta(1)) -
             Scalar(0.5) * z * z;
    }
    case FamilyKind::Laplace:
      return -log(Scalar(2) * theta(1)) - abs(y - theta(0)) / theta(1);
    case FamilyKind::Logistic: {
      const Scalar az = abs((y - theta(0)) / theta(1));
      return -az - log(theta(1)) - Scalar(2) * log1p(exp(-az));
    }
    case FamilyKind::Poisson: {
      if (y < Scalar(0)) detail::throw_invalid("poisson", "count", static_cast<double>(y));
      if (std::floor(y) != y) return -std::numeric_limits<Scalar>::infinity();
      const Scalar rate = theta(0);
      const Scalar term = y == Scalar(0) ? Scalar(0) : y * log(rate);
      return term - rate - std::lgamma(y + Scalar(1));
    }
  }
  return std::numeric_limits<Scalar>::quiet_NaN();
}

/// Gradient of log f with respect to the natural parameters theta.
ParamVec<double> dlogf_dtheta(const Family& family, double y, const ParamVec<double>& theta);

/// One draw from the family; consumes randomness only from `rng`.
double sample(const Family& family, const ParamVec<double>& theta, Rng& rng);

}  // namespace moedr
