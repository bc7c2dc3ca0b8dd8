#include "moedr/families.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace moedr {

std::string_view Family::name() const {
  switch (kind_) {
    case FamilyKind::Normal: return "normal";
    case FamilyKind::Laplace: return "laplace";
    case FamilyKind::Logistic: return "logistic";
    case FamilyKind::Poisson: return "poisson";
  }
  return "?";
}

std::string_view Family::param_name(int j) const {
  if (kind_ == FamilyKind::Poisson) return "rate";
  return j == 0 ? "location" : "scale";
}

Family family_from_name(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "normal" || lower == "gaussian") return Family(FamilyKind::Normal);
  if (lower == "laplace") return Family(FamilyKind::Laplace);
  if (lower == "logistic") return Family(FamilyKind::Logistic);
  if (lower == "poisson") return Family(FamilyKind::Poisson);
  throw SpecError("unknown family \"" + std::string(name) +
                  "\" (expected one of normal, laplace, logistic, poisson)");
}

namespace detail {
void throw_invalid(std::string_view family, std::string_view what, double value) {
  std::ostringstream os;
  os << family << ": invalid " << what << " = " << value;
  throw InvalidParameter(os.str());
}
}  // namespace detail

ParamVec<double> dlogf_dtheta(const Family& family, double y, const ParamVec<double>& theta) {
  validate_theta(family, theta);
  ParamVec<double> g(family.param_count());
  switch (family.kind()) {
    case FamilyKind::Normal: {
      const double s = theta(1);
      const double d = y - theta(0);
      g(0) = d / (s * s);
      g(1) = d * d / (s * s * s) - 1.0 / s;
      break;
    }
    case FamilyKind::Laplace: {
      const double b = theta(1);
      const double d = y - theta(0);
      g(0) = (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0)) / b;
      g(1) = -1.0 / b + std::abs(d) / (b * b);
      break;
    }
    case FamilyKind::Logistic: {
      const double s = theta(1);
      const double z = (y - theta(0)) / s;
      const double t = std::tanh(0.5 * z);
      g(0) = t / s;
      g(1) = (z * t - 1.0) / s;
      break;
    }
    case FamilyKind::Poisson: {
      if (y < 0) detail::throw_invalid("poisson", "count", y);
      g(0) = y / theta(0) - 1.0;
      break;
    }
  }
  return g;
}

double sample(const Family& family, const ParamVec<double>& theta, Rng& rng) {
  validate_theta(family, theta);
  switch (family.kind()) {
    case FamilyKind::Normal:
      return std::normal_distribution<double>(theta(0), theta(1))(rng);
    case FamilyKind::Laplace: {
      const double u = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
      const double sign = u < 0 ? -1.0 : 1.0;
      return theta(0) - theta(1) * sign * std::log1p(-2.0 * std::abs(u));
    }
    case FamilyKind::Logistic: {
      double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
      while (u <= 0.0) u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
      return theta(0) + theta(1) * std::log(u / (1.0 - u));
    }
    case FamilyKind::Poisson:
      return static_cast<double>(std::poisson_distribution<long long>(theta(0))(rng));
  }
  return 0.0;
}

}  // namespace moedr
