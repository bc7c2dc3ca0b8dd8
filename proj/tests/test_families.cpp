#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "moedr/families.hpp"

using namespace moedr;

namespace {

ParamVec<double> theta2(double a, double b) {
  ParamVec<double> t(2);
  t << a, b;
  return t;
}

ParamVec<double> theta1(double a) {
  ParamVec<double> t(1);
  t << a;
  return t;
}

ParamVec<double> fd_gradient(const Family& f, double y, const ParamVec<double>& t, double h) {
  ParamVec<double> g(t.size());
  for (Eigen::Index k = 0; k < t.size(); ++k) {
    ParamVec<double> a = t, b = t;
    const double step = h * std::max(1.0, std::fabs(t(k)));
    a(k) += step;
    b(k) -= step;
    g(k) = (log_density(f, y, a) - log_density(f, y, b)) / (2.0 * step);
  }
  return g;
}

}  // namespace

TEST_SUITE("families") {
  TEST_CASE("log density at reference points") {
    CHECK(log_density(Family(FamilyKind::Normal), 0.0, theta2(0, 1)) == doctest::Approx(-0.918938533).epsilon(1e-9));
    CHECK(log_density(Family(FamilyKind::Laplace), 0.0, theta2(0, 1)) == doctest::Approx(std::log(0.5)).epsilon(1e-12));
    const double poisson = 3.0 * std::log(2.0) - 2.0 - std::log(6.0);
    CHECK(log_density(Family(FamilyKind::Poisson), 3.0, theta1(2.0)) == doctest::Approx(poisson).epsilon(1e-12));
    CHECK(poisson == doctest::Approx(-1.712318).epsilon(1e-6));
  }

  TEST_CASE("logistic log density matches the textbook pdf") {
    const Family f(FamilyKind::Logistic);
    for (double y : {-40.0, -3.0, 0.0, 0.7, 5.0, 60.0}) {
      const double z = (y - 0.2) / 0.5;
      const double pdf = std::exp(-z) / (0.5 * (1 + std::exp(-z)) * (1 + std::exp(-z)));
      CHECK(log_density(f, y, theta2(0.2, 0.5)) == doctest::Approx(std::log(pdf)).epsilon(1e-10));
    }
  }

  TEST_CASE("domain violations throw") {
    CHECK_THROWS_AS(log_density(Family(FamilyKind::Normal), 0.0, theta2(0, 0)), InvalidParameter);
    CHECK_THROWS_AS(log_density(Family(FamilyKind::Laplace), 0.0, theta2(0, -1)), InvalidParameter);
    CHECK_THROWS_AS(log_density(Family(FamilyKind::Poisson), 2.0, theta1(0.0)), InvalidParameter);
    CHECK_THROWS_AS(log_density(Family(FamilyKind::Poisson), -1.0, theta1(2.0)), InvalidParameter);
    CHECK_THROWS_AS(dlogf_dtheta(Family(FamilyKind::Normal), 0.0, theta2(0, -2)), InvalidParameter);
    CHECK(std::isinf(log_density(Family(FamilyKind::Poisson), 2.5, theta1(2.0))));
  }

  TEST_CASE("parameter gradient examples") {
    const Family normal(FamilyKind::Normal);
    CHECK(dlogf_dtheta(normal, 1.0, theta2(0, 1))(0) == doctest::Approx(1.0));
    CHECK(dlogf_dtheta(normal, 0.0, theta2(0, 1))(1) == doctest::Approx(-1.0));
    const Family logistic(FamilyKind::Logistic);
    const ParamVec<double> g = dlogf_dtheta(logistic, 0.7, theta2(0.2, 0.5));
    const ParamVec<double> fd = fd_gradient(logistic, 0.7, theta2(0.2, 0.5), 1e-6);
    for (int k = 0; k < 2; ++k) CHECK(g(k) == doctest::Approx(fd(k)).epsilon(1e-6));
  }

  TEST_CASE("parameter gradient matches finite differences on random draws") {
    Rng rng(11);
    std::uniform_real_distribution<double> loc(-3, 3), scale(0.3, 3), rate(0.2, 15);
    std::uniform_int_distribution<int> count(0, 25);
    for (FamilyKind kind : {FamilyKind::Normal, FamilyKind::Laplace, FamilyKind::Logistic, FamilyKind::Poisson}) {
      const Family f(kind);
      double worst = 0.0;
      for (int k = 0; k < 100; ++k) {
        ParamVec<double> t = f.discrete() ? theta1(rate(rng)) : theta2(loc(rng), scale(rng));
        double y = f.discrete() ? count(rng) : loc(rng) * 2;
        // Keep Laplace draws off the kink at the location.
        if (kind == FamilyKind::Laplace && std::fabs(y - t(0)) < 1e-3) y += 0.01;
        const ParamVec<double> g = dlogf_dtheta(f, y, t);
        const ParamVec<double> fd = fd_gradient(f, y, t, 1e-6);
        for (Eigen::Index j = 0; j < g.size(); ++j)
          worst = std::max(worst, std::fabs(g(j) - fd(j)) / (1.0 + std::fabs(fd(j))));
      }
      CAPTURE(f.name());
      CHECK(worst < 1e-5);
    }
  }

  TEST_CASE("transforms") {
    const Transform id{TransformKind::Identity}, ex{TransformKind::Exp};
    CHECK(ex.apply(0.0) == 1.0);
    CHECK(ex.deriv(0.0) == 1.0);
    CHECK(id.apply(-3.2) == -3.2);
    CHECK(id.deriv(-3.2) == 1.0);
    CHECK(ex.apply(2.0) == doctest::Approx(7.389056).epsilon(1e-7));
    CHECK(ex.apply(1000.0) == std::exp(kEtaClamp));
    CHECK(ex.apply(-1000.0) > 0.0);
    Rng rng(3);
    std::uniform_real_distribution<double> u(-25, 25);
    for (int k = 0; k < 50; ++k) {
      const double eta = u(rng);
      CHECK(ex.deriv(eta) > 0.0);
      CHECK(ex.apply(eta + 1e-3) > ex.apply(eta));
    }
  }

  TEST_CASE("families declare parameters and transforms") {
    CHECK(Family(FamilyKind::Normal).param_count() == 2);
    CHECK(Family(FamilyKind::Laplace).param_count() == 2);
    CHECK(Family(FamilyKind::Logistic).param_count() == 2);
    CHECK(Family(FamilyKind::Poisson).param_count() == 1);
    CHECK(Family(FamilyKind::Normal).transform(1).kind == TransformKind::Exp);
    CHECK(Family(FamilyKind::Normal).transform(0).kind == TransformKind::Identity);
    CHECK(Family(FamilyKind::Poisson).transform(0).kind == TransformKind::Exp);
    CHECK(family_from_name("LoGiStIc").kind() == FamilyKind::Logistic);
    CHECK_THROWS_AS(family_from_name("cauchy"), SpecError);
  }

  TEST_CASE("densities integrate to one") {
    for (FamilyKind kind : {FamilyKind::Normal, FamilyKind::Laplace, FamilyKind::Logistic}) {
      const Family f(kind);
      const ParamVec<double> t = theta2(0.4, 1.3);
      // Composite Simpson on [-60, 60].
      const int n = 120000;
      const double a = -60, b = 60, h = (b - a) / n;
      double s = 0.0;
      for (int i = 0; i <= n; ++i) {
        const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        s += w * std::exp(log_density(f, a + i * h, t));
      }
      CAPTURE(f.name());
      CHECK(std::fabs(s * h / 3.0 - 1.0) < 1e-6);
    }
    for (double rate : {0.5, 4.0, 20.0}) {
      double s = 0.0;
      for (int y = 0; y <= 200; ++y) s += std::exp(log_density(Family(FamilyKind::Poisson), double(y), theta1(rate)));
      CHECK(std::fabs(s - 1.0) < 1e-10);
    }
  }

  TEST_CASE("symmetric families peak at the location") {
    for (FamilyKind kind : {FamilyKind::Normal, FamilyKind::Laplace, FamilyKind::Logistic}) {
      const Family f(kind);
      const ParamVec<double> t = theta2(1.25, 0.8);
      double best_y = 0.0, best = -INFINITY;
      for (int i = 0; i <= 1000; ++i) {
        const double y = -3.75 + i * 0.01;
        const double v = log_density(f, y, t);
        if (v > best) {
          best = v;
          best_y = y;
        }
      }
      CHECK(best_y == doctest::Approx(1.25).epsilon(1e-9));
    }
  }

  TEST_CASE("sampling") {
    Rng rng(2024);
    CHECK(std::fabs(sample(Family(FamilyKind::Normal), theta2(0, 1e-12), rng)) < 1e-9);

    const int n = 100000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += sample(Family(FamilyKind::Poisson), theta1(4.0), rng);
    CHECK(std::fabs(sum / n - 4.0) < 0.07);

    std::vector<double> draws(n);
    for (auto& d : draws) d = sample(Family(FamilyKind::Laplace), theta2(0, 1), rng);
    std::nth_element(draws.begin(), draws.begin() + n / 2, draws.end());
    CHECK(std::fabs(draws[n / 2]) < 0.02);

    Rng a(5), b(5);
    for (int i = 0; i < 10; ++i)
      CHECK(sample(Family(FamilyKind::Logistic), theta2(1, 2), a) == sample(Family(FamilyKind::Logistic), theta2(1, 2), b));
    CHECK_THROWS_AS(sample(Family(FamilyKind::Normal), theta2(0, -1), rng), InvalidParameter);
  }

  TEST_CASE("logistic and laplace samples have the implied spread") {
    Rng rng(77);
    const int n = 100000;
    double ss_log = 0.0, abs_lap = 0.0;
    for (int i = 0; i < n; ++i) {
      const double a = sample(Family(FamilyKind::Logistic), theta2(0, 0.5), rng);
      const double b = sample(Family(FamilyKind::Laplace), theta2(0, 2.0), rng);
      ss_log += a * a;
      abs_lap += std::fabs(b);
    }
    // Var = s²π²/3 for the logistic; E|Y - μ| = b for the Laplace.
    CHECK(ss_log / n == doctest::Approx(0.25 * std::numbers::pi * std::numbers::pi / 3).epsilon(0.02));
    CHECK(abs_lap / n == doctest::Approx(2.0).epsilon(0.02));
  }
}
