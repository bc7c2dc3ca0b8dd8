#include <doctest.h>

#include <cmath>
#include <numbers>

#include "moedr/em_baseline.hpp"
#include "moedr/error.hpp"
#include "moedr/mixture_model.hpp"
#include "oracles.hpp"

using namespace moedr;

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

DataTable response_table(const Eigen::VectorXd& y) {
  DataTable d;
  d.add_numeric("y", y);
  return d;
}

/// Intercept-only Normal mixture with psi = (mu_m, log sigma_m)_m then gating logits.
MixtureModel intercept_normals(int M, const Eigen::VectorXd& y) {
  return MixtureModel(ModelSpec::homogeneous(Family(FamilyKind::Normal), M, PredictorSpec{}), response_table(y), "y");
}

}  // namespace

TEST_SUITE("mixture_model") {
  TEST_CASE("softmax") {
    Eigen::VectorXd a = Eigen::VectorXd::Zero(3);
    CHECK((mixture_weights(a).array() - 1.0 / 3).abs().maxCoeff() < 1e-15);
    Eigen::VectorXd b(2);
    b << std::log(2.0), 0.0;
    const Eigen::MatrixXd pb = mixture_weights(b);
    CHECK(pb(0) == doctest::Approx(2.0 / 3).epsilon(1e-14));
    CHECK(pb(1) == doctest::Approx(1.0 / 3).epsilon(1e-14));

    Eigen::MatrixXd logits(3, 4);
    logits << 0.3, -2, 5, 0, 1.2, 0.1, -7, 0, -0.4, 3, 2, 0;
    const Eigen::MatrixXd p = mixture_weights(logits);
    const Eigen::MatrixXd shifted = mixture_weights((logits.array() + 1000.0).matrix());
    CHECK((p - shifted).cwiseAbs().maxCoeff() < 1e-13);
    CHECK((p.colwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK(p.minCoeff() > 0.0);
    CHECK((log_mixture_weights(logits).array().exp().matrix() - p).cwiseAbs().maxCoeff() < 1e-14);
    for (Eigen::Index i = 0; i < 4; ++i) {
      Eigen::Index am, bm;
      p.col(i).maxCoeff(&am);
      logits.col(i).maxCoeff(&bm);
      CHECK(am == bm);
    }
  }

  TEST_CASE("single standard normal observation") {
    const MixtureModel m = intercept_normals(1, Eigen::VectorXd::Zero(1));
    const Eigen::VectorXd psi = Eigen::VectorXd::Zero(3);
    CHECK(nll(m, psi, all_rows(1)) == doctest::Approx(0.918939).epsilon(1e-6));
    CHECK(predict_log_density(m, psi, response_table(Eigen::VectorXd::Zero(1)), Eigen::VectorXd::Zero(1))(0) ==
          doctest::Approx(-kHalfLog2Pi).epsilon(1e-14));
  }

  TEST_CASE("identical components collapse to one") {
    Eigen::VectorXd y(4);
    y << -1.0, 0.3, 2.0, 4.5;
    const MixtureModel one = intercept_normals(1, y), two = intercept_normals(2, y);
    Eigen::VectorXd p1(3), p2(6);
    p1 << 0.7, 0.2, 0.0;
    p2 << 0.7, 0.2, 0.7, 0.2, std::log(0.3), std::log(0.7);
    CHECK(nll(two, p2, all_rows(4)) == doctest::Approx(nll(one, p1, all_rows(4))).epsilon(1e-13));

    const Eigen::MatrixXd r = responsibilities(two, p2, all_rows(4));
    CHECK((r.col(0).array() - 0.3).abs().maxCoeff() < 1e-14);
    CHECK((r.col(1).array() - 0.7).abs().maxCoeff() < 1e-14);

    // r = π, so the gating gradient vanishes before the entropy term.
    const Eigen::VectorXd g = gradient(two, p2, all_rows(4));
    CHECK(g.tail(2).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("a component outside its support gets zero responsibility") {
    Eigen::VectorXd y(2);
    y << 2.5, 3.0;
    ModelSpec spec;
    spec.families = {Family(FamilyKind::Normal), Family(FamilyKind::Poisson)};
    spec.params = {{PredictorSpec{}, PredictorSpec{}}, {PredictorSpec{}}};
    const MixtureModel m(spec, response_table(y), "y");
    Eigen::VectorXd psi(5);
    psi << 2.0, 0.0, std::log(3.0), 0.0, 0.0;
    const Eigen::MatrixXd r = responsibilities(m, psi, all_rows(2));
    CHECK(r(0, 1) == 0.0);
    CHECK(r(0, 0) == 1.0);
    CHECK(r(1, 1) > 0.0);
  }

  TEST_CASE("likelihood and responsibilities match the naive formulas") {
    const FamilyKind kinds[] = {FamilyKind::Normal, FamilyKind::Laplace, FamilyKind::Logistic, FamilyKind::Poisson};
    for (int k = 0; k < 12; ++k) {
      const oracle::RandomModel rm = oracle::random_model(kinds[k % 4], 3, false, 0.0, 5, 90 + k);
      const RowSet rows = all_rows(5);
      const long double naive = oracle::naive_nll<long double>(rm.model, rm.psi);
      CHECK(std::fabs(nll(rm.model, rm.psi, rows) - static_cast<double>(naive)) <= 1e-10 * std::fabs(static_cast<double>(naive)));

      const Eigen::MatrixXd r = responsibilities(rm.model, rm.psi, rows);
      CHECK((r - oracle::naive_responsibilities(rm.model, rm.psi)).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((r.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-10);
      CHECK(r.minCoeff() >= 0.0);
      CHECK(r.maxCoeff() <= 1.0);

      // Prediction on the training rows reuses the same pipeline.
      const Eigen::VectorXd lp = log_density_rows(rm.model, rm.psi, rows);
      CHECK(-lp.sum() == doctest::Approx(nll(rm.model, rm.psi, rows)).epsilon(1e-13));
    }
  }

  TEST_CASE("extreme gating logits stay finite") {
    const oracle::ExtremeCase ex = oracle::extreme_gating_case(700.0);
    const double v = nll(ex.model, ex.psi, all_rows(1));
    CHECK(std::isfinite(v));
    CHECK(std::isinf(oracle::naive_nll<double>(ex.model, ex.psi)));
    // log π₂ = -1400, log f₂ = -log √(2π): the mixture is dominated by component 1 at 40 SDs.
    CHECK(v == doctest::Approx(800.0 + kHalfLog2Pi).epsilon(1e-12));
  }

  TEST_CASE("objective terms") {
    const oracle::RandomModel rm = oracle::random_model(FamilyKind::Normal, 3, false, 0.0, 30, 7);
    const RowSet rows = all_rows(30);
    CHECK(objective(rm.model, rm.psi, rows) == nll(rm.model, rm.psi, rows));

    Eigen::VectorXd degenerate = Eigen::VectorXd::Zero(4);
    degenerate(0) = 1.0;
    CHECK(entropy_penalty(degenerate, 0.5) == 0.0);
    CHECK(entropy_penalty(Eigen::VectorXd::Constant(4, 0.25), 0.5) == doctest::Approx(0.5 * std::log(4.0)).epsilon(1e-14));

    const MixtureModel with_xi = rm.model.with_xi(0.1);
    const ObjectiveTerms t = objective_terms(with_xi, rm.psi, rows);
    const Eigen::VectorXd pi_bar = marginal_weights(with_xi, rm.psi, rows);
    CHECK(t.entropy == doctest::Approx(30.0 * entropy_penalty(pi_bar, 0.1)).epsilon(1e-13));
    CHECK(t.entropy >= 0.0);
    CHECK(t.entropy <= 30.0 * 0.1 * std::log(3.0));
    CHECK(t.total == doctest::Approx(t.nll + t.smooth_penalty + t.entropy).epsilon(1e-14));
  }

  TEST_CASE("mini-batch penalty scaling") {
    const oracle::RandomModel rm = oracle::random_model(FamilyKind::Normal, 2, true, 0.0, 40, 17);
    const ObjectiveTerms full = objective_terms(rm.model, rm.psi, all_rows(40));
    const ObjectiveTerms half = objective_terms(rm.model, rm.psi, RowSet{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
    CHECK(full.smooth_penalty > 0.0);
    CHECK(half.smooth_penalty == doctest::Approx(full.smooth_penalty / 4.0).epsilon(1e-13));
  }

  TEST_CASE("gradient vanishes at the single-Normal MLE") {
    Eigen::VectorXd y(6);
    y << 0.3, -1.2, 2.4, 0.9, 1.1, -0.2;
    const MixtureModel m = intercept_normals(1, y);
    Eigen::VectorXd psi(3);
    const double mu = y.mean();
    psi << mu, 0.5 * std::log((y.array() - mu).square().mean()), 0.0;
    CHECK(gradient(m, psi, all_rows(6)).norm() < 1e-6);
  }

  TEST_CASE("gradient matches central differences") {
    const FamilyKind kinds[] = {FamilyKind::Normal, FamilyKind::Laplace, FamilyKind::Logistic, FamilyKind::Poisson};
    for (int k = 0; k < 8; ++k) {
      const double xi = k % 3 == 0 ? 0.0 : (k % 3 == 1 ? 0.01 : 0.1);
      const oracle::RandomModel rm = oracle::random_model(kinds[k % 4], 3, k % 2 == 1, xi, 20, 300 + k);
      const RowSet rows = all_rows(20);
      const Eigen::VectorXd fd = oracle::central_difference(
          [&](const Eigen::VectorXd& p) { return objective(rm.model, p, rows); }, rm.psi, 1e-6);
      CHECK(oracle::relative_error(gradient(rm.model, rm.psi, rows), fd) < 1e-4);
      const ObjectiveGradient og = objective_and_gradient(rm.model, rm.psi, rows);
      CHECK(og.terms.total == objective(rm.model, rm.psi, rows));
    }
  }

  TEST_CASE("prediction on new rows uses the training basis") {
    const oracle::RandomModel rm = oracle::random_model(FamilyKind::Normal, 2, true, 0.0, 60, 23);
    DataTable fresh;
    Eigen::VectorXd x1(2), x2(2), y(2);
    x1 << 0.2, -0.4;
    x2 << 0.5, 1.7;  // the second row lies outside the training range of x2
    y << 0.1, -0.3;
    fresh.add_numeric("x1", x1);
    fresh.add_numeric("x2", x2);
    int extrapolated = 0;
    const Eigen::VectorXd lp = predict_log_density(rm.model, rm.psi, fresh, y, &extrapolated);
    // One clamped row for each component's smooth.
    CHECK(extrapolated == 2);
    CHECK(lp.allFinite());
    const MixtureModel moved = rm.model.with_data(fresh, y);
    CHECK((log_density_rows(moved, rm.psi, all_rows(2)) - lp).cwiseAbs().maxCoeff() < 1e-14);
  }

  TEST_CASE("larger smoothing parameters give smoother fits") {
    Rng rng(5);
    std::uniform_real_distribution<double> u(0, 1);
    std::normal_distribution<double> z(0, 0.3);
    const Eigen::Index n = 300;
    Eigen::VectorXd x(n), y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      x(i) = u(rng);
      y(i) = std::sin(6 * x(i)) + z(rng);
    }
    DataTable data;
    data.add_numeric("x", x);
    data.add_numeric("y", y);
    double prev = INFINITY;
    for (double lambda : {0.1, 10.0, 1000.0}) {
      PredictorSpec loc;
      SmoothSpec s;
      s.vars = {"x"};
      s.basis.lambda = lambda;
      loc.smooth.push_back(s);
      ModelSpec spec;
      spec.families = {Family(FamilyKind::Normal)};
      spec.params = {{loc, PredictorSpec{}}};
      const MixtureModel m(spec, data, "y");
      const FitResult f = fit_fixed_responsibilities(m, Eigen::MatrixXd::Ones(n, 1));
      REQUIRE(f.ok());
      const double wiggle = m.design().penalty(f.psi) / lambda;
      CHECK(wiggle < prev);
      prev = wiggle;
    }
  }

  TEST_CASE("MAP labels") {
    Eigen::MatrixXd r(3, 3);
    r << 0.2, 0.5, 0.3, 0.9, 0.05, 0.05, 0.1, 0.1, 0.8;
    CHECK(map_labels(r) == std::vector<int>{1, 0, 2});
  }
}
