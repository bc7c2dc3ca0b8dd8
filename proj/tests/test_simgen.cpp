#include <doctest.h>

#include <cmath>
#include <numbers>

#include "moedr/em_baseline.hpp"
#include "moedr/error.hpp"
#include "moedr/simgen.hpp"

using namespace moedr;

TEST_SUITE("simgen") {
  TEST_CASE("linear design weights respect the three percent floor") {
    double smallest = 1.0;
    const int Ms[] = {2, 3, 5, 10};
    for (int k = 0; k < 1000; ++k) {
      SimDesign d;
      d.n = 300;
      d.components = Ms[k % 4];
      d.seed = static_cast<std::uint64_t>(k);
      const SimDataset ds = simulate(d);
      smallest = std::min(smallest, ds.true_pi.minCoeff());
      CHECK(ds.true_pi.sum() == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(smallest >= 0.03);
  }

  TEST_CASE("true coefficient layouts") {
    SimDesign d;
    d.n = 300;
    CHECK(simulate(d).true_psi.size() == 14);
    SimDesign o;
    o.scenario = Scenario::OverfitMixture;
    o.n = 300;
    o.pm = 10;
    CHECK(simulate(o).true_psi.size() == 46);
  }

  TEST_CASE("linear data follow the truth") {
    SimDesign d;
    d.n = 2500;
    d.pm = 2;
    d.seed = 9;
    const SimDataset ds = simulate(d);
    CHECK(ds.data.rows() == 2500);
    CHECK(ds.data.has("x1"));
    CHECK(ds.data.has("x2"));
    const Eigen::VectorXd& x1 = ds.data.numeric("x1");
    const Eigen::VectorXd& x2 = ds.data.numeric("x2");
    const SimTruth& t = ds.truth;
    CHECK(t.location.cwiseAbs().maxCoeff() <= 2.0);
    CHECK(t.scale.cwiseAbs().maxCoeff() <= 2.0);
    // Standardized residuals are N(0, 1) overall.
    double s1 = 0.0, s2 = 0.0;
    for (Eigen::Index i = 0; i < ds.data.rows(); ++i) {
      const int m = ds.labels[static_cast<std::size_t>(i)];
      const double mu = t.location(0, m) + t.location(1, m) * x1(i) + t.location(2, m) * x2(i);
      const double sd = std::exp(t.scale(0, m) + t.scale(1, m) * x1(i) + t.scale(2, m) * x2(i));
      const double r = (ds.y(i) - mu) / sd;
      s1 += r;
      s2 += r * r;
    }
    const double n = 2500.0;
    CHECK(std::fabs(s1 / n) < 3.5 / std::sqrt(n));
    CHECK(std::fabs(s2 / n - 1.0) < 3.5 * std::sqrt(2.0 / n));
  }

  TEST_CASE("same seed, same data") {
    SimDesign d;
    d.n = 300;
    d.components = 3;
    d.seed = 4;
    const SimDataset a = simulate(d), b = simulate(d);
    CHECK(a.y == b.y);
    CHECK(a.labels == b.labels);
    CHECK(a.true_psi == b.true_psi);
    d.seed = 5;
    CHECK(simulate(d).y != a.y);
  }

  TEST_CASE("additive functions") {
    CHECK(additive_f1(0.0) == 0.0);
    CHECK(additive_f2(0.0) == 1.0);
    CHECK(additive_f1(std::numbers::pi / 6) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(additive_f3(0.0) == 0.0);
    CHECK(additive_f3(1.0) == 0.0);
    CHECK(additive_eta(2, 0.3, 0.0) == doctest::Approx(0.8));
    CHECK_THROWS_AS(additive_eta(3, 0.0, 0.0), SpecError);
  }

  TEST_CASE("additive Gaussian residual spread") {
    SimDesign d;
    d.scenario = Scenario::AdditiveMixture;
    d.components = 3;
    d.n = 100000;
    d.seed = 12;
    const SimDataset ds = simulate(d);
    const Eigen::VectorXd& x1 = ds.data.numeric("x1");
    const Eigen::VectorXd& x2 = ds.data.numeric("x2");
    double ss = 0.0;
    for (Eigen::Index i = 0; i < d.n; ++i) {
      const double r = ds.y(i) - additive_eta(ds.labels[static_cast<std::size_t>(i)], x1(i), x2(i));
      ss += r * r;
    }
    CHECK(std::fabs(std::sqrt(ss / d.n) - 2.0) < 0.02);
    CHECK(ds.data.has("z3"));
    CHECK_FALSE(ds.data.has("z4"));
    CHECK(ds.data.numeric("z1").minCoeff() >= 0.0);
    CHECK(ds.data.numeric("z1").maxCoeff() <= 1.0);
  }

  TEST_CASE("additive Poisson rates carry the offset") {
    SimDesign d;
    d.scenario = Scenario::AdditiveMixture;
    d.components = 3;
    d.family = FamilyKind::Poisson;
    d.scale = 4.0;
    d.uniform_weights = false;
    d.n = 20000;
    d.seed = 3;
    const SimDataset ds = simulate(d);
    CHECK(ds.true_pi(0) == doctest::Approx(0.1));
    CHECK(ds.true_pi(2) == doctest::Approx(0.6));
    CHECK(ds.data.numeric("log_offset")(0) == doctest::Approx(std::log(4.0)));
    const Eigen::VectorXd& x1 = ds.data.numeric("x1");
    const Eigen::VectorXd& x2 = ds.data.numeric("x2");
    double resid = 0.0, var = 0.0;
    for (Eigen::Index i = 0; i < d.n; ++i) {
      const double rate = 4.0 * std::exp(additive_eta(ds.labels[static_cast<std::size_t>(i)], x1(i), x2(i)));
      CHECK(ds.y(i) == std::floor(ds.y(i)));
      resid += ds.y(i) - rate;
      var += rate;
    }
    CHECK(std::fabs(resid) < 3.5 * std::sqrt(var));
  }

  TEST_CASE("overfit design weights") {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      SimDesign d;
      d.scenario = Scenario::OverfitMixture;
      d.n = 300;
      d.pm = 10;
      d.seed = seed;
      const SimDataset ds = simulate(d);
      CHECK(ds.true_pi(0) > 0.06);
      CHECK(ds.true_pi(0) < 0.094);
      CHECK(ds.true_pi(0) + ds.true_pi(1) == 1.0);
    }
  }

  TEST_CASE("design grid validation") {
    SimDesign d;
    d.n = 1000;
    CHECK_THROWS_AS(simulate(d), SpecError);
    d.n = 300;
    d.components = 4;
    CHECK_THROWS_AS(simulate(d), SpecError);
    d.components = 2;
    d.family = FamilyKind::Poisson;
    CHECK_THROWS_AS(simulate(d), SpecError);
    SimDesign a;
    a.scenario = Scenario::AdditiveMixture;
    a.components = 3;
    a.family = FamilyKind::Laplace;
    CHECK_THROWS_AS(simulate(a), SpecError);
    CHECK(scenario_from_name("overfit") == Scenario::OverfitMixture);
    try {
      scenario_from_name("4.1");
      FAIL("expected an error");
    } catch (const SpecError& e) {
      CHECK(std::string(e.what()).find("linear") != std::string::npos);
    }
  }

  TEST_CASE("resampling keeps the truth") {
    SimDesign d;
    d.n = 300;
    d.seed = 8;
    const SimDataset a = simulate(d);
    const SimDataset b = resample(a, 500, 99);
    CHECK(b.data.rows() == 500);
    CHECK(b.true_psi == a.true_psi);
    CHECK(b.y.head(10) != a.y.head(10));
  }

  TEST_CASE("label oracle solves the weighted least squares conditions") {
    SimDesign d;
    d.n = 2500;
    d.seed = 21;
    const SimDataset ds = simulate(d);
    const MixtureModel m(ds.true_spec, ds.data, kResponse);
    const FitResult o = oracle_fit(m, ds.labels);
    REQUIRE(o.ok());
    const Eigen::MatrixXd eta = m.design().eval_eta(o.psi);
    const Eigen::VectorXd& x1 = ds.data.numeric("x1");
    const Eigen::VectorXd& x2 = ds.data.numeric("x2");
    for (int c = 0; c < 2; ++c) {
      std::vector<Eigen::Index> rows;
      for (Eigen::Index i = 0; i < d.n; ++i)
        if (ds.labels[static_cast<std::size_t>(i)] == c) rows.push_back(i);
      const Eigen::Index k = static_cast<Eigen::Index>(rows.size());
      Eigen::MatrixXd x(k, 3);
      Eigen::VectorXd y(k), w(k);
      for (Eigen::Index r = 0; r < k; ++r) {
        const Eigen::Index i = rows[static_cast<std::size_t>(r)];
        x.row(r) << 1.0, x1(i), x2(i);
        y(r) = ds.y(i);
        w(r) = std::exp(-2.0 * eta(m.spec().param_predictor(c, 1), i));
      }
      const Eigen::MatrixXd xtw = x.transpose() * w.asDiagonal();
      const Eigen::VectorXd beta = (xtw * x).ldlt().solve(xtw * y);
      const Slice loc = m.design().predictor_slice(m.spec().param_predictor(c, 0));
      CHECK((o.psi.segment(loc.start, 3) - beta).cwiseAbs().maxCoeff() < 1e-4);
      // Weights are the label frequencies.
      CHECK(mixture_weights(o.psi.tail(2))(c) == doctest::Approx(static_cast<double>(k) / d.n).epsilon(1e-10));
    }
  }

  TEST_CASE("oracle rejects components with too few rows") {
    SimDesign d;
    d.scenario = Scenario::OverfitMixture;
    d.n = 300;
    d.pm = 10;
    d.seed = 1;
    const SimDataset ds = simulate(d);
    std::vector<int> labels(300, 0);
    for (int i = 0; i < 5; ++i) labels[static_cast<std::size_t>(i)] = 1;
    const MixtureModel m(ds.true_spec, ds.data, kResponse);
    CHECK_THROWS_AS(oracle_fit(m, labels), SpecError);
  }
}
