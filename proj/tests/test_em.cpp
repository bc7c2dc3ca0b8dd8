#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "moedr/em_baseline.hpp"
#include "moedr/error.hpp"
#include "moedr/metrics.hpp"
#include "moedr/simgen.hpp"
#include "oracles.hpp"

using namespace moedr;

namespace {

/// Two Normal components with linear location and scale in x1, x2 and well separated means.
struct Separated {
  MixtureModel model;
  Eigen::VectorXd truth;
  std::vector<int> labels;
};

Separated separated_mixture(std::uint64_t seed) {
  const Eigen::Index n = 2500;
  Rng rng(seed);
  std::normal_distribution<double> z;
  Eigen::VectorXd x1(n), x2(n), y(n);
  std::vector<int> labels(static_cast<std::size_t>(n));
  // Per component: location (b0, b1, b2), log scale (c0, c1, c2).
  const double loc[2][3] = {{-6.0, 1.0, -0.5}, {6.0, -1.5, 0.8}};
  const double lsc[2][3] = {{-0.5, 0.2, 0.0}, {0.0, -0.1, 0.3}};
  for (Eigen::Index i = 0; i < n; ++i) {
    x1(i) = z(rng);
    x2(i) = z(rng);
    const int m = std::uniform_real_distribution<double>(0, 1)(rng) < 0.4 ? 0 : 1;
    labels[static_cast<std::size_t>(i)] = m;
    const double mu = loc[m][0] + loc[m][1] * x1(i) + loc[m][2] * x2(i);
    const double sd = std::exp(lsc[m][0] + lsc[m][1] * x1(i) + lsc[m][2] * x2(i));
    y(i) = mu + sd * z(rng);
  }
  DataTable data;
  data.add_numeric("x1", x1);
  data.add_numeric("x2", x2);
  data.add_numeric("y", y);
  MixtureModel model(linear_model_spec(FamilyKind::Normal, 2, 2), data, "y");
  Eigen::VectorXd truth(14);
  truth << loc[0][0], loc[0][1], loc[0][2], lsc[0][0], lsc[0][1], lsc[0][2], loc[1][0], loc[1][1], loc[1][2],
      lsc[1][0], lsc[1][1], lsc[1][2], std::log(0.4), std::log(0.6);
  return {std::move(model), truth, labels};
}

}  // namespace

TEST_SUITE("em_baseline") {
  TEST_CASE("one component reaches the closed-form MLE") {
    const oracle::SingleNormal s = oracle::single_normal_data(500, 3);
    const MixtureModel m(s.spec, s.data, "y");
    EmConfig c;
    c.restarts = 1;
    const FitResult f = em_fit(m, c);
    REQUIRE(f.ok());
    CHECK((f.psi.head(4) - s.mle).cwiseAbs().maxCoeff() < 1e-6);

    // The trace hits the MLE log-likelihood within two iterations.
    Eigen::VectorXd at_mle = f.psi;
    at_mle.head(4) = s.mle;
    const double best = -nll(m, at_mle, all_rows(500));
    const std::vector<double>& trace = loglik_trace(f);
    REQUIRE_FALSE(trace.empty());
    CHECK(trace.size() <= 2);
    CHECK(std::fabs(trace.back() - best) < 1e-6 * std::fabs(best));
  }

  TEST_CASE("identical components are a fixed point") {
    Rng rng(2);
    std::normal_distribution<double> z(1.0, 2.0);
    Eigen::VectorXd y(300);
    for (auto& v : y) v = z(rng);
    DataTable data;
    data.add_numeric("y", y);
    const MixtureModel m(ModelSpec::homogeneous(Family(FamilyKind::Normal), 2, PredictorSpec{}), data, "y");
    Eigen::VectorXd init(6);
    init << 0.5, 0.3, 0.5, 0.3, std::log(0.25), std::log(0.75);
    EmConfig c;
    c.restarts = 1;
    c.max_iter = 20;
    const FitResult f = em_fit(m, c, &init);
    REQUIRE(f.ok());
    CHECK(f.psi(0) == doctest::Approx(f.psi(2)).epsilon(1e-12));
    CHECK(f.psi(1) == doctest::Approx(f.psi(3)).epsilon(1e-12));
    const Eigen::VectorXd pi = mixture_weights(f.psi.tail(2));
    CHECK(pi(0) == doctest::Approx(0.25).epsilon(1e-12));
  }

  TEST_CASE("well separated linear mixture") {
    const Separated s = separated_mixture(17);
    EmConfig c;
    c.restarts = 5;
    const FitResult f = em_fit(s.model, c);
    REQUIRE(f.ok());
    const std::vector<int> est = map_labels(responsibilities(s.model, f.psi, all_rows(s.model.rows())));
    const LabelAssignment a = optimal_assignment(s.labels, est, 2, 2);
    const double err = coefficient_rmse(s.model.spec(), s.model.design(), s.truth, f.psi, a);
    CHECK(err < 0.1);

    // The label oracle fit lies close to the EM solution.
    const FitResult o = oracle_fit(s.model, s.labels);
    REQUIRE(o.ok());
    CHECK(coefficient_rmse(s.model.spec(), s.model.design(), o.psi, f.psi, a) < 0.05);
  }

  TEST_CASE("log-likelihood traces ascend") {
    for (std::uint64_t seed : {1, 2, 3}) {
      SimDesign d;
      d.n = 300;
      d.seed = seed;
      const SimDataset ds = simulate(d);
      const MixtureModel m(ds.true_spec, ds.data, kResponse);
      EmConfig c;
      c.restarts = 3;
      c.seed = seed;
      const FitResult f = em_fit(m, c);
      if (!f.ok()) continue;
      const std::vector<double>& t = loglik_trace(f);
      for (std::size_t k = 1; k < t.size(); ++k) CHECK(t[k] >= t[k - 1] - 1e-4 * std::fabs(t[k - 1]));
    }
  }

  TEST_CASE("infinite tolerance stops after one iteration") {
    const oracle::SingleNormal s = oracle::single_normal_data(100, 5);
    EmConfig c;
    c.restarts = 1;
    c.tol = std::numeric_limits<double>::infinity();
    const FitResult f = em_fit(MixtureModel(s.spec, s.data, "y"), c);
    CHECK(loglik_trace(f).size() == 1);
  }

  TEST_CASE("unsupported specs are rejected") {
    const oracle::RandomModel smooth = oracle::random_model(FamilyKind::Normal, 2, true, 0.0, 40, 1);
    CHECK_THROWS_AS(em_fit(smooth.model, EmConfig{}), SpecError);
    const oracle::RandomModel gated = oracle::random_model(FamilyKind::Normal, 2, false, 0.0, 40, 1);
    CHECK_THROWS_AS(em_fit(gated.model, EmConfig{}), SpecError);
    EmConfig bad;
    bad.restarts = 0;
    CHECK_THROWS_AS(bad.validate(), SpecError);
  }
}
