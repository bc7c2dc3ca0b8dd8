#include "moedr/experiments.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "moedr/error.hpp"
#include "moedr/metrics.hpp"

namespace moedr {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::uint64_t kTestSeedOffset = 1'000'003;

double safe_pls(const MixtureModel& model, const Eigen::VectorXd& psi, const DataTable& data,
                const Eigen::VectorXd& y) {
  try {
    const double v = predictive_log_score(model, psi, data, y);
    return std::isfinite(v) ? v : -kInf;
  } catch (const InvalidParameter&) {
    return -kInf;
  }
}

/// Worst RMSE between fitted location predictors and the true additive predictors on the grid.
double curve_rmse(const MixtureModel& model, const Eigen::VectorXd& psi, const LabelAssignment& a,
                  const DataTable& grid, int points) {
  const Eigen::MatrixXd eta = model.design().rebuild(grid).eval_eta(psi);
  double worst = 0.0;
  for (int t = 0; t < 3; ++t) {
    const int m = a.est_for_true(t);
    if (m < 0) return kInf;
    Eigen::VectorXd truth(points);
    for (int k = 0; k < points; ++k) {
      const double g = (k + 0.5) / points;
      truth(k) = additive_eta(t, g, g);
    }
    worst = std::max(worst, rmse(eta.row(model.spec().param_predictor(m, 0)).transpose(), truth));
  }
  return worst;
}

}  // namespace

OptimConfig nmdr_config(int restarts, std::uint64_t seed) {
  OptimConfig c;
  c.method = Method::Adam;
  c.learning_rate = 0.001;
  c.batch_size = 32;
  c.max_epochs = 2000;
  c.patience = 200;
  c.val_fraction = 0.1;
  c.restarts = restarts;
  c.seed = seed;
  return c;
}

double normal_baseline_pls(const Eigen::VectorXd& y_train, const Eigen::VectorXd& y_test) {
  const double mu = y_train.mean();
  const double var = (y_train.array() - mu).square().mean();
  const double c = -0.5 * std::log(2.0 * std::numbers::pi * var);
  return c - 0.5 * ((y_test.array() - mu).square() / var).mean();
}

MethodOutcome evaluate_fit(const std::string& method, const MixtureModel& model, const FitResult& fit,
                           const SimDataset& train, const SimDataset& test) {
  MethodOutcome out;
  out.method = method;
  out.seconds = fit.wall_time;
  if (!fit.ok()) {
    out.failed = true;
    out.failure = fit.failure.empty() ? "no result" : fit.failure;
    out.coef_rmse = out.pi_rmse = out.curve_rmse = kInf;
    out.train_pls = out.test_pls = -kInf;
    return out;
  }
  out.psi = fit.psi;
  const RowSet rows = all_rows(model.rows());
  const std::vector<int> est = map_labels(responsibilities(model, fit.psi, rows));
  const int true_m = static_cast<int>(train.true_pi.size());
  out.assignment = optimal_assignment(train.labels, est, true_m, model.components());
  out.accuracy = static_cast<double>(out.assignment.matches) / static_cast<double>(est.size());
  out.ari = adjusted_rand_index(train.labels, est);
  out.pi_hat = marginal_weights(model, fit.psi, rows);
  out.pi_rmse = weight_rmse(train.true_pi, out.pi_hat, out.assignment);
  out.coef_rmse = std::numeric_limits<double>::quiet_NaN();
  if (train.true_psi.size() == model.psi_size() && model.components() == true_m)
    out.coef_rmse = coefficient_rmse(model.spec(), model.design(), train.true_psi, fit.psi, out.assignment);
  out.train_pls = log_density_rows(model, fit.psi, rows).mean();
  out.test_pls = safe_pls(model, fit.psi, test.data, test.y);
  return out;
}

LinearComparison compare_linear(const SimDesign& design, const LinearSettings& settings) {
  const SimDataset train = simulate(design);
  const SimDataset test = resample(train, settings.test_rows > 0 ? settings.test_rows : design.n,
                                   design.seed + kTestSeedOffset);
  const MixtureModel model(train.true_spec, train.data, kResponse);
  LinearComparison out;
  if (settings.em) {
    EmConfig em = *settings.em;
    em.seed = design.seed;
    out.outcomes.push_back(evaluate_fit("EM", model, em_fit(model, em), train, test));
  }
  for (int r : settings.nmdr_restarts) {
    OptimConfig cfg = settings.optim.value_or(nmdr_config(r, design.seed));
    cfg.restarts = r;
    cfg.seed = design.seed;
    const std::string name = r == 1 ? "NMDR" : "NMDR_" + std::to_string(r);
    out.outcomes.push_back(evaluate_fit(name, model, fit(model, cfg), train, test));
  }
  out.baseline_pls = normal_baseline_pls(train.y, test.y);
  return out;
}

MethodOutcome fit_linear_nmdr(const SimDesign& design, int fit_components, double xi,
                              const OptimConfig& cfg, const std::string& method) {
  const SimDataset train = simulate(design);
  const SimDataset test = resample(train, design.n, design.seed + kTestSeedOffset);
  ModelSpec spec = linear_model_spec(design.family, fit_components, design.pm);
  spec.entropy_xi = xi;
  const MixtureModel model(spec, train.data, kResponse);
  return evaluate_fit(method, model, fit(model, cfg), train, test);
}

DataTable additive_grid(const SimDesign& design, int points) {
  Eigen::VectorXd g(points);
  for (int k = 0; k < points; ++k) g(k) = (k + 0.5) / points;
  DataTable grid;
  grid.add_numeric("x1", g);
  grid.add_numeric("x2", g);
  for (int k = 0; k < design.noise_vars; ++k)
    grid.add_numeric("z" + std::to_string(k + 1), Eigen::VectorXd::Constant(points, 0.5));
  grid.add_numeric("log_offset", Eigen::VectorXd::Zero(points));
  return grid;
}

std::vector<MethodOutcome> compare_additive(const SimDesign& design, const AdditiveSettings& settings) {
  constexpr int kPoints = 200;
  const SimDataset train = simulate(design);
  const SimDataset test = resample(train, settings.test_rows > 0 ? settings.test_rows : design.n,
                                   design.seed + kTestSeedOffset);
  const DataTable grid = additive_grid(design, kPoints);
  const bool poisson = design.family == FamilyKind::Poisson;
  const double df = settings.df >= 0.0 ? settings.df : (poisson ? 6.0 : 10.0);
  const MixtureModel model(additive_model_spec(design.family, 3, design.noise_vars, df, settings.num_basis),
                           train.data, kResponse);
  std::vector<MethodOutcome> out;

  auto finish = [&](MethodOutcome o, const MixtureModel& m) {
    if (!o.failed) o.curve_rmse = curve_rmse(m, o.psi, o.assignment, grid, kPoints);
    out.push_back(std::move(o));
  };

  OptimConfig cfg = settings.optim.value_or(nmdr_config(1, design.seed));
  cfg.seed = design.seed;
  finish(evaluate_fit("NMDR", model, fit(model, cfg), train, test), model);

  if (settings.em) {
    PredictorSpec lin;
    lin.linear = {"x1", "x2"};
    for (int k = 0; k < design.noise_vars; ++k) lin.linear.push_back("z" + std::to_string(k + 1));
    ModelSpec spec;
    spec.families.assign(3, Family(design.family));
    for (int m = 0; m < 3; ++m) {
      std::vector<PredictorSpec> params{lin};
      if (poisson) params[0].offset = "log_offset";
      else params.emplace_back();
      spec.params.push_back(params);
    }
    const MixtureModel em_model(spec, train.data, kResponse);
    EmConfig em;
    em.seed = design.seed;
    finish(evaluate_fit("EM", em_model, em_fit(em_model, em), train, test), em_model);
  }
  if (settings.oracle) {
    FitResult oracle;
    try {
      oracle = oracle_fit(model, train.labels);
    } catch (const Error& e) {
      oracle.failure = e.what();
    }
    finish(evaluate_fit("ORACLE", model, oracle, train, test), model);
  }
  return out;
}

SparsityOutcome evaluate_sparsity(const SimDataset& train, const MethodOutcome& fit) {
  SparsityOutcome s;
  s.fit = fit;
  if (fit.failed) {
    s.spurious_max = s.true_error = kInf;
    return s;
  }
  const Eigen::VectorXd& pi = fit.pi_hat;
  for (int m = 0; m < pi.size(); ++m) {
    const int t = fit.assignment.est_to_true[static_cast<std::size_t>(m)];
    if (t < fit.assignment.true_count)
      s.true_error = std::max(s.true_error, std::abs(pi(m) - train.true_pi(t)));
    else
      s.spurious_max = std::max(s.spurious_max, pi(m));
    if (pi(m) > 0.0) s.entropy -= pi(m) * std::log(pi(m));
  }
  return s;
}

}  // namespace moedr
