#include "moedr/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "moedr/em_baseline.hpp"
#include "moedr/error.hpp"

namespace moedr {

Scenario scenario_from_name(std::string_view name) {
  if (name == "linear") return Scenario::LinearMixture;
  if (name == "additive") return Scenario::AdditiveMixture;
  if (name == "overfit") return Scenario::OverfitMixture;
  throw SpecError("unknown scenario \"" + std::string(name) +
                  "\" (expected one of linear, additive, overfit)");
}

std::string_view scenario_name(Scenario s) {
  switch (s) {
    case Scenario::LinearMixture: return "linear";
    case Scenario::AdditiveMixture: return "additive";
    case Scenario::OverfitMixture: return "overfit";
  }
  return "?";
}

void SimDesign::validate() const {
  switch (scenario) {
    case Scenario::LinearMixture:
      if (n != 300 && n != 2500) throw SpecError("n must be one of {300, 2500}");
      if (components != 2 && components != 3 && components != 5 && components != 10)
        throw SpecError("M must be one of {2, 3, 5, 10}");
      if (pm != 2 && pm != 10) throw SpecError("pm must be one of {2, 10}");
      if (family == FamilyKind::Poisson)
        throw SpecError("family must be one of {normal, laplace, logistic}");
      break;
    case Scenario::AdditiveMixture:
      if (n < 10) throw SpecError("n must be at least 10");
      if (components != 3) throw SpecError("M must be one of {3}");
      if (family != FamilyKind::Normal && family != FamilyKind::Poisson)
        throw SpecError("family must be one of {normal, poisson}");
      if (scale != 2.0 && scale != 4.0) throw SpecError("scale must be one of {2, 4}");
      if (noise_vars != 3 && noise_vars != 10) throw SpecError("noise-vars must be one of {3, 10}");
      break;
    case Scenario::OverfitMixture:
      if (n != 300 && n != 2500) throw SpecError("n must be one of {300, 2500}");
      if (components != 2) throw SpecError("M must be one of {2}");
      if (pm != 10) throw SpecError("pm must be one of {10}");
      if (family != FamilyKind::Normal) throw SpecError("family must be one of {normal}");
      break;
  }
}

double additive_f1(double x) { return 2.0 * std::sin(3.0 * x); }
double additive_f2(double x) { return std::exp(2.0 * x); }
double additive_f3(double x) {
  return 0.2 * std::pow(x, 11) * std::pow(10.0 * (1.0 - x), 6) +
         10.0 * std::pow(10.0 * x, 3) * std::pow(1.0 - x, 10);
}

double additive_eta(int m, double x1, double x2) {
  constexpr double beta0 = 0.5;
  switch (m) {
    case 0: return beta0 + additive_f1(x1) + additive_f2(x2);
    case 1: return beta0 + additive_f2(x1) + x2;
    case 2: return beta0 + x1 + additive_f3(x2);
    default: throw SpecError("additive scenario has three components");
  }
}

namespace {

std::string xname(int k) { return "x" + std::to_string(k + 1); }

Eigen::VectorXd dirichlet_weights(int M, double floor, Rng& rng) {
  std::exponential_distribution<double> ex(1.0);
  Eigen::VectorXd pi(M);
  do {
    for (int m = 0; m < M; ++m) pi(m) = ex(rng);
    pi /= pi.sum();
  } while (pi.minCoeff() < floor);
  return pi;
}

Eigen::MatrixXd uniform_matrix(Eigen::Index rows, Eigen::Index cols, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::MatrixXd out(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) out(r, c) = u(rng);
  return out;
}

std::vector<int> draw_labels(const Eigen::VectorXd& pi, Eigen::Index n, Rng& rng) {
  std::discrete_distribution<int> pick(pi.data(), pi.data() + pi.size());
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (auto& l : labels) l = pick(rng);
  return labels;
}

/// Linear location/scale draw shared by the linear and overfit scenarios.
void draw_linear(SimDataset& ds, Eigen::Index n, Rng& rng) {
  const SimTruth& t = ds.truth;
  const int pm = t.design.pm;
  const Family family(t.design.family);
  Eigen::MatrixXd x(n, pm + 1);
  x.col(0).setOnes();
  std::normal_distribution<double> z(0.0, 1.0);
  for (int k = 0; k < pm; ++k)
    for (Eigen::Index i = 0; i < n; ++i) x(i, k + 1) = z(rng);
  ds.labels = draw_labels(t.pi, n, rng);
  ds.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int m = ds.labels[static_cast<std::size_t>(i)];
    ParamVec<double> theta(2);
    theta(0) = x.row(i).dot(t.location.col(m));
    theta(1) = family.transform(1).apply(x.row(i).dot(t.scale.col(m)));
    ds.y(i) = sample(family, theta, rng);
  }
  ds.data = DataTable();
  for (int k = 0; k < pm; ++k) ds.data.add_numeric(xname(k), x.col(k + 1));
  ds.data.add_numeric(kResponse, ds.y);
}

Eigen::VectorXd linear_psi(const SimTruth& t, int fitted_components) {
  const int M = static_cast<int>(t.pi.size());
  const Eigen::Index w = t.location.rows();
  Eigen::VectorXd psi = Eigen::VectorXd::Zero(2 * w * fitted_components + fitted_components);
  for (int m = 0; m < M; ++m) {
    psi.segment(2 * w * m, w) = t.location.col(m);
    psi.segment(2 * w * m + w, w) = t.scale.col(m);
  }
  for (int m = 0; m < M; ++m) psi(2 * w * fitted_components + m) = std::log(t.pi(m));
  return psi;
}

void draw_additive(SimDataset& ds, Eigen::Index n, Rng& rng) {
  const SimDesign& d = ds.truth.design;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::VectorXd x1(n), x2(n);
  Eigen::MatrixXd noise(n, d.noise_vars);
  for (Eigen::Index i = 0; i < n; ++i) {
    x1(i) = u(rng);
    x2(i) = u(rng);
    for (int k = 0; k < d.noise_vars; ++k) noise(i, k) = u(rng);
  }
  ds.labels = draw_labels(ds.truth.pi, n, rng);
  ds.y.resize(n);
  const Family family(d.family);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double eta = additive_eta(ds.labels[static_cast<std::size_t>(i)], x1(i), x2(i));
    ParamVec<double> theta(family.param_count());
    if (d.family == FamilyKind::Poisson) {
      theta(0) = d.scale * family.transform(0).apply(eta);
    } else {
      theta(0) = eta;
      theta(1) = d.scale;
    }
    ds.y(i) = sample(family, theta, rng);
  }
  ds.data = DataTable();
  ds.data.add_numeric("x1", x1);
  ds.data.add_numeric("x2", x2);
  for (int k = 0; k < d.noise_vars; ++k) ds.data.add_numeric("z" + std::to_string(k + 1), noise.col(k));
  if (d.family == FamilyKind::Poisson)
    ds.data.add_numeric("log_offset", Eigen::VectorXd::Constant(n, std::log(d.scale)));
  ds.data.add_numeric(kResponse, ds.y);
}

}  // namespace

ModelSpec linear_model_spec(FamilyKind family, int components, int pm) {
  PredictorSpec p;
  for (int k = 0; k < pm; ++k) p.linear.push_back(xname(k));
  return ModelSpec::homogeneous(Family(family), components, p);
}

ModelSpec additive_model_spec(FamilyKind family, int components, int noise_vars, double df,
                              int num_basis) {
  PredictorSpec mean;
  BasisConfig basis;
  basis.num_basis = num_basis;
  basis.df = df;
  std::vector<std::string> vars = {"x1", "x2"};
  for (int k = 0; k < noise_vars; ++k) vars.push_back("z" + std::to_string(k + 1));
  for (const auto& v : vars) mean.smooth.push_back(SmoothSpec{{v}, basis});
  ModelSpec spec;
  const Family f(family);
  spec.families.assign(static_cast<std::size_t>(components), f);
  for (int m = 0; m < components; ++m) {
    std::vector<PredictorSpec> params{mean};
    if (family == FamilyKind::Poisson) {
      params[0].offset = "log_offset";
    } else {
      params.push_back(PredictorSpec{});  // constant scale
    }
    spec.params.push_back(params);
  }
  return spec;
}

SimDataset gen_linear_mixture(const SimDesign& design) {
  if (design.scenario != Scenario::LinearMixture) throw SpecError("design is not a linear mixture");
  design.validate();
  Rng rng(design.seed);
  SimDataset ds;
  ds.truth.design = design;
  ds.truth.pi = dirichlet_weights(design.components, 0.03, rng);
  ds.truth.location = uniform_matrix(design.pm + 1, design.components, -2.0, 2.0, rng);
  ds.truth.scale = uniform_matrix(design.pm + 1, design.components, -2.0, 2.0, rng);
  draw_linear(ds, design.n, rng);
  ds.true_pi = ds.truth.pi;
  ds.true_spec = linear_model_spec(design.family, design.components, design.pm);
  ds.true_psi = linear_psi(ds.truth, design.components);
  return ds;
}

SimDataset gen_overfit_mixture(const SimDesign& design) {
  if (design.scenario != Scenario::OverfitMixture) throw SpecError("design is not an overfit mixture");
  design.validate();
  Rng rng(design.seed);
  SimDataset ds;
  ds.truth.design = design;
  std::uniform_real_distribution<double> u(0.06, 0.094);
  double p1 = u(rng);
  while (p1 <= 0.06) p1 = u(rng);
  ds.truth.pi = Eigen::Vector2d(p1, 1.0 - p1);
  ds.truth.location = uniform_matrix(design.pm + 1, 2, -2.0, 2.0, rng);
  ds.truth.scale = uniform_matrix(design.pm + 1, 2, -2.0, 2.0, rng);
  draw_linear(ds, design.n, rng);
  ds.true_pi = ds.truth.pi;
  ds.true_spec = linear_model_spec(FamilyKind::Normal, 2, design.pm);
  ds.true_psi = linear_psi(ds.truth, 2);
  return ds;
}

SimDataset gen_additive_mixture(const SimDesign& design) {
  if (design.scenario != Scenario::AdditiveMixture) throw SpecError("design is not an additive mixture");
  design.validate();
  Rng rng(design.seed);
  SimDataset ds;
  ds.truth.design = design;
  ds.truth.pi = design.uniform_weights ? Eigen::Vector3d::Constant(1.0 / 3.0).eval()
                                       : Eigen::Vector3d(0.1, 0.3, 0.6).eval();
  draw_additive(ds, design.n, rng);
  ds.true_pi = ds.truth.pi;
  ds.true_spec = additive_model_spec(design.family, 3, design.noise_vars,
                                     design.family == FamilyKind::Poisson ? 6.0 : 10.0);
  return ds;
}

SimDataset simulate(const SimDesign& design) {
  switch (design.scenario) {
    case Scenario::LinearMixture: return gen_linear_mixture(design);
    case Scenario::AdditiveMixture: return gen_additive_mixture(design);
    case Scenario::OverfitMixture: return gen_overfit_mixture(design);
  }
  throw SpecError("unknown scenario");
}

SimDataset resample(const SimDataset& source, Eigen::Index n, std::uint64_t seed) {
  SimDataset ds;
  ds.truth = source.truth;
  ds.true_pi = source.true_pi;
  ds.true_psi = source.true_psi;
  ds.true_spec = source.true_spec;
  Rng rng(seed);
  if (source.truth.design.scenario == Scenario::AdditiveMixture) {
    draw_additive(ds, n, rng);
  } else {
    draw_linear(ds, n, rng);
  }
  return ds;
}

FitResult oracle_fit(const MixtureModel& model, std::span<const int> labels) {
  const int M = model.components();
  if (static_cast<Eigen::Index>(labels.size()) != model.rows())
    throw ShapeMismatch("label count does not match model rows");
  Eigen::MatrixXd resp = Eigen::MatrixXd::Zero(model.rows(), M);
  std::vector<Eigen::Index> counts(static_cast<std::size_t>(M), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= M) throw SpecError("label outside the model's components");
    resp(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
    ++counts[static_cast<std::size_t>(labels[i])];
  }
  const ModelSpec& spec = model.spec();
  for (int m = 0; m < M; ++m) {
    Eigen::Index width = 0;
    for (int j = 0; j < spec.families[static_cast<std::size_t>(m)].param_count(); ++j)
      width = std::max(width, model.design().predictor_slice(spec.param_predictor(m, j)).width);
    if (counts[static_cast<std::size_t>(m)] < width) {
      std::ostringstream os;
      os << "component " << m + 1 << " has " << counts[static_cast<std::size_t>(m)]
         << " rows but " << width << " coefficients";
      throw SpecError(os.str());
    }
  }
  EmConfig cfg;
  cfg.max_iter = 200;
  return fit_fixed_responsibilities(model, resp, cfg);
}

}  // namespace moedr
