#include "moedr/mixture_model.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "moedr/error.hpp"

namespace moedr {

MixtureModel::MixtureModel(ModelSpec spec, const DataTable& data, const std::string& response)
    : spec_(std::move(spec)), design_(build_design(spec_, data)) {
  if (!data.has(response)) throw SpecError("unknown response column '" + response + "'");
  y_ = data.numeric(response);
  if (!y_.allFinite()) throw SpecError("response column '" + response + "' has non-finite values");
}

MixtureModel::MixtureModel(ModelSpec spec, DesignSet design, Eigen::VectorXd response)
    : spec_(std::move(spec)), design_(std::move(design)), y_(std::move(response)) {
  if (y_.size() != design_.rows()) throw ShapeMismatch("response length does not match design rows");
  if (design_.predictor_count() != spec_.predictor_count())
    throw ShapeMismatch("design does not match the model spec");
}

MixtureModel MixtureModel::with_data(const DataTable& data, const Eigen::VectorXd& response,
                                     int* extrapolated) const {
  return MixtureModel(spec_, design_.rebuild(data, extrapolated), response);
}

MixtureModel MixtureModel::with_xi(double xi) const {
  MixtureModel out = *this;
  out.spec_.entropy_xi = xi;
  return out;
}

Eigen::MatrixXd log_mixture_weights(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.cols(); ++i) {
    const double mx = logits.col(i).maxCoeff();
    const double lse = mx + std::log((logits.col(i).array() - mx).exp().sum());
    out.col(i) = logits.col(i).array() - lse;
  }
  return out;
}

Eigen::MatrixXd mixture_weights(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.cols(); ++i) {
    const Eigen::ArrayXd e = (logits.col(i).array() - logits.col(i).maxCoeff()).exp();
    out.col(i) = e / e.sum();
  }
  return out;
}

double entropy_penalty(const Eigen::VectorXd& pi_bar, double xi) {
  double h = 0.0;
  for (Eigen::Index m = 0; m < pi_bar.size(); ++m)
    if (pi_bar(m) > 0.0) h -= pi_bar(m) * std::log(pi_bar(m));
  return xi * h;
}

namespace {

/// Everything computed for one batch; `rows` and the M x b matrices line up column-wise.
struct BatchState {
  Eigen::MatrixXd eta;     // P x b
  Eigen::MatrixXd log_pi;  // M x b
  Eigen::MatrixXd log_f;   // M x b
  Eigen::VectorXd lse;     // b
};

// Eigen's vectorized exp clamps its argument, so exp(-inf) would come out subnormal
// rather than 0 for observations outside a component's support.
constexpr auto exact_exp = [](double v) { return std::exp(v); };

ParamVec<double> component_theta(const ModelSpec& spec, const Eigen::MatrixXd& eta, int m,
                                 Eigen::Index i) {
  const Family& f = spec.families[static_cast<std::size_t>(m)];
  const int base = spec.param_predictor(m, 0);
  ParamVec<double> theta(f.param_count());
  for (int j = 0; j < f.param_count(); ++j) theta(j) = f.transform(j).apply(eta(base + j, i));
  return theta;
}

BatchState evaluate(const MixtureModel& model, const Eigen::VectorXd& psi, const RowSet& rows) {
  if (rows.empty()) throw SpecError("empty batch");
  const ModelSpec& spec = model.spec();
  const int M = spec.components();
  const auto b = static_cast<Eigen::Index>(rows.size());

  BatchState s;
  s.eta = model.design().eval_eta(psi, rows);
  s.log_pi = log_mixture_weights(s.eta.bottomRows(M));
  s.log_f.resize(M, b);
  s.lse.resize(b);
  const Eigen::VectorXd& y = model.response();
  for (Eigen::Index i = 0; i < b; ++i) {
    const double yi = y(rows[static_cast<std::size_t>(i)]);
    for (int m = 0; m < M; ++m)
      s.log_f(m, i) = log_density(spec.families[static_cast<std::size_t>(m)], yi,
                                  component_theta(spec, s.eta, m, i));
    const auto a = (s.log_pi.col(i) + s.log_f.col(i)).array();
    const double mx = a.maxCoeff();
    if (!(mx > -std::numeric_limits<double>::infinity())) {
      std::ostringstream os;
      os << "observation " << rows[static_cast<std::size_t>(i)] << " (y = " << yi
         << ") lies outside the support of every component";
      throw InvalidParameter(os.str());
    }
    s.lse(i) = mx + std::log((a - mx).unaryExpr(exact_exp).sum());
  }
  return s;
}

Eigen::MatrixXd posterior(const BatchState& s) {
  Eigen::MatrixXd r = s.log_pi + s.log_f;
  r.rowwise() -= s.lse.transpose();
  return r.unaryExpr(exact_exp).eval();
}

}  // namespace

double nll(const MixtureModel& model, const Eigen::VectorXd& psi, const RowSet& rows) {
  return -evaluate(model, psi, rows).lse.sum();
}

Eigen::VectorXd log_density_rows(const MixtureModel& model, const Eigen::VectorXd& psi,
                                 const RowSet& rows) {
  return evaluate(model, psi, rows).lse;
}

Eigen::MatrixXd responsibilities(const MixtureModel& model, const Eigen::VectorXd& psi,
                                 const RowSet& rows) {
  return posterior(evaluate(model, psi, rows)).transpose();
}

Eigen::VectorXd marginal_weights(const MixtureModel& model, const Eigen::VectorXd& psi,
                                 const RowSet& rows) {
  if (rows.empty()) throw SpecError("empty batch");
  const int M = model.components();
  const Eigen::MatrixXd eta = model.design().eval_eta(psi, rows);
  return mixture_weights(eta.bottomRows(M)).rowwise().mean();
}

namespace {

ObjectiveTerms assemble(const MixtureModel& model, const Eigen::VectorXd& psi,
                        const BatchState& s, Eigen::Index b, Eigen::Index reference_rows,
                        Eigen::VectorXd* pi_bar_out) {
  const Eigen::Index n_ref = reference_rows > 0 ? reference_rows : model.rows();
  ObjectiveTerms t;
  t.nll = -s.lse.sum();
  t.smooth_penalty = static_cast<double>(b) / static_cast<double>(n_ref) * model.design().penalty(psi);
  const double xi = model.spec().entropy_xi;
  if (xi > 0.0 || pi_bar_out) {
    const Eigen::VectorXd pi_bar = s.log_pi.array().exp().rowwise().mean();
    t.entropy = static_cast<double>(b) * entropy_penalty(pi_bar, xi);
    if (pi_bar_out) *pi_bar_out = pi_bar;
  }
  t.total = t.nll + t.smooth_penalty + t.entropy;
  return t;
}

}  // namespace

ObjectiveTerms objective_terms(const MixtureModel& model, const Eigen::VectorXd& psi,
                               const RowSet& rows, Eigen::Index reference_rows) {
  const BatchState s = evaluate(model, psi, rows);
  return assemble(model, psi, s, static_cast<Eigen::Index>(rows.size()), reference_rows, nullptr);
}

double objective(const MixtureModel& model, const Eigen::VectorXd& psi, const RowSet& rows,
                 Eigen::Index reference_rows) {
  return objective_terms(model, psi, rows, reference_rows).total;
}

ObjectiveGradient objective_and_gradient(const MixtureModel& model, const Eigen::VectorXd& psi,
                                         const RowSet& rows, Eigen::Index reference_rows) {
  const ModelSpec& spec = model.spec();
  const int M = spec.components();
  const int K = spec.theta_count();
  const auto b = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index n_ref = reference_rows > 0 ? reference_rows : model.rows();

  const BatchState s = evaluate(model, psi, rows);
  Eigen::VectorXd pi_bar;
  ObjectiveGradient out;
  out.terms = assemble(model, psi, s, b, reference_rows, &pi_bar);

  const Eigen::MatrixXd r = posterior(s);
  const Eigen::MatrixXd pi = s.log_pi.array().exp().matrix();
  const Eigen::VectorXd& y = model.response();

  Eigen::MatrixXd d_eta = Eigen::MatrixXd::Zero(K + M, b);
  for (Eigen::Index i = 0; i < b; ++i) {
    const double yi = y(rows[static_cast<std::size_t>(i)]);
    for (int m = 0; m < M; ++m) {
      if (r(m, i) == 0.0) continue;
      const Family& f = spec.families[static_cast<std::size_t>(m)];
      const int base = spec.param_predictor(m, 0);
      const ParamVec<double> theta = component_theta(spec, s.eta, m, i);
      const ParamVec<double> g = dlogf_dtheta(f, yi, theta);
      for (int j = 0; j < f.param_count(); ++j)
        d_eta(base + j, i) = -r(m, i) * g(j) * f.transform(j).deriv(s.eta(base + j, i));
    }
  }
  d_eta.bottomRows(M) = pi - r;

  const double xi = spec.entropy_xi;
  if (xi > 0.0) {
    // d(b ξ H(π̄))/dη_{K+l,i} = ξ π_il (g_l - Σ_m π_im g_m), g_m = -(log π̄_m + 1)
    Eigen::VectorXd g(M);
    for (int m = 0; m < M; ++m) g(m) = pi_bar(m) > 0.0 ? -(std::log(pi_bar(m)) + 1.0) : 0.0;
    for (Eigen::Index i = 0; i < b; ++i) {
      const double avg = pi.col(i).dot(g);
      d_eta.block(K, i, M, 1).array() += xi * pi.col(i).array() * (g.array() - avg);
    }
  }

  out.gradient = model.design().backprop(d_eta, rows);
  model.design().add_penalty_gradient(psi, static_cast<double>(b) / static_cast<double>(n_ref),
                                      out.gradient);
  return out;
}

Eigen::VectorXd gradient(const MixtureModel& model, const Eigen::VectorXd& psi,
                         const RowSet& rows, Eigen::Index reference_rows) {
  return objective_and_gradient(model, psi, rows, reference_rows).gradient;
}

Eigen::VectorXd predict_log_density(const MixtureModel& model, const Eigen::VectorXd& psi,
                                    const DataTable& data, const Eigen::VectorXd& y,
                                    int* extrapolated) {
  if (y.size() != data.rows()) throw ShapeMismatch("response length does not match new data rows");
  const MixtureModel fresh = model.with_data(data, y, extrapolated);
  return log_density_rows(fresh, psi, all_rows(fresh.rows()));
}

Eigen::MatrixXd predicted_parameters(const MixtureModel& model, const Eigen::VectorXd& psi) {
  const ModelSpec& spec = model.spec();
  const int M = spec.components();
  const int K = spec.theta_count();
  const Eigen::MatrixXd eta = model.design().eval_eta(psi);
  Eigen::MatrixXd out(eta.cols(), K + M);
  for (int m = 0; m < M; ++m) {
    const Family& f = spec.families[static_cast<std::size_t>(m)];
    const int base = spec.param_predictor(m, 0);
    for (int j = 0; j < f.param_count(); ++j)
      for (Eigen::Index i = 0; i < eta.cols(); ++i)
        out(i, base + j) = f.transform(j).apply(eta(base + j, i));
  }
  out.rightCols(M) = mixture_weights(eta.bottomRows(M)).transpose();
  return out;
}

std::vector<int> map_labels(const Eigen::MatrixXd& resp) {
  std::vector<int> labels(static_cast<std::size_t>(resp.rows()));
  for (Eigen::Index i = 0; i < resp.rows(); ++i) {
    Eigen::Index best = 0;
    resp.row(i).maxCoeff(&best);
    labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return labels;
}

}  // namespace moedr
