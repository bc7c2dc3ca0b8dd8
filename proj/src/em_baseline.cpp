#include "moedr/em_baseline.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Dense>

#include "moedr/error.hpp"
#include "moedr/optimizers.hpp"

namespace moedr {

void EmConfig::validate() const {
  if (max_iter < 1) throw SpecError("em.max_iter must be positive");
  if (!(tol > 0)) throw SpecError("em.tol must be positive");
  if (restarts < 1) throw SpecError("em.restarts must be positive");
  if (inner_steps < 1) throw SpecError("em.inner_steps must be positive");
  if (!(inner_lr > 0)) throw SpecError("em.inner_lr must be positive");
}

const std::vector<double>& loglik_trace(const FitResult& result) {
  if (result.loglik_trace.empty()) throw SpecError("fit result carries no EM log-likelihood trace");
  return result.loglik_trace;
}

namespace {

constexpr double kCollapse = 1e-8;

/// Dense design, penalty and offset of one predictor, all rows.
struct PredictorMatrix {
  Eigen::MatrixXd x;
  Eigen::MatrixXd s;  // Σ λ P blocks
  Eigen::VectorXd offset;
  Slice slice;
  bool penalized = false;
  bool intercept_only = false;
};

PredictorMatrix predictor_matrix(const DesignSet& d, int j) {
  const Predictor& p = d.predictor(j);
  PredictorMatrix pm;
  pm.slice = d.predictor_slice(j);
  pm.x.resize(d.rows(), p.width);
  pm.s = Eigen::MatrixXd::Zero(p.width, p.width);
  Eigen::Index col = 0;
  for (const auto& t : p.terms) {
    if (t->kind == TermKind::Intercept) {
      pm.x.col(col).setOnes();
    } else {
      pm.x.middleCols(col, t->width) = t->matrix;
    }
    if (t->penalized()) {
      pm.s.block(col, col, t->width, t->width) = t->lambda * t->penalty;
      pm.penalized = true;
    }
    col += t->width;
  }
  pm.offset = p.offset.size() ? p.offset : Eigen::VectorXd::Zero(d.rows());
  pm.intercept_only = p.terms.size() == 1 && p.terms.front()->kind == TermKind::Intercept;
  return pm;
}

struct StepFailure {
  std::string reason;
};

/// Component and gating M-steps for one model.
class MStep {
 public:
  MStep(const MixtureModel& model, const EmConfig& cfg) : model_(model), cfg_(cfg) {
    const ModelSpec& spec = model.spec();
    for (int j = 0; j < spec.theta_count(); ++j)
      mats_.push_back(predictor_matrix(model.design(), j));
    const Predictor& gate = model.design().predictor(spec.gating_predictor(0));
    if (gate.terms.empty() || gate.terms.front()->kind != TermKind::Intercept)
      throw SpecError("gating predictor needs an intercept for EM-type updates");
  }

  void gating(const Eigen::VectorXd& pi, Eigen::VectorXd& psi) const {
    const ModelSpec& spec = model_.spec();
    for (int m = 0; m < spec.components(); ++m) {
      const Slice sl = model_.design().predictor_slice(spec.gating_predictor(m));
      psi.segment(sl.start, sl.width).setZero();
      psi(sl.start) = std::log(pi(m));
    }
  }

  void component(int m, const Eigen::VectorXd& w, Eigen::VectorXd& psi) const {
    switch (model_.spec().families[static_cast<std::size_t>(m)].kind()) {
      case FamilyKind::Normal:
        normal(m, w, psi);
        break;
      case FamilyKind::Poisson:
        poisson(m, w, psi);
        break;
      case FamilyKind::Laplace:
      case FamilyKind::Logistic:
        adam(m, w, psi, 0);
        break;
    }
    check_boundary(m, psi);
  }

  /// Moment-based starting values, then a regular M-step.
  void initial_component(int m, const Eigen::VectorXd& w, Eigen::VectorXd& psi) const {
    const Family& f = model_.spec().families[static_cast<std::size_t>(m)];
    if (f.kind() == FamilyKind::Poisson) {
      const PredictorMatrix& r = mat(m, 0);
      psi.segment(r.slice.start, r.slice.width).setZero();
      const double mean = std::max(w.dot(model_.response()) / w.sum(), 1e-3);
      psi(r.slice.start) = std::log(mean);
    } else {
      const PredictorMatrix& loc = mat(m, 0);
      const PredictorMatrix& sc = mat(m, 1);
      psi.segment(sc.slice.start, sc.slice.width).setZero();
      const Eigen::VectorXd unit = Eigen::VectorXd::Ones(model_.rows());
      weighted_ls(loc, w, unit, psi);
      const Eigen::VectorXd mu = eta(loc, psi);
      const double var = (w.array() * (model_.response() - mu).array().square()).sum() / w.sum();
      psi(sc.slice.start) = 0.5 * std::log(std::max(var, 1e-12));
    }
    component(m, w, psi);
  }

 private:
  const PredictorMatrix& mat(int m, int j) const {
    return mats_[static_cast<std::size_t>(model_.spec().param_predictor(m, j))];
  }

  static Eigen::VectorXd eta(const PredictorMatrix& p, const Eigen::VectorXd& psi) {
    return p.x * psi.segment(p.slice.start, p.slice.width) + p.offset;
  }

  static Eigen::ArrayXd clamped_exp(const Eigen::VectorXd& e) {
    return e.array().max(-kEtaClamp).min(kEtaClamp).exp();
  }

  static Eigen::VectorXd solve_spd(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                                   const char* what) {
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-13))
      throw StepFailure{std::string("singular weighted design in ") + what};
    return llt.solve(b);
  }

  /// Weighted least squares for a location predictor with weights w / σ².
  void weighted_ls(const PredictorMatrix& loc, const Eigen::VectorXd& w,
                   const Eigen::VectorXd& inv_var, Eigen::VectorXd& psi) const {
    const Eigen::VectorXd wt = w.cwiseProduct(inv_var);
    const Eigen::MatrixXd a = loc.x.transpose() * wt.asDiagonal() * loc.x + 2.0 * loc.s;
    const Eigen::VectorXd rhs = loc.x.transpose() * wt.cwiseProduct(model_.response() - loc.offset);
    psi.segment(loc.slice.start, loc.slice.width) = solve_spd(a, rhs, "location update");
  }

  /// Damped Newton minimization of Σ w·loss(η) + bᵀSb for an exp-linked predictor.
  /// `terms` returns per-row (loss, first, second) derivatives in η.
  template <typename Terms>
  void newton(const PredictorMatrix& p, const Eigen::VectorXd& w, Eigen::VectorXd& psi,
              Terms terms, const char* what) const {
    auto seg = psi.segment(p.slice.start, p.slice.width);
    auto value = [&](const Eigen::VectorXd& b) {
      const Eigen::VectorXd e = p.x * b + p.offset;
      Eigen::ArrayXd loss, d1, d2;
      terms(e, loss, d1, d2);
      return (w.array() * loss).sum() + b.dot(p.s * b);
    };
    Eigen::VectorXd b = seg;
    double f = value(b);
    for (int it = 0; it < cfg_.inner_steps; ++it) {
      const Eigen::VectorXd e = p.x * b + p.offset;
      Eigen::ArrayXd loss, d1, d2;
      terms(e, loss, d1, d2);
      const Eigen::VectorXd g = p.x.transpose() * (w.array() * d1).matrix() + 2.0 * p.s * b;
      const Eigen::MatrixXd h =
          p.x.transpose() * (w.array() * d2).matrix().asDiagonal() * p.x + 2.0 * p.s;
      const Eigen::VectorXd step = solve_spd(h, g, what);
      double t = 1.0;
      bool improved = false;
      for (int halving = 0; halving < 40; ++halving, t *= 0.5) {
        const Eigen::VectorXd cand = b - t * step;
        const double fc = value(cand);
        if (std::isfinite(fc) && fc <= f) {
          improved = fc < f;
          b = cand;
          f = fc;
          break;
        }
      }
      if (!improved || (t * step).lpNorm<Eigen::Infinity>() < 1e-12) break;
    }
    seg = b;
  }

  void normal(int m, const Eigen::VectorXd& w, Eigen::VectorXd& psi) const {
    const PredictorMatrix& loc = mat(m, 0);
    const PredictorMatrix& sc = mat(m, 1);
    const Eigen::VectorXd inv_var = (-2.0 * eta(sc, psi)).array().max(-2 * kEtaClamp).min(2 * kEtaClamp).exp();
    weighted_ls(loc, w, inv_var, psi);
    const Eigen::ArrayXd d2 = (model_.response() - eta(loc, psi)).array().square();
    if (sc.intercept_only && !cfg_.newton) {
      const double v = (w.array() * d2 * (-2.0 * sc.offset.array()).exp()).sum() / w.sum();
      psi(sc.slice.start) = 0.5 * std::log(v);
    } else if (cfg_.newton) {
      // η + e^{-2η} d²/2 per row
      newton(sc, w, psi,
             [&](const Eigen::VectorXd& e, Eigen::ArrayXd& loss, Eigen::ArrayXd& g, Eigen::ArrayXd& h) {
               const Eigen::ArrayXd q = (-2.0 * e.array()).max(-2 * kEtaClamp).min(2 * kEtaClamp).exp() * d2;
               loss = e.array() + 0.5 * q;
               g = 1.0 - q;
               h = 2.0 * q;
             },
             "scale update");
    } else {
      adam(m, w, psi, 1);
    }
  }

  void poisson(int m, const Eigen::VectorXd& w, Eigen::VectorXd& psi) const {
    const PredictorMatrix& r = mat(m, 0);
    const Eigen::ArrayXd y = model_.response().array();
    if (r.intercept_only && !cfg_.newton) {
      const double num = (w.array() * y).sum();
      const double den = (w.array() * r.offset.array().exp()).sum();
      psi(r.slice.start) = std::log(num / den);
    } else if (cfg_.newton) {
      newton(r, w, psi,
             [&](const Eigen::VectorXd& e, Eigen::ArrayXd& loss, Eigen::ArrayXd& g, Eigen::ArrayXd& h) {
               const Eigen::ArrayXd rate = clamped_exp(e);
               loss = rate - y * e.array();
               g = rate - y;
               h = rate;
             },
             "rate update");
    } else {
      adam(m, w, psi, 0);
    }
  }

  /// Weighted penalized NLL of component m and its gradient over the component's slices.
  double component_nll(int m, const Eigen::VectorXd& w, const Eigen::VectorXd& psi,
                       Eigen::VectorXd* grad) const {
    const Family& f = model_.spec().families[static_cast<std::size_t>(m)];
    const int k = f.param_count();
    std::vector<Eigen::VectorXd> etas;
    for (int j = 0; j < k; ++j) etas.push_back(eta(mat(m, j), psi));
    std::vector<Eigen::VectorXd> d_eta(static_cast<std::size_t>(k), Eigen::VectorXd::Zero(model_.rows()));
    double total = 0.0;
    for (Eigen::Index i = 0; i < model_.rows(); ++i) {
      if (w(i) == 0.0) continue;
      ParamVec<double> theta(k);
      for (int j = 0; j < k; ++j) theta(j) = f.transform(j).apply(etas[static_cast<std::size_t>(j)](i));
      const double y = model_.response()(i);
      total -= w(i) * log_density(f, y, theta);
      if (grad) {
        const ParamVec<double> g = dlogf_dtheta(f, y, theta);
        for (int j = 0; j < k; ++j)
          d_eta[static_cast<std::size_t>(j)](i) =
              -w(i) * g(j) * f.transform(j).deriv(etas[static_cast<std::size_t>(j)](i));
      }
    }
    if (grad) grad->setZero(psi.size());
    for (int j = 0; j < k; ++j) {
      const PredictorMatrix& p = mat(m, j);
      const auto b = psi.segment(p.slice.start, p.slice.width);
      total += b.dot(p.s * b);
      if (grad)
        grad->segment(p.slice.start, p.slice.width) =
            p.x.transpose() * d_eta[static_cast<std::size_t>(j)] + 2.0 * p.s * b;
    }
    return total;
  }

  /// `inner_steps` of Adam on the weighted NLL over parameters first_param.. of component m;
  /// keeps the best iterate, so the weighted objective never increases.
  void adam(int m, const Eigen::VectorXd& w, Eigen::VectorXd& psi, int first_param) const {
    const Family& f = model_.spec().families[static_cast<std::size_t>(m)];
    Eigen::VectorXd mask = Eigen::VectorXd::Zero(psi.size());
    for (int j = first_param; j < f.param_count(); ++j)
      mask.segment(mat(m, j).slice.start, mat(m, j).slice.width).setOnes();
    Eigen::VectorXd current = psi;
    Eigen::VectorXd grad;
    double best = component_nll(m, w, current, nullptr);
    Eigen::VectorXd best_psi = psi;
    OptimizerState state(Method::Adam, psi.size());
    for (int it = 0; it < cfg_.inner_steps; ++it) {
      component_nll(m, w, current, &grad);
      state.step(current, grad.cwiseProduct(mask) / w.sum(), cfg_.inner_lr);
      const double fv = component_nll(m, w, current, nullptr);
      if (std::isfinite(fv) && fv < best) {
        best = fv;
        best_psi = current;
      }
    }
    psi = best_psi;
  }

  void check_boundary(int m, const Eigen::VectorXd& psi) const {
    const Family& f = model_.spec().families[static_cast<std::size_t>(m)];
    for (int j = 0; j < f.param_count(); ++j) {
      if (f.transform(j).kind != TransformKind::Exp) continue;
      const Eigen::VectorXd e = eta(mat(m, j), psi);
      if (!e.allFinite() || e.cwiseAbs().maxCoeff() >= kEtaClamp) {
        std::ostringstream os;
        os << "degenerate " << f.param_name(j) << " in component " << m + 1;
        throw StepFailure{os.str()};
      }
    }
  }

  const MixtureModel& model_;
  const EmConfig& cfg_;
  std::vector<PredictorMatrix> mats_;
};

void check_em_spec(const ModelSpec& spec) {
  if (!spec.gating.intercept_only())
    throw SpecError("EM baseline supports only constant (intercept-only) gating");
  for (std::size_t m = 0; m < spec.params.size(); ++m)
    for (const auto& p : spec.params[m])
      if (p.has_smooth())
        throw SpecError("EM baseline does not support smooth terms (component " +
                        std::to_string(m + 1) + ")");
}

struct EmRun {
  Eigen::VectorXd psi;
  std::vector<double> trace;
  int iterations = 0;
  bool converged = false;
  std::string failure;
};

Eigen::MatrixXd random_partition(Eigen::Index n, int M, Rng& rng) {
  // Random hard assignment softened slightly, so no component starts empty.
  Eigen::MatrixXd r = Eigen::MatrixXd::Constant(n, M, 0.05 / M);
  std::uniform_int_distribution<int> pick(0, M - 1);
  for (Eigen::Index i = 0; i < n; ++i) r(i, pick(rng)) += 0.95;
  return r;
}

EmRun run_em(const MixtureModel& model, const EmConfig& cfg, const MStep& mstep,
             const Eigen::VectorXd* init, Rng& rng) {
  const RowSet rows = all_rows(model.rows());
  const int M = model.components();
  EmRun run;
  try {
    Eigen::VectorXd psi;
    if (init) {
      psi = *init;
    } else {
      psi = Eigen::VectorXd::Zero(model.psi_size());
      const Eigen::MatrixXd r0 = random_partition(model.rows(), M, rng);
      mstep.gating(r0.colwise().mean().transpose(), psi);
      for (int m = 0; m < M; ++m) mstep.initial_component(m, r0.col(m), psi);
    }
    double prev = -nll(model, psi, rows);
    if (!std::isfinite(prev)) throw StepFailure{"non-finite log-likelihood at start"};
    for (int it = 0; it < cfg.max_iter; ++it) {
      const Eigen::MatrixXd r = responsibilities(model, psi, rows);
      const Eigen::VectorXd pi = r.colwise().mean().transpose();
      if (pi.minCoeff() < kCollapse) throw StepFailure{"component collapse"};
      mstep.gating(pi, psi);
      for (int m = 0; m < M; ++m) mstep.component(m, r.col(m), psi);
      const double ll = -nll(model, psi, rows);
      if (!std::isfinite(ll)) throw StepFailure{"non-finite log-likelihood"};
      run.trace.push_back(ll);
      run.iterations = it + 1;
      if (std::abs(ll - prev) <= cfg.tol * std::abs(prev)) {
        run.converged = true;
        break;
      }
      prev = ll;
    }
    run.psi = std::move(psi);
  } catch (const StepFailure& f) {
    run.failure = f.reason;
  } catch (const InvalidParameter& e) {
    run.failure = e.what();
  }
  return run;
}

}  // namespace

FitResult em_fit(const MixtureModel& model, const EmConfig& cfg, const Eigen::VectorXd* init) {
  cfg.validate();
  check_em_spec(model.spec());
  if (init && init->size() != model.psi_size())
    throw ShapeMismatch("initial coefficient vector does not match the model layout");
  const auto start_time = std::chrono::steady_clock::now();
  const MStep mstep(model, cfg);

  FitResult result;
  double best = -std::numeric_limits<double>::infinity();
  std::string last_failure;
  for (int r = 0; r < cfg.restarts; ++r) {
    Rng rng(cfg.seed + static_cast<std::uint64_t>(r));
    EmRun run = run_em(model, cfg, mstep, r == 0 ? init : nullptr, rng);
    ++result.restarts_run;
    if (!run.failure.empty()) {
      ++result.diverged_restarts;
      last_failure = run.failure;
      continue;
    }
    const double ll = run.trace.empty() ? -nll(model, run.psi, all_rows(model.rows())) : run.trace.back();
    if (ll > best) {
      best = ll;
      result.psi = std::move(run.psi);
      result.loglik_trace = run.trace;
      result.train_trace = run.trace;
      result.best_value = ll;
      result.restart_index = r;
      result.iterations = run.iterations;
      result.converged = run.converged;
    }
  }
  if (result.psi.size() == 0) {
    result.failure = "all EM restarts failed (last: " + last_failure + ")";
    result.converged = false;
  }
  result.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
  return result;
}

FitResult fit_fixed_responsibilities(const MixtureModel& model, const Eigen::MatrixXd& resp,
                                     const EmConfig& em_cfg) {
  em_cfg.validate();
  EmConfig cfg = em_cfg;
  cfg.newton = true;
  const int M = model.components();
  if (resp.rows() != model.rows() || resp.cols() != M)
    throw ShapeMismatch("responsibility matrix must be rows x components");
  const auto start_time = std::chrono::steady_clock::now();
  const MStep mstep(model, cfg);
  FitResult result;
  const Eigen::VectorXd pi = resp.colwise().mean().transpose();
  if (pi.minCoeff() <= 0.0) {
    result.failure = "a component has no observations";
    return result;
  }
  try {
    Eigen::VectorXd psi = Eigen::VectorXd::Zero(model.psi_size());
    mstep.gating(pi, psi);
    for (int m = 0; m < M; ++m) mstep.initial_component(m, resp.col(m), psi);
    for (int it = 0; it < cfg.max_iter; ++it) {
      const Eigen::VectorXd old = psi;
      for (int m = 0; m < M; ++m) mstep.component(m, resp.col(m), psi);
      result.iterations = it + 1;
      if ((psi - old).lpNorm<Eigen::Infinity>() < 1e-10) {
        result.converged = true;
        break;
      }
    }
    result.psi = std::move(psi);
    result.best_value = -nll(model, result.psi, all_rows(model.rows()));
  } catch (const StepFailure& f) {
    result.failure = f.reason;
  }
  result.restarts_run = 1;
  result.restart_index = 0;
  result.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
  return result;
}

}  // namespace moedr
