#include "moedr/optimizers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "moedr/error.hpp"

namespace moedr {

Method method_from_name(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "sgd") return Method::SGD;
  if (lower == "rmsprop") return Method::RMSprop;
  if (lower == "adam") return Method::Adam;
  if (lower == "adadelta") return Method::Adadelta;
  throw SpecError("unknown optimizer \"" + std::string(name) +
                  "\" (expected one of sgd, rmsprop, adam, adadelta)");
}

std::string_view method_name(Method method) {
  switch (method) {
    case Method::SGD: return "sgd";
    case Method::RMSprop: return "rmsprop";
    case Method::Adam: return "adam";
    case Method::Adadelta: return "adadelta";
  }
  return "?";
}

double default_learning_rate(Method method) {
  switch (method) {
    case Method::SGD: return 0.01;
    case Method::RMSprop: return 0.001;
    case Method::Adam: return 0.001;
    case Method::Adadelta: return 1.0;
  }
  return 0.001;
}

double CyclicLr::at(long step) const {
  const double half = 0.5 * static_cast<double>(period);
  const double cycle = std::floor(1.0 + static_cast<double>(step) / static_cast<double>(period));
  const double x = std::abs(static_cast<double>(step) / half - 2.0 * cycle + 1.0);
  return base + (max - base) * std::max(0.0, 1.0 - x);
}

void OptimConfig::validate() const {
  if (learning_rate && !(*learning_rate > 0)) throw SpecError("optimizer.learning_rate must be positive");
  if (batch_size < 1) throw SpecError("optimizer.batch_size must be positive");
  if (max_epochs < 1) throw SpecError("optimizer.max_epochs must be positive");
  if (patience < 0) throw SpecError("optimizer.patience must be non-negative");
  if (!(val_fraction > 0.0 && val_fraction < 0.5))
    throw SpecError("optimizer.val_fraction must lie in (0, 0.5)");
  if (restarts < 1) throw SpecError("optimizer.restarts must be positive");
  if (cyclic_lr) {
    if (!(cyclic_lr->base > 0 && cyclic_lr->max >= cyclic_lr->base))
      throw SpecError("optimizer.cyclic_lr needs 0 < base <= max");
    if (cyclic_lr->period < 2) throw SpecError("optimizer.cyclic_lr.period must be at least 2");
  }
}

namespace {
constexpr double kEps = 1e-7;
}

OptimizerState::OptimizerState(Method method, Eigen::Index size)
    : method_(method), first_(Eigen::VectorXd::Zero(size)), second_(Eigen::VectorXd::Zero(size)) {}

void OptimizerState::step(Eigen::VectorXd& psi, const Eigen::VectorXd& grad, double lr) {
  if (grad.size() != psi.size() || psi.size() != first_.size())
    throw ShapeMismatch("optimizer state, gradient and coefficients differ in length");
  ++t_;
  switch (method_) {
    case Method::SGD:
      psi.noalias() -= lr * grad;
      break;
    case Method::RMSprop: {
      constexpr double rho = 0.9;
      second_ = rho * second_ + (1.0 - rho) * grad.cwiseAbs2();
      psi.array() -= lr * grad.array() / (second_.array().sqrt() + kEps);
      break;
    }
    case Method::Adam: {
      constexpr double b1 = 0.9;
      constexpr double b2 = 0.999;
      first_ = b1 * first_ + (1.0 - b1) * grad;
      second_ = b2 * second_ + (1.0 - b2) * grad.cwiseAbs2();
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
      psi.array() -= lr * (first_.array() / c1) / ((second_.array() / c2).sqrt() + kEps);
      break;
    }
    case Method::Adadelta: {
      constexpr double rho = 0.95;
      // second_: E[g²], first_: E[Δ²]
      second_ = rho * second_ + (1.0 - rho) * grad.cwiseAbs2();
      const Eigen::ArrayXd delta =
          -((first_.array() + kEps).sqrt() / (second_.array() + kEps).sqrt()) * grad.array();
      first_ = rho * first_.array() + (1.0 - rho) * delta.square();
      psi.array() += lr * delta;
      break;
    }
  }
}

Eigen::VectorXd init_xavier(const DesignSet& design, Rng& rng) {
  Eigen::VectorXd psi = Eigen::VectorXd::Zero(design.psi_size());
  for (int j = 0; j < design.predictor_count(); ++j) {
    const Predictor& p = design.predictor(j);
    // Linear and categorical columns form one dense block; each smooth is its own block.
    Eigen::Index linear_width = 0;
    for (const auto& t : p.terms)
      if (t->kind == TermKind::Linear || t->kind == TermKind::Categorical) linear_width += t->width;
    for (std::size_t t = 0; t < p.terms.size(); ++t) {
      const Term& term = *p.terms[t];
      // A lone intercept is drawn like a width-one term so components start apart.
      if (term.kind == TermKind::Intercept && p.terms.size() > 1) continue;
      const Eigen::Index fan_in = term.kind == TermKind::Smooth    ? term.width
                                  : term.kind == TermKind::Intercept ? 1
                                                                     : linear_width;
      const double a = std::sqrt(6.0 / static_cast<double>(fan_in + 1));
      std::uniform_real_distribution<double> u(-a, a);
      for (Eigen::Index k = 0; k < term.width; ++k) psi(p.starts[t] + k) = u(rng);
    }
  }
  return psi;
}

namespace {

struct RestartOutcome {
  Eigen::VectorXd best_psi;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  int epochs = 0;
  std::vector<double> train_trace;
  std::vector<double> val_trace;
  bool diverged = false;
};

bool finite(const ObjectiveGradient& og) {
  return std::isfinite(og.terms.total) && og.gradient.allFinite();
}

RestartOutcome run_restart(const MixtureModel& model, const OptimConfig& cfg, const RowSet& train,
                           const RowSet& val, Eigen::VectorXd psi, Rng& rng) {
  RestartOutcome out;
  OptimizerState state(cfg.method, psi.size());
  const auto n_train = static_cast<Eigen::Index>(train.size());
  RowSet order = train;
  RowSet batch;
  int since_best = 0;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      batch.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                   order.begin() + static_cast<std::ptrdiff_t>(stop));
      ObjectiveGradient og;
      try {
        og = objective_and_gradient(model, psi, batch, n_train);
      } catch (const InvalidParameter&) {
        out.diverged = true;
      }
      if (out.diverged || !finite(og)) {
        out.diverged = true;
        out.epochs = epoch + 1;
        return out;
      }
      epoch_total += og.terms.total;
      const double lr = cfg.cyclic_lr ? cfg.cyclic_lr->at(state.steps()) : cfg.lr();
      og.gradient /= static_cast<double>(batch.size());
      state.step(psi, og.gradient, lr);
      if (!psi.allFinite()) {
        out.diverged = true;
        out.epochs = epoch + 1;
        return out;
      }
    }
    out.train_trace.push_back(epoch_total / static_cast<double>(n_train));

    double val_obj = std::numeric_limits<double>::quiet_NaN();
    try {
      val_obj = objective(model, psi, val, n_train) / static_cast<double>(val.size());
    } catch (const InvalidParameter&) {
    }
    out.val_trace.push_back(val_obj);
    out.epochs = epoch + 1;
    if (!std::isfinite(val_obj)) {
      out.diverged = true;
      return out;
    }
    if (val_obj < out.best_val) {
      out.best_val = val_obj;
      out.best_psi = psi;
      out.best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (since_best >= cfg.patience) break;
  }
  return out;
}

}  // namespace

FitResult fit(const MixtureModel& model, const OptimConfig& cfg, const Eigen::VectorXd* init) {
  cfg.validate();
  const auto start_time = std::chrono::steady_clock::now();
  const Eigen::Index n = model.rows();
  if (n < 2) throw SpecError("fitting needs at least two observations");
  if (init && init->size() != model.psi_size())
    throw ShapeMismatch("initial coefficient vector does not match the model layout");

  FitResult result;
  if (n < 2 * cfg.batch_size) {
    std::ostringstream os;
    os << "only " << n << " observations for batch size " << cfg.batch_size;
    result.warnings.push_back(os.str());
  }

  RowSet shuffled = all_rows(n);
  {
    Rng split_rng(cfg.seed);
    std::shuffle(shuffled.begin(), shuffled.end(), split_rng);
  }
  const auto n_val = std::clamp<Eigen::Index>(
      static_cast<Eigen::Index>(std::llround(cfg.val_fraction * static_cast<double>(n))), 1, n - 1);
  RowSet val(shuffled.begin(), shuffled.begin() + n_val);
  RowSet train(shuffled.begin() + n_val, shuffled.end());
  std::sort(val.begin(), val.end());

  // Data outside every component's support fails here; later failures mean divergence.
  {
    Rng rng(cfg.seed);
    const Eigen::VectorXd psi0 = init ? *init : init_xavier(model.design(), rng);
    (void)objective(model, psi0, all_rows(n), n);
  }

  double best = std::numeric_limits<double>::infinity();
  for (int r = 0; r < cfg.restarts; ++r) {
    Rng rng(cfg.seed + static_cast<std::uint64_t>(r));
    Eigen::VectorXd psi0 = (r == 0 && init) ? *init : init_xavier(model.design(), rng);
    RestartOutcome o = run_restart(model, cfg, train, val, std::move(psi0), rng);
    ++result.restarts_run;
    if (o.diverged) ++result.diverged_restarts;
    if (!o.diverged && o.best_psi.size() && o.best_val < best) {
      best = o.best_val;
      result.psi = std::move(o.best_psi);
      result.best_value = o.best_val;
      result.best_epoch = o.best_epoch;
      result.restart_index = r;
      result.iterations = o.epochs;
      result.train_trace = std::move(o.train_trace);
      result.val_trace = std::move(o.val_trace);
    }
  }
  if (result.psi.size() == 0) {
    result.diverged = true;
    result.failure = "all restarts diverged";
  } else {
    result.converged = true;
  }
  result.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
  return result;
}

}  // namespace moedr
