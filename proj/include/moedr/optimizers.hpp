#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <string_view>

#include "moedr/fit_result.hpp"
#include "moedr/mixture_model.hpp"

namespace moedr {

enum class Method { SGD, RMSprop, Adam, Adadelta };

Method method_from_name(std::string_view name);
std::string_view method_name(Method method);
double default_learning_rate(Method method);

/// Triangular cyclic learning rate: rises from `base` to `max` and back every `period` steps.
struct CyclicLr {
  double base = 1e-4;
  double max = 1e-2;
  long period = 2000;

  double at(long step) const;
};

struct OptimConfig {
  Method method = Method::Adam;
  std::optional<double> learning_rate;  ///< defaults per method when absent
  int batch_size = 32;
  int max_epochs = 500;
  int patience = 50;
  double val_fraction = 0.1;
  int restarts = 1;
  std::uint64_t seed = 1;
  std::optional<CyclicLr> cyclic_lr;

  double lr() const { return learning_rate.value_or(default_learning_rate(method)); }
  void validate() const;
};

/// Accumulators of one adaptive method. Hyperparameters follow the common
/// deep-learning defaults (ε = 1e-7; RMSprop ρ = 0.9; Adam β = (0.9, 0.999);
/// Adadelta ρ = 0.95).
class OptimizerState {
 public:
  OptimizerState(Method method, Eigen::Index size);

  /// psi ← psi - update(grad, lr); `grad` is the mean per-observation gradient.
  void step(Eigen::VectorXd& psi, const Eigen::VectorXd& grad, double lr);
  long steps() const { return t_; }

 private:
  Method method_;
  long t_ = 0;
  Eigen::VectorXd first_;
  Eigen::VectorXd second_;
};

/// Uniform(-a, a) with a = sqrt(6 / (width + 1)), where the linear and categorical
/// columns of a predictor count as one block and each smooth as its own; intercepts start at zero.
Eigen::VectorXd init_xavier(const DesignSet& design, Rng& rng);

/// Mini-batch training with early stopping on a held-out split and random restarts.
///
/// The validation split is drawn once from `cfg.seed`; restart r initializes
/// from seed + r (restart 0 uses `init` when given). The returned ψ is the
/// snapshot with the lowest validation objective over all epochs of all
/// restarts.
FitResult fit(const MixtureModel& model, const OptimConfig& cfg,
              const Eigen::VectorXd* init = nullptr);

}  // namespace moedr
