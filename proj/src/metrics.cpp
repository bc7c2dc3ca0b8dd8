#include "moedr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "moedr/error.hpp"

namespace moedr {

int LabelAssignment::est_for_true(int t) const {
  for (std::size_t e = 0; e < est_to_true.size(); ++e)
    if (est_to_true[e] == t && static_cast<int>(e) < est_count) return static_cast<int>(e);
  return -1;
}

namespace {

/// Hungarian algorithm (shortest augmenting paths with potentials) minimizing cost.
std::vector<int> hungarian_min(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> row_to_col(static_cast<std::size_t>(n));
  for (int j = 1; j <= n; ++j) row_to_col[static_cast<std::size_t>(p[j] - 1)] = j - 1;
  return row_to_col;
}

double best_value(const Eigen::MatrixXd& w) {
  if (w.rows() == 0) return 0.0;
  const Eigen::MatrixXd cost = (w.maxCoeff() - w.array()).matrix();
  const auto perm = hungarian_min(cost);
  double total = 0.0;
  for (std::size_t i = 0; i < perm.size(); ++i) total += w(static_cast<Eigen::Index>(i), perm[i]);
  return total;
}

Eigen::MatrixXd drop(const Eigen::MatrixXd& w, const std::vector<int>& rows, const std::vector<int>& cols) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = w(rows[i], cols[j]);
  return out;
}

}  // namespace

std::vector<int> max_weight_assignment(const Eigen::MatrixXd& weights) {
  if (weights.rows() != weights.cols()) throw ShapeMismatch("assignment needs a square weight matrix");
  const int n = static_cast<int>(weights.rows());
  const double optimum = best_value(weights);
  const double tol = 1e-9 * std::max(1.0, std::abs(optimum));

  // Fix rows in order to the smallest column that still admits an optimum.
  std::vector<int> result(static_cast<std::size_t>(n), -1);
  std::vector<int> free_rows(static_cast<std::size_t>(n)), free_cols(static_cast<std::size_t>(n));
  std::iota(free_rows.begin(), free_rows.end(), 0);
  std::iota(free_cols.begin(), free_cols.end(), 0);
  double fixed = 0.0;
  for (int i = 0; i < n; ++i) {
    free_rows.erase(std::find(free_rows.begin(), free_rows.end(), i));
    for (std::size_t c = 0; c < free_cols.size(); ++c) {
      const int j = free_cols[c];
      std::vector<int> rest_cols = free_cols;
      rest_cols.erase(rest_cols.begin() + static_cast<std::ptrdiff_t>(c));
      const double total = fixed + weights(i, j) + best_value(drop(weights, free_rows, rest_cols));
      if (total >= optimum - tol) {
        result[static_cast<std::size_t>(i)] = j;
        fixed += weights(i, j);
        free_cols = std::move(rest_cols);
        break;
      }
    }
  }
  return result;
}

namespace {

void check_labels(std::span<const int> truth, std::span<const int> est) {
  if (truth.empty()) throw SpecError("label vectors are empty");
  if (truth.size() != est.size()) throw ShapeMismatch("label vectors differ in length");
  for (int v : truth)
    if (v < 0) throw SpecError("labels must be non-negative");
  for (int v : est)
    if (v < 0) throw SpecError("labels must be non-negative");
}

}  // namespace

LabelAssignment optimal_assignment(std::span<const int> truth, std::span<const int> est,
                                   int true_count, int est_count) {
  check_labels(truth, est);
  LabelAssignment a;
  a.true_count = std::max(true_count, *std::max_element(truth.begin(), truth.end()) + 1);
  a.est_count = std::max(est_count, *std::max_element(est.begin(), est.end()) + 1);
  const int k = std::max(a.true_count, a.est_count);
  Eigen::MatrixXd confusion = Eigen::MatrixXd::Zero(k, k);  // rows: estimated, cols: true
  for (std::size_t i = 0; i < truth.size(); ++i) confusion(est[i], truth[i]) += 1.0;
  a.est_to_true = max_weight_assignment(confusion);
  double matches = 0.0;
  for (int e = 0; e < k; ++e) matches += confusion(e, a.est_to_true[static_cast<std::size_t>(e)]);
  a.matches = std::lround(matches);
  return a;
}

double accuracy(std::span<const int> truth, std::span<const int> est) {
  const LabelAssignment a = optimal_assignment(truth, est);
  return static_cast<double>(a.matches) / static_cast<double>(truth.size());
}

double adjusted_rand_index(std::span<const int> truth, std::span<const int> est) {
  check_labels(truth, est);
  if (truth.size() < 2) throw SpecError("ARI needs at least two observations");
  std::map<std::pair<int, int>, double> cells;
  std::map<int, double> a, b;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    cells[{truth[i], est[i]}] += 1.0;
    a[truth[i]] += 1.0;
    b[est[i]] += 1.0;
  }
  auto c2 = [](double x) { return 0.5 * x * (x - 1.0); };
  double index = 0.0, sa = 0.0, sb = 0.0;
  for (const auto& [key, v] : cells) index += c2(v);
  for (const auto& [key, v] : a) sa += c2(v);
  for (const auto& [key, v] : b) sb += c2(v);
  const double expected = sa * sb / c2(static_cast<double>(truth.size()));
  const double denom = 0.5 * (sa + sb) - expected;
  // The denominator vanishes only when both partitions are all-singletons or a single block.
  if (denom == 0.0) return 1.0;
  return (index - expected) / denom;
}

double rmse(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size() || a.size() == 0) throw ShapeMismatch("RMSE needs equal, non-empty vectors");
  return std::sqrt((a - b).squaredNorm() / static_cast<double>(a.size()));
}

Eigen::VectorXd component_coefficients(const ModelSpec& spec, const DesignSet& design,
                                       const Eigen::VectorXd& psi, int m) {
  const Family& f = spec.families.at(static_cast<std::size_t>(m));
  Eigen::Index width = 0;
  for (int j = 0; j < f.param_count(); ++j) width += design.predictor_slice(spec.param_predictor(m, j)).width;
  Eigen::VectorXd out(width);
  Eigen::Index at = 0;
  for (int j = 0; j < f.param_count(); ++j) {
    const Slice s = design.predictor_slice(spec.param_predictor(m, j));
    out.segment(at, s.width) = psi.segment(s.start, s.width);
    at += s.width;
  }
  return out;
}

double coefficient_rmse(const ModelSpec& spec, const DesignSet& design,
                        const Eigen::VectorXd& psi_true, const Eigen::VectorXd& psi_est,
                        const LabelAssignment& assignment) {
  if (psi_true.size() != design.psi_size() || psi_est.size() != design.psi_size())
    throw ShapeMismatch("coefficient vectors do not match the layout");
  const int M = spec.components();
  double sq = 0.0;
  Eigen::Index count = 0;
  for (int t = 0; t < M; ++t) {
    int e = t;
    if (!assignment.est_to_true.empty()) {
      e = assignment.est_for_true(t);
      if (e < 0) e = t;  // no estimated component claimed t; compare in place
    }
    const Eigen::VectorXd a = component_coefficients(spec, design, psi_true, t);
    const Eigen::VectorXd b = component_coefficients(spec, design, psi_est, e);
    if (a.size() != b.size()) throw ShapeMismatch("matched components have different layouts");
    sq += (a - b).squaredNorm();
    count += a.size();
  }
  return std::sqrt(sq / static_cast<double>(count));
}

double weight_rmse(const Eigen::VectorXd& pi_true, const Eigen::VectorXd& pi_est,
                   const LabelAssignment& assignment) {
  const auto k = std::max(pi_true.size(), pi_est.size());
  Eigen::VectorXd truth = Eigen::VectorXd::Zero(k);
  Eigen::VectorXd est = Eigen::VectorXd::Zero(k);
  truth.head(pi_true.size()) = pi_true;
  for (Eigen::Index e = 0; e < pi_est.size(); ++e) {
    if (!assignment.est_to_true.empty() &&
        e >= static_cast<Eigen::Index>(assignment.est_to_true.size()))
      throw ShapeMismatch("assignment does not cover every estimated component");
    const int t = assignment.est_to_true.empty() ? static_cast<int>(e)
                                                 : assignment.est_to_true[static_cast<std::size_t>(e)];
    if (t >= k) throw ShapeMismatch("assignment maps outside the weight vector");
    est(t) = pi_est(e);
  }
  return rmse(truth, est);
}

double predictive_log_score(const MixtureModel& model, const Eigen::VectorXd& psi,
                            const DataTable& data, const Eigen::VectorXd& y) {
  return predict_log_density(model, psi, data, y).mean();
}

}  // namespace moedr
