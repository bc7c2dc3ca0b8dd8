#include "moedr/predictors.hpp"

#include <type_traits>

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>

#include "moedr/error.hpp"

namespace moedr {

RowSet all_rows(Eigen::Index n) {
  RowSet rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), Eigen::Index{0});
  return rows;
}

int ModelSpec::theta_count() const {
  int k = 0;
  for (const auto& f : families) k += f.param_count();
  return k;
}

int ModelSpec::param_predictor(int m, int j) const {
  int k = 0;
  for (int l = 0; l < m; ++l) k += families[static_cast<std::size_t>(l)].param_count();
  return k + j;
}

namespace {

void validate_predictor(const PredictorSpec& p, const std::string& where) {
  std::set<std::string> linear(p.linear.begin(), p.linear.end());
  if (linear.size() != p.linear.size())
    throw SpecError(where + ": duplicate linear variable");
  for (const auto& s : p.smooth) {
    if (s.vars.empty() || s.vars.size() > 2)
      throw SpecError(where + ": smooth terms take one or two variables");
    for (const auto& v : s.vars)
      if (linear.count(v))
        throw SpecError(where + ": variable '" + v +
                        "' appears in both the linear and the smooth terms");
    s.basis.validate();
  }
}

}  // namespace

void ModelSpec::validate() const {
  if (families.empty()) throw SpecError("model needs at least one component");
  if (params.size() != families.size())
    throw SpecError("model needs one predictor list per component");
  for (std::size_t m = 0; m < families.size(); ++m) {
    if (static_cast<int>(params[m].size()) != families[m].param_count()) {
      std::ostringstream os;
      os << "component " << m + 1 << " (" << families[m].name() << ") needs "
         << families[m].param_count() << " parameter predictors, got " << params[m].size();
      throw SpecError(os.str());
    }
    for (std::size_t j = 0; j < params[m].size(); ++j)
      validate_predictor(params[m][j], "component " + std::to_string(m + 1) + " parameter " +
                                           std::string(families[m].param_name(static_cast<int>(j))));
  }
  validate_predictor(gating, "gating");
  if (gating.offset) throw SpecError("gating: offsets are not supported");
  if (!(entropy_xi >= 0.0)) throw SpecError("entropy_xi must be non-negative");
}

ModelSpec ModelSpec::homogeneous(Family family, int components, const PredictorSpec& param,
                                 const PredictorSpec& gating) {
  ModelSpec spec;
  spec.families.assign(static_cast<std::size_t>(components), family);
  spec.params.assign(static_cast<std::size_t>(components),
                     std::vector<PredictorSpec>(static_cast<std::size_t>(family.param_count()), param));
  spec.gating = gating;
  return spec;
}

Eigen::MatrixXd Term::evaluate(const DataTable& data, int* extrapolated) const {
  const Eigen::Index n = data.rows();
  switch (kind) {
    case TermKind::Intercept:
      return Eigen::MatrixXd::Ones(n, 1);
    case TermKind::Linear: {
      const Column& c = data.column(vars[0]);
      if (c.categorical()) throw SpecError("column '" + vars[0] + "' was numeric in training data");
      if (!c.values.allFinite()) throw SpecError("column '" + vars[0] + "' has non-finite values");
      return c.values;
    }
    case TermKind::Categorical: {
      const Column& c = data.column(vars[0]);
      if (!c.categorical()) throw SpecError("column '" + vars[0] + "' was categorical in training data");
      Eigen::MatrixXd z = Eigen::MatrixXd::Zero(n, width);
      for (Eigen::Index i = 0; i < n; ++i) {
        const std::string& label = c.levels[static_cast<std::size_t>(c.values(i))];
        const auto it = std::find(levels.begin(), levels.end(), label);
        if (it == levels.end())
          throw SpecError("column '" + vars[0] + "' has unseen level '" + label + "'");
        const auto k = it - levels.begin();
        if (k > 0) z(i, k - 1) = 1.0;
      }
      return z;
    }
    case TermKind::Smooth: {
      int clamped = 0;
      Eigen::MatrixXd raw = margins[0].design(data.numeric(vars[0]), &clamped);
      if (margins.size() == 2) {
        int clamped_b = 0;
        RawSmooth a{std::move(raw), Eigen::MatrixXd::Zero(margins[0].size(), margins[0].size())};
        RawSmooth b{margins[1].design(data.numeric(vars[1]), &clamped_b),
                    Eigen::MatrixXd::Zero(margins[1].size(), margins[1].size())};
        raw = tensor_product(a, b).design;
        clamped += clamped_b;
      }
      if (extrapolated) *extrapolated += clamped;
      return raw * constraint;
    }
  }
  return {};
}

namespace {

std::shared_ptr<const Term> intercept_term() {
  static const auto term = [] {
    auto t = std::make_shared<Term>();
    t->kind = TermKind::Intercept;
    t->label = "(intercept)";
    t->width = 1;
    return t;
  }();
  return term;
}

std::shared_ptr<const Term> linear_term(const DataTable& data, const std::string& var,
                                        const std::string& where) {
  if (!data.has(var)) throw SpecError(where + ": unknown data column '" + var + "'");
  const Column& c = data.column(var);
  auto t = std::make_shared<Term>();
  t->vars = {var};
  t->label = var;
  if (c.categorical()) {
    if (c.levels.size() < 2)
      throw SpecError(where + ": categorical column '" + var + "' has a single level");
    t->kind = TermKind::Categorical;
    t->levels = c.levels;
    t->width = static_cast<Eigen::Index>(c.levels.size()) - 1;
  } else {
    t->kind = TermKind::Linear;
    t->width = 1;
  }
  t->matrix = t->evaluate(data);
  return t;
}

std::shared_ptr<const Term> smooth_term(const DataTable& data, const SmoothSpec& s,
                                        const std::string& where) {
  auto t = std::make_shared<Term>();
  t->kind = TermKind::Smooth;
  t->vars = s.vars;
  t->label = "s(" + s.vars[0] + (s.vars.size() == 2 ? "," + s.vars[1] : std::string()) + ")";

  std::vector<RawSmooth> raws;
  for (const auto& v : s.vars) {
    if (!data.has(v)) throw SpecError(where + ": unknown data column '" + v + "'");
    const Column& c = data.column(v);
    if (c.categorical()) throw SpecError(where + ": smooth column '" + v + "' is categorical");
    if (!c.values.allFinite()) throw SpecError(where + ": column '" + v + "' has non-finite values");
    if (!(c.values.maxCoeff() > c.values.minCoeff()))
      throw SpecError(where + ": smooth column '" + v + "' is constant");
    t->margins.push_back(BSplineBasis::over(c.values, s.basis));
    raws.push_back({t->margins.back().design(c.values),
                    difference_penalty(s.basis.num_basis, s.basis.penalty_order)});
  }
  const RawSmooth raw = raws.size() == 2 ? tensor_product(raws[0], raws[1]) : raws[0];
  SmoothTerm st = apply_sum_to_zero(raw, where + " " + t->label);
  t->constraint = std::move(st.constraint);
  t->penalty = std::move(st.penalty);
  t->matrix = std::move(st.design);
  t->width = t->matrix.cols();
  try {
    if (s.basis.df) {
      const LambdaSolution sol = lambda_from_df(t->matrix, t->penalty, *s.basis.df);
      t->lambda = sol.lambda;
    } else {
      t->lambda = s.basis.lambda;
    }
    t->df = DfCurve(t->matrix, t->penalty)(t->lambda);
  } catch (const Error& e) {
    throw SpecError(where + " " + t->label + ": " + e.what());
  }
  return t;
}

std::vector<std::shared_ptr<const Term>> build_terms(const PredictorSpec& p, const DataTable& data,
                                                     const std::string& where) {
  std::vector<std::shared_ptr<const Term>> terms;
  if (p.intercept) terms.push_back(intercept_term());
  for (const auto& v : p.linear) terms.push_back(linear_term(data, v, where));
  for (const auto& s : p.smooth) terms.push_back(smooth_term(data, s, where));
  return terms;
}

Eigen::VectorXd offset_values(const DataTable& data, const std::string& column) {
  const Eigen::VectorXd& v = data.numeric(column);
  if (!v.allFinite()) throw SpecError("offset column '" + column + "' has non-finite values");
  return v;
}

}  // namespace

DesignSet build_design(const ModelSpec& spec, const DataTable& data) {
  spec.validate();
  DesignSet ds;
  ds.rows_ = data.rows();
  if (ds.rows_ < 1) throw SpecError("data has no rows");

  Eigen::Index start = 0;
  auto add = [&](std::string name, std::vector<std::shared_ptr<const Term>> terms,
                 const std::optional<std::string>& offset) {
    Predictor p;
    p.name = std::move(name);
    p.terms = std::move(terms);
    for (const auto& t : p.terms) {
      p.starts.push_back(start);
      start += t->width;
      p.width += t->width;
    }
    if (offset) p.offset = offset_values(data, *offset);
    ds.predictors_.push_back(std::move(p));
    ds.offset_columns_.push_back(offset);
  };

  for (int m = 0; m < spec.components(); ++m) {
    const Family& f = spec.families[static_cast<std::size_t>(m)];
    for (int j = 0; j < f.param_count(); ++j) {
      const std::string name = "c" + std::to_string(m + 1) + "." + std::string(f.param_name(j));
      const PredictorSpec& p = spec.params[static_cast<std::size_t>(m)][static_cast<std::size_t>(j)];
      if (p.offset && !data.has(*p.offset))
        throw SpecError(name + ": unknown offset column '" + *p.offset + "'");
      add(name, build_terms(p, data, name), p.offset);
    }
  }
  const auto gating_terms = build_terms(spec.gating, data, "gating");
  for (int m = 0; m < spec.components(); ++m)
    add("gate" + std::to_string(m + 1), gating_terms, std::nullopt);
  ds.psi_size_ = start;
  return ds;
}

DesignSet DesignSet::rebuild(const DataTable& data, int* extrapolated) const {
  DesignSet ds;
  ds.rows_ = data.rows();
  ds.psi_size_ = psi_size_;
  ds.offset_columns_ = offset_columns_;
  std::vector<std::pair<const Term*, std::shared_ptr<const Term>>> done;
  for (std::size_t j = 0; j < predictors_.size(); ++j) {
    Predictor p = predictors_[j];
    for (auto& t : p.terms) {
      if (t->kind == TermKind::Intercept) continue;
      const auto hit = std::find_if(done.begin(), done.end(),
                                    [&](const auto& e) { return e.first == t.get(); });
      if (hit != done.end()) {
        t = hit->second;
        continue;
      }
      auto copy = std::make_shared<Term>(*t);
      copy->matrix = t->evaluate(data, extrapolated);
      done.emplace_back(t.get(), copy);
      t = copy;
    }
    if (offset_columns_[j]) p.offset = offset_values(data, *offset_columns_[j]);
    ds.predictors_.push_back(std::move(p));
  }
  return ds;
}

Slice DesignSet::slice(int j, int term) const {
  const Predictor& p = predictor(j);
  const auto t = static_cast<std::size_t>(term);
  return {p.starts.at(t), p.terms.at(t)->width};
}

Slice DesignSet::predictor_slice(int j) const {
  const Predictor& p = predictor(j);
  return {p.starts.empty() ? 0 : p.starts.front(), p.width};
}

void DesignSet::check_psi(const Eigen::VectorXd& psi) const {
  if (psi.size() != psi_size_) {
    std::ostringstream os;
    os << "coefficient vector has length " << psi.size() << ", layout expects " << psi_size_;
    throw ShapeMismatch(os.str());
  }
}

namespace {

template <typename RowIdx>
Eigen::MatrixXd eta_impl(const std::vector<Predictor>& preds, const Eigen::VectorXd& psi,
                         const RowIdx& rows, Eigen::Index b) {
  Eigen::MatrixXd eta(static_cast<Eigen::Index>(preds.size()), b);
  for (std::size_t j = 0; j < preds.size(); ++j) {
    const Predictor& p = preds[j];
    Eigen::VectorXd e = Eigen::VectorXd::Zero(b);
    for (std::size_t t = 0; t < p.terms.size(); ++t) {
      const Term& term = *p.terms[t];
      if (term.kind == TermKind::Intercept) {
        e.array() += psi(p.starts[t]);
      } else {
        e.noalias() += term.matrix(rows, Eigen::all) * psi.segment(p.starts[t], term.width);
      }
    }
    if (p.offset.size()) {
      if constexpr (std::is_same_v<RowIdx, Eigen::internal::all_t>) e += p.offset;
      else e += p.offset(rows);
    }
    eta.row(static_cast<Eigen::Index>(j)) = e.transpose();
  }
  return eta;
}

template <typename RowIdx>
Eigen::VectorXd backprop_impl(const std::vector<Predictor>& preds, Eigen::Index psi_size,
                              const Eigen::MatrixXd& d_eta, const RowIdx& rows) {
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(psi_size);
  for (std::size_t j = 0; j < preds.size(); ++j) {
    const Predictor& p = preds[j];
    const auto row = d_eta.row(static_cast<Eigen::Index>(j));
    for (std::size_t t = 0; t < p.terms.size(); ++t) {
      const Term& term = *p.terms[t];
      if (term.kind == TermKind::Intercept) {
        grad(p.starts[t]) += row.sum();
      } else {
        grad.segment(p.starts[t], term.width).noalias() +=
            term.matrix(rows, Eigen::all).transpose() * row.transpose();
      }
    }
  }
  return grad;
}

}  // namespace

Eigen::MatrixXd DesignSet::eval_eta(const Eigen::VectorXd& psi, const RowSet& rows) const {
  check_psi(psi);
  return eta_impl(predictors_, psi, rows, static_cast<Eigen::Index>(rows.size()));
}

Eigen::MatrixXd DesignSet::eval_eta(const Eigen::VectorXd& psi) const {
  check_psi(psi);
  return eta_impl(predictors_, psi, Eigen::all, rows_);
}

Eigen::VectorXd DesignSet::backprop(const Eigen::MatrixXd& d_eta, const RowSet& rows) const {
  if (d_eta.rows() != predictor_count() || d_eta.cols() != static_cast<Eigen::Index>(rows.size()))
    throw ShapeMismatch("predictor gradient has the wrong shape");
  return backprop_impl(predictors_, psi_size_, d_eta, rows);
}

double DesignSet::penalty(const Eigen::VectorXd& psi) const {
  check_psi(psi);
  double total = 0.0;
  for (const auto& p : predictors_)
    for (std::size_t t = 0; t < p.terms.size(); ++t) {
      const Term& term = *p.terms[t];
      if (!term.penalized()) continue;
      const auto g = psi.segment(p.starts[t], term.width);
      total += term.lambda * g.dot(term.penalty * g);
    }
  return total;
}

void DesignSet::add_penalty_gradient(const Eigen::VectorXd& psi, double scale,
                                     Eigen::VectorXd& grad) const {
  check_psi(psi);
  for (const auto& p : predictors_)
    for (std::size_t t = 0; t < p.terms.size(); ++t) {
      const Term& term = *p.terms[t];
      if (!term.penalized()) continue;
      grad.segment(p.starts[t], term.width).noalias() +=
          (2.0 * scale * term.lambda) * (term.penalty * psi.segment(p.starts[t], term.width));
    }
}

std::vector<std::vector<Eigen::VectorXd>> DesignSet::unpack(const Eigen::VectorXd& psi) const {
  check_psi(psi);
  std::vector<std::vector<Eigen::VectorXd>> out;
  for (const auto& p : predictors_) {
    std::vector<Eigen::VectorXd> coefs;
    for (std::size_t t = 0; t < p.terms.size(); ++t)
      coefs.emplace_back(psi.segment(p.starts[t], p.terms[t]->width));
    out.push_back(std::move(coefs));
  }
  return out;
}

Eigen::VectorXd DesignSet::pack(const std::vector<std::vector<Eigen::VectorXd>>& coefs) const {
  if (coefs.size() != predictors_.size()) throw ShapeMismatch("wrong number of predictors");
  Eigen::VectorXd psi(psi_size_);
  for (std::size_t j = 0; j < predictors_.size(); ++j) {
    const Predictor& p = predictors_[j];
    if (coefs[j].size() != p.terms.size()) throw ShapeMismatch("wrong number of terms in " + p.name);
    for (std::size_t t = 0; t < p.terms.size(); ++t) {
      if (coefs[j][t].size() != p.terms[t]->width)
        throw ShapeMismatch("wrong coefficient count for " + p.name + ":" + p.terms[t]->label);
      psi.segment(p.starts[t], p.terms[t]->width) = coefs[j][t];
    }
  }
  return psi;
}

std::vector<std::string> DesignSet::coefficient_names() const {
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(psi_size_));
  for (const auto& p : predictors_)
    for (const auto& t : p.terms) {
      if (t->width == 1 && t->kind != TermKind::Categorical) {
        names.push_back(p.name + ":" + t->label);
        continue;
      }
      for (Eigen::Index k = 0; k < t->width; ++k) {
        if (t->kind == TermKind::Categorical)
          names.push_back(p.name + ":" + t->label + "=" + t->levels[static_cast<std::size_t>(k + 1)]);
        else
          names.push_back(p.name + ":" + t->label + "[" + std::to_string(k) + "]");
      }
    }
  return names;
}

}  // namespace moedr
