#include "moedr/commands.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "moedr/error.hpp"
#include "moedr/experiments.hpp"
#include "moedr/metrics.hpp"
#include "moedr/run_config.hpp"

namespace moedr::cli {

namespace {

using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string join(const std::string& dir, const std::string& file) { return (fs::path(dir) / file).string(); }

ojson number(double v) { return std::isfinite(v) ? ojson(v) : ojson(nullptr); }

ojson numbers(const Eigen::VectorXd& v) {
  ojson a = ojson::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number(v(i)));
  return a;
}

ojson numbers(const std::vector<double>& v) {
  ojson a = ojson::array();
  for (double x : v) a.push_back(number(x));
  return a;
}

std::string dump(const ojson& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// fit / path

struct FitContext {
  RunConfig rc;
  DataTable train;
  std::optional<DataTable> test;
  std::vector<int> labels;  ///< 0-based training labels, empty without a label column
  int label_count = 0;
};

DataTable read_data(const std::string& path, const std::string& key) {
  try {
    return DataTable::read_csv(path);
  } catch (const std::exception& e) {
    throw SpecError(key + ": " + e.what());
  }
}

void check_response(const DataTable& data, const std::string& response, const std::string& where) {
  if (!data.has(response)) throw SpecError("data.response: column '" + response + "' not found in " + where);
  if (data.column(response).categorical())
    throw SpecError("data.response: column '" + response + "' is not numeric");
}

FitContext load_context(const std::string& config, const std::optional<std::string>& out_dir) {
  FitContext ctx;
  ctx.rc = load_run_config(config);
  if (out_dir) ctx.rc.output.directory = *out_dir;
  const DataConfig& d = ctx.rc.data;
  DataTable all = read_data(d.csv, "data.csv");
  check_response(all, d.response, d.csv);
  if (d.test_csv) {
    ctx.test = read_data(*d.test_csv, "data.test_csv");
    check_response(*ctx.test, d.response, *d.test_csv);
    ctx.train = std::move(all);
  } else if (d.test_fraction > 0.0) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(all.rows()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Rng rng(ctx.rc.optimizer.seed ^ 0x7e57u);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_test = static_cast<std::size_t>(std::floor(d.test_fraction * static_cast<double>(order.size())));
    std::vector<Eigen::Index> test_rows(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
    std::vector<Eigen::Index> train_rows(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
    std::sort(test_rows.begin(), test_rows.end());
    std::sort(train_rows.begin(), train_rows.end());
    if (!test_rows.empty()) ctx.test = all.subset(test_rows);
    ctx.train = all.subset(train_rows);
  } else {
    ctx.train = std::move(all);
  }
  if (d.label_column) {
    if (!ctx.train.has(*d.label_column))
      throw SpecError("data.label_column: column '" + *d.label_column + "' not found");
    const Column& c = ctx.train.column(*d.label_column);
    std::map<double, int> codes;
    for (Eigen::Index i = 0; i < c.values.size(); ++i) codes.emplace(c.values(i), 0);
    for (auto& [value, code] : codes) code = ctx.label_count++;
    for (Eigen::Index i = 0; i < c.values.size(); ++i) ctx.labels.push_back(codes.at(c.values(i)));
  }
  return ctx;
}

MixtureModel build_model(const FitContext& ctx, const ModelSpec& spec) {
  try {
    return MixtureModel(spec, ctx.train, ctx.rc.data.response);
  } catch (const SpecError& e) {
    throw SpecError("model: " + std::string(e.what()));
  }
}

/// Mean log density on the test rows when present, else on the training rows.
double score(const FitContext& ctx, const MixtureModel& model, const Eigen::VectorXd& psi, bool* on_test) {
  *on_test = ctx.test.has_value();
  if (ctx.test) return predictive_log_score(model, psi, *ctx.test, ctx.test->numeric(ctx.rc.data.response));
  return log_density_rows(model, psi, all_rows(model.rows())).mean();
}

ojson optimizer_echo(const OptimConfig& c) {
  ojson j;
  j["method"] = std::string(method_name(c.method));
  j["learning_rate"] = c.lr();
  j["batch_size"] = c.batch_size;
  j["max_epochs"] = c.max_epochs;
  j["patience"] = c.patience;
  j["val_fraction"] = c.val_fraction;
  j["restarts"] = c.restarts;
  j["seed"] = c.seed;
  if (c.cyclic_lr) j["cyclic_lr"] = {{"base", c.cyclic_lr->base}, {"max", c.cyclic_lr->max}, {"period", c.cyclic_lr->period}};
  return j;
}

ojson smooth_terms(const DesignSet& design) {
  ojson a = ojson::array();
  for (int j = 0; j < design.predictor_count(); ++j)
    for (const auto& t : design.predictor(j).terms)
      if (t->kind == TermKind::Smooth)
        a.push_back({{"predictor", design.predictor(j).name}, {"term", t->label}, {"lambda", t->lambda}, {"df", t->df}});
  return a;
}

ojson result_json(const FitContext& ctx, const MixtureModel& model, const FitResult& fit) {
  ojson r;
  r["status"] = fit.ok() ? "ok" : "failed";
  if (!fit.ok()) r["failure"] = fit.failure;
  r["model"] = ctx.rc.model_echo;
  r["optimizer"] = optimizer_echo(ctx.rc.optimizer);
  r["n_train"] = model.rows();
  r["n_test"] = ctx.test ? ctx.test->rows() : 0;
  r["smooth_terms"] = smooth_terms(model.design());
  if (fit.ok()) {
    const auto names = model.design().coefficient_names();
    ojson coefs = ojson::array();
    for (std::size_t k = 0; k < names.size(); ++k)
      coefs.push_back({{"name", names[k]}, {"value", number(fit.psi(static_cast<Eigen::Index>(k)))}});
    r["coefficients"] = coefs;
    r["psi"] = numbers(fit.psi);
    const RowSet rows = all_rows(model.rows());
    r["pi_bar"] = numbers(marginal_weights(model, fit.psi, rows));
    const ObjectiveTerms terms = objective_terms(model, fit.psi, rows);
    r["objective_terms"] = {{"nll", number(terms.nll)}, {"smooth_penalty", number(terms.smooth_penalty)},
                            {"entropy", number(terms.entropy)}, {"total", number(terms.total)}};
    r["train_pls"] = number(log_density_rows(model, fit.psi, rows).mean());
    if (ctx.test)
      r["test_pls"] = number(predictive_log_score(model, fit.psi, *ctx.test, ctx.test->numeric(ctx.rc.data.response)));
    if (!ctx.labels.empty()) {
      const std::vector<int> est = map_labels(responsibilities(model, fit.psi, rows));
      const LabelAssignment a = optimal_assignment(ctx.labels, est, ctx.label_count, model.components());
      r["metrics"] = {{"accuracy", static_cast<double>(a.matches) / static_cast<double>(est.size())},
                      {"ari", adjusted_rand_index(ctx.labels, est)}};
    }
  }
  r["training"] = {{"best_value", number(fit.best_value)},
                   {"best_epoch", fit.best_epoch},
                   {"restart", fit.restart_index},
                   {"restarts_run", fit.restarts_run},
                   {"diverged_restarts", fit.diverged_restarts},
                   {"epochs", fit.iterations},
                   {"train_trace", numbers(fit.train_trace)},
                   {"val_trace", numbers(fit.val_trace)}};
  r["warnings"] = fit.warnings;
  r["wall_time"] = fit.wall_time;
  return r;
}

std::string matrix_csv(const std::vector<std::string>& header, const Eigen::MatrixXd& m) {
  std::string s;
  for (std::size_t c = 0; c < header.size(); ++c) s += (c ? "," : "") + csv_field(header[c]);
  s += "\r\n";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) s += (c ? "," : "") + format_double(m(i, c));
    s += "\r\n";
  }
  return s;
}

void write_fit_outputs(const FitContext& ctx, const MixtureModel& model, const FitResult& fit) {
  const OutputConfig& o = ctx.rc.output;
  if (o.json) write_file_atomic(join(o.directory, "result.json"), dump(result_json(ctx, model, fit)));
  if (!o.csv || !fit.ok()) return;
  const int M = model.components();
  const RowSet rows = all_rows(model.rows());
  std::vector<std::string> rh;
  for (int m = 0; m < M; ++m) rh.push_back("r" + std::to_string(m + 1));
  write_file_atomic(join(o.directory, "responsibilities.csv"), matrix_csv(rh, responsibilities(model, fit.psi, rows)));
  std::vector<std::string> fh;
  for (int j = 0; j < model.spec().theta_count(); ++j) fh.push_back(model.design().predictor(j).name);
  for (int m = 0; m < M; ++m) fh.push_back("pi" + std::to_string(m + 1));
  write_file_atomic(join(o.directory, "fitted.csv"), matrix_csv(fh, predicted_parameters(model, fit.psi)));
}

template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const NumericalFailure& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}

// ---------------------------------------------------------------------------
// benchmark

struct MetricRow {
  std::string scenario;
  std::string method;
  int rep;
  std::string metric;
  double value;
};

void add_outcome(std::vector<MetricRow>& rows, const std::string& scenario, int rep, const MethodOutcome& o,
                 std::initializer_list<const char*> metrics) {
  rows.push_back({scenario, o.method, rep, "failed", o.failed ? 1.0 : 0.0});
  if (o.failed) return;
  for (const char* m : metrics) {
    const std::string k(m);
    double v = 0.0;
    if (k == "coef_rmse") v = o.coef_rmse;
    else if (k == "pi_rmse") v = o.pi_rmse;
    else if (k == "curve_rmse") v = o.curve_rmse;
    else if (k == "accuracy") v = o.accuracy;
    else if (k == "ari") v = o.ari;
    else if (k == "test_pls") v = o.test_pls;
    else if (k == "seconds") v = o.seconds;
    rows.push_back({scenario, o.method, rep, k, v});
  }
}

using Task = std::function<std::vector<MetricRow>()>;

std::vector<MetricRow> run_tasks(const std::vector<Task>& tasks, int threads, std::ostream& out) {
  std::vector<std::vector<MetricRow>> results(tasks.size());
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < tasks.size();) {
      results[i] = tasks[i]();
      ++done;
    }
  };
  const int n = std::max(1, std::min<int>(threads, static_cast<int>(tasks.size())));
  if (n == 1) {
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      results[i] = tasks[i]();
      out << "  [" << i + 1 << "/" << tasks.size() << "]\n" << std::flush;
    }
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
  }
  std::vector<MetricRow> all;
  for (auto& r : results) all.insert(all.end(), r.begin(), r.end());
  return all;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string linear_label(const SimDesign& d) {
  return std::string(scenario_name(d.scenario)) + "_n" + std::to_string(d.n) + "_M" + std::to_string(d.components) +
         "_pm" + std::to_string(d.pm) + "_" + std::string(Family(d.family).name());
}

std::string xi_label(double xi) {
  std::ostringstream os;
  os << xi;
  return os.str();
}

/// Tasks and scenario order for one suite.
struct Suite {
  std::vector<Task> tasks;
  std::vector<std::string> scenarios;
  std::vector<std::string> methods;
};

Suite em_vs_nmdr_suite(const BenchmarkOptions& o) {
  Suite s;
  s.methods = {"EM", "NMDR", "NMDR_3", "BASELINE"};
  const std::vector<Eigen::Index> ns = o.quick ? std::vector<Eigen::Index>{300} : std::vector<Eigen::Index>{300, 2500};
  const std::vector<int> Ms = o.quick ? std::vector<int>{2} : std::vector<int>{2, 3, 5, 10};
  for (Eigen::Index n : ns)
    for (int M : Ms)
      for (int pm : {2, 10}) {
        SimDesign d;
        d.n = n;
        d.components = M;
        d.pm = pm;
        const std::string label = linear_label(d);
        s.scenarios.push_back(label);
        for (int rep = 0; rep < o.reps; ++rep) {
          d.seed = o.seed + static_cast<std::uint64_t>(rep);
          s.tasks.push_back([d, label, rep] {
            std::vector<MetricRow> rows;
            const LinearComparison c = compare_linear(d);
            for (const auto& oc : c.outcomes)
              add_outcome(rows, label, rep, oc, {"coef_rmse", "pi_rmse", "accuracy", "ari", "test_pls", "seconds"});
            rows.push_back({label, "BASELINE", rep, "test_pls", c.baseline_pls});
            return rows;
          });
        }
      }
  return s;
}

Suite optimizers_suite(const BenchmarkOptions& o) {
  Suite s;
  s.methods = {"SGD", "RMSprop", "Adam", "Adadelta"};
  std::vector<SimDesign> grid;
  for (FamilyKind f : {FamilyKind::Normal, FamilyKind::Laplace, FamilyKind::Logistic})
    for (Eigen::Index n : {Eigen::Index{300}, Eigen::Index{2500}})
      for (int M : {2, 3, 5, 10})
        for (int pm : {2, 10}) {
          SimDesign d;
          d.family = f;
          d.n = n;
          d.components = M;
          d.pm = pm;
          if (o.quick && !(n == 300 && pm == 2 && (M == 2 || M == 3))) continue;
          grid.push_back(d);
        }
  for (SimDesign d : grid) {
    const std::string label = linear_label(d);
    s.scenarios.push_back(label);
    for (int rep = 0; rep < o.reps; ++rep) {
      d.seed = o.seed + static_cast<std::uint64_t>(rep);
      s.tasks.push_back([d, label, rep] {
        std::vector<MetricRow> rows;
        for (Method m : {Method::SGD, Method::RMSprop, Method::Adam, Method::Adadelta}) {
          OptimConfig cfg = nmdr_config(1, d.seed);
          cfg.method = m;
          cfg.learning_rate.reset();
          const MethodOutcome oc = fit_linear_nmdr(d, d.components, 0.0, cfg, std::string(method_name(m)));
          rows.push_back({label, oc.method, rep, "diverged", oc.failed ? 1.0 : 0.0});
          if (!oc.failed)
            for (auto [k, v] : {std::pair{"test_pls", oc.test_pls}, std::pair{"coef_rmse", oc.coef_rmse},
                                std::pair{"seconds", oc.seconds}})
              rows.push_back({label, oc.method, rep, k, v});
        }
        return rows;
      });
    }
  }
  return s;
}

Suite additive_suite(const BenchmarkOptions& o) {
  Suite s;
  s.methods = {"NMDR", "EM", "ORACLE"};
  for (FamilyKind f : {FamilyKind::Normal, FamilyKind::Poisson})
    for (double scale : {2.0, 4.0})
      for (bool uniform : {true, false})
        for (int noise : {3, 10}) {
          if (o.quick && !(f == FamilyKind::Normal && scale == 2.0 && uniform && noise == 3)) continue;
          SimDesign d;
          d.scenario = Scenario::AdditiveMixture;
          d.n = 2500;
          d.components = 3;
          d.family = f;
          d.scale = scale;
          d.uniform_weights = uniform;
          d.noise_vars = noise;
          const std::string label = "additive_" + std::string(Family(f).name()) + "_scale" +
                                    std::to_string(static_cast<int>(scale)) + (uniform ? "_uniform" : "_unequal") +
                                    "_noise" + std::to_string(noise);
          s.scenarios.push_back(label);
          for (int rep = 0; rep < o.reps; ++rep) {
            d.seed = o.seed + static_cast<std::uint64_t>(rep);
            s.tasks.push_back([d, label, rep] {
              std::vector<MetricRow> rows;
              for (const auto& oc : compare_additive(d))
                add_outcome(rows, label, rep, oc, {"curve_rmse", "accuracy", "ari", "test_pls", "seconds"});
              return rows;
            });
          }
        }
  return s;
}

Suite sparsity_suite(const BenchmarkOptions& o) {
  Suite s;
  s.methods = {"NMDR"};
  const std::vector<double> grid = o.quick ? std::vector<double>{0.0, 1e-2} : std::vector<double>{0.0, 1e-3, 1e-2, 1e-1, 1.0};
  SimDesign d;
  d.scenario = Scenario::OverfitMixture;
  d.n = o.quick ? 300 : 2500;
  d.components = 2;
  d.pm = 10;
  for (double xi : grid) {
    const std::string label = "overfit_n" + std::to_string(d.n) + "_M5_xi" + xi_label(xi);
    s.scenarios.push_back(label);
    for (int rep = 0; rep < o.reps; ++rep) {
      d.seed = o.seed + static_cast<std::uint64_t>(rep);
      s.tasks.push_back([d, label, rep, xi] {
        std::vector<MetricRow> rows;
        const MethodOutcome oc = fit_linear_nmdr(d, 5, xi, nmdr_config(1, d.seed), "NMDR");
        const SparsityOutcome sp = evaluate_sparsity(simulate(d), oc);
        rows.push_back({label, "NMDR", rep, "failed", oc.failed ? 1.0 : 0.0});
        if (oc.failed) return rows;
        rows.push_back({label, "NMDR", rep, "spurious_max", sp.spurious_max});
        rows.push_back({label, "NMDR", rep, "true_error", sp.true_error});
        rows.push_back({label, "NMDR", rep, "entropy", sp.entropy});
        rows.push_back({label, "NMDR", rep, "test_pls", oc.test_pls});
        Eigen::VectorXd sorted = oc.pi_hat;
        std::sort(sorted.data(), sorted.data() + sorted.size(), std::greater<>());
        for (Eigen::Index k = 0; k < sorted.size(); ++k)
          rows.push_back({label, "NMDR", rep, "pi_sorted_" + std::to_string(k + 1), sorted(k)});
        return rows;
      });
    }
  }
  return s;
}

ojson summarize(const Suite& suite, const std::vector<MetricRow>& rows, const BenchmarkOptions& o) {
  // scenario -> method -> metric -> values
  std::map<std::string, std::map<std::string, std::map<std::string, std::vector<double>>>> groups;
  for (const auto& r : rows) groups[r.scenario][r.method][r.metric].push_back(r.value);
  ojson summary;
  summary["suite"] = o.suite;
  summary["reps"] = o.reps;
  summary["base_seed"] = o.seed;
  summary["quick"] = o.quick;
  ojson medians = ojson::object();
  for (const auto& sc : suite.scenarios) {
    ojson per_method = ojson::object();
    for (const auto& m : suite.methods) {
      auto it = groups[sc].find(m);
      if (it == groups[sc].end()) continue;
      ojson mm = ojson::object();
      for (const auto& [metric, values] : it->second) {
        std::vector<double> finite;
        for (double v : values)
          if (std::isfinite(v)) finite.push_back(v);
        mm[metric] = finite.empty() ? ojson(nullptr) : ojson(median(finite));
      }
      per_method[m] = mm;
    }
    medians[sc] = per_method;
  }
  summary["medians"] = medians;

  if (o.suite == "optimizers") {
    // Rank optimizers per setting by median test PLS (1 = best); diverged runs are counted, not ranked.
    std::map<std::string, std::vector<double>> ranks;
    std::map<std::string, int> diverged;
    for (const auto& sc : suite.scenarios) {
      std::vector<std::pair<double, std::string>> order;
      for (const auto& m : suite.methods) {
        const auto& g = groups[sc][m];
        if (auto d = g.find("diverged"); d != g.end())
          diverged[m] += static_cast<int>(std::accumulate(d->second.begin(), d->second.end(), 0.0));
        auto p = g.find("test_pls");
        order.emplace_back(p == g.end() ? -HUGE_VAL : median(p->second), m);
      }
      std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
      for (std::size_t k = 0; k < order.size(); ++k) ranks[order[k].second].push_back(static_cast<double>(k + 1));
    }
    ojson table = ojson::array();
    for (const auto& m : suite.methods)
      table.push_back({{"method", m},
                       {"mean_rank", std::accumulate(ranks[m].begin(), ranks[m].end(), 0.0) /
                                         static_cast<double>(std::max<std::size_t>(1, ranks[m].size()))},
                       {"diverged_runs", diverged[m]}});
    summary["ranks"] = table;
  }
  return summary;
}

}  // namespace

std::string default_output_dir() {
  const char* env = std::getenv("MOEDR_OUTPUT_DIR");
  return env && *env ? env : "moedr-out";
}

int cmd_fit(const FitOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const FitContext ctx = load_context(opts.config, opts.output_dir);
    const MixtureModel model = build_model(ctx, ctx.rc.model);
    const FitResult result = fit(model, ctx.rc.optimizer);
    write_fit_outputs(ctx, model, result);
    for (const auto& w : result.warnings) err << "warning: " << w << "\n";
    if (!result.ok()) {
      err << "error: " << result.failure << "\n";
      return kExitNumerical;
    }
    out << "fit " << method_name(ctx.rc.optimizer.method) << ": best validation objective "
        << result.best_value << " at epoch " << result.best_epoch << " (restart " << result.restart_index
        << "); results in " << ctx.rc.output.directory << "\n";
    return kExitOk;
  });
}

int cmd_simulate(const SimulateOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const SimDataset ds = simulate(opts.design);
    DataTable table = ds.data;
    Eigen::VectorXd labels(static_cast<Eigen::Index>(ds.labels.size()));
    for (std::size_t i = 0; i < ds.labels.size(); ++i) labels(static_cast<Eigen::Index>(i)) = ds.labels[i] + 1;
    table.add_numeric("true_label", labels);

    const SimDesign& d = opts.design;
    ojson truth;
    truth["design"] = {{"scenario", std::string(scenario_name(d.scenario))},
                       {"n", d.n},
                       {"components", d.components},
                       {"pm", d.pm},
                       {"family", std::string(Family(d.family).name())},
                       {"scale", d.scale},
                       {"weights", d.uniform_weights ? "uniform" : "unequal"},
                       {"noise_vars", d.noise_vars},
                       {"seed", d.seed}};
    truth["pi"] = numbers(ds.true_pi);
    if (ds.true_psi.size() > 0) {
      const DesignSet design = build_design(ds.true_spec, ds.data);
      const auto names = design.coefficient_names();
      ojson coefs = ojson::array();
      for (std::size_t k = 0; k < names.size(); ++k)
        coefs.push_back({{"name", names[k]}, {"value", ds.true_psi(static_cast<Eigen::Index>(k))}});
      truth["coefficients"] = coefs;
      truth["psi"] = numbers(ds.true_psi);
    }
    write_file_atomic(join(opts.output_dir, "data.csv"), table.to_csv());
    write_file_atomic(join(opts.output_dir, "truth.json"), dump(truth));
    out << "wrote " << table.rows() << " rows to " << join(opts.output_dir, "data.csv") << "\n";
    return kExitOk;
  });
}

int cmd_benchmark(const BenchmarkOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (opts.reps < 1) throw SpecError("--reps must be positive");
    if (opts.threads < 1) throw SpecError("--threads must be positive");
    Suite suite;
    if (opts.suite == "em-vs-nmdr") suite = em_vs_nmdr_suite(opts);
    else if (opts.suite == "optimizers") suite = optimizers_suite(opts);
    else if (opts.suite == "additive") suite = additive_suite(opts);
    else if (opts.suite == "sparsity") suite = sparsity_suite(opts);
    else
      throw SpecError("unknown suite \"" + opts.suite + "\" (expected one of em-vs-nmdr, optimizers, additive, sparsity)");
    out << "benchmark " << opts.suite << ": " << suite.tasks.size() << " runs\n";
    const std::vector<MetricRow> rows = run_tasks(suite.tasks, opts.threads, out);
    std::string csv = "scenario,method,rep,metric,value\r\n";
    for (const auto& r : rows)
      csv += csv_field(r.scenario) + "," + csv_field(r.method) + "," + std::to_string(r.rep) + "," +
             csv_field(r.metric) + "," + format_double(r.value) + "\r\n";
    write_file_atomic(join(opts.output_dir, "metrics.csv"), csv);
    write_file_atomic(join(opts.output_dir, "summary.json"), dump(summarize(suite, rows, opts)));
    out << "wrote " << rows.size() << " metric rows to " << join(opts.output_dir, "metrics.csv") << "\n";
    return kExitOk;
  });
}

int cmd_path(const PathOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (opts.xi.empty()) throw SpecError("--xi: grid is empty");
    for (std::size_t k = 0; k < opts.xi.size(); ++k) {
      if (!(opts.xi[k] >= 0.0) || !std::isfinite(opts.xi[k])) throw SpecError("--xi: values must be finite and non-negative");
      if (k && opts.xi[k] < opts.xi[k - 1]) throw SpecError("--xi: grid must be non-decreasing");
    }
    const FitContext ctx = load_context(opts.config, opts.output_dir);
    const MixtureModel base = build_model(ctx, ctx.rc.model);
    std::string csv = "xi,component,pi_hat,pls\r\n";
    Eigen::VectorXd warm;
    for (double xi : opts.xi) {
      const MixtureModel model = base.with_xi(xi);
      const FitResult result = fit(model, ctx.rc.optimizer, warm.size() ? &warm : nullptr);
      if (!result.ok()) {
        err << "error: xi=" << xi << ": " << result.failure << "\n";
        return kExitNumerical;
      }
      warm = result.psi;
      const Eigen::VectorXd pi = marginal_weights(model, result.psi, all_rows(model.rows()));
      bool on_test = false;
      const double pls = score(ctx, model, result.psi, &on_test);
      for (Eigen::Index m = 0; m < pi.size(); ++m)
        csv += format_double(xi) + "," + std::to_string(m + 1) + "," + format_double(pi(m)) + "," + format_double(pls) + "\r\n";
      out << "xi=" << xi << " pls=" << pls << (on_test ? " (test)" : " (train)") << "\n";
    }
    write_file_atomic(join(ctx.rc.output.directory, "path.csv"), csv);
    return kExitOk;
  });
}

}  // namespace moedr::cli
