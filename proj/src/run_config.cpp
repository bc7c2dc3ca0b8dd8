#include "moedr/run_config.hpp"

#include <cstdlib>
#include <filesystem>
#include <set>

#include "moedr/data_table.hpp"
#include "moedr/error.hpp"

namespace moedr {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& key, const std::string& what) {
  throw SpecError(key + ": " + what);
}

/// Object view that records which keys were read and rejects the rest.
class Block {
 public:
  Block(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

  const json* find(const std::string& k) {
    seen_.insert(k);
    auto it = j_.find(k);
    return it == j_.end() || it->is_null() ? nullptr : &*it;
  }

  bool has(const std::string& k) const { return j_.contains(k) && !j_.at(k).is_null(); }

  std::optional<double> number(const std::string& k) {
    const json* v = find(k);
    if (!v) return std::nullopt;
    if (!v->is_number()) fail(key(k), "expected a number");
    return v->get<double>();
  }

  std::optional<long long> integer(const std::string& k) {
    const json* v = find(k);
    if (!v) return std::nullopt;
    if (!v->is_number_integer()) fail(key(k), "expected an integer");
    return v->get<long long>();
  }

  std::optional<bool> boolean(const std::string& k) {
    const json* v = find(k);
    if (!v) return std::nullopt;
    if (!v->is_boolean()) fail(key(k), "expected true or false");
    return v->get<bool>();
  }

  std::optional<std::string> string(const std::string& k) {
    const json* v = find(k);
    if (!v) return std::nullopt;
    if (!v->is_string()) fail(key(k), "expected a string");
    return v->get<std::string>();
  }

  std::vector<std::string> strings(const std::string& k) {
    const json* v = find(k);
    if (!v) return {};
    if (!v->is_array()) fail(key(k), "expected a list of strings");
    std::vector<std::string> out;
    for (const auto& e : *v) {
      if (!e.is_string()) fail(key(k), "expected a list of strings");
      out.push_back(e.get<std::string>());
    }
    return out;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) fail(key(it.key()), "unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

int positive_int(Block& b, const std::string& k, int fallback) {
  auto v = b.integer(k);
  if (!v) return fallback;
  if (*v < 1 || *v > 1'000'000'000) fail(b.key(k), "must be a positive integer");
  return static_cast<int>(*v);
}

struct SmoothDefaults {
  BasisConfig basis;
  double df = 10.0;
};

SmoothDefaults read_smooth_defaults(Block& b, SmoothDefaults d) {
  if (auto v = b.number("df")) d.df = *v;
  d.basis.num_basis = positive_int(b, "num_basis", d.basis.num_basis);
  d.basis.degree = positive_int(b, "degree", d.basis.degree);
  d.basis.penalty_order = positive_int(b, "penalty_order", d.basis.penalty_order);
  return d;
}

SmoothSpec parse_smooth(const json& j, const std::string& path, const SmoothDefaults& d) {
  SmoothSpec s;
  s.basis = d.basis;
  s.basis.df = d.df;
  if (j.is_string()) {
    s.vars = {j.get<std::string>()};
    return s;
  }
  Block b(j, path);
  if (auto v = b.string("var")) s.vars = {*v};
  auto vars = b.strings("vars");
  if (!vars.empty()) {
    if (!s.vars.empty()) fail(path, "give either var or vars, not both");
    s.vars = vars;
  }
  if (s.vars.empty() || s.vars.size() > 2) fail(b.key("vars"), "a smooth needs one or two variables");
  s.basis.num_basis = positive_int(b, "num_basis", s.basis.num_basis);
  s.basis.degree = positive_int(b, "degree", s.basis.degree);
  s.basis.penalty_order = positive_int(b, "penalty_order", s.basis.penalty_order);
  auto df = b.number("df");
  auto lambda = b.number("lambda");
  if (df && lambda) fail(path, "give either df or lambda, not both");
  if (lambda) {
    if (!(*lambda >= 0.0)) fail(b.key("lambda"), "must be non-negative");
    s.basis.df.reset();
    s.basis.lambda = *lambda;
  } else if (df) {
    s.basis.df = *df;
  }
  b.finish();
  try {
    s.basis.validate();
  } catch (const Error& e) {
    fail(path, e.what());
  }
  return s;
}

PredictorSpec parse_predictor(const json& j, const std::string& path, const SmoothDefaults& d) {
  Block b(j, path);
  PredictorSpec p;
  if (auto v = b.boolean("intercept")) p.intercept = *v;
  p.linear = b.strings("linear");
  if (const json* sm = b.find("smooth")) {
    if (!sm->is_array()) fail(b.key("smooth"), "expected a list");
    for (std::size_t i = 0; i < sm->size(); ++i)
      p.smooth.push_back(parse_smooth((*sm)[i], b.key("smooth") + "[" + std::to_string(i) + "]", d));
  }
  p.offset = b.string("offset");
  b.finish();
  return p;
}

std::vector<PredictorSpec> parse_params(const json& j, const std::string& path, const Family& family,
                                        const SmoothDefaults& d) {
  Block b(j, path);
  std::vector<PredictorSpec> out;
  for (int k = 0; k < family.param_count(); ++k) {
    const std::string name(family.param_name(k));
    const json* v = b.find(name);
    out.push_back(v ? parse_predictor(*v, b.key(name), d) : PredictorSpec{});
  }
  try {
    b.finish();
  } catch (const SpecError& e) {
    throw SpecError(std::string(e.what()) + " (not a parameter of the " +
                    std::string(family.name()) + " family)");
  }
  return out;
}

Family parse_family(const json& j, const std::string& key) {
  if (!j.is_string()) fail(key, "expected a family name");
  try {
    return family_from_name(j.get<std::string>());
  } catch (const Error& e) {
    fail(key, e.what());
  }
}

std::string resolve(const std::string& path, const std::string& base_dir) {
  std::filesystem::path p(path);
  if (p.is_absolute() || base_dir.empty()) return p.string();
  return (std::filesystem::path(base_dir) / p).lexically_normal().string();
}

ModelSpec parse_model(const json& j, const std::string& path) {
  Block b(j, path);
  SmoothDefaults d = read_smooth_defaults(b, {});
  ModelSpec spec;
  const json* fam = b.find("family");
  const json* fams = b.find("families");
  auto count = b.integer("components");
  if (fam && fams) fail(b.key("families"), "give either family or families, not both");
  if (fams) {
    if (!fams->is_array() || fams->empty()) fail(b.key("families"), "expected a non-empty list");
    for (std::size_t m = 0; m < fams->size(); ++m)
      spec.families.push_back(parse_family((*fams)[m], b.key("families") + "[" + std::to_string(m) + "]"));
    if (count && *count != static_cast<long long>(spec.families.size()))
      fail(b.key("components"), "does not match the length of families");
  } else {
    if (!fam) fail(b.key("family"), "missing (or give families)");
    const Family f = parse_family(*fam, b.key("family"));
    const long long M = count.value_or(1);
    if (M < 1 || M > 1000) fail(b.key("components"), "must be between 1 and 1000");
    spec.families.assign(static_cast<std::size_t>(M), f);
  }
  const int M = spec.components();

  const json* shared = b.find("params");
  const json* per = b.find("component_params");
  if (per && (!per->is_array() || static_cast<int>(per->size()) != M))
    fail(b.key("component_params"), "expected a list with one entry per component");
  for (int m = 0; m < M; ++m) {
    const Family& f = spec.families[static_cast<std::size_t>(m)];
    if (per) {
      spec.params.push_back(parse_params((*per)[static_cast<std::size_t>(m)],
                                         b.key("component_params") + "[" + std::to_string(m) + "]", f, d));
    } else if (shared) {
      spec.params.push_back(parse_params(*shared, b.key("params"), f, d));
    } else {
      spec.params.emplace_back(static_cast<std::size_t>(f.param_count()));
    }
  }
  if (per && shared) fail(b.key("params"), "give either params or component_params, not both");
  if (const json* g = b.find("gating")) spec.gating = parse_predictor(*g, b.key("gating"), d);
  if (auto xi = b.number("xi")) {
    if (!(*xi >= 0.0)) fail(b.key("xi"), "must be non-negative");
    spec.entropy_xi = *xi;
  }
  b.finish();
  try {
    spec.validate();
  } catch (const SpecError& e) {
    fail(path, e.what());
  }
  return spec;
}

OptimConfig parse_optimizer(const json& j, const std::string& path) {
  Block b(j, path);
  OptimConfig c;
  if (auto m = b.string("method")) {
    try {
      c.method = method_from_name(*m);
    } catch (const Error& e) {
      fail(b.key("method"), e.what());
    }
  }
  c.learning_rate = b.number("learning_rate");
  c.batch_size = positive_int(b, "batch_size", c.batch_size);
  c.max_epochs = positive_int(b, "max_epochs", c.max_epochs);
  if (auto v = b.integer("patience")) {
    if (*v < 0) fail(b.key("patience"), "must be non-negative");
    c.patience = static_cast<int>(*v);
  }
  if (auto v = b.number("val_fraction")) c.val_fraction = *v;
  c.restarts = positive_int(b, "restarts", c.restarts);
  if (auto v = b.integer("seed")) {
    if (*v < 0) fail(b.key("seed"), "must be non-negative");
    c.seed = static_cast<std::uint64_t>(*v);
  }
  if (const json* cl = b.find("cyclic_lr")) {
    Block cb(*cl, b.key("cyclic_lr"));
    CyclicLr lr;
    if (auto v = cb.number("base")) lr.base = *v;
    if (auto v = cb.number("max")) lr.max = *v;
    if (auto v = cb.integer("period")) lr.period = static_cast<long>(*v);
    cb.finish();
    c.cyclic_lr = lr;
  }
  b.finish();
  try {
    c.validate();
  } catch (const Error& e) {
    fail(path, e.what());
  }
  return c;
}

DataConfig parse_data(const json& j, const std::string& path, const std::string& base_dir) {
  Block b(j, path);
  DataConfig d;
  auto csv = b.string("csv");
  if (!csv) fail(b.key("csv"), "missing");
  d.csv = resolve(*csv, base_dir);
  if (auto r = b.string("response")) d.response = *r;
  if (auto t = b.string("test_csv")) d.test_csv = resolve(*t, base_dir);
  if (auto f = b.number("test_fraction")) {
    if (!(*f >= 0.0 && *f < 1.0)) fail(b.key("test_fraction"), "must be in [0, 1)");
    d.test_fraction = *f;
  }
  if (d.test_csv && d.test_fraction > 0.0) fail(b.key("test_fraction"), "cannot be combined with test_csv");
  d.label_column = b.string("label_column");
  b.finish();
  return d;
}

OutputConfig parse_output(const json* j, const std::string& path, const std::string& base_dir) {
  OutputConfig o;
  const char* env = std::getenv("MOEDR_OUTPUT_DIR");
  o.directory = env && *env ? env : "moedr-out";
  if (!j) return o;
  Block b(*j, path);
  if (auto dir = b.string("directory")) o.directory = resolve(*dir, base_dir);
  if (b.has("formats")) {
    auto formats = b.strings("formats");
    o.json = o.csv = false;
    for (const auto& f : formats) {
      if (f == "json") o.json = true;
      else if (f == "csv") o.csv = true;
      else fail(b.key("formats"), "unknown format \"" + f + "\" (expected json or csv)");
    }
  }
  b.finish();
  return o;
}

}  // namespace

ModelSpec parse_model_block(const nlohmann::json& block) { return parse_model(block, "model"); }

RunConfig parse_run_config(const nlohmann::json& doc, const std::string& base_dir) {
  Block top(doc, "");
  RunConfig rc;
  const json* model = top.find("model");
  if (!model) fail("model", "missing");
  rc.model = parse_model(*model, "model");
  rc.model_echo = *model;
  if (const json* opt = top.find("optimizer")) rc.optimizer = parse_optimizer(*opt, "optimizer");
  const json* data = top.find("data");
  if (!data) fail("data", "missing");
  rc.data = parse_data(*data, "data", base_dir);
  rc.output = parse_output(top.find("output"), "output", base_dir);
  top.finish();
  return rc;
}

RunConfig load_run_config(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception& e) {
    throw SpecError("config: " + std::string(e.what()));
  }
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SpecError("config: " + std::string(e.what()));
  }
  return parse_run_config(doc, std::filesystem::path(path).parent_path().string());
}

}  // namespace moedr
