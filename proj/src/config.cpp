#include "marcus/config.hpp"

#include "marcus/examples.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>
#include <sstream>

namespace marcus::config {
namespace {

using json = nlohmann::json;

std::string join(const std::string& path, std::string_view key) {
  return path.empty() ? std::string(key) : path + "." + std::string(key);
}

std::string at_index(const std::string& path, std::size_t i) {
  return path + "[" + std::to_string(i) + "]";
}

[[noreturn]] void fail(const std::string& path, const std::string& message) {
  throw ValidationError(path + ": " + message);
}

void check_keys(const json& obj, const std::string& path,
                std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) fail(path.empty() ? "(root)" : path, "expected an object");
  for (const auto& item : obj.items()) {
    bool known = false;
    for (auto key : allowed) known = known || key == item.key();
    if (!known) fail(join(path, item.key()), "unknown key");
  }
}

const json* find(const json& obj, std::string_view key) {
  const auto it = obj.find(std::string(key));
  return it == obj.end() ? nullptr : &*it;
}

const json& require(const json& obj, const std::string& path, std::string_view key) {
  const json* j = find(obj, key);
  if (j == nullptr) fail(join(path, key), "required");
  return *j;
}

double number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  const double x = j.get<double>();
  if (!std::isfinite(x)) fail(path, "must be finite");
  return x;
}

double number_or(const json& obj, const std::string& path, std::string_view key, double fallback) {
  const json* j = find(obj, key);
  return j == nullptr ? fallback : number(*j, join(path, key));
}

std::uint64_t whole(const json& j, const std::string& path) {
  if (!j.is_number_unsigned()) fail(path, "expected a non-negative integer");
  return j.get<std::uint64_t>();
}

int count_or(const json& obj, const std::string& path, std::string_view key, int fallback,
             int minimum) {
  const json* j = find(obj, key);
  if (j == nullptr) return fallback;
  const std::uint64_t v = whole(*j, join(path, key));
  if (v < static_cast<std::uint64_t>(minimum) || v > std::numeric_limits<int>::max())
    fail(join(path, key), "must be an integer >= " + std::to_string(minimum));
  return static_cast<int>(v);
}

bool flag_or(const json& obj, const std::string& path, std::string_view key, bool fallback) {
  const json* j = find(obj, key);
  if (j == nullptr) return fallback;
  if (!j->is_boolean()) fail(join(path, key), "expected true or false");
  return j->get<bool>();
}

std::string text(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  return j.get<std::string>();
}

std::vector<double> numbers(const json& j, const std::string& path) {
  if (j.is_number()) return {number(j, path)};
  if (!j.is_array()) fail(path, "expected a number or an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number(j[i], at_index(path, i)));
  return out;
}

Vec vector_of(const json& j, const std::string& path, int size) {
  const std::vector<double> xs = numbers(j, path);
  if (static_cast<int>(xs.size()) != size)
    fail(path, "expected " + std::to_string(size) + " entries, got " + std::to_string(xs.size()));
  Vec v(size);
  for (int k = 0; k < size; ++k) v[k] = xs[static_cast<std::size_t>(k)];
  return v;
}

// Rows as nested arrays; a bare number is accepted for 1x1.
Mat matrix_of(const json& j, const std::string& path, int rows, int cols) {
  Mat m(rows, cols);
  if (j.is_number() && rows == 1 && cols == 1) {
    m(0, 0) = number(j, path);
    return m;
  }
  if (!j.is_array() || static_cast<int>(j.size()) != rows)
    fail(path, "expected " + std::to_string(rows) + " rows");
  for (int r = 0; r < rows; ++r) {
    const Vec row = vector_of(j[static_cast<std::size_t>(r)], at_index(path, static_cast<std::size_t>(r)), cols);
    m.row(r) = row.transpose();
  }
  return m;
}

std::function<Vec(const Vec&)> parse_drift(const json& j, const std::string& path, int d) {
  const std::string family = text(require(j, path, "family"), join(path, "family"));
  if (family == "zero") {
    check_keys(j, path, {"family"});
    return [d](const Vec&) { return Vec(Vec::Zero(d)); };
  }
  if (family == "linear") {
    check_keys(j, path, {"family", "matrix"});
    const Mat m = matrix_of(require(j, path, "matrix"), join(path, "matrix"), d, d);
    return [m](const Vec& x) { return Vec(m * x); };
  }
  if (family == "affine") {
    check_keys(j, path, {"family", "matrix", "offset"});
    const Mat m = matrix_of(require(j, path, "matrix"), join(path, "matrix"), d, d);
    const Vec c = vector_of(require(j, path, "offset"), join(path, "offset"), d);
    return [m, c](const Vec& x) { return Vec(m * x + c); };
  }
  if (family == "cubic") {
    // f_i(x) = (M x)_i + c_i + k_i x_i^3
    check_keys(j, path, {"family", "matrix", "offset", "cubic"});
    const json* jm = find(j, "matrix");
    const json* jc = find(j, "offset");
    const Mat m = jm ? matrix_of(*jm, join(path, "matrix"), d, d) : Mat(Mat::Zero(d, d));
    const Vec c = jc ? vector_of(*jc, join(path, "offset"), d) : Vec(Vec::Zero(d));
    const Vec k = vector_of(require(j, path, "cubic"), join(path, "cubic"), d);
    return [m, c, k](const Vec& x) {
      Vec f = m * x + c;
      for (Eigen::Index i = 0; i < x.size(); ++i) f[i] += k[i] * x[i] * x[i] * x[i];
      return f;
    };
  }
  fail(join(path, "family"), "unknown drift family \"" + family + "\" (zero, linear, affine, cubic)");
}

flow::NoiseCoefficient parse_sigma(const json& j, const std::string& path, int d, int n) {
  const std::string family = text(require(j, path, "family"), join(path, "family"));
  if (family == "constant") {
    check_keys(j, path, {"family", "matrix"});
    const Mat s = matrix_of(require(j, path, "matrix"), join(path, "matrix"), d, n);
    auto grad = [d, n](const Vec&) {
      flow::SigmaGradient g;
      for (auto& m : g) m = Mat::Zero(d, n);
      return g;
    };
    return flow::NoiseCoefficient(d, n, [s](const Vec&) { return s; }, grad);
  }
  if (family == "linear") {
    // column j of sigma(x) is M_j x + c_j
    check_keys(j, path, {"family", "matrices", "offset"});
    const json& jm = require(j, path, "matrices");
    const std::string mpath = join(path, "matrices");
    if (!jm.is_array() || static_cast<int>(jm.size()) != n)
      fail(mpath, "expected " + std::to_string(n) + " matrices, one per driver coordinate");
    std::vector<Mat> ms;
    for (std::size_t c = 0; c < jm.size(); ++c) ms.push_back(matrix_of(jm[c], at_index(mpath, c), d, d));
    const json* jo = find(j, "offset");
    const Mat offset = jo ? matrix_of(*jo, join(path, "offset"), d, n) : Mat(Mat::Zero(d, n));
    auto sigma = [ms, offset](const Vec& x) {
      Mat s = offset;
      for (std::size_t c = 0; c < ms.size(); ++c) s.col(static_cast<Eigen::Index>(c)) += ms[c] * x;
      return s;
    };
    auto grad = [ms, d, n](const Vec&) {
      flow::SigmaGradient g;
      for (int m = 0; m < d; ++m) {
        g[static_cast<std::size_t>(m)] = Mat::Zero(d, n);
        for (int c = 0; c < n; ++c)
          g[static_cast<std::size_t>(m)].col(c) = ms[static_cast<std::size_t>(c)].col(m);
      }
      return g;
    };
    return flow::NoiseCoefficient(d, n, sigma, grad);
  }
  fail(join(path, "family"), "unknown sigma family \"" + family + "\" (constant, linear)");
}

levy::JumpDistribution parse_rho(const json& j, const std::string& path) {
  const std::string family = text(require(j, path, "family"), join(path, "family"));
  if (family == "discrete") {
    check_keys(j, path, {"family", "values", "probs"});
    levy::DiscreteJumps r;
    r.values = numbers(require(j, path, "values"), join(path, "values"));
    const json* jp = find(j, "probs");
    r.probs = jp ? numbers(*jp, join(path, "probs"))
                 : std::vector<double>(r.values.size(), 1.0 / static_cast<double>(r.values.size()));
    if (r.probs.size() != r.values.size()) fail(join(path, "probs"), "must match values in length");
    return r;
  }
  if (family == "normal") {
    check_keys(j, path, {"family", "mean", "sd"});
    return levy::NormalJumps{number_or(j, path, "mean", 0.0), number(require(j, path, "sd"), join(path, "sd"))};
  }
  if (family == "uniform") {
    check_keys(j, path, {"family", "lower", "upper"});
    return levy::UniformJumps{number(require(j, path, "lower"), join(path, "lower")),
                              number(require(j, path, "upper"), join(path, "upper"))};
  }
  fail(join(path, "family"), "unknown jump-size family \"" + family + "\" (discrete, normal, uniform)");
}

levy::JumpLaw parse_jump(const json& j, const std::string& path) {
  const std::string type = text(require(j, path, "type"), join(path, "type"));
  levy::JumpLaw law;
  if (type == "compound_poisson") {
    check_keys(j, path, {"type", "lambda", "rho"});
    const double rate = number(require(j, path, "lambda"), join(path, "lambda"));
    if (!(rate > 0.0)) fail(join(path, "lambda"), "must be > 0");
    law = levy::CompoundPoisson{rate, parse_rho(require(j, path, "rho"), join(path, "rho"))};
  } else if (type == "stable") {
    check_keys(j, path, {"type", "alpha"});
    const double alpha = number(require(j, path, "alpha"), join(path, "alpha"));
    if (!(alpha > 0.0 && alpha < 2.0)) fail(join(path, "alpha"), "must lie in (0, 2)");
    law = levy::AlphaStable{alpha};
  } else {
    fail(join(path, "type"), "unknown jump type \"" + type + "\" (compound_poisson, stable)");
  }
  try {
    levy::validate(law);
  } catch (const ValidationError& e) {
    fail(path, e.what());
  }
  return law;
}

levy::ScalarTriplet parse_block(const json& j, const std::string& path) {
  check_keys(j, path, {"b", "a", "jumps"});
  levy::ScalarTriplet s;
  s.b = number_or(j, path, "b", 0.0);
  s.a = number_or(j, path, "a", 0.0);
  if (s.a < 0.0) fail(join(path, "a"), "must be >= 0");
  if (const json* jj = find(j, "jumps")) {
    const std::string jpath = join(path, "jumps");
    if (!jj->is_array()) fail(jpath, "expected an array");
    for (std::size_t i = 0; i < jj->size(); ++i) s.jumps.push_back(parse_jump((*jj)[i], at_index(jpath, i)));
  }
  return s;
}

levy::LevyTriplet parse_driver(const json& j, int n) {
  const std::string path = "driver";
  std::vector<levy::ScalarTriplet> blocks;
  if (j.is_object()) {
    blocks.push_back(parse_block(j, path));
  } else if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) blocks.push_back(parse_block(j[i], at_index(path, i)));
  } else {
    fail(path, "expected a block or an array of per-coordinate blocks");
  }
  if (static_cast<int>(blocks.size()) != n)
    fail(path, "model has n = " + std::to_string(n) + " driver coordinates but " +
                   std::to_string(blocks.size()) + " blocks were given");
  try {
    return levy::product_triplet(blocks);
  } catch (const ValidationError& e) {
    fail(path, e.what());
  }
}

InitialState parse_initial(const json& j, int d) {
  const std::string path = "initial";
  const std::string type = text(require(j, path, "type"), join(path, "type"));
  if (type == "point") {
    check_keys(j, path, {"type", "x"});
    return PointInitial{vector_of(require(j, path, "x"), join(path, "x"), d)};
  }
  if (type == "normal") {
    check_keys(j, path, {"type", "mean", "sd"});
    NormalInitial g{vector_of(require(j, path, "mean"), join(path, "mean"), d),
                    vector_of(require(j, path, "sd"), join(path, "sd"), d)};
    for (int k = 0; k < d; ++k)
      if (!(g.sd[k] > 0.0)) fail(join(path, "sd"), "entries must be > 0");
    return g;
  }
  fail(join(path, "type"), "unknown initial type \"" + type + "\" (point, normal)");
}

fpe::Grid parse_grid(const json& j, int d) {
  const std::string path = "grid";
  check_keys(j, path, {"lower", "upper", "cells"});
  const Vec lo = vector_of(require(j, path, "lower"), join(path, "lower"), d);
  const Vec hi = vector_of(require(j, path, "upper"), join(path, "upper"), d);
  const json& jc = require(j, path, "cells");
  std::vector<fpe::Axis> axes;
  for (int k = 0; k < d; ++k) {
    const json& c = jc.is_array() ? (static_cast<int>(jc.size()) == d ? jc[static_cast<std::size_t>(k)] : json())
                                  : jc;
    const std::uint64_t cells = whole(c, join(path, "cells"));
    axes.push_back(fpe::Axis{lo[k], hi[k], static_cast<int>(cells)});
  }
  try {
    return fpe::Grid(std::move(axes));
  } catch (const ValidationError& e) {
    fail(path, e.what());
  }
}

ModelSpec parse_model(const json& root) {
  const json& jm = require(root, "", "model");
  ModelSpec model;
  std::string id;
  const json* jd = nullptr;
  const json* jn = nullptr;
  const json* jdrift = nullptr;
  const json* jsigma = nullptr;
  if (jm.is_string()) {
    id = jm.get<std::string>();
  } else {
    check_keys(jm, "model", {"id", "d", "n", "drift", "sigma"});
    if (const json* ji = find(jm, "id")) id = text(*ji, "model.id");
    jd = find(jm, "d");
    jn = find(jm, "n");
    jdrift = find(jm, "drift");
    jsigma = find(jm, "sigma");
  }

  int d = 0;
  int n = 0;
  if (!id.empty()) {
    if (!examples::is_example_id(id)) throw ValidationError("model: unknown model \"" + id + "\"");
    if (jsigma != nullptr) fail("model.sigma", "built-in models fix sigma");
    d = examples::closed_form_map(id).d;
    n = examples::closed_form_map(id).n;
    if (jd != nullptr && static_cast<int>(whole(*jd, "model.d")) != d) fail("model.d", "does not match " + id);
    if (jn != nullptr && static_cast<int>(whole(*jn, "model.n")) != n) fail("model.n", "does not match " + id);
    model.id = id;
    model.noise = examples::example_noise(id);
    model.drift = jdrift ? parse_drift(*jdrift, "model.drift", d) : examples::example_default_drift(id);
  } else {
    if (jd == nullptr || jn == nullptr) fail("model", "an inline model needs d and n");
    d = static_cast<int>(whole(*jd, "model.d"));
    n = static_cast<int>(whole(*jn, "model.n"));
    if (d < 1 || d > kMaxDim) fail("model.d", "must lie in [1, " + std::to_string(kMaxDim) + "]");
    if (n < 1 || n > kMaxDim) fail("model.n", "must lie in [1, " + std::to_string(kMaxDim) + "]");
    if (jdrift == nullptr) fail("model.drift", "required");
    if (jsigma == nullptr) fail("model.sigma", "required");
    model.id = "custom";
    model.drift = parse_drift(*jdrift, "model.drift", d);
    model.noise = parse_sigma(*jsigma, "model.sigma", d, n);
  }
  model.driver = parse_driver(require(root, "", "driver"), n);
  return model;
}

std::string locate_error(std::string_view text, std::size_t byte) {
  std::size_t line = 1;
  std::size_t column = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(column);
}

}  // namespace

bool is_task(std::string_view task) {
  for (auto t : kTasks)
    if (t == task) return true;
  return false;
}

sde::SimulationOptions RunConfig::simulation() const {
  sde::SimulationOptions o;
  o.epsilon = epsilon;
  o.outer_cutoff = outer_cutoff;
  o.small_jump_gaussian = small_jump_gaussian;
  o.flow_steps = steps;
  o.jump_map = jump_map;
  if (absorb_outside_grid && grid) {
    const int d = grid->dim();
    sde::Domain box{Vec(d), Vec(d)};
    for (int k = 0; k < d; ++k) {
      box.lower[k] = grid->axis(k).lower;
      box.upper[k] = grid->axis(k).upper;
    }
    o.absorb = box;
  }
  return o;
}

fpe::SolveOptions RunConfig::solve() const {
  fpe::SolveOptions o;
  o.quadrature.epsilon = epsilon;
  o.quadrature.outer_cutoff = outer_cutoff;
  o.quadrature.nodes_per_decade = nodes_per_decade;
  o.quadrature.rho_nodes = rho_nodes;
  o.quadrature.small_jump_gaussian = small_jump_gaussian;
  o.quadrature.flow_steps = steps;
  o.quadrature.jump_map = jump_map;
  o.quadrature.gather = gather;
  o.dt = fpe_dt;
  o.output_times = output_times;
  o.renormalize = renormalize;
  return o;
}

RunConfig parse_config(std::string_view text_in) {
  json root;
  try {
    root = json::parse(text_in.begin(), text_in.end(), nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ValidationError("config: syntax error at " + locate_error(text_in, e.byte) + ": " + e.what());
  }
  check_keys(root, "",
             {"task", "model", "driver", "initial", "T", "dt", "fpe_dt", "epsilon", "R", "steps",
              "n_paths", "seed", "threads", "grid", "nodes_per_decade", "rho_nodes",
              "small_jump_gaussian", "jump_map", "jump_gather", "absorb_outside_grid",
              "output_times", "renormalize", "flow_check"});

  RunConfig c;
  if (const json* jt = find(root, "task")) {
    c.task = text(*jt, "task");
    if (!is_task(c.task)) fail("task", "unknown task \"" + c.task + "\"");
  }
  c.model = parse_model(root);
  const int d = c.model.d();
  if (const json* ji = find(root, "initial")) {
    c.model.initial = parse_initial(*ji, d);
    c.has_initial = true;
  } else {
    c.model.initial = PointInitial{Vec(Vec::Zero(d))};
  }

  c.T = number_or(root, "", "T", c.T);
  if (c.T < 0.0) fail("T", "must be >= 0");
  c.dt = number_or(root, "", "dt", 0.0);
  if (find(root, "dt") && !(c.dt > 0.0)) fail("dt", "must be > 0");
  c.fpe_dt = number_or(root, "", "fpe_dt", 0.0);
  if (c.fpe_dt < 0.0) fail("fpe_dt", "must be >= 0");
  c.epsilon = number_or(root, "", "epsilon", c.epsilon);
  if (!(c.epsilon > 0.0 && c.epsilon <= 1.0)) fail("epsilon", "must lie in (0, 1]");
  c.outer_cutoff = number_or(root, "", "R", c.outer_cutoff);
  if (!(c.outer_cutoff > 1.0)) fail("R", "must be > 1");
  c.steps = count_or(root, "", "steps", c.steps, 1);
  c.nodes_per_decade = count_or(root, "", "nodes_per_decade", c.nodes_per_decade, 1);
  c.rho_nodes = count_or(root, "", "rho_nodes", c.rho_nodes, 1);
  if (const json* jn = find(root, "n_paths")) {
    const std::uint64_t n = whole(*jn, "n_paths");
    if (n == 0) fail("n_paths", "must be > 0");
    c.n_paths = static_cast<std::size_t>(n);
  }
  if (const json* js = find(root, "seed")) c.seed = whole(*js, "seed");
  c.threads = static_cast<unsigned>(count_or(root, "", "threads", 0, 0));
  c.small_jump_gaussian = flag_or(root, "", "small_jump_gaussian", false);
  c.renormalize = flag_or(root, "", "renormalize", true);
  if (const json* jj = find(root, "jump_map")) {
    const std::string m = text(*jj, "jump_map");
    if (m == "closed_form") c.jump_map = flow::JumpMapPolicy::ClosedFormIfAvailable;
    else if (m == "numeric") c.jump_map = flow::JumpMapPolicy::Numeric;
    else fail("jump_map", "expected \"closed_form\" or \"numeric\"");
  }
  if (const json* jg = find(root, "jump_gather")) {
    const std::string m = text(*jg, "jump_gather");
    if (m == "cell_average") c.gather = fpe::JumpGather::CellAverage;
    else if (m == "interpolate") c.gather = fpe::JumpGather::Interpolate;
    else fail("jump_gather", "expected \"cell_average\" or \"interpolate\"");
  }
  c.absorb_outside_grid = flag_or(root, "", "absorb_outside_grid", false);
  if (const json* jo = find(root, "output_times")) {
    c.output_times = numbers(*jo, "output_times");
    for (std::size_t i = 0; i < c.output_times.size(); ++i)
      if (c.output_times[i] < 0.0 || c.output_times[i] > c.T)
        fail(at_index("output_times", i), "must lie in [0, T]");
    std::sort(c.output_times.begin(), c.output_times.end());
  }
  if (const json* jg = find(root, "grid")) {
    if (d > 2) fail("grid", "density grids support d <= 2");
    c.grid = parse_grid(*jg, d);
  }
  if (const json* jf = find(root, "flow_check")) {
    check_keys(*jf, "flow_check", {"samples", "u_range", "v_range", "steps"});
    c.flow_check.samples = count_or(*jf, "flow_check", "samples", c.flow_check.samples, 1);
    c.flow_check.u_range = number_or(*jf, "flow_check", "u_range", c.flow_check.u_range);
    c.flow_check.v_range = number_or(*jf, "flow_check", "v_range", c.flow_check.v_range);
    c.flow_check.steps = count_or(*jf, "flow_check", "steps", c.flow_check.steps, 1);
    if (c.flow_check.u_range < 0.0) fail("flow_check.u_range", "must be >= 0");
    if (c.flow_check.v_range < 0.0) fail("flow_check.v_range", "must be >= 0");
  }

  try {
    c.model.validate();
  } catch (const ValidationError& e) {
    fail("model", e.what());
  }
  c.echo = root.dump(2);
  if (!c.task.empty()) require_for_task(c, c.task);
  return c;
}

void require_for_task(const RunConfig& c, std::string_view task) {
  const std::string t(task);
  if (!is_task(task)) throw ValidationError("unknown task \"" + t + "\"");
  if (task == "flow-check") return;
  const bool paths = task == "simulate" || task == "compare";
  const bool density = task == "solve" || task == "compare";
  if (paths && !c.n_paths) throw ValidationError("n_paths required for " + t);
  if (paths && !(c.dt > 0.0)) throw ValidationError("dt required for " + t);
  if (paths && !(c.T > 0.0)) fail("T", "must be > 0 for " + t);
  if (c.absorb_outside_grid && !c.grid) fail("absorb_outside_grid", "needs a grid");
  if (!c.has_initial) throw ValidationError("initial required for " + t);
  if (density) {
    if (!c.grid) throw ValidationError("grid required for " + t);
    if (!std::holds_alternative<NormalInitial>(c.model.initial))
      fail("initial.type", t + " needs a normal initial state");
  }
}

}  // namespace marcus::config
