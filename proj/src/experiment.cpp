#include <qclab/experiment.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <exception>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

namespace qclab {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------- parsing

[[noreturn]] void fail(const std::string& path, const std::string& message)
{
  throw ConfigError(path + ": " + message);
}

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& path)
{
  if (!obj.is_object()) {
    fail(path, "expected an object");
  }
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) {
      fail(path + "." + key, "unknown field");
    }
  }
}

const json* find(const json& obj, const std::string& key)
{
  const auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

const json& required(const json& obj, const std::string& key, const std::string& path)
{
  const json* v = find(obj, key);
  if (!v) {
    fail(path + "." + key, "required field is missing");
  }
  return *v;
}

long long as_int(const json& j, const std::string& path)
{
  if (!j.is_number_integer()) {
    fail(path, "expected an integer");
  }
  return j.get<long long>();
}

int as_int_in(const json& j, const std::string& path, long long lo, long long hi)
{
  const long long v = as_int(j, path);
  if (v < lo || v > hi) {
    fail(path, "value " + std::to_string(v) + " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  return static_cast<int>(v);
}

double as_number(const json& j, const std::string& path)
{
  if (!j.is_number()) {
    fail(path, "expected a number");
  }
  return j.get<double>();
}

std::string as_string(const json& j, const std::string& path)
{
  if (!j.is_string()) {
    fail(path, "expected a string");
  }
  return j.get<std::string>();
}

const json& as_array(const json& j, const std::string& path)
{
  if (!j.is_array()) {
    fail(path, "expected an array");
  }
  return j;
}

std::string at(const std::string& path, std::size_t i)
{
  return path + "[" + std::to_string(i) + "]";
}

// splitmix64 step: independent streams from one seed
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream)
{
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Complex parse_complex(const json& j, const std::string& path)
{
  if (j.is_number()) {
    return {j.get<double>(), 0.0};
  }
  if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number()) {
    return {j[0].get<double>(), j[1].get<double>()};
  }
  fail(path, "expected a number or [re, im]");
}

Matrix parse_matrix(const json& j, const std::string& path, Rng& rng, int max_dim)
{
  check_keys(j, {"random", "hermitian", "identity", "zero", "entries", "size", "scale"}, path);
  const double scale = find(j, "scale") ? as_number(j["scale"], path + ".scale") : 1.0;
  Matrix m;
  if (const json* v = find(j, "random")) {
    const int n = as_int_in(*v, path + ".random", 0, max_dim);
    m = random_matrix(rng, n, n);
  } else if (const json* v = find(j, "hermitian")) {
    const int n = as_int_in(*v, path + ".hermitian", 0, max_dim);
    m = random_hermitian(rng, n);
  } else if (const json* v = find(j, "identity")) {
    m = Matrix::Identity(as_int_in(*v, path + ".identity", 0, max_dim), as_int_in(*v, path + ".identity", 0, max_dim));
  } else if (const json* v = find(j, "zero")) {
    const int n = as_int_in(*v, path + ".zero", 0, max_dim);
    m = Matrix::Zero(n, n);
  } else if (const json* v = find(j, "entries")) {
    const int n = as_int_in(required(j, "size", path), path + ".size", 0, max_dim);
    m = Matrix::Zero(n, n);
    const auto& list = as_array(*v, path + ".entries");
    for (std::size_t e = 0; e < list.size(); ++e) {
      const auto p = at(path + ".entries", e);
      const auto& row = as_array(list[e], p);
      if (row.size() != 3 && row.size() != 4) {
        fail(p, "expected [i, j, re] or [i, j, re, im]");
      }
      const int i = as_int_in(row[0], p + "[0]", 0, n - 1);
      const int c = as_int_in(row[1], p + "[1]", 0, n - 1);
      const double im = row.size() == 4 ? as_number(row[3], p + "[3]") : 0.0;
      m(i, c) = Complex(as_number(row[2], p + "[2]"), im);
    }
  } else {
    fail(path, "expected one of random, hermitian, identity, zero, entries");
  }
  return scale * m;
}

TailStateSpec parse_states(const json& j, const std::string& path, Rng& rng, int n)
{
  check_keys(j, {"coordinate", "random", "rule"}, path);
  LimitRule rule = LimitRule::Plain;
  if (const json* r = find(j, "rule")) {
    const auto name = as_string(*r, path + ".rule");
    if (name == "cesaro") {
      rule = LimitRule::Cesaro;
    } else if (name != "plain") {
      fail(path + ".rule", "expected 'plain' or 'cesaro'");
    }
  }
  TailStateSpec ts;
  if (const json* c = find(j, "coordinate")) {
    const auto p = path + ".coordinate";
    check_keys(*c, {"first", "count"}, p);
    const int first = as_int_in(required(*c, "first", p), p + ".first", 0, n - 1);
    const int count = as_int_in(required(*c, "count", p), p + ".count", 1, n - first);
    ts = coordinate_states(first, count, rule);
  } else if (const json* r = find(j, "random")) {
    const auto p = path + ".random";
    check_keys(*r, {"first", "width", "count"}, p);
    const int first = as_int_in(required(*r, "first", p), p + ".first", 0, n - 1);
    const int width = as_int_in(required(*r, "width", p), p + ".width", 1, n - first);
    const int count = as_int_in(required(*r, "count", p), p + ".count", 1, (n - first) / width);
    ts = random_tail_states(rng, first, width, count, rule);
  } else {
    fail(path, "expected 'coordinate' or 'random' states");
  }
  return ts;
}

NamedFunctional parse_functional(const json& j, const std::string& path, Rng& rng, const HermitianTuple& shape,
                                 const GaugeSpec& g, int n)
{
  check_keys(j, {"id", "trace_part", "singular_part"}, path);
  NamedFunctional out;
  out.id = as_string(required(j, "id", path), path + ".id");
  if (const json* t = find(j, "trace_part")) {
    const auto p = path + ".trace_part";
    check_keys(*t, {"x", "ys"}, p);
    TracePart tp;
    tp.gauge = g;
    tp.x = find(*t, "x") ? parse_matrix((*t)["x"], p + ".x", rng, n) : Matrix();
    if (const json* ys = find(*t, "ys")) {
      const auto& list = as_array(*ys, p + ".ys");
      if (!list.empty() && list.size() != shape.size()) {
        fail(p + ".ys", "expected " + std::to_string(shape.size()) + " blocks, one per tuple operator");
      }
      for (std::size_t i = 0; i < list.size(); ++i) {
        tp.ys.push_back(parse_matrix(list[i], at(p + ".ys", i), rng, n));
      }
    }
    if (tp.required_dim(shape.bandwidth) > n) {
      fail(p, "supports need N >= " + std::to_string(tp.required_dim(shape.bandwidth)));
    }
    out.spec.trace_part = std::move(tp);
  }
  if (const json* s = find(j, "singular_part")) {
    const auto& list = as_array(*s, path + ".singular_part");
    for (std::size_t i = 0; i < list.size(); ++i) {
      const auto p = at(path + ".singular_part", i);
      check_keys(list[i], {"weight", "states"}, p);
      TailTerm term;
      term.weight = find(list[i], "weight") ? parse_complex(list[i]["weight"], p + ".weight") : Complex(1.0);
      term.states = parse_states(required(list[i], "states", p), p + ".states", rng, n);
      out.spec.singular_part.push_back(std::move(term));
    }
  }
  if (!out.spec.trace_part && !out.spec.has_singular()) {
    fail(path, "a functional needs a trace_part or a singular_part");
  }
  return out;
}

std::vector<int> parse_int_list(const json& j, const std::string& path, int lo, int hi)
{
  std::vector<int> out;
  const auto& list = as_array(j, path);
  for (std::size_t i = 0; i < list.size(); ++i) {
    out.push_back(as_int_in(list[i], at(path, i), lo, hi));
  }
  return out;
}

// ---------------------------------------------------------------- output

std::string fnv1a(const std::string& bytes, std::uint64_t h = 0xcbf29ce484222325ULL)
{
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

json complex_json(Complex z)
{
  return json::array({z.real(), z.imag()});
}

json optional_complex(const std::optional<Complex>& z)
{
  return z ? complex_json(*z) : json(nullptr);
}

class CsvTable {
public:
  explicit CsvTable(std::vector<std::string> header) : width_(header.size()) { row(header); }

  void row(const std::vector<std::string>& cells)
  {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      text_ += (i ? "," : "") + cells[i];
    }
    text_ += "\n";
  }
  const std::string& text() const { return text_; }
  std::size_t width() const { return width_; }

private:
  std::size_t width_;
  std::string text_;
};

// Runs fn(i) for i < count on up to `jobs` threads; results keep index order.
template <typename T, typename Fn>
std::vector<T> parallel_map(std::size_t count, int jobs, Fn fn)
{
  std::vector<std::optional<T>> slots(count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        slots[i] = fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto extra = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(jobs, 1))) - (count > 0 ? 1 : 0);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < extra; ++t) {
    pool.emplace_back(worker);
  }
  worker();
  for (auto& t : pool) {
    t.join();
  }
  std::vector<T> out;
  for (std::size_t i = 0; i < count; ++i) {
    if (errors[i]) {
      std::rethrow_exception(errors[i]);
    }
    out.push_back(std::move(*slots[i]));
  }
  return out;
}

std::string mode_name(ScheduleMode mode)
{
  return mode == ScheduleMode::Ramp ? "ramp" : "optimized";
}

// ---------------------------------------------------------------- stages

struct Artifacts {
  std::map<std::string, std::string> files; ///< name -> bytes
};

struct AxiomStats {
  double triangle = 0.0;
  double unitary = 0.0;
  double ideal = 0.0;
  double holder_ratio = 0.0;
  int holder_failures = 0;
};

AxiomStats gauge_axioms(const GaugeSpec& g, std::uint64_t seed, const GaugeCheckSpec& spec)
{
  Rng rng(seed);
  AxiomStats st;
  for (int t = 0; t < spec.trials; ++t) {
    const int n = rng.uniform_int(spec.min_dim, spec.max_dim);
    const Matrix a = random_matrix(rng, n, n);
    const Matrix b = random_matrix(rng, n, n);
    const Matrix m = random_matrix(rng, n, n);
    const Matrix u = random_unitary(rng, n);
    const Matrix v = random_unitary(rng, n);
    const double na = gauge_norm(g, a);
    const double nb = gauge_norm(g, b);
    const double nm = gauge_norm(g, m);
    st.triangle = std::max(st.triangle, (gauge_norm(g, Matrix(a + b)) - na - nb) / (na + nb));
    st.unitary = std::max(st.unitary, std::abs(gauge_norm(g, Matrix(u * m * v)) - nm) / nm);
    const double cap = operator_norm(a) * nm * operator_norm(b);
    st.ideal = std::max(st.ideal, (gauge_norm(g, Matrix(a * m * b)) - cap) / cap);
    const auto h = holder_check(a, b, g);
    st.holder_ratio = std::max(st.holder_ratio, h.lhs / h.rhs);
    st.holder_failures += h.ok ? 0 : 1;
  }
  return st;
}

class Runner {
public:
  Runner(const ExperimentConfig& config, int jobs) : cfg_(config), jobs_(jobs)
  {
    tau_ = instantiate_model(cfg_.model, cfg_.dimension);
  }

  StageResult run(const std::string& stage, Artifacts& out)
  {
    StageResult res;
    res.stage = stage;
    try {
      if (stage == "gauge-check") {
        gauge_check(res, out);
      } else if (stage == "k-estimate") {
        k_table(res, out);
      } else if (stage == "schedule") {
        schedule_stage(res, out);
      } else if (stage == "decompose") {
        decompose_stage(res, out);
      } else {
        throw ConfigError("stage: unknown stage '" + stage + "'");
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      res.checks += 1;
      res.failures += 1;
      res.messages.push_back(stage + ": " + e.what());
    }
    return res;
  }

private:
  void emit(Artifacts& out, StageResult& res, const std::string& stem, const json& doc, const CsvTable& csv)
  {
    if (cfg_.outputs.json) {
      out.files[stem + ".json"] = doc.dump(2) + "\n";
      res.artifacts.push_back(stem + ".json");
    }
    if (cfg_.outputs.csv) {
      out.files[stem + ".csv"] = csv.text();
      res.artifacts.push_back(stem + ".csv");
    }
  }

  void gauge_check(StageResult& res, Artifacts& out)
  {
    const auto stats = parallel_map<AxiomStats>(cfg_.gauges.size(), jobs_, [&](std::size_t i) {
      return gauge_axioms(cfg_.gauges[i], derive_seed(cfg_.seed, 100 + i), cfg_.gauge_check);
    });
    json doc = {{"schema", "gauge_check.v1"}, {"stage", "gauge-check"}, {"trials", cfg_.gauge_check.trials}, {"gauges", json::array()}};
    CsvTable csv({"gauge", "trials", "max_triangle", "max_unitary", "max_ideal", "max_holder_ratio", "pass"});
    for (std::size_t i = 0; i < stats.size(); ++i) {
      const auto& st = stats[i];
      const auto& g = cfg_.gauges[i];
      const bool pass = st.triangle <= 1e-9 && st.unitary <= 1e-9 && st.ideal <= 1e-9 && st.holder_failures == 0;
      res.checks += 1;
      if (!pass) {
        res.failures += 1;
        res.messages.push_back("gauge " + describe(g) + " failed an axiom check");
      }
      doc["gauges"].push_back({{"gauge", describe(g)},
                               {"max_triangle", st.triangle},
                               {"max_unitary", st.unitary},
                               {"max_ideal", st.ideal},
                               {"max_holder_ratio", st.holder_ratio},
                               {"holder_failures", st.holder_failures},
                               {"excluded_duality", is_excluded_duality(g)},
                               {"pass", pass}});
      csv.row({describe(g), std::to_string(cfg_.gauge_check.trials), format_double(st.triangle),
               format_double(st.unitary), format_double(st.ideal), format_double(st.holder_ratio),
               pass ? "true" : "false"});
    }
    emit(out, res, "gauge_check", doc, csv);
  }

  void k_table(StageResult& res, Artifacts& out)
  {
    if (cfg_.floors.empty() || cfg_.caps.empty()) {
      throw ConfigError("floors/caps: the k-estimate stage needs both");
    }
    const auto tables = parallel_map<KEstimateTable>(cfg_.gauges.size(), jobs_, [&](std::size_t i) {
      return k_estimate(tau_, cfg_.gauges[i], cfg_.floors, cfg_.caps, cfg_.solver);
    });
    json doc = {{"schema", "k_estimate.v1"}, {"stage", "k-estimate"}, {"model", cfg_.model.name}, {"dimension", cfg_.dimension}, {"tables", json::array()}};
    CsvTable csv({"gauge", "m", "r", "beta", "ramp_value", "iterations", "status"});
    for (const auto& t : tables) {
      json cells = json::array();
      for (const auto& c : t.cells) {
        cells.push_back({{"m", c.m}, {"r", c.r}, {"beta", c.beta}, {"ramp_value", c.ramp_value},
                         {"iterations", c.iterations}, {"status", c.status}});
        csv.row({describe(t.gauge), std::to_string(c.m), std::to_string(c.r), format_double(c.beta),
                 format_double(c.ramp_value), std::to_string(c.iterations), c.status});
      }
      doc["tables"].push_back({{"gauge", describe(t.gauge)}, {"floors", t.floors}, {"caps", t.caps},
                               {"estimate", t.estimate}, {"violations", t.violations}, {"cells", cells}});
      res.checks += 1;
      if (!t.violations.empty()) {
        res.failures += 1;
        for (const auto& v : t.violations) {
          res.messages.push_back(describe(t.gauge) + ": " + v);
        }
      }
    }
    emit(out, res, "k_estimate", doc, csv);
  }

  const UnitSchedule& schedule()
  {
    if (!schedule_) {
      if (cfg_.windows.empty()) {
        throw ConfigError("windows: the schedule and decompose stages need windows");
      }
      schedule_ = build_schedule(tau_, cfg_.gauges.front(), cfg_.windows, cfg_.schedule_mode, cfg_.solver);
    }
    return *schedule_;
  }

  std::string schedule_id() const
  {
    return describe(cfg_.gauges.front()) + "/" + mode_name(cfg_.schedule_mode) + "/" +
           std::to_string(cfg_.windows.size());
  }

  void schedule_stage(StageResult& res, Artifacts& out)
  {
    const auto& s = schedule();
    const auto check = verify_schedule(tau_, s);
    json doc = {{"schema", "schedule.v1"},
                {"stage", "schedule"},
                {"schedule_id", schedule_id()},
                {"gauge", describe(s.gauge)},
                {"mode", mode_name(cfg_.schedule_mode)},
                {"windows", json::array()},
                {"commutator_norms", s.commutator_norms},
                {"check",
                 {{"monotonicity_gap", check.monotonicity_gap},
                  {"norm_mismatch", check.norm_mismatch},
                  {"windows_march", check.windows_march},
                  {"caps_increasing", check.caps_increasing},
                  {"units_certified", check.units_certified},
                  {"ok", check.ok()}}}};
    CsvTable csv({"k", "m", "r", "commutator_norm"});
    for (std::size_t k = 0; k < s.windows.size(); ++k) {
      doc["windows"].push_back({s.windows[k].first, s.windows[k].second});
      csv.row({std::to_string(k), std::to_string(s.windows[k].first), std::to_string(s.windows[k].second),
               format_double(s.commutator_norms[k])});
    }
    res.checks += 1;
    if (!check.ok()) {
      res.failures += 1;
      res.messages.push_back("schedule failed verification");
    }
    emit(out, res, "schedule", doc, csv);
  }

  void decompose_stage(StageResult& res, Artifacts& out)
  {
    if (cfg_.functionals.empty()) {
      throw ConfigError("functionals: the decompose stage needs at least one functional");
    }
    const auto& s = schedule();
    const auto tests = make_test_set(cfg_.test_set, cfg_.dimension);
    const GaugeSpec g = cfg_.gauges.front();
    const auto reports = parallel_map<DecompositionReport>(cfg_.functionals.size(), jobs_, [&](std::size_t i) {
      return decompose(cfg_.functionals[i].spec, s, tau_, g, tests, cfg_.depth);
    });

    json doc = {{"schema", "decomposition.v1"}, {"stage", "decompose"}, {"schedule_id", schedule_id()}, {"reports", json::array()}};
    CsvTable csv({"phi_id", "S_id", "k", "m", "r", "value_re", "value_im", "gap", "bound"});
    for (std::size_t i = 0; i < reports.size(); ++i) {
      const auto& rep = reports[i];
      const auto& id = cfg_.functionals[i].id;
      json per_s = json::array();
      json residuals = json::array();
      for (const auto& rec : rep.per_s) {
        json seq = json::array();
        for (std::size_t k = 0; k < rec.recovery.sequence.size(); ++k) {
          const Complex v = rec.recovery.sequence[k];
          seq.push_back(complex_json(v));
          const bool has_bound = k < rec.bounds.size();
          csv.row({id, rec.s_id, std::to_string(k), std::to_string(s.windows[k].first),
                   std::to_string(s.windows[k].second), format_double(v.real()), format_double(v.imag()),
                   has_bound ? format_double(rec.gaps[k]) : "", has_bound ? format_double(rec.bounds[k]) : ""});
        }
        per_s.push_back({{"S_id", rec.s_id},
                         {"sequence", seq},
                         {"limit", optional_complex(rec.recovery.limit)},
                         {"status", rec.recovery.status},
                         {"trace_value", optional_complex(rec.trace_value)},
                         {"bounds", rec.bounds},
                         {"gaps", rec.gaps}});
        if (rec.residual) {
          residuals.push_back({{"S_id", rec.s_id}, {"value", complex_json(*rec.residual)}});
        }
      }
      doc["reports"].push_back({{"phi_id", id},
                                {"schedule_id", schedule_id()},
                                {"per_S", per_s},
                                {"residuals", residuals},
                                {"max_residual", rep.max_residual},
                                {"max_limit_error", rep.max_limit_error},
                                {"max_bound_violation", rep.max_bound_violation},
                                {"idempotence_gap", rep.idempotence_gap},
                                {"additivity",
                                 {{"lower", rep.additivity.lower},
                                  {"upper_ac", rep.additivity.upper_ac},
                                  {"upper_singular", rep.additivity.upper_singular},
                                  {"gap", rep.additivity.gap()}}},
                                {"diagnostics", rep.diagnostics},
                                {"status", rep.ok ? "pass" : "fail"}});
      res.checks += 1;
      if (!rep.ok) {
        res.failures += 1;
        for (const auto& d : rep.diagnostics) {
          res.messages.push_back(id + ": " + d);
        }
      }
    }
    emit(out, res, "decomposition", doc, csv);
  }

  const ExperimentConfig& cfg_;
  int jobs_;
  HermitianTuple tau_;
  std::optional<UnitSchedule> schedule_;
};

std::string utc_timestamp()
{
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_file(const fs::path& path, const std::string& bytes)
{
  std::ofstream f(path, std::ios::binary);
  if (!f) {
    throw std::runtime_error("cannot write " + path.string());
  }
  f << bytes;
}

std::string sanitize(const std::string& s)
{
  std::string out = s;
  for (auto& c : out) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '.') {
      c = '_';
    }
  }
  return out;
}

std::optional<json> read_json(const fs::path& path)
{
  std::ifstream f(path);
  if (!f) {
    return std::nullopt;
  }
  return json::parse(f);
}

std::string number_or_nan(const json& j)
{
  return j.is_number() ? format_double(j.get<double>()) : "nan";
}

} // namespace

std::string format_double(double v)
{
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

GaugeSpec parse_gauge(const json& j, const std::string& path)
{
  GaugeSpec g;
  if (j.is_string()) {
    const auto name = j.get<std::string>();
    try {
      if (name == "sup") {
        g = GaugeSpec::sup();
      } else if (name.rfind("schatten-", 0) == 0) {
        g = GaugeSpec::schatten(std::stod(name.substr(9)));
      } else if (name.rfind("kyfan-dual-", 0) == 0) {
        g = GaugeSpec::ky_fan_dual(std::stoi(name.substr(11)));
      } else if (name.rfind("kyfan-", 0) == 0) {
        g = GaugeSpec::ky_fan(std::stoi(name.substr(6)));
      } else {
        fail(path, "unknown gauge '" + name + "'");
      }
    } catch (const std::logic_error&) {
      fail(path, "malformed gauge '" + name + "'");
    }
  } else {
    check_keys(j, {"family", "p", "k"}, path);
    const auto family = as_string(required(j, "family", path), path + ".family");
    if (family == "schatten") {
      g = GaugeSpec::schatten(as_number(required(j, "p", path), path + ".p"));
    } else if (family == "kyfan") {
      g = GaugeSpec::ky_fan(as_int_in(required(j, "k", path), path + ".k", 1, 1 << 20));
    } else if (family == "kyfan-dual") {
      g = GaugeSpec::ky_fan_dual(as_int_in(required(j, "k", path), path + ".k", 1, 1 << 20));
    } else if (family == "sup") {
      g = GaugeSpec::sup();
    } else {
      fail(path + ".family", "unknown gauge family '" + family + "'");
    }
  }
  try {
    validate(g);
  } catch (const InvalidInput& e) {
    fail(path, e.what());
  }
  return g;
}

ExperimentConfig parse_config(const json& doc, std::optional<std::uint64_t> seed_override)
{
  const std::string root = "config";
  check_keys(doc, {"seed", "model", "dimension", "gauges", "solver", "floors", "caps", "windows", "schedule_mode",
                   "gauge_check", "functionals", "test_set", "depth", "outputs", "pipeline"},
             root);
  ExperimentConfig cfg;

  const json& seed = required(doc, "seed", root);
  if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<long long>() >= 0)) {
    fail(root + ".seed", "expected a non-negative integer");
  }
  cfg.seed = seed_override ? *seed_override : seed.get<std::uint64_t>();

  {
    const auto p = root + ".model";
    const json& m = required(doc, "model", root);
    check_keys(m, {"name", "n", "bandwidth", "parameters"}, p);
    const auto name = as_string(required(m, "name", p), p + ".name");
    std::map<std::string, double> params;
    if (const json* ps = find(m, "parameters")) {
      check_keys(*ps, {"scale", "grid"}, p + ".parameters");
      for (const auto& [key, value] : ps->items()) {
        params[key] = as_number(value, p + ".parameters." + key);
      }
    }
    try {
      cfg.model = builtin_model(name, find(m, "n") ? as_int_in(m["n"], p + ".n", 1, 64) : 0, params);
    } catch (const InvalidInput& e) {
      fail(p, e.what());
    }
    if (const json* b = find(m, "bandwidth")) {
      cfg.model.bandwidth = as_int_in(*b, p + ".bandwidth", cfg.model.bandwidth, 64);
    }
  }

  cfg.dimension = as_int_in(required(doc, "dimension", root), root + ".dimension", 2 * cfg.model.bandwidth + 2, 20000);
  const int n = cfg.dimension;
  const int b = cfg.model.bandwidth;
  const auto tau_shape = instantiate_model(cfg.model, std::max(2 * b + 2, 2));

  {
    const auto& list = as_array(required(doc, "gauges", root), root + ".gauges");
    if (list.empty()) {
      fail(root + ".gauges", "at least one gauge is required");
    }
    for (std::size_t i = 0; i < list.size(); ++i) {
      cfg.gauges.push_back(parse_gauge(list[i], at(root + ".gauges", i)));
    }
  }

  cfg.solver.seed = cfg.seed;
  if (const json* s = find(doc, "solver")) {
    const auto p = root + ".solver";
    check_keys(*s, {"max_iterations", "step_rule", "step_scale", "stop_tolerance", "patience"}, p);
    if (const json* v = find(*s, "max_iterations")) {
      cfg.solver.max_iterations = as_int_in(*v, p + ".max_iterations", 1, 10000000);
    }
    if (const json* v = find(*s, "step_rule")) {
      const auto rule = as_string(*v, p + ".step_rule");
      if (rule == "polyak") {
        cfg.solver.step_rule = StepRule::Polyak;
      } else if (rule != "diminishing") {
        fail(p + ".step_rule", "expected 'diminishing' or 'polyak'");
      }
    }
    if (const json* v = find(*s, "step_scale")) {
      cfg.solver.step_scale = as_number(*v, p + ".step_scale");
    }
    if (const json* v = find(*s, "stop_tolerance")) {
      cfg.solver.stop_tolerance = as_number(*v, p + ".stop_tolerance");
    }
    if (const json* v = find(*s, "patience")) {
      cfg.solver.patience = as_int_in(*v, p + ".patience", 1, 1000000);
    }
  }

  if (const json* f = find(doc, "floors")) {
    cfg.floors = parse_int_list(*f, root + ".floors", 0, n - b - 1);
  }
  if (const json* c = find(doc, "caps")) {
    cfg.caps = parse_int_list(*c, root + ".caps", 1, n - b);
  }
  for (int m : cfg.floors) {
    for (int r : cfg.caps) {
      if (m >= r) {
        fail(root + ".floors", "floor " + std::to_string(m) + " is not below cap " + std::to_string(r));
      }
    }
  }

  if (const json* w = find(doc, "windows")) {
    const auto p = root + ".windows";
    if (w->is_object()) {
      check_keys(*w, {"quadratic"}, p);
      const auto& q = as_array(required(*w, "quadratic", p), p + ".quadratic");
      if (q.size() != 2) {
        fail(p + ".quadratic", "expected [first, last]");
      }
      const int first = as_int_in(q[0], p + ".quadratic[0]", 1, 10000);
      const int last = as_int_in(q[1], p + ".quadratic[1]", first, 10000);
      cfg.windows = quadratic_windows(first, last);
    } else {
      const auto& list = as_array(*w, p);
      for (std::size_t i = 0; i < list.size(); ++i) {
        const auto& pair = as_array(list[i], at(p, i));
        if (pair.size() != 2) {
          fail(at(p, i), "expected [m, r]");
        }
        cfg.windows.emplace_back(as_int(pair[0], at(p, i) + "[0]"), as_int(pair[1], at(p, i) + "[1]"));
      }
    }
    for (std::size_t i = 0; i < cfg.windows.size(); ++i) {
      const auto [m, r] = cfg.windows[i];
      if (m < 0 || r <= m || r + b > n) {
        fail(at(p, i), "window (" + std::to_string(m) + ", " + std::to_string(r) + ") needs 0 <= m < r <= N - bandwidth");
      }
    }
  }

  if (const json* s = find(doc, "schedule_mode")) {
    const auto mode = as_string(*s, root + ".schedule_mode");
    if (mode == "optimized") {
      cfg.schedule_mode = ScheduleMode::OptimizedMonotonized;
    } else if (mode != "ramp") {
      fail(root + ".schedule_mode", "expected 'ramp' or 'optimized'");
    }
  }

  if (const json* g = find(doc, "gauge_check")) {
    const auto p = root + ".gauge_check";
    check_keys(*g, {"trials", "min_dim", "max_dim"}, p);
    if (const json* v = find(*g, "trials")) {
      cfg.gauge_check.trials = as_int_in(*v, p + ".trials", 1, 1000000);
    }
    if (const json* v = find(*g, "min_dim")) {
      cfg.gauge_check.min_dim = as_int_in(*v, p + ".min_dim", 1, 2000);
    }
    if (const json* v = find(*g, "max_dim")) {
      cfg.gauge_check.max_dim = as_int_in(*v, p + ".max_dim", cfg.gauge_check.min_dim, 2000);
    }
  }

  cfg.test_set.seed = derive_seed(cfg.seed, 1);
  if (const json* t = find(doc, "test_set")) {
    const auto p = root + ".test_set";
    check_keys(*t, {"seed", "count", "kind", "support"}, p);
    if (const json* v = find(*t, "seed")) {
      cfg.test_set.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(as_int_in(*v, p + ".seed", 0, 1 << 30)));
    }
    if (const json* v = find(*t, "count")) {
      cfg.test_set.count = as_int_in(*v, p + ".count", 0, 100000);
    }
    if (const json* v = find(*t, "kind")) {
      try {
        cfg.test_set.kind = test_kind_from_string(as_string(*v, p + ".kind"));
      } catch (const ConfigError&) {
        throw;
      } catch (const InvalidInput& e) {
        fail(p + ".kind", e.what());
      }
    }
    if (const json* v = find(*t, "support")) {
      cfg.test_set.support = as_int_in(*v, p + ".support", 0, n);
    }
  }
  if (cfg.test_set.kind == TestKind::FinitelySupported && cfg.test_set.support < 1) {
    fail(root + ".test_set.support", "finitely supported operators need support >= 1");
  }

  if (const json* d = find(doc, "depth")) {
    cfg.depth = as_int_in(*d, root + ".depth", -1, n);
  }

  if (const json* fs_ = find(doc, "functionals")) {
    const auto p = root + ".functionals";
    const auto& list = as_array(*fs_, p);
    std::set<std::string> ids;
    for (std::size_t i = 0; i < list.size(); ++i) {
      Rng rng(derive_seed(cfg.seed, 1000 + i));
      auto f = parse_functional(list[i], at(p, i), rng, tau_shape, cfg.gauges.front(), n);
      if (!ids.insert(f.id).second) {
        fail(at(p, i) + ".id", "duplicate functional id '" + f.id + "'");
      }
      cfg.functionals.push_back(std::move(f));
    }
  }

  if (const json* o = find(doc, "outputs")) {
    const auto p = root + ".outputs";
    check_keys(*o, {"dir", "formats"}, p);
    if (const json* v = find(*o, "dir")) {
      cfg.outputs.dir = as_string(*v, p + ".dir");
    }
    if (const json* v = find(*o, "formats")) {
      cfg.outputs.json = cfg.outputs.csv = false;
      const auto& list = as_array(*v, p + ".formats");
      for (std::size_t i = 0; i < list.size(); ++i) {
        const auto f = as_string(list[i], at(p + ".formats", i));
        if (f == "json") {
          cfg.outputs.json = true;
        } else if (f == "csv") {
          cfg.outputs.csv = true;
        } else {
          fail(at(p + ".formats", i), "expected 'json' or 'csv'");
        }
      }
    }
  }

  if (const json* pl = find(doc, "pipeline")) {
    const auto& list = as_array(*pl, root + ".pipeline");
    for (std::size_t i = 0; i < list.size(); ++i) {
      const auto stage = as_string(list[i], at(root + ".pipeline", i));
      if (std::find(kStages.begin(), kStages.end(), stage) == kStages.end()) {
        fail(at(root + ".pipeline", i), "unknown stage '" + stage + "'");
      }
      cfg.pipeline.push_back(stage);
    }
  } else {
    cfg.pipeline = kStages;
  }
  return cfg;
}

ExperimentConfig load_config(const fs::path& path, std::optional<std::uint64_t> seed_override)
{
  std::ifstream f(path);
  if (!f) {
    throw ConfigError(path.string() + ": cannot open config file");
  }
  json doc;
  try {
    doc = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(doc, seed_override);
}

int RunSummary::checks() const
{
  int n = 0;
  for (const auto& s : stages) {
    n += s.checks;
  }
  return n;
}

int RunSummary::failures() const
{
  int n = 0;
  for (const auto& s : stages) {
    n += s.failures;
  }
  return n;
}

RunSummary run_experiment(const ExperimentConfig& config, const std::vector<std::string>& stages, const fs::path& out,
                          int jobs)
{
  for (const auto& s : stages) {
    if (std::find(kStages.begin(), kStages.end(), s) == kStages.end()) {
      throw ConfigError("stage: unknown stage '" + s + "'");
    }
  }
  Runner runner(config, jobs);
  Artifacts artifacts;
  RunSummary summary;
  for (const auto& stage : stages) {
    summary.stages.push_back(runner.run(stage, artifacts));
  }

  fs::create_directories(out);
  std::uint64_t seed = 0xcbf29ce484222325ULL;
  std::string hash;
  for (const auto& [name, bytes] : artifacts.files) {
    write_file(out / name, bytes);
    hash = fnv1a(name + '\n' + bytes, seed);
    seed = std::stoull(hash, nullptr, 16);
  }
  summary.payload_hash = artifacts.files.empty() ? fnv1a("") : hash;

  json doc = {{"schema", "summary.v1"},
              {"seed", config.seed},
              {"model", config.model.name},
              {"dimension", config.dimension},
              {"checks", summary.checks()},
              {"failures", summary.failures()},
              {"status", summary.ok() ? "pass" : "fail"},
              {"payload_hash", summary.payload_hash},
              {"timestamp", utc_timestamp()},
              {"stages", json::array()}};
  for (const auto& s : summary.stages) {
    doc["stages"].push_back({{"stage", s.stage},
                             {"checks", s.checks},
                             {"failures", s.failures},
                             {"messages", s.messages},
                             {"artifacts", s.artifacts}});
  }
  write_file(out / "summary.json", doc.dump(2) + "\n");
  return summary;
}

std::vector<fs::path> render_report(const fs::path& bundle, std::ostream& notices)
{
  std::vector<std::pair<fs::path, std::string>> files;

  if (auto doc = read_json(bundle / "k_estimate.json")) {
    for (const auto& t : (*doc)["tables"]) {
      std::string text = "m r beta\n";
      for (const auto& c : t["cells"]) {
        text += std::to_string(c["m"].get<int>()) + " " + std::to_string(c["r"].get<int>()) + " " +
                number_or_nan(c["beta"]) + "\n";
      }
      files.emplace_back("beta_" + sanitize(t["gauge"].get<std::string>()) + ".dat", text);
    }
  } else {
    notices << "report: no k_estimate.json, skipping beta heat-map data\n";
  }

  if (auto doc = read_json(bundle / "schedule.json")) {
    std::string text = "k m r commutator_norm\n";
    const auto& w = (*doc)["windows"];
    const auto& norms = (*doc)["commutator_norms"];
    for (std::size_t k = 0; k < w.size(); ++k) {
      text += std::to_string(k) + " " + std::to_string(w[k][0].get<int>()) + " " + std::to_string(w[k][1].get<int>()) +
              " " + number_or_nan(norms[k]) + "\n";
    }
    files.emplace_back("schedule.dat", text);
  } else {
    notices << "report: no schedule.json, skipping schedule data\n";
  }

  if (auto doc = read_json(bundle / "decomposition.json")) {
    for (const auto& rep : (*doc)["reports"]) {
      const auto phi = rep["phi_id"].get<std::string>();
      for (const auto& ps : rep["per_S"]) {
        std::string text = "k value_re value_im gap bound\n";
        const auto& seq = ps["sequence"];
        for (std::size_t k = 0; k < seq.size(); ++k) {
          const bool has = k < ps["bounds"].size();
          text += std::to_string(k) + " " + number_or_nan(seq[k][0]) + " " + number_or_nan(seq[k][1]) + " " +
                  (has ? number_or_nan(ps["gaps"][k]) : "nan") + " " + (has ? number_or_nan(ps["bounds"][k]) : "nan") +
                  "\n";
        }
        files.emplace_back("convergence_" + sanitize(phi) + "_" + sanitize(ps["S_id"].get<std::string>()) + ".dat",
                           text);
      }
    }
  } else {
    notices << "report: no decomposition.json, skipping convergence data\n";
  }

  std::vector<fs::path> written;
  if (files.empty()) {
    notices << "report: bundle " << bundle.string() << " has no report sections; nothing written\n";
    return written;
  }
  fs::create_directories(bundle / "plots");
  for (const auto& [name, text] : files) {
    write_file(bundle / "plots" / name, text);
    written.push_back(bundle / "plots" / name);
  }
  return written;
}

} // namespace qclab
