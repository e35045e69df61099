#include <doctest.h>

#include <fstream>
#include <sstream>

#include <qclab/experiment.hpp>

using namespace qclab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json small_config()
{
  return json::parse(R"({
    "seed": 11,
    "model": {"name": "diagonal-grid", "n": 2},
    "dimension": 70,
    "gauges": ["schatten-1", {"family": "kyfan", "k": 2}],
    "solver": {"max_iterations": 60},
    "floors": [2],
    "caps": [8, 16],
    "windows": {"quadratic": [1, 7]},
    "gauge_check": {"trials": 10},
    "functionals": [
      {"id": "corner", "trace_part": {"x": {"entries": [[0, 0, 1.0]], "size": 1}}},
      {"id": "mixed", "trace_part": {"x": {"random": 3}},
       "singular_part": [{"weight": [0.0, 1.0], "states": {"coordinate": {"first": 10, "count": 30}}}]}
    ],
    "test_set": {"count": 2, "kind": "finitely-supported", "support": 6}
  })");
}

fs::path scratch(const std::string& name)
{
  const auto dir = fs::temp_directory_path() / ("qclab_test_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p)
{
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string error_of(const json& doc)
{
  try {
    parse_config(doc);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

} // namespace

TEST_CASE("config parsing")
{
  const auto cfg = parse_config(small_config());
  CHECK(cfg.seed == 11);
  CHECK(cfg.dimension == 70);
  CHECK(cfg.gauges.size() == 2);
  CHECK(cfg.gauges[1] == GaugeSpec::ky_fan(2));
  CHECK(cfg.windows == quadratic_windows(1, 7));
  CHECK(cfg.functionals.size() == 2);
  CHECK(cfg.functionals[1].spec.singular_part[0].weight == Complex(0.0, 1.0));
  CHECK(cfg.pipeline == kStages);
  CHECK(cfg.solver.seed == 11);

  // the seed override reaches random blocks
  const auto a = parse_config(small_config(), 12);
  const auto b = parse_config(small_config(), 12);
  CHECK(a.seed == 12);
  CHECK(a.functionals[1].spec.trace_part->x == b.functionals[1].spec.trace_part->x);
  CHECK(a.functionals[1].spec.trace_part->x != cfg.functionals[1].spec.trace_part->x);

  CHECK(parse_gauge("schatten-1.5", "g") == GaugeSpec::schatten(1.5));
  CHECK(parse_gauge("kyfan-dual-3", "g") == GaugeSpec::ky_fan_dual(3));
  CHECK(parse_gauge("sup", "g") == GaugeSpec::sup());
}

TEST_CASE("config errors name the field")
{
  auto doc = small_config();
  doc.erase("seed");
  CHECK(error_of(doc).find("config.seed") == 0);

  doc = small_config();
  doc["gauges"][1]["k"] = 0;
  CHECK(error_of(doc).find("config.gauges[1].k") == 0);

  doc = small_config();
  doc["gauges"][0] = "schatten-0.5";
  CHECK(error_of(doc).find("config.gauges[0]") == 0);

  doc = small_config();
  doc["windows"] = json::array({json::array({3, 2})});
  CHECK(error_of(doc).find("config.windows[0]") == 0);

  doc = small_config();
  doc["caps"] = json::array({71});
  CHECK(error_of(doc).find("config.caps[0]") == 0);

  doc = small_config();
  doc["dimension"] = 1;
  CHECK(error_of(doc).find("config.dimension") == 0);

  doc = small_config();
  doc["functionals"][0]["trace_part"]["x"] = json{{"random", 71}};
  CHECK(error_of(doc).find("config.functionals[0].trace_part.x.random") == 0);

  doc = small_config();
  doc["functionals"][1]["id"] = "corner";
  CHECK(error_of(doc).find("config.functionals[1].id") == 0);

  doc = small_config();
  doc["functionals"][1]["singular_part"][0]["states"]["coordinate"]["count"] = 61;
  CHECK(error_of(doc).find("config.functionals[1].singular_part[0].states.coordinate.count") == 0);

  doc = small_config();
  doc["pipeline"] = json::array({"decompose", "plot"});
  CHECK(error_of(doc).find("config.pipeline[1]") == 0);

  doc = small_config();
  doc["colour"] = "red";
  CHECK(error_of(doc).find("config.colour") == 0);

  doc = small_config();
  doc["test_set"]["kind"] = "sparse";
  CHECK(error_of(doc).find("config.test_set.kind") == 0);

  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("pipeline run writes artifacts and a summary")
{
  const auto cfg = parse_config(small_config());
  const auto out = scratch("run");
  const auto summary = run_experiment(cfg, kStages, out, 1);
  CHECK(summary.ok());
  CHECK(summary.stages.size() == 4);
  for (const char* name : {"gauge_check.json", "gauge_check.csv", "k_estimate.json", "k_estimate.csv", "schedule.json",
                           "schedule.csv", "decomposition.json", "decomposition.csv", "summary.json"}) {
    CHECK_MESSAGE(fs::exists(out / name), name);
  }

  // diagonal grid: every cell is exactly quasicentral
  const auto table = json::parse(slurp(out / "k_estimate.json"));
  for (const auto& t : table["tables"]) {
    for (const auto& c : t["cells"]) {
      CHECK(c["beta"].get<double>() <= 1e-8);
    }
  }

  const std::string csv = slurp(out / "k_estimate.csv");
  CHECK(csv.rfind("gauge,m,r,beta,ramp_value,iterations,status\n", 0) == 0);
  CHECK(slurp(out / "decomposition.csv").rfind("phi_id,S_id,k,m,r,value_re,value_im,gap,bound\n", 0) == 0);
  CHECK(slurp(out / "schedule.csv").rfind("k,m,r,commutator_norm\n", 0) == 0);

  const auto sum = json::parse(slurp(out / "summary.json"));
  CHECK(sum["status"] == "pass");
  CHECK(sum["payload_hash"] == summary.payload_hash);
}

TEST_CASE("runs are reproducible and independent of the thread count")
{
  const auto cfg = parse_config(small_config());
  const auto one = scratch("det1");
  const auto two = scratch("det2");
  const auto a = run_experiment(cfg, kStages, one, 1);
  const auto b = run_experiment(cfg, kStages, two, 3);
  CHECK(a.payload_hash == b.payload_hash);
  for (const auto& entry : fs::directory_iterator(one)) {
    const auto name = entry.path().filename();
    if (name != "summary.json") {
      CHECK_MESSAGE(slurp(one / name) == slurp(two / name), name.string());
    }
  }

  const auto other = run_experiment(parse_config(small_config(), 99), kStages, scratch("det3"), 1);
  CHECK(other.payload_hash != a.payload_hash);
}

TEST_CASE("formats can be switched off")
{
  auto doc = small_config();
  doc["outputs"] = {{"formats", {"csv"}}};
  const auto out = scratch("csv");
  run_experiment(parse_config(doc), {"schedule"}, out, 1);
  CHECK(fs::exists(out / "schedule.csv"));
  CHECK_FALSE(fs::exists(out / "schedule.json"));
  CHECK(fs::exists(out / "summary.json"));
}

TEST_CASE("stage failures are counted, not thrown")
{
  auto doc = small_config();
  // two windows are too few for any limit to be detected
  doc["windows"] = {{"quadratic", {1, 2}}};
  const auto summary = run_experiment(parse_config(doc), {"decompose"}, scratch("fail"), 1);
  CHECK_FALSE(summary.ok());
  CHECK(summary.checks() == 2);
  CHECK(summary.failures() == 2);
  CHECK(summary.stages[0].messages[0].find("corner: ") == 0);

  auto empty = parse_config(small_config());
  empty.functionals.clear();
  CHECK_THROWS_AS(run_experiment(empty, {"decompose"}, scratch("fail2"), 1), ConfigError);
}

TEST_CASE("report data files")
{
  std::ostringstream notices;
  const auto empty = scratch("empty");
  fs::create_directories(empty);
  CHECK(render_report(empty, notices).empty());
  CHECK(notices.str().find("nothing written") != std::string::npos);
  CHECK_FALSE(fs::exists(empty / "plots"));

  const auto out = scratch("report");
  run_experiment(parse_config(small_config()), kStages, out, 1);
  std::ostringstream quiet;
  const auto files = render_report(out, quiet);
  CHECK(quiet.str().empty());
  // two beta tables, one schedule, one file per (functional, test operator)
  CHECK(files.size() == 2 + 1 + 2 * 2);
  const std::string beta = slurp(out / "plots" / "beta_schatten-1.dat");
  CHECK(beta.rfind("m r beta\n2 8 ", 0) == 0);
  const std::string conv = slurp(out / "plots" / "convergence_corner_finitely-supported-0.dat");
  CHECK(conv.rfind("k value_re value_im gap bound\n", 0) == 0);

  // a partial bundle is rendered with notices for the missing parts
  fs::remove(out / "k_estimate.json");
  std::ostringstream partial;
  CHECK(render_report(out, partial).size() == 1 + 2 * 2);
  CHECK(partial.str().find("k_estimate.json") != std::string::npos);
}

TEST_CASE("number formatting")
{
  CHECK(format_double(0.1) == "0.10000000000000001");
  CHECK(format_double(1.0) == "1");
  CHECK(format_double(-2.5e-300) == "-2.5e-300");
}
