// Benchmark for the smooth-sensitivity kernels: the same grounded query is
// evaluated with the serial reference path and the OpenMP path, for the
// value+gradient sweep and for the smooth-bound grid search.

#include <chrono>
#include <cstdio>
#include <random>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "pleak/calibrate.hpp"
#include "pleak/smooth.hpp"

using namespace pleak;
using namespace pleak::sensderiv;
using Clock = std::chrono::steady_clock;

namespace {

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

struct Workload {
  std::shared_ptr<model::ProcessModel> model;
  sql::SqlWorkflow wf;
  NormSet norms;
  RangeMap ranges;
};

Workload build_workload(int ships, int ports) {
  std::mt19937 rng(12345);
  auto uniform = [&](double lo, double hi) {
    return lo + (hi - lo) * (rng() % 100000) / 100000.0;
  };

  sql::Catalog cat;
  sql::TableSchema ship;
  ship.name = "ship";
  ship.columns = {{"latitude", ColType::Float8},
                  {"longitude", ColType::Float8},
                  {"maxspeed", ColType::Float8}};
  sql::TableSchema port;
  port.name = "port";
  port.columns = {{"latitude", ColType::Float8}, {"longitude", ColType::Float8}};
  cat["ship"] = ship;
  cat["port"] = port;

  sql::Database db;
  sql::TableData sd;
  sd.schema = ship;
  for (int i = 0; i < ships; ++i)
    sd.rows.push_back({uniform(0, 300), uniform(0, 300), uniform(20, 90)});
  sql::TableData pd;
  pd.schema = port;
  for (int i = 0; i < ports; ++i)
    pd.rows.push_back({uniform(0, 300), uniform(0, 300)});
  db["ship"] = sd;
  db["port"] = pd;

  std::string modelDoc = R"({"pools":[{"id":"p","name":"Analyst","nodes":[
    {"id":"s","kind":"startEvent"},
    {"id":"q","kind":"task","label":"count reachable","inputs":["ship","port"],
     "outputs":["reachable"]},
    {"id":"e","kind":"endEvent"}],
    "flows":[["s","q"],["q","e"]]}],
    "dataObjects":[{"name":"ship","pool":"p"},{"name":"port","pool":"p"},
                   {"name":"reachable","pool":"p"}]})";

  std::map<std::string, std::string> scripts = {
      {"q",
       "SELECT s.latitude AS x INTO reachable FROM ship s, port p "
       "WHERE sqrt((s.latitude - p.latitude)^2.0 + (s.longitude - p.longitude)^2.0) "
       "/ s.maxspeed <= 4.0;"},
  };

  Workload w;
  w.model = std::make_shared<model::ProcessModel>(model::load_model(modelDoc));
  w.wf = sql::bind_workflow(*w.model, scripts, cat, db);
  w.wf.processModel = w.model.get();

  NormSpec spec = parse_norm("rows: all;\ncols: latitude, longitude;\n"
                             "u = lp 2.0 latitude longitude;\nz = scaleNorm 0.2 u;\n"
                             "return linf z;\n");
  w.norms["ship"] = {spec, compile_norm(spec, ship)};
  w.ranges[{"ship", "latitude"}] = {0, 300};
  w.ranges[{"ship", "longitude"}] = {0, 300};
  w.ranges[{"ship", "maxspeed"}] = {20, 90};
  return w;
}

} // namespace

int main(int argc, char **argv) {
  int ships = argc > 1 ? std::atoi(argv[1]) : 400;
  int ports = argc > 2 ? std::atoi(argv[2]) : 50;
  int reps = argc > 3 ? std::atoi(argv[3]) : 5;

#ifdef _OPENMP
  std::printf("openmp threads: %d\n", omp_get_max_threads());
#else
  std::printf("built without openmp; both paths run serially\n");
#endif

  Workload w = build_workload(ships, ports);
  SmoothParams params;
  GroundFunction fn = smooth_lower(w.wf, "reachable", w.norms, w.ranges, params);
  std::printf("workload: %d ships x %d ports = %ld joined tuples, %zu sensitive cells\n",
              ships, ports, fn.tuple_count(), fn.coordinates().size());

  std::vector<double> grad;
  // warm up and correctness cross-check
  double vs = fn.value_and_gradient(fn.baseline(), grad, ExecMode::Serial);
  double vp = fn.value_and_gradient(fn.baseline(), grad, ExecMode::Parallel);
  std::printf("value serial %.9g | parallel %.9g | rel diff %.2e\n", vs, vp,
              vs == 0 ? 0.0 : std::fabs(vs - vp) / std::fabs(vs));

  double tSerial = 0, tParallel = 0;
  for (int r = 0; r < reps; ++r) {
    auto t0 = Clock::now();
    fn.value_and_gradient(fn.baseline(), grad, ExecMode::Serial);
    tSerial += ms_since(t0);
    t0 = Clock::now();
    fn.value_and_gradient(fn.baseline(), grad, ExecMode::Parallel);
    tParallel += ms_since(t0);
  }
  std::printf("value+gradient: serial %.1f ms | parallel %.1f ms | speedup %.2fx\n",
              tSerial / reps, tParallel / reps, tSerial / tParallel);

  // grid search over a trimmed coordinate set to keep the run short
  Workload small = build_workload(60, 12);
  GroundFunction sf = smooth_lower(small.wf, "reachable", small.norms, small.ranges, params);
  auto t0 = Clock::now();
  auto b1 = smooth_bound(sf, small.norms, params.beta, small.ranges, params, ExecMode::Serial);
  double gSerial = ms_since(t0);
  t0 = Clock::now();
  auto b2 = smooth_bound(sf, small.norms, params.beta, small.ranges, params, ExecMode::Parallel);
  double gParallel = ms_since(t0);
  std::printf("smooth bound:   serial %.1f ms | parallel %.1f ms | speedup %.2fx "
              "(bound %.6g vs %.6g)\n",
              gSerial, gParallel, gSerial / gParallel, b1.at("ship"), b2.at("ship"));
  return 0;
}
