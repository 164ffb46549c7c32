// pleak: privacy leakage analysis for SQL workflows and PE-BPMN models.
//
// Subcommands mirror the analysis levels: validate / disclosure / deps for
// the Boolean level, leaks-when for the qualitative level, and sens-global /
// sens-derivative / advantage for the quantitative level.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pleak/advantage.hpp"
#include "pleak/calibrate.hpp"
#include "pleak/leakswhen.hpp"
#include "pleak/loader.hpp"
#include "pleak/pebpmn.hpp"
#include "pleak/sens_global.hpp"
#include "pleak/sens_local.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pleak;

namespace {

int run_cap() {
  if (const char *cap = std::getenv("PLEAK_RUN_CAP"))
    return std::max(1, std::atoi(cap));
  return model::kDefaultRunCap;
}

std::string fmt_double(double v) {
  if (std::isinf(v))
    return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

void write_file(const fs::path &path, const std::string &content) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out.good())
    fail(ErrorKind::Io, "cannot write \"" + path.string() + "\"");
  out << content;
}

// Structural and stereotype validation; prints issues and returns their count.
int report_issues(const model::ProcessModel &m, const std::string &format, std::ostream &os) {
  auto structural = model::validate_structure(m);
  std::vector<pebpmn::ValidationIssue> stereo;
  if (structural.empty())
    stereo = pebpmn::validate_stereotypes(m);

  if (format == "json") {
    json doc;
    doc["schemaVersion"] = 1;
    doc["issues"] = json::array();
    for (const auto &i : structural)
      doc["issues"].push_back({{"code", i.code}, {"message", i.message}, {"nodes", i.nodeIds}});
    for (const auto &i : stereo)
      doc["issues"].push_back({{"code", i.code}, {"message", i.message}, {"nodes", i.nodeIds}});
    os << doc.dump(2) << "\n";
  } else {
    for (const auto &i : structural)
      os << i.code << ": " << i.message << "\n";
    for (const auto &i : stereo)
      os << i.code << ": " << i.message << "\n";
    if (structural.empty() && stereo.empty())
      os << "model is valid\n";
  }
  return static_cast<int>(structural.size() + stereo.size());
}

void require_valid(const model::ProcessModel &m) {
  // analysis is refused while validation reports problems
  if (!model::validate_structure(m).empty() || !pebpmn::validate_stereotypes(m).empty())
    fail(ErrorKind::ValidationFailed,
         "the model has validation issues; run the validate subcommand first");
}

std::string pick_target(const sql::SqlWorkflow &wf, std::string requested) {
  if (!requested.empty()) {
    if (!wf.producer_of(requested))
      fail(ErrorKind::Binding, "no task produces \"" + requested + "\"");
    return requested;
  }
  // default: the unique final output (produced but never consumed)
  std::set<std::string> consumed;
  for (const auto &t : wf.tasks)
    for (const auto &q : t.queries)
      for (const auto &[src, alias] : q->sources)
        consumed.insert(src);
  std::vector<std::string> finals;
  for (const auto &out : wf.outputTables)
    if (!consumed.count(out))
      finals.push_back(out);
  if (finals.size() != 1) {
    std::string names;
    for (const auto &f : finals)
      names += (names.empty() ? "" : ", ") + f;
    fail(ErrorKind::Binding, "pass --target; candidate outputs: " + names);
  }
  return finals[0];
}

sensderiv::RangeMap load_ranges(const std::string &attackerFile) {
  if (attackerFile.empty())
    return {};
  return advantage::parse_attacker(loader::read_file(attackerFile)).ranges();
}

struct DerivativeReport {
  std::string table;
  std::optional<double> localSensitivity;
  double G = 1.0;
  std::optional<double> derivative;
  std::optional<double> smoothBound;
  std::optional<sensderiv::CalibrationResult> calibration;
};

std::string derivative_text(const std::vector<DerivativeReport> &reports,
                            const sensderiv::SmoothParams &p, double output,
                            const std::string &target) {
  std::ostringstream os;
  os << "target: " << target << "\n";
  os << "output: " << fmt_double(output) << "\n";
  os << "epsilon: " << fmt_double(p.epsilon) << "  beta: " << fmt_double(p.beta)
     << "  gamma: " << fmt_double(p.gamma) << "  confidence: " << fmt_double(p.confidence)
     << "\n";
  for (const auto &r : reports) {
    os << "table: " << r.table << "\n";
    if (r.localSensitivity)
      os << "  local sensitivity: " << fmt_double(*r.localSensitivity) << " (G = "
         << fmt_double(r.G) << ")\n";
    if (r.derivative)
      os << "  derivative sensitivity: " << fmt_double(*r.derivative) << "\n";
    if (r.smoothBound)
      os << "  smooth bound: " << fmt_double(*r.smoothBound) << "\n";
    if (r.calibration) {
      os << "  noise scale: " << fmt_double(r.calibration->noiseScale) << "\n";
      os << "  relative error at " << fmt_double(p.confidence * 100) << "%: "
         << fmt_double(r.calibration->relativeErrorPct) << "%\n";
    }
  }
  return os.str();
}

json derivative_json(const std::vector<DerivativeReport> &reports,
                     const sensderiv::SmoothParams &p, double output,
                     const std::string &target) {
  json doc;
  doc["schemaVersion"] = 1;
  doc["target"] = target;
  doc["output"] = output;
  doc["epsilon"] = p.epsilon;
  doc["beta"] = p.beta;
  doc["gamma"] = p.gamma;
  doc["confidence"] = p.confidence;
  doc["tables"] = json::array();
  for (const auto &r : reports) {
    json t;
    t["table"] = r.table;
    if (r.localSensitivity) {
      t["localSensitivity"] = *r.localSensitivity;
      t["G"] = r.G;
    }
    if (r.derivative)
      t["derivativeSensitivity"] = *r.derivative;
    if (r.smoothBound)
      t["smoothBound"] = *r.smoothBound;
    if (r.calibration) {
      t["noiseScale"] = r.calibration->noiseScale;
      t["relativeErrorPct"] = std::isinf(r.calibration->relativeErrorPct)
                                  ? json("inf")
                                  : json(r.calibration->relativeErrorPct);
    }
    doc["tables"].push_back(t);
  }
  return doc;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"privacy leakage analysis for PE-BPMN models and SQL workflows"};
  app.require_subcommand(1);

  std::string modelPath, format = "text", outDir = "pleak-out";
  std::vector<std::string> targets;
  std::string targetTable, attackerFile, sensitiveFile, taskId;
  bool serial = false;
  sensderiv::SmoothParams params;
  double advantageBound = 0.3;
  bool betaSet = false;

  std::map<const CLI::App *, std::string> defaultFormats;
  auto add_common = [&](CLI::App *cmd, const std::string &defaultFormat) {
    cmd->add_option("model", modelPath, "model JSON file")->required();
    defaultFormats[cmd] = defaultFormat;
    cmd->add_option("--format", format, "output format");
    cmd->add_option("--out", outDir, "output directory (default pleak-out)");
  };
  auto add_numeric = [&](CLI::App *cmd) {
    cmd->add_option("--epsilon", params.epsilon, "differential privacy epsilon");
    cmd->add_option("--beta", params.beta, "smoothness beta")->each([&](const std::string &) {
      betaSet = true;
    });
    cmd->add_option("--gamma", params.gamma, "noise shape gamma");
    cmd->add_option("--sigmoid-a", params.sigmoidA, "sigmoid precision");
    cmd->add_option("--confidence", params.confidence, "error confidence level");
    cmd->add_flag("--serial", serial, "disable parallel kernels");
  };

  CLI::App *cValidate = app.add_subcommand("validate", "structural and stereotype checks");
  add_common(cValidate, "text");

  CLI::App *cDisclosure = app.add_subcommand("disclosure", "simple disclosure report");
  add_common(cDisclosure, "csv");

  CLI::App *cDeps = app.add_subcommand("deps", "data dependency matrix");
  add_common(cDeps, "csv");

  CLI::App *cLeaks = app.add_subcommand("leaks-when", "leaks-when reports per output column");
  add_common(cLeaks, "text");
  cLeaks->add_option("--target", targets, "output data objects to analyze")->required();

  CLI::App *cGlobal = app.add_subcommand("sens-global", "instance-independent COUNT sensitivity");
  add_common(cGlobal, "csv");
  cGlobal->add_option("--task", taskId, "analyze one task only");

  CLI::App *cDeriv =
      app.add_subcommand("sens-derivative", "derivative sensitivity and noise calibration");
  add_common(cDeriv, "text");
  cDeriv->add_option("--target", targetTable, "output table to analyze");
  cDeriv->add_option("--attacker-file", attackerFile, "attacker knowledge policy");
  add_numeric(cDeriv);

  CLI::App *cAdv = app.add_subcommand("advantage", "guessing-advantage noise calibration");
  add_common(cAdv, "text");
  cAdv->add_option("--target", targetTable, "output table to analyze");
  cAdv->add_option("--attacker-file", attackerFile, "attacker knowledge policy")->required();
  cAdv->add_option("--sensitive-file", sensitiveFile, "sensitive attribute policy")->required();
  cAdv->add_option("--advantage", advantageBound, "advantage bound in [0,1]")->required();
  add_numeric(cAdv);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    if (e.get_exit_code() == 0) {  // --help
      app.exit(e);
      return 0;
    }
    std::cerr << e.what() << "\n";
    return 2;
  }

  for (const auto &[cmd, def] : defaultFormats)
    if (cmd->parsed() && cmd->count("--format") == 0)
      format = def;

  auto mode = serial ? sensderiv::ExecMode::Serial : sensderiv::ExecMode::Parallel;

  try {
    loader::LoadedModel loaded = loader::load_model_file(modelPath);
    fs::path out(outDir);

    if (cValidate->parsed()) {
      std::ostringstream os;
      int issues = report_issues(*loaded.model, format, os);
      std::cout << os.str();
      return issues == 0 ? 0 : 1;
    }

    if (cDisclosure->parsed() || cDeps->parsed()) {
      require_valid(*loaded.model);
      std::string text;
      std::string stem = cDisclosure->parsed() ? "disclosure" : "dependencies";
      if (cDisclosure->parsed()) {
        pebpmn::DisclosureReport rep = pebpmn::disclosure_report(*loaded.model);
        text = format == "json" ? rep.to_json() : format == "text" ? rep.to_text() : rep.to_csv();
      } else {
        pebpmn::DependencyMatrix rep = pebpmn::dependency_matrix(*loaded.model);
        text = format == "json" ? rep.to_json() : format == "text" ? rep.to_text() : rep.to_csv();
      }
      if (format != "json" && format != "text" && format != "csv")
        fail(ErrorKind::UnknownFormat, "unknown format \"" + format + "\"");
      std::cout << text;
      std::string ext = format == "json" ? ".json" : format == "text" ? ".txt" : ".csv";
      write_file(out / (stem + ext), text);
      return 0;
    }

    if (cLeaks->parsed()) {
      require_valid(*loaded.model);
      if (!loaded.hasWorkflow)
        fail(ErrorKind::Binding, "the model carries no SQL scripts");
      leakswhen::Format f = leakswhen::parse_format(format);
      leakswhen::LeaksWhenReport rep = leakswhen::leaks_when(loaded.workflow, targets, run_cap());
      std::string text = leakswhen::render(rep, f);
      std::cout << text;
      if (f == leakswhen::Format::Dot) {
        for (const auto &e : rep.entries)
          write_file(out / (e.outputObject + "_" + std::to_string(e.column) + "_" +
                            std::to_string(e.run) + ".dot"),
                     leakswhen::render_entry_dot(rep, e));
      } else if (f == leakswhen::Format::Json) {
        write_file(out / "report.json", text);
      } else {
        write_file(out / "leaks_when.txt", text);
      }
      return 0;
    }

    if (cGlobal->parsed()) {
      require_valid(*loaded.model);
      if (!loaded.hasWorkflow)
        fail(ErrorKind::Binding, "the model carries no SQL scripts");
      std::optional<std::string> task;
      if (!taskId.empty())
        task = taskId;
      sensglobal::GlobalSensitivityMatrix m = sensglobal::global_sensitivity(loaded.workflow, task);
      std::string text = format == "json" ? m.to_json() : format == "text" ? m.to_text() : m.to_csv();
      std::cout << text;
      std::string ext = format == "json" ? ".json" : format == "text" ? ".txt" : ".csv";
      write_file(out / ("global_sensitivity" + ext), text);
      return 0;
    }

    if (cDeriv->parsed()) {
      require_valid(*loaded.model);
      if (!loaded.hasWorkflow)
        fail(ErrorKind::Binding, "the model carries no SQL scripts");
      params.validate();
      std::string target = pick_target(loaded.workflow, targetTable);
      sensderiv::RangeMap ranges = load_ranges(attackerFile);

      sql::Database evaluated = loaded.workflow.evaluate_all();
      const sql::TableData &outTable = evaluated.at(target);
      const sql::SelectQuery *targetQuery = nullptr;
      for (const auto &t : loaded.workflow.tasks)
        for (const auto &q : t.queries)
          if (q->intoTable == target)
            targetQuery = q.get();
      double output = outTable.schema.columns.size() == 1 &&
                              targetQuery->aggregation != sql::AggKind::None
                          ? as_double(outTable.rows[0][0])
                          : static_cast<double>(outTable.rows.size());

      bool anySensitiveCols = false;
      for (const auto &[table, tn] : loaded.norms)
        anySensitiveCols = anySensitiveCols || tn.spec.has_sensitive_cols();

      std::optional<sensderiv::GroundFunction> fn;
      std::map<std::string, double> deriv, bound;
      if (anySensitiveCols) {
        fn = sensderiv::smooth_lower(loaded.workflow, target, loaded.norms, ranges, params);
        deriv = sensderiv::derivative_sensitivity(*fn, loaded.norms, mode);
        bound = sensderiv::smooth_bound(*fn, loaded.norms, params.beta, ranges, params, mode);
      }

      std::vector<DerivativeReport> reports;
      bool countStyle = targetQuery->aggregation == sql::AggKind::None ||
                        targetQuery->aggregation == sql::AggKind::Count;
      for (const auto &table : loaded.workflow.inputTables) {
        DerivativeReport r;
        r.table = table;
        r.G = loaded.rowCost.count(table) ? loaded.rowCost.at(table) : 1.0;
        if (countStyle && loaded.workflow.data.count(table))
          r.localSensitivity = sensderiv::local_row_sensitivity(
              *targetQuery, evaluated, table, loaded.workflow.funcs, r.G);
        if (deriv.count(table)) {
          r.derivative = deriv.at(table);
          r.smoothBound = bound.at(table);
          r.calibration = sensderiv::calibrate_noise(bound.at(table), output, params);
        }
        if (r.localSensitivity || r.derivative)
          reports.push_back(std::move(r));
      }

      std::string text = format == "json"
                             ? derivative_json(reports, params, output, target).dump(2) + "\n"
                             : derivative_text(reports, params, output, target);
      std::cout << text;
      write_file(out / (format == "json" ? "derivative_sensitivity.json"
                                         : "derivative_sensitivity.txt"),
                 text);
      return 0;
    }

    if (cAdv->parsed()) {
      require_valid(*loaded.model);
      if (!loaded.hasWorkflow)
        fail(ErrorKind::Binding, "the model carries no SQL scripts");
      std::string target = pick_target(loaded.workflow, targetTable);
      auto [knowledge, sensitive] = advantage::parse_policy(
          loader::read_file(attackerFile), loader::read_file(sensitiveFile));
      advantage::AdvantageResult r = advantage::advantage_analysis(
          loaded.workflow, target, knowledge, sensitive, advantageBound, params, !betaSet);

      std::string text;
      if (format == "json") {
        json doc;
        doc["schemaVersion"] = 1;
        doc["advantage"] = r.advantageBound;
        doc["epsilon"] = std::isinf(r.epsilon) ? json("inf") : json(r.epsilon);
        doc["output"] = r.output;
        doc["noiseScale"] = r.noiseScale;
        doc["relativeErrorPct"] =
            std::isinf(r.relativeErrorPct) ? json("inf") : json(r.relativeErrorPct);
        doc["expectedCost"] = r.expectedCost;
        doc["targets"] = json::array();
        for (const auto &t : r.targets)
          doc["targets"].push_back({{"table", t.table},
                                    {"column", t.column},
                                    {"prior", t.prior},
                                    {"posterior", t.posterior}});
        text = doc.dump(2) + "\n";
      } else {
        std::ostringstream os;
        os << "advantage bound: " << fmt_double(r.advantageBound * 100) << "%\n";
        os << "epsilon: " << fmt_double(r.epsilon) << "\n";
        for (const auto &t : r.targets)
          os << "target " << t.table << "." << t.column
             << ": prior " << fmt_double(t.prior)
             << ", posterior " << fmt_double(t.posterior) << "\n";
        os << "output: " << fmt_double(r.output) << "\n";
        os << "noise scale: " << fmt_double(r.noiseScale) << "\n";
        os << "relative error: " << fmt_double(r.relativeErrorPct) << "%\n";
        os << "expected leakage cost: " << fmt_double(r.expectedCost) << "\n";
        text = os.str();
      }
      std::cout << text;
      write_file(out / (format == "json" ? "advantage.json" : "advantage.txt"), text);
      return 0;
    }
  } catch (const Error &e) {
    std::cerr << "error: " << e.what() << "\n";
    if (e.kind() == ErrorKind::InfeasibleSmoothness)
      std::cerr << "hint: keep beta below epsilon/(gamma+1), e.g. lower --beta or raise --epsilon\n";
    return e.kind() == ErrorKind::ValidationFailed ? 1 : 2;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
