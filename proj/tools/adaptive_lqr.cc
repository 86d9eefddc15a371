// adaptive-lqr: command-line front end for the adaptive LQ experiments.
//
//   adaptive-lqr check-ce fleet.json
//   adaptive-lqr simulate fleet.json --set policy=ce --set paths=2000 -f csv
//   adaptive-lqr replay report.json

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "adaptive_lqr/experiment.h"

namespace {

using adaptive_lqr::ExperimentSpec;

std::map<std::string, std::string> ParseOverrides(
    const std::vector<std::string>& items) {
  std::map<std::string, std::string> out;
  for (const std::string& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw adaptive_lqr::ValidationError("override '" + item +
                                          "' is not key=value");
    }
    out[item.substr(0, eq)] = item.substr(eq + 1);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive LQ regulator experiments"};
  app.require_subcommand(1);

  std::string ensemble;
  std::vector<std::string> sets;
  std::string output = "-";
  std::string format = "json";

  std::vector<CLI::App*> commands;
  for (const std::string& name : adaptive_lqr::ExperimentCommands()) {
    CLI::App* sub = app.add_subcommand(name);
    if (name == "scalar-integrator") {
      sub->add_option("ensemble", ensemble, "Ignored; the ensemble is built-in");
    } else {
      sub->add_option("ensemble", ensemble, "Ensemble JSON file")
          ->required()
          ->check(CLI::ExistingFile);
    }
    sub->add_option("-s,--set", sets, "Override key=value (repeatable)");
    sub->add_option("-o,--output", output, "Output file, - for stdout");
    sub->add_option("-f,--format", format, "json or csv")
        ->check(CLI::IsMember({"json", "csv"}));
    commands.push_back(sub);
  }

  std::string report_path;
  CLI::App* replay =
      app.add_subcommand("replay", "Re-run the config embedded in a report");
  replay->add_option("report", report_path, "Report JSON file")
      ->required()
      ->check(CLI::ExistingFile);
  replay->add_option("-o,--output", output, "Output file, - for stdout");
  replay->add_option("-f,--format", format, "json or csv")
      ->check(CLI::IsMember({"json", "csv"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  ExperimentSpec spec;
  try {
    if (replay->parsed()) {
      std::ifstream in(report_path);
      spec = ExperimentSpec::FromReport(nlohmann::json::parse(in));
    } else {
      for (CLI::App* sub : commands) {
        if (sub->parsed()) spec.command = sub->get_name();
      }
      spec.ensemble_path = ensemble;
      spec.overrides = ParseOverrides(sets);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  spec.output = output;
  spec.format = format;
  return adaptive_lqr::RunAndWrite(spec, std::cout, std::cerr);
}
