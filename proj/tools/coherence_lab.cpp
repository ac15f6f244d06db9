// coherence-lab: run GFM replacement studies, plot mode shapes, check inputs.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "coherence/errors.hpp"
#include "coherence/report.hpp"
#include "coherence/scenario.hpp"

namespace fs = std::filesystem;
using namespace coherence;

namespace {

enum Exit { kOk = 0, kValidation = 1, kConvergence = 2, kPipeline = 3, kIo = 4 };

int exit_for_kind(const std::string& kind) {
  if (kind == "validation") return kValidation;
  if (kind == "convergence") return kConvergence;
  return kPipeline;
}

void print_trace(const std::vector<double>& history) {
  std::cerr << "residual trace:";
  for (std::size_t k = 0; k < history.size(); ++k) std::cerr << "\n  iter " << k << "  " << format_sig6(history[k]);
  std::cerr << '\n';
}

/// Maps library exceptions to exit codes with a one-line diagnostic.
int report_error(const std::string& where, const std::exception& e) {
  std::cerr << "error: " << where << ": " << e.what() << '\n';
  if (const auto* v = dynamic_cast<const ValidationError*>(&e)) {
    for (const auto& s : v->violations()) std::cerr << "  - " << s << '\n';
    return kValidation;
  }
  if (dynamic_cast<const ParseError*>(&e)) return kValidation;
  if (dynamic_cast<const IoError*>(&e)) return kIo;
  if (const auto* c = dynamic_cast<const ConvergenceError*>(&e)) {
    print_trace(c->residual_history());
    return kConvergence;
  }
  if (dynamic_cast<const SingularMatrixError*>(&e)) return kConvergence;
  return kPipeline;
}

BaseCase load_base(const std::string& network_path, const std::string& machines_path) {
  BaseCase b{load_network(network_path), load_machines(machines_path)};
  validate(b.machines, b.net);
  return b;
}

/// Writes every file or none. Returns false after removing partial output.
bool write_all(const fs::path& dir, const std::map<std::string, std::string>& files) {
  std::error_code ec;
  const bool existed = fs::exists(dir, ec);
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    std::cerr << "error: cannot create output directory " << dir << '\n';
    return false;
  }
  std::vector<fs::path> written;
  for (const auto& [name, body] : files) {
    const fs::path p = dir / name;
    std::ofstream os(p, std::ios::binary);
    if (os) os.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (os) written.push_back(p);
    if (!os || !os.flush()) {
      std::cerr << "error: cannot write " << p << '\n';
      for (const auto& w : written) fs::remove(w, ec);
      fs::remove(p, ec);
      if (!existed) fs::remove(dir, ec);
      return false;
    }
  }
  return true;
}

void add_matrices(std::map<std::string, std::string>& files, const std::string& prefix, const CaseResult& c) {
  if (!c.sys || !c.lap) return;
  const auto order = c.sys->machine_order();
  const auto& s = *c.sys;
  const std::vector<std::pair<const char*, const Eigen::MatrixXd*>> blocks = {
      {"A11", &s.a11}, {"A12", &s.a12}, {"A21", &s.a21}, {"A22", &s.a22}, {"A23", &s.a23},
      {"A31", &s.a31}, {"A32", &s.a32}, {"A33", &s.a33}, {"A34", &s.a34}, {"A1", &s.a1},
      {"A2", &s.a2},   {"A3", &s.a3},   {"A4", &s.a4},   {"L", &c.lap->l}, {"Lbar", &c.lap->l_bar}};
  for (const auto& [name, m] : blocks) files[prefix + "." + name + ".csv"] = matrix_csv(*m, order);
  if (c.lap->l0_bar) files[prefix + ".L0bar.csv"] = matrix_csv(*c.lap->l0_bar, order);
}

void add_mode_plots(std::map<std::string, std::string>& files, const std::string& prefix, const CaseResult& c) {
  std::vector<int> area;
  if (c.part) area = c.part->assignment;
  for (std::size_t k = 0; k < c.band_modes.size(); ++k) {
    CompassMode cm;
    cm.freq_hz = c.band_modes[k].freq_hz;
    cm.title = prefix;
    cm.bus = c.machine_bus;
    cm.components = c.band_modes[k].components;
    cm.area = area;
    files[prefix + ".mode" + std::to_string(k + 1) + ".svg"] = compass_svg(cm);
  }
}

int cmd_run(const std::string& network, const std::string& machines, const std::vector<std::string>& scenario_paths,
            const std::string& out, const std::string& emit_list) {
  std::set<std::string> emit;
  {
    std::stringstream ss(emit_list);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item.empty()) continue;
      if (item != "json" && item != "csv" && item != "svg" && item != "matrices") {
        std::cerr << "error: unknown emit target '" << item << "'\n";
        return kValidation;
      }
      emit.insert(item);
    }
  }
  if (emit.empty()) {
    std::cerr << "error: at least one emit target is required\n";
    return kValidation;
  }

  BaseCase base;
  std::vector<ScenarioSpec> specs;
  try {
    base = load_base(network, machines);
    for (const auto& p : scenario_paths) specs.push_back(load_scenario(p));
  } catch (const std::exception& e) {
    return report_error("input", e);
  }
  if (specs.empty()) {
    ScenarioSpec s;
    s.name = "base";
    specs.push_back(s);
  }
  std::set<std::string> names;
  for (const auto& s : specs) {
    if (!names.insert(s.name).second) {
      std::cerr << "error: duplicate scenario name '" << s.name << "'\n";
      return kValidation;
    }
  }

  const auto reports = batch_run(base, specs);

  std::map<std::string, std::string> files;
  int status = kOk;
  for (const auto& r : reports) {
    for (const auto& w : r.warnings) std::cerr << "warning: " << r.spec.name << ": " << w << '\n';
    if (!r.ok) {
      std::cerr << "error: " << r.spec.name << ": " << r.failed_stage << ": " << r.error << '\n';
      if (status == kOk) status = exit_for_kind(r.error_kind);
    }
    if (emit.count("json")) files[r.spec.name + ".report.json"] = report_to_json(r).dump(2) + "\n";
    if (emit.count("svg")) {
      add_mode_plots(files, r.spec.name + ".base", r.base);
      if (r.scenario) add_mode_plots(files, r.spec.name + ".scenario", *r.scenario);
    }
    if (emit.count("matrices")) {
      add_matrices(files, r.spec.name + ".base", r.base);
      if (r.scenario) add_matrices(files, r.spec.name + ".scenario", *r.scenario);
    }
  }
  if (emit.count("csv")) {
    files["modes.csv"] = modes_csv(reports);
    files["groups.csv"] = groups_csv(reports);
    files["lemma1.csv"] = lemma1_csv(reports);
    files["injections.csv"] = injections_csv(reports);
  }
  if (!write_all(out, files)) return kIo;
  for (const auto& r : reports) {
    std::cout << r.spec.name << ": " << (r.ok ? "ok" : "failed");
    const auto* c = r.scenario ? &*r.scenario : &r.base;
    if (!c->band_modes.empty()) {
      std::cout << "  band modes (Hz):";
      for (const auto& m : c->band_modes) std::cout << ' ' << format_sig6(m.freq_hz);
    }
    std::cout << '\n';
  }
  std::cout << "wrote " << files.size() << " files to " << out << '\n';
  return status;
}

int cmd_modeshape(const std::string& report_path, double freq, const std::string& case_label, const std::string& out) {
  CompassMode mode;
  try {
    std::ifstream is(report_path);
    if (!is) throw IoError("cannot open file: " + report_path);
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(report_path + ": " + e.what());
    }
    mode = find_mode(doc, freq, case_label);
  } catch (const PreconditionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    return report_error("modeshape", e);
  }
  const fs::path p(out);
  std::error_code ec;
  std::ofstream os(p, std::ios::binary);
  const std::string svg = compass_svg(mode);
  if (os) os.write(svg.data(), static_cast<std::streamsize>(svg.size()));
  if (!os || !os.flush()) {
    std::cerr << "error: cannot write " << p << '\n';
    fs::remove(p, ec);
    return kIo;
  }
  std::cout << "mode " << format_sig6(mode.freq_hz) << " Hz (" << mode.title << ") -> " << out << '\n';
  return kOk;
}

int cmd_validate(const std::string& network, const std::string& machines) {
  BaseCase base;
  try {
    base = load_base(network, machines);
  } catch (const std::exception& e) {
    return report_error("validate", e);
  }
  std::cout << "network: " << base.net.size() << " buses, " << base.net.branches.size() << " branches, total load "
            << format_sig6(base.net.total_load_p() * base.net.base_mva) << " MW\n";
  std::cout << "machines: " << base.machines.sgs.size() << " SG, " << base.machines.gfms.size() << " GFM\n";
  try {
    const auto pf = solve_power_flow(base.net, base.machines);
    std::cout << "power flow: converged in " << pf.iterations << " iterations, max mismatch "
              << format_sig6(pf.max_mismatch) << " pu\n";
  } catch (const std::exception& e) {
    return report_error("power flow", e);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coherency and inter-area mode analysis under GFM replacement"};
  app.require_subcommand(1);

  std::string network, machines, out, emit = "json", report, case_label;
  std::vector<std::string> scenarios;
  double freq = 0.0;

  auto* run = app.add_subcommand("run", "Run base case and scenarios, write reports");
  run->add_option("--network", network, "Network JSON")->required();
  run->add_option("--machines", machines, "Machines JSON")->required();
  run->add_option("--scenario", scenarios, "Scenario JSON (repeatable)");
  run->add_option("--out", out, "Output directory")->required();
  run->add_option("--emit", emit, "Comma-separated subset of json,csv,svg,matrices")->capture_default_str();

  auto* ms = app.add_subcommand("modeshape", "Compass plot of one mode from a report");
  ms->add_option("--report", report, "Report JSON")->required();
  ms->add_option("--freq", freq, "Mode frequency in Hz")->required();
  ms->add_option("--case", case_label, "Case label (base or scenario)");
  ms->add_option("--out", out, "Output SVG")->required();

  auto* val = app.add_subcommand("validate", "Check inputs and probe the power flow");
  val->add_option("--network", network, "Network JSON")->required();
  val->add_option("--machines", machines, "Machines JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kValidation;
  }

  if (*run) return cmd_run(network, machines, scenarios, out, emit);
  if (*ms) return cmd_modeshape(report, freq, case_label, out);
  return cmd_validate(network, machines);
}
