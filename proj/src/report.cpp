#include "coherence/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <sstream>

#include "coherence/errors.hpp"

namespace coherence {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

nlohmann::json mode_json(const ModeShape& m, const std::vector<int>& bus) {
  nlohmann::json comps = nlohmann::json::array();
  for (std::size_t i = 0; i < m.components.size(); ++i) {
    const auto c = m.components[i];
    comps.push_back({{"bus", bus[i]},
                     {"re", c.real()},
                     {"im", c.imag()},
                     {"magnitude", std::abs(c)},
                     {"phase_deg", std::arg(c) * kRadToDeg}});
  }
  return {{"freq_hz", m.freq_hz},
          {"damping_ratio", m.damping_ratio},
          {"eigenvalue", {m.eigenvalue.real(), m.eigenvalue.imag()}},
          {"laplacian_freq_hz", m.laplacian_freq_hz},
          {"components", comps},
          {"participation", m.participation}};
}

nlohmann::json case_json(const CaseResult& c) {
  nlohmann::json j;
  j["label"] = c.label;
  j["machines"] = nlohmann::json::array();
  for (std::size_t i = 0; i < c.machine_bus.size(); ++i) {
    nlohmann::json m{{"bus", c.machine_bus[i]}};
    const bool gfm = c.op ? i >= c.op->sg_states.size() : c.replaces[i] != 0;
    m["type"] = gfm ? "gfm" : "sg";
    if (c.replaces[i]) m["replaces"] = c.replaces[i];
    j["machines"].push_back(m);
  }
  if (c.op) {
    j["power_flow"] = {{"iterations", c.op->pf.iterations},
                       {"max_mismatch", c.op->pf.max_mismatch},
                       {"residual_history", c.op->pf.residual_history},
                       {"slack_p", c.slack_p},
                       {"lossless", c.op->pf.lossless}};
  }
  if (c.equilibrium) j["equilibrium"] = c.equilibrium->max_abs;
  if (c.sys) j["linearization_voltage_shift"] = c.sys->v_shift;
  if (c.lap) j["a33_condition"] = c.lap->a33_condition, j["warnings"] = c.lap->warnings;
  if (c.lemma1) j["lemma1"] = {{"mean", c.lemma1->mean}, {"std", c.lemma1->std}, {"max", c.lemma1->max}};
  if (c.sub) {
    j["eigenvalues"] = to_vec(c.sub->eigenvalues);
    std::vector<double> lf;
    for (Eigen::Index i = 0; i < c.sub->eigenvalues.size(); ++i) {
      lf.push_back(std::sqrt(std::abs(c.sub->eigenvalues(i))) / (2.0 * std::numbers::pi));
    }
    j["laplacian_freq_hz"] = lf;
    nlohmann::json gap = nlohmann::json::array();
    for (std::size_t i = 0; i < c.sub->eigengap.size(); ++i) {
      gap.push_back({{"i", i + 2}, {"ratio", c.sub->eigengap[i]}});
    }
    j["eigengap"] = gap;
    j["eigenvalue_tie"] = c.sub->tie;
    j["zero_eigenvalue_ok"] = c.sub->zero_ok;
  }
  if (c.part) {
    nlohmann::json areas = nlohmann::json::array();
    const auto members = c.part->members();
    for (std::size_t a = 0; a < members.size(); ++a) {
      std::vector<int> buses;
      for (auto i : members[a]) buses.push_back(c.machine_bus[i]);
      areas.push_back({{"area", a + 1},
                       {"reference_bus", c.machine_bus[c.part->reference_machines[a]]},
                       {"members", buses}});
    }
    std::vector<int> ties;
    for (auto i : c.part->ties) ties.push_back(c.machine_bus[i]);
    j["groups"] = {{"areas", areas}, {"ties", ties}};
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < c.part->permuted_rows.rows(); ++i) {
      rows.push_back(to_vec(c.part->permuted_rows.row(i).transpose()));
    }
    j["groups"]["permuted_rows"] = rows;
  }
  if (c.eps) j["epsilon"] = {{"epsilon", c.eps->epsilon}, {"epsilon_ratio", c.eps->epsilon_ratio}};
  j["modes"] = nlohmann::json::array();
  for (const auto& m : c.band_modes) j["modes"].push_back(mode_json(m, c.machine_bus));
  j["low_modes"] = nlohmann::json::array();
  for (const auto& m : c.low_modes) j["low_modes"].push_back(mode_json(m, c.machine_bus));
  return j;
}

nlohmann::json comparison_json(const SubspaceComparison& c) {
  nlohmann::json j{{"defined", c.defined},
                   {"beta", c.beta},
                   {"sigmas", to_vec(c.sigmas)},
                   {"thetas", to_vec(c.thetas)},
                   {"sin_theta_bound", {{"lhs", c.theta_matrix_norm}, {"rhs", c.bound_rhs}, {"holds", c.bound_holds}}},
                   {"row_bound", {{"lhs", c.row_shift_max}, {"rhs", c.row_bound_rhs}, {"holds", c.row_bound_holds}}},
                   {"row_shift", to_vec(c.row_shift)},
                   {"alpha_row_shift", to_vec(c.alpha_row_shift)},
                   {"perturbation_norm", c.perturbation_norm},
                   {"perturbation_norm_unweighted", c.perturbation_norm_unweighted},
                   {"row_bound_rhs_unweighted", c.row_bound_rhs_unweighted}};
  if (!c.defined) j["undefined_reason"] = c.undefined_reason;
  nlohmann::json q = nlohmann::json::array();
  for (Eigen::Index i = 0; i < c.q.rows(); ++i) q.push_back(to_vec(c.q.row(i).transpose()));
  j["q"] = q;
  return j;
}

const CaseResult* base_of(const std::vector<ScenarioReport>& reps) {
  for (const auto& r : reps)
    if (r.base.sub) return &r.base;
  return nullptr;
}

}  // namespace

std::string format_sig6(double x) {
  if (!std::isfinite(x)) return std::isnan(x) ? "nan" : (x > 0 ? "inf" : "-inf");
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

nlohmann::json report_to_json(const ScenarioReport& rep) {
  nlohmann::json j;
  j["name"] = rep.spec.name;
  j["spec"] = to_json(rep.spec);
  j["status"] = rep.ok ? "ok" : "failed";
  if (!rep.ok) {
    j["failed_stage"] = rep.failed_stage;
    j["error_kind"] = rep.error_kind;
    j["error"] = rep.error;
  }
  j["warnings"] = rep.warnings;
  j["injection_summary"] = {{"gfm_total_mw", rep.injection.gfm_total_mw},
                            {"total_load_mw", rep.injection.total_load_mw},
                            {"pct_of_load", rep.injection.pct_of_load}};
  j["cases"] = nlohmann::json::array();
  j["cases"].push_back(case_json(rep.base));
  if (rep.scenario) j["cases"].push_back(case_json(*rep.scenario));
  if (!rep.row_map.empty()) {
    nlohmann::json map = nlohmann::json::array();
    for (std::size_t i = 0; i < rep.row_map.size(); ++i) {
      map.push_back({{"base_bus", rep.base.machine_bus[i]}, {"scenario_bus", rep.scenario->machine_bus[rep.row_map[i]]}});
    }
    j["row_map"] = map;
  }
  if (rep.scenario) {
    nlohmann::json tr = nlohmann::json::array();
    for (const auto& t : rep.tracking) {
      nlohmann::json row{{"base_freq_hz", t.base_freq_hz}, {"gfm_sensitive", t.gfm_sensitive}, {"mac", t.mac}};
      row["scenario_freq_hz"] = t.scen_index ? nlohmann::json(t.scen_freq_hz) : nlohmann::json(nullptr);
      tr.push_back(row);
    }
    j["mode_tracking"] = tr;
    j["comparison"] = rep.comparison ? comparison_json(*rep.comparison) : nlohmann::json(nullptr);
    std::vector<int> match;
    for (int a : rep.area_match) match.push_back(a + 1);
    j["area_match"] = match;
    j["flipped_machines"] = rep.flipped_machines;
  }
  return j;
}

std::string modes_csv(const std::vector<ScenarioReport>& reps) {
  std::ostringstream os;
  const CaseResult* base = base_of(reps);
  std::vector<const ScenarioReport*> scen;
  for (const auto& r : reps)
    if (r.scenario) scen.push_back(&r);
  os << "mode,base";
  for (const auto* r : scen) os << ',' << r->spec.name;
  os << '\n';
  if (!base) return os.str();
  for (std::size_t k = 0; k < base->band_modes.size(); ++k) {
    os << k + 1 << ',' << format_sig6(base->band_modes[k].freq_hz);
    for (const auto* r : scen) {
      os << ',';
      if (k < r->tracking.size() && r->tracking[k].scen_index) os << format_sig6(r->tracking[k].scen_freq_hz);
    }
    os << '\n';
  }
  return os.str();
}

std::string groups_csv(const std::vector<ScenarioReport>& reps) {
  std::ostringstream os;
  os << "report,case,bus,replaces,area,reference\n";
  for (const auto& r : reps) {
    for (const CaseResult* c : {&r.base, r.scenario ? &*r.scenario : nullptr}) {
      if (!c || !c->part) continue;
      for (std::size_t i = 0; i < c->machine_bus.size(); ++i) {
        const bool ref = std::find(c->part->reference_machines.begin(), c->part->reference_machines.end(), i) !=
                         c->part->reference_machines.end();
        os << r.spec.name << ',' << c->label << ',' << c->machine_bus[i] << ',';
        if (c->replaces[i]) os << c->replaces[i];
        os << ',' << c->part->assignment[i] + 1 << ',' << (ref ? 1 : 0) << '\n';
      }
    }
  }
  return os.str();
}

std::string lemma1_csv(const std::vector<ScenarioReport>& reps) {
  std::ostringstream os;
  os << "report,case,mean,std,max\n";
  for (const auto& r : reps) {
    for (const CaseResult* c : {&r.base, r.scenario ? &*r.scenario : nullptr}) {
      if (!c || !c->lemma1) continue;
      os << r.spec.name << ',' << c->label << ',' << format_sig6(c->lemma1->mean) << ',' << format_sig6(c->lemma1->std)
         << ',' << format_sig6(c->lemma1->max) << '\n';
    }
  }
  return os.str();
}

std::string injections_csv(const std::vector<ScenarioReport>& reps) {
  std::ostringstream os;
  os << "report,gfm_total_mw,total_load_mw,pct_of_load\n";
  for (const auto& r : reps) {
    os << r.spec.name << ',' << format_sig6(r.injection.gfm_total_mw) << ',' << format_sig6(r.injection.total_load_mw)
       << ',' << format_sig6(r.injection.pct_of_load) << '\n';
  }
  return os.str();
}

std::string matrix_csv(const Eigen::MatrixXd& m, const std::vector<int>& machine_order) {
  std::ostringstream os;
  os << "# machine_order";
  for (std::size_t i = 0; i < machine_order.size(); ++i) os << (i ? ',' : ' ') << machine_order[i];
  os << '\n';
  char buf[40];
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
      os << (j ? "," : "") << buf;
    }
    os << '\n';
  }
  return os.str();
}

std::string compass_svg(const CompassMode& mode) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  constexpr double size = 480.0, c = size / 2.0, radius = 180.0;
  std::ostringstream os;
  char buf[256];
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"520\" viewBox=\"0 0 480 520\">\n";
  os << "<rect width=\"480\" height=\"520\" fill=\"white\"/>\n";
  for (double ring : {1.0, 0.5}) {
    std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"%.2f\" fill=\"none\" stroke=\"#bbbbbb\"/>\n", c, c,
                  radius * ring);
    os << buf;
  }
  std::snprintf(buf, sizeof buf,
                "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"#dddddd\"/>\n"
                "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"#dddddd\"/>\n",
                c - radius, c, c + radius, c, c, c - radius, c, c + radius);
  os << buf;
  for (std::size_t i = 0; i < mode.components.size(); ++i) {
    const auto z = mode.components[i];
    const double x = c + radius * z.real(), y = c - radius * z.imag();
    const char* color = mode.area.size() == mode.components.size()
                            ? palette[static_cast<std::size_t>(mode.area[i]) % std::size(palette)]
                            : palette[0];
    std::snprintf(buf, sizeof buf, "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"%s\" stroke-width=\"2\"/>\n",
                  c, c, x, y, color);
    os << buf;
    std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"%s\"/>\n", x, y, color);
    os << buf;
    const double mag = std::abs(z);
    const double lx = mag > 0 ? x + 12.0 * z.real() / mag : x + 6.0;
    const double ly = mag > 0 ? y - 12.0 * z.imag() / mag : y;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.2f\" y=\"%.2f\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">%d</text>\n",
                  lx, ly + 4.0, mode.bus[i]);
    os << buf;
  }
  std::snprintf(buf, sizeof buf,
                "<text x=\"240\" y=\"505\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">%s %.4g Hz</text>\n",
                mode.title.c_str(), mode.freq_hz);
  os << buf << "</svg>\n";
  return os.str();
}

CompassMode find_mode(const nlohmann::json& report, double freq_hz, const std::string& case_label, double tol_hz) {
  if (!report.contains("cases") || !report["cases"].is_array()) throw ParseError("report has no cases");
  const nlohmann::json* best = nullptr;
  const nlohmann::json* best_case = nullptr;
  double best_err = tol_hz;
  for (const auto& c : report["cases"]) {
    if (!case_label.empty() && c.value("label", "") != case_label) continue;
    for (const char* key : {"modes", "low_modes"}) {
      if (!c.contains(key)) continue;
      for (const auto& m : c[key]) {
        const double err = std::abs(m.value("freq_hz", 0.0) - freq_hz);
        if (err <= best_err && (!best || err < best_err)) {
          best = &m;
          best_case = &c;
          best_err = err;
        }
      }
    }
    if (best) break;
  }
  if (!best) {
    throw PreconditionError("no matching mode within " + format_sig6(tol_hz) + " Hz of " + format_sig6(freq_hz) + " Hz");
  }
  CompassMode out;
  out.freq_hz = (*best)["freq_hz"].get<double>();
  out.title = report.value("name", "") + " / " + best_case->value("label", "");
  std::map<int, int> area_of;
  if (best_case->contains("groups")) {
    for (const auto& a : (*best_case)["groups"]["areas"]) {
      for (const auto& b : a["members"]) area_of[b.get<int>()] = a["area"].get<int>() - 1;
    }
  }
  for (const auto& comp : (*best)["components"]) {
    const int bus = comp["bus"].get<int>();
    out.bus.push_back(bus);
    out.components.emplace_back(comp["re"].get<double>(), comp["im"].get<double>());
    if (area_of.count(bus)) out.area.push_back(area_of[bus]);
  }
  if (out.area.size() != out.bus.size()) out.area.clear();
  return out;
}

}  // namespace coherence
