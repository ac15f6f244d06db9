#include "coherence/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <deque>
#include <functional>
#include <map>
#include <set>
#include <thread>

#include "coherence/errors.hpp"
#include "json_util.hpp"

namespace coherence {

namespace {

constexpr double kLowModeCeilingHz = 2.0;

GfmOverrides overrides_from_json(const nlohmann::json& j, const std::string& where) {
  GfmOverrides o;
  if (j.is_string()) {
    if (j.get<std::string>() != "default") throw ParseError(where + ": expected \"default\" or an object");
    return o;
  }
  if (!j.is_object()) throw ParseError(where + ": expected \"default\" or an object");
  using detail::optional_number;
  o.tau = optional_number(j, "tau", where);
  o.lambda_p = optional_number(j, "lambda_p", where);
  o.lambda_q = optional_number(j, "lambda_q", where);
  o.kpv = optional_number(j, "kpv", where);
  o.kiv = optional_number(j, "kiv", where);
  o.v_set = optional_number(j, "v_set", where);
  o.p_set = optional_number(j, "p_set", where);
  o.q_set = optional_number(j, "q_set", where);
  o.x_f = optional_number(j, "x_f", where);
  return o;
}

nlohmann::json overrides_to_json(const GfmOverrides& o) {
  nlohmann::json j = nlohmann::json::object();
  auto put = [&](const char* k, const std::optional<double>& v) {
    if (v) j[k] = *v;
  };
  put("tau", o.tau);
  put("lambda_p", o.lambda_p);
  put("lambda_q", o.lambda_q);
  put("kpv", o.kpv);
  put("kiv", o.kiv);
  put("v_set", o.v_set);
  put("p_set", o.p_set);
  put("q_set", o.q_set);
  put("x_f", o.x_f);
  if (j.empty()) return "default";
  return j;
}

int hop_distance(const Network& net, int from, int to) {
  std::map<int, std::vector<int>> adj;
  for (const auto& br : net.branches) {
    adj[br.from].push_back(br.to);
    adj[br.to].push_back(br.from);
  }
  std::map<int, int> dist{{from, 0}};
  std::deque<int> queue{from};
  while (!queue.empty()) {
    const int b = queue.front();
    queue.pop_front();
    if (b == to) return dist[b];
    for (int nb : adj[b]) {
      if (dist.emplace(nb, dist[b] + 1).second) queue.push_back(nb);
    }
  }
  return -1;
}

struct StageFailure {
  std::string stage;
  std::string kind;
  std::string message;
};

template <typename F>
void stage(const std::string& name, F&& fn) {
  try {
    fn();
  } catch (const ValidationError& e) {
    throw StageFailure{name, "validation", e.what()};
  } catch (const ParseError& e) {
    throw StageFailure{name, "validation", e.what()};
  } catch (const ConvergenceError& e) {
    throw StageFailure{name, "convergence", e.what()};
  } catch (const SingularMatrixError& e) {
    throw StageFailure{name, name == "powerflow" ? "convergence" : "pipeline", e.what()};
  } catch (const std::exception& e) {
    throw StageFailure{name, "pipeline", e.what()};
  }
}

void run_case(const Network& net, const MachineSet& ms, const ScenarioSpec& spec, CaseResult& c) {
  const auto& o = spec.options;
  const std::string p = c.label + "/";
  PowerFlowSolution pf;
  stage(p + "powerflow", [&] {
    PowerFlowOptions opts;
    opts.tol = o.tol;
    opts.max_iter = o.max_iter;
    opts.lossless = o.lossless;
    pf = solve_power_flow(net, ms, opts);
    const auto s = static_cast<Eigen::Index>(net.slack_index());
    c.slack_p = pf.p_inj(s) + net.buses[static_cast<std::size_t>(s)].load_p;
  });
  stage(p + "init", [&] {
    c.op = init_dynamic_states(net, ms, pf, o.tol);
    c.equilibrium = check_equilibrium(net, ms, *c.op);
  });
  stage(p + "linearize", [&] { c.sys = build_jacobians(net, ms, *c.op, o.lossless); });
  stage(p + "kron_reduce", [&] { c.lap = kron_reduce(*c.sys); });
  stage(p + "lemma1", [&] { c.lemma1 = lemma1_check(c.lap->l); });
  stage(p + "slow_eigensolve", [&] { c.sub = slow_eigensolve(*c.lap, spec.areas_r); });
  stage(p + "group_machines", [&] {
    c.part = group_machines(*c.sub);
    c.eps = epsilon_decompose(c.lap->l, *c.part);
  });
  stage(p + "mode_shapes", [&] {
    const auto sm = full_state_matrix(*c.sys, ms, *c.lap);
    c.low_modes = oscillatory_modes(sm, kLowModeCeilingHz, c.sub->eigenvalues);
    for (const auto& m : c.low_modes) {
      if (m.freq_hz >= spec.band_lo_hz && m.freq_hz <= spec.band_hi_hz) c.band_modes.push_back(m);
    }
  });
}

void fill_machine_labels(const MachineSet& ms, const std::map<int, int>& gfm_replaces, CaseResult& c) {
  for (const auto& s : ms.sgs) {
    c.machine_bus.push_back(s.bus);
    c.replaces.push_back(0);
  }
  for (const auto& g : ms.gfms) {
    c.machine_bus.push_back(g.bus);
    auto it = gfm_replaces.find(g.bus);
    c.replaces.push_back(it == gfm_replaces.end() ? 0 : it->second);
  }
}

std::vector<std::complex<double>> mapped_components(const ModeShape& m, const std::vector<std::size_t>& row_map) {
  std::vector<std::complex<double>> out;
  out.reserve(row_map.size());
  for (auto r : row_map) out.push_back(m.components[r]);
  return out;
}

void track_modes(ScenarioReport& rep, const std::set<std::size_t>& retired_rows) {
  const auto& base = rep.base;
  const auto& scen = *rep.scenario;
  struct Cand {
    double mac;
    std::size_t b, s;
  };
  std::vector<Cand> cands;
  for (std::size_t b = 0; b < base.band_modes.size(); ++b) {
    for (std::size_t s = 0; s < scen.low_modes.size(); ++s) {
      cands.push_back({modal_assurance(base.band_modes[b].components,
                                       mapped_components(scen.low_modes[s], rep.row_map)),
                       b, s});
    }
  }
  std::stable_sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) { return x.mac > y.mac; });
  rep.tracking.resize(base.band_modes.size());
  std::set<std::size_t> used_b, used_s;
  for (const auto& c : cands) {
    if (used_b.count(c.b) || used_s.count(c.s)) continue;
    used_b.insert(c.b);
    used_s.insert(c.s);
    auto& t = rep.tracking[c.b];
    t.scen_index = c.s;
    t.scen_freq_hz = scen.low_modes[c.s].freq_hz;
    t.mac = c.mac;
  }
  double best = -1.0;
  std::size_t best_b = 0;
  for (std::size_t b = 0; b < base.band_modes.size(); ++b) {
    auto& t = rep.tracking[b];
    t.base_index = b;
    t.base_freq_hz = base.band_modes[b].freq_hz;
    double part = 0.0;
    for (auto r : retired_rows) part += base.band_modes[b].participation[r];
    if (part > best) {
      best = part;
      best_b = b;
    }
  }
  if (!rep.tracking.empty() && !retired_rows.empty()) rep.tracking[best_b].gfm_sensitive = true;
}

void match_areas(ScenarioReport& rep) {
  const auto& bp = *rep.base.part;
  const auto& sp = *rep.scenario->part;
  const int r = bp.areas();
  std::vector<std::vector<int>> overlap(static_cast<std::size_t>(sp.areas()), std::vector<int>(static_cast<std::size_t>(r), 0));
  for (std::size_t i = 0; i < rep.row_map.size(); ++i) {
    overlap[static_cast<std::size_t>(sp.assignment[rep.row_map[i]])][static_cast<std::size_t>(bp.assignment[i])]++;
  }
  struct Cand {
    int count, s, b;
  };
  std::vector<Cand> cands;
  for (int s = 0; s < sp.areas(); ++s)
    for (int b = 0; b < r; ++b) cands.push_back({overlap[static_cast<std::size_t>(s)][static_cast<std::size_t>(b)], s, b});
  std::stable_sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) { return x.count > y.count; });
  rep.area_match.assign(static_cast<std::size_t>(sp.areas()), -1);
  std::set<int> used_b;
  for (const auto& c : cands) {
    if (rep.area_match[static_cast<std::size_t>(c.s)] >= 0 || used_b.count(c.b)) continue;
    rep.area_match[static_cast<std::size_t>(c.s)] = c.b;
    used_b.insert(c.b);
  }
  for (std::size_t i = 0; i < rep.row_map.size(); ++i) {
    const int matched = rep.area_match[static_cast<std::size_t>(sp.assignment[rep.row_map[i]])];
    if (matched != bp.assignment[i]) rep.flipped_machines.push_back(rep.base.machine_bus[i]);
  }
  std::sort(rep.flipped_machines.begin(), rep.flipped_machines.end());
}

}  // namespace

ScenarioSpec scenario_from_json(const nlohmann::json& doc) {
  using namespace detail;
  const std::string root = "scenario";
  ScenarioSpec s;
  s.name = string(doc, "name", root);
  const auto& reps = array(doc, "replacements", root);
  for (std::size_t i = 0; i < reps.size(); ++i) {
    const auto where = indexed(root, "replacements", i);
    Replacement r;
    r.retire_sg_bus = integer(reps[i], "retire_sg_bus", where);
    r.gfm_bus = integer(reps[i], "gfm_bus", where);
    if (reps[i].contains("gfm_params")) r.params = overrides_from_json(reps[i]["gfm_params"], where + ".gfm_params");
    s.replacements.push_back(r);
  }
  s.areas_r = integer(doc, "areas_r", root);
  if (doc.contains("band_hz")) {
    const auto& band = require(doc, "band_hz", root);
    s.band_lo_hz = number(band, "lo", root + ".band_hz");
    s.band_hi_hz = number(band, "hi", root + ".band_hz");
  }
  if (doc.contains("options")) {
    const auto& opt = require(doc, "options", root);
    const std::string w = root + ".options";
    if (opt.contains("lossless")) {
      if (!opt["lossless"].is_boolean()) throw ParseError(w + ".lossless: expected a boolean");
      s.options.lossless = opt["lossless"].get<bool>();
    }
    s.options.tol = number_or(opt, "tol", s.options.tol, w);
    if (opt.contains("max_iter")) s.options.max_iter = integer(opt, "max_iter", w);
  }
  return s;
}

nlohmann::json to_json(const ScenarioSpec& spec) {
  nlohmann::json reps = nlohmann::json::array();
  for (const auto& r : spec.replacements) {
    reps.push_back({{"retire_sg_bus", r.retire_sg_bus}, {"gfm_bus", r.gfm_bus}, {"gfm_params", overrides_to_json(r.params)}});
  }
  return {{"name", spec.name},
          {"replacements", reps},
          {"areas_r", spec.areas_r},
          {"band_hz", {{"lo", spec.band_lo_hz}, {"hi", spec.band_hi_hz}}},
          {"options", {{"lossless", spec.options.lossless}, {"tol", spec.options.tol}, {"max_iter", spec.options.max_iter}}}};
}

ScenarioSpec load_scenario(const std::filesystem::path& path) {
  const auto doc = detail::read_json_file(path);
  try {
    return scenario_from_json(doc);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

AppliedScenario apply_scenario(const Network& base_net, const MachineSet& base_machines, const ScenarioSpec& spec) {
  AppliedScenario out{base_net, base_machines, {}};
  if (spec.replacements.empty()) return out;

  std::vector<std::string> v;
  std::set<int> retire, target;
  for (const auto& r : spec.replacements) {
    const std::string tag = "replacement " + std::to_string(r.retire_sg_bus) + "->" + std::to_string(r.gfm_bus);
    if (!base_machines.sg_at(r.retire_sg_bus)) v.push_back(tag + ": bus " + std::to_string(r.retire_sg_bus) + " hosts no SG");
    if (!base_net.has_bus(r.gfm_bus)) {
      v.push_back(tag + ": bus " + std::to_string(r.gfm_bus) + " does not exist");
    } else if (base_machines.sg_at(r.gfm_bus) || base_machines.gfm_at(r.gfm_bus)) {
      v.push_back(tag + ": bus " + std::to_string(r.gfm_bus) + " already hosts a machine");
    }
    if (!retire.insert(r.retire_sg_bus).second) v.push_back(tag + ": bus " + std::to_string(r.retire_sg_bus) + " retired twice");
    if (!target.insert(r.gfm_bus).second) v.push_back(tag + ": bus " + std::to_string(r.gfm_bus) + " targeted twice");
    if (base_net.has_bus(r.retire_sg_bus) &&
        base_net.buses[base_net.index_of(r.retire_sg_bus)].kind == BusKind::Slack) {
      v.push_back(tag + ": the slack machine cannot be retired");
    }
  }
  if (!v.empty()) throw ValidationError(std::move(v));

  std::optional<PowerFlowSolution> base_pf;
  auto pf = [&]() -> const PowerFlowSolution& {
    if (!base_pf) {
      PowerFlowOptions opts;
      opts.tol = spec.options.tol;
      opts.max_iter = spec.options.max_iter;
      opts.lossless = spec.options.lossless;
      base_pf = solve_power_flow(base_net, base_machines, opts);
    }
    return *base_pf;
  };

  for (const auto& r : spec.replacements) {
    const auto& sg = *base_machines.sg_at(r.retire_sg_bus);
    const auto ri = static_cast<Eigen::Index>(base_net.index_of(r.retire_sg_bus));
    const auto gi = static_cast<Eigen::Index>(base_net.index_of(r.gfm_bus));
    GridFormingInverter g;
    g.bus = r.gfm_bus;
    g.tau = r.params.tau.value_or(0.05);
    g.lambda_p = r.params.lambda_p.value_or(0.05);
    g.lambda_q = r.params.lambda_q.value_or(0.05);
    g.kpv = r.params.kpv.value_or(0.5);
    g.kiv = r.params.kiv.value_or(20.0);
    g.p_set = r.params.p_set.value_or(sg.p_set);
    g.x_f = r.params.x_f.value_or(sg.xd_prime);
    g.v_set = r.params.v_set ? *r.params.v_set : pf().v_mag(gi);
    g.q_set = r.params.q_set ? *r.params.q_set
                             : pf().q_inj(ri) + base_net.buses[static_cast<std::size_t>(ri)].load_q;

    auto& sgs = out.machines.sgs;
    sgs.erase(std::remove_if(sgs.begin(), sgs.end(), [&](const SynchronousMachine& s) { return s.bus == r.retire_sg_bus; }),
              sgs.end());
    out.machines.gfms.push_back(g);

    auto& rb = out.net.buses[static_cast<std::size_t>(ri)];
    rb.kind = BusKind::PQ;
    rb.v_setpoint.reset();
    auto& gb = out.net.buses[static_cast<std::size_t>(gi)];
    gb.kind = BusKind::PV;
    gb.v_setpoint = g.v_set;

    const int hops = hop_distance(base_net, r.retire_sg_bus, r.gfm_bus);
    if (hops > 2) {
      out.warnings.push_back("gfm bus " + std::to_string(r.gfm_bus) + " is " + std::to_string(hops) +
                             " branches from retired bus " + std::to_string(r.retire_sg_bus));
    }
  }
  validate(out.net);
  validate(out.machines, out.net);
  return out;
}

ScenarioReport run_pipeline(const BaseCase& base, const ScenarioSpec& spec) {
  ScenarioReport rep;
  rep.spec = spec;
  rep.base.label = "base";
  fill_machine_labels(base.machines, {}, rep.base);
  const double load_mw = base.net.total_load_p() * base.net.base_mva;
  rep.injection.total_load_mw = load_mw;

  try {
    run_case(base.net, base.machines, spec, rep.base);
    if (!spec.replacements.empty()) {
      AppliedScenario applied;
      stage("apply_scenario", [&] { applied = apply_scenario(base.net, base.machines, spec); });
      rep.warnings = applied.warnings;
      std::map<int, int> gfm_replaces, retired_to_gfm;
      for (const auto& r : spec.replacements) {
        gfm_replaces[r.gfm_bus] = r.retire_sg_bus;
        retired_to_gfm[r.retire_sg_bus] = r.gfm_bus;
      }
      for (const auto& g : applied.machines.gfms) rep.injection.gfm_total_mw += g.p_set * base.net.base_mva;
      rep.injection.pct_of_load = load_mw > 0.0 ? 100.0 * rep.injection.gfm_total_mw / load_mw : 0.0;

      rep.scenario.emplace();
      rep.scenario->label = spec.name;
      fill_machine_labels(applied.machines, gfm_replaces, *rep.scenario);
      run_case(applied.net, applied.machines, spec, *rep.scenario);

      stage("compare_subspaces", [&] {
        std::map<int, std::size_t> scen_row;
        for (std::size_t k = 0; k < rep.scenario->machine_bus.size(); ++k) scen_row[rep.scenario->machine_bus[k]] = k;
        std::set<std::size_t> retired_rows;
        for (std::size_t i = 0; i < rep.base.machine_bus.size(); ++i) {
          int bus = rep.base.machine_bus[i];
          if (auto it = retired_to_gfm.find(bus); it != retired_to_gfm.end()) {
            bus = it->second;
            retired_rows.insert(i);
          }
          auto it = scen_row.find(bus);
          if (it == scen_row.end()) throw PreconditionError("no scenario row for base machine at bus " + std::to_string(bus));
          rep.row_map.push_back(it->second);
        }
        if (rep.row_map.size() != rep.scenario->machine_bus.size()) {
          throw PreconditionError("base and scenario machine counts differ");
        }
        rep.comparison = compare_subspaces({*rep.base.sub, *rep.base.part, rep.base.lap->l},
                                           {*rep.scenario->sub, *rep.scenario->part, rep.scenario->lap->l}, rep.row_map);
        track_modes(rep, retired_rows);
        match_areas(rep);
      });
    }
    rep.ok = true;
  } catch (const StageFailure& f) {
    rep.ok = false;
    rep.failed_stage = f.stage;
    rep.error_kind = f.kind;
    rep.error = f.message;
  }
  return rep;
}

std::vector<ScenarioReport> batch_run(const BaseCase& base, const std::vector<ScenarioSpec>& specs, unsigned max_threads) {
  std::vector<ScenarioReport> out(specs.size());
  if (specs.empty()) return out;
  unsigned threads = max_threads;
  if (threads == 0) {
    threads = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("COHERENCE_LAB_THREADS")) {
      const int cap = std::atoi(env);
      if (cap > 0) threads = std::min(threads, static_cast<unsigned>(cap));
    }
  }
  threads = std::min<unsigned>(threads, static_cast<unsigned>(specs.size()));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < specs.size(); i = next++) {
      try {
        out[i] = run_pipeline(base, specs[i]);
      } catch (const std::exception& e) {
        out[i].spec = specs[i];
        out[i].ok = false;
        out[i].failed_stage = "pipeline";
        out[i].error_kind = "pipeline";
        out[i].error = e.what();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return out;
}

}  // namespace coherence
