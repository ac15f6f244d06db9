#include "coherence/powerflow.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "coherence/errors.hpp"
#include "json_util.hpp"

namespace coherence {

using cd = std::complex<double>;

const SynchronousMachine* MachineSet::sg_at(int bus) const noexcept {
  for (const auto& s : sgs)
    if (s.bus == bus) return &s;
  return nullptr;
}

const GridFormingInverter* MachineSet::gfm_at(int bus) const noexcept {
  for (const auto& g : gfms)
    if (g.bus == bus) return &g;
  return nullptr;
}

double MachineSet::total_p_set() const noexcept {
  double total = 0.0;
  for (const auto& s : sgs) total += s.p_set;
  for (const auto& g : gfms) total += g.p_set;
  return total;
}

MachineSet machines_from_json(const nlohmann::json& doc) {
  using namespace detail;
  const std::string root = "machines";
  MachineSet ms;
  const auto& sgs = array(doc, "sgs", root);
  for (std::size_t i = 0; i < sgs.size(); ++i) {
    const auto where = indexed(root, "sgs", i);
    SynchronousMachine s;
    s.bus = integer(sgs[i], "bus", where);
    s.m = number(sgs[i], "m", where);
    s.d = number_or(sgs[i], "d", 0.0, where);
    s.xd_prime = number(sgs[i], "xd_prime", where);
    s.p_set = number(sgs[i], "p_set", where);
    ms.sgs.push_back(s);
  }
  if (doc.contains("gfms")) {
    const auto& gfms = array(doc, "gfms", root);
    for (std::size_t i = 0; i < gfms.size(); ++i) {
      const auto where = indexed(root, "gfms", i);
      GridFormingInverter g;
      g.bus = integer(gfms[i], "bus", where);
      g.tau = number(gfms[i], "tau", where);
      g.lambda_p = number(gfms[i], "lambda_p", where);
      g.lambda_q = number(gfms[i], "lambda_q", where);
      g.kpv = number(gfms[i], "kpv", where);
      g.kiv = number(gfms[i], "kiv", where);
      g.v_set = number(gfms[i], "v_set", where);
      g.p_set = number(gfms[i], "p_set", where);
      g.q_set = number(gfms[i], "q_set", where);
      g.x_f = number_or(gfms[i], "x_f", 0.05, where);
      ms.gfms.push_back(g);
    }
  }
  return ms;
}

nlohmann::json to_json(const MachineSet& ms) {
  nlohmann::json doc;
  doc["sgs"] = nlohmann::json::array();
  for (const auto& s : ms.sgs) {
    doc["sgs"].push_back(
        {{"bus", s.bus}, {"m", s.m}, {"d", s.d}, {"xd_prime", s.xd_prime}, {"p_set", s.p_set}});
  }
  doc["gfms"] = nlohmann::json::array();
  for (const auto& g : ms.gfms) {
    doc["gfms"].push_back({{"bus", g.bus},
                           {"tau", g.tau},
                           {"lambda_p", g.lambda_p},
                           {"lambda_q", g.lambda_q},
                           {"kpv", g.kpv},
                           {"kiv", g.kiv},
                           {"v_set", g.v_set},
                           {"p_set", g.p_set},
                           {"q_set", g.q_set},
                           {"x_f", g.x_f}});
  }
  return doc;
}

MachineSet load_machines(const std::filesystem::path& path) {
  const auto doc = detail::read_json_file(path);
  try {
    return machines_from_json(doc);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void validate(const MachineSet& ms, const Network& net) {
  std::vector<std::string> v;
  std::set<int> used;
  auto check_bus = [&](int bus, const std::string& tag) {
    if (!net.has_bus(bus)) {
      v.push_back(tag + ": bus " + std::to_string(bus) + " does not exist");
      return;
    }
    const auto kind = net.buses[net.index_of(bus)].kind;
    if (kind == BusKind::PQ) v.push_back(tag + ": bus " + std::to_string(bus) + " is pq, expected slack or pv");
    if (!used.insert(bus).second) v.push_back(tag + ": bus " + std::to_string(bus) + " already hosts a machine");
  };
  for (const auto& s : ms.sgs) {
    const std::string tag = "sg at bus " + std::to_string(s.bus);
    check_bus(s.bus, tag);
    if (!(s.m > 0.0)) v.push_back(tag + ": m must be positive");
    if (!(s.xd_prime > 0.0)) v.push_back(tag + ": xd_prime must be positive");
    if (s.d < 0.0) v.push_back(tag + ": d must be >= 0");
  }
  for (const auto& g : ms.gfms) {
    const std::string tag = "gfm at bus " + std::to_string(g.bus);
    check_bus(g.bus, tag);
    if (!(g.tau > 0.0)) v.push_back(tag + ": tau must be positive");
    if (!(g.lambda_p > 0.0)) v.push_back(tag + ": lambda_p must be positive");
    if (g.lambda_q < 0.0) v.push_back(tag + ": lambda_q must be >= 0");
    if (!(g.x_f > 0.0)) v.push_back(tag + ": x_f must be positive");
    if (!(g.v_set > 0.0)) v.push_back(tag + ": v_set must be positive");
  }
  if (ms.size() == 0) v.emplace_back("machine set is empty");
  if (!v.empty()) throw ValidationError(std::move(v));
}

Eigen::VectorXcd PowerFlowSolution::voltage() const {
  Eigen::VectorXcd v(v_mag.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = std::polar(v_mag(i), v_ang(i));
  return v;
}

double source_p(double e, double delta, double x, cd v) noexcept {
  return e / x * (v.real() * std::sin(delta) - v.imag() * std::cos(delta));
}

double source_q(double e, double delta, double x, cd v) noexcept {
  return (e * (v.real() * std::cos(delta) + v.imag() * std::sin(delta)) - std::norm(v)) / x;
}

namespace {

enum class Row { None, Pq, Droop };

}  // namespace

PowerFlowSolution solve_power_flow(const Network& net, const MachineSet& ms,
                                   const PowerFlowOptions& opts) {
  const auto n = static_cast<Eigen::Index>(net.size());
  const Eigen::MatrixXcd y = build_admittance(net, opts.lossless);
  const auto slack = static_cast<Eigen::Index>(net.slack_index());

  Eigen::VectorXd p_spec(n), q_spec(n), vm(n), va = Eigen::VectorXd::Zero(n);
  std::vector<Row> qrow(static_cast<std::size_t>(n), Row::None);
  std::vector<const GridFormingInverter*> droop(static_cast<std::size_t>(n), nullptr);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& b = net.buses[static_cast<std::size_t>(i)];
    double gen = 0.0;
    if (const auto* s = ms.sg_at(b.id)) gen += s->p_set;
    const auto* g = ms.gfm_at(b.id);
    if (g) gen += g->p_set;
    p_spec(i) = gen - b.load_p;
    q_spec(i) = -b.load_q;
    vm(i) = b.v_setpoint.value_or(1.0);
    if (b.kind == BusKind::PQ) qrow[static_cast<std::size_t>(i)] = Row::Pq;
    if (g && i != slack) {
      qrow[static_cast<std::size_t>(i)] = Row::Droop;
      droop[static_cast<std::size_t>(i)] = g;
      vm(i) = g->v_set;
    }
  }
  if (opts.warm_start) {
    vm = opts.warm_start->first;
    va = opts.warm_start->second;
    va(slack) = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (qrow[static_cast<std::size_t>(i)] == Row::None) vm(i) = net.buses[static_cast<std::size_t>(i)].v_setpoint.value_or(1.0);
    }
  }

  std::vector<Eigen::Index> ang_idx, mag_idx;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i != slack) ang_idx.push_back(i);
    if (qrow[static_cast<std::size_t>(i)] != Row::None) mag_idx.push_back(i);
  }
  const auto na = static_cast<Eigen::Index>(ang_idx.size());
  const auto nm = static_cast<Eigen::Index>(mag_idx.size());
  const Eigen::Index dim = na + nm;

  auto phasors = [&]() {
    Eigen::VectorXcd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = std::polar(vm(i), va(i));
    return v;
  };

  PowerFlowSolution sol;
  sol.lossless = opts.lossless;
  Eigen::VectorXd f(dim);
  for (int it = 0;; ++it) {
    const Eigen::VectorXcd v = phasors();
    const Eigen::VectorXcd ibus = y * v;
    const Eigen::VectorXcd s = v.cwiseProduct(ibus.conjugate());
    for (Eigen::Index k = 0; k < na; ++k) f(k) = s(ang_idx[k]).real() - p_spec(ang_idx[k]);
    for (Eigen::Index k = 0; k < nm; ++k) {
      const auto i = mag_idx[k];
      if (qrow[static_cast<std::size_t>(i)] == Row::Pq) {
        f(na + k) = s(i).imag() - q_spec(i);
      } else {
        const auto* g = droop[static_cast<std::size_t>(i)];
        const double q_gen = s(i).imag() - q_spec(i);
        f(na + k) = vm(i) - g->v_set - g->lambda_q * (g->q_set - q_gen);
      }
    }
    const double mis = dim ? f.cwiseAbs().maxCoeff() : 0.0;
    sol.residual_history.push_back(mis);
    if (!std::isfinite(mis)) {
      throw ConvergenceError("power flow diverged at iteration " + std::to_string(it), sol.residual_history);
    }
    if (mis <= opts.tol) {
      sol.iterations = it;
      sol.max_mismatch = mis;
      sol.v_mag = vm;
      sol.v_ang = va;
      sol.p_inj = s.real();
      sol.q_inj = s.imag();
      return sol;
    }
    if (it >= opts.max_iter) {
      throw ConvergenceError("power flow did not converge in " + std::to_string(opts.max_iter) +
                                 " iterations (mismatch " + std::to_string(mis) + " pu)",
                             sol.residual_history);
    }

    // dS/dVa = j diag(V) conj(diag(I) - Y diag(V)), dS/dVm = diag(V) conj(Y diag(V/|V|)) + conj(diag(I)) diag(V/|V|)
    Eigen::MatrixXcd ds_da = -(y * v.asDiagonal()).conjugate();
    ds_da.diagonal() += ibus.conjugate();
    ds_da = cd(0.0, 1.0) * (v.asDiagonal() * ds_da);
    const Eigen::VectorXcd vnorm = v.cwiseQuotient(vm.cast<cd>());
    Eigen::MatrixXcd ds_dm = v.asDiagonal() * (y * vnorm.asDiagonal()).conjugate();
    ds_dm.diagonal() += ibus.conjugate().cwiseProduct(vnorm);

    Eigen::MatrixXd jac(dim, dim);
    for (Eigen::Index r = 0; r < dim; ++r) {
      const bool p_row = r < na;
      const auto i = p_row ? ang_idx[r] : mag_idx[r - na];
      const bool is_droop = !p_row && qrow[static_cast<std::size_t>(i)] == Row::Droop;
      const double lq = is_droop ? droop[static_cast<std::size_t>(i)]->lambda_q : 0.0;
      for (Eigen::Index c = 0; c < dim; ++c) {
        const bool a_col = c < na;
        const auto j = a_col ? ang_idx[c] : mag_idx[c - na];
        const cd d = a_col ? ds_da(i, j) : ds_dm(i, j);
        if (p_row) {
          jac(r, c) = d.real();
        } else if (is_droop) {
          jac(r, c) = lq * d.imag() + ((!a_col && i == j) ? 1.0 : 0.0);
        } else {
          jac(r, c) = d.imag();
        }
      }
    }
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(jac);
    const double rc = lu.rcond();
    if (!(rc > 1e-14)) {
      throw SingularMatrixError("power-flow Jacobian is singular at iteration " + std::to_string(it) +
                                    " (possible islanding or voltage collapse)",
                                rc > 0.0 ? 1.0 / rc : INFINITY);
    }
    const Eigen::VectorXd dx = lu.solve(-f);
    for (Eigen::Index k = 0; k < na; ++k) va(ang_idx[k]) += dx(k);
    for (Eigen::Index k = 0; k < nm; ++k) vm(mag_idx[k]) += dx(na + k);
  }
}

OperatingPoint init_dynamic_states(const Network& net, const MachineSet& ms,
                                   const PowerFlowSolution& pf, double tol) {
  OperatingPoint op;
  op.pf = pf;
  op.omega0 = net.omega0();
  op.lossless = pf.lossless;
  const auto slack = net.slack_index();
  const double ptol = tol + pf.max_mismatch;
  std::vector<std::string> problems;

  auto internal = [&](int bus, double x, double& e, double& delta, cd& v) {
    const auto i = static_cast<Eigen::Index>(net.index_of(bus));
    const auto& b = net.buses[static_cast<std::size_t>(i)];
    v = std::polar(pf.v_mag(i), pf.v_ang(i));
    const cd s_gen(pf.p_inj(i) + b.load_p, pf.q_inj(i) + b.load_q);
    const cd cur = std::conj(s_gen / v);
    const cd eint = v + cd(0.0, x) * cur;
    e = std::abs(eint);
    delta = std::arg(eint);
    return static_cast<std::size_t>(i);
  };

  for (const auto& s : ms.sgs) {
    SgState st;
    st.bus = s.bus;
    st.omega = op.omega0;
    cd v;
    const auto i = internal(s.bus, s.xd_prime, st.e_emf, st.delta, v);
    if (!(st.e_emf > 0.0)) problems.push_back("sg at bus " + std::to_string(s.bus) + ": non-positive internal EMF");
    st.p_mech = source_p(st.e_emf, st.delta, s.xd_prime, v);
    if (i != slack && std::abs(st.p_mech - s.p_set) > ptol) {
      problems.push_back("sg at bus " + std::to_string(s.bus) + ": electrical power " + std::to_string(st.p_mech) +
                         " differs from p_set " + std::to_string(s.p_set));
    }
    op.sg_states.push_back(st);
  }
  for (const auto& g : ms.gfms) {
    GfmState st;
    st.bus = g.bus;
    st.omega = op.omega0;
    cd v;
    const auto i = internal(g.bus, g.x_f, st.e_internal, st.delta, v);
    if (!(st.e_internal > 0.0)) problems.push_back("gfm at bus " + std::to_string(g.bus) + ": non-positive internal EMF");
    const double pn = source_p(st.e_internal, st.delta, g.x_f, v);
    const double qn = source_q(st.e_internal, st.delta, g.x_f, v);
    // References take the solved output so the droop loops start at rest;
    // away from the slack they differ from the set-points by the power-flow
    // tolerance only.
    st.v_e = 0.0;
    st.q_ref = g.q_set;
    st.p_ref = pn;
    st.v_ref = std::abs(v) - g.lambda_q * (g.q_set - qn);
    if (i != slack && std::abs(pn - g.p_set) > ptol) {
      problems.push_back("gfm at bus " + std::to_string(g.bus) + ": electrical power " + std::to_string(pn) +
                         " differs from p_set " + std::to_string(g.p_set));
    }
    op.gfm_states.push_back(st);
  }
  if (!problems.empty()) throw ValidationError(std::move(problems));
  return op;
}

double EquilibriumReport::max() const noexcept {
  double m = 0.0;
  for (const auto& [k, v] : max_abs) m = std::max(m, v);
  return m;
}

EquilibriumReport check_equilibrium(const Network& net, const MachineSet& ms, const OperatingPoint& op) {
  EquilibriumReport rep;
  for (const char* fam : {"1a", "1b", "2a", "2b", "2c", "2d", "3p", "3q"}) rep.max_abs[fam] = 0.0;
  auto bump = [&](const char* fam, double val) {
    rep.max_abs[fam] = std::max(rep.max_abs[fam], std::abs(val));
  };
  const double w0 = op.omega0;
  const Eigen::VectorXcd v = op.pf.voltage();
  const auto n = v.size();
  Eigen::VectorXcd s_gen = Eigen::VectorXcd::Zero(n);

  rep.sg_swing.resize(static_cast<Eigen::Index>(ms.sgs.size()));
  for (std::size_t k = 0; k < ms.sgs.size(); ++k) {
    const auto& s = ms.sgs[k];
    const auto& st = op.sg_states[k];
    const auto i = static_cast<Eigen::Index>(net.index_of(s.bus));
    const double pe = source_p(st.e_emf, st.delta, s.xd_prime, v(i));
    const double qe = source_q(st.e_emf, st.delta, s.xd_prime, v(i));
    s_gen(i) += cd(pe, qe);
    bump("1a", st.omega - w0);
    const double rhs = (s.d / w0 * (w0 - st.omega) + st.p_mech - pe) / (s.m / w0);
    rep.sg_swing(static_cast<Eigen::Index>(k)) = rhs;
    bump("1b", rhs);
  }
  for (std::size_t k = 0; k < ms.gfms.size(); ++k) {
    const auto& g = ms.gfms[k];
    const auto& st = op.gfm_states[k];
    const auto i = static_cast<Eigen::Index>(net.index_of(g.bus));
    const double pn = source_p(st.e_internal, st.delta, g.x_f, v(i));
    const double qn = source_q(st.e_internal, st.delta, g.x_f, v(i));
    s_gen(i) += cd(pn, qn);
    bump("2a", st.omega - w0);
    bump("2b", (w0 - st.omega + g.lambda_p * w0 * (st.p_ref - pn)) / g.tau);
    const double ve_dot = (st.v_ref - st.v_e - std::abs(v(i)) + g.lambda_q * (st.q_ref - qn)) / g.tau;
    bump("2c", ve_dot);
    bump("2d", g.kpv * ve_dot + g.kiv * st.v_e);
  }
  const Eigen::MatrixXcd y = build_admittance(net, op.lossless);
  const Eigen::VectorXcd s_flow = v.cwiseProduct((y * v).conjugate());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& b = net.buses[static_cast<std::size_t>(i)];
    bump("3p", s_gen(i).real() - b.load_p - s_flow(i).real());
    bump("3q", s_gen(i).imag() - b.load_q - s_flow(i).imag());
  }
  return rep;
}

nlohmann::json to_json(const PowerFlowSolution& pf) {
  auto vec = [](const Eigen::VectorXd& x) { return std::vector<double>(x.data(), x.data() + x.size()); };
  return {{"v_mag", vec(pf.v_mag)},
          {"v_ang", vec(pf.v_ang)},
          {"p_inj", vec(pf.p_inj)},
          {"q_inj", vec(pf.q_inj)},
          {"iterations", pf.iterations},
          {"max_mismatch", pf.max_mismatch},
          {"residual_history", pf.residual_history},
          {"lossless", pf.lossless}};
}

}  // namespace coherence
