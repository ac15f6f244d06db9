#pragma once

// Test-side fixtures and independent oracles shared by the unit and
// acceptance binaries.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "coherence/linearize.hpp"
#include "coherence/network.hpp"
#include "coherence/powerflow.hpp"
#include "coherence/scenario.hpp"

namespace testsys {

using namespace coherence;
using cd = std::complex<double>;

inline std::string data_path(const std::string& rel) { return std::string(COHERENCE_DATA_DIR) + "/" + rel; }
inline std::string fixture_path(const std::string& rel) { return std::string(COHERENCE_FIXTURE_DIR) + "/" + rel; }

inline BaseCase ieee68() {
  return {load_network(data_path("ieee68/network.json")), load_machines(data_path("ieee68/machines.json"))};
}

inline ScenarioSpec ieee68_scenario(const std::string& name) {
  return load_scenario(data_path("ieee68/scenarios/" + name + ".json"));
}

/// Random meshed system: machine buses 1..n_machines (bus 1 slack), load
/// buses after them, every machine tied to one load bus. With `n_gfm` > 0
/// the last machine buses host GFMs.
inline BaseCase random_system(unsigned seed, int n_machines, int n_gfm = 0) {
  std::mt19937 rng(seed);
  auto uni = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  auto pick = [&](int a, int b) { return std::uniform_int_distribution<int>(a, b)(rng); };

  const int n_load = n_machines + pick(1, 4);
  const int n_bus = n_machines + n_load;
  BaseCase c;
  c.net.base_mva = 100.0;
  c.net.f0_hz = 60.0;
  double total_load = 0.0;
  for (int id = 1; id <= n_bus; ++id) {
    Bus b;
    b.id = id;
    if (id == 1) {
      b.kind = BusKind::Slack;
      b.v_setpoint = uni(1.0, 1.04);
    } else if (id <= n_machines) {
      b.kind = BusKind::PV;
      b.v_setpoint = uni(1.0, 1.04);
    } else {
      b.kind = BusKind::PQ;
      b.load_p = uni(0.5, 2.0);
      b.load_q = uni(0.05, 0.3) * b.load_p;
      b.shunt_b = uni(0.0, 0.05);
      total_load += b.load_p;
    }
    c.net.buses.push_back(b);
  }
  auto add_branch = [&](int f, int t, double xlo, double xhi) {
    Branch br;
    br.from = f;
    br.to = t;
    br.x = uni(xlo, xhi);
    br.r = uni(0.0, 0.1) * br.x;
    br.b_charging = uni(0.0, 0.1);
    br.tap = pick(0, 3) == 0 ? uni(0.97, 1.03) : 1.0;
    c.net.branches.push_back(br);
  };
  for (int k = 1; k < n_load; ++k) add_branch(n_machines + 1 + pick(0, k - 1), n_machines + 1 + k, 0.02, 0.06);
  for (int k = 0; k < n_load / 2; ++k) {
    const int a = n_machines + 1 + pick(0, n_load - 1), b = n_machines + 1 + pick(0, n_load - 1);
    if (a != b) add_branch(a, b, 0.03, 0.08);
  }
  for (int id = 1; id <= n_machines; ++id) add_branch(id, n_machines + 1 + pick(0, n_load - 1), 0.01, 0.03);

  const double share = total_load / n_machines;
  for (int id = 1; id <= n_machines; ++id) {
    const double p = share * uni(0.7, 1.2);
    if (id > n_machines - n_gfm && id != 1) {
      GridFormingInverter g;
      g.bus = id;
      g.tau = uni(0.03, 0.1);
      g.lambda_p = uni(0.03, 0.08);
      g.lambda_q = uni(0.02, 0.08);
      g.kpv = uni(0.2, 1.0);
      g.kiv = uni(5.0, 30.0);
      g.v_set = c.net.buses[static_cast<std::size_t>(id - 1)].v_setpoint.value_or(1.0);
      g.p_set = p;
      g.q_set = uni(0.0, 0.3);
      g.x_f = uni(0.03, 0.1);
      c.machines.gfms.push_back(g);
    } else {
      SynchronousMachine s;
      s.bus = id;
      s.m = uni(20.0, 90.0);
      s.d = uni(1.0, 10.0);
      s.xd_prime = uni(0.05, 0.3);
      s.p_set = p;
      c.machines.sgs.push_back(s);
    }
  }
  return c;
}

/// Power flow, initialization and linearization in one call.
struct Linearized {
  OperatingPoint op;
  LinearizedSystem sys;
  LaplacianPair lap;
};

inline Linearized linearize_case(const BaseCase& c, bool lossless = true) {
  PowerFlowOptions o;
  o.lossless = lossless;
  const auto pf = solve_power_flow(c.net, c.machines, o);
  Linearized out{init_dynamic_states(c.net, c.machines, pf), {}, {}};
  out.sys = build_jacobians(c.net, c.machines, out.op, lossless);
  out.lap = kron_reduce(out.sys);
  return out;
}

/// Lossless internal-node susceptance by a direct Schur complement of the
/// extended admittance matrix [internal nodes; buses]. Built from the branch
/// list without the library's admittance assembly.
inline Eigen::MatrixXd oracle_internal_susceptance(const Network& net, const MachineSet& ms,
                                                   const OperatingPoint& op) {
  const auto nb = static_cast<Eigen::Index>(net.size());
  std::vector<std::pair<int, double>> src;  // bus id, reactance
  for (const auto& s : ms.sgs) src.emplace_back(s.bus, s.xd_prime);
  for (const auto& g : ms.gfms) src.emplace_back(g.bus, g.x_f);
  const auto n = static_cast<Eigen::Index>(src.size());
  Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n + nb, n + nb);
  auto row = [&](int bus) { return n + static_cast<Eigen::Index>(net.index_of(bus)); };
  for (const auto& br : net.branches) {
    const cd ys = 1.0 / cd(0.0, br.x);
    const cd half = cd(0.0, br.b_charging / 2.0);
    const double t = br.tap;
    const auto f = row(br.from), k = row(br.to);
    y(f, f) += (ys + half) / (t * t);
    y(k, k) += ys + half;
    y(f, k) -= ys / t;
    y(k, f) -= ys / t;
  }
  for (Eigen::Index i = 0; i < nb; ++i) {
    const auto& b = net.buses[static_cast<std::size_t>(i)];
    const double v2 = op.pf.v_mag(i) * op.pf.v_mag(i);
    y(n + i, n + i) += cd(0.0, b.shunt_b) - cd(0.0, b.load_q / v2);
  }
  for (Eigen::Index k = 0; k < n; ++k) {
    const cd yx = 1.0 / cd(0.0, src[static_cast<std::size_t>(k)].second);
    const auto b = row(src[static_cast<std::size_t>(k)].first);
    y(k, k) += yx;
    y(b, b) += yx;
    y(k, b) -= yx;
    y(b, k) -= yx;
  }
  const Eigen::MatrixXcd red =
      y.topLeftCorner(n, n) - y.topRightCorner(n, nb) * y.bottomRightCorner(nb, nb).fullPivLu().solve(
                                                            y.bottomLeftCorner(nb, n));
  return red.imag();
}

/// Laplacian from internal susceptances, built entry by entry.
inline Eigen::MatrixXd oracle_laplacian(const Eigen::VectorXd& e, const Eigen::VectorXd& delta,
                                        const Eigen::MatrixXd& b) {
  const auto n = e.size();
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      l(i, j) = e(i) * e(j) * b(i, j) * std::cos(delta(i) - delta(j));
      l(i, i) -= l(i, j);
    }
  }
  return l;
}

/// Central-difference Jacobian of f at x.
inline Eigen::MatrixXd central_diff(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                    const Eigen::VectorXd& x, double h = 1e-6) {
  const Eigen::VectorXd f0 = f(x);
  Eigen::MatrixXd j(f0.size(), x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    Eigen::VectorXd xp = x, xm = x;
    xp(k) += h;
    xm(k) -= h;
    j.col(k) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return j;
}

/// Max entrywise error relative to the larger of the block's max entry and 1.
inline double rel_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.size() == 0 && b.size() == 0) return 0.0;
  const double scale = std::max({1.0, a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff()});
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

/// Every Jacobian block against central differences of the DAE residuals.
/// Returns the worst relative error and names the block.
struct BlockCheck {
  double worst = 0.0;
  std::string block;
};

inline BlockCheck check_blocks_fd(const BaseCase& c, const Linearized& lin, bool lossless = true) {
  const DaeModel dae = make_dae_model(c.net, c.machines, lin.op, lossless);
  const auto& s = lin.sys;
  const auto ns = static_cast<Eigen::Index>(s.n_sg), nf = static_cast<Eigen::Index>(s.n_gfm);
  const Eigen::VectorXd d0 = s.delta0, v0 = s.v0, e0 = s.e0;
  auto with_gfm_e = [&](const Eigen::VectorXd& ef) {
    Eigen::VectorXd e = e0;
    e.tail(nf) = ef;
    return e;
  };
  const Eigen::MatrixXd f_d = central_diff([&](const Eigen::VectorXd& d) { return dae.freq_residual(d, v0, e0); }, d0);
  const Eigen::MatrixXd f_v = central_diff([&](const Eigen::VectorXd& v) { return dae.freq_residual(d0, v, e0); }, v0);
  const Eigen::MatrixXd g_d = central_diff([&](const Eigen::VectorXd& d) { return dae.alg_residual(d, v0, e0); }, d0);
  const Eigen::MatrixXd g_v = central_diff([&](const Eigen::VectorXd& v) { return dae.alg_residual(d0, v, e0); }, v0);
  BlockCheck out;
  auto cmp = [&](const std::string& name, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    const double err = rel_error(a, b);
    if (err >= out.worst) out = {err, name};
  };
  cmp("A11", s.a11, f_d.topLeftCorner(ns, ns));
  cmp("A12", s.a12, f_v.topRows(ns));
  cmp("A31", s.a31, g_d.leftCols(ns));
  cmp("A33", s.a33, g_v);
  if (nf > 0) {
    const Eigen::VectorXd ef0 = e0.tail(nf);
    const Eigen::MatrixXd f_e =
        central_diff([&](const Eigen::VectorXd& ef) { return dae.freq_residual(d0, v0, with_gfm_e(ef)); }, ef0);
    const Eigen::MatrixXd g_e =
        central_diff([&](const Eigen::VectorXd& ef) { return dae.alg_residual(d0, v0, with_gfm_e(ef)); }, ef0);
    cmp("A21", s.a21, f_d.bottomRightCorner(nf, nf));
    cmp("A22", s.a22, f_v.bottomRows(nf));
    cmp("A23", s.a23, f_e.bottomRows(nf));
    cmp("A32", s.a32, g_d.rightCols(nf));
    cmp("A34", s.a34, g_e);
    cmp("C_delta", s.c_delta,
        central_diff([&](const Eigen::VectorXd& d) { return dae.volt_residual(d, v0, e0); }, d0));
    cmp("C_v", s.c_v, central_diff([&](const Eigen::VectorXd& v) { return dae.volt_residual(d0, v, e0); }, v0));
    cmp("C_e", s.c_e,
        central_diff([&](const Eigen::VectorXd& ef) { return dae.volt_residual(d0, v0, with_gfm_e(ef)); }, ef0));
  }
  return out;
}

/// Random connected weighted Laplacian with the sign convention of L
/// (positive couplings off the diagonal, rows summing to zero).
inline Eigen::MatrixXd random_laplacian(std::mt19937& rng, int n, double density = 0.6) {
  std::uniform_real_distribution<double> w(0.5, 5.0), u(0.0, 1.0);
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  auto link = [&](int i, int j, double k) {
    l(i, j) += k;
    l(j, i) += k;
    l(i, i) -= k;
    l(j, j) -= k;
  };
  for (int i = 1; i < n; ++i) link(i, std::uniform_int_distribution<int>(0, i - 1)(rng), w(rng));
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (u(rng) < density * 0.5) link(i, j, w(rng));
  return l;
}

}  // namespace testsys
