#include "coherence/linearize.hpp"

#include <cmath>

#include "coherence/errors.hpp"

namespace coherence {

using cd = std::complex<double>;

std::size_t DaeModel::n_sg() const noexcept {
  std::size_t c = 0;
  for (const auto& m : machines) c += m.is_gfm ? 0 : 1;
  return c;
}

std::size_t DaeModel::n_gfm() const noexcept { return machines.size() - n_sg(); }

namespace {

cd bus_voltage(const Eigen::VectorXd& v, Eigen::Index n_bus, Eigen::Index b) { return {v(b), v(n_bus + b)}; }

}  // namespace

Eigen::VectorXd DaeModel::freq_residual(const Eigen::VectorXd& delta, const Eigen::VectorXd& v,
                                        const Eigen::VectorXd& e) const {
  const auto n = static_cast<Eigen::Index>(machines.size());
  Eigen::VectorXd out(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    out(k) = -source_p(e(k), delta(k), x(k), bus_voltage(v, n_bus, bus_row[static_cast<std::size_t>(k)]));
  }
  return out;
}

Eigen::VectorXd DaeModel::alg_residual(const Eigen::VectorXd& delta, const Eigen::VectorXd& v,
                                       const Eigen::VectorXd& e) const {
  Eigen::VectorXcd vc(n_bus);
  for (Eigen::Index b = 0; b < n_bus; ++b) vc(b) = bus_voltage(v, n_bus, b);
  Eigen::VectorXcd cur = y_aug * vc;
  for (std::size_t k = 0; k < machines.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    const auto b = bus_row[k];
    cur(b) += (vc(b) - std::polar(e(kk), delta(kk))) / cd(0.0, x(kk));
  }
  Eigen::VectorXd out(2 * n_bus);
  out << cur.real(), cur.imag();
  return out;
}

Eigen::VectorXd DaeModel::volt_residual(const Eigen::VectorXd& delta, const Eigen::VectorXd& v,
                                        const Eigen::VectorXd& e) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(n_gfm()));
  Eigen::Index j = 0;
  for (std::size_t k = 0; k < machines.size(); ++k) {
    if (!machines[k].is_gfm) continue;
    const auto kk = static_cast<Eigen::Index>(k);
    const cd vb = bus_voltage(v, n_bus, bus_row[k]);
    out(j++) = -std::abs(vb) - lambda_q(kk) * source_q(e(kk), delta(kk), x(kk), vb);
  }
  return out;
}

DaeModel make_dae_model(const Network& net, const MachineSet& ms, const OperatingPoint& op, bool lossless) {
  DaeModel m;
  m.n_bus = static_cast<Eigen::Index>(net.size());
  m.y_aug = build_admittance(net, lossless);
  for (Eigen::Index i = 0; i < m.n_bus; ++i) {
    const auto& b = net.buses[static_cast<std::size_t>(i)];
    const double v2 = op.pf.v_mag(i) * op.pf.v_mag(i);
    m.y_aug(i, i) += cd(lossless ? 0.0 : b.load_p, -b.load_q) / v2;
  }
  const auto n = static_cast<Eigen::Index>(ms.size());
  m.x.resize(n);
  m.lambda_q = Eigen::VectorXd::Zero(n);
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < ms.sgs.size(); ++i, ++k) {
    m.machines.push_back({ms.sgs[i].bus, false, i});
    m.bus_row.push_back(static_cast<Eigen::Index>(net.index_of(ms.sgs[i].bus)));
    m.x(k) = ms.sgs[i].xd_prime;
  }
  for (std::size_t i = 0; i < ms.gfms.size(); ++i, ++k) {
    m.machines.push_back({ms.gfms[i].bus, true, i});
    m.bus_row.push_back(static_cast<Eigen::Index>(net.index_of(ms.gfms[i].bus)));
    m.x(k) = ms.gfms[i].x_f;
    m.lambda_q(k) = ms.gfms[i].lambda_q;
  }
  return m;
}

std::vector<int> LinearizedSystem::machine_order() const {
  std::vector<int> out;
  out.reserve(machines.size());
  for (const auto& m : machines) out.push_back(m.bus);
  return out;
}

LinearizedSystem build_jacobians(const Network& net, const MachineSet& ms, const OperatingPoint& op,
                                 bool lossless, double eq_tol) {
  const auto eq = check_equilibrium(net, ms, op);
  if (!(eq.max() <= eq_tol)) {
    throw PreconditionError("operating point is not an equilibrium (max residual " + std::to_string(eq.max()) +
                            ")");
  }
  const DaeModel dae = make_dae_model(net, ms, op, lossless);
  LinearizedSystem sys;
  sys.machines = dae.machines;
  sys.n_sg = ms.sgs.size();
  sys.n_gfm = ms.gfms.size();
  const auto ns = static_cast<Eigen::Index>(sys.n_sg);
  const auto nf = static_cast<Eigen::Index>(sys.n_gfm);
  const auto n = ns + nf;
  const auto nb = dae.n_bus;
  const double w0 = op.omega0;

  sys.delta0.resize(n);
  sys.e0.resize(n);
  sys.m_e.resize(n);
  sys.d_e.resize(n);
  for (Eigen::Index k = 0; k < ns; ++k) {
    const auto& st = op.sg_states[static_cast<std::size_t>(k)];
    const auto& s = ms.sgs[static_cast<std::size_t>(k)];
    sys.delta0(k) = st.delta;
    sys.e0(k) = st.e_emf;
    sys.m_e(k) = s.m / w0;
    sys.d_e(k) = s.d / w0;
  }
  for (Eigen::Index j = 0; j < nf; ++j) {
    const auto& st = op.gfm_states[static_cast<std::size_t>(j)];
    const auto& g = ms.gfms[static_cast<std::size_t>(j)];
    sys.delta0(ns + j) = st.delta;
    sys.e0(ns + j) = st.e_internal;
    sys.m_e(ns + j) = g.tau / (g.lambda_p * w0);
    sys.d_e(ns + j) = 1.0 / (g.lambda_p * w0);
  }
  // Network seen from the internal sources. The voltage used for the
  // machine-side blocks solves this network for the initialized sources,
  // which is the power-flow voltage unless load conductance was dropped.
  Eigen::MatrixXcd yp = dae.y_aug;
  Eigen::VectorXcd src = Eigen::VectorXcd::Zero(nb);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto b = dae.bus_row[static_cast<std::size_t>(k)];
    yp(b, b) += 1.0 / cd(0.0, dae.x(k));
    src(b) += std::polar(sys.e0(k), sys.delta0(k)) / cd(0.0, dae.x(k));
  }
  sys.a33.resize(2 * nb, 2 * nb);
  sys.a33 << yp.real(), -yp.imag(), yp.imag(), yp.real();
  const Eigen::PartialPivLU<Eigen::MatrixXcd> ylu(yp);
  const Eigen::VectorXcd vc = ylu.solve(src);
  sys.v0.resize(2 * nb);
  sys.v0 << vc.real(), vc.imag();
  sys.v_shift = (vc - op.pf.voltage()).cwiseAbs().maxCoeff();

  // Rows/columns over all machines; split into the SG/GFM blocks at the end.
  Eigen::MatrixXd f_delta = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd f_v = Eigen::MatrixXd::Zero(n, 2 * nb);
  Eigen::MatrixXd f_e = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd g_delta = Eigen::MatrixXd::Zero(2 * nb, n);
  Eigen::MatrixXd g_e = Eigen::MatrixXd::Zero(2 * nb, n);
  sys.c_delta = Eigen::MatrixXd::Zero(nf, n);
  sys.c_v = Eigen::MatrixXd::Zero(nf, 2 * nb);
  sys.c_e = Eigen::MatrixXd::Zero(nf, nf);

  for (Eigen::Index k = 0; k < n; ++k) {
    const auto b = dae.bus_row[static_cast<std::size_t>(k)];
    const double x = dae.x(k), e = sys.e0(k), d = sys.delta0(k);
    const double vr = vc(b).real(), vi = vc(b).imag();
    const double sn = std::sin(d), cs = std::cos(d);

    f_delta(k, k) = -e / x * (vr * cs + vi * sn);
    f_v(k, b) = -e / x * sn;
    f_v(k, nb + b) = e / x * cs;
    f_e(k, k) = -(vr * sn - vi * cs) / x;

    g_delta(b, k) = -e * cs / x;
    g_delta(nb + b, k) = -e * sn / x;
    g_e(b, k) = -sn / x;
    g_e(nb + b, k) = cs / x;

    if (k >= ns) {
      const auto j = k - ns;
      const double lq = dae.lambda_q(k);
      const double vm = std::abs(vc(b));
      sys.c_delta(j, k) = -lq * e * (-vr * sn + vi * cs) / x;
      sys.c_v(j, b) = -vr / vm - lq * (e * cs - 2.0 * vr) / x;
      sys.c_v(j, nb + b) = -vi / vm - lq * (e * sn - 2.0 * vi) / x;
      sys.c_e(j, j) = -lq * (vr * cs + vi * sn) / x;
    }
  }

  sys.a11 = f_delta.topLeftCorner(ns, ns);
  sys.a12 = f_v.topRows(ns);
  sys.a21 = f_delta.bottomRightCorner(nf, nf);
  sys.a22 = f_v.bottomRows(nf);
  sys.a23 = f_e.bottomRightCorner(nf, nf);
  sys.a31 = g_delta.leftCols(ns);
  sys.a32 = g_delta.rightCols(nf);
  sys.a34 = g_e.rightCols(nf);

  sys.a1 = f_delta;
  sys.a2 = f_v;
  sys.a3 = g_delta;
  sys.a4 = Eigen::MatrixXd::Zero(n, nf);
  sys.a4.bottomRows(nf) = sys.a23;
  return sys;
}

LaplacianPair kron_reduce(const LinearizedSystem& sys) {
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(sys.a33);
  const double rc = lu.rcond();
  LaplacianPair out;
  out.a33_condition = rc > 0.0 ? 1.0 / rc : INFINITY;
  if (!(rc > 1e-16)) throw SingularMatrixError("A33 is numerically singular", out.a33_condition);
  if (out.a33_condition > 1e12) {
    out.warnings.push_back("A33 condition estimate " + std::to_string(out.a33_condition) + " exceeds 1e12");
  }
  out.l = sys.a1 - sys.a2 * lu.solve(sys.a3);
  out.feedthrough = sys.a4 - sys.a2 * lu.solve(sys.a34);
  out.m_e = sys.m_e;
  out.l_bar = sys.m_e.cwiseInverse().asDiagonal() * out.l;
  out.machine_order = sys.machine_order();
  return out;
}

Eigen::MatrixXd kron_susceptance(const Network& net, const MachineSet& ms, const OperatingPoint& op) {
  const DaeModel dae = make_dae_model(net, ms, op, true);
  const auto nb = dae.n_bus;
  const auto n = static_cast<Eigen::Index>(dae.machines.size());
  Eigen::MatrixXd b_nn = dae.y_aug.imag();
  Eigen::MatrixXd b_in = Eigen::MatrixXd::Zero(n, nb);
  Eigen::MatrixXd b_ii = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto b = dae.bus_row[static_cast<std::size_t>(k)];
    const double y = 1.0 / dae.x(k);
    b_nn(b, b) -= y;
    b_ii(k, k) = -y;
    b_in(k, b) = y;
  }
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(b_nn);
  return b_ii - b_in * lu.solve(b_in.transpose());
}

Eigen::MatrixXd laplacian_closed_form(const Eigen::VectorXd& e, const Eigen::VectorXd& delta,
                                      const Eigen::MatrixXd& kron_b) {
  const auto n = e.size();
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j || kron_b(i, j) == 0.0) continue;
      l(i, j) = e(i) * e(j) * kron_b(i, j) * std::cos(delta(i) - delta(j));
    }
    l(i, i) = -l.row(i).sum();
  }
  return l;
}

RowSumStats lemma1_check(const Eigen::MatrixXd& l) {
  RowSumStats st;
  if (l.rows() == 0) return st;
  const Eigen::VectorXd rs = l.rowwise().sum();
  st.mean = rs.mean();
  st.std = std::sqrt((rs.array() - st.mean).square().mean());
  st.max = rs.cwiseAbs().maxCoeff();
  return st;
}

StateMatrix full_state_matrix(const LinearizedSystem& sys, const MachineSet& ms, const LaplacianPair& lap) {
  const auto n = static_cast<Eigen::Index>(sys.machines.size());
  const auto nf = static_cast<Eigen::Index>(sys.n_gfm);
  const auto ns = n - nf;
  StateMatrix out;
  out.n_machines = sys.machines.size();
  out.n_gfm = sys.n_gfm;
  Eigen::MatrixXd& a = out.a;
  a = Eigen::MatrixXd::Zero(2 * n + 2 * nf, 2 * n + 2 * nf);
  const Eigen::Index iw = n, ive = 2 * n, ie = 2 * n + nf;

  a.block(0, iw, n, n).setIdentity();
  for (Eigen::Index i = 0; i < n; ++i) {
    a.block(iw + i, 0, 1, n) = lap.l.row(i) / sys.m_e(i);
    a(iw + i, iw + i) = -sys.d_e(i) / sys.m_e(i);
    if (nf) a.block(iw + i, ie, 1, nf) = lap.feedthrough.row(i) / sys.m_e(i);
  }
  if (nf == 0) return out;

  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(sys.a33);
  const Eigen::MatrixXd h_delta = sys.c_delta - sys.c_v * lu.solve(sys.a3);
  const Eigen::MatrixXd h_e = sys.c_e - sys.c_v * lu.solve(sys.a34);
  for (Eigen::Index j = 0; j < nf; ++j) {
    const auto& g = ms.gfms[static_cast<std::size_t>(sys.machines[static_cast<std::size_t>(ns + j)].index)];
    Eigen::RowVectorXd ve_row = Eigen::RowVectorXd::Zero(a.cols());
    ve_row.segment(0, n) = h_delta.row(j) / g.tau;
    ve_row(ive + j) = -1.0 / g.tau;
    ve_row.segment(ie, nf) = h_e.row(j) / g.tau;
    a.row(ive + j) = ve_row;
    a.row(ie + j) = g.kpv * ve_row;
    a(ie + j, ive + j) += g.kiv;
  }
  return out;
}

}  // namespace coherence
