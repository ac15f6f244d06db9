#include "coherence/coherency.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "coherence/errors.hpp"

namespace coherence {

using cd = std::complex<double>;

SlowSubspace slow_eigensolve(const Eigen::MatrixXd& l, const Eigen::VectorXd& m_e, int r) {
  const auto n = l.rows();
  if (l.cols() != n || m_e.size() != n) throw PreconditionError("slow_eigensolve: dimension mismatch");
  if (r < 2 || r > n) {
    throw PreconditionError("slow_eigensolve: r = " + std::to_string(r) + " outside 2.." + std::to_string(n));
  }
  const double scale = std::max(1.0, l.cwiseAbs().maxCoeff());
  const double asym = (l - l.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-8 * scale) {
    throw PreconditionError("slow_eigensolve: L is not symmetric (max |L - L^T| = " + std::to_string(asym) +
                            "); use the lossless option");
  }
  const Eigen::VectorXd s = m_e.cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd sym = s.asDiagonal() * l * s.asDiagonal();
  sym = 0.5 * (sym + sym.transpose()).eval();
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw PreconditionError("slow_eigensolve: eigen-iteration did not converge");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return std::abs(es.eigenvalues()(a)) < std::abs(es.eigenvalues()(b));
  });

  SlowSubspace sub;
  sub.r = r;
  sub.m_e = m_e;
  sub.eigenvalues.resize(n);
  sub.u.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto src = order[static_cast<std::size_t>(k)];
    sub.eigenvalues(k) = es.eigenvalues()(src);
    Eigen::VectorXd col = es.eigenvectors().col(src);
    // Fix the sign so the largest-magnitude entry is positive.
    Eigen::Index imax = 0;
    col.cwiseAbs().maxCoeff(&imax);
    if (col(imax) < 0.0) col = -col;
    sub.u.col(k) = col;
  }
  sub.w_r = s.asDiagonal() * sub.u.leftCols(r);
  const double emax = sub.eigenvalues.cwiseAbs().maxCoeff();
  sub.zero_ok = std::abs(sub.eigenvalues(0)) <= 1e-8 * std::max(emax, 1e-300);
  if (r < n) sub.tie = std::abs(std::abs(sub.eigenvalues(r - 1)) - std::abs(sub.eigenvalues(r))) <= 1e-12 * std::max(1.0, emax);
  for (Eigen::Index i = 1; i + 1 < n; ++i) {
    const double a = std::abs(sub.eigenvalues(i));
    sub.eigengap.push_back(a > 0.0 ? std::abs(sub.eigenvalues(i + 1)) / a : INFINITY);
  }
  return sub;
}

SlowSubspace slow_eigensolve(const LaplacianPair& lap, int r) { return slow_eigensolve(lap.l, lap.m_e, r); }

std::vector<std::vector<std::size_t>> Partition::members() const {
  std::vector<std::vector<std::size_t>> out(reference_machines.size());
  for (std::size_t i = 0; i < assignment.size(); ++i) out[static_cast<std::size_t>(assignment[i])].push_back(i);
  return out;
}

Partition group_machines(const SlowSubspace& sub) {
  const auto n = sub.w_r.rows();
  const auto r = sub.w_r.cols();
  Eigen::MatrixXd w = sub.w_r;
  for (Eigen::Index j = 0; j < r; ++j) w.col(j).normalize();

  // Complete pivoting on W^T: each pivot column is a reference machine.
  Eigen::MatrixXd a = w.transpose();
  std::vector<Eigen::Index> cols(static_cast<std::size_t>(n));
  std::iota(cols.begin(), cols.end(), 0);
  const double first = a.cwiseAbs().maxCoeff();
  std::vector<std::size_t> refs;
  for (Eigen::Index k = 0; k < r; ++k) {
    Eigen::Index pi = k, pj = k;
    const double piv = a.bottomRightCorner(r - k, n - k).cwiseAbs().maxCoeff(&pi, &pj);
    pi += k;
    pj += k;
    if (!(piv > 1e-12 * first)) {
      throw PreconditionError("group_machines: reference basis is singular at step " + std::to_string(k + 1) +
                              " (r too large or degenerate subspace)");
    }
    a.row(k).swap(a.row(pi));
    a.col(k).swap(a.col(pj));
    std::swap(cols[static_cast<std::size_t>(k)], cols[static_cast<std::size_t>(pj)]);
    refs.push_back(static_cast<std::size_t>(cols[static_cast<std::size_t>(k)]));
    for (Eigen::Index i = k + 1; i < r; ++i) {
      const double f = a(i, k) / a(k, k);
      a.row(i).tail(n - k) -= f * a.row(k).tail(n - k);
    }
  }
  std::sort(refs.begin(), refs.end());

  Eigen::MatrixXd w_ref(r, r);
  for (Eigen::Index k = 0; k < r; ++k) w_ref.row(k) = w.row(static_cast<Eigen::Index>(refs[static_cast<std::size_t>(k)]));
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(w_ref.transpose());

  Partition part;
  part.reference_machines = refs;
  part.permuted_rows = lu.solve(w.transpose()).transpose();
  for (Eigen::Index k = 0; k < r; ++k) {
    // Reference rows are the identity up to rounding; make that exact.
    part.permuted_rows.row(static_cast<Eigen::Index>(refs[static_cast<std::size_t>(k)])) =
        Eigen::RowVectorXd::Unit(r, k);
  }
  part.assignment.assign(static_cast<std::size_t>(n), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto row = part.permuted_rows.row(i);
    Eigen::Index best = 0;
    const double top = row.maxCoeff(&best);
    const double tol = 1e-12 * std::max(1.0, std::abs(top));
    int count = 0;
    Eigen::Index lowest = -1;
    for (Eigen::Index k = 0; k < r; ++k) {
      if (top - row(k) <= tol) {
        ++count;
        if (lowest < 0) lowest = k;
      }
    }
    if (count > 1) part.ties.push_back(static_cast<std::size_t>(i));
    part.assignment[static_cast<std::size_t>(i)] = static_cast<int>(lowest);
  }
  return part;
}

double modal_assurance(const std::vector<cd>& a, const std::vector<cd>& b) {
  cd dot = 0.0;
  double na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
    dot += std::conj(a[i]) * b[i];
    na += std::norm(a[i]);
    nb += std::norm(b[i]);
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::norm(dot) / (na * nb);
}

std::vector<ModeShape> oscillatory_modes(const StateMatrix& sm, double f_max_hz, const Eigen::VectorXd& lbar_eigenvalues) {
  const auto n = static_cast<Eigen::Index>(sm.n_machines);
  std::vector<ModeShape> out;
  if (sm.a.rows() == 0) return out;
  const Eigen::EigenSolver<Eigen::MatrixXd> es(sm.a, true);
  if (es.info() != Eigen::Success) throw PreconditionError("mode analysis: eigen-iteration did not converge");
  const Eigen::MatrixXcd right = es.eigenvectors();
  const Eigen::MatrixXcd left = right.inverse();
  const double two_pi = 2.0 * std::numbers::pi;

  for (Eigen::Index k = 0; k < sm.a.rows(); ++k) {
    const cd lam = es.eigenvalues()(k);
    if (!(lam.imag() > 1e-9)) continue;
    const double f = lam.imag() / two_pi;
    if (f > f_max_hz) continue;
    ModeShape m;
    m.eigenvalue = lam;
    m.freq_hz = f;
    m.damping_ratio = -lam.real() / std::abs(lam);
    const Eigen::VectorXcd speed = right.col(k).segment(n, n);
    Eigen::Index imax = 0;
    speed.cwiseAbs().maxCoeff(&imax);
    const cd ref = speed(imax);
    for (Eigen::Index i = 0; i < n; ++i) {
      cd c = speed(i) / ref;
      if (i == imax) c = 1.0;
      m.components.push_back(c);
    }
    double total = 0.0;
    Eigen::VectorXd p(sm.a.rows());
    for (Eigen::Index s = 0; s < sm.a.rows(); ++s) {
      p(s) = std::abs(left(k, s) * right(s, k));
      total += p(s);
    }
    for (Eigen::Index i = 0; i < n; ++i) m.participation.push_back(total > 0.0 ? (p(i) + p(n + i)) / total : 0.0);
    if (lbar_eigenvalues.size()) {
      double best = INFINITY;
      for (Eigen::Index j = 0; j < lbar_eigenvalues.size(); ++j) {
        const double fl = std::sqrt(std::abs(lbar_eigenvalues(j))) / two_pi;
        if (std::abs(fl - f) < std::abs(best - f)) best = fl;
      }
      m.laplacian_freq_hz = best;
    }
    out.push_back(std::move(m));
  }
  std::stable_sort(out.begin(), out.end(), [](const ModeShape& a, const ModeShape& b) { return a.freq_hz < b.freq_hz; });
  return out;
}

std::vector<ModeShape> mode_shapes(const StateMatrix& sm, double lo_hz, double hi_hz,
                                   const Eigen::VectorXd& lbar_eigenvalues) {
  auto all = oscillatory_modes(sm, hi_hz, lbar_eigenvalues);
  std::vector<ModeShape> out;
  for (auto& m : all)
    if (m.freq_hz >= lo_hz) out.push_back(std::move(m));
  return out;
}

namespace {

Eigen::MatrixXd procrustes(const Eigen::MatrixXd& from, const Eigen::MatrixXd& to) {
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(from.transpose() * to, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().transpose();
}

bool le_rounded(double lhs, double rhs) { return lhs <= rhs * (1.0 + 1e-10) + 1e-13; }

}  // namespace

SubspaceComparison compare_subspaces(const CaseSubspace& base, const CaseSubspace& scen,
                                     const std::vector<std::size_t>& row_map) {
  const auto n = base.sub.u.rows();
  const auto r = static_cast<Eigen::Index>(base.sub.r);
  if (scen.sub.w_r.rows() != n || static_cast<Eigen::Index>(row_map.size()) != n || scen.sub.r != base.sub.r) {
    throw PreconditionError("compare_subspaces: machine count or r differs between cases");
  }
  SubspaceComparison out;
  out.beta = r < n ? std::abs(base.sub.eigenvalues(r)) - std::abs(scen.sub.eigenvalues(r - 1)) : 0.0;

  const Eigen::VectorXd t = base.sub.m_e.cwiseSqrt();
  Eigen::MatrixXd wm(n, r), lm(n, n);
  Eigen::VectorXd mm(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto si = static_cast<Eigen::Index>(row_map[static_cast<std::size_t>(i)]);
    wm.row(i) = scen.sub.w_r.row(si);
    mm(i) = scen.sub.m_e(si);
    for (Eigen::Index j = 0; j < n; ++j) lm(i, j) = scen.l(si, static_cast<Eigen::Index>(row_map[static_cast<std::size_t>(j)]));
  }
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(t.asDiagonal() * wm);
  const Eigen::MatrixXd z = qr.householderQ() * Eigen::MatrixXd::Identity(n, r);
  const Eigen::MatrixXd ub = base.sub.u.leftCols(r);

  const Eigen::JacobiSVD<Eigen::MatrixXd> cos_svd(ub.transpose() * z);
  const Eigen::JacobiSVD<Eigen::MatrixXd> sin_svd(z - ub * (ub.transpose() * z));
  out.sigmas = cos_svd.singularValues().cwiseMin(1.0);
  Eigen::VectorXd sines = sin_svd.singularValues().reverse();  // ascending, pairs with descending cosines
  out.thetas.resize(r);
  for (Eigen::Index i = 0; i < r; ++i) out.thetas(i) = std::atan2(sines(i), out.sigmas(i));
  out.theta_matrix_norm = (z - ub * (ub.transpose() * z)).norm();

  out.q = procrustes(ub, z);
  out.row_shift.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) out.row_shift(i) = (z.row(i) - ub.row(i) * out.q).norm();
  out.row_shift_max = out.row_shift.maxCoeff();

  const Eigen::MatrixXd a0 = t.cwiseInverse().asDiagonal() * base.l * t.cwiseInverse().asDiagonal();
  const Eigen::VectorXd row_scale = t.cwiseQuotient(mm);
  const Eigen::MatrixXd a1 = row_scale.asDiagonal() * lm * t.cwiseInverse().asDiagonal();
  out.perturbation_norm = (a0 - a1).norm();
  out.perturbation_norm_unweighted =
      (mm.cwiseInverse().asDiagonal() * lm - base.sub.m_e.cwiseInverse().asDiagonal() * base.l).norm();

  Eigen::MatrixXd alpha(n, r);
  for (Eigen::Index i = 0; i < n; ++i) {
    alpha.row(i) = scen.part.permuted_rows.row(static_cast<Eigen::Index>(row_map[static_cast<std::size_t>(i)]));
  }
  const Eigen::MatrixXd q_alpha = procrustes(base.part.permuted_rows, alpha);
  out.alpha_row_shift.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) out.alpha_row_shift(i) = (alpha.row(i) - base.part.permuted_rows.row(i) * q_alpha).norm();

  if (!(out.beta > 1e-12)) {
    out.defined = false;
    out.undefined_reason = r < n ? "spectral gap beta <= 1e-12" : "r equals the machine count";
    return out;
  }
  out.defined = true;
  const Eigen::MatrixXd resid = a0 * z - z * scen.sub.eigenvalues.head(r).asDiagonal();
  out.bound_rhs = resid.norm() / out.beta;
  out.bound_holds = le_rounded(out.theta_matrix_norm, out.bound_rhs);
  const double k17 = (1.0 + std::sqrt(2.0)) / out.beta;
  out.row_bound_rhs = k17 * out.perturbation_norm;
  out.row_bound_rhs_unweighted = k17 * out.perturbation_norm_unweighted;
  out.row_bound_holds = le_rounded(out.row_shift_max, out.row_bound_rhs);
  return out;
}

EpsilonDecomposition epsilon_decompose(const Eigen::MatrixXd& l, const Partition& part) {
  const auto n = l.rows();
  EpsilonDecomposition out;
  out.l_internal = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd ext = Eigen::MatrixXd::Zero(n, n);
  double min_intra = INFINITY;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const bool same = part.assignment[static_cast<std::size_t>(i)] == part.assignment[static_cast<std::size_t>(j)];
      if (same) {
        out.l_internal(i, j) = l(i, j);
        if (l(i, j) != 0.0) min_intra = std::min(min_intra, std::abs(l(i, j)));
      } else {
        ext(i, j) = l(i, j);
        out.epsilon = std::max(out.epsilon, std::abs(l(i, j)));
      }
    }
    out.l_internal(i, i) = -out.l_internal.row(i).sum();
  }
  ext.diagonal() = (l - out.l_internal).diagonal();
  out.l_external = out.epsilon > 0.0 ? Eigen::MatrixXd(ext / out.epsilon) : Eigen::MatrixXd::Zero(n, n);
  out.epsilon_ratio = (out.epsilon > 0.0 && std::isfinite(min_intra)) ? out.epsilon / min_intra : 0.0;
  return out;
}

Eigen::VectorXd slow_variable(const Partition& part, const Eigen::VectorXd& m_e, const Eigen::VectorXd& delta) {
  const int r = part.areas();
  Eigen::VectorXd num = Eigen::VectorXd::Zero(r), den = Eigen::VectorXd::Zero(r);
  for (std::size_t i = 0; i < part.assignment.size(); ++i) {
    const auto a = part.assignment[i];
    const auto ii = static_cast<Eigen::Index>(i);
    num(a) += m_e(ii) * delta(ii);
    den(a) += m_e(ii);
  }
  return num.cwiseQuotient(den);
}

}  // namespace coherence
