#pragma once

#include <Eigen/Dense>
#include <complex>
#include <string>
#include <vector>

#include "coherence/linearize.hpp"

namespace coherence {

struct SlowSubspace {
  int r = 0;
  Eigen::VectorXd eigenvalues;  ///< all eigenvalues of M_e^-1 L, ascending |e|
  Eigen::MatrixXd u;            ///< orthonormal eigenvectors of M_e^-1/2 L M_e^-1/2, same order
  Eigen::MatrixXd w_r;          ///< M_e^-1/2 u_r, eigenvectors of M_e^-1 L
  Eigen::VectorXd m_e;
  bool tie = false;             ///< |e_r| == |e_{r+1}| within 1e-12
  bool zero_ok = false;         ///< |e_1| <= 1e-8 max |e|
  std::vector<double> eigengap; ///< |e_{i+1}| / |e_i| for i = 2..n-1 (1-based)

  Eigen::VectorXd sigma_r() const { return eigenvalues.head(r); }
};

/// Eigen-decomposition of M_e^-1 L through its symmetric similarity form.
SlowSubspace slow_eigensolve(const Eigen::MatrixXd& l, const Eigen::VectorXd& m_e, int r);
SlowSubspace slow_eigensolve(const LaplacianPair& lap, int r);

struct Partition {
  std::vector<std::size_t> reference_machines;  ///< row index per area, ascending
  std::vector<int> assignment;                  ///< area (0-based) per machine
  Eigen::MatrixXd permuted_rows;                ///< W_r W_ref^-1, rows sum to 1
  std::vector<std::size_t> ties;                ///< machines resolved by the tie rule

  int areas() const noexcept { return static_cast<int>(reference_machines.size()); }
  std::vector<std::vector<std::size_t>> members() const;
};

/// Reference machines by Gaussian elimination with complete pivoting on the
/// column-normalized slow eigenvectors; every other machine joins the
/// reference with the largest entry in its row.
Partition group_machines(const SlowSubspace& sub);

struct ModeShape {
  std::complex<double> eigenvalue;
  double freq_hz = 0.0;
  double damping_ratio = 0.0;
  double laplacian_freq_hz = 0.0;  ///< closest sqrt|e|/2pi from M_e^-1 L, if supplied
  std::vector<std::complex<double>> components;  ///< speed-state entries, max |.| = 1 at phase 0
  std::vector<double> participation;             ///< per machine, angle + speed states, sums to <= 1
};

/// Every oscillatory mode (Im > 0) up to `f_max_hz`, sorted by frequency.
std::vector<ModeShape> oscillatory_modes(const StateMatrix& sm, double f_max_hz,
                                         const Eigen::VectorXd& lbar_eigenvalues = {});

/// Modes with frequency in [lo, hi] Hz.
std::vector<ModeShape> mode_shapes(const StateMatrix& sm, double lo_hz, double hi_hz,
                                   const Eigen::VectorXd& lbar_eigenvalues = {});

/// |a^H b|^2 / (|a|^2 |b|^2).
double modal_assurance(const std::vector<std::complex<double>>& a, const std::vector<std::complex<double>>& b);

struct CaseSubspace {
  const SlowSubspace& sub;
  const Partition& part;
  const Eigen::MatrixXd& l;
};

struct SubspaceComparison {
  bool defined = false;
  std::string undefined_reason;
  double beta = 0.0;
  Eigen::VectorXd sigmas;
  Eigen::VectorXd thetas;
  double theta_matrix_norm = 0.0;  ///< ||sin Theta||_F
  double bound_rhs = 0.0;
  bool bound_holds = false;
  Eigen::VectorXd row_shift;
  double row_shift_max = 0.0;
  double row_bound_rhs = 0.0;
  bool row_bound_holds = false;
  Eigen::MatrixXd q;
  double perturbation_norm = 0.0;  ///< ||A - A'||_F in base-inertia coordinates
  double perturbation_norm_unweighted = 0.0;  ///< ||M_e^-1 L - M^-1 L0||_F
  double row_bound_rhs_unweighted = 0.0;
  Eigen::VectorXd alpha_row_shift;  ///< same shift on the hyperplane rows
};

/// Canonical angles between the base slow subspace and the scenario one,
/// with both sides of the sin-Theta and row-vector bounds. Both subspaces
/// are taken in the base inertia metric: Z = orth(M0^1/2 W_r).
/// `row_map[i]` is the scenario row matching base row i.
SubspaceComparison compare_subspaces(const CaseSubspace& base, const CaseSubspace& scen,
                                     const std::vector<std::size_t>& row_map);

struct EpsilonDecomposition {
  Eigen::MatrixXd l_internal;
  Eigen::MatrixXd l_external;
  double epsilon = 0.0;        ///< largest |inter-area coupling|
  double epsilon_ratio = 0.0;  ///< epsilon / smallest nonzero |intra-area coupling|
};

EpsilonDecomposition epsilon_decompose(const Eigen::MatrixXd& l, const Partition& part);

/// Inertia-weighted mean angle per area.
Eigen::VectorXd slow_variable(const Partition& part, const Eigen::VectorXd& m_e, const Eigen::VectorXd& delta);

}  // namespace coherence
