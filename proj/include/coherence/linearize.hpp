#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "coherence/network.hpp"
#include "coherence/powerflow.hpp"

namespace coherence {

/// One dynamic source as seen by the linearization. SGs come first in
/// MachineSet order, then GFMs.
struct MachineRef {
  int bus = 0;
  bool is_gfm = false;
  std::size_t index = 0;  ///< position in MachineSet::sgs or ::gfms
};

/// Residual functions of the machine-network DAE at fixed parameters.
/// Voltages are rectangular, [Re V_1..Re V_N, Im V_1..Im V_N].
struct DaeModel {
  std::vector<MachineRef> machines;
  std::vector<Eigen::Index> bus_row;  ///< bus index per machine
  Eigen::VectorXd x;                  ///< internal reactance per machine
  Eigen::VectorXd lambda_q;           ///< per machine, 0 for SGs
  Eigen::MatrixXcd y_aug;             ///< network plus constant-impedance loads
  Eigen::Index n_bus = 0;

  std::size_t n_sg() const noexcept;
  std::size_t n_gfm() const noexcept;

  /// Electrical power leaving each source, negated (the angle-driven
  /// part of the frequency equations).
  Eigen::VectorXd freq_residual(const Eigen::VectorXd& delta, const Eigen::VectorXd& v,
                                const Eigen::VectorXd& e) const;
  /// Bus current balance, 2N rows.
  Eigen::VectorXd alg_residual(const Eigen::VectorXd& delta, const Eigen::VectorXd& v,
                               const Eigen::VectorXd& e) const;
  /// Terminal part of the Q-V loop, -|V_j| - lambda_q Q_j, one row per GFM.
  Eigen::VectorXd volt_residual(const Eigen::VectorXd& delta, const Eigen::VectorXd& v,
                                const Eigen::VectorXd& e) const;
};

DaeModel make_dae_model(const Network& net, const MachineSet& ms, const OperatingPoint& op, bool lossless);

struct LinearizedSystem {
  Eigen::MatrixXd a11, a12, a21, a22, a23, a31, a32, a33, a34;
  Eigen::MatrixXd a1, a2, a3, a4;
  /// GFM Q-V loop blocks: derivatives of volt_residual w.r.t. delta (all
  /// machines), V and E_f.
  Eigen::MatrixXd c_delta, c_v, c_e;
  Eigen::VectorXd m_e;  ///< M_i/omega0 for SGs, tau/(lambda_p omega0) for GFMs
  Eigen::VectorXd d_e;  ///< D_i/omega0 for SGs, 1/(lambda_p omega0) for GFMs
  std::vector<MachineRef> machines;
  Eigen::VectorXd delta0, e0;
  Eigen::VectorXd v0;     ///< rectangular linearization voltage
  double v_shift = 0.0;   ///< max |v0 - power-flow voltage|
  std::size_t n_sg = 0, n_gfm = 0;

  std::vector<int> machine_order() const;
};

/// Analytic Jacobian blocks at the operating point. Throws PreconditionError
/// when the equilibrium residual exceeds `eq_tol`.
LinearizedSystem build_jacobians(const Network& net, const MachineSet& ms, const OperatingPoint& op,
                                 bool lossless, double eq_tol = 1e-6);

struct LaplacianPair {
  Eigen::MatrixXd l;
  Eigen::MatrixXd l_bar;
  std::optional<Eigen::MatrixXd> l0_bar;
  Eigen::MatrixXd feedthrough;  ///< A4 - A2 A33^-1 A34
  Eigen::VectorXd m_e;
  std::vector<int> machine_order;
  double a33_condition = 0.0;
  std::vector<std::string> warnings;
};

LaplacianPair kron_reduce(const LinearizedSystem& sys);

/// Susceptance matrix between machine internal nodes after eliminating
/// every network bus (lossless network, constant-impedance loads).
Eigen::MatrixXd kron_susceptance(const Network& net, const MachineSet& ms, const OperatingPoint& op);

/// L(i,j) = E_i E_j B_ij cos(delta_i - delta_j), diagonal balancing the row.
Eigen::MatrixXd laplacian_closed_form(const Eigen::VectorXd& e, const Eigen::VectorXd& delta,
                                      const Eigen::MatrixXd& kron_b);

struct RowSumStats {
  double mean = 0.0;
  double std = 0.0;
  double max = 0.0;
};

/// Mean and standard deviation of the row sums (L 1)_i, and max |(L 1)_i|.
RowSumStats lemma1_check(const Eigen::MatrixXd& l);

/// Linearized state matrix over [delta, omega, V^e, E_f] with the network
/// eliminated.
struct StateMatrix {
  Eigen::MatrixXd a;
  std::size_t n_machines = 0;
  std::size_t n_gfm = 0;
};

StateMatrix full_state_matrix(const LinearizedSystem& sys, const MachineSet& ms, const LaplacianPair& lap);

}  // namespace coherence
