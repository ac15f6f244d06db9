#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "coherence/network.hpp"

namespace coherence {

/// Classical SG. `m` is 2H in seconds and `d` is pu power per pu speed,
/// both on the system base.
struct SynchronousMachine {
  int bus = 0;
  double m = 0.0;
  double d = 0.0;
  double xd_prime = 0.0;
  double p_set = 0.0;
};

/// Droop grid-forming inverter. `lambda_p` is pu frequency per pu power,
/// `x_f` the coupling reactance between the internal source and the bus.
struct GridFormingInverter {
  int bus = 0;
  double tau = 0.0;
  double lambda_p = 0.0;
  double lambda_q = 0.0;
  double kpv = 0.0;
  double kiv = 0.0;
  double v_set = 1.0;
  double p_set = 0.0;
  double q_set = 0.0;
  double x_f = 0.05;
};

struct MachineSet {
  std::vector<SynchronousMachine> sgs;
  std::vector<GridFormingInverter> gfms;

  std::size_t size() const noexcept { return sgs.size() + gfms.size(); }
  const SynchronousMachine* sg_at(int bus) const noexcept;
  const GridFormingInverter* gfm_at(int bus) const noexcept;
  double total_p_set() const noexcept;
};

MachineSet machines_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const MachineSet& ms);
MachineSet load_machines(const std::filesystem::path& path);

/// Checks machine parameters and placement against the network.
void validate(const MachineSet& ms, const Network& net);

struct PowerFlowOptions {
  double tol = 1e-8;
  int max_iter = 30;
  bool lossless = false;
  /// Optional starting point (magnitudes, angles) instead of a flat start.
  std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>> warm_start;
};

struct PowerFlowSolution {
  Eigen::VectorXd v_mag;
  Eigen::VectorXd v_ang;
  Eigen::VectorXd p_inj;  ///< net injection, generation minus load
  Eigen::VectorXd q_inj;
  int iterations = 0;
  double max_mismatch = 0.0;
  std::vector<double> residual_history;
  bool lossless = false;

  Eigen::VectorXcd voltage() const;
};

/// Polar Newton-Raphson. Buses hosting a GFM (other than the slack) are
/// solved as Q-V droop buses, |V| = v_set + lambda_q (q_set - Q_gen).
PowerFlowSolution solve_power_flow(const Network& net, const MachineSet& ms,
                                   const PowerFlowOptions& opts = {});

struct SgState {
  int bus = 0;
  double delta = 0.0;
  double omega = 0.0;
  double e_emf = 0.0;
  double p_mech = 0.0;  ///< equals p_set except on the slack
};

struct GfmState {
  int bus = 0;
  double delta = 0.0;
  double omega = 0.0;
  double v_e = 0.0;
  double e_internal = 0.0;
  double p_ref = 0.0;
  double q_ref = 0.0;
  double v_ref = 0.0;
};

struct OperatingPoint {
  PowerFlowSolution pf;
  std::vector<SgState> sg_states;    ///< same order as MachineSet::sgs
  std::vector<GfmState> gfm_states;  ///< same order as MachineSet::gfms
  double omega0 = 0.0;
  bool lossless = false;
};

OperatingPoint init_dynamic_states(const Network& net, const MachineSet& ms,
                                   const PowerFlowSolution& pf, double tol = 1e-8);

/// Max absolute residual per equation family: "1a", "1b", "2a".."2d",
/// "3p", "3q".
struct EquilibriumReport {
  std::map<std::string, double> max_abs;
  Eigen::VectorXd sg_swing;  ///< per-SG right-hand side of the speed equation
  double max() const noexcept;
};

EquilibriumReport check_equilibrium(const Network& net, const MachineSet& ms,
                                    const OperatingPoint& op);

/// Electrical power out of an internal source E at angle delta behind
/// reactance x into a bus at voltage v.
double source_p(double e, double delta, double x, std::complex<double> v) noexcept;
double source_q(double e, double delta, double x, std::complex<double> v) noexcept;

nlohmann::json to_json(const PowerFlowSolution& pf);

}  // namespace coherence
