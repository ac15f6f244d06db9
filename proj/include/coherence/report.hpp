#pragma once

#include <Eigen/Dense>
#include <complex>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "coherence/scenario.hpp"

namespace coherence {

/// Six significant digits, the table precision.
std::string format_sig6(double x);

nlohmann::json report_to_json(const ScenarioReport& rep);

/// Inter-area mode table: one row per base-case band mode, one frequency
/// column per case.
std::string modes_csv(const std::vector<ScenarioReport>& reps);
std::string groups_csv(const std::vector<ScenarioReport>& reps);
std::string lemma1_csv(const std::vector<ScenarioReport>& reps);
std::string injections_csv(const std::vector<ScenarioReport>& reps);

/// Row-major matrix with a leading "# machine_order" line.
std::string matrix_csv(const Eigen::MatrixXd& m, const std::vector<int>& machine_order);

struct CompassMode {
  double freq_hz = 0.0;
  std::string title;
  std::vector<int> bus;
  std::vector<std::complex<double>> components;
  std::vector<int> area;  ///< optional, colors the arrows
};

std::string compass_svg(const CompassMode& mode);

/// Finds a mode within `tol_hz` of `freq_hz` in a serialized report,
/// searching cases in order (or only `case_label`). Throws PreconditionError
/// if nothing matches.
CompassMode find_mode(const nlohmann::json& report, double freq_hz, const std::string& case_label = "",
                      double tol_hz = 0.01);

}  // namespace coherence
