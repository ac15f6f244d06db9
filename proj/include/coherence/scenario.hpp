#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "coherence/coherency.hpp"
#include "coherence/linearize.hpp"
#include "coherence/network.hpp"
#include "coherence/powerflow.hpp"

namespace coherence {

/// Per-field overrides of the default GFM parameters.
struct GfmOverrides {
  std::optional<double> tau, lambda_p, lambda_q, kpv, kiv, v_set, p_set, q_set, x_f;
};

struct Replacement {
  int retire_sg_bus = 0;
  int gfm_bus = 0;
  GfmOverrides params;  ///< all empty for "default"
};

struct ScenarioOptions {
  bool lossless = true;
  double tol = 1e-8;
  int max_iter = 30;
};

struct ScenarioSpec {
  std::string name;
  std::vector<Replacement> replacements;
  int areas_r = 2;
  double band_lo_hz = 0.3;
  double band_hi_hz = 1.0;
  ScenarioOptions options;
};

ScenarioSpec scenario_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const ScenarioSpec& spec);
ScenarioSpec load_scenario(const std::filesystem::path& path);

struct BaseCase {
  Network net;
  MachineSet machines;
};

struct AppliedScenario {
  Network net;
  MachineSet machines;
  std::vector<std::string> warnings;
};

/// Retires SGs and adds GFMs. Default set-points come from the retired SG
/// and the base-case power flow.
AppliedScenario apply_scenario(const Network& base_net, const MachineSet& base_machines, const ScenarioSpec& spec);

/// Everything computed for one case (base or scenario).
struct CaseResult {
  std::string label;
  std::vector<int> machine_bus;    ///< bus id per machine row
  std::vector<int> replaces;       ///< retired SG bus per row, 0 if none
  std::optional<OperatingPoint> op;
  std::optional<EquilibriumReport> equilibrium;
  std::optional<LinearizedSystem> sys;
  std::optional<LaplacianPair> lap;
  std::optional<RowSumStats> lemma1;
  std::optional<SlowSubspace> sub;
  std::optional<Partition> part;
  std::optional<EpsilonDecomposition> eps;
  std::vector<ModeShape> band_modes;
  std::vector<ModeShape> low_modes;  ///< every oscillatory mode below 2 Hz
  double slack_p = 0.0;
};

struct ModeTrack {
  std::size_t base_index = 0;  ///< into base band_modes
  double base_freq_hz = 0.0;
  std::optional<std::size_t> scen_index;  ///< into scenario low_modes
  double scen_freq_hz = 0.0;
  double mac = 0.0;
  bool gfm_sensitive = false;
};

struct InjectionSummary {
  double gfm_total_mw = 0.0;
  double total_load_mw = 0.0;
  double pct_of_load = 0.0;
};

struct ScenarioReport {
  ScenarioSpec spec;
  bool ok = false;
  std::string failed_stage;
  std::string error_kind;  ///< "validation", "convergence" or "pipeline"
  std::string error;
  std::vector<std::string> warnings;
  InjectionSummary injection;
  CaseResult base;
  std::optional<CaseResult> scenario;
  std::vector<std::size_t> row_map;  ///< base row -> scenario row
  std::vector<ModeTrack> tracking;
  std::optional<SubspaceComparison> comparison;
  std::vector<int> area_match;       ///< scenario area -> base area
  std::vector<int> flipped_machines; ///< base bus ids
};

/// Runs base and (if any replacements) scenario through every stage. Stage
/// failures are recorded in the report, never thrown.
ScenarioReport run_pipeline(const BaseCase& base, const ScenarioSpec& spec);

/// Independent pipelines, results in input order. Parallelism is capped by
/// `max_threads` (0 reads COHERENCE_LAB_THREADS, default hardware threads).
std::vector<ScenarioReport> batch_run(const BaseCase& base, const std::vector<ScenarioSpec>& specs,
                                      unsigned max_threads = 0);

}  // namespace coherence
