#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <vector>

namespace coherence {

enum class BusKind { Slack, PV, PQ };

/// One network bus. All quantities per-unit on the system base.
struct Bus {
  int id = 0;
  BusKind kind = BusKind::PQ;
  std::optional<double> v_setpoint;  ///< slack/pv only
  double load_p = 0.0;
  double load_q = 0.0;
  double shunt_g = 0.0;
  double shunt_b = 0.0;
};

/// Standard pi-model branch. The off-nominal tap sits on the `from` side.
struct Branch {
  int from = 0;
  int to = 0;
  double r = 0.0;
  double x = 0.0;
  double b_charging = 0.0;  ///< total line-charging susceptance
  double tap = 1.0;
};

struct Network {
  std::vector<Bus> buses;  ///< sorted by id, ids are 1..N
  std::vector<Branch> branches;
  double base_mva = 100.0;
  double f0_hz = 60.0;

  std::size_t size() const noexcept { return buses.size(); }
  double omega0() const noexcept;
  /// Zero-based row index of a bus id. Throws std::out_of_range.
  std::size_t index_of(int bus_id) const;
  bool has_bus(int bus_id) const noexcept;
  std::size_t slack_index() const;
  double total_load_p() const noexcept;
};

Network network_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const Network& net);
Network load_network(const std::filesystem::path& path);

/// Throws ValidationError listing every violated invariant.
void validate(const Network& net);

struct Connectivity {
  bool connected = false;
  std::vector<int> labels;  ///< component label per bus, 1-based, in bus order
};

Connectivity connectivity_check(const Network& net);

/// Complex bus admittance matrix. `lossless` zeroes series resistance and
/// shunt conductance before assembly. Parallel branches accumulate.
Eigen::MatrixXcd build_admittance(const Network& net, bool lossless);

BusKind bus_kind_from_string(const std::string& s);
std::string to_string(BusKind kind);

}  // namespace coherence
