#include "coherence/network.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>
#include <stdexcept>

#include "coherence/errors.hpp"
#include "json_util.hpp"

namespace coherence {

double Network::omega0() const noexcept { return 2.0 * std::numbers::pi * f0_hz; }

std::size_t Network::index_of(int bus_id) const {
  if (bus_id >= 1 && static_cast<std::size_t>(bus_id) <= buses.size() &&
      buses[static_cast<std::size_t>(bus_id - 1)].id == bus_id) {
    return static_cast<std::size_t>(bus_id - 1);
  }
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (buses[i].id == bus_id) return i;
  }
  throw std::out_of_range("bus " + std::to_string(bus_id) + " does not exist");
}

bool Network::has_bus(int bus_id) const noexcept {
  return std::any_of(buses.begin(), buses.end(), [bus_id](const Bus& b) { return b.id == bus_id; });
}

std::size_t Network::slack_index() const {
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (buses[i].kind == BusKind::Slack) return i;
  }
  throw ValidationError({"no slack bus"});
}

double Network::total_load_p() const noexcept {
  return std::accumulate(buses.begin(), buses.end(), 0.0,
                         [](double acc, const Bus& b) { return acc + b.load_p; });
}

BusKind bus_kind_from_string(const std::string& s) {
  if (s == "slack") return BusKind::Slack;
  if (s == "pv") return BusKind::PV;
  if (s == "pq") return BusKind::PQ;
  throw ParseError("unknown bus kind '" + s + "'");
}

std::string to_string(BusKind kind) {
  switch (kind) {
    case BusKind::Slack:
      return "slack";
    case BusKind::PV:
      return "pv";
    case BusKind::PQ:
      return "pq";
  }
  return "pq";
}

Network network_from_json(const nlohmann::json& doc) {
  using namespace detail;
  const std::string root = "network";
  Network net;
  net.base_mva = number(doc, "base_mva", root);
  net.f0_hz = number(doc, "f0_hz", root);

  const auto& buses = array(doc, "buses", root);
  net.buses.reserve(buses.size());
  for (std::size_t i = 0; i < buses.size(); ++i) {
    const std::string where = indexed(root, "buses", i);
    Bus b;
    b.id = integer(buses[i], "id", where);
    try {
      b.kind = bus_kind_from_string(string(buses[i], "kind", where));
    } catch (const ParseError& e) {
      throw ParseError(where + ".kind: " + e.what());
    }
    b.v_setpoint = optional_number(buses[i], "v_setpoint", where);
    b.load_p = number_or(buses[i], "load_p", 0.0, where);
    b.load_q = number_or(buses[i], "load_q", 0.0, where);
    b.shunt_g = number_or(buses[i], "shunt_g", 0.0, where);
    b.shunt_b = number_or(buses[i], "shunt_b", 0.0, where);
    net.buses.push_back(b);
  }

  const auto& branches = array(doc, "branches", root);
  net.branches.reserve(branches.size());
  for (std::size_t i = 0; i < branches.size(); ++i) {
    const std::string where = indexed(root, "branches", i);
    Branch br;
    br.from = integer(branches[i], "from", where);
    br.to = integer(branches[i], "to", where);
    br.r = number_or(branches[i], "r", 0.0, where);
    br.x = number(branches[i], "x", where);
    br.b_charging = number_or(branches[i], "b_charging", 0.0, where);
    br.tap = number_or(branches[i], "tap", 1.0, where);
    net.branches.push_back(br);
  }

  std::stable_sort(net.buses.begin(), net.buses.end(),
                   [](const Bus& a, const Bus& b) { return a.id < b.id; });
  validate(net);
  return net;
}

nlohmann::json to_json(const Network& net) {
  nlohmann::json doc;
  doc["base_mva"] = net.base_mva;
  doc["f0_hz"] = net.f0_hz;
  doc["buses"] = nlohmann::json::array();
  for (const auto& b : net.buses) {
    nlohmann::json j{{"id", b.id},           {"kind", to_string(b.kind)}, {"load_p", b.load_p},
                     {"load_q", b.load_q},   {"shunt_g", b.shunt_g},      {"shunt_b", b.shunt_b}};
    if (b.v_setpoint) j["v_setpoint"] = *b.v_setpoint;
    doc["buses"].push_back(std::move(j));
  }
  doc["branches"] = nlohmann::json::array();
  for (const auto& br : net.branches) {
    doc["branches"].push_back({{"from", br.from},
                               {"to", br.to},
                               {"r", br.r},
                               {"x", br.x},
                               {"b_charging", br.b_charging},
                               {"tap", br.tap}});
  }
  return doc;
}

Network load_network(const std::filesystem::path& path) {
  const auto doc = detail::read_json_file(path);
  try {
    return network_from_json(doc);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void validate(const Network& net) {
  std::vector<std::string> v;
  if (net.buses.empty()) v.emplace_back("network has no buses");
  if (!(net.base_mva > 0.0)) v.emplace_back("base_mva must be positive");
  if (!(net.f0_hz > 0.0)) v.emplace_back("f0_hz must be positive");

  std::set<int> seen;
  for (const auto& b : net.buses) {
    if (!seen.insert(b.id).second) v.push_back("duplicate bus id " + std::to_string(b.id));
  }
  if (v.empty()) {
    for (std::size_t i = 0; i < net.buses.size(); ++i) {
      if (net.buses[i].id != static_cast<int>(i) + 1) {
        v.push_back("bus ids must form the contiguous range 1.." + std::to_string(net.buses.size()));
        break;
      }
    }
  }

  std::size_t slack_count = 0;
  for (const auto& b : net.buses) {
    const std::string tag = "bus " + std::to_string(b.id);
    if (b.kind == BusKind::Slack) ++slack_count;
    if (b.kind != BusKind::PQ) {
      if (!b.v_setpoint) {
        v.push_back(tag + ": " + to_string(b.kind) + " bus needs v_setpoint");
      } else if (!(*b.v_setpoint > 0.0)) {
        v.push_back(tag + ": v_setpoint must be positive");
      }
    }
    if (b.shunt_g < 0.0) v.push_back(tag + ": shunt_g must be >= 0");
  }
  if (slack_count == 0) v.emplace_back("no slack bus");
  if (slack_count > 1) v.push_back("expected exactly one slack bus, found " + std::to_string(slack_count));

  for (std::size_t i = 0; i < net.branches.size(); ++i) {
    const auto& br = net.branches[i];
    const std::string tag = "branch " + std::to_string(i) + " (" + std::to_string(br.from) + "-" +
                            std::to_string(br.to) + ")";
    if (br.x == 0.0) v.push_back(tag + ": x must be nonzero");
    if (br.from == br.to) v.push_back(tag + ": from and to must differ");
    if (!seen.count(br.from)) v.push_back(tag + ": unknown bus " + std::to_string(br.from));
    if (!seen.count(br.to)) v.push_back(tag + ": unknown bus " + std::to_string(br.to));
    if (!(br.tap > 0.0)) v.push_back(tag + ": tap must be positive");
  }

  if (v.empty()) {
    const auto conn = connectivity_check(net);
    if (!conn.connected) v.emplace_back("network graph is disconnected");
  }
  if (!v.empty()) throw ValidationError(std::move(v));
}

Connectivity connectivity_check(const Network& net) {
  const std::size_t n = net.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t i) {
    while (parent[i] != i) {
      parent[i] = parent[parent[i]];
      i = parent[i];
    }
    return i;
  };
  auto lookup = [&](int id) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < n; ++i)
      if (net.buses[i].id == id) return i;
    return std::nullopt;
  };
  for (const auto& br : net.branches) {
    auto a = lookup(br.from);
    auto b = lookup(br.to);
    if (!a || !b) continue;
    const auto ra = find(*a), rb = find(*b);
    if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
  }
  Connectivity out;
  out.labels.assign(n, 0);
  std::vector<int> label_of_root(n, 0);
  int next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = find(i);
    if (label_of_root[r] == 0) label_of_root[r] = ++next;
    out.labels[i] = label_of_root[r];
  }
  out.connected = next == 1;
  return out;
}

Eigen::MatrixXcd build_admittance(const Network& net, bool lossless) {
  const auto n = static_cast<Eigen::Index>(net.size());
  Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
  using cd = std::complex<double>;
  for (const auto& br : net.branches) {
    const auto f = static_cast<Eigen::Index>(net.index_of(br.from));
    const auto t = static_cast<Eigen::Index>(net.index_of(br.to));
    const cd ys = 1.0 / cd(lossless ? 0.0 : br.r, br.x);
    const cd half_charging(0.0, 0.5 * br.b_charging);
    const double tap = br.tap;
    y(f, f) += (ys + half_charging) / (tap * tap);
    y(t, t) += ys + half_charging;
    y(f, t) -= ys / tap;
    y(t, f) -= ys / tap;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& b = net.buses[static_cast<std::size_t>(i)];
    y(i, i) += cd(lossless ? 0.0 : b.shunt_g, b.shunt_b);
  }
  return y;
}

}  // namespace coherence
