#include <doctest.h>

#include <algorithm>
#include <complex>
#include <random>

#include "coherence/errors.hpp"
#include "coherence/network.hpp"
#include "common/systems.hpp"

using namespace coherence;
using cd = std::complex<double>;

namespace {

Network two_bus(double r = 0.0, double tap = 1.0) {
  Network n;
  n.buses = {{1, BusKind::Slack, 1.0, 0, 0, 0, 0}, {2, BusKind::PQ, std::nullopt, 0.5, 0, 0, 0}};
  n.branches = {{1, 2, r, 0.1, 0.0, tap}};
  return n;
}

std::string violations_of(const nlohmann::json& doc) {
  try {
    network_from_json(doc);
  } catch (const ValidationError& e) {
    std::string all;
    for (const auto& v : e.violations()) all += v + "\n";
    return all;
  }
  return "";
}

}  // namespace

TEST_SUITE("network") {
  TEST_CASE("two-bus fixture loads") {
    const auto net = load_network(testsys::fixture_path("two_bus/network.json"));
    CHECK(net.size() == 2);
    CHECK(net.branches.size() == 1);
    CHECK(net.buses[net.slack_index()].id == 1);
  }

  TEST_CASE("68-bus fixture has 68 buses and machines on 53..68") {
    const auto c = testsys::ieee68();
    CHECK(c.net.size() == 68);
    REQUIRE(c.machines.sgs.size() == 16);
    for (std::size_t i = 0; i < 16; ++i) CHECK(c.machines.sgs[i].bus == 53 + static_cast<int>(i));
    CHECK(c.net.total_load_p() * c.net.base_mva == doctest::Approx(18408.0).epsilon(0.01));
    CHECK(connectivity_check(c.net).connected);
  }

  TEST_CASE("duplicate bus id is rejected") {
    auto doc = to_json(two_bus());
    doc["buses"][1]["id"] = 1;
    CHECK(violations_of(doc).find("duplicate bus id") != std::string::npos);
  }

  TEST_CASE("every violation is reported at once") {
    auto doc = to_json(two_bus());
    doc["branches"][0]["x"] = 0.0;
    doc["branches"][0]["to"] = 9;
    doc["buses"][1]["shunt_g"] = -1.0;
    const auto all = violations_of(doc);
    CHECK(all.find("unknown bus 9") != std::string::npos);
    CHECK(std::count(all.begin(), all.end(), '\n') >= 3);
  }

  TEST_CASE("malformed field raises ParseError with its path") {
    auto doc = to_json(two_bus());
    doc["branches"][0]["x"] = "big";
    CHECK_THROWS_AS(network_from_json(doc), ParseError);
  }

  TEST_CASE("single lossless line") {
    const auto y = build_admittance(two_bus(), false);
    const cd ys = 1.0 / cd(0.0, 0.1);
    CHECK(std::abs(y(0, 0) - ys) < 1e-12);
    CHECK(std::abs(y(1, 1) - ys) < 1e-12);
    CHECK(std::abs(y(0, 1) + ys) < 1e-12);
    CHECK(std::abs(y(1, 0) + ys) < 1e-12);
    CHECK(std::abs(y(0, 0) - cd(0.0, -10.0)) < 1e-12);
  }

  TEST_CASE("series resistance enters 1/(r+jx)") {
    const auto y = build_admittance(two_bus(0.01), false);
    // (0.01 - 0.1j) / (0.01^2 + 0.1^2)
    const cd expected(0.01 / 0.0101, -0.1 / 0.0101);
    CHECK(std::abs(y(0, 0) - expected) < 1e-12);
    CHECK(std::abs(y(0, 1) + expected) < 1e-12);
    const auto yl = build_admittance(two_bus(0.01), true);
    CHECK(std::abs(yl(0, 0) - cd(0.0, -10.0)) < 1e-12);
  }

  TEST_CASE("off-nominal tap scales the from side") {
    const double t = 1.02;
    const auto y = build_admittance(two_bus(0.0, t), false);
    const cd ys = 1.0 / cd(0.0, 0.1);
    CHECK(std::abs(y(0, 0) - ys / (t * t)) < 1e-12);
    CHECK(std::abs(y(1, 1) - ys) < 1e-12);
    CHECK(std::abs(y(0, 1) + ys / t) < 1e-12);
    CHECK(std::abs(y(0, 0) - y(1, 1)) > 1e-3);
  }

  TEST_CASE("connectivity labels") {
    auto n = two_bus();
    CHECK(connectivity_check(n).connected);
    n.buses.push_back({3, BusKind::PQ, std::nullopt, 0, 0, 0, 0});
    const auto c = connectivity_check(n);
    CHECK_FALSE(c.connected);
    CHECK(c.labels == std::vector<int>{1, 1, 2});
  }

  TEST_CASE("JSON round trip preserves the admittance matrix") {
    const auto c = testsys::random_system(7, 6);
    const auto back = network_from_json(to_json(c.net));
    CHECK((build_admittance(back, false) - build_admittance(c.net, false)).cwiseAbs().maxCoeff() < 1e-15);
  }

  TEST_CASE("admittance is invariant to branch order and equivariant to bus relabeling") {
    std::mt19937 rng(11);
    for (unsigned seed = 1; seed <= 5; ++seed) {
      auto c = testsys::random_system(seed, 5);
      const auto y = build_admittance(c.net, false);

      auto shuffled = c.net;
      std::shuffle(shuffled.branches.begin(), shuffled.branches.end(), rng);
      CHECK((build_admittance(shuffled, false) - y).cwiseAbs().maxCoeff() < 1e-12);

      const auto n = static_cast<int>(c.net.size());
      std::vector<int> perm(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i + 1;
      std::shuffle(perm.begin(), perm.end(), rng);
      auto relabeled = c.net;
      for (auto& b : relabeled.buses) b.id = perm[static_cast<std::size_t>(b.id - 1)];
      for (auto& br : relabeled.branches) {
        br.from = perm[static_cast<std::size_t>(br.from - 1)];
        br.to = perm[static_cast<std::size_t>(br.to - 1)];
      }
      relabeled = network_from_json(to_json(relabeled));
      const auto yr = build_admittance(relabeled, false);
      double err = 0.0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          err = std::max(err, std::abs(y(i, j) - yr(perm[static_cast<std::size_t>(i)] - 1, perm[static_cast<std::size_t>(j)] - 1)));
      CHECK(err < 1e-12);
    }
  }
}
