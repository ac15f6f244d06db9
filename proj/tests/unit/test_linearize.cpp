#include <doctest.h>

#include <cmath>

#include "coherence/errors.hpp"
#include "coherence/linearize.hpp"
#include "common/systems.hpp"

using namespace coherence;

namespace {

BaseCase applied(const std::string& name) {
  const auto c = testsys::ieee68();
  const auto a = apply_scenario(c.net, c.machines, testsys::ieee68_scenario(name));
  return {a.net, a.machines};
}

}  // namespace

TEST_SUITE("linearize") {
  TEST_CASE("blocks match central differences on the 68-bus cases") {
    for (const auto* name : {"base", "scenario1", "scenario2"}) {
      const auto c = applied(name);
      const auto lin = testsys::linearize_case(c);
      const auto chk = testsys::check_blocks_fd(c, lin);
      INFO(name << " worst block " << chk.block);
      CHECK(chk.worst <= 1e-6);
    }
  }

  TEST_CASE("blocks match central differences on random systems") {
    for (unsigned seed = 1; seed <= 10; ++seed) {
      const auto c = testsys::random_system(seed, 5, seed % 3);
      for (bool lossless : {true, false}) {
        const auto lin = testsys::linearize_case(c, lossless);
        const auto chk = testsys::check_blocks_fd(c, lin, lossless);
        INFO("seed " << seed << " worst block " << chk.block);
        CHECK(chk.worst <= 1e-6);
      }
    }
  }

  TEST_CASE("SG self term is the synchronizing torque coefficient") {
    const auto c = testsys::ieee68();
    const auto lin = testsys::linearize_case(c);
    const auto& s = lin.sys;
    const auto nb = static_cast<Eigen::Index>(c.net.size());
    for (Eigen::Index k = 0; k < 16; ++k) {
      const auto b = static_cast<Eigen::Index>(c.net.index_of(c.machines.sgs[static_cast<std::size_t>(k)].bus));
      const std::complex<double> v(s.v0(b), s.v0(nb + b));
      const double expected = -s.e0(k) * std::abs(v) / c.machines.sgs[static_cast<std::size_t>(k)].xd_prime *
                              std::cos(s.delta0(k) - std::arg(v));
      CHECK(std::abs(s.a11(k, k) - expected) <= 1e-10 * std::abs(expected));
    }
    CHECK((s.a11 - Eigen::MatrixXd(s.a11.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("GFM equivalent inertia is tau/lambda_p") {
    const BaseCase c{load_network(testsys::fixture_path("microgrid/network.json")),
                     load_machines(testsys::fixture_path("microgrid/machines.json"))};
    const auto lin = testsys::linearize_case(c);
    const double w0 = c.net.omega0();
    for (Eigen::Index k = 0; k < 2; ++k) {
      CHECK(lin.sys.m_e(k) == doctest::Approx(0.05 / 0.05 / w0).epsilon(1e-14));
      CHECK(lin.sys.d_e(k) == doctest::Approx(1.0 / 0.05 / w0).epsilon(1e-14));
    }
  }

  TEST_CASE("two-machine Laplacian from the internal susceptance") {
    const BaseCase c{load_network(testsys::fixture_path("two_machine/network.json")),
                     load_machines(testsys::fixture_path("two_machine/machines.json"))};
    const auto lin = testsys::linearize_case(c);
    const auto b = testsys::oracle_internal_susceptance(c.net, c.machines, lin.op);
    const double k = lin.sys.e0(0) * lin.sys.e0(1) * b(0, 1) * std::cos(lin.sys.delta0(0) - lin.sys.delta0(1));
    Eigen::Matrix2d expected;
    expected << -k, k, k, -k;
    CHECK((lin.lap.l - expected).cwiseAbs().maxCoeff() <= 1e-10 * std::abs(k));
  }

  TEST_CASE("68-bus Laplacian has zero row sums and is symmetric") {
    for (const auto* name : {"base", "scenario1", "scenario2"}) {
      const auto lin = testsys::linearize_case(applied(name));
      const auto st = lemma1_check(lin.lap.l);
      CHECK(st.max <= 1e-10);
      CHECK(std::abs(st.mean) <= 1e-11);
      CHECK((lin.lap.l - lin.lap.l.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
      CHECK((lin.lap.l_bar - lin.lap.m_e.cwiseInverse().asDiagonal() * lin.lap.l).cwiseAbs().maxCoeff() == 0.0);
    }
  }

  TEST_CASE("Jacobian Laplacian equals the closed form") {
    auto check_case = [](const BaseCase& c) {
      const auto lin = testsys::linearize_case(c);
      const auto b = testsys::oracle_internal_susceptance(c.net, c.machines, lin.op);
      const auto oracle = testsys::oracle_laplacian(lin.sys.e0, lin.sys.delta0, b);
      CHECK((lin.lap.l - oracle).cwiseAbs().maxCoeff() <= 1e-8);
      const auto lib_b = kron_susceptance(c.net, c.machines, lin.op);
      CHECK((lib_b - b).cwiseAbs().maxCoeff() <= 1e-8);
      CHECK((laplacian_closed_form(lin.sys.e0, lin.sys.delta0, lib_b) - oracle).cwiseAbs().maxCoeff() <= 1e-8);
    };
    check_case(testsys::ieee68());
    check_case(applied("scenario2"));
    for (unsigned seed = 1; seed <= 10; ++seed) check_case(testsys::random_system(100 + seed, 5, seed % 2));
  }

  TEST_CASE("closed form: disconnected pair and identical machines") {
    Eigen::Matrix3d b = Eigen::Matrix3d::Zero();
    b(0, 1) = b(1, 0) = 4.0;
    const Eigen::Vector3d e(1.1, 1.1, 1.0), d(0.2, 0.2, -0.3);
    const auto l = laplacian_closed_form(e, d, b);
    CHECK(l(0, 2) == 0.0);
    CHECK(l(1, 2) == 0.0);
    CHECK(l(0, 1) == doctest::Approx(1.21 * 4.0));
    CHECK(l(0, 0) == doctest::Approx(-1.21 * 4.0));
  }

  TEST_CASE("row-sum statistics vanish on an exact graph Laplacian") {
    Eigen::Matrix3d l;
    l << -3, 1, 2, 1, -1, 0, 2, 0, -2;
    const auto st = lemma1_check(l);
    CHECK(st.mean == 0.0);
    CHECK(st.std == 0.0);
    CHECK(st.max == 0.0);
  }

  TEST_CASE("singular network block is reported") {
    LinearizedSystem s;
    s.a33 = Eigen::MatrixXd::Zero(4, 4);
    s.a1 = Eigen::MatrixXd::Zero(2, 2);
    s.a2 = Eigen::MatrixXd::Zero(2, 4);
    s.a3 = Eigen::MatrixXd::Zero(4, 2);
    s.a4 = Eigen::MatrixXd::Zero(2, 0);
    s.a34 = Eigen::MatrixXd::Zero(4, 0);
    CHECK_THROWS_AS(kron_reduce(s), SingularMatrixError);
  }

  TEST_CASE("linearizing away from equilibrium is refused") {
    const auto c = testsys::ieee68();
    const auto pf = solve_power_flow(c.net, c.machines);
    auto op = init_dynamic_states(c.net, c.machines, pf);
    op.sg_states[3].delta += 0.05;
    CHECK_THROWS_AS(build_jacobians(c.net, c.machines, op, true), PreconditionError);
  }

  TEST_CASE("state matrix of an all-SG system has one zero mode and no unstable ones") {
    const auto c = testsys::ieee68();
    const auto lin = testsys::linearize_case(c);
    const auto sm = full_state_matrix(lin.sys, c.machines, lin.lap);
    const Eigen::EigenSolver<Eigen::MatrixXd> es(sm.a, false);
    const auto ev = es.eigenvalues();
    int zeros = 0;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
      if (std::abs(ev(i)) < 1e-8) ++zeros;
      CHECK(ev(i).real() <= 1e-8);
    }
    CHECK(zeros == 1);
  }

  TEST_CASE("state matrix with GFMs is stable at the 68-bus scenarios") {
    const auto c = applied("scenario2");
    const auto lin = testsys::linearize_case(c);
    const auto sm = full_state_matrix(lin.sys, c.machines, lin.lap);
    CHECK(sm.a.rows() == 2 * 16 + 2 * 3);
    const Eigen::EigenSolver<Eigen::MatrixXd> es(sm.a, false);
    CHECK(es.eigenvalues().real().maxCoeff() <= 1e-8);
  }
}
