#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cstdio>
#include <fstream>

#include "gridadapt/errors.hpp"
#include "gridadapt/feeder.hpp"
#include "testutil.hpp"

using namespace gridadapt;
using testutil::two_bus_model;
using testutil::two_bus_topology;

TEST_CASE("two-bus chain matches the hand path-sum construction") {
  FeederModel m = two_bus_model();
  Eigen::MatrixXd X_ref(2, 2), R_ref(2, 2);
  X_ref << 0.2, 0.2, 0.2, 0.3;
  R_ref << 0.1, 0.1, 0.1, 0.2;
  CHECK((m.X - X_ref).cwiseAbs().maxCoeff() == doctest::Approx(0.0).epsilon(1e-14));
  CHECK((m.R - R_ref).cwiseAbs().maxCoeff() == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("scale factor multiplies both sensitivity matrices") {
  FeederModel m1 = build_feeder(two_bus_topology(), 1.0);
  FeederModel m2 = build_feeder(two_bus_topology(), 2.0);
  CHECK((m2.X - 2.0 * m1.X).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((m2.R - 2.0 * m1.R).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("non-positive line impedance is rejected") {
  FeederTopology topo;
  topo.bus_count = 1;
  topo.lines = {{0, 1, 0.0, 1.0}};
  CHECK_THROWS_AS(build_feeder(topo), TopologyError);
  topo.lines = {{0, 1, 0.1, -0.2}};
  CHECK_THROWS_AS(build_feeder(topo), TopologyError);
}

TEST_CASE("non-tree topologies are rejected") {
  FeederTopology topo;
  topo.bus_count = 2;
  topo.lines = {{0, 1, 0.1, 0.1}, {0, 1, 0.1, 0.1}};  // duplicate edge = cycle
  CHECK_THROWS_AS(build_feeder(topo), TopologyError);
  topo.lines = {{0, 1, 0.1, 0.1}};  // wrong line count
  CHECK_THROWS_AS(build_feeder(topo), TopologyError);
  topo.lines = {{0, 1, 0.1, 0.1}, {1, 1, 0.1, 0.1}};  // self loop
  CHECK_THROWS_AS(build_feeder(topo), TopologyError);
}

TEST_CASE("bundled 33-bus feeder loads and is positive definite") {
  FeederTopology topo = load_feeder_file(testutil::data_path("ieee33.feeder"));
  CHECK(topo.bus_count == 32);
  CHECK(topo.lines.size() == 32);
  FeederModel m = build_feeder(topo);
  CHECK((m.X - m.X.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.X);
  CHECK(es.eigenvalues().minCoeff() > 0.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> esr(m.R);
  CHECK(esr.eigenvalues().minCoeff() > 0.0);

  // D_e + D_o reassembles X^{-1} R; D_e diagonal, D_o hollow
  Eigen::MatrixXd xinv_r = m.X.llt().solve(m.R);
  CHECK((m.D_e + m.D_o - xinv_r).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((m.D_e - Eigen::MatrixXd(m.D_e.diagonal().asDiagonal())).cwiseAbs().maxCoeff() ==
        0.0);
  CHECK(m.D_o.diagonal().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("feeder file errors carry context") {
  auto write_tmp = [](const std::string& name, const std::string& content) {
    std::string path = "/tmp/" + name;
    std::ofstream out(path);
    out << content;
    return path;
  };
  CHECK_THROWS_AS(load_feeder_file("/nonexistent/feeder.txt"), FormatError);
  CHECK_THROWS_AS(load_feeder_file(write_tmp("empty.feeder", "")), FormatError);
  CHECK_THROWS_AS(load_feeder_file(write_tmp("hdr.feeder", "buses=three\n")), FormatError);
  // duplicated branch creates a cycle
  CHECK_THROWS_AS(load_feeder_file(write_tmp("cycle.feeder",
                                             "buses=3 base_kva=100 base_kv=12.66\n"
                                             "0 1 1.0 1.0\n0 1 1.0 1.0\n")),
                  TopologyError);
}

TEST_CASE("voltage from injections") {
  FeederModel m = two_bus_model();
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(2);
  CHECK((voltage_from_injections(m, zero, zero) - Eigen::VectorXd::Ones(2))
            .cwiseAbs()
            .maxCoeff() == 0.0);

  Eigen::VectorXd p(2), q(2);
  p << 1.0, 0.0;
  q << 0.0, 0.0;
  Eigen::VectorXd v = voltage_from_injections(m, p, q);
  CHECK(v(0) == doctest::Approx(1.1).epsilon(1e-14));
  CHECK(v(1) == doctest::Approx(1.1).epsilon(1e-14));

  CHECK_THROWS_AS(voltage_from_injections(m, Eigen::VectorXd::Zero(3), zero),
                  DimensionError);
}

TEST_CASE("p = -q cancels when R equals X") {
  FeederTopology topo;
  topo.bus_count = 2;
  topo.lines = {{0, 1, 0.2, 0.2}, {1, 2, 0.1, 0.1}};
  FeederModel m = build_feeder(topo);
  Eigen::VectorXd p(2);
  p << 0.7, -0.3;
  Eigen::VectorXd v = voltage_from_injections(m, p, -p);
  CHECK((v - Eigen::VectorXd::Ones(2)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("voltage map is affine in the injections") {
  FeederModel m = two_bus_model();
  Rng rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd p1(2), p2(2), q1(2), q2(2);
    for (int i = 0; i < 2; ++i) {
      p1(i) = rng.uniform(-1, 1);
      p2(i) = rng.uniform(-1, 1);
      q1(i) = rng.uniform(-1, 1);
      q2(i) = rng.uniform(-1, 1);
    }
    Eigen::VectorXd ones = Eigen::VectorXd::Ones(2);
    Eigen::VectorXd lhs = voltage_from_injections(m, p1 + p2, q1 + q2) - ones;
    Eigen::VectorXd rhs = (voltage_from_injections(m, p1, q1) - ones) +
                          (voltage_from_injections(m, p2, q2) - ones);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("bus relabeling permutes rows and columns") {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    int n = 3 + static_cast<int>(rng.below(5));
    FeederTopology topo = testutil::random_tree(n, rng);
    FeederModel base = build_feeder(topo);

    // random permutation of load buses 1..n (Fisher-Yates)
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i + 1;
    for (int i = n - 1; i > 0; --i)
      std::swap(perm[i], perm[rng.below(static_cast<std::uint64_t>(i + 1))]);

    FeederTopology relabeled = topo;
    for (auto& line : relabeled.lines) {
      if (line.from != 0) line.from = perm[line.from - 1];
      line.to = perm[line.to - 1];
    }
    FeederModel permuted = build_feeder(relabeled);
    for (int i = 1; i <= n; ++i)
      for (int j = 1; j <= n; ++j) {
        CHECK(permuted.X(perm[i - 1] - 1, perm[j - 1] - 1) ==
              doctest::Approx(base.X(i - 1, j - 1)).epsilon(1e-13));
        CHECK(permuted.R(perm[i - 1] - 1, perm[j - 1] - 1) ==
              doctest::Approx(base.R(i - 1, j - 1)).epsilon(1e-13));
      }
  }
}
