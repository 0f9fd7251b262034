#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "gridadapt/controller.hpp"
#include "gridadapt/errors.hpp"
#include "testutil.hpp"

using namespace gridadapt;

TEST_CASE("linear control") {
  ControllerParams p = testutil::scalar_params(2.0, 0.1, 0.9, 0.05);
  CHECK(linear_control(Eigen::VectorXd::Zero(1), p)(0) == 0.0);
  CHECK(linear_control(Eigen::VectorXd::Constant(1, 0.05), p)(0) ==
        doctest::Approx(0.1).epsilon(1e-15));
  p.u_max = Eigen::VectorXd::Constant(1, 0.03);
  CHECK(linear_control(Eigen::VectorXd::Constant(1, 0.05), p)(0) == 0.03);
  CHECK(linear_control(Eigen::VectorXd::Constant(1, -0.05), p)(0) == -0.03);
  CHECK_THROWS_AS(linear_control(Eigen::VectorXd::Zero(2), p), DimensionError);
}

TEST_CASE("adaptive control") {
  ControllerParams p = testutil::scalar_params(1.0, 0.1, 0.9, 0.05);
  AdaptiveState s;
  s.a_tilde = {Eigen::VectorXd::Constant(1, 0.05)};
  std::vector<Eigen::VectorXd> phi = {Eigen::VectorXd::Constant(1, 2.0)};
  // u = 1 * 0.1 + 2 * 0.05 = 0.2
  CHECK(adaptive_control(Eigen::VectorXd::Constant(1, 0.1), phi, s, p)(0) ==
        doctest::Approx(0.2).epsilon(1e-15));

  // zero adaptation state reduces to the linear law bitwise
  AdaptiveState z;
  z.a_tilde = {Eigen::VectorXd::Zero(1)};
  Eigen::VectorXd v = Eigen::VectorXd::Constant(1, 0.37);
  CHECK(adaptive_control(v, phi, z, p)(0) == linear_control(v, p)(0));
}

TEST_CASE("adaptation update") {
  ControllerParams p = testutil::scalar_params(1.0, 2.0, 0.5, 0.1);
  AdaptiveState s;
  s.a_tilde = {Eigen::VectorXd::Constant(1, 0.2)};
  std::vector<Eigen::VectorXd> phi = {Eigen::VectorXd::Constant(1, 1.0)};

  // no excitation: pure decay
  AdaptiveState decayed = adapt_step(s, Eigen::VectorXd::Zero(1), phi, p);
  CHECK(decayed.a_tilde[0](0) == doctest::Approx(0.1).epsilon(1e-15));

  // alpha*0.2 + 0.1*2*1 = 0.3
  AdaptiveState next = adapt_step(s, Eigen::VectorXd::Constant(1, 0.1), phi, p);
  CHECK(next.a_tilde[0](0) == doctest::Approx(0.3).epsilon(1e-15));
}

TEST_CASE("geometric decay at alpha = 0.99 with zero voltage") {
  ControllerParams p = testutil::scalar_params(1.0, 1.0, 0.99, 0.01);
  AdaptiveState s;
  s.a_tilde = {Eigen::VectorXd::Constant(1, 0.7)};
  std::vector<Eigen::VectorXd> phi = {Eigen::VectorXd::Constant(1, 1.0)};
  for (int t = 1; t <= 50; ++t) {
    s = adapt_step(s, Eigen::VectorXd::Zero(1), phi, p);
    CHECK(s.a_tilde[0](0) ==
          doctest::Approx(0.7 * std::pow(0.99, t)).epsilon(1e-12));
  }
}

TEST_CASE("adapt_step is jointly linear in state and voltage") {
  ControllerParams p = testutil::uniform_params(3, 1.0, 0.5, 0.8, 0.1);
  std::vector<Eigen::VectorXd> phi(3);
  Rng rng(5);
  for (auto& f : phi) f = Eigen::VectorXd::Constant(1, rng.uniform(-1, 1));
  auto rand_state = [&] {
    AdaptiveState s;
    for (int i = 0; i < 3; ++i)
      s.a_tilde.push_back(Eigen::VectorXd::Constant(1, rng.uniform(-1, 1)));
    return s;
  };
  AdaptiveState s1 = rand_state(), s2 = rand_state();
  Eigen::VectorXd v1(3), v2(3);
  for (int i = 0; i < 3; ++i) {
    v1(i) = rng.uniform(-1, 1);
    v2(i) = rng.uniform(-1, 1);
  }
  AdaptiveState sum;
  for (int i = 0; i < 3; ++i) sum.a_tilde.push_back(s1.a_tilde[i] + s2.a_tilde[i]);
  AdaptiveState lhs = adapt_step(sum, v1 + v2, phi, p);
  AdaptiveState r1 = adapt_step(s1, v1, phi, p);
  AdaptiveState r2 = adapt_step(s2, v2, phi, p);
  for (int i = 0; i < 3; ++i)
    CHECK(std::abs(lhs.a_tilde[i](0) - r1.a_tilde[i](0) - r2.a_tilde[i](0)) < 1e-12);
}

TEST_CASE("parameter validation") {
  ControllerParams p = testutil::scalar_params(1.0, 0.5, 0.99, 0.01);
  CHECK_NOTHROW(p.validate());
  p.alpha = 1.0;  // violates alpha <= 1 - epsilon
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = testutil::scalar_params(-1.0, 0.5, 0.9, 0.01);
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = testutil::scalar_params(1.0, -0.5, 0.9, 0.01);  // A not PD
  CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("params file round trip, plain and factored form") {
  ControllerParams p = testutil::uniform_params(2, 3.0, 0.25, 0.95, 0.02);
  p.u_max = Eigen::VectorXd::Constant(2, 0.04);
  p.save("/tmp/params.json");
  ControllerParams back = ControllerParams::load("/tmp/params.json");
  CHECK((back.k - p.k).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.A[0] - p.A[0]).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.alpha == p.alpha);
  CHECK(back.u_max.has_value());

  // factored form: A = L L' + 1e-8 I
  {
    std::FILE* f = std::fopen("/tmp/params_chol.json", "w");
    std::fputs(
        "{\"k\":[1.0],\"alpha\":0.9,\"epsilon\":0.05,\"A_chol\":[[[0.5]]]}\n", f);
    std::fclose(f);
  }
  ControllerParams chol = ControllerParams::load("/tmp/params_chol.json");
  CHECK(chol.A[0](0, 0) == doctest::Approx(0.25 + 1e-8).epsilon(1e-12));
}
