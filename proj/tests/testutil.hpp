#pragma once

#include <Eigen/Dense>
#include <string>

#include "gridadapt/controller.hpp"
#include "gridadapt/feeder.hpp"
#include "gridadapt/rng.hpp"
#include "gridadapt/scenario.hpp"

namespace testutil {

inline std::string data_path(const std::string& name) {
  return std::string(GRIDADAPT_DATA_DIR) + "/" + name;
}

// 2-bus chain from the worked construction example:
// lines (0-1, r=0.1, x=0.2), (1-2, r=0.1, x=0.1) in p.u.
inline gridadapt::FeederTopology two_bus_topology() {
  gridadapt::FeederTopology topo;
  topo.bus_count = 2;
  topo.lines = {{0, 1, 0.1, 0.2}, {1, 2, 0.1, 0.1}};
  return topo;
}

inline gridadapt::FeederModel two_bus_model() {
  return gridadapt::build_feeder(two_bus_topology());
}

// Single bus behind one line with x = 1 (so X = [[1]]).
inline gridadapt::FeederModel unit_bus_model(double r = 1.0) {
  gridadapt::FeederTopology topo;
  topo.bus_count = 1;
  topo.lines = {{0, 1, r, 1.0}};
  return gridadapt::build_feeder(topo);
}

inline const gridadapt::FeederModel& ieee33_model() {
  static gridadapt::FeederModel model =
      gridadapt::build_feeder(gridadapt::load_feeder_file(data_path("ieee33.feeder")));
  return model;
}

inline const gridadapt::FeederModel& trunk6_model() {
  static gridadapt::FeederModel model =
      gridadapt::build_feeder(gridadapt::load_feeder_file(data_path("trunk6.feeder")));
  return model;
}

inline gridadapt::ControllerParams scalar_params(double k, double A, double alpha,
                                                 double epsilon) {
  gridadapt::ControllerParams p;
  p.k = Eigen::VectorXd::Constant(1, k);
  p.A = {Eigen::MatrixXd::Constant(1, 1, A)};
  p.alpha = alpha;
  p.epsilon = epsilon;
  return p;
}

inline gridadapt::ControllerParams uniform_params(int n, double k, double A,
                                                  double alpha, double epsilon,
                                                  int m = 1) {
  gridadapt::ControllerParams p;
  p.k = Eigen::VectorXd::Constant(n, k);
  p.A.assign(n, Eigen::MatrixXd::Identity(m, m) * A);
  p.alpha = alpha;
  p.epsilon = epsilon;
  return p;
}

// Scenario with an explicitly tabulated basis (one column per bus unless a
// wider table is given); p is held constant so tests control every drive.
inline gridadapt::LoadScenario tabulated_scenario(int n, int T,
                                                  const Eigen::MatrixXd& phi_table,
                                                  const Eigen::VectorXd& c,
                                                  const Eigen::VectorXd& p0) {
  gridadapt::LoadScenario sc;
  sc.horizon = T;
  sc.p0 = p0;
  sc.basis.kind = gridadapt::BasisKind::Tabulated;
  sc.basis.dims.assign(n, 1);
  sc.basis.table.resize(n);
  for (int i = 0; i < n; ++i) sc.basis.table[i] = phi_table.col(i);
  sc.coeff.resize(n);
  for (int i = 0; i < n; ++i) sc.coeff[i] = Eigen::VectorXd::Constant(1, c(i));
  sc.delta_p = Eigen::MatrixXd::Zero(T + 1, n);
  sc.p.resize(T + 1, n);
  sc.p.row(0) = p0.transpose();
  for (int t = 0; t < T; ++t)
    for (int i = 0; i < n; ++i)
      sc.p(t + 1, i) = sc.p(t, i) + c(i) * phi_table(t, i);
  sc.seed = 7;
  return sc;
}

// Random tree topology on n load buses (parent of bus b drawn below b).
inline gridadapt::FeederTopology random_tree(int n, gridadapt::Rng& rng) {
  gridadapt::FeederTopology topo;
  topo.bus_count = n;
  for (int b = 1; b <= n; ++b) {
    int parent = static_cast<int>(rng.below(static_cast<std::uint64_t>(b)));
    topo.lines.push_back({parent, b, rng.uniform(0.05, 0.5), rng.uniform(0.05, 0.5)});
  }
  return topo;
}

}  // namespace testutil
