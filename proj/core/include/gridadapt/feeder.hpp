#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace gridadapt {

struct Line {
  int from = 0;
  int to = 0;
  double r = 0.0;  // p.u.
  double x = 0.0;  // p.u.
};

/// Radial network description. Bus 0 is the substation/slack bus and is
/// excluded from bus_count; the lines must form a tree rooted at bus 0
/// (exactly bus_count lines, every bus reachable, strictly positive
/// impedances).
struct FeederTopology {
  int bus_count = 0;        // load buses, substation excluded
  std::vector<Line> lines;  // impedances already in p.u.
  double base_kva = 100.0;
  double base_kv = 12.66;

  /// Throws TopologyError if the tree/positivity invariants fail.
  void validate() const;
};

/// Dense sensitivity model: v = R p + X q + 1 with R, X symmetric positive
/// definite. D_e and D_o are the diagonal and hollow parts of X^{-1} R used
/// to split local from non-local injection effects.
struct FeederModel {
  FeederTopology topology;
  Eigen::MatrixXd R;
  Eigen::MatrixXd X;
  Eigen::MatrixXd D_e;
  Eigen::MatrixXd D_o;

  int n() const { return topology.bus_count; }
};

/// Builds R and X by common-path impedance sums over the tree:
/// R_ij = scale_factor * sum of line resistances on the shared portion of the
/// substation-to-i and substation-to-j paths (likewise X with reactances).
/// scale_factor 1.0 is the voltage-magnitude convention; 2.0 reproduces the
/// squared-voltage convention.
///
/// Throws TopologyError for non-tree input and ModelError if the resulting
/// matrices are not positive definite (lambda_min <= 1e-10 after
/// symmetrization).
FeederModel build_feeder(const FeederTopology& topology, double scale_factor = 1.0);

/// v = R p + X q + 1, per-unit voltages. Throws DimensionError.
Eigen::VectorXd voltage_from_injections(const FeederModel& model,
                                        const Eigen::VectorXd& p,
                                        const Eigen::VectorXd& q);

/// Parses the plain-text line-list format:
///   header  `buses=<total> base_kva=<v> base_kv=<v>`
///   branch  `from_bus to_bus r_ohm x_ohm`
/// Comment lines start with '#'. Ohmic values are converted to p.u. on the
/// declared bases. bus_count of the result excludes the substation.
/// Throws FormatError (with line number) or TopologyError.
FeederTopology load_feeder_file(const std::string& path);

}  // namespace gridadapt
