#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "gridadapt/controller.hpp"
#include "gridadapt/feeder.hpp"
#include "gridadapt/scenario.hpp"

namespace gridadapt {

enum class ControllerKind { Linear, Adaptive };

/// Index convention for the voltage update: Next computes v(t+1) from p(t+1)
/// (the physically simultaneous injection; the lumped-dynamics equivalence
/// holds exactly under this convention). Previous uses p(t) instead and is
/// kept for ablation.
enum class PConvention { Next, Previous };

/// Raw iterates the q/v update directly from the stored p series; Decomposed
/// drives the voltage recursion with the lumped terms (a, delta_v) instead.
/// Both paths agree to float precision under PConvention::Next.
enum class DynamicsPath { Raw, Decomposed };

struct CostSpec {
  enum class VNorm { L1, L2, Linf };
  enum class UNorm { L1, L2 };
  double gamma = 1e-3;
  VNorm v_norm = VNorm::L1;
  UNorm u_norm = UNorm::L1;
};

struct RolloutOptions {
  ControllerKind controller = ControllerKind::Adaptive;
  int horizon = -1;  // -1: use the scenario horizon
  std::optional<Eigen::VectorXd> q0;  // default: uniform[0.3,1.7] from the scenario seed
  bool clamp = false;
  PConvention p_convention = PConvention::Next;
  DynamicsPath path = DynamicsPath::Raw;
  double divergence_limit = 10.0;  // p.u. guard on ||v_tilde||_inf
};

/// Time-indexed closed-loop record. States (v_tilde, q, p, a_tilde) carry
/// T+1 rows; actions and saturation flags carry T rows. q(t+1) = q(t) - u(t)
/// holds exactly as stored.
struct Trajectory {
  int horizon = 0;
  ControllerKind controller = ControllerKind::Adaptive;
  Eigen::MatrixXd v_tilde;  // (T+1) x n
  Eigen::MatrixXd q;        // (T+1) x n
  Eigen::MatrixXd p;        // (T+1) x n
  Eigen::MatrixXd a_tilde;  // (T+1) x total_dim (stacked per-bus coefficients)
  Eigen::MatrixXd u;        // T x n
  Eigen::MatrixXi sat;      // T x n, 1 where the action was clamped
  bool saturated = false;
};

/// Deterministic closed-loop rollout. Throws DimensionError on mismatched
/// sizes and DivergenceError (with the first bad step) when the voltage
/// deviation leaves the divergence guard.
Trajectory rollout(const FeederModel& model, const LoadScenario& sc,
                   const ControllerParams& params, const RolloutOptions& opt);

/// Default initial reactive injection used when RolloutOptions::q0 is unset:
/// uniform[0.3, 1.7] drawn from a dedicated stream of the scenario seed.
Eigen::VectorXd default_q0(const LoadScenario& sc);

struct CostResult {
  double total = 0.0;
  std::vector<double> per_step_v;  // ||v_tilde(t)||, t = 1..T
  std::vector<double> per_step_u;  // gamma * ||u(t-1)||, t = 1..T
};

/// sum_{t=1}^{T} ||v_tilde(t)|| + gamma ||u(t-1)|| in the configured norms.
CostResult cost(const Trajectory& traj, const CostSpec& spec);

struct ComparisonReport {
  double adaptive_mean = 0.0, adaptive_std = 0.0;
  double linear_mean = 0.0, linear_std = 0.0;
  double improvement_pct = 0.0;  // 100 * (linear - adaptive) / linear
  int adaptive_wins = 0, linear_wins = 0;
  std::vector<double> adaptive_costs, linear_costs;
};

/// Runs both controllers over the scenario set (same q0 per scenario) and
/// aggregates costs. Certification of the parameter sets is the caller's
/// responsibility (the CLI refuses uncertified runs without an explicit
/// override). Throws ConfigError on an empty scenario set.
ComparisonReport compare(const FeederModel& model,
                         const std::vector<LoadScenario>& scenarios,
                         const ControllerParams& adaptive_params,
                         const ControllerParams& linear_params,
                         const CostSpec& spec, bool clamp = false);

/// Trajectory CSV: `t,bus,v,q,u,p,sat` (states at t, the action taken at t;
/// the final row per bus carries empty action fields).
void write_trajectory_csv(const std::string& path, const Trajectory& traj,
                          const std::vector<std::string>& meta_comments = {});

}  // namespace gridadapt
