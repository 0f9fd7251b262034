#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "gridadapt/scenario.hpp"

namespace gridadapt {

/// Per-bus gains k_i, adaptation matrices A_i (symmetric positive definite,
/// m_i x m_i), decay alpha and margin epsilon with 0 < alpha <= 1 - epsilon,
/// and optional per-bus action bounds.
struct ControllerParams {
  Eigen::VectorXd k;
  std::vector<Eigen::MatrixXd> A;
  double alpha = 0.99;
  double epsilon = 0.01;
  std::optional<Eigen::VectorXd> u_max;

  int n() const { return static_cast<int>(k.size()); }

  /// Shape/data integrity only (square symmetric A, consistent sizes).
  /// Loading applies this, so condition checkers can still examine files
  /// whose values sit outside the stability domain.
  void validate_structure() const;  // ConfigError
  /// Structure plus the domain invariants (alpha/epsilon ranges, k > 0,
  /// A positive definite).
  void validate() const;  // ConfigError

  static ControllerParams load(const std::string& path);
  /// meta entries (e.g. config hash, seed) are stored alongside the
  /// parameters and ignored on load.
  void save(const std::string& path,
            const std::vector<std::pair<std::string, std::string>>& meta = {}) const;
};

struct AdaptiveState {
  std::vector<Eigen::VectorXd> a_tilde;

  static AdaptiveState zero(const BasisSpec& basis);
  Eigen::VectorXd stacked() const;
};

// u_i = k_i * v_i, clamped to [-u_max_i, u_max_i] when bounds are set.
Eigen::VectorXd linear_control(const Eigen::VectorXd& v_tilde,
                               const ControllerParams& params);

// u_i = k_i * v_i + phi_i' a_tilde_i, same optional clamp on the sum.
Eigen::VectorXd adaptive_control(const Eigen::VectorXd& v_tilde,
                                 const std::vector<Eigen::VectorXd>& phi_t,
                                 const AdaptiveState& state,
                                 const ControllerParams& params);

// a_tilde_i <- alpha * a_tilde_i + v_i * A_i phi_i
AdaptiveState adapt_step(const AdaptiveState& state,
                         const Eigen::VectorXd& v_tilde,
                         const std::vector<Eigen::VectorXd>& phi_t,
                         const ControllerParams& params);

}  // namespace gridadapt
