#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "gridadapt/engine.hpp"
#include "gridadapt/stability.hpp"

namespace gridadapt {

enum class GradientMode { Analytic, FiniteDifference };

struct TrainConfig {
  double learning_rate = 10.0;
  int batch_size = 10;   // H
  int horizon = 200;     // T
  int epochs = 100;      // I
  double epsilon = 0.01;
  double alpha = -1.0;   // < 0: default to 1 - epsilon
  GradientMode gradient_mode = GradientMode::Analytic;
  std::uint64_t seed = 1;
  CostSpec cost;
  ControllerKind controller = ControllerKind::Adaptive;

  double resolved_alpha() const { return alpha < 0 ? 1.0 - epsilon : alpha; }
  void validate() const;  // ConfigError
};

struct TrainLogEntry {
  int epoch = 0;
  double loss = 0.0;
  std::uint64_t params_hash = 0;
  double grad_norm = 0.0;
  double min_margin = 0.0;  // worst decentralized condition margin
};

struct TrainLog {
  std::vector<TrainLogEntry> entries;
  void save_csv(const std::string& path,
                const std::vector<std::string>& meta_comments = {}) const;
};

/// The trainable object: gains k plus square factors L_i with
/// A_i = L_i L_i' + 1e-8 I, which keeps every A_i positive definite under
/// unconstrained gradient updates.
struct TrainableParams {
  Eigen::VectorXd k;
  std::vector<Eigen::MatrixXd> L;

  ControllerParams to_params(double alpha, double epsilon) const;
  Eigen::VectorXd flatten() const;
  void unflatten(const Eigen::VectorXd& theta);
  int size() const;
  std::uint64_t hash() const;
};

/// Loss = sum_h sum_{t=1}^{T} C_v(v_h(t) - 1) + C_u; identical to summing
/// engine::cost over the batch rollouts (q0 defaulted per scenario).
/// Propagates DivergenceError with the offending scenario index in the
/// message.
double batch_loss(const FeederModel& model, const ControllerParams& params,
                  const std::vector<LoadScenario>& scenarios,
                  const CostSpec& spec, ControllerKind kind);

/// Batch gradient over (k, L). Analytic mode runs reverse accumulation
/// through the unrolled affine dynamics (L1 terms use sign subgradients,
/// 0 at exact zero; clamped actions pass zero sensitivity). Finite-difference
/// mode uses central differences with step 1e-5 per scalar.
/// Throws NumericalError on non-finite results.
Eigen::VectorXd gradient(const FeederModel& model, const TrainableParams& tp,
                         double alpha, double epsilon,
                         const std::vector<LoadScenario>& scenarios,
                         const CostSpec& spec, ControllerKind kind,
                         GradientMode mode, bool clamp = false);

/// Projection onto the decentralized-certifiable set: k_i clamped into the
/// gain interval, each A_i rescaled (about its 1e-8 ridge) so that the
/// worst-case phi_i' A_i phi_i meets the per-bus cap with equality when it
/// was above it. Already-feasible parameters are returned unchanged.
/// Throws InfeasibleError when the gain interval is empty.
ControllerParams project(const ControllerParams& params, const FeederModel& model,
                         double epsilon, const std::vector<double>& phi_bound_sq);

struct TrainResult {
  ControllerParams params;  // best-loss certified snapshot
  TrainLog log;
};

/// Gradient training with per-epoch projection. Every epoch draws a fresh
/// batch of scenarios and initial states from the config seed, logs the batch
/// loss of the parameters entering the epoch, applies one Adam step
/// (beta1 = 0.9, beta2 = 0.999, eps = 1e-8), and projects back onto the
/// certifiable set. Returns the logged snapshot with the lowest loss.
TrainResult fit(const FeederModel& model, const TrainConfig& cfg,
                const SinusoidalConfig& scenario_cfg);

}  // namespace gridadapt
