#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "gridadapt/feeder.hpp"

namespace gridadapt {

enum class BasisKind { Sinusoidal, Tabulated };

/// Per-bus feature signals phi_i(t). Sinusoidal bases are one-dimensional
/// sin(eta_i * t); tabulated bases hold explicit per-step values (rows t,
/// columns basis components) and cover trace-derived features as well.
struct BasisSpec {
  BasisKind kind = BasisKind::Sinusoidal;
  std::vector<int> dims;                  // m_i per bus, m_i >= 1
  std::vector<double> freqs;              // sinusoidal: eta_i in (0, pi), rad/step
  std::vector<Eigen::MatrixXd> table;     // tabulated: per bus, (steps x m_i)

  int bus_count() const { return static_cast<int>(dims.size()); }
  int total_dim() const;
  int steps() const;  // number of tabulated steps (INT_MAX for sinusoidal)

  /// phi_i(t); throws RangeError when t is outside the tabulated range.
  Eigen::VectorXd at(int bus, int t) const;

  /// sup_t ||phi_i(t)||^2: m_i for sinusoidal (|sin| <= 1), the max row norm
  /// for tabulated bases. Used for worst-case condition checks and projection.
  double worst_case_sq(int bus) const;

  void validate() const;
};

/// Cross-bus feature correlation: phi_j(t) ~ Theta_{i,j} phi_i(t) + residual.
/// Independent sets every Theta to zero; Identical uses the identity (equal
/// basis dimensions required); Custom supplies explicit blocks theta[i][j]
/// of shape (m_j x m_i).
struct CorrelationModel {
  enum class Preset { Independent, Identical, Custom };
  Preset preset = Preset::Independent;
  std::vector<std::vector<Eigen::MatrixXd>> theta;  // Custom only

  Eigen::MatrixXd block(int i, int j, const BasisSpec& basis) const;
};

/// A time-varying net-load realization over a horizon of T steps:
///   p_i(t+1) = p_i(t) + c_i' phi_i(t) + delta_p_i(t)
/// holds exactly for the stored series. p and delta_p have T+1 rows (row T of
/// delta_p only feeds the lumped residual at the final step). The correlation
/// residuals xi_{i,j}(t) = phi_j(t) - Theta_{i,j} phi_i(t) are derived on
/// demand rather than stored.
struct LoadScenario {
  int horizon = 0;  // T
  Eigen::VectorXd p0;
  std::vector<Eigen::VectorXd> coeff;  // c_i per bus
  BasisSpec basis;
  CorrelationModel correlation;
  Eigen::MatrixXd delta_p;  // (T+1) x n
  Eigen::MatrixXd p;        // (T+1) x n
  std::uint64_t seed = 0;

  int n() const { return static_cast<int>(coeff.size()); }
  Eigen::VectorXd phi(int bus, int t) const { return basis.at(bus, t); }
  Eigen::VectorXd xi(int i, int j, int t) const;
};

struct SinusoidalConfig {
  double eta_min = 0.003 * 3.14159265358979323846;
  double eta_max = 0.008 * 3.14159265358979323846;
  double c_min = 0.05;
  double c_max = 0.25;
  double p0_min = 0.3;
  double p0_max = 1.7;
  double noise_amp = 0.0;
  int horizon = 200;
  std::uint64_t seed = 1;

  void validate() const;  // ConfigError on empty ranges / T < 1
  static SinusoidalConfig load(const std::string& path);
  void save(const std::string& path) const;
  std::string canonical_string() const;  // for config hashing
};

/// Draw order is fixed (eta per bus, then c, then p0, then noise row by row)
/// so a seed reproduces the same scenario bit-exactly everywhere.
LoadScenario gen_sinusoidal(const FeederModel& model, int T, std::uint64_t seed,
                            const SinusoidalConfig& cfg);

/// Reads a trace CSV (header bus_1,...,bus_n; rows of p.u. injections), fits
/// per-bus coefficients to the step differences by least squares against the
/// given basis, and stores the fit residual as delta_p. fit_window = 0 fits
/// over the whole trace; otherwise only the trailing fit_window steps enter
/// the fit (residuals still cover the whole trace).
LoadScenario ingest_trace(const std::string& path, const FeederModel& model,
                          const BasisSpec& basis, int fit_window = 0);

/// Builds a lag-feature basis for a trace with the given number of lagged
/// step-differences per bus (the local trend features).
BasisSpec lag_basis_from_trace(const Eigen::MatrixXd& p, int lags);

struct DisturbanceDecomposition {
  Eigen::VectorXd a;  // stacked a_i = D_e[i,i] c_i + theta_cor_i'
  std::vector<Eigen::RowVectorXd> theta_cor;
  Eigen::MatrixXd delta_phi;  // (T+1) x n
  Eigen::MatrixXd delta_v;    // (T+1) x n, X*delta_phi + R*delta_p
};

/// Splits the injection-driven voltage drive into the locally representable
/// part (a, evaluated against phi_i) and the lumped residual delta_v. The
/// split is exact for any correlation model:
///   (D_o c_hat' phi(t))_i = theta_cor_i phi_i(t) + delta_phi_i(t).
DisturbanceDecomposition decompose(const FeederModel& model, const LoadScenario& sc);

/// Block-diagonal basis evaluation: (sum_i m_i) x n, column i carrying
/// phi_i(t) in its block. Throws RangeError for t outside [0, T].
Eigen::MatrixXd basis_at(const LoadScenario& sc, int t);

}  // namespace gridadapt
