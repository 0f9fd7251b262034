#include "gridadapt/stability.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <sstream>

#include "gridadapt/errors.hpp"
#include "gridadapt/io.hpp"

namespace gridadapt {

namespace {

// Symmetric square root of X (symmetrized first).
Eigen::MatrixXd sym_sqrt(const Eigen::MatrixXd& X) {
  Eigen::MatrixXd Xs = (X + X.transpose()) / 2.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Xs);
  if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition of X failed");
  if (es.eigenvalues().minCoeff() <= 0.0) throw ModelError("X is not positive definite");
  return es.operatorSqrt();
}

// diag(phi_i' A_i phi_i), the n x n image of the adaptation through the basis.
Eigen::VectorXd basis_gram_diag(const ControllerParams& params, const PhiSample& phi_t) {
  const int n = params.n();
  if (static_cast<int>(phi_t.size()) != n)
    throw DimensionError("basis sample does not match the bus count");
  Eigen::VectorXd g(n);
  for (int i = 0; i < n; ++i) {
    if (phi_t[i].size() != params.A[i].rows())
      throw DimensionError("basis/adaptation dimension mismatch at bus " + std::to_string(i));
    g(i) = phi_t[i].dot(params.A[i] * phi_t[i]);
  }
  return g;
}

double lambda_max_sym(const Eigen::MatrixXd& S) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es((S + S.transpose()) / 2.0);
  if (es.info() != Eigen::Success) throw NumericalError("symmetric eigensolve failed");
  return es.eigenvalues().maxCoeff();
}

}  // namespace

TransitionMatrix transition_matrix(const FeederModel& model,
                                   const ControllerParams& params,
                                   const PhiSample& phi_t, int t) {
  const int n = model.n();
  if (params.n() != n) throw DimensionError("params/model bus count mismatch");
  Eigen::VectorXd g = basis_gram_diag(params, phi_t);

  TransitionMatrix tm;
  tm.t = t;
  tm.M = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  tm.M.topLeftCorner(n, n) =
      Eigen::MatrixXd::Identity(n, n) - model.X * params.k.asDiagonal().toDenseMatrix();
  tm.M.topRightCorner(n, n) = -model.X;
  tm.M.bottomLeftCorner(n, n) = g.asDiagonal();
  tm.M.bottomRightCorner(n, n) = params.alpha * Eigen::MatrixXd::Identity(n, n);
  return tm;
}

double spectral_radius(const Eigen::MatrixXd& M) {
  if (M.rows() != M.cols()) throw DimensionError("spectral radius needs a square matrix");
  Eigen::EigenSolver<Eigen::MatrixXd> es(M, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success) throw NumericalError("eigenvalue solver did not converge");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

GainBounds gain_bounds(const FeederModel& model, double epsilon) {
  if (!(epsilon > 0.0) || !(epsilon < 1.0)) throw ConfigError("epsilon must lie in (0, 1)");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es((model.X + model.X.transpose()) / 2.0);
  if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition of X failed");
  const double lmin_x = es.eigenvalues().minCoeff();
  const double lmax_x = es.eigenvalues().maxCoeff();
  if (lmin_x <= 0.0) throw ModelError("X is not positive definite");
  GainBounds gb;
  gb.lambda_max_x_inv = 1.0 / lmin_x;
  gb.lambda_min_x_inv = 1.0 / lmax_x;
  gb.k_min = epsilon * gb.lambda_max_x_inv;
  gb.k_max = (2.0 - epsilon) * gb.lambda_min_x_inv;
  if (gb.k_min > gb.k_max)
    throw InfeasibleError(
        "empty decentralized gain interval: epsilon too large for cond(X) = " +
        format_double(lmax_x / lmin_x));
  return gb;
}

namespace {

void fill_iss(StabilityReport& rep, double epsilon) {
  rep.epsilon = epsilon;
  rep.radius_bound = std::sqrt(1.0 - epsilon);
  rep.iss.decay_rate = 1.0 - epsilon;
  rep.iss.disturbance_gain = 1.0 / epsilon;
}

void centralized_into(StabilityReport& rep, const FeederModel& model,
                      const ControllerParams& params,
                      const std::vector<PhiSample>& phi_samples,
                      const std::vector<double>* phi_bound_sq) {
  const double eps = params.epsilon;
  const int n = model.n();
  Eigen::MatrixXd Xh = sym_sqrt(model.X);
  Eigen::MatrixXd SK = Xh * params.k.asDiagonal() * Xh;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es((SK + SK.transpose()) / 2.0);
  if (es.info() != Eigen::Success) throw NumericalError("symmetric eigensolve failed");
  const double sk_min = es.eigenvalues().minCoeff();
  const double sk_max = es.eigenvalues().maxCoeff();

  rep.condition_a.margin = std::min(sk_min - eps, (2.0 - eps) - sk_max);
  rep.condition_a.pass = rep.condition_a.margin >= 0.0;

  rep.condition_b.margin = std::min(params.alpha, (1.0 - eps) - params.alpha);
  rep.condition_b.pass = params.alpha > 0.0 && params.alpha <= 1.0 - eps;

  const double lmax_b = 1.0 - sk_min;  // lmax(I - X^{1/2} K X^{1/2})
  double margin_c = std::numeric_limits<double>::infinity();
  double rad_max = -1.0;
  rep.spectral_radii.clear();
  rep.spectral_radii.reserve(phi_samples.size());
  for (const auto& phi_t : phi_samples) {
    Eigen::VectorXd g = basis_gram_diag(params, phi_t);
    Eigen::MatrixXd C = Xh * g.asDiagonal() * Xh;
    const double lhs = lambda_max_sym(C) + params.alpha * lmax_b;
    margin_c = std::min(margin_c, (1.0 - eps) - lhs);
    double rad = spectral_radius(transition_matrix(model, params, phi_t).M);
    rep.spectral_radii.push_back(rad);
    rad_max = std::max(rad_max, rad);
  }
  if (phi_samples.empty()) margin_c = 0.0;
  rep.condition_c.margin = margin_c;
  rep.condition_c.pass = margin_c >= 0.0;
  rep.spectral_radius_max = rad_max;

  if (phi_bound_sq) {
    if (static_cast<int>(phi_bound_sq->size()) != n)
      throw DimensionError("phi bound vector does not match the bus count");
    Eigen::VectorXd g_wc(n);
    for (int i = 0; i < n; ++i)
      g_wc(i) = lambda_max_sym(params.A[i]) * (*phi_bound_sq)[i];
    Eigen::MatrixXd C = Xh * g_wc.asDiagonal() * Xh;
    rep.worst_case_c_margin = (1.0 - eps) - (lambda_max_sym(C) + params.alpha * lmax_b);
    rep.worst_case_evaluated = true;
  }
  rep.centralized_evaluated = true;
}

}  // namespace

StabilityReport check_centralized(const FeederModel& model,
                                  const ControllerParams& params,
                                  const std::vector<PhiSample>& phi_samples,
                                  const std::vector<double>* phi_bound_sq) {
  if (phi_samples.empty()) throw ConfigError("no basis samples to check against");
  StabilityReport rep;
  fill_iss(rep, params.epsilon);
  centralized_into(rep, model, params, phi_samples, phi_bound_sq);
  return rep;
}

StabilityReport check_decentralized(const FeederModel& model,
                                    const ControllerParams& params,
                                    const std::vector<PhiSample>& phi_samples,
                                    const std::vector<double>* phi_bound_sq) {
  if (phi_samples.empty()) throw ConfigError("no basis samples to check against");
  const double eps = params.epsilon;
  const int n = model.n();
  StabilityReport rep;
  fill_iss(rep, eps);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es((model.X + model.X.transpose()) / 2.0);
  if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition of X failed");
  const double lmin_x = es.eigenvalues().minCoeff();
  const double lmax_x = es.eigenvalues().maxCoeff();
  if (lmin_x <= 0.0) throw ModelError("X is not positive definite");
  // written as eps * lmax(X^-1) and (2-eps) * lmin(X^-1) so the endpoints are
  // bitwise identical to gain_bounds() (projection clamps exactly onto them)
  const double k_lo = eps * (1.0 / lmin_x);
  const double k_hi = (2.0 - eps) * (1.0 / lmax_x);

  double margin_a = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i)
    margin_a = std::min(margin_a, std::min(params.k(i) - k_lo, k_hi - params.k(i)));
  rep.decentralized_a.margin = margin_a;
  rep.decentralized_a.pass = margin_a >= 0.0;

  rep.decentralized_b.margin = std::min(params.alpha, (1.0 - eps) - params.alpha);
  rep.decentralized_b.pass = params.alpha > 0.0 && params.alpha <= 1.0 - eps;

  const double cap = (1.0 - eps) * (1.0 - params.alpha) * (1.0 / lmax_x);
  double margin_c = std::numeric_limits<double>::infinity();
  for (const auto& phi_t : phi_samples) {
    Eigen::VectorXd g = basis_gram_diag(params, phi_t);
    margin_c = std::min(margin_c, cap - g.maxCoeff());
  }
  if (phi_bound_sq) {
    for (int i = 0; i < n; ++i)
      margin_c = std::min(margin_c, cap - lambda_max_sym(params.A[i]) * (*phi_bound_sq)[i]);
  }
  rep.decentralized_c.margin = margin_c;
  rep.decentralized_c.pass = margin_c >= 0.0;
  rep.decentralized_evaluated = true;

  // The per-bus conditions are a strict subset of the matrix conditions;
  // evaluate both on the same samples and record the implication.
  centralized_into(rep, model, params, phi_samples, phi_bound_sq);
  rep.implication_ok = !rep.decentralized_pass() || rep.centralized_pass();
  return rep;
}

EquilibriumPoint equilibrium(const FeederModel& model, const ControllerParams& params,
                             const PhiSample& phi_t, const Eigen::VectorXd& a,
                             const Eigen::VectorXd& delta_v_t, int t) {
  const int n = model.n();
  if (params.n() != n) throw DimensionError("params/model bus count mismatch");
  if (delta_v_t.size() != n) throw DimensionError("delta_v length mismatch");
  int total = 0;
  for (const auto& phi : phi_t) total += static_cast<int>(phi.size());
  if (a.size() != total) throw DimensionError("stacked coefficient length mismatch");

  Eigen::VectorXd g = basis_gram_diag(params, phi_t);
  // rhs = phi_hat' a + X^{-1} delta_v
  Eigen::VectorXd rhs(n);
  int offset = 0;
  for (int i = 0; i < n; ++i) {
    const int mi = static_cast<int>(phi_t[i].size());
    rhs(i) = a.segment(offset, mi).dot(phi_t[i]);
    offset += mi;
  }
  rhs += model.X.llt().solve(delta_v_t);

  const double inv_gap = 1.0 / (1.0 - params.alpha);
  EquilibriumPoint eq;
  eq.t = t;
  eq.v_star.resize(n);
  for (int i = 0; i < n; ++i) {
    const double denom = params.k(i) + inv_gap * g(i);
    if (std::abs(denom) < 1e-14)
      throw NumericalError("singular equilibrium system at bus " + std::to_string(i));
    eq.v_star(i) = rhs(i) / denom;
  }
  eq.a_star.resize(total);
  offset = 0;
  for (int i = 0; i < n; ++i) {
    const int mi = static_cast<int>(phi_t[i].size());
    eq.a_star.segment(offset, mi) = inv_gap * (params.A[i] * phi_t[i]) * eq.v_star(i);
    offset += mi;
  }

  // Fixed-point residual of the frozen closed loop at (v*, a*).
  Eigen::VectorXd phi_err(n);
  offset = 0;
  for (int i = 0; i < n; ++i) {
    const int mi = static_cast<int>(phi_t[i].size());
    phi_err(i) = (a.segment(offset, mi) - eq.a_star.segment(offset, mi)).dot(phi_t[i]);
    offset += mi;
  }
  Eigen::VectorXd v_next =
      eq.v_star - model.X * (params.k.cwiseProduct(eq.v_star) - phi_err) + delta_v_t;
  Eigen::VectorXd a_next(total);
  offset = 0;
  for (int i = 0; i < n; ++i) {
    const int mi = static_cast<int>(phi_t[i].size());
    a_next.segment(offset, mi) = params.alpha * eq.a_star.segment(offset, mi) +
                                 (params.A[i] * phi_t[i]) * eq.v_star(i);
    offset += mi;
  }
  eq.residual = std::max((v_next - eq.v_star).lpNorm<Eigen::Infinity>(),
                         (a_next - eq.a_star).lpNorm<Eigen::Infinity>());
  return eq;
}

double iss_envelope(double x0_norm, double epsilon, double rho_bar, int t) {
  if (!(epsilon > 0.0) || !(epsilon < 1.0)) throw ConfigError("epsilon must lie in (0, 1)");
  if (rho_bar < 0.0) throw ConfigError("rho_bar must be >= 0");
  if (t < 0) throw ConfigError("t must be >= 0");
  if (x0_norm < 0.0) throw ConfigError("x0_norm must be >= 0");
  const double decay = std::pow(1.0 - epsilon, t);
  return decay * x0_norm + (1.0 - decay) / epsilon * rho_bar;
}

double disturbance_bound(const FeederModel& model, const ControllerParams& params,
                         const LoadScenario& sc, const DisturbanceDecomposition& dec,
                         const Trajectory& traj) {
  const int T = traj.horizon;
  if (sc.horizon < 2) throw ConfigError("scenario horizon must be >= 2");
  if (T < 1) throw ConfigError("trajectory too short");
  const int n = model.n();

  std::vector<PhiSample> phis(T + 1);
  for (int t = 0; t <= T; ++t) {
    phis[t].resize(n);
    for (int i = 0; i < n; ++i) phis[t][i] = sc.basis.at(i, t);
  }
  std::vector<EquilibriumPoint> eq(T + 1);
  for (int t = 0; t <= T; ++t) {
    try {
      eq[t] = equilibrium(model, params, phis[t], dec.a, dec.delta_v.row(t).transpose(), t);
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(e.what()) + " (at step " + std::to_string(t) + ")");
    }
  }

  auto phi_dot = [&](int t, const Eigen::VectorXd& stacked) {
    Eigen::VectorXd out(n);
    int offset = 0;
    for (int i = 0; i < n; ++i) {
      const int mi = static_cast<int>(phis[t][i].size());
      out(i) = stacked.segment(offset, mi).dot(phis[t][i]);
      offset += mi;
    }
    return out;
  };

  double best = 0.0;
  for (int t = 0; t < T; ++t) {
    Eigen::VectorXd rho_v = eq[t + 1].v_star - eq[t].v_star;
    Eigen::VectorXd a_next = traj.a_tilde.row(t + 1).transpose();
    Eigen::VectorXd rho_a =
        phi_dot(t, a_next - eq[t].a_star) - phi_dot(t + 1, a_next - eq[t + 1].a_star);
    best = std::max(best, std::sqrt(rho_v.squaredNorm() + rho_a.squaredNorm()));
  }
  return best;
}

double disturbance_bound(const FeederModel& model, const ControllerParams& params,
                         const LoadScenario& sc) {
  DisturbanceDecomposition dec = decompose(model, sc);
  RolloutOptions opt;
  opt.controller = ControllerKind::Adaptive;
  Trajectory traj = rollout(model, sc, params, opt);
  return disturbance_bound(model, params, sc, dec, traj);
}

std::vector<PhiSample> phi_samples_from_scenario(const LoadScenario& sc) {
  std::vector<PhiSample> out(sc.horizon + 1);
  for (int t = 0; t <= sc.horizon; ++t) {
    out[t].resize(sc.n());
    for (int i = 0; i < sc.n(); ++i) out[t][i] = sc.basis.at(i, t);
  }
  return out;
}

std::vector<double> phi_bounds_from_scenario(const LoadScenario& sc) {
  std::vector<double> out(sc.n());
  for (int i = 0; i < sc.n(); ++i) out[i] = sc.basis.worst_case_sq(i);
  return out;
}

// ---------------------------------------------------------------------------
// Report serialization

std::vector<std::pair<std::string, std::string>> StabilityReport::to_kv() const {
  std::vector<std::pair<std::string, std::string>> kv;
  auto add = [&](const std::string& key, const std::string& value) {
    kv.emplace_back(key, value);
  };
  auto add_cond = [&](const std::string& prefix, const ConditionResult& c) {
    add(prefix + "_pass", c.pass ? "1" : "0");
    add(prefix + "_margin", format_double(c.margin));
  };
  add("epsilon", format_double(epsilon));
  if (centralized_evaluated) {
    add_cond("condition_a", condition_a);
    add_cond("condition_b", condition_b);
    add_cond("condition_c", condition_c);
    add("centralized_pass", centralized_pass() ? "1" : "0");
  }
  if (decentralized_evaluated) {
    add_cond("decentralized_a", decentralized_a);
    add_cond("decentralized_b", decentralized_b);
    add_cond("decentralized_c", decentralized_c);
    add("decentralized_pass", decentralized_pass() ? "1" : "0");
    add("implication_ok", implication_ok ? "1" : "0");
  }
  if (spectral_radius_max >= 0.0)
    add("spectral_radius_max", format_double(spectral_radius_max));
  add("radius_bound", format_double(radius_bound));
  if (worst_case_evaluated)
    add("worst_case_condition_c_margin", format_double(worst_case_c_margin));
  add("iss_decay_rate", format_double(iss.decay_rate));
  // Gain of the disturbance term as the closed-form geometric sum
  // (1 - (1-eps)^t)/eps, reported via its t -> inf limit 1/eps.
  add("iss_gain_formula", "(1-(1-eps)^t)/eps");
  add("iss_disturbance_gain", format_double(iss.disturbance_gain));
  if (iss.disturbance_bound >= 0.0)
    add("iss_disturbance_bound", format_double(iss.disturbance_bound));
  return kv;
}

std::string StabilityReport::to_text() const {
  std::ostringstream os;
  auto line = [&](const std::string& name, const ConditionResult& c) {
    os << "  condition (" << name << "): " << (c.pass ? "PASS" : "FAIL")
       << "  margin " << format_double(c.margin) << "\n";
  };
  os << "stability report (epsilon = " << format_double(epsilon) << ")\n";
  if (centralized_evaluated) {
    os << "centralized matrix conditions:\n";
    line("a", condition_a);
    line("b", condition_b);
    line("c", condition_c);
  }
  if (decentralized_evaluated) {
    os << "decentralized per-bus conditions:\n";
    line("a", decentralized_a);
    line("b", decentralized_b);
    line("c", decentralized_c);
    os << "  decentralized pass implies centralized pass: "
       << (implication_ok ? "yes" : "VIOLATED") << "\n";
  }
  if (spectral_radius_max >= 0.0)
    os << "max sampled spectral radius: " << format_double(spectral_radius_max) << "\n";
  os << "certified radius bound sqrt(1-eps): " << format_double(radius_bound) << "\n";
  if (worst_case_evaluated)
    os << "worst-case condition (c) margin (basis bound): "
       << format_double(worst_case_c_margin) << "\n";
  os << "ISS: decay rate " << format_double(iss.decay_rate)
     << ", disturbance gain (1-(1-eps)^t)/eps -> " << format_double(iss.disturbance_gain);
  if (iss.disturbance_bound >= 0.0)
    os << ", disturbance bound " << format_double(iss.disturbance_bound);
  os << "\n";
  return os.str();
}

}  // namespace gridadapt
