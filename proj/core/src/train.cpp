#include "gridadapt/train.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <fstream>
#include <limits>

#include "gridadapt/errors.hpp"
#include "gridadapt/io.hpp"
#include "gridadapt/rng.hpp"

namespace gridadapt {

namespace {

constexpr double kRidge = 1e-8;          // A_i = L_i L_i' + kRidge I
constexpr std::uint64_t kScenarioStream = 0x5ce4a10;
constexpr std::uint64_t kInitStream = 0x1417;

double lambda_max_sym(const Eigen::MatrixXd& S) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es((S + S.transpose()) / 2.0);
  if (es.info() != Eigen::Success) throw NumericalError("symmetric eigensolve failed");
  return es.eigenvalues().maxCoeff();
}

// Subgradient of the configured norm; 0 at kinks.
Eigen::VectorXd v_norm_grad(const Eigen::VectorXd& v, CostSpec::VNorm n) {
  switch (n) {
    case CostSpec::VNorm::L1:
      return v.array().sign().matrix();
    case CostSpec::VNorm::L2: {
      double nv = v.norm();
      return nv > 0.0 ? Eigen::VectorXd(v / nv) : Eigen::VectorXd::Zero(v.size());
    }
    case CostSpec::VNorm::Linf: {
      Eigen::VectorXd g = Eigen::VectorXd::Zero(v.size());
      Eigen::Index j;
      double m = v.cwiseAbs().maxCoeff(&j);
      if (m > 0.0) g(j) = v(j) > 0.0 ? 1.0 : -1.0;
      return g;
    }
  }
  return Eigen::VectorXd::Zero(v.size());
}

Eigen::VectorXd u_norm_grad(const Eigen::VectorXd& u, CostSpec::UNorm n) {
  if (n == CostSpec::UNorm::L1) return u.array().sign().matrix();
  double nu = u.norm();
  return nu > 0.0 ? Eigen::VectorXd(u / nu) : Eigen::VectorXd::Zero(u.size());
}

}  // namespace

void TrainConfig::validate() const {
  // epochs = 0 is the degenerate no-op run (initialization emitted unchanged)
  if (batch_size < 1 || horizon < 1 || epochs < 0)
    throw ConfigError("batch_size and horizon must be >= 1, epochs >= 0");
  if (!(epsilon > 0.0) || !(epsilon < 1.0)) throw ConfigError("epsilon must lie in (0, 1)");
  double a = resolved_alpha();
  if (!(a > 0.0) || !(a <= 1.0 - epsilon))
    throw ConfigError("alpha must satisfy 0 < alpha <= 1 - epsilon");
  if (learning_rate < 0.0) throw ConfigError("learning rate must be >= 0");
}

ControllerParams TrainableParams::to_params(double alpha, double epsilon) const {
  ControllerParams p;
  p.k = k;
  p.alpha = alpha;
  p.epsilon = epsilon;
  p.A.reserve(L.size());
  for (const auto& Li : L)
    p.A.push_back(Li * Li.transpose() +
                  kRidge * Eigen::MatrixXd::Identity(Li.rows(), Li.rows()));
  return p;
}

int TrainableParams::size() const {
  int s = static_cast<int>(k.size());
  for (const auto& Li : L) s += static_cast<int>(Li.size());
  return s;
}

Eigen::VectorXd TrainableParams::flatten() const {
  Eigen::VectorXd theta(size());
  int off = static_cast<int>(k.size());
  theta.head(off) = k;
  for (const auto& Li : L) {
    theta.segment(off, Li.size()) = Eigen::Map<const Eigen::VectorXd>(Li.data(), Li.size());
    off += static_cast<int>(Li.size());
  }
  return theta;
}

void TrainableParams::unflatten(const Eigen::VectorXd& theta) {
  int off = static_cast<int>(k.size());
  k = theta.head(off);
  for (auto& Li : L) {
    Li = Eigen::Map<const Eigen::MatrixXd>(theta.segment(off, Li.size()).data(),
                                           Li.rows(), Li.cols());
    off += static_cast<int>(Li.size());
  }
}

std::uint64_t TrainableParams::hash() const {
  Eigen::VectorXd theta = flatten();
  return fnv1a64(theta.data(), sizeof(double) * static_cast<std::size_t>(theta.size()));
}

double batch_loss(const FeederModel& model, const ControllerParams& params,
                  const std::vector<LoadScenario>& scenarios,
                  const CostSpec& spec, ControllerKind kind) {
  double total = 0.0;
  for (std::size_t h = 0; h < scenarios.size(); ++h) {
    RolloutOptions opt;
    opt.controller = kind;
    try {
      total += cost(rollout(model, scenarios[h], params, opt), spec).total;
    } catch (const DivergenceError& e) {
      throw DivergenceError(std::string(e.what()) + " (scenario " + std::to_string(h) + ")",
                            e.step());
    }
  }
  return total;
}

namespace {

// Reverse accumulation through one rollout. The engine provides the forward
// pass; the adjoint recursion mirrors
//   u(t)   = K v(t) + phi_hat(t)' a~(t)          (clamped coordinates: zero
//   v(t+1) = v(t) - X u(t) + drive(t)             pass-through sensitivity)
//   a~(t+1) = alpha a~(t) + v_i(t) A_i phi_i(t)
// with the cost sum_{t=1}^{T} ||v(t)|| + gamma ||u(t-1)||.
void accumulate_gradient(const FeederModel& model, const ControllerParams& params,
                         const LoadScenario& sc, const Trajectory& traj,
                         const CostSpec& spec, ControllerKind kind,
                         Eigen::VectorXd& gk, std::vector<Eigen::MatrixXd>& gA) {
  const int n = model.n();
  const int T = traj.horizon;
  const bool adaptive = kind == ControllerKind::Adaptive;

  std::vector<Eigen::VectorXd> phi(n);
  Eigen::VectorXd gv = v_norm_grad(traj.v_tilde.row(T).transpose(), spec.v_norm);
  std::vector<Eigen::VectorXd> ga(n);
  for (int i = 0; i < n; ++i) ga[i] = Eigen::VectorXd::Zero(sc.basis.dims[i]);

  for (int t = T - 1; t >= 0; --t) {
    for (int i = 0; i < n; ++i) phi[i] = sc.basis.at(i, t);
    Eigen::VectorXd u = traj.u.row(t).transpose();
    Eigen::VectorXd gu = spec.gamma * u_norm_grad(u, spec.u_norm) - model.X * gv;
    for (int i = 0; i < n; ++i)
      if (traj.sat(t, i)) gu(i) = 0.0;

    std::vector<Eigen::VectorXd> ga_next = ga;
    Eigen::VectorXd v_t = traj.v_tilde.row(t).transpose();
    Eigen::VectorXd gv_new = gv;  // dv(t+1)/dv(t) = I
    if (t >= 1) gv_new += v_norm_grad(v_t, spec.v_norm);
    gv_new += params.k.cwiseProduct(gu);

    for (int i = 0; i < n; ++i) {
      gk(i) += gu(i) * v_t(i);
      if (adaptive) {
        ga[i] = params.alpha * ga_next[i] + gu(i) * phi[i];
        gA[i] += v_t(i) * (ga_next[i] * phi[i].transpose());
        gv_new(i) += phi[i].dot(params.A[i] * ga_next[i]);
      }
    }
    gv = gv_new;
  }
}

}  // namespace

Eigen::VectorXd gradient(const FeederModel& model, const TrainableParams& tp,
                         double alpha, double epsilon,
                         const std::vector<LoadScenario>& scenarios,
                         const CostSpec& spec, ControllerKind kind,
                         GradientMode mode, bool clamp) {
  const int n = model.n();
  ControllerParams params = tp.to_params(alpha, epsilon);

  if (mode == GradientMode::FiniteDifference) {
    TrainableParams work = tp;
    Eigen::VectorXd theta = tp.flatten();
    Eigen::VectorXd g(theta.size());
    const double h = 1e-5;
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
      Eigen::VectorXd tplus = theta, tminus = theta;
      tplus(j) += h;
      tminus(j) -= h;
      work.unflatten(tplus);
      double lp = batch_loss(model, work.to_params(alpha, epsilon), scenarios, spec, kind);
      work.unflatten(tminus);
      double lm = batch_loss(model, work.to_params(alpha, epsilon), scenarios, spec, kind);
      g(j) = (lp - lm) / (2.0 * h);
    }
    if (!g.allFinite()) throw NumericalError("non-finite finite-difference gradient");
    return g;
  }

  Eigen::VectorXd gk = Eigen::VectorXd::Zero(n);
  std::vector<Eigen::MatrixXd> gA;
  gA.reserve(n);
  for (const auto& Li : tp.L) gA.push_back(Eigen::MatrixXd::Zero(Li.rows(), Li.cols()));

  for (std::size_t hidx = 0; hidx < scenarios.size(); ++hidx) {
    RolloutOptions opt;
    opt.controller = kind;
    opt.clamp = clamp;
    Trajectory traj;
    try {
      traj = rollout(model, scenarios[hidx], params, opt);
    } catch (const DivergenceError& e) {
      throw DivergenceError(std::string(e.what()) + " (scenario " + std::to_string(hidx) + ")",
                            e.step());
    }
    accumulate_gradient(model, params, scenarios[hidx], traj, spec, kind, gk, gA);
  }

  // Chain through A_i = L_i L_i' + ridge: dL = (G + G') L.
  Eigen::VectorXd g(tp.size());
  g.head(n) = gk;
  int off = n;
  for (int i = 0; i < n; ++i) {
    Eigen::MatrixXd gL = (gA[i] + gA[i].transpose()) * tp.L[i];
    if (kind == ControllerKind::Linear) gL.setZero();  // inert parameters
    g.segment(off, gL.size()) = Eigen::Map<const Eigen::VectorXd>(gL.data(), gL.size());
    off += static_cast<int>(gL.size());
  }
  if (!g.allFinite()) throw NumericalError("non-finite analytic gradient");
  return g;
}

ControllerParams project(const ControllerParams& params, const FeederModel& model,
                         double epsilon, const std::vector<double>& phi_bound_sq) {
  const int n = params.n();
  if (static_cast<int>(phi_bound_sq.size()) != n)
    throw DimensionError("phi bound vector does not match the bus count");
  GainBounds gb = gain_bounds(model, epsilon);
  const double cap = (1.0 - epsilon) * (1.0 - params.alpha) * gb.lambda_min_x_inv;
  // rescale to a hair below the cap so ulp noise in the eigenvalue recompute
  // cannot flip the strict feasibility check
  const double target = cap * (1.0 - 1e-12);

  ControllerParams out = params;
  for (int i = 0; i < n; ++i)
    out.k(i) = std::min(std::max(params.k(i), gb.k_min), gb.k_max);
  for (int i = 0; i < n; ++i) {
    if (phi_bound_sq[i] <= 0.0) continue;  // basis never active at this bus
    const double wc = lambda_max_sym(params.A[i]) * phi_bound_sq[i];
    if (wc > cap) out.A[i] = params.A[i] * (target / wc);
  }
  return out;
}

void TrainLog::save_csv(const std::string& path,
                        const std::vector<std::string>& meta_comments) const {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open for writing: " + path);
  for (const auto& c : meta_comments) out << "# " << c << "\n";
  out << "epoch,loss,grad_norm,min_margin\n";
  for (const auto& e : entries)
    out << e.epoch << "," << format_double(e.loss) << "," << format_double(e.grad_norm)
        << "," << format_double(e.min_margin) << "\n";
}

TrainResult fit(const FeederModel& model, const TrainConfig& cfg,
                const SinusoidalConfig& scenario_cfg) {
  cfg.validate();
  scenario_cfg.validate();
  const int n = model.n();
  const double alpha = cfg.resolved_alpha();
  const double eps = cfg.epsilon;

  GainBounds gb = gain_bounds(model, eps);  // InfeasibleError if empty
  const double cap = (1.0 - eps) * (1.0 - alpha) * gb.lambda_min_x_inv;

  // Basis worst-case bounds from a probe draw (sinusoidal: m_i = 1, bound 1).
  LoadScenario probe =
      gen_sinusoidal(model, 1, derive_seed(cfg.seed, kScenarioStream), scenario_cfg);
  std::vector<double> phi_bound(n);
  for (int i = 0; i < n; ++i) phi_bound[i] = probe.basis.worst_case_sq(i);

  // Initialization: gains at the lower certified endpoint (slowest certified
  // controller, so training progress is visible in the loss), adaptation
  // factors small at ~10% of the per-bus cap. Linear training keeps L = 0.
  TrainableParams tp;
  tp.k = Eigen::VectorXd::Constant(n, gb.k_min);
  Rng init_rng(derive_seed(cfg.seed, kInitStream));
  tp.L.resize(n);
  for (int i = 0; i < n; ++i) {
    const int m = probe.basis.dims[i];
    double scale = cfg.controller == ControllerKind::Adaptive
                       ? init_rng.uniform(0.5, 1.0) *
                             std::sqrt(0.1 * cap / std::max(phi_bound[i] * m, 1e-12))
                       : 0.0;
    tp.L[i] = scale * Eigen::MatrixXd::Identity(m, m);
  }

  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(tp.size());
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(tp.size());
  int adam_t = 0;

  TrainResult result;
  double best_loss = std::numeric_limits<double>::infinity();
  std::vector<LoadScenario> batch(cfg.batch_size);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (int h = 0; h < cfg.batch_size; ++h) {
      std::uint64_t seed_h = derive_seed(
          cfg.seed, kScenarioStream + static_cast<std::uint64_t>(epoch) * 1000003ULL + h);
      batch[h] = gen_sinusoidal(model, cfg.horizon, seed_h, scenario_cfg);
    }
    ControllerParams params = tp.to_params(alpha, eps);
    double loss = batch_loss(model, params, batch, cfg.cost, cfg.controller);
    Eigen::VectorXd g = gradient(model, tp, alpha, eps, batch, cfg.cost,
                                 cfg.controller, cfg.gradient_mode);

    StabilityReport margins = check_decentralized(
        model, params, {phi_samples_from_scenario(batch[0]).front()}, &phi_bound);
    double min_margin = std::min({margins.decentralized_a.margin,
                                  margins.decentralized_b.margin,
                                  margins.decentralized_c.margin});

    result.log.entries.push_back(
        {epoch, loss, tp.hash(), g.norm(), min_margin});
    if (loss < best_loss) {
      best_loss = loss;
      result.params = params;
    }

    ++adam_t;
    m1 = 0.9 * m1 + 0.1 * g;
    m2 = (0.999 * m2.array() + 0.001 * g.array().square()).matrix();
    Eigen::ArrayXd mh = m1.array() / (1.0 - std::pow(0.9, adam_t));
    Eigen::ArrayXd vh = m2.array() / (1.0 - std::pow(0.999, adam_t));
    Eigen::VectorXd theta =
        tp.flatten().array() - cfg.learning_rate * mh / (vh.sqrt() + 1e-8);
    tp.unflatten(theta);

    // Project the factors back onto the certifiable set: clamp gains, rescale
    // L_i about the ridge so the worst-case quadratic meets the cap.
    for (int i = 0; i < n; ++i)
      tp.k(i) = std::min(std::max(tp.k(i), gb.k_min), gb.k_max);
    for (int i = 0; i < n; ++i) {
      if (phi_bound[i] <= 0.0) continue;
      double lmax_a = lambda_max_sym(tp.L[i] * tp.L[i].transpose()) + kRidge;
      double wc = lmax_a * phi_bound[i];
      if (wc > cap) {
        double target = cap * (1.0 - 1e-12) / phi_bound[i];
        double s = (target - kRidge) / std::max(lmax_a - kRidge, 1e-300);
        if (s < 0.0) s = 0.0;
        tp.L[i] *= std::sqrt(s);
      }
    }
  }
  if (result.log.entries.empty()) result.params = tp.to_params(alpha, eps);
  return result;
}

}  // namespace gridadapt
