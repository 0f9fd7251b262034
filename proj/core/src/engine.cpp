#include "gridadapt/engine.hpp"

#include <cmath>
#include <fstream>

#include "gridadapt/errors.hpp"
#include "gridadapt/io.hpp"
#include "gridadapt/rng.hpp"

namespace gridadapt {

namespace {

constexpr std::uint64_t kQ0Stream = 0x71301;

double vec_norm(const Eigen::VectorXd& v, CostSpec::VNorm n) {
  switch (n) {
    case CostSpec::VNorm::L1: return v.lpNorm<1>();
    case CostSpec::VNorm::L2: return v.norm();
    case CostSpec::VNorm::Linf: return v.lpNorm<Eigen::Infinity>();
  }
  return 0.0;
}

double vec_norm(const Eigen::VectorXd& v, CostSpec::UNorm n) {
  return n == CostSpec::UNorm::L1 ? v.lpNorm<1>() : v.norm();
}

}  // namespace

Eigen::VectorXd default_q0(const LoadScenario& sc) {
  Rng rng(derive_seed(sc.seed, kQ0Stream));
  Eigen::VectorXd q0(sc.n());
  for (int i = 0; i < sc.n(); ++i) q0(i) = rng.uniform(0.3, 1.7);
  return q0;
}

Trajectory rollout(const FeederModel& model, const LoadScenario& sc,
                   const ControllerParams& params, const RolloutOptions& opt) {
  const int n = model.n();
  if (sc.n() != n) throw DimensionError("scenario/model bus count mismatch");
  if (params.n() != n) throw DimensionError("params/model bus count mismatch");
  const int T = opt.horizon < 0 ? sc.horizon : opt.horizon;
  if (T > sc.horizon) throw ConfigError("rollout horizon exceeds the scenario horizon");
  if (opt.path == DynamicsPath::Decomposed && opt.p_convention == PConvention::Previous)
    throw ConfigError("the decomposed recursion is defined for the Next convention only");

  Eigen::VectorXd q0 = opt.q0 ? *opt.q0 : default_q0(sc);
  if (q0.size() != n) throw DimensionError("q0 length mismatch");

  ControllerParams par = params;
  if (!opt.clamp) par.u_max.reset();

  DisturbanceDecomposition dec;
  if (opt.path == DynamicsPath::Decomposed) dec = decompose(model, sc);

  Trajectory traj;
  traj.horizon = T;
  traj.controller = opt.controller;
  traj.v_tilde.resize(T + 1, n);
  traj.q.resize(T + 1, n);
  traj.p = sc.p.topRows(T + 1);
  traj.a_tilde.resize(T + 1, sc.basis.total_dim());
  traj.u.resize(T, n);
  traj.sat = Eigen::MatrixXi::Zero(T, n);

  AdaptiveState state = AdaptiveState::zero(sc.basis);
  traj.q.row(0) = q0.transpose();
  Eigen::VectorXd v = model.R * sc.p.row(0).transpose() + model.X * q0;
  traj.v_tilde.row(0) = v.transpose();
  traj.a_tilde.row(0) = state.stacked().transpose();

  std::vector<Eigen::VectorXd> phi(n);
  for (int t = 0; t < T; ++t) {
    for (int i = 0; i < n; ++i) phi[i] = sc.basis.at(i, t);
    Eigen::VectorXd u = opt.controller == ControllerKind::Adaptive
                            ? adaptive_control(v, phi, state, par)
                            : linear_control(v, par);
    if (opt.clamp && params.u_max) {
      for (int i = 0; i < n; ++i) {
        if (std::abs(u(i)) >= (*params.u_max)(i)) {
          traj.sat(t, i) = 1;
          traj.saturated = true;
        }
      }
    }
    traj.u.row(t) = u.transpose();
    Eigen::VectorXd q_next = traj.q.row(t).transpose() - u;
    traj.q.row(t + 1) = q_next.transpose();

    Eigen::VectorXd v_next;
    if (opt.path == DynamicsPath::Raw) {
      const int p_idx = opt.p_convention == PConvention::Next ? t + 1 : t;
      v_next = model.R * sc.p.row(p_idx).transpose() + model.X * q_next;
    } else {
      // v(t+1) = v(t) - X (u - phi_hat' a) + delta_v(t)
      Eigen::VectorXd phi_a(n);
      int offset = 0;
      for (int i = 0; i < n; ++i) {
        const int mi = sc.basis.dims[i];
        phi_a(i) = dec.a.segment(offset, mi).dot(phi[i]);
        offset += mi;
      }
      v_next = v - model.X * (u - phi_a) + dec.delta_v.row(t).transpose();
    }

    if (!v_next.allFinite() || v_next.lpNorm<Eigen::Infinity>() > opt.divergence_limit)
      throw DivergenceError("voltage deviation left the divergence guard at step " +
                                std::to_string(t + 1),
                            t + 1);

    if (opt.controller == ControllerKind::Adaptive)
      state = adapt_step(state, v, phi, par);

    v = v_next;
    traj.v_tilde.row(t + 1) = v.transpose();
    traj.a_tilde.row(t + 1) = state.stacked().transpose();
  }
  return traj;
}

CostResult cost(const Trajectory& traj, const CostSpec& spec) {
  CostResult res;
  const int T = traj.horizon;
  res.per_step_v.reserve(T);
  res.per_step_u.reserve(T);
  for (int t = 1; t <= T; ++t) {
    double cv = vec_norm(traj.v_tilde.row(t).transpose(), spec.v_norm);
    double cu = spec.gamma * vec_norm(traj.u.row(t - 1).transpose(), spec.u_norm);
    res.per_step_v.push_back(cv);
    res.per_step_u.push_back(cu);
    res.total += cv + cu;
  }
  return res;
}

ComparisonReport compare(const FeederModel& model,
                         const std::vector<LoadScenario>& scenarios,
                         const ControllerParams& adaptive_params,
                         const ControllerParams& linear_params,
                         const CostSpec& spec, bool clamp) {
  if (scenarios.empty()) throw ConfigError("empty scenario set");
  ComparisonReport rep;
  for (const auto& sc : scenarios) {
    Eigen::VectorXd q0 = default_q0(sc);
    RolloutOptions oa;
    oa.controller = ControllerKind::Adaptive;
    oa.q0 = q0;
    oa.clamp = clamp;
    RolloutOptions ol = oa;
    ol.controller = ControllerKind::Linear;
    double ca = cost(rollout(model, sc, adaptive_params, oa), spec).total;
    double cl = cost(rollout(model, sc, linear_params, ol), spec).total;
    rep.adaptive_costs.push_back(ca);
    rep.linear_costs.push_back(cl);
    if (ca < cl)
      ++rep.adaptive_wins;
    else if (cl < ca)
      ++rep.linear_wins;
  }
  auto mean_std = [](const std::vector<double>& xs) {
    double m = 0.0;
    for (double x : xs) m += x;
    m /= static_cast<double>(xs.size());
    double s = 0.0;
    for (double x : xs) s += (x - m) * (x - m);
    s = xs.size() > 1 ? std::sqrt(s / static_cast<double>(xs.size() - 1)) : 0.0;
    return std::pair{m, s};
  };
  std::tie(rep.adaptive_mean, rep.adaptive_std) = mean_std(rep.adaptive_costs);
  std::tie(rep.linear_mean, rep.linear_std) = mean_std(rep.linear_costs);
  rep.improvement_pct =
      rep.linear_mean != 0.0
          ? 100.0 * (rep.linear_mean - rep.adaptive_mean) / rep.linear_mean
          : 0.0;
  return rep;
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj,
                          const std::vector<std::string>& meta_comments) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open for writing: " + path);
  for (const auto& c : meta_comments) out << "# " << c << "\n";
  out << "t,bus,v,q,u,p,sat\n";
  const int n = static_cast<int>(traj.v_tilde.cols());
  for (int t = 0; t <= traj.horizon; ++t) {
    for (int i = 0; i < n; ++i) {
      out << t << "," << i + 1 << "," << format_double(traj.v_tilde(t, i)) << ","
          << format_double(traj.q(t, i)) << ",";
      if (t < traj.horizon)
        out << format_double(traj.u(t, i)) << "," << format_double(traj.p(t, i))
            << "," << traj.sat(t, i);
      else
        out << "," << format_double(traj.p(t, i)) << ",";
      out << "\n";
    }
  }
}

}  // namespace gridadapt
