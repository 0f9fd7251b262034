#include <benchmark/benchmark.h>

#include "gridadapt/engine.hpp"
#include "gridadapt/feeder.hpp"
#include "gridadapt/scenario.hpp"
#include "gridadapt/stability.hpp"
#include "gridadapt/train.hpp"

using namespace gridadapt;

namespace {

const FeederModel& model33() {
  static FeederModel m = build_feeder(
      load_feeder_file(std::string(GRIDADAPT_DATA_DIR) + "/ieee33.feeder"));
  return m;
}

ControllerParams certified33() {
  const FeederModel& m = model33();
  GainBounds gb = gain_bounds(m, 5e-4);
  ControllerParams p;
  p.epsilon = 5e-4;
  p.alpha = 1.0 - p.epsilon;
  p.k = Eigen::VectorXd::Constant(m.n(), 0.5 * (gb.k_min + gb.k_max));
  double cap = (1.0 - p.epsilon) * (1.0 - p.alpha) * gb.lambda_min_x_inv;
  p.A.assign(m.n(), Eigen::MatrixXd::Constant(1, 1, 0.5 * cap));
  return p;
}

void BM_Rollout33(benchmark::State& state) {
  const FeederModel& m = model33();
  SinusoidalConfig cfg;
  LoadScenario sc = gen_sinusoidal(m, static_cast<int>(state.range(0)), 1, cfg);
  ControllerParams p = certified33();
  RolloutOptions opt;
  opt.controller = ControllerKind::Adaptive;
  for (auto _ : state) {
    benchmark::DoNotOptimize(rollout(m, sc, p, opt));
  }
}
BENCHMARK(BM_Rollout33)->Arg(200)->Arg(500);

void BM_CheckCentralized33(benchmark::State& state) {
  const FeederModel& m = model33();
  SinusoidalConfig cfg;
  LoadScenario sc = gen_sinusoidal(m, 50, 2, cfg);
  ControllerParams p = certified33();
  auto samples = phi_samples_from_scenario(sc);
  for (auto _ : state) {
    benchmark::DoNotOptimize(check_centralized(m, p, samples));
  }
}
BENCHMARK(BM_CheckCentralized33);

void BM_BatchGradient(benchmark::State& state) {
  const FeederModel& m = model33();
  SinusoidalConfig cfg;
  std::vector<LoadScenario> batch;
  for (int s = 0; s < 4; ++s) batch.push_back(gen_sinusoidal(m, 200, 10 + s, cfg));
  ControllerParams p = certified33();
  TrainableParams tp;
  tp.k = p.k;
  for (int i = 0; i < m.n(); ++i)
    tp.L.push_back(Eigen::MatrixXd::Constant(1, 1, std::sqrt(p.A[i](0, 0))));
  CostSpec spec;
  for (auto _ : state) {
    benchmark::DoNotOptimize(gradient(m, tp, p.alpha, p.epsilon, batch, spec,
                                      ControllerKind::Adaptive,
                                      GradientMode::Analytic));
  }
}
BENCHMARK(BM_BatchGradient);

void BM_Equilibrium33(benchmark::State& state) {
  const FeederModel& m = model33();
  SinusoidalConfig cfg;
  LoadScenario sc = gen_sinusoidal(m, 10, 3, cfg);
  DisturbanceDecomposition dec = decompose(m, sc);
  ControllerParams p = certified33();
  PhiSample phi(m.n());
  for (int i = 0; i < m.n(); ++i) phi[i] = sc.phi(i, 5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        equilibrium(m, p, phi, dec.a, dec.delta_v.row(5).transpose(), 5));
  }
}
BENCHMARK(BM_Equilibrium33);

}  // namespace

BENCHMARK_MAIN();
