// Command-line front end: certify, simulate, train, evaluate, gen-scenario.
//
// Exit codes: 0 success, 1 failed stability conditions, 2 input/format errors,
// 3 runtime divergence or numerical failure.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "gridadapt/engine.hpp"
#include "gridadapt/errors.hpp"
#include "gridadapt/feeder.hpp"
#include "gridadapt/io.hpp"
#include "gridadapt/rng.hpp"
#include "gridadapt/scenario.hpp"
#include "gridadapt/stability.hpp"
#include "gridadapt/train.hpp"

namespace fs = std::filesystem;
using namespace gridadapt;

namespace {

constexpr std::uint64_t kEvalStream = 0xe7a1;
constexpr std::uint64_t kUMaxStream = 0xb0de;

struct CommonArgs {
  std::string feeder_path;
  std::string config_path;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool allow_uncertified = false;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_out_dir = true) {
  cmd->add_option("--feeder", args.feeder_path, "feeder line-list file")->required();
  cmd->add_option("--config", args.config_path, "scenario config JSON");
  if (with_out_dir) cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_option("--seed", args.seed, "root seed (overrides the config seed)")
      ->each([&args](const std::string&) { args.seed_set = true; });
  cmd->add_flag("--allow-uncertified", args.allow_uncertified,
                "run even when the stability conditions fail");
}

SinusoidalConfig load_config(const CommonArgs& args) {
  SinusoidalConfig cfg;
  if (!args.config_path.empty()) cfg = SinusoidalConfig::load(args.config_path);
  if (args.seed_set) cfg.seed = args.seed;
  return cfg;
}

FeederModel load_model(const CommonArgs& args, double scale_factor) {
  return build_feeder(load_feeder_file(args.feeder_path), scale_factor);
}

std::vector<std::string> meta_comments(const SinusoidalConfig& cfg) {
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(fnv1a64(cfg.canonical_string())));
  return {std::string("config_hash=") + hash, "seed=" + std::to_string(cfg.seed)};
}

void append_meta(std::vector<std::pair<std::string, std::string>>& kv,
                 const SinusoidalConfig& cfg) {
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(fnv1a64(cfg.canonical_string())));
  kv.emplace_back("config_hash", hash);
  kv.emplace_back("seed", std::to_string(cfg.seed));
}

// Rescale the time-varying injection magnitude (the ratio axis of the
// generalization sweep): coefficients and noise scale, p0 stays.
LoadScenario scale_injections(const LoadScenario& sc, double ratio) {
  LoadScenario out = sc;
  for (auto& c : out.coeff) c *= ratio;
  out.delta_p *= ratio;
  for (int t = 0; t < out.horizon; ++t)
    for (int i = 0; i < out.n(); ++i)
      out.p(t + 1, i) = out.p(t, i) + out.coeff[i].dot(out.basis.at(i, t)) +
                        out.delta_p(t, i);
  return out;
}

StabilityReport certify_against(const FeederModel& model, const ControllerParams& params,
                                const SinusoidalConfig& cfg) {
  LoadScenario sc = gen_sinusoidal(model, cfg.horizon, cfg.seed, cfg);
  auto samples = phi_samples_from_scenario(sc);
  auto bounds = phi_bounds_from_scenario(sc);
  return check_decentralized(model, params, samples, &bounds);
}

int cmd_certify(const CommonArgs& args, const std::string& params_path) {
  FeederModel model = load_model(args, 1.0);
  ControllerParams params = ControllerParams::load(params_path);
  SinusoidalConfig cfg = load_config(args);
  StabilityReport rep = certify_against(model, params, cfg);
  if (rep.centralized_pass()) {
    // the drift bound needs a rollout; only meaningful for certified params
    try {
      LoadScenario sc = gen_sinusoidal(model, cfg.horizon, cfg.seed, cfg);
      rep.iss.disturbance_bound = disturbance_bound(model, params, sc);
    } catch (const std::exception&) {
      // leave unset; the conditions above are still reported
    }
  }

  fs::create_directories(args.out_dir);
  auto kv = rep.to_kv();
  append_meta(kv, cfg);
  write_kv((fs::path(args.out_dir) / "report.kv").string(), kv);

  std::ofstream txt(fs::path(args.out_dir) / "report.txt");
  for (const auto& c : meta_comments(cfg)) txt << "# " << c << "\n";
  txt << rep.to_text();

  std::ofstream hist(fs::path(args.out_dir) / "radius_histogram.csv");
  for (const auto& c : meta_comments(cfg)) hist << "# " << c << "\n";
  hist << "sample,spectral_radius\n";
  for (std::size_t s = 0; s < rep.spectral_radii.size(); ++s)
    hist << s << "," << format_double(rep.spectral_radii[s]) << "\n";

  std::cout << rep.to_text();
  return rep.centralized_pass() ? 0 : 1;
}

int cmd_gen_scenario(const CommonArgs& args) {
  FeederModel model = load_model(args, 1.0);
  SinusoidalConfig cfg = load_config(args);
  LoadScenario sc = gen_sinusoidal(model, cfg.horizon, cfg.seed, cfg);
  fs::create_directories(args.out_dir);

  std::ofstream trace(fs::path(args.out_dir) / "trace.csv");
  for (const auto& c : meta_comments(cfg)) trace << "# " << c << "\n";
  for (int i = 0; i < sc.n(); ++i) trace << (i ? "," : "") << "bus_" << i + 1;
  trace << "\n";
  for (int t = 0; t <= sc.horizon; ++t) {
    for (int i = 0; i < sc.n(); ++i)
      trace << (i ? "," : "") << format_double(sc.p(t, i));
    trace << "\n";
  }

  nlohmann::json meta;
  meta["seed"] = cfg.seed;
  meta["horizon"] = sc.horizon;
  meta["eta"] = sc.basis.freqs;
  std::vector<double> cvals;
  for (const auto& c : sc.coeff) cvals.push_back(c(0));
  meta["c"] = cvals;
  meta["p0"] = std::vector<double>(sc.p0.data(), sc.p0.data() + sc.p0.size());
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(fnv1a64(cfg.canonical_string())));
  meta["config_hash"] = hash;
  std::ofstream mf(fs::path(args.out_dir) / "scenario_meta.json");
  mf << meta.dump(2) << "\n";
  std::cout << "wrote trace.csv and scenario_meta.json to " << args.out_dir << "\n";
  return 0;
}

// --trace reads measured injections instead of generating a scenario.
// --trace-basis picks the features the differences are fitted against:
// "lag:N" (N lagged local step-differences) or "sin" (the config frequencies,
// drawn from the config seed).
LoadScenario scenario_from_trace(const FeederModel& model, const std::string& trace,
                                 const std::string& basis_kind,
                                 const SinusoidalConfig& cfg) {
  CsvTable head = read_csv(trace);
  if (basis_kind.rfind("lag:", 0) == 0) {
    int lags = std::stoi(basis_kind.substr(4));
    Eigen::MatrixXd p(head.rows.size(), head.header.size());
    for (std::size_t t = 0; t < head.rows.size(); ++t)
      for (std::size_t i = 0; i < head.header.size(); ++i) p(t, i) = head.rows[t][i];
    return ingest_trace(trace, model, lag_basis_from_trace(p, lags));
  }
  if (basis_kind == "sin") {
    BasisSpec basis;
    basis.kind = BasisKind::Sinusoidal;
    basis.dims.assign(model.n(), 1);
    Rng rng(cfg.seed);
    for (int i = 0; i < model.n(); ++i)
      basis.freqs.push_back(rng.uniform(cfg.eta_min, cfg.eta_max));
    return ingest_trace(trace, model, basis);
  }
  throw ConfigError("--trace-basis must be lag:N or sin");
}

int cmd_simulate(const CommonArgs& args, const std::string& params_path,
                 const std::string& controller, int horizon, bool clamp,
                 bool emit_plot_data, const std::string& p_convention,
                 bool decomposed, const std::string& trace,
                 const std::string& trace_basis) {
  FeederModel model = load_model(args, 1.0);
  ControllerParams params = ControllerParams::load(params_path);
  SinusoidalConfig cfg = load_config(args);
  LoadScenario sc = trace.empty()
                        ? gen_sinusoidal(model, cfg.horizon, cfg.seed, cfg)
                        : scenario_from_trace(model, trace, trace_basis, cfg);

  auto samples = phi_samples_from_scenario(sc);
  auto bounds = phi_bounds_from_scenario(sc);
  StabilityReport rep = check_decentralized(model, params, samples, &bounds);
  if (!rep.centralized_pass() && !args.allow_uncertified) {
    std::cerr << "refusing to simulate uncertified parameters "
                 "(pass --allow-uncertified to override)\n"
              << rep.to_text();
    return 1;
  }

  RolloutOptions opt;
  opt.controller =
      controller == "linear" ? ControllerKind::Linear : ControllerKind::Adaptive;
  opt.horizon = horizon;
  opt.clamp = clamp;
  opt.p_convention =
      p_convention == "prev" ? PConvention::Previous : PConvention::Next;
  opt.path = decomposed ? DynamicsPath::Decomposed : DynamicsPath::Raw;

  fs::create_directories(args.out_dir);
  const int T = horizon < 0 ? sc.horizon : horizon;
  auto comments = meta_comments(cfg);

  if (T == 0) {
    std::ofstream out(fs::path(args.out_dir) / "trajectory.csv");
    for (const auto& c : comments) out << "# " << c << "\n";
    out << "t,bus,v,q,u,p,sat\n";
    write_kv((fs::path(args.out_dir) / "summary.kv").string(),
             {{"horizon", "0"}, {"total_cost", "0"}});
    return 0;
  }

  Trajectory traj = rollout(model, sc, params, opt);
  write_trajectory_csv((fs::path(args.out_dir) / "trajectory.csv").string(), traj,
                       comments);

  CostSpec spec;
  CostResult c = cost(traj, spec);
  int sat_count = traj.sat.sum();
  std::vector<std::pair<std::string, std::string>> kv;
  kv.emplace_back("controller", controller);
  kv.emplace_back("horizon", std::to_string(T));
  kv.emplace_back("total_cost", format_double(c.total));
  kv.emplace_back("certified", rep.centralized_pass() ? "1" : "0");
  kv.emplace_back("saturation_steps", std::to_string(sat_count));
  kv.emplace_back("max_abs_v", format_double(traj.v_tilde.cwiseAbs().maxCoeff()));
  append_meta(kv, cfg);
  write_kv((fs::path(args.out_dir) / "summary.kv").string(), kv);

  if (emit_plot_data) {
    auto write_wide = [&](const std::string& name, const Eigen::MatrixXd& M) {
      std::ofstream out(fs::path(args.out_dir) / name);
      for (const auto& cm : comments) out << "# " << cm << "\n";
      out << "t";
      for (int i = 0; i < M.cols(); ++i) out << ",bus_" << i + 1;
      out << "\n";
      for (int t = 0; t < M.rows(); ++t) {
        out << t;
        for (int i = 0; i < M.cols(); ++i) out << "," << format_double(M(t, i));
        out << "\n";
      }
    };
    write_wide("fig_voltage.csv", traj.v_tilde);
    write_wide("fig_reactive.csv", traj.q);
  }
  std::cout << "total cost " << format_double(c.total) << " (" << controller << ", T="
            << T << ")\n";
  return 0;
}

int cmd_train(const CommonArgs& args, const std::string& controller, int epochs,
              int batch, int horizon, double lr, double epsilon, double alpha,
              const std::string& out_params, const std::string& log_path,
              const std::string& u_max_range) {
  FeederModel model = load_model(args, 1.0);
  SinusoidalConfig cfg = load_config(args);

  TrainConfig tc;
  tc.controller =
      controller == "linear" ? ControllerKind::Linear : ControllerKind::Adaptive;
  tc.epochs = epochs;
  tc.batch_size = batch;
  tc.horizon = horizon;
  tc.learning_rate = lr;
  tc.epsilon = epsilon;
  tc.alpha = alpha;
  tc.seed = cfg.seed;

  TrainResult res = fit(model, tc, cfg);

  if (!u_max_range.empty()) {
    double lo = 0.01, hi = 0.05;
    if (std::sscanf(u_max_range.c_str(), "%lf,%lf", &lo, &hi) != 2)
      throw ConfigError("--sample-u-max expects LO,HI");
    Rng rng(derive_seed(cfg.seed, kUMaxStream));
    Eigen::VectorXd u_max(model.n());
    for (int i = 0; i < model.n(); ++i) u_max(i) = rng.uniform(lo, hi);
    res.params.u_max = u_max;
  }

  if (!out_params.empty()) {
    if (auto dir = fs::path(out_params).parent_path(); !dir.empty())
      fs::create_directories(dir);
    std::vector<std::pair<std::string, std::string>> meta;
    for (const auto& c : meta_comments(cfg)) {
      auto eq = c.find('=');
      meta.emplace_back(c.substr(0, eq), c.substr(eq + 1));
    }
    res.params.save(out_params, meta);
  }
  if (!log_path.empty()) {
    if (auto dir = fs::path(log_path).parent_path(); !dir.empty())
      fs::create_directories(dir);
    res.log.save_csv(log_path, meta_comments(cfg));
  }
  if (!res.log.entries.empty())
    std::cout << "epochs " << res.log.entries.size() << ": loss "
              << format_double(res.log.entries.front().loss) << " -> "
              << format_double(res.log.entries.back().loss) << "\n";
  else
    std::cout << "no epochs run; wrote initialization parameters\n";
  return 0;
}

int cmd_evaluate(const CommonArgs& args, const std::string& params_adaptive,
                 const std::string& params_linear, const std::string& ratios_str,
                 int num_test, double gamma, bool clamp) {
  FeederModel model = load_model(args, 1.0);
  ControllerParams pa = ControllerParams::load(params_adaptive);
  ControllerParams pl = ControllerParams::load(params_linear);
  SinusoidalConfig cfg = load_config(args);

  StabilityReport ra = certify_against(model, pa, cfg);
  StabilityReport rl = certify_against(model, pl, cfg);
  if ((!ra.centralized_pass() || !rl.centralized_pass()) && !args.allow_uncertified) {
    std::cerr << "refusing to evaluate uncertified parameters "
                 "(pass --allow-uncertified to override)\n";
    return 1;
  }

  std::vector<double> ratios;
  {
    std::istringstream ss(ratios_str);
    std::string tok;
    while (std::getline(ss, tok, ',')) ratios.push_back(std::stod(tok));
    if (ratios.empty()) throw ConfigError("no ratios given");
  }

  CostSpec spec;
  spec.gamma = gamma;
  fs::create_directories(args.out_dir);
  std::ofstream out(fs::path(args.out_dir) / "evaluation.csv");
  for (const auto& c : meta_comments(cfg)) out << "# " << c << "\n";
  out << "ratio,adaptive_mean,adaptive_std,linear_mean,linear_std,improvement_pct,"
         "adaptive_wins,linear_wins\n";
  std::ofstream per(fs::path(args.out_dir) / "per_scenario.csv");
  for (const auto& c : meta_comments(cfg)) per << "# " << c << "\n";
  per << "ratio,scenario,adaptive_cost,linear_cost,winner\n";

  std::vector<std::pair<std::string, std::string>> kv;
  for (double ratio : ratios) {
    std::vector<LoadScenario> set;
    for (int s = 0; s < num_test; ++s) {
      std::uint64_t seed = derive_seed(cfg.seed, kEvalStream + s);
      set.push_back(scale_injections(gen_sinusoidal(model, cfg.horizon, seed, cfg), ratio));
    }
    ComparisonReport rep = compare(model, set, pa, pl, spec, clamp);
    out << format_double(ratio) << "," << format_double(rep.adaptive_mean) << ","
        << format_double(rep.adaptive_std) << "," << format_double(rep.linear_mean)
        << "," << format_double(rep.linear_std) << ","
        << format_double(rep.improvement_pct) << "," << rep.adaptive_wins << ","
        << rep.linear_wins << "\n";
    for (int s = 0; s < num_test; ++s)
      per << format_double(ratio) << "," << s << ","
          << format_double(rep.adaptive_costs[s]) << ","
          << format_double(rep.linear_costs[s]) << ","
          << (rep.adaptive_costs[s] < rep.linear_costs[s] ? "adaptive" : "linear")
          << "\n";
    kv.emplace_back("improvement_pct_ratio_" + format_double(ratio),
                    format_double(rep.improvement_pct));
    std::cout << "ratio " << ratio << ": adaptive " << format_double(rep.adaptive_mean)
              << " vs linear " << format_double(rep.linear_mean) << " ("
              << format_double(rep.improvement_pct) << "% lower)\n";
  }
  append_meta(kv, cfg);
  write_kv((fs::path(args.out_dir) / "report.kv").string(), kv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"simulation, certification and training for decentralized adaptive "
               "voltage control on radial feeders"};
  app.require_subcommand(1);

  CommonArgs cert_args, sim_args, train_args, eval_args, gen_args;
  std::string cert_params, sim_params, eval_pa, eval_pl;
  std::string sim_controller = "adaptive", train_controller = "adaptive";
  int sim_horizon = -1;
  bool sim_clamp = false, sim_plots = false, sim_decomposed = false;
  std::string sim_pconv = "next", sim_trace, sim_trace_basis = "lag:1";
  int train_epochs = 100, train_batch = 10, train_horizon = 200;
  double train_lr = -1.0, train_eps = 0.01, train_alpha = -1.0;
  std::string train_out = "params.json", train_log, train_umax;
  std::string eval_ratios = "0.5,1.0,1.5";
  int eval_num = 100;
  double eval_gamma = 1e-3;
  bool eval_clamp = false;

  auto* certify = app.add_subcommand("certify", "check the stability conditions");
  add_common(certify, cert_args);
  certify->add_option("--params", cert_params, "controller parameter file")->required();

  auto* simulate = app.add_subcommand("simulate", "closed-loop rollout with reports");
  add_common(simulate, sim_args);
  simulate->add_option("--params", sim_params)->required();
  simulate->add_option("--controller", sim_controller)
      ->check(CLI::IsMember({"adaptive", "linear"}));
  simulate->add_option("--horizon", sim_horizon, "override the scenario horizon");
  simulate->add_flag("--clamp", sim_clamp, "apply the per-bus action bounds");
  simulate->add_flag("--emit-plot-data", sim_plots);
  simulate->add_option("--p-convention", sim_pconv)->check(CLI::IsMember({"next", "prev"}));
  simulate->add_flag("--decomposed", sim_decomposed, "drive the lumped recursion");
  simulate->add_option("--trace", sim_trace, "ingest a measured trace CSV instead of generating");
  simulate->add_option("--trace-basis", sim_trace_basis, "lag:N or sin");

  auto* train = app.add_subcommand("train", "gradient training with projection");
  add_common(train, train_args, /*with_out_dir=*/false);
  train->add_option("--controller", train_controller)
      ->check(CLI::IsMember({"adaptive", "linear"}));
  train->add_option("--epochs", train_epochs);
  train->add_option("--batch", train_batch);
  train->add_option("--horizon", train_horizon);
  train->add_option("--lr", train_lr, "Adam learning rate (default: auto from gain span)");
  train->add_option("--epsilon", train_eps);
  train->add_option("--alpha", train_alpha, "adaptation decay (default 1 - epsilon)");
  train->add_option("--scenario-config", train_args.config_path, "alias for --config");
  train->add_option("--out", train_out, "output parameter file");
  train->add_option("--log", train_log, "training log CSV");
  train->add_option("--sample-u-max", train_umax,
                    "draw per-bus action bounds uniform[LO,HI] into the params file");

  auto* evaluate = app.add_subcommand("evaluate", "adaptive vs linear comparison");
  add_common(evaluate, eval_args);
  evaluate->add_option("--params-adaptive", eval_pa)->required();
  evaluate->add_option("--params-linear", eval_pl)->required();
  evaluate->add_option("--ratios", eval_ratios, "injection magnitude ratios");
  evaluate->add_option("--num-test", eval_num, "test scenarios per ratio");
  evaluate->add_option("--gamma", eval_gamma, "action cost weight");
  evaluate->add_flag("--clamp", eval_clamp);

  auto* gen = app.add_subcommand("gen-scenario", "write a scenario trace + metadata");
  add_common(gen, gen_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (certify->parsed()) return cmd_certify(cert_args, cert_params);
    if (simulate->parsed())
      return cmd_simulate(sim_args, sim_params, sim_controller, sim_horizon, sim_clamp,
                          sim_plots, sim_pconv, sim_decomposed, sim_trace,
                          sim_trace_basis);
    if (train->parsed()) {
      if (train_lr < 0.0) {
        // default learning rate: 1/60 of the certified gain span
        FeederModel model = load_model(train_args, 1.0);
        GainBounds gb = gain_bounds(model, train_eps);
        train_lr = (gb.k_max - gb.k_min) / 60.0;
      }
      return cmd_train(train_args, train_controller, train_epochs, train_batch,
                       train_horizon, train_lr, train_eps, train_alpha, train_out,
                       train_log, train_umax);
    }
    if (evaluate->parsed())
      return cmd_evaluate(eval_args, eval_pa, eval_pl, eval_ratios, eval_num,
                          eval_gamma, eval_clamp);
    if (gen->parsed()) return cmd_gen_scenario(gen_args);
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
