#include "gridadapt/scenario.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <sstream>

#include "gridadapt/errors.hpp"
#include "gridadapt/io.hpp"
#include "gridadapt/rng.hpp"

namespace gridadapt {

using nlohmann::json;

// ---------------------------------------------------------------------------
// BasisSpec

int BasisSpec::total_dim() const {
  int s = 0;
  for (int m : dims) s += m;
  return s;
}

int BasisSpec::steps() const {
  if (kind == BasisKind::Sinusoidal) return std::numeric_limits<int>::max();
  int s = std::numeric_limits<int>::max();
  for (const auto& tb : table) s = std::min(s, static_cast<int>(tb.rows()));
  return s;
}

Eigen::VectorXd BasisSpec::at(int bus, int t) const {
  if (bus < 0 || bus >= bus_count()) throw RangeError("basis bus index out of range");
  if (t < 0) throw RangeError("basis time index negative");
  if (kind == BasisKind::Sinusoidal) {
    Eigen::VectorXd v(1);
    v(0) = std::sin(freqs[bus] * static_cast<double>(t));
    return v;
  }
  const Eigen::MatrixXd& tb = table[bus];
  if (t >= tb.rows()) throw RangeError("basis time index beyond tabulated range");
  return tb.row(t).transpose();
}

double BasisSpec::worst_case_sq(int bus) const {
  if (kind == BasisKind::Sinusoidal) return static_cast<double>(dims[bus]);  // |sin| <= 1
  double best = 0.0;
  const Eigen::MatrixXd& tb = table[bus];
  for (Eigen::Index t = 0; t < tb.rows(); ++t)
    best = std::max(best, tb.row(t).squaredNorm());
  return best;
}

void BasisSpec::validate() const {
  if (dims.empty()) throw ConfigError("basis has no buses");
  for (int m : dims)
    if (m < 1) throw ConfigError("basis dimension must be >= 1");
  if (kind == BasisKind::Sinusoidal) {
    if (freqs.size() != dims.size())
      throw ConfigError("sinusoidal basis needs one frequency per bus");
    for (std::size_t i = 0; i < freqs.size(); ++i) {
      if (dims[i] != 1) throw ConfigError("sinusoidal basis is one-dimensional per bus");
      if (!(freqs[i] > 0.0) || !(freqs[i] < 3.14159265358979323846))
        throw ConfigError("sinusoidal frequency must lie in (0, pi)");
    }
  } else {
    if (table.size() != dims.size())
      throw ConfigError("tabulated basis needs one table per bus");
    for (std::size_t i = 0; i < table.size(); ++i)
      if (table[i].cols() != dims[i])
        throw ConfigError("tabulated basis column count mismatch");
  }
}

// ---------------------------------------------------------------------------
// CorrelationModel

Eigen::MatrixXd CorrelationModel::block(int i, int j, const BasisSpec& basis) const {
  const int mi = basis.dims[i], mj = basis.dims[j];
  switch (preset) {
    case Preset::Independent:
      return Eigen::MatrixXd::Zero(mj, mi);
    case Preset::Identical:
      if (mi != mj)
        throw ConfigError("identical correlation preset needs equal basis dimensions");
      return Eigen::MatrixXd::Identity(mj, mi);
    case Preset::Custom:
      if (i < 0 || i >= static_cast<int>(theta.size()) || j < 0 ||
          j >= static_cast<int>(theta[i].size()))
        throw ConfigError("custom correlation block missing");
      return theta[i][j];
  }
  throw ConfigError("unknown correlation preset");
}

Eigen::VectorXd LoadScenario::xi(int i, int j, int t) const {
  return basis.at(j, t) - correlation.block(i, j, basis) * basis.at(i, t);
}

// ---------------------------------------------------------------------------
// SinusoidalConfig

void SinusoidalConfig::validate() const {
  if (horizon < 1) throw ConfigError("horizon must be >= 1");
  if (eta_min > eta_max || c_min > c_max || p0_min > p0_max)
    throw ConfigError("empty range in scenario config");
  if (!(eta_min > 0.0) || !(eta_max < 3.14159265358979323846))
    throw ConfigError("eta range must lie inside (0, pi)");
  if (noise_amp < 0.0) throw ConfigError("noise_amp must be >= 0");
}

static json to_json(const SinusoidalConfig& c) {
  return json{{"eta_min", c.eta_min}, {"eta_max", c.eta_max},
              {"c_min", c.c_min},     {"c_max", c.c_max},
              {"p0_min", c.p0_min},   {"p0_max", c.p0_max},
              {"noise_amp", c.noise_amp}, {"horizon", c.horizon},
              {"seed", c.seed}};
}

SinusoidalConfig SinusoidalConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open scenario config: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError("bad scenario config JSON: " + std::string(e.what()));
  }
  SinusoidalConfig c;
  try {
    c.eta_min = j.value("eta_min", c.eta_min);
    c.eta_max = j.value("eta_max", c.eta_max);
    c.c_min = j.value("c_min", c.c_min);
    c.c_max = j.value("c_max", c.c_max);
    c.p0_min = j.value("p0_min", c.p0_min);
    c.p0_max = j.value("p0_max", c.p0_max);
    c.noise_amp = j.value("noise_amp", c.noise_amp);
    c.horizon = j.value("horizon", c.horizon);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw FormatError("bad scenario config field: " + std::string(e.what()));
  }
  c.validate();
  return c;
}

void SinusoidalConfig::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open for writing: " + path);
  out << to_json(*this).dump(2) << "\n";
}

std::string SinusoidalConfig::canonical_string() const { return to_json(*this).dump(); }

// ---------------------------------------------------------------------------
// Generation

LoadScenario gen_sinusoidal(const FeederModel& model, int T, std::uint64_t seed,
                            const SinusoidalConfig& cfg) {
  cfg.validate();
  if (T < 1) throw ConfigError("horizon must be >= 1");
  const int n = model.n();
  Rng rng(seed);

  LoadScenario sc;
  sc.horizon = T;
  sc.seed = seed;
  sc.basis.kind = BasisKind::Sinusoidal;
  sc.basis.dims.assign(n, 1);
  sc.basis.freqs.resize(n);
  for (int i = 0; i < n; ++i) sc.basis.freqs[i] = rng.uniform(cfg.eta_min, cfg.eta_max);
  sc.coeff.resize(n);
  for (int i = 0; i < n; ++i) {
    sc.coeff[i] = Eigen::VectorXd(1);
    sc.coeff[i](0) = rng.uniform(cfg.c_min, cfg.c_max);
  }
  sc.p0.resize(n);
  for (int i = 0; i < n; ++i) sc.p0(i) = rng.uniform(cfg.p0_min, cfg.p0_max);

  sc.delta_p = Eigen::MatrixXd::Zero(T + 1, n);
  if (cfg.noise_amp > 0.0) {
    for (int t = 0; t <= T; ++t)
      for (int i = 0; i < n; ++i)
        sc.delta_p(t, i) = rng.uniform(-cfg.noise_amp, cfg.noise_amp);
  }

  sc.p.resize(T + 1, n);
  sc.p.row(0) = sc.p0.transpose();
  for (int t = 0; t < T; ++t) {
    for (int i = 0; i < n; ++i) {
      double dphi = sc.coeff[i].dot(sc.basis.at(i, t));
      sc.p(t + 1, i) = sc.p(t, i) + dphi + sc.delta_p(t, i);
    }
  }
  return sc;
}

BasisSpec lag_basis_from_trace(const Eigen::MatrixXd& p, int lags) {
  if (lags < 1) throw ConfigError("lag basis needs at least one lag");
  const int rows = static_cast<int>(p.rows());
  const int n = static_cast<int>(p.cols());
  if (rows < 2) throw FormatError("trace needs at least two rows");
  BasisSpec basis;
  basis.kind = BasisKind::Tabulated;
  basis.dims.assign(n, lags);
  basis.table.resize(n);
  for (int i = 0; i < n; ++i) {
    Eigen::MatrixXd tb = Eigen::MatrixXd::Zero(rows, lags);
    for (int t = 0; t < rows; ++t)
      for (int l = 1; l <= lags; ++l)
        if (t - l >= 0) tb(t, l - 1) = p(t - l + 1, i) - p(t - l, i);
    basis.table[i] = tb;
  }
  return basis;
}

LoadScenario ingest_trace(const std::string& path, const FeederModel& model,
                          const BasisSpec& basis, int fit_window) {
  CsvTable csv = read_csv(path);
  const int n = model.n();
  if (static_cast<int>(csv.header.size()) != n)
    throw FormatError("trace has " + std::to_string(csv.header.size()) +
                      " columns, feeder has " + std::to_string(n) + " buses");
  const int rows = static_cast<int>(csv.rows.size());
  if (rows < 2) throw FormatError("trace needs at least two rows");
  basis.validate();
  if (static_cast<int>(basis.dims.size()) != n)
    throw DimensionError("basis bus count does not match the feeder");

  const int T = rows - 1;
  if (basis.steps() < T + 1)
    throw ConfigError("tabulated basis shorter than the trace");

  Eigen::MatrixXd p(rows, n);
  for (int t = 0; t < rows; ++t)
    for (int i = 0; i < n; ++i) p(t, i) = csv.rows[t][i];

  LoadScenario sc;
  sc.horizon = T;
  sc.seed = 0;
  sc.basis = basis;
  sc.p = p;
  sc.p0 = p.row(0).transpose();
  sc.coeff.resize(n);
  sc.delta_p = Eigen::MatrixXd::Zero(T + 1, n);

  const int fit_lo = (fit_window > 0 && fit_window < T) ? T - fit_window : 0;
  for (int i = 0; i < n; ++i) {
    const int m = basis.dims[i];
    // Least squares of the observed differences on the basis values.
    Eigen::MatrixXd Phi(T - fit_lo, m);
    Eigen::VectorXd d(T - fit_lo);
    for (int t = fit_lo; t < T; ++t) {
      Phi.row(t - fit_lo) = basis.at(i, t).transpose();
      d(t - fit_lo) = p(t + 1, i) - p(t, i);
    }
    Eigen::VectorXd c;
    if (Phi.squaredNorm() < 1e-300) {
      c = Eigen::VectorXd::Zero(m);  // degenerate all-zero regressors
    } else {
      c = Phi.bdcSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(d);
    }
    sc.coeff[i] = c;
    for (int t = 0; t < T; ++t)
      sc.delta_p(t, i) = p(t + 1, i) - p(t, i) - c.dot(basis.at(i, t));
  }
  return sc;
}

// ---------------------------------------------------------------------------
// Decomposition

DisturbanceDecomposition decompose(const FeederModel& model, const LoadScenario& sc) {
  const int n = model.n();
  if (sc.n() != n) throw DimensionError("scenario/model bus count mismatch");
  const int T = sc.horizon;

  DisturbanceDecomposition dec;
  dec.theta_cor.resize(n);
  dec.a.resize(sc.basis.total_dim());

  int offset = 0;
  for (int i = 0; i < n; ++i) {
    const int mi = sc.basis.dims[i];
    Eigen::RowVectorXd th = Eigen::RowVectorXd::Zero(mi);
    if (sc.correlation.preset != CorrelationModel::Preset::Independent) {
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        th += model.D_o(i, j) * (sc.coeff[j].transpose() * sc.correlation.block(i, j, sc.basis));
      }
    }
    dec.theta_cor[i] = th;
    dec.a.segment(offset, mi) = model.D_e(i, i) * sc.coeff[i] + th.transpose();
    offset += mi;
  }

  dec.delta_phi = Eigen::MatrixXd::Zero(T + 1, n);
  for (int t = 0; t <= T; ++t) {
    for (int i = 0; i < n; ++i) {
      // Residual of representing the non-local drive with the local basis:
      // sum_{j != i} D_o(i,j) c_j' phi_j(t)  -  theta_cor_i phi_i(t).
      double nonlocal = 0.0;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        nonlocal += model.D_o(i, j) * sc.coeff[j].dot(sc.basis.at(j, t));
      }
      dec.delta_phi(t, i) = nonlocal - dec.theta_cor[i].dot(sc.basis.at(i, t));
    }
  }

  dec.delta_v = dec.delta_phi * model.X.transpose() + sc.delta_p * model.R.transpose();
  return dec;
}

Eigen::MatrixXd basis_at(const LoadScenario& sc, int t) {
  if (t < 0 || t > sc.horizon) throw RangeError("basis time index out of [0, T]");
  const int n = sc.n();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(sc.basis.total_dim(), n);
  int offset = 0;
  for (int i = 0; i < n; ++i) {
    const int mi = sc.basis.dims[i];
    out.block(offset, i, mi, 1) = sc.basis.at(i, t);
    offset += mi;
  }
  return out;
}

}  // namespace gridadapt
