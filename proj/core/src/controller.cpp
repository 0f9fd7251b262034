#include "gridadapt/controller.hpp"

#include <Eigen/Eigenvalues>
#include <fstream>
#include <nlohmann/json.hpp>

#include "gridadapt/errors.hpp"

namespace gridadapt {

using nlohmann::json;

void ControllerParams::validate_structure() const {
  const int nb = n();
  if (nb == 0) throw ConfigError("controller has no buses");
  if (static_cast<int>(A.size()) != nb)
    throw ConfigError("controller needs one adaptation matrix per bus");
  for (int i = 0; i < nb; ++i) {
    const Eigen::MatrixXd& Ai = A[i];
    if (Ai.rows() != Ai.cols()) throw ConfigError("adaptation matrices must be square");
    if ((Ai - Ai.transpose()).cwiseAbs().maxCoeff() > 1e-9)
      throw ConfigError("adaptation matrices must be symmetric");
  }
  if (u_max && u_max->size() != nb)
    throw ConfigError("u_max must have one bound per bus");
}

void ControllerParams::validate() const {
  validate_structure();
  if (!(alpha > 0.0) || !(alpha <= 1.0 - epsilon))
    throw ConfigError("alpha must satisfy 0 < alpha <= 1 - epsilon");
  if (!(epsilon > 0.0) || !(epsilon < 1.0))
    throw ConfigError("epsilon must lie in (0, 1)");
  for (int i = 0; i < n(); ++i) {
    if (!(k(i) > 0.0)) throw ConfigError("gains must be positive");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A[i]);
    if (es.eigenvalues().minCoeff() <= 0.0)
      throw ConfigError("adaptation matrices must be positive definite");
  }
}

AdaptiveState AdaptiveState::zero(const BasisSpec& basis) {
  AdaptiveState s;
  s.a_tilde.reserve(basis.dims.size());
  for (int m : basis.dims) s.a_tilde.push_back(Eigen::VectorXd::Zero(m));
  return s;
}

Eigen::VectorXd AdaptiveState::stacked() const {
  int total = 0;
  for (const auto& v : a_tilde) total += static_cast<int>(v.size());
  Eigen::VectorXd out(total);
  int offset = 0;
  for (const auto& v : a_tilde) {
    out.segment(offset, v.size()) = v;
    offset += static_cast<int>(v.size());
  }
  return out;
}

namespace {
inline void clamp_actions(Eigen::VectorXd& u, const ControllerParams& params) {
  if (!params.u_max) return;
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    double b = (*params.u_max)(i);
    u(i) = std::min(std::max(u(i), -b), b);
  }
}
}  // namespace

Eigen::VectorXd linear_control(const Eigen::VectorXd& v_tilde,
                               const ControllerParams& params) {
  if (v_tilde.size() != params.k.size())
    throw DimensionError("voltage vector does not match the gain vector");
  Eigen::VectorXd u = params.k.cwiseProduct(v_tilde);
  clamp_actions(u, params);
  return u;
}

Eigen::VectorXd adaptive_control(const Eigen::VectorXd& v_tilde,
                                 const std::vector<Eigen::VectorXd>& phi_t,
                                 const AdaptiveState& state,
                                 const ControllerParams& params) {
  const int n = params.n();
  if (v_tilde.size() != n || static_cast<int>(phi_t.size()) != n ||
      static_cast<int>(state.a_tilde.size()) != n)
    throw DimensionError("adaptive control inputs do not match the bus count");
  Eigen::VectorXd u(n);
  for (int i = 0; i < n; ++i) {
    if (phi_t[i].size() != state.a_tilde[i].size())
      throw DimensionError("basis/adaptation dimension mismatch at bus " + std::to_string(i));
    u(i) = params.k(i) * v_tilde(i) + phi_t[i].dot(state.a_tilde[i]);
  }
  clamp_actions(u, params);
  return u;
}

AdaptiveState adapt_step(const AdaptiveState& state, const Eigen::VectorXd& v_tilde,
                         const std::vector<Eigen::VectorXd>& phi_t,
                         const ControllerParams& params) {
  const int n = params.n();
  if (v_tilde.size() != n || static_cast<int>(phi_t.size()) != n ||
      static_cast<int>(state.a_tilde.size()) != n)
    throw DimensionError("adapt_step inputs do not match the bus count");
  AdaptiveState next;
  next.a_tilde.resize(n);
  for (int i = 0; i < n; ++i) {
    if (params.A[i].rows() != phi_t[i].size())
      throw DimensionError("adaptation matrix does not match the basis at bus " +
                           std::to_string(i));
    next.a_tilde[i] = params.alpha * state.a_tilde[i] +
                      v_tilde(i) * (params.A[i] * phi_t[i]);
  }
  return next;
}

// ---------------------------------------------------------------------------
// Parameter file round trip. `A` holds the matrices row-major; `A_chol`
// alternatively holds factors L with A = L L'.

ControllerParams ControllerParams::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open params file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError("bad params JSON: " + std::string(e.what()));
  }
  ControllerParams p;
  try {
    auto kv = j.at("k").get<std::vector<double>>();
    p.k = Eigen::Map<Eigen::VectorXd>(kv.data(), static_cast<Eigen::Index>(kv.size()));
    p.alpha = j.at("alpha").get<double>();
    p.epsilon = j.at("epsilon").get<double>();
    const bool chol = j.contains("A_chol");
    auto mats = j.at(chol ? "A_chol" : "A").get<std::vector<std::vector<std::vector<double>>>>();
    for (const auto& m : mats) {
      const auto rows = m.size();
      Eigen::MatrixXd M(rows, rows);
      for (std::size_t r = 0; r < rows; ++r) {
        if (m[r].size() != rows) throw FormatError("non-square adaptation matrix in " + path);
        for (std::size_t c = 0; c < rows; ++c) M(r, c) = m[r][c];
      }
      p.A.push_back(chol ? Eigen::MatrixXd(M * M.transpose() +
                                           1e-8 * Eigen::MatrixXd::Identity(M.rows(), M.rows()))
                         : M);
    }
    if (j.contains("u_max") && !j["u_max"].is_null()) {
      auto uv = j.at("u_max").get<std::vector<double>>();
      p.u_max = Eigen::Map<Eigen::VectorXd>(uv.data(), static_cast<Eigen::Index>(uv.size()));
    }
  } catch (const json::exception& e) {
    throw FormatError("bad params field: " + std::string(e.what()));
  }
  p.validate_structure();
  return p;
}

void ControllerParams::save(
    const std::string& path,
    const std::vector<std::pair<std::string, std::string>>& meta) const {
  json j;
  j["k"] = std::vector<double>(k.data(), k.data() + k.size());
  j["alpha"] = alpha;
  j["epsilon"] = epsilon;
  for (const auto& [key, value] : meta) j["meta_" + key] = value;
  std::vector<std::vector<std::vector<double>>> mats;
  for (const auto& Ai : A) {
    std::vector<std::vector<double>> m(Ai.rows(), std::vector<double>(Ai.cols()));
    for (Eigen::Index r = 0; r < Ai.rows(); ++r)
      for (Eigen::Index c = 0; c < Ai.cols(); ++c) m[r][c] = Ai(r, c);
    mats.push_back(std::move(m));
  }
  j["A"] = mats;
  if (u_max)
    j["u_max"] = std::vector<double>(u_max->data(), u_max->data() + u_max->size());
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open for writing: " + path);
  out << j.dump(2) << "\n";
}

}  // namespace gridadapt
