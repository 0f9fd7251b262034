#include "gridadapt/feeder.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <deque>
#include <fstream>
#include <sstream>

#include "gridadapt/errors.hpp"

namespace gridadapt {

namespace {

constexpr double kPdTolerance = 1e-10;

// Parent array of the tree rooted at bus 0, with the line impedance to the
// parent. Throws TopologyError for anything that is not a tree on 0..n.
struct TreeView {
  std::vector<int> parent;
  std::vector<double> r_up, x_up;
};

TreeView tree_view(const FeederTopology& topo) {
  const int n = topo.bus_count;
  if (n <= 0) throw TopologyError("feeder has no load buses");
  if (static_cast<int>(topo.lines.size()) != n)
    throw TopologyError("a radial feeder with " + std::to_string(n) +
                        " load buses needs exactly " + std::to_string(n) + " lines");
  std::vector<std::vector<std::pair<int, int>>> adj(n + 1);  // (neighbor, line idx)
  for (int e = 0; e < n; ++e) {
    const Line& l = topo.lines[e];
    if (l.from < 0 || l.from > n || l.to < 0 || l.to > n)
      throw TopologyError("line endpoint out of range: " + std::to_string(l.from) +
                          "-" + std::to_string(l.to));
    if (l.from == l.to) throw TopologyError("self-loop at bus " + std::to_string(l.from));
    if (!(l.r > 0.0) || !(l.x > 0.0))
      throw TopologyError("line " + std::to_string(l.from) + "-" + std::to_string(l.to) +
                          " must have r > 0 and x > 0");
    adj[l.from].push_back({l.to, e});
    adj[l.to].push_back({l.from, e});
  }
  TreeView tv;
  tv.parent.assign(n + 1, -1);
  tv.r_up.assign(n + 1, 0.0);
  tv.x_up.assign(n + 1, 0.0);
  std::vector<char> seen(n + 1, 0);
  std::deque<int> queue{0};
  seen[0] = 1;
  int reached = 1;
  while (!queue.empty()) {
    int u = queue.front();
    queue.pop_front();
    for (auto [v, e] : adj[u]) {
      if (seen[v]) {
        if (v != tv.parent[u]) throw TopologyError("cycle detected through bus " + std::to_string(v));
        continue;
      }
      seen[v] = 1;
      ++reached;
      tv.parent[v] = u;
      tv.r_up[v] = topo.lines[e].r;
      tv.x_up[v] = topo.lines[e].x;
      queue.push_back(v);
    }
  }
  if (reached != n + 1) throw TopologyError("not all buses reachable from the substation");
  return tv;
}

}  // namespace

void FeederTopology::validate() const { (void)tree_view(*this); }

FeederModel build_feeder(const FeederTopology& topology, double scale_factor) {
  TreeView tv = tree_view(topology);
  const int n = topology.bus_count;

  // Cumulative impedance from the substation down to every bus, plus depth
  // for the common-ancestor walk.
  std::vector<double> rsum(n + 1, 0.0), xsum(n + 1, 0.0);
  std::vector<int> depth(n + 1, 0);
  {
    // Buses may appear in any order; resolve each path by walking up.
    std::vector<char> done(n + 1, 0);
    done[0] = 1;
    for (int b = 1; b <= n; ++b) {
      std::vector<int> chain;
      int cur = b;
      while (!done[cur]) {
        chain.push_back(cur);
        cur = tv.parent[cur];
      }
      for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
        int v = *it;
        int p = tv.parent[v];
        rsum[v] = rsum[p] + tv.r_up[v];
        xsum[v] = xsum[p] + tv.x_up[v];
        depth[v] = depth[p] + 1;
        done[v] = 1;
      }
    }
  }

  auto lca = [&](int i, int j) {
    while (depth[i] > depth[j]) i = tv.parent[i];
    while (depth[j] > depth[i]) j = tv.parent[j];
    while (i != j) {
      i = tv.parent[i];
      j = tv.parent[j];
    }
    return i;
  };

  FeederModel model;
  model.topology = topology;
  model.R.resize(n, n);
  model.X.resize(n, n);
  for (int i = 1; i <= n; ++i) {
    for (int j = i; j <= n; ++j) {
      int c = lca(i, j);
      model.R(i - 1, j - 1) = model.R(j - 1, i - 1) = scale_factor * rsum[c];
      model.X(i - 1, j - 1) = model.X(j - 1, i - 1) = scale_factor * xsum[c];
    }
  }

  // Symmetrize (construction is symmetric; this absorbs float noise) and
  // check positive definiteness numerically.
  model.R = ((model.R + model.R.transpose()) / 2.0).eval();
  model.X = ((model.X + model.X.transpose()) / 2.0).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> esR(model.R);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> esX(model.X);
  if (esR.info() != Eigen::Success || esX.info() != Eigen::Success)
    throw NumericalError("eigendecomposition failed while validating the feeder model");
  if (esR.eigenvalues().minCoeff() <= kPdTolerance)
    throw ModelError("R is not positive definite (lambda_min <= 1e-10)");
  if (esX.eigenvalues().minCoeff() <= kPdTolerance)
    throw ModelError("X is not positive definite (lambda_min <= 1e-10)");

  Eigen::MatrixXd xinv_r = model.X.llt().solve(model.R);
  model.D_e = xinv_r.diagonal().asDiagonal();
  model.D_o = xinv_r - model.D_e;
  return model;
}

Eigen::VectorXd voltage_from_injections(const FeederModel& model,
                                        const Eigen::VectorXd& p,
                                        const Eigen::VectorXd& q) {
  const int n = model.n();
  if (p.size() != n || q.size() != n)
    throw DimensionError("injection vectors must have length " + std::to_string(n));
  return model.R * p + model.X * q + Eigen::VectorXd::Ones(n);
}

FeederTopology load_feeder_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open feeder file: " + path);

  FeederTopology topo;
  bool have_header = false;
  double zbase = 0.0;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    if (!have_header) {
      int total_buses = 0;
      double base_kva = 0.0, base_kv = 0.0;
      if (std::sscanf(line.c_str(), "buses=%d base_kva=%lf base_kv=%lf",
                      &total_buses, &base_kva, &base_kv) != 3)
        throw FormatError("bad header at line " + std::to_string(lineno) +
                          " (expected `buses=<n> base_kva=<v> base_kv=<v>`)");
      if (total_buses < 2 || base_kva <= 0.0 || base_kv <= 0.0)
        throw FormatError("bad header values at line " + std::to_string(lineno));
      topo.bus_count = total_buses - 1;  // substation excluded
      topo.base_kva = base_kva;
      topo.base_kv = base_kv;
      zbase = (base_kv * 1e3) * (base_kv * 1e3) / (base_kva * 1e3);
      have_header = true;
      continue;
    }
    Line l;
    double r_ohm = 0.0, x_ohm = 0.0;
    std::istringstream ss(line);
    if (!(ss >> l.from >> l.to >> r_ohm >> x_ohm))
      throw FormatError("bad branch line at line " + std::to_string(lineno));
    std::string rest;
    if (ss >> rest) throw FormatError("trailing tokens at line " + std::to_string(lineno));
    l.r = r_ohm / zbase;
    l.x = x_ohm / zbase;
    topo.lines.push_back(l);
  }
  if (!have_header) throw FormatError("empty feeder file: " + path);
  topo.validate();
  return topo;
}

}  // namespace gridadapt
