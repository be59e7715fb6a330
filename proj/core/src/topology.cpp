#include "dula/topology.hpp"

#include <algorithm>
#include <queue>
#include <set>
#include <string>

#include "dula/error.hpp"

namespace dula {
namespace {

bool bfs_connected(const std::vector<std::vector<std::size_t>>& neighbors) {
  const std::size_t n = neighbors.size();
  std::vector<bool> seen(n, false);
  std::queue<std::size_t> frontier;
  frontier.push(0);
  seen[0] = true;
  std::size_t visited = 1;
  while (!frontier.empty()) {
    const std::size_t u = frontier.front();
    frontier.pop();
    for (std::size_t v : neighbors[u]) {
      if (!seen[v]) {
        seen[v] = true;
        ++visited;
        frontier.push(v);
      }
    }
  }
  return visited == n;
}

}  // namespace

Graph::Graph(std::size_t n, std::vector<Edge> edges) : n_(n), neighbors_(n) {
  if (n == 0) throw InvalidTopology("graph must have at least one agent");

  std::set<Edge> unique;
  for (auto [i, j] : edges) {
    if (i >= n || j >= n) {
      throw InvalidTopology("edge (" + std::to_string(i) + "," + std::to_string(j) +
                            ") references an agent outside [0," + std::to_string(n) + ")");
    }
    if (i == j) throw InvalidTopology("self-loop at agent " + std::to_string(i));
    const Edge e = std::minmax(i, j);
    if (!unique.insert(e).second) {
      throw InvalidTopology("duplicate edge (" + std::to_string(e.first) + "," +
                            std::to_string(e.second) + ")");
    }
  }
  edges_.assign(unique.begin(), unique.end());

  // Integer Laplacian first so that L * 1 == 0 holds exactly after the cast.
  Eigen::MatrixXi adj = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (auto [i, j] : edges_) {
    adj(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = 1;
    adj(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = 1;
    neighbors_[i].push_back(j);
    neighbors_[j].push_back(i);
  }
  for (auto& nb : neighbors_) std::sort(nb.begin(), nb.end());

  Eigen::MatrixXi lap = -adj;
  for (Eigen::Index i = 0; i < adj.rows(); ++i) lap(i, i) = adj.row(i).sum();
  adjacency_ = adj.cast<double>();
  laplacian_ = lap.cast<double>();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(laplacian_, Eigen::EigenvaluesOnly);
  spectral_.eigenvalues = solver.eigenvalues();
  spectral_.lambda2 = n > 1 ? spectral_.eigenvalues(1) : 0.0;
  spectral_.sigma_max = std::max(0.0, spectral_.eigenvalues(spectral_.eigenvalues.size() - 1));
  spectral_.connected = bfs_connected(neighbors_);
}

Graph ring(std::size_t n) {
  if (n < 2) throw InvalidTopology("ring requires n >= 2, got " + std::to_string(n));
  std::vector<Edge> edges;
  if (n == 2) {
    edges.emplace_back(0, 1);
  } else {
    for (std::size_t i = 0; i < n; ++i) edges.emplace_back(i, (i + 1) % n);
  }
  return Graph(n, std::move(edges));
}

Eigen::MatrixXd laplacian(const Graph& g) { return g.laplacian(); }

SpectralSummary spectral_summary(const Graph& g) { return g.spectral(); }

BetaAdmissibility validate_b(const Graph& g, double b) {
  if (!(b > 0.0)) throw InvalidParameter("consensus gain b must be positive, got " + std::to_string(b));
  const double product = b * g.spectral().sigma_max;
  return {product < 1.0, 1.0 - product};
}

Eigen::MatrixXd mixing_matrix(const Graph& g, double beta) {
  const auto n = static_cast<Eigen::Index>(g.size());
  return Eigen::MatrixXd::Identity(n, n) - beta * g.laplacian();
}

double projection_identity_check(const Graph& g) {
  const auto n = static_cast<Eigen::Index>(g.size());
  const Eigen::MatrixXd& lap = g.laplacian();
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(lap);
  const Eigen::MatrixXd pinv = cod.pseudoInverse();
  const Eigen::MatrixXd centering =
      Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
  return (centering - lap * pinv).cwiseAbs().maxCoeff();
}

}  // namespace dula
