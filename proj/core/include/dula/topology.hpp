#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace dula {

/// Unordered agent pair, stored with first < second.
using Edge = std::pair<std::size_t, std::size_t>;

/// Eigen-data of the graph Laplacian.
struct SpectralSummary {
  Eigen::VectorXd eigenvalues;  // ascending
  double lambda2 = 0.0;         // algebraic connectivity
  double sigma_max = 0.0;       // largest singular value == largest eigenvalue
  bool connected = false;       // decided by BFS, not by lambda2
};

/// Undirected, unweighted communication graph between n agents.
///
/// The Laplacian and its spectrum are computed once at construction; a Graph
/// is immutable afterwards and safe to share between threads.
class Graph {
 public:
  /// Throws InvalidTopology on self-loops, duplicates, out-of-range agents or n == 0.
  Graph(std::size_t n, std::vector<Edge> edges);

  std::size_t size() const noexcept { return n_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const std::vector<std::size_t>& neighbors(std::size_t agent) const { return neighbors_.at(agent); }
  std::size_t degree(std::size_t agent) const { return neighbors_.at(agent).size(); }
  bool is_connected() const noexcept { return spectral_.connected; }

  const Eigen::MatrixXd& adjacency() const noexcept { return adjacency_; }
  const Eigen::MatrixXd& laplacian() const noexcept { return laplacian_; }
  const SpectralSummary& spectral() const noexcept { return spectral_; }

 private:
  std::size_t n_;
  std::vector<Edge> edges_;
  std::vector<std::vector<std::size_t>> neighbors_;
  Eigen::MatrixXd adjacency_;
  Eigen::MatrixXd laplacian_;
  SpectralSummary spectral_;
};

/// Cycle graph 0-1-...-(n-1)-0. n == 2 yields the single edge (0,1).
Graph ring(std::size_t n);

Eigen::MatrixXd laplacian(const Graph& g);
SpectralSummary spectral_summary(const Graph& g);

struct BetaAdmissibility {
  bool admissible = false;
  double margin = 0.0;  // 1 - b * sigma_max
};

/// Strict check b * sigma_max(L) < 1. Throws InvalidParameter for b <= 0.
BetaAdmissibility validate_b(const Graph& g, double b);

/// W = I - beta * L.
Eigen::MatrixXd mixing_matrix(const Graph& g, double beta);

/// max |(I - 11^T/n) - L L^+| over all entries. Small iff the graph is connected.
double projection_identity_check(const Graph& g);

}  // namespace dula
