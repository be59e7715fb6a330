#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dula/models.hpp"
#include "dula/schedules.hpp"
#include "dula/topology.hpp"

namespace dula {

struct SampleRecord;
struct AccuracyRecord;
class NetworkState;

// ---------------------------------------------------------------------------
// Consensus

/// ||(I - 11^T/n) (x) I) w||^2 for a dim x agents matrix of stacked parameters.
double consensus_error(const Eigen::MatrixXd& w);
/// Same for an agent-major stacked vector [w_1; ...; w_n].
double consensus_error(std::span<const double> stacked, std::size_t n, std::size_t d_w);

/// Constants of the mean-square consensus bound
///   E||w~_{k+1}||^2 <= W3 / exp(W1 (k+1)^(1-delta1)) + W2 / (k+1)^(delta2 - 2 delta1)
/// and of its merged form (W2 + W4) / (k+1)^(delta2 - 2 delta1).
struct ConsensusBoundConstants {
  double w1 = 0.0;
  double w2 = 0.0;
  double w3 = 0.0;
  double w4 = 0.0;
  std::uint64_t kbar = 0;
  double delta1 = 0.0;
  double delta2 = 0.0;
};

/// Requires b * lambda2 < 1, delta1 > 0 and a schedule without offsets; throws
/// BoundUnavailable otherwise. e_w0_sq is E||w~_0||^2 and n the agent count.
ConsensusBoundConstants bound_constants(const Graph& graph, const StepSchedule& schedule, double mu_g,
                                        std::size_t d_w, double e_w0_sq);

struct ConsensusBoundValue {
  double two_term = 0.0;
  double merged = 0.0;
  /// delta2 - 2 delta1 <= 0: the polynomial term does not decay.
  bool vacuous = false;
};

ConsensusBoundValue consensus_bound(const ConsensusBoundConstants& c, std::uint64_t k);

/// Tracks max_k ||g~(w_k)||^2 / (n (1+k)^delta2) over a pilot run, where g~ is
/// the disagreement of the full-shard local gradients. Attach as a StepObserver.
class MuGEstimator {
 public:
  MuGEstimator(const Model& model, double delta2) : model_(&model), delta2_(delta2) {}
  void observe(const Eigen::MatrixXd& w, std::uint64_t k);
  double estimate() const noexcept { return best_; }

 private:
  const Model* model_;
  double delta2_;
  double best_ = 0.0;
};

// ---------------------------------------------------------------------------
// Sinkhorn

/// Weighted point cloud; points are rows.
struct DiscreteDistribution {
  Eigen::MatrixXd points;
  Eigen::VectorXd weights;

  /// Throws InvalidParameter unless weights are >= 0 and sum to 1 within 1e-12.
  static DiscreteDistribution make(Eigen::MatrixXd points, Eigen::VectorXd weights);
  std::size_t size() const noexcept { return static_cast<std::size_t>(weights.size()); }
};

enum class SinkhornKernel {
  kDivideByLambda,    // K = exp(-C / lambda), lambda is the entropic weight (default)
  kMultiplyByLambda,  // K = exp(-lambda C), lambda is an inverse regularization
};

struct SinkhornOptions {
  double lambda = 0.1;
  std::size_t max_iter = 10000;
  double tol = 1e-9;
  SinkhornKernel kernel = SinkhornKernel::kDivideByLambda;
  bool keep_plan = false;
};

struct SinkhornResult {
  double cost = 0.0;  // sum T_ij C_ij at the final plan, entropy excluded
  bool converged = false;
  std::size_t iterations = 0;
  double marginal_error = 0.0;  // L1 row-marginal violation (columns are exact)
  bool log_domain = false;
  Eigen::MatrixXd plan;  // only filled with keep_plan, over the pruned supports
};

/// Entropic OT with squared Euclidean ground cost. Zero-weight atoms are pruned.
SinkhornResult sinkhorn(const DiscreteDistribution& p, const DiscreteDistribution& q,
                        const SinkhornOptions& options = {});
double sinkhorn_distance(const DiscreteDistribution& p, const DiscreteDistribution& q,
                         const SinkhornOptions& options = {});
/// d(P,Q) - d(P,P)/2 - d(Q,Q)/2; vanishes when P == Q.
double sinkhorn_divergence(const DiscreteDistribution& p, const DiscreteDistribution& q,
                           const SinkhornOptions& options = {});

// ---------------------------------------------------------------------------
// Grid posteriors

/// Regular 2-D grid of cells; the support points are cell centres.
struct GridSpec {
  double x_min = -1.5;
  double x_max = 2.5;
  double y_min = -3.0;
  double y_max = 3.0;
  double resolution = 0.1;

  std::size_t nx() const;
  std::size_t ny() const;
  Eigen::MatrixXd centres() const;  // nx*ny rows, x-major
  /// Cell index of a point, or -1 when outside.
  long cell_of(double x, double y) const;
};

/// exp(log posterior) on the grid centres, normalised to sum 1.
DiscreteDistribution grid_posterior(const Model& model, const GridSpec& grid);
/// Alias used by the mixture experiment.
DiscreteDistribution gm_reference_posterior(const Model& model, const GridSpec& grid = {});

/// 2-D histogram of samples (rows or vectors) on the grid; samples outside are dropped.
/// Throws InvalidParameter when no sample falls inside.
DiscreteDistribution histogram(std::span<const Vector> samples, const GridSpec& grid);

/// Fraction of samples within `radius` of `centre`.
double mass_near(std::span<const Vector> samples, const Vector& centre, double radius);

// ---------------------------------------------------------------------------
// Classification accuracy

/// Running posterior-mean predictive accuracy on a fixed test set.
/// Probabilities >= 0.5 predict class 1.
class PredictiveAccuracy {
 public:
  PredictiveAccuracy(Eigen::MatrixXd features, Eigen::VectorXd labels);

  void add_sample(const VectorCRef& w);
  std::size_t count() const noexcept { return count_; }
  /// Accuracy of the running mean predictive; requires count() > 0.
  double accuracy() const;
  /// Accuracy of a single parameter vector.
  double accuracy_of(const VectorCRef& w) const;

 private:
  Eigen::MatrixXd features_;
  Eigen::VectorXd labels_;
  Eigen::VectorXd prob_sum_;
  std::size_t count_ = 0;
};

struct AccuracyPoint {
  std::uint64_t iter = 0;
  std::size_t agent = 0;
  double accuracy = 0.0;
};

/// Per-iteration accuracy of each agent's chain. Samples with iter > burn_in are
/// retained; before the first retained sample the current iterate is used.
std::vector<AccuracyPoint> accuracy_curve(std::span<const SampleRecord> trajectory, std::uint64_t burn_in,
                                          const Eigen::MatrixXd& test_features,
                                          const Eigen::VectorXd& test_labels);

/// Mean and sample standard deviation across runs for matching (iter, agent) points.
std::vector<AccuracyRecord> aggregate_accuracy(const std::vector<std::vector<AccuracyPoint>>& runs);

}  // namespace dula
