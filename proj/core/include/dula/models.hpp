#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dula/rng.hpp"

namespace dula {

using Vector = Eigen::VectorXd;
using VectorCRef = Eigen::Ref<const Eigen::VectorXd>;
/// Local row indices into an agent's shard.
using BatchIndices = std::span<const std::size_t>;

/// Target posterior split across agents.
///
/// Agent i holds the potential U_i(w) = -log p(X_i | w) - (1/n) log p(w), so
/// that the global potential is the sum of the local ones. local_grad returns
/// g_i = grad U_i. With a mini-batch the likelihood part is rescaled by
/// shard_size / batch_size and the prior part is left unscaled.
class Model {
 public:
  virtual ~Model() = default;

  virtual std::size_t dim() const = 0;
  virtual std::size_t agents() const = 0;
  virtual std::size_t shard_size(std::size_t agent) const = 0;

  /// Throws NumericInputError on non-finite w or an out-of-range agent.
  Vector local_grad(std::size_t agent, const VectorCRef& w,
                    std::optional<BatchIndices> batch = std::nullopt) const;
  double local_potential(std::size_t agent, const VectorCRef& w) const;

  /// Sum of the full-shard local gradients.
  Vector global_grad(const VectorCRef& w) const;
  /// -sum_i U_i(w), i.e. the log posterior up to an additive constant.
  double log_posterior_unnormalized(const VectorCRef& w) const;

 protected:
  virtual Vector do_local_grad(std::size_t agent, const VectorCRef& w,
                               std::optional<BatchIndices> batch) const = 0;
  virtual double do_local_potential(std::size_t agent, const VectorCRef& w) const = 0;

  void check_input(std::size_t agent, const VectorCRef& w) const;
};

/// Hyperparameters of the tied-means mixture x ~ 0.5 N(t1, sx2) + 0.5 N(t1 + t2, sx2).
struct GaussianMixtureHyper {
  double sigma1_sq = 10.0;
  double sigma2_sq = 1.0;
  double sigmax_sq = 2.0;
};

class GaussianMixtureTiedMeans final : public Model {
 public:
  GaussianMixtureTiedMeans(std::vector<std::vector<double>> shards,
                           GaussianMixtureHyper hyper = {});

  std::size_t dim() const override { return 2; }
  std::size_t agents() const override { return shards_.size(); }
  std::size_t shard_size(std::size_t agent) const override { return shards_.at(agent).size(); }

  const GaussianMixtureHyper& hyper() const noexcept { return hyper_; }
  const std::vector<double>& shard(std::size_t agent) const { return shards_.at(agent); }

 protected:
  Vector do_local_grad(std::size_t agent, const VectorCRef& w,
                       std::optional<BatchIndices> batch) const override;
  double do_local_potential(std::size_t agent, const VectorCRef& w) const override;

 private:
  std::vector<std::vector<double>> shards_;
  GaussianMixtureHyper hyper_;
};

/// Draws count observations from the tied-means mixture; the component is picked by a fair coin.
std::vector<double> generate_gm_data(Rng& rng, std::size_t count, double theta1, double theta2,
                                     double sigmax_sq = 2.0);

/// Logistic likelihood with a unit-scale Laplace prior split as p(w)^(1/n).
class BayesianLogisticRegression final : public Model {
 public:
  struct Shard {
    Eigen::MatrixXd features;  // rows are observations
    Eigen::VectorXd labels;    // 0 or 1
  };

  explicit BayesianLogisticRegression(std::vector<Shard> shards, double prior_scale = 1.0);

  std::size_t dim() const override { return dim_; }
  std::size_t agents() const override { return shards_.size(); }
  std::size_t shard_size(std::size_t agent) const override {
    return static_cast<std::size_t>(shards_.at(agent).labels.size());
  }
  const Shard& shard(std::size_t agent) const { return shards_.at(agent); }

  /// Mean negative log-likelihood over all shards (no prior); used for loss curves.
  double mean_nll(const VectorCRef& w) const;

 protected:
  Vector do_local_grad(std::size_t agent, const VectorCRef& w,
                       std::optional<BatchIndices> batch) const override;
  double do_local_potential(std::size_t agent, const VectorCRef& w) const override;

 private:
  std::vector<Shard> shards_;
  std::vector<Eigen::MatrixXd> columns_;  // transposed features, one observation per column
  std::size_t dim_;
  double prior_scale_;
};

/// U_i(w) = 1/2 w^T P_i w - s_i^T w with sum_i P_i = Lambda and sum_i s_i = 0,
/// so the global target is exactly N(0, Lambda^{-1}).
class QuadraticGaussian final : public Model {
 public:
  /// Equal shares Lambda / n, no shifts.
  QuadraticGaussian(const Eigen::MatrixXd& precision, std::size_t agents);
  /// Explicit shares; throws InvalidParameter if the shifts do not sum to zero
  /// or the summed precision is not symmetric positive definite.
  QuadraticGaussian(std::vector<Eigen::MatrixXd> precision_shares, std::vector<Vector> shifts);

  std::size_t dim() const override { return static_cast<std::size_t>(precision_.rows()); }
  std::size_t agents() const override { return shares_.size(); }
  std::size_t shard_size(std::size_t) const override { return 1; }

  const Eigen::MatrixXd& precision() const noexcept { return precision_; }
  const Eigen::MatrixXd& share(std::size_t agent) const { return shares_.at(agent); }
  /// Largest eigenvalue over the local precision shares.
  double max_local_lipschitz() const;

 protected:
  Vector do_local_grad(std::size_t agent, const VectorCRef& w,
                       std::optional<BatchIndices> batch) const override;
  double do_local_potential(std::size_t agent, const VectorCRef& w) const override;

 private:
  std::vector<Eigen::MatrixXd> shares_;
  std::vector<Vector> shifts_;
  Eigen::MatrixXd precision_;
};

/// Numerically stable log(sigmoid(z)).
double log_sigmoid(double z);
double sigmoid(double z);

}  // namespace dula
