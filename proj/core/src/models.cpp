#include "dula/models.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "dula/error.hpp"

namespace dula {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double log_sigmoid(double z) {
  if (z >= 0) return -std::log1p(std::exp(-z));
  return z - std::log1p(std::exp(z));
}

// ---------------------------------------------------------------------------
// Model

void Model::check_input(std::size_t agent, const VectorCRef& w) const {
  if (agent >= agents()) {
    throw NumericInputError("agent index " + std::to_string(agent) + " out of range");
  }
  if (static_cast<std::size_t>(w.size()) != dim()) {
    throw NumericInputError("parameter dimension " + std::to_string(w.size()) + " != " +
                            std::to_string(dim()));
  }
  if (!w.allFinite()) throw NumericInputError("non-finite parameter vector");
}

Vector Model::local_grad(std::size_t agent, const VectorCRef& w,
                         std::optional<BatchIndices> batch) const {
  check_input(agent, w);
  if (batch) {
    const std::size_t size = shard_size(agent);
    for (std::size_t idx : *batch) {
      if (idx >= size) throw NumericInputError("batch index outside the shard");
    }
  }
  return do_local_grad(agent, w, batch);
}

double Model::local_potential(std::size_t agent, const VectorCRef& w) const {
  check_input(agent, w);
  return do_local_potential(agent, w);
}

Vector Model::global_grad(const VectorCRef& w) const {
  Vector total = Vector::Zero(static_cast<Eigen::Index>(dim()));
  for (std::size_t i = 0; i < agents(); ++i) total += local_grad(i, w);
  return total;
}

double Model::log_posterior_unnormalized(const VectorCRef& w) const {
  double total = 0.0;
  for (std::size_t i = 0; i < agents(); ++i) total += local_potential(i, w);
  return -total;
}

namespace {

/// Visits every shard row (full shard) or every batch row and returns the
/// rescaling factor for the likelihood part.
template <typename Fn>
double for_rows(std::size_t shard_size, std::optional<BatchIndices> batch, Fn&& fn) {
  if (!batch) {
    for (std::size_t r = 0; r < shard_size; ++r) fn(r);
    return 1.0;
  }
  if (batch->empty()) return 0.0;
  for (std::size_t r : *batch) fn(r);
  return static_cast<double>(shard_size) / static_cast<double>(batch->size());
}

}  // namespace

// ---------------------------------------------------------------------------
// Gaussian mixture with tied means

GaussianMixtureTiedMeans::GaussianMixtureTiedMeans(std::vector<std::vector<double>> shards,
                                                   GaussianMixtureHyper hyper)
    : shards_(std::move(shards)), hyper_(hyper) {
  if (shards_.empty()) throw InvalidParameter("mixture model needs at least one shard");
  if (!(hyper_.sigma1_sq > 0 && hyper_.sigma2_sq > 0 && hyper_.sigmax_sq > 0)) {
    throw InvalidParameter("mixture variances must be positive");
  }
}

Vector GaussianMixtureTiedMeans::do_local_grad(std::size_t agent, const VectorCRef& w,
                                               std::optional<BatchIndices> batch) const {
  const double t1 = w(0);
  const double t2 = w(1);
  const double inv_sx = 1.0 / hyper_.sigmax_sq;
  const auto& data = shards_[agent];

  // Gradient of the log-likelihood, responsibilities in log-sum-exp form.
  double d1 = 0.0;
  double d2 = 0.0;
  const double scale = for_rows(data.size(), batch, [&](std::size_t r) {
    const double x = data[r];
    const double e1 = x - t1;
    const double e2 = x - t1 - t2;
    const double l1 = -0.5 * e1 * e1 * inv_sx;
    const double l2 = -0.5 * e2 * e2 * inv_sx;
    const double m = std::max(l1, l2);
    const double p1 = std::exp(l1 - m);
    const double p2 = std::exp(l2 - m);
    const double r1 = p1 / (p1 + p2);
    const double r2 = 1.0 - r1;
    d1 += (r1 * e1 + r2 * e2) * inv_sx;
    d2 += r2 * e2 * inv_sx;
  });

  const double prior_weight = 1.0 / static_cast<double>(agents());
  Vector g(2);
  g(0) = -scale * d1 + prior_weight * t1 / hyper_.sigma1_sq;
  g(1) = -scale * d2 + prior_weight * t2 / hyper_.sigma2_sq;
  return g;
}

double GaussianMixtureTiedMeans::do_local_potential(std::size_t agent, const VectorCRef& w) const {
  const double t1 = w(0);
  const double t2 = w(1);
  const double inv_sx = 1.0 / hyper_.sigmax_sq;
  const double log_norm = -0.5 * std::log(2.0 * std::numbers::pi * hyper_.sigmax_sq) + std::log(0.5);
  double loglik = 0.0;
  for (double x : shards_[agent]) {
    const double e1 = x - t1;
    const double e2 = x - t1 - t2;
    const double l1 = -0.5 * e1 * e1 * inv_sx;
    const double l2 = -0.5 * e2 * e2 * inv_sx;
    const double m = std::max(l1, l2);
    loglik += log_norm + m + std::log(std::exp(l1 - m) + std::exp(l2 - m));
  }
  const double log_prior = -0.5 * t1 * t1 / hyper_.sigma1_sq - 0.5 * t2 * t2 / hyper_.sigma2_sq;
  return -(loglik + log_prior / static_cast<double>(agents()));
}

std::vector<double> generate_gm_data(Rng& rng, std::size_t count, double theta1, double theta2,
                                     double sigmax_sq) {
  const double sd = std::sqrt(sigmax_sq);
  std::vector<double> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double mean = rng.coin() ? theta1 + theta2 : theta1;
    out.push_back(rng.normal(mean, sd));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Logistic regression

BayesianLogisticRegression::BayesianLogisticRegression(std::vector<Shard> shards, double prior_scale)
    : shards_(std::move(shards)), dim_(0), prior_scale_(prior_scale) {
  if (shards_.empty()) throw InvalidParameter("logistic model needs at least one shard");
  if (!(prior_scale_ > 0)) throw InvalidParameter("Laplace prior scale must be positive");
  dim_ = static_cast<std::size_t>(shards_.front().features.cols());
  for (const auto& s : shards_) {
    if (static_cast<std::size_t>(s.features.cols()) != dim_ || s.features.rows() != s.labels.size()) {
      throw InvalidParameter("inconsistent shard shapes");
    }
    columns_.push_back(s.features.transpose());
  }
}

Vector BayesianLogisticRegression::do_local_grad(std::size_t agent, const VectorCRef& w,
                                                 std::optional<BatchIndices> batch) const {
  const Shard& s = shards_[agent];
  const Eigen::MatrixXd& cols = columns_[agent];
  Vector lik = Vector::Zero(w.size());
  const double scale = for_rows(static_cast<std::size_t>(s.labels.size()), batch, [&](std::size_t r) {
    const auto x = cols.col(static_cast<Eigen::Index>(r));
    const double resid = s.labels(static_cast<Eigen::Index>(r)) - sigmoid(x.dot(w));
    lik.noalias() += resid * x;
  });

  // Laplace subgradient, sign(0) := 0.
  const double prior_weight = 1.0 / (static_cast<double>(agents()) * prior_scale_);
  Vector g = -scale * lik;
  for (Eigen::Index j = 0; j < w.size(); ++j) {
    const double sgn = (w(j) > 0) - (w(j) < 0);
    g(j) += prior_weight * sgn;
  }
  return g;
}

double BayesianLogisticRegression::do_local_potential(std::size_t agent, const VectorCRef& w) const {
  const Shard& s = shards_[agent];
  const Vector z = s.features * w;
  double loglik = 0.0;
  for (Eigen::Index r = 0; r < z.size(); ++r) {
    const double y = s.labels(r);
    loglik += y * log_sigmoid(z(r)) + (1.0 - y) * log_sigmoid(-z(r));
  }
  const double penalty = w.cwiseAbs().sum() / prior_scale_;
  return -loglik + penalty / static_cast<double>(agents());
}

double BayesianLogisticRegression::mean_nll(const VectorCRef& w) const {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& s : shards_) {
    const Vector z = s.features * w;
    for (Eigen::Index r = 0; r < z.size(); ++r) {
      const double y = s.labels(r);
      total -= y * log_sigmoid(z(r)) + (1.0 - y) * log_sigmoid(-z(r));
    }
    count += static_cast<std::size_t>(z.size());
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

// ---------------------------------------------------------------------------
// Quadratic Gaussian

QuadraticGaussian::QuadraticGaussian(const Eigen::MatrixXd& precision, std::size_t agents)
    : QuadraticGaussian(
          std::vector<Eigen::MatrixXd>(agents, precision / static_cast<double>(agents ? agents : 1)),
          std::vector<Vector>(agents, Vector::Zero(precision.rows()))) {}

QuadraticGaussian::QuadraticGaussian(std::vector<Eigen::MatrixXd> precision_shares,
                                     std::vector<Vector> shifts)
    : shares_(std::move(precision_shares)), shifts_(std::move(shifts)) {
  if (shares_.empty()) throw InvalidParameter("quadratic model needs at least one agent");
  if (shares_.size() != shifts_.size()) throw InvalidParameter("shares and shifts differ in count");
  const Eigen::Index d = shares_.front().rows();
  precision_ = Eigen::MatrixXd::Zero(d, d);
  Vector shift_sum = Vector::Zero(d);
  for (std::size_t i = 0; i < shares_.size(); ++i) {
    if (shares_[i].rows() != d || shares_[i].cols() != d || shifts_[i].size() != d) {
      throw InvalidParameter("inconsistent quadratic share shapes");
    }
    precision_ += shares_[i];
    shift_sum += shifts_[i];
  }
  if (shift_sum.cwiseAbs().maxCoeff() > 1e-12) throw InvalidParameter("shifts must sum to zero");
  if ((precision_ - precision_.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw InvalidParameter("precision must be symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(precision_);
  if (llt.info() != Eigen::Success) throw InvalidParameter("precision must be positive definite");
}

double QuadraticGaussian::max_local_lipschitz() const {
  double best = 0.0;
  for (const auto& p : shares_) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(p, Eigen::EigenvaluesOnly);
    best = std::max(best, es.eigenvalues().cwiseAbs().maxCoeff());
  }
  return best;
}

Vector QuadraticGaussian::do_local_grad(std::size_t agent, const VectorCRef& w,
                                        std::optional<BatchIndices>) const {
  return shares_[agent] * w - shifts_[agent];
}

double QuadraticGaussian::do_local_potential(std::size_t agent, const VectorCRef& w) const {
  return 0.5 * w.dot(shares_[agent] * w) - shifts_[agent].dot(w);
}

}  // namespace dula
