#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <numeric>

#include "dula/error.hpp"
#include "dula/models.hpp"

using namespace dula;

namespace {

Vector central_difference(const Model& m, std::size_t agent, const Vector& w, double h = 1e-5) {
  Vector g(w.size());
  for (Eigen::Index j = 0; j < w.size(); ++j) {
    Vector p = w, q = w;
    p(j) += h;
    q(j) -= h;
    g(j) = (m.local_potential(agent, p) - m.local_potential(agent, q)) / (2 * h);
  }
  return g;
}

double relative_error(const Vector& a, const Vector& b) {
  return (a - b).norm() / std::max(1e-8, std::max(a.norm(), b.norm()));
}

BayesianLogisticRegression::Shard random_shard(Rng& rng, int rows, int dim) {
  BayesianLogisticRegression::Shard s{Eigen::MatrixXd(rows, dim), Eigen::VectorXd(rows)};
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < dim; ++c) s.features(r, c) = rng.normal();
    s.labels(r) = rng.coin() ? 1.0 : 0.0;
  }
  return s;
}

std::unique_ptr<BayesianLogisticRegression> random_logreg(Rng& rng, int agents, int rows, int dim) {
  std::vector<BayesianLogisticRegression::Shard> shards;
  for (int a = 0; a < agents; ++a) shards.push_back(random_shard(rng, rows, dim));
  return std::make_unique<BayesianLogisticRegression>(std::move(shards));
}

std::unique_ptr<GaussianMixtureTiedMeans> random_gm(Rng& rng, int agents, int per_agent) {
  std::vector<std::vector<double>> shards(agents);
  for (auto& s : shards) s = generate_gm_data(rng, per_agent, 0.0, 1.0);
  return std::make_unique<GaussianMixtureTiedMeans>(shards);
}

std::unique_ptr<QuadraticGaussian> random_quadratic(Rng& rng, int agents, int dim) {
  std::vector<Eigen::MatrixXd> shares;
  std::vector<Vector> shifts;
  Vector total = Vector::Zero(dim);
  for (int a = 0; a < agents; ++a) {
    Eigen::MatrixXd b(dim, dim);
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) b(i, j) = rng.normal();
    shares.push_back(b * b.transpose() / dim + 0.1 * Eigen::MatrixXd::Identity(dim, dim));
    Vector s(dim);
    for (int i = 0; i < dim; ++i) s(i) = rng.normal();
    shifts.push_back(s);
    total += s;
  }
  for (auto& s : shifts) s -= total / agents;
  return std::make_unique<QuadraticGaussian>(shares, shifts);
}

}  // namespace

TEST(Gradients, GaussianMixtureFiniteDifference) {
  Rng rng(1, 0, StreamPurpose::kInit);
  std::vector<std::vector<double>> shard{generate_gm_data(rng, 5, 0.0, 1.0)};
  GaussianMixtureTiedMeans m(shard);
  const Vector w{{0.3, -0.7}};
  EXPECT_LT(relative_error(m.local_grad(0, w), central_difference(m, 0, w)), 1e-5);
}

TEST(Gradients, TwentyRandomPointsEveryModel) {
  Rng rng(2, 0, StreamPurpose::kInit);
  auto gm = random_gm(rng, 3, 7);
  auto lr = random_logreg(rng, 3, 12, 6);
  auto qg = random_quadratic(rng, 3, 4);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t agent = static_cast<std::size_t>(trial % 3);
    Vector w2(2);
    w2 << rng.normal(0, 1.5), rng.normal(0, 1.5);
    EXPECT_LT(relative_error(gm->local_grad(agent, w2), central_difference(*gm, agent, w2)), 1e-5);

    Vector w6(6);
    for (int j = 0; j < 6; ++j) {
      double v = rng.normal();
      while (std::abs(v) <= 1e-3) v = rng.normal();  // away from the Laplace kink
      w6(j) = v;
    }
    EXPECT_LT(relative_error(lr->local_grad(agent, w6), central_difference(*lr, agent, w6)), 1e-5);

    Vector w4(4);
    for (int j = 0; j < 4; ++j) w4(j) = rng.normal();
    EXPECT_LT(relative_error(qg->local_grad(agent, w4), central_difference(*qg, agent, w4)), 1e-5);
  }
}

TEST(Gradients, LogPosteriorMatchesNegativeGlobalGradient) {
  Rng rng(3, 0, StreamPurpose::kInit);
  auto gm = random_gm(rng, 4, 5);
  const Vector w{{0.2, 0.9}};
  Vector fd(2);
  const double h = 1e-5;
  for (int j = 0; j < 2; ++j) {
    Vector p = w, q = w;
    p(j) += h;
    q(j) -= h;
    fd(j) = (gm->log_posterior_unnormalized(p) - gm->log_posterior_unnormalized(q)) / (2 * h);
  }
  EXPECT_LT(relative_error(-gm->global_grad(w), fd), 1e-5);
}

TEST(Logistic, GradientAtZeroSinglePoint) {
  BayesianLogisticRegression::Shard s{Eigen::MatrixXd(1, 3), Eigen::VectorXd(1)};
  s.features << 1.0, -2.0, 0.5;
  for (double y : {0.0, 1.0}) {
    s.labels << y;
    BayesianLogisticRegression m({s});
    const Vector g = m.local_grad(0, Vector::Zero(3));
    const Vector expected = -(y - 0.5) * s.features.row(0).transpose();
    EXPECT_LT((g - expected).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(Logistic, PriorPenalisesLargeWeights) {
  BayesianLogisticRegression::Shard s{Eigen::MatrixXd::Zero(4, 2), Eigen::VectorXd::Ones(4)};
  BayesianLogisticRegression m({s});
  // Zero features: likelihood is independent of w.
  EXPECT_GT(m.log_posterior_unnormalized(Vector{{0.5, 0.0}}), m.log_posterior_unnormalized(Vector{{1.0, 0.0}}));
  EXPECT_GT(m.log_posterior_unnormalized(Vector{{0.0, -0.5}}), m.log_posterior_unnormalized(Vector{{0.0, -2.0}}));
}

TEST(Quadratic, IdentitySingleAgent) {
  QuadraticGaussian m(Eigen::MatrixXd::Identity(3, 3), 1);
  const Vector w{{1.0, -2.0, 0.5}};
  EXPECT_EQ(m.local_grad(0, w), w);
}

TEST(Quadratic, GlobalGradientTwoI) {
  QuadraticGaussian m(2.0 * Eigen::MatrixXd::Identity(2, 2), 4);
  const Vector w{{0.3, -1.1}};
  EXPECT_LT((m.global_grad(w) - 2.0 * w).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Quadratic, LogPosteriorIsHalfNorm) {
  QuadraticGaussian m(Eigen::MatrixXd::Identity(3, 3), 3);
  const Vector w{{0.4, 1.0, -0.2}};
  EXPECT_NEAR(m.log_posterior_unnormalized(w) - m.log_posterior_unnormalized(Vector::Zero(3)), -0.5 * w.squaredNorm(),
              1e-14);
}

TEST(Quadratic, RejectsBadShares) {
  std::vector<Eigen::MatrixXd> shares{Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(2, 2)};
  EXPECT_THROW(QuadraticGaussian(shares, {Vector{{1.0, 0.0}}, Vector{{0.0, 0.0}}}), InvalidParameter);
  std::vector<Eigen::MatrixXd> indefinite{-Eigen::MatrixXd::Identity(2, 2)};
  EXPECT_THROW(QuadraticGaussian(indefinite, {Vector::Zero(2)}), InvalidParameter);
}

TEST(Quadratic, LipschitzIsLargestShareEigenvalue) {
  std::vector<Eigen::MatrixXd> shares{Eigen::Vector2d(3.0, 1.0).asDiagonal(), Eigen::Vector2d(0.5, 2.0).asDiagonal()};
  QuadraticGaussian m(shares, {Vector::Zero(2), Vector::Zero(2)});
  EXPECT_NEAR(m.max_local_lipschitz(), 3.0, 1e-12);
}

TEST(Additivity, GlobalIsSumOfLocal) {
  Rng rng(4, 0, StreamPurpose::kInit);
  auto gm = random_gm(rng, 5, 4);
  auto lr = random_logreg(rng, 4, 9, 5);
  auto qg = random_quadratic(rng, 6, 3);
  const std::vector<std::pair<const Model*, Vector>> cases{
      {gm.get(), Vector{{0.1, 0.4}}}, {lr.get(), Vector{{0.2, -0.1, 0.3, 0.5, -0.7}}}, {qg.get(), Vector{{1.0, 2.0, -1.0}}}};
  for (const auto& [m, w] : cases) {
    Vector sum = Vector::Zero(w.size());
    for (std::size_t i = 0; i < m->agents(); ++i) sum += m->local_grad(i, w);
    EXPECT_LT((m->global_grad(w) - sum).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Minibatch, AverageOverDisjointBatchesIsFullGradient) {
  Rng rng(5, 0, StreamPurpose::kInit);
  auto lr = random_logreg(rng, 2, 12, 4);
  auto gm = random_gm(rng, 2, 12);
  std::vector<std::size_t> idx(12);
  std::iota(idx.begin(), idx.end(), 0);
  const std::vector<std::pair<const Model*, Vector>> cases{{lr.get(), Vector{{0.3, -0.2, 0.1, 0.7}}},
                                                           {gm.get(), Vector{{0.4, 0.6}}}};
  for (const auto& [m, w] : cases) {
    Vector avg = Vector::Zero(w.size());
    for (std::size_t start = 0; start < 12; start += 3) {
      avg += m->local_grad(1, w, BatchIndices(idx.data() + start, 3)) / 4.0;
    }
    EXPECT_LT((avg - m->local_grad(1, w)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Minibatch, EmptyBatchLeavesPriorOnly) {
  GaussianMixtureTiedMeans m({{0.5, 1.0}, {2.0}});
  const Vector w{{1.0, 2.0}};
  const Vector g = m.local_grad(0, w, BatchIndices{});
  EXPECT_NEAR(g(0), 0.5 * 1.0 / 10.0, 1e-15);
  EXPECT_NEAR(g(1), 0.5 * 2.0 / 1.0, 1e-15);
}

TEST(Mixture, SymmetricDataStationaryFirstCoordinate) {
  // With theta2 = 0 both components coincide at theta1 and data {-c, c} balance at theta1 = 0.
  GaussianMixtureTiedMeans m({{-1.3, 1.3}});
  const Vector g = m.local_grad(0, Vector{{0.0, 0.0}});
  EXPECT_NEAR(g(0), 0.0, 1e-14);
}

TEST(Mixture, EmptyShardIsPriorOnly) {
  GaussianMixtureTiedMeans m(std::vector<std::vector<double>>{{}, {0.1, 0.2}});
  const Vector w{{2.0, -1.0}};
  const Vector g = m.local_grad(0, w);
  EXPECT_NEAR(g(0), 0.5 * 2.0 / 10.0, 1e-15);
  EXPECT_NEAR(g(1), 0.5 * -1.0 / 1.0, 1e-15);
}

TEST(Mixture, DataMoments) {
  Rng rng(6, 0, StreamPurpose::kData);
  const auto data = generate_gm_data(rng, 100, 0.0, 1.0);
  ASSERT_EQ(data.size(), 100u);
  const double mean = std::accumulate(data.begin(), data.end(), 0.0) / 100.0;
  EXPECT_NEAR(mean, 0.5, 0.45);
}

TEST(Mixture, DegenerateSecondMean) {
  Rng rng(7, 0, StreamPurpose::kData);
  const auto data = generate_gm_data(rng, 50000, 1.5, 0.0);
  double s1 = 0, s2 = 0;
  for (double x : data) {
    s1 += x;
    s2 += x * x;
  }
  const double mean = s1 / data.size();
  EXPECT_NEAR(mean, 1.5, 0.03);
  EXPECT_NEAR(s2 / data.size() - mean * mean, 2.0, 0.06);
}

TEST(Mixture, DataDeterministic) {
  Rng a(8, 0, StreamPurpose::kData), b(8, 0, StreamPurpose::kData);
  EXPECT_EQ(generate_gm_data(a, 100, 0, 1), generate_gm_data(b, 100, 0, 1));
}

TEST(Inputs, RejectNonFiniteAndBadShapes) {
  QuadraticGaussian m(Eigen::MatrixXd::Identity(2, 2), 2);
  EXPECT_THROW(m.local_grad(0, Vector{{NAN, 0.0}}), NumericInputError);
  EXPECT_THROW(m.local_grad(0, Vector{{INFINITY, 0.0}}), NumericInputError);
  EXPECT_THROW(m.local_grad(2, Vector::Zero(2)), NumericInputError);
  EXPECT_THROW(m.local_grad(0, Vector::Zero(3)), NumericInputError);
  EXPECT_THROW(m.local_potential(0, Vector{{0.0, NAN}}), NumericInputError);
  GaussianMixtureTiedMeans gm({{1.0, 2.0}});
  const std::size_t bad = 5;
  EXPECT_THROW(gm.local_grad(0, Vector::Zero(2), BatchIndices(&bad, 1)), NumericInputError);
}

TEST(Sigmoid, StableAtExtremes) {
  EXPECT_DOUBLE_EQ(sigmoid(0.0), 0.5);
  EXPECT_GT(sigmoid(-800.0), -1e-300);
  EXPECT_DOUBLE_EQ(sigmoid(800.0), 1.0);
  EXPECT_NEAR(log_sigmoid(-800.0), -800.0, 1e-9);
  EXPECT_NEAR(log_sigmoid(800.0), 0.0, 1e-300);
  EXPECT_NEAR(std::exp(log_sigmoid(1.3)), sigmoid(1.3), 1e-15);
}
