#include "dula/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "dula/error.hpp"
#include "dula/sampler.hpp"

namespace dula {

// ---------------------------------------------------------------------------
// Consensus

double consensus_error(const Eigen::MatrixXd& w) {
  if (w.cols() == 0) return 0.0;
  const Vector mean = w.rowwise().mean();
  return (w.colwise() - mean).squaredNorm();
}

double consensus_error(std::span<const double> stacked, std::size_t n, std::size_t d_w) {
  if (stacked.size() != n * d_w) throw InvalidParameter("stacked state has the wrong length");
  Eigen::Map<const Eigen::MatrixXd> w(stacked.data(), static_cast<Eigen::Index>(d_w),
                                      static_cast<Eigen::Index>(n));
  return consensus_error(Eigen::MatrixXd(w));
}

ConsensusBoundConstants bound_constants(const Graph& graph, const StepSchedule& s, double mu_g,
                                        std::size_t d_w, double e_w0_sq) {
  if (s.offset1 != 0.0 || s.offset2 != 0.0) {
    throw BoundUnavailable("consensus bound is stated for schedules without offsets");
  }
  if (!(s.delta1 > 0.0)) throw BoundUnavailable("W2 divides by delta1; constant beta has no bound");
  if (!(s.delta1 < 1.0)) throw BoundUnavailable("requires delta1 < 1");
  if (!(s.delta2 > s.delta1)) throw BoundUnavailable("requires delta2 > delta1");
  if (!(mu_g >= 0.0) || !(e_w0_sq >= 0.0)) throw InvalidParameter("mu_g and E||w0~||^2 must be >= 0");

  const double lambda2 = graph.spectral().lambda2;
  const double bl = s.b * lambda2;
  if (!(bl > 0.0 && bl < 1.0)) throw BoundUnavailable("requires 0 < b * lambda2 < 1");

  const double n = static_cast<double>(graph.size());
  const double d = static_cast<double>(d_w);
  const double a = s.a;
  const double d1 = s.delta1;
  const double d2 = s.delta2;

  ConsensusBoundConstants c;
  c.delta1 = d1;
  c.delta2 = d2;
  c.w1 = bl / (1.0 - d1);

  // Common factor 2 n^2 a (2 d_w / sqrt(1 - b l2) + n a mu_g) / (b l2).
  const double drive = 2.0 * n * n * a * (2.0 * d / std::sqrt(1.0 - bl) + n * a * mu_g) / bl;
  c.w2 = drive * (d2 - d1) / (bl * d1) * std::exp(c.w1 * std::pow(2.0, 1.0 - d1));

  const double kbar = std::ceil(std::pow((d2 - d1) / bl, 1.0 / (1.0 - d1)));
  c.kbar = static_cast<std::uint64_t>(kbar);
  long double sum = 0.0L;
  const long double log_growth = -std::log1p(-static_cast<long double>(bl));
  for (std::uint64_t l = 0; l <= c.kbar; ++l) {
    sum += std::exp(static_cast<long double>(l) * log_growth) /
           std::pow(static_cast<long double>(l) + 1.0L, static_cast<long double>(d2 - d1));
  }
  c.w3 = std::exp(c.w1) * (e_w0_sq + drive * static_cast<double>(sum));

  const double p = d2 - 2.0 * d1;
  if (p > 0.0) {
    const double ratio = p / (1.0 - d1);
    c.w4 = c.w3 * std::exp(-ratio) * std::pow(p / bl, ratio);
  } else {
    c.w4 = std::numeric_limits<double>::infinity();
  }
  return c;
}

ConsensusBoundValue consensus_bound(const ConsensusBoundConstants& c, std::uint64_t k) {
  ConsensusBoundValue out;
  const double p = c.delta2 - 2.0 * c.delta1;
  const double kp1 = static_cast<double>(k) + 1.0;
  const double exponent = c.w1 * std::pow(kp1, 1.0 - c.delta1);
  const double exp_term = exponent > 700.0 ? 0.0 : c.w3 * std::exp(-exponent);
  if (p <= 0.0) {
    out.vacuous = true;
    out.two_term = std::numeric_limits<double>::infinity();
    out.merged = std::numeric_limits<double>::infinity();
    return out;
  }
  const double decay = std::pow(kp1, -p);
  out.two_term = exp_term + c.w2 * decay;
  out.merged = (c.w2 + c.w4) * decay;
  return out;
}

void MuGEstimator::observe(const Eigen::MatrixXd& w, std::uint64_t k) {
  const auto n = w.cols();
  Eigen::MatrixXd g(w.rows(), n);
  for (Eigen::Index i = 0; i < n; ++i) g.col(i) = model_->local_grad(static_cast<std::size_t>(i), w.col(i));
  const double disagreement = consensus_error(g);
  const double value =
      disagreement / (static_cast<double>(n) * std::pow(1.0 + static_cast<double>(k), delta2_));
  best_ = std::max(best_, value);
}

// ---------------------------------------------------------------------------
// Sinkhorn

DiscreteDistribution DiscreteDistribution::make(Eigen::MatrixXd points, Eigen::VectorXd weights) {
  if (points.rows() != weights.size()) throw InvalidParameter("points and weights differ in count");
  if (weights.size() == 0) throw InvalidParameter("empty distribution");
  if ((weights.array() < 0.0).any() || !weights.allFinite()) {
    throw InvalidParameter("weights must be finite and nonnegative");
  }
  if (std::abs(weights.sum() - 1.0) > 1e-12) throw InvalidParameter("weights must sum to 1");
  return {std::move(points), std::move(weights)};
}

namespace {

struct Pruned {
  Eigen::MatrixXd points;
  Eigen::VectorXd weights;
};

Pruned prune(const DiscreteDistribution& d) {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < d.weights.size(); ++i) {
    if (d.weights(i) > 0.0) keep.push_back(i);
  }
  Pruned out{Eigen::MatrixXd(static_cast<Eigen::Index>(keep.size()), d.points.cols()),
             Eigen::VectorXd(static_cast<Eigen::Index>(keep.size()))};
  for (std::size_t r = 0; r < keep.size(); ++r) {
    out.points.row(static_cast<Eigen::Index>(r)) = d.points.row(keep[r]);
    out.weights(static_cast<Eigen::Index>(r)) = d.weights(keep[r]);
  }
  return out;
}

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  Eigen::MatrixXd c(x.rows(), y.rows());
  for (Eigen::Index j = 0; j < y.rows(); ++j) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) c(i, j) = (x.row(i) - y.row(j)).squaredNorm();
  }
  return c;
}

double log_sum_exp(const Eigen::ArrayXd& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v - m).exp().sum());
}

// Scaling-domain iterations on K = exp(-C/eps). Returns false if the scalings
// under- or overflow, in which case the caller retries in the log domain.
bool sinkhorn_scaling(const Eigen::MatrixXd& cost, const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                      double eps, const SinkhornOptions& opt, SinkhornResult& out) {
  const Eigen::MatrixXd kernel = (-cost / eps).array().exp().matrix();
  Eigen::VectorXd u = Eigen::VectorXd::Ones(a.size());
  Eigen::VectorXd v = Eigen::VectorXd::Ones(b.size());
  out.converged = false;
  for (std::size_t it = 1; it <= opt.max_iter; ++it) {
    const Eigen::VectorXd kv = kernel * v;
    if ((kv.array() <= 0.0).any()) return false;
    u = a.cwiseQuotient(kv);
    const Eigen::VectorXd ktu = kernel.transpose() * u;
    if ((ktu.array() <= 0.0).any()) return false;
    v = b.cwiseQuotient(ktu);
    if (!u.allFinite() || !v.allFinite()) return false;
    out.iterations = it;
    out.marginal_error = (u.cwiseProduct(kernel * v) - a).cwiseAbs().sum();
    if (out.marginal_error < opt.tol) {
      out.converged = true;
      break;
    }
  }
  const Eigen::MatrixXd plan = u.asDiagonal() * kernel * v.asDiagonal();
  out.cost = plan.cwiseProduct(cost).sum();
  if (opt.keep_plan) out.plan = plan;
  out.log_domain = false;
  return std::isfinite(out.cost);
}

void sinkhorn_log(const Eigen::MatrixXd& cost, const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                  double eps, const SinkhornOptions& opt, SinkhornResult& out) {
  const Eigen::ArrayXd log_a = a.array().log();
  const Eigen::ArrayXd log_b = b.array().log();
  Eigen::ArrayXd f = Eigen::ArrayXd::Zero(a.size());
  Eigen::ArrayXd g = Eigen::ArrayXd::Zero(b.size());
  double e = eps;
  Eigen::ArrayXXd scaled = -cost.array() / e;

  auto log_plan = [&]() {
    Eigen::ArrayXXd lp = scaled;
    lp.colwise() += log_a + f / e;
    lp.rowwise() += (log_b + g / e).transpose();
    return lp;
  };
  auto sweep = [&]() {
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      f(i) = -e * log_sum_exp(log_b + g / e + scaled.row(i).transpose());
    }
    for (Eigen::Index j = 0; j < b.size(); ++j) {
      g(j) = -e * log_sum_exp(log_a + f / e + scaled.col(j));
    }
    return (log_plan().exp().rowwise().sum() - a.array()).abs().sum();
  };

  // Anneal from the cost scale down to eps, warm-starting the potentials.
  std::size_t used = 0;
  const double top = cost.maxCoeff();
  if (top > 100.0 * eps) {
    for (e = top; e > eps && used < opt.max_iter / 2; e *= 0.5) {
      scaled = -cost.array() / e;
      for (int it = 0; it < 50 && used < opt.max_iter / 2; ++it, ++used) {
        if (sweep() < 1e-3) break;
      }
    }
    e = eps;
    scaled = -cost.array() / e;
  }

  out.converged = false;
  for (std::size_t it = used + 1; it <= opt.max_iter; ++it) {
    out.iterations = it;
    out.marginal_error = sweep();
    if (out.marginal_error < opt.tol) {
      out.converged = true;
      break;
    }
  }
  const Eigen::MatrixXd plan = log_plan().exp().matrix();
  out.cost = plan.cwiseProduct(cost).sum();
  if (opt.keep_plan) out.plan = plan;
  out.log_domain = true;
}

}  // namespace

SinkhornResult sinkhorn(const DiscreteDistribution& p, const DiscreteDistribution& q,
                        const SinkhornOptions& opt) {
  if (!(opt.lambda > 0.0)) throw InvalidParameter("Sinkhorn lambda must be positive");
  if (p.points.cols() != q.points.cols()) throw InvalidParameter("supports differ in dimension");
  const Pruned pp = prune(p);
  const Pruned qq = prune(q);
  if (pp.weights.size() == 0 || qq.weights.size() == 0) throw InvalidParameter("empty support");

  const double eps = opt.kernel == SinkhornKernel::kDivideByLambda ? opt.lambda : 1.0 / opt.lambda;
  const Eigen::MatrixXd cost = squared_distances(pp.points, qq.points);

  SinkhornResult out;
  // exp(-C/eps) stays representable for cost/eps below ~700; otherwise go straight to logs.
  const bool scaling_ok = (cost / eps).rowwise().minCoeff().maxCoeff() < 600.0 &&
                          (cost / eps).colwise().minCoeff().maxCoeff() < 600.0;
  if (scaling_ok && sinkhorn_scaling(cost, pp.weights, qq.weights, eps, opt, out) && out.converged) return out;
  // Overflow, underflow or a stall from products of tiny scalings: redo in the log domain.
  SinkhornResult logged;
  sinkhorn_log(cost, pp.weights, qq.weights, eps, opt, logged);
  if (!logged.converged && out.iterations > 0 && std::isfinite(out.cost) &&
      out.marginal_error < logged.marginal_error) {
    return out;
  }
  return logged;
}

double sinkhorn_distance(const DiscreteDistribution& p, const DiscreteDistribution& q,
                         const SinkhornOptions& options) {
  return sinkhorn(p, q, options).cost;
}

double sinkhorn_divergence(const DiscreteDistribution& p, const DiscreteDistribution& q,
                           const SinkhornOptions& options) {
  return sinkhorn_distance(p, q, options) - 0.5 * sinkhorn_distance(p, p, options) -
         0.5 * sinkhorn_distance(q, q, options);
}

// ---------------------------------------------------------------------------
// Grid posteriors

std::size_t GridSpec::nx() const {
  return static_cast<std::size_t>(std::llround((x_max - x_min) / resolution));
}

std::size_t GridSpec::ny() const {
  return static_cast<std::size_t>(std::llround((y_max - y_min) / resolution));
}

Eigen::MatrixXd GridSpec::centres() const {
  if (!(resolution > 0.0) || nx() == 0 || ny() == 0) throw InvalidParameter("degenerate grid");
  Eigen::MatrixXd out(static_cast<Eigen::Index>(nx() * ny()), 2);
  Eigen::Index r = 0;
  for (std::size_t i = 0; i < nx(); ++i) {
    for (std::size_t j = 0; j < ny(); ++j, ++r) {
      out(r, 0) = x_min + (static_cast<double>(i) + 0.5) * resolution;
      out(r, 1) = y_min + (static_cast<double>(j) + 0.5) * resolution;
    }
  }
  return out;
}

long GridSpec::cell_of(double x, double y) const {
  const double fx = std::floor((x - x_min) / resolution);
  const double fy = std::floor((y - y_min) / resolution);
  if (!(fx >= 0 && fy >= 0) || fx >= static_cast<double>(nx()) || fy >= static_cast<double>(ny())) return -1;
  return static_cast<long>(fx) * static_cast<long>(ny()) + static_cast<long>(fy);
}

DiscreteDistribution grid_posterior(const Model& model, const GridSpec& grid) {
  if (model.dim() != 2) throw InvalidParameter("grid posteriors need a 2-D model");
  Eigen::MatrixXd centres = grid.centres();
  Eigen::VectorXd logp(centres.rows());
  for (Eigen::Index r = 0; r < centres.rows(); ++r) {
    logp(r) = model.log_posterior_unnormalized(centres.row(r).transpose());
  }
  Eigen::VectorXd w = (logp.array() - logp.maxCoeff()).exp().matrix();
  w /= w.sum();
  return {std::move(centres), std::move(w)};
}

DiscreteDistribution gm_reference_posterior(const Model& model, const GridSpec& grid) {
  return grid_posterior(model, grid);
}

DiscreteDistribution histogram(std::span<const Vector> samples, const GridSpec& grid) {
  Eigen::MatrixXd centres = grid.centres();
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(centres.rows());
  double inside = 0.0;
  for (const auto& s : samples) {
    const long cell = grid.cell_of(s(0), s(1));
    if (cell >= 0) {
      counts(cell) += 1.0;
      inside += 1.0;
    }
  }
  if (inside == 0.0) throw InvalidParameter("no sample falls inside the grid");
  counts /= inside;
  return {std::move(centres), std::move(counts)};
}

double mass_near(std::span<const Vector> samples, const Vector& centre, double radius) {
  if (samples.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& s : samples) {
    if ((s - centre).norm() <= radius) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

// ---------------------------------------------------------------------------
// Accuracy

PredictiveAccuracy::PredictiveAccuracy(Eigen::MatrixXd features, Eigen::VectorXd labels)
    : features_(std::move(features)), labels_(std::move(labels)) {
  if (features_.rows() == 0) throw InvalidParameter("test set is empty");
  if (features_.rows() != labels_.size()) throw InvalidParameter("features and labels differ in count");
  prob_sum_ = Eigen::VectorXd::Zero(labels_.size());
}

void PredictiveAccuracy::add_sample(const VectorCRef& w) {
  const Eigen::VectorXd z = features_ * w;
  for (Eigen::Index r = 0; r < z.size(); ++r) prob_sum_(r) += sigmoid(z(r));
  ++count_;
}

namespace {

double score(const Eigen::VectorXd& prob, const Eigen::VectorXd& labels) {
  std::size_t hits = 0;
  for (Eigen::Index r = 0; r < prob.size(); ++r) {
    const int predicted = prob(r) >= 0.5 ? 1 : 0;
    if (predicted == static_cast<int>(labels(r))) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(prob.size());
}

}  // namespace

double PredictiveAccuracy::accuracy() const {
  if (count_ == 0) throw InvalidParameter("no retained samples");
  return score(prob_sum_ / static_cast<double>(count_), labels_);
}

double PredictiveAccuracy::accuracy_of(const VectorCRef& w) const {
  const Eigen::VectorXd z = features_ * w;
  return score(z.unaryExpr([](double v) { return sigmoid(v); }), labels_);
}

std::vector<AccuracyPoint> accuracy_curve(std::span<const SampleRecord> trajectory, std::uint64_t burn_in,
                                          const Eigen::MatrixXd& test_features,
                                          const Eigen::VectorXd& test_labels) {
  std::map<std::size_t, PredictiveAccuracy> per_agent;
  std::vector<AccuracyPoint> out;
  out.reserve(trajectory.size());
  for (const auto& rec : trajectory) {
    auto it = per_agent.find(rec.agent);
    if (it == per_agent.end()) {
      it = per_agent.emplace(rec.agent, PredictiveAccuracy(test_features, test_labels)).first;
    }
    if (rec.iter > burn_in) it->second.add_sample(rec.w);
    const double acc = it->second.count() ? it->second.accuracy() : it->second.accuracy_of(rec.w);
    out.push_back({rec.iter, rec.agent, acc});
  }
  return out;
}

std::vector<AccuracyRecord> aggregate_accuracy(const std::vector<std::vector<AccuracyPoint>>& runs) {
  std::vector<AccuracyRecord> out;
  if (runs.empty()) return out;
  const auto& first = runs.front();
  for (const auto& r : runs) {
    if (r.size() != first.size()) throw InvalidParameter("accuracy curves differ in length");
  }
  const double count = static_cast<double>(runs.size());
  for (std::size_t p = 0; p < first.size(); ++p) {
    double sum = 0.0;
    for (const auto& r : runs) {
      if (r[p].iter != first[p].iter || r[p].agent != first[p].agent) {
        throw InvalidParameter("accuracy curves are not aligned");
      }
      sum += r[p].accuracy;
    }
    const double mean = sum / count;
    double ss = 0.0;
    for (const auto& r : runs) ss += (r[p].accuracy - mean) * (r[p].accuracy - mean);
    const double sd = runs.size() > 1 ? std::sqrt(ss / (count - 1.0)) : 0.0;
    out.push_back({first[p].iter, first[p].agent, mean, sd});
  }
  return out;
}

}  // namespace dula
