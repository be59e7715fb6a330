#include "dula/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dula/diagnostics.hpp"
#include "dula/error.hpp"

namespace dula {

const char* to_string(Engine e) noexcept {
  switch (e) {
    case Engine::kDula: return "dula";
    case Engine::kCula: return "cula";
    case Engine::kSgd: return "sgd";
  }
  return "unknown";
}

Engine parse_engine(const std::string& name) {
  if (name == "dula") return Engine::kDula;
  if (name == "cula") return Engine::kCula;
  if (name == "sgd") return Engine::kSgd;
  throw InvalidParameter("unknown engine '" + name + "'");
}

MinibatchCursor::MinibatchCursor(std::size_t shard_size, Rng rng)
    : order_(shard_size), pos_(shard_size), rng_(std::move(rng)) {
  std::iota(order_.begin(), order_.end(), 0);
}

std::span<const std::size_t> MinibatchCursor::next(std::size_t batch_size) {
  if (order_.empty()) return {};
  if (pos_ >= order_.size()) {
    std::shuffle(order_.begin(), order_.end(), rng_);
    pos_ = 0;
    ++epoch_;
  }
  const std::size_t take = std::min(batch_size, order_.size() - pos_);
  std::span<const std::size_t> out(order_.data() + pos_, take);
  pos_ += take;
  return out;
}

NetworkState::NetworkState(Eigen::MatrixXd initial, std::uint64_t seed,
                           std::vector<std::size_t> shard_sizes)
    : w(std::move(initial)), seed_(seed) {
  const auto n = static_cast<std::uint32_t>(w.cols());
  noise.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) noise.emplace_back(seed, i, StreamPurpose::kNoise);
  if (!shard_sizes.empty()) {
    batches.reserve(shard_sizes.size());
    for (std::uint32_t i = 0; i < shard_sizes.size(); ++i) {
      batches.emplace_back(shard_sizes[i], Rng(seed, i, StreamPurpose::kBatching));
    }
  }
}

namespace {

void ensure_cursors(NetworkState& state, const Model& model, std::size_t batch_size) {
  if (batch_size == 0 || !state.batches.empty()) return;
  for (std::uint32_t i = 0; i < model.agents(); ++i) {
    state.batches.emplace_back(model.shard_size(i), Rng(state.seed(), i, StreamPurpose::kBatching));
  }
}

/// Gradient of agent i's potential at w, drawing a mini-batch when requested.
Vector draw_gradient(NetworkState& state, const Model& model, std::size_t agent, const VectorCRef& w,
                     std::size_t batch_size, std::vector<std::size_t>* batch_out) {
  if (batch_size == 0) return model.local_grad(agent, w);
  const auto batch = state.batches.at(agent).next(batch_size);
  if (batch_out) batch_out->assign(batch.begin(), batch.end());
  return model.local_grad(agent, w, batch);
}

/// Shared update kernel; D-ULA and C-ULA both go through here so that a one-agent
/// network reproduces the centralized chain bit for bit.
inline void langevin_update(Eigen::Ref<Vector> out, const VectorCRef& w, double beta, const VectorCRef& hat,
                            double drift, const VectorCRef& g, double noise_scale, const VectorCRef& v) {
  for (Eigen::Index j = 0; j < w.size(); ++j) {
    out(j) = w(j) - beta * hat(j) - drift * g(j) + noise_scale * v(j);
  }
}

void check_finite(const NetworkState& state) {
  for (Eigen::Index i = 0; i < state.w.cols(); ++i) {
    if (!state.w.col(i).allFinite()) throw DivergenceError(static_cast<std::size_t>(i), state.k);
  }
}

}  // namespace

void dula_step(NetworkState& state, const Graph& graph, const StepSchedule& schedule,
               const Model& model, const StepOptions& options, StepTrace* trace) {
  const std::size_t n = state.agents();
  const auto d = static_cast<Eigen::Index>(state.dim());
  if (graph.size() != n || model.agents() != n) {
    throw InvalidParameter("graph, model and state disagree on the agent count");
  }
  if (model.dim() != state.dim()) throw InvalidParameter("model and state disagree on the dimension");

  const double alpha = options.alpha_override.value_or(schedule.alpha(state.k));
  const double beta = options.beta_override.value_or(schedule.beta(state.k));
  const double nd = static_cast<double>(n);
  const double noise_scale = std::sqrt(2.0 * alpha);
  const double noise_sd = std::sqrt(nd);
  ensure_cursors(state, model, options.batch_size);

  // Read phase: everything is computed against the iteration-k snapshot.
  Eigen::MatrixXd grads(d, static_cast<Eigen::Index>(n));
  Eigen::MatrixXd noise = Eigen::MatrixXd::Zero(d, static_cast<Eigen::Index>(n));
  Eigen::MatrixXd hat = Eigen::MatrixXd::Zero(d, static_cast<Eigen::Index>(n));
  std::vector<std::vector<std::size_t>> batches(trace && options.batch_size ? n : 0);

  for (std::size_t i = 0; i < n; ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    if (options.noise) {
      for (Eigen::Index j = 0; j < d; ++j) noise(j, col) = noise_sd * state.noise[i].normal();
    }
    grads.col(col) = draw_gradient(state, model, i, state.w.col(col), options.batch_size,
                                   batches.empty() ? nullptr : &batches[i]);
    for (std::size_t nb : graph.neighbors(i)) {
      hat.col(col) += state.w.col(col) - state.w.col(static_cast<Eigen::Index>(nb));
    }
  }

  // Write phase.
  Eigen::MatrixXd next(d, static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
    langevin_update(next.col(i), state.w.col(i), beta, hat.col(i), alpha * nd, grads.col(i),
                    noise_scale, noise.col(i));
  }
  state.w = std::move(next);
  ++state.k;

  if (trace) {
    trace->gradients = std::move(grads);
    trace->noise = std::move(noise);
    trace->alpha = alpha;
    trace->beta = beta;
    trace->batches = std::move(batches);
  }
  check_finite(state);
}

void cula_step(NetworkState& state, const StepSchedule& schedule, const Model& model,
               const StepOptions& options, StepTrace* trace) {
  if (state.agents() != 1) throw InvalidParameter("centralized chain must have a single column");
  if (model.dim() != state.dim()) throw InvalidParameter("model and state disagree on the dimension");
  const auto d = static_cast<Eigen::Index>(state.dim());

  const double alpha = options.alpha_override.value_or(schedule.alpha(state.k));
  const double noise_scale = std::sqrt(2.0 * alpha);
  ensure_cursors(state, model, options.batch_size);

  Vector noise = Vector::Zero(d);
  if (options.noise) {
    for (Eigen::Index j = 0; j < d; ++j) noise(j) = state.noise[0].normal();
  }
  Vector grad = Vector::Zero(d);
  std::vector<std::vector<std::size_t>> batches(trace && options.batch_size ? model.agents() : 0);
  for (std::size_t i = 0; i < model.agents(); ++i) {
    grad += draw_gradient(state, model, i, state.w.col(0), options.batch_size,
                          batches.empty() ? nullptr : &batches[i]);
  }

  Vector next(d);
  langevin_update(next, state.w.col(0), 0.0, Vector::Zero(d), alpha, grad, noise_scale, noise);
  state.w.col(0) = next;
  ++state.k;

  if (trace) {
    trace->gradients = grad;
    trace->noise = noise;
    trace->alpha = alpha;
    trace->beta = 0.0;
    trace->batches = std::move(batches);
  }
  check_finite(state);
}

void sgd_step(NetworkState& state, const StepSchedule& schedule, const Model& model,
              const StepOptions& options) {
  if (state.agents() != 1) throw InvalidParameter("SGD chain must have a single column");
  const double alpha = options.alpha_override.value_or(schedule.alpha(state.k));
  ensure_cursors(state, model, options.batch_size);
  Vector grad = Vector::Zero(static_cast<Eigen::Index>(state.dim()));
  for (std::size_t i = 0; i < model.agents(); ++i) {
    grad += draw_gradient(state, model, i, state.w.col(0), options.batch_size, nullptr);
  }
  state.w.col(0) -= alpha * grad;
  ++state.k;
  check_finite(state);
}

double average_shadow(const NetworkState& before, const NetworkState& after, const StepTrace& trace,
                      const StepSchedule& schedule, const Model& model) {
  const auto n = static_cast<Eigen::Index>(before.agents());
  const auto d = static_cast<Eigen::Index>(before.dim());
  if (trace.noise.rows() != d || trace.noise.cols() != n || after.w.rows() != d || after.w.cols() != n) {
    throw InvalidParameter("noise record does not match the state shape");
  }
  if (!trace.batches.empty() && trace.batches.size() != static_cast<std::size_t>(n)) {
    throw InvalidParameter("batch record does not match the agent count");
  }
  const double alpha = schedule.alpha(before.k);

  Vector grad_sum = Vector::Zero(d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto agent = static_cast<std::size_t>(i);
    if (trace.batches.empty()) {
      grad_sum += model.local_grad(agent, before.w.col(i));
    } else {
      grad_sum += model.local_grad(agent, before.w.col(i), BatchIndices(trace.batches[agent]));
    }
  }
  const Vector predicted = before.w.rowwise().mean() - alpha * grad_sum +
                           std::sqrt(2.0 * alpha) * trace.noise.rowwise().mean();
  return (after.w.rowwise().mean() - predicted).cwiseAbs().maxCoeff();
}

void validate(const RunConfig& cfg) {
  if (cfg.iterations == 0) throw InvalidParameter("iterations must be positive");
  if (cfg.burn_in >= cfg.iterations) throw InvalidParameter("burn_in must be < iterations");
  if (cfg.thinning < 1) throw InvalidParameter("thinning must be >= 1");
  if (cfg.record_every < 1) throw InvalidParameter("record_every must be >= 1");
}

RunLog run(const RunConfig& cfg, const Graph& graph, const StepSchedule& schedule, const Model& model,
           const Eigen::MatrixXd& initial, const StepObserver& observer) {
  validate(cfg);
  if (cfg.engine == Engine::kDula && !graph.is_connected()) {
    throw InvalidTopology("D-ULA requires a connected graph");
  }
  if (const auto verdict = dula::validate(schedule); verdict.has_fatal()) {
    throw InvalidSchedule(verdict.describe());
  }

  RunLog log;
  log.metadata["engine"] = to_string(cfg.engine);
  log.metadata["seed"] = std::to_string(cfg.seed);

  NetworkState state(initial, cfg.seed);
  StepOptions options;
  options.batch_size = cfg.batch_size;

  try {
    for (std::uint64_t step = 0; step < cfg.iterations; ++step) {
      switch (cfg.engine) {
        case Engine::kDula: dula_step(state, graph, schedule, model, options); break;
        case Engine::kCula: cula_step(state, schedule, model, options); break;
        case Engine::kSgd: sgd_step(state, schedule, model, options); break;
      }
      const std::uint64_t t = state.k;
      if (cfg.record_samples && t > cfg.burn_in && (t - cfg.burn_in) % cfg.thinning == 0) {
        for (std::size_t i = 0; i < state.agents(); ++i) {
          log.samples.push_back({t, i, state.w.col(static_cast<Eigen::Index>(i))});
        }
      }
      if (t % cfg.record_every == 0) log.consensus.push_back({t, consensus_error(state.w), std::nan("")});
      if (observer) observer(state);
    }
  } catch (const DivergenceError& e) {
    log.divergence = e.what();
  }
  return log;
}

}  // namespace dula
