#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dula/models.hpp"
#include "dula/rng.hpp"
#include "dula/schedules.hpp"
#include "dula/topology.hpp"

namespace dula {

enum class Engine { kDula, kCula, kSgd };

const char* to_string(Engine e) noexcept;
/// Accepts "dula", "cula", "sgd"; throws InvalidParameter otherwise.
Engine parse_engine(const std::string& name);

/// Without-replacement mini-batch sampler over one shard, reshuffled every epoch.
class MinibatchCursor {
 public:
  MinibatchCursor(std::size_t shard_size, Rng rng);

  /// Next batch of at most batch_size local indices; the last batch of an epoch may be shorter.
  std::span<const std::size_t> next(std::size_t batch_size);
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::vector<std::size_t> order_;
  std::size_t pos_;
  std::size_t epoch_ = 0;
  Rng rng_;
};

/// Stacked per-agent parameters (one column per agent) plus per-agent random streams.
///
/// Agent i draws its Langevin noise from stream (seed, i, kNoise) and its
/// mini-batches from (seed, i, kBatching). The centralized chain is a
/// one-column state and therefore uses the same keys as agent 0.
class NetworkState {
 public:
  NetworkState(Eigen::MatrixXd initial, std::uint64_t seed, std::vector<std::size_t> shard_sizes = {});

  std::size_t agents() const noexcept { return static_cast<std::size_t>(w.cols()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(w.rows()); }
  std::uint64_t seed() const noexcept { return seed_; }

  Eigen::MatrixXd w;
  std::uint64_t k = 0;
  std::vector<Rng> noise;
  std::vector<MinibatchCursor> batches;

 private:
  std::uint64_t seed_;
};

/// Per-step knobs; the overrides exist for tests.
struct StepOptions {
  std::size_t batch_size = 0;  // 0 = full shard
  bool noise = true;
  std::optional<double> alpha_override;
  std::optional<double> beta_override;
};

/// What a step actually used; consumed by average_shadow.
struct StepTrace {
  Eigen::MatrixXd gradients;  // g_i, one column per agent
  Eigen::MatrixXd noise;      // v_i as added (before the sqrt(2 alpha) factor)
  double alpha = 0.0;
  double beta = 0.0;
  std::vector<std::vector<std::size_t>> batches;  // empty when full-shard
};

/// One synchronous D-ULA round:
///   w_i <- w_i - beta_k sum_j a_ij (w_i - w_j) - alpha_k n g_i(w_i) + sqrt(2 alpha_k) v_i,
/// with v_i ~ N(0, n I). All agents read the iteration-k snapshot.
/// Throws DivergenceError on a non-finite result.
void dula_step(NetworkState& state, const Graph& graph, const StepSchedule& schedule,
               const Model& model, const StepOptions& options = {}, StepTrace* trace = nullptr);

/// One centralized ULA step on the global posterior: w <- w - alpha_k sum_i g_i(w) + sqrt(2 alpha_k) v.
void cula_step(NetworkState& state, const StepSchedule& schedule, const Model& model,
               const StepOptions& options = {}, StepTrace* trace = nullptr);

/// Plain (mini-batch) gradient descent on the global potential, no noise.
void sgd_step(NetworkState& state, const StepSchedule& schedule, const Model& model,
              const StepOptions& options = {});

/// Residual of the exact average dynamics
///   mean(w') = mean(w) - alpha_k sum_i g_i(w_i) + sqrt(2 alpha_k) mean(v_i),
/// with gradients recomputed from the model at `before` and the recorded noise.
/// The consensus term cancels because 1^T L = 0, so beta plays no part.
double average_shadow(const NetworkState& before, const NetworkState& after, const StepTrace& trace,
                      const StepSchedule& schedule, const Model& model);

struct RunConfig {
  Engine engine = Engine::kDula;
  std::uint64_t iterations = 1000;
  std::uint64_t burn_in = 0;
  std::uint64_t thinning = 1;
  std::size_t batch_size = 0;
  std::uint64_t seed = 0;
  std::uint64_t record_every = 1;
  bool record_samples = true;
};

/// Throws InvalidParameter unless burn_in < iterations, thinning >= 1 and record_every >= 1.
void validate(const RunConfig& cfg);

struct SampleRecord {
  std::uint64_t iter = 0;
  std::size_t agent = 0;
  Vector w;
};

struct ConsensusRecord {
  std::uint64_t iter = 0;
  double error_sq = 0.0;
  double bound = std::numeric_limits<double>::quiet_NaN();
};

struct AccuracyRecord {
  std::uint64_t iter = 0;
  std::size_t agent = 0;
  double mean_acc = 0.0;
  double std_acc = 0.0;
};

struct RunLog {
  std::map<std::string, std::string> metadata;
  std::vector<SampleRecord> samples;
  std::vector<ConsensusRecord> consensus;
  std::vector<AccuracyRecord> accuracy;
  /// Set when the run stopped early on a non-finite state.
  std::optional<std::string> divergence;
};

/// Called after every step with the updated state.
using StepObserver = std::function<void(const NetworkState&)>;

/// Runs `cfg.iterations` steps from `initial` (dim x agents; one column for cula/sgd).
/// Samples are kept for t > burn_in with (t - burn_in) % thinning == 0, where
/// t is the post-step iteration count; consensus error is logged whenever
/// t % record_every == 0. A divergence stops the run and is reported in the log.
RunLog run(const RunConfig& cfg, const Graph& graph, const StepSchedule& schedule, const Model& model,
           const Eigen::MatrixXd& initial, const StepObserver& observer = {});

}  // namespace dula
