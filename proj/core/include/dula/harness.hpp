#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dula/config.hpp"
#include "dula/diagnostics.hpp"
#include "dula/models.hpp"
#include "dula/sampler.hpp"
#include "dula/schedules.hpp"
#include "dula/topology.hpp"

namespace dula {

enum class ExperimentKind { kGm, kLogreg, kCustom };

struct TopologySpec {
  std::string kind = "ring";  // ring | edges
  std::size_t n = 5;
  std::vector<Edge> edges;
};

/// Ring or explicit edge list on n agents; n == 1 gives the single-node graph.
Graph build_graph(const TopologySpec& spec, std::size_t n);

struct GmSpec {
  std::size_t data_points = 100;
  double theta1 = 0.0;
  double theta2 = 1.0;
  GaussianMixtureHyper hyper;
  std::vector<std::size_t> sizes{1, 5, 10};
  std::uint64_t iterations = 200000;
  std::uint64_t full_iterations = 1000000;
  std::uint64_t burn_in = 50000;
  std::uint64_t full_burn_in = 250000;
  std::uint64_t thinning = 10;
  double alpha_start = 0.01;
  double alpha_end = 1e-4;
  double delta2 = 0.55;
  double beta_start = 0.36;
  double beta_end = 0.24;
  double delta1 = 0.05;
  /// Target value of beta_0 * sigma_max when beta has to be shrunk for admissibility.
  double beta_margin = 0.95;
  double sinkhorn_lambda = 0.1;
  double mode_radius = 0.3;
  GridSpec grid;
};

struct LogregSpec {
  std::string data_path;  // empty: search DULA_DATA_DIR for "a9a"
  std::optional<std::uint64_t> data_seed;  // synthetic dataset seed; defaults to the base seed
  bool synthetic_fallback = true;
  std::size_t synth_rows = 10000;
  std::size_t synth_dim = 123;
  double synth_weight_scale = 0.3;
  double train_fraction = 0.8;
  std::vector<std::size_t> agents{5};
  std::size_t batch_size = 10;
  std::uint64_t epochs = 10;
  std::uint64_t record_every = 10;
  std::uint64_t burn_in_epochs = 2;
  double prior_scale = 1.0;
  StepSchedule cula = StepSchedule::from_shifted(0.004, 230, 0.55, 1.0, 1.0, 0.0);
  StepSchedule dula = StepSchedule::from_shifted(0.00082, 230, 0.55, 0.48, 230, 0.05);
  std::uint64_t map_iterations = 1000;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kCustom;
  std::size_t replications = 1;
  std::uint64_t base_seed = 0;
  std::vector<Engine> engines{Engine::kDula, Engine::kCula};
  std::size_t threads = 0;  // 0 = hardware concurrency
  bool full_scale = false;

  TopologySpec topology;
  StepSchedule schedule;
  std::string model = "quadratic";  // quadratic | gm | logreg
  std::size_t model_dim = 2;
  double model_precision = 1.0;
  RunConfig run;
  std::optional<TheoreticalInputs> theory;

  GmSpec gm;
  LogregSpec logreg;

  std::string config_hash;
};

/// Reads an experiment description; keys absent from the file keep their defaults.
/// Unknown keys are reported through `warnings`.
ExperimentConfig experiment_config(const Config& cfg, std::vector<std::string>* warnings = nullptr);

struct ValidationReport {
  bool ok = true;  // no fatal finding
  std::vector<std::string> errors;
  std::vector<std::string> warnings;
};

/// Schedule ordering (fatal only for sign/offset errors), connectivity and b-admissibility.
ValidationReport check(const ExperimentConfig& cfg);

/// Runs `fn(i)` for i in [0, count) on up to `threads` workers (0 = auto).
/// The first exception by index is rethrown after all workers finish.
void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& fn);

/// Single run of the configured model and engine; fills consensus bounds when
/// theory.mu_g is given and the bound is defined.
RunLog run_custom(const ExperimentConfig& cfg, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Gaussian mixture

/// alpha_k and beta_k decaying from their start to end values over `iterations` steps
/// in the shifted power-law form.
StepSchedule schedule_from_endpoints(double alpha_start, double alpha_end, double delta2, double beta_start,
                                     double beta_end, double delta1, std::uint64_t iterations);

struct GmRow {
  std::size_t n = 0;
  Engine engine = Engine::kDula;
  StepSchedule schedule;
  double beta_scale = 1.0;  // factor applied to beta for admissibility
  double d_m = 0.0;         // pooled samples vs reference
  std::vector<double> agent_d_m;
  std::vector<double> mass_mode1;  // per agent, near [theta1, theta2]
  std::vector<double> mass_mode2;  // per agent, near [theta1 + theta2, -theta2]
  std::size_t samples_per_agent = 0;
  bool sinkhorn_converged = true;
  std::optional<std::string> divergence;
};

struct GmResult {
  std::vector<GmRow> rows;  // per size, in cfg.gm.sizes order (replications averaged)
  DiscreteDistribution reference;
  std::vector<DiscreteDistribution> pooled;  // per size, replication 0
  std::uint64_t iterations = 0;
  std::uint64_t burn_in = 0;
  std::vector<std::string> notes;
};

GmResult run_gm_experiment(const ExperimentConfig& cfg);
/// gm_distances.csv, gm_agents.csv, posterior_reference.csv, posterior_n<k>.csv.
void write_gm_outputs(const GmResult& result, const std::filesystem::path& dir, const std::string& config_hash);

// ---------------------------------------------------------------------------
// Logistic regression

struct LogregCurve {
  Engine engine = Engine::kDula;
  std::size_t agents = 1;
  std::vector<AccuracyRecord> records;  // mean/std across replications
  /// Final accuracy of each agent in each replication [rep][agent].
  std::vector<std::vector<double>> final_accuracy;
  double final_mean = 0.0;  // averaged over replications and agents
  double final_std = 0.0;   // across replications of the agent-averaged value
  /// max - min across agents of the replication-averaged final accuracy.
  double agent_spread = 0.0;
  /// Largest per-replication spread across agents.
  double worst_replication_spread = 0.0;
  std::uint64_t iterations = 0;
};

struct LogregResult {
  bool synthetic = false;
  std::string dataset;
  double map_accuracy = 0.0;   // replication mean, MAP oracle on the same splits
  double true_accuracy = 0.0;  // generating weights, synthetic data only
  std::vector<LogregCurve> curves;
  std::vector<std::string> notes;
};

/// Finds the a9a file: explicit path, then $DULA_DATA_DIR/a9a. Empty when absent.
std::optional<std::filesystem::path> find_logreg_data(const LogregSpec& spec);

/// MAP of the logistic posterior by proximal gradient descent (exact for the Laplace prior).
Vector fit_map(const Eigen::MatrixXd& features, const Eigen::VectorXd& labels, double prior_scale,
               std::uint64_t iterations);

LogregResult run_logreg_experiment(const ExperimentConfig& cfg);
/// accuracy_<engine>_n<k>.csv per curve and logreg_final.csv.
void write_logreg_outputs(const LogregResult& result, const std::filesystem::path& dir,
                          const std::string& config_hash);

}  // namespace dula
