#include "dula/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include "dula/csv.hpp"
#include "dula/datasets.hpp"
#include "dula/error.hpp"

namespace dula {

namespace {

std::vector<std::size_t> to_sizes(const std::vector<double>& values, const std::string& key) {
  std::vector<std::size_t> out;
  for (double v : values) {
    if (v < 1 || v != std::floor(v)) throw InvalidParameter(key + ": entries must be positive integers");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

std::vector<Engine> to_engines(const std::string& list) {
  std::vector<Engine> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(std::remove_if(item.begin(), item.end(), [](unsigned char c) { return std::isspace(c); }),
               item.end());
    if (!item.empty()) out.push_back(parse_engine(item));
  }
  if (out.empty()) throw InvalidParameter("experiment.engines is empty");
  return out;
}

/// prefix.{a|alpha0, b|beta0, delta1, delta2, offset1|b2, offset2|b1}; b1/b2 are the shifts
/// of alpha0 / (b1 + k)^delta2, i.e. offset = shift - 1.
StepSchedule read_schedule(const Config& c, const std::string& prefix, StepSchedule s) {
  auto key = [&](const char* name) { return prefix + "." + name; };
  s.delta1 = c.get_double(key("delta1"), s.delta1);
  s.delta2 = c.get_double(key("delta2"), s.delta2);
  s.a = c.has(key("alpha0")) ? c.get_double(key("alpha0")) : c.get_double(key("a"), s.a);
  s.b = c.has(key("beta0")) ? c.get_double(key("beta0")) : c.get_double(key("b"), s.b);
  if (c.has(key("offset2"))) {
    s.offset2 = c.get_double(key("offset2"));
  } else if (c.has(key("b1"))) {
    s.offset2 = c.get_double(key("b1")) - 1.0;
  }
  if (c.has(key("offset1"))) {
    s.offset1 = c.get_double(key("offset1"));
  } else if (c.has(key("b2"))) {
    s.offset1 = c.get_double(key("b2")) - 1.0;
  }
  return s;
}

std::string describe(const StepSchedule& s) {
  std::ostringstream os;
  os.precision(10);
  os << "a=" << s.a << " b=" << s.b << " delta1=" << s.delta1 << " delta2=" << s.delta2
     << " offset1=" << s.offset1 << " offset2=" << s.offset2;
  return os.str();
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  return std::to_string(std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count());
}

Eigen::MatrixXd zeros(std::size_t dim, std::size_t agents) {
  return Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(agents));
}

std::vector<std::vector<double>> split_values(const std::vector<double>& data, const Partition& p) {
  std::vector<std::vector<double>> shards(p.agents);
  const auto rows = p.shards();
  for (std::size_t a = 0; a < rows.size(); ++a) {
    for (std::size_t r : rows[a]) shards[a].push_back(data[r]);
  }
  return shards;
}

std::vector<BayesianLogisticRegression::Shard> dense_shards(const SparseDataset& data, const Partition& p) {
  std::vector<BayesianLogisticRegression::Shard> out;
  for (const auto& rows : p.shards()) {
    auto [x, y] = to_dense(data, rows);
    out.push_back({std::move(x), std::move(y)});
  }
  return out;
}

SparseDataset synthetic_logreg_data(const LogregSpec& spec, std::uint64_t seed, std::vector<double>* true_w) {
  Rng wr(seed, 2, StreamPurpose::kData);
  true_w->resize(spec.synth_dim);
  for (auto& v : *true_w) v = wr.normal(0.0, spec.synth_weight_scale);
  Rng xr(seed, 3, StreamPurpose::kData);
  return synth_logreg(xr, spec.synth_rows, spec.synth_dim, *true_w);
}

}  // namespace

Graph build_graph(const TopologySpec& spec, std::size_t n) {
  if (n == 0) throw InvalidTopology("graph needs at least one agent");
  if (n == 1) return Graph(1, {});
  if (spec.kind == "ring") return ring(n);
  if (spec.kind == "edges") {
    if (n != spec.n) throw InvalidTopology("explicit edge list is fixed to topology.n agents");
    return Graph(n, spec.edges);
  }
  throw InvalidTopology("unknown topology kind '" + spec.kind + "'");
}

ExperimentConfig experiment_config(const Config& c, std::vector<std::string>* warnings) {
  ExperimentConfig e;
  const std::string kind = c.get_string("experiment.kind", "custom");
  if (kind == "gm") {
    e.kind = ExperimentKind::kGm;
  } else if (kind == "logreg") {
    e.kind = ExperimentKind::kLogreg;
  } else if (kind == "custom") {
    e.kind = ExperimentKind::kCustom;
  } else {
    throw InvalidParameter("experiment.kind must be gm, logreg or custom");
  }
  e.replications = c.get_uint("experiment.replications", 1);
  if (e.replications < 1) throw InvalidParameter("experiment.replications must be >= 1");
  e.base_seed = c.get_uint("experiment.base_seed", 0);
  if (c.has("experiment.engines")) e.engines = to_engines(c.get_string("experiment.engines"));
  e.threads = c.get_uint("experiment.threads", 0);
  e.full_scale = c.get_bool("experiment.full_scale", false);

  e.topology.kind = c.get_string("topology", c.get_string("topology.kind", "ring"));
  e.topology.n = c.get_uint("topology.n", e.topology.n);
  if (c.has("topology.edges")) {
    for (const auto& [i, j] : c.get_pairs("topology.edges")) e.topology.edges.emplace_back(i, j);
  }

  e.schedule = read_schedule(c, "schedule", e.schedule);
  e.model = c.get_string("model", c.get_string("model.kind", e.model));
  e.model_dim = c.get_uint("model.dim", e.model_dim);
  e.model_precision = c.get_double("model.precision", e.model_precision);

  e.run.engine = parse_engine(c.get_string("run.engine", to_string(e.run.engine)));
  e.run.iterations = c.get_uint("run.iterations", e.run.iterations);
  e.run.burn_in = c.get_uint("run.burn_in", e.run.burn_in);
  e.run.thinning = c.get_uint("run.thinning", e.run.thinning);
  e.run.batch_size = c.get_uint("run.batch_size", e.run.batch_size);
  e.run.seed = c.get_uint("run.seed", e.base_seed);
  e.run.record_every = c.get_uint("run.record_every", e.run.record_every);
  e.run.record_samples = c.get_bool("run.record_samples", true);

  if (c.has("theory.rho_u") || c.has("theory.lipschitz") || c.has("theory.mu_g") || c.has("theory.gamma")) {
    TheoreticalInputs t;
    t.rho_u = c.get_double("theory.rho_u", t.rho_u);
    t.lipschitz = c.get_double("theory.lipschitz", t.lipschitz);
    t.gamma = c.get_double("theory.gamma", t.gamma);
    t.mu_g = c.get_double("theory.mu_g", t.mu_g);
    t.d_w = e.model_dim;
    e.theory = t;
  }

  GmSpec& g = e.gm;
  g.data_points = c.get_uint("gm.data_points", g.data_points);
  g.theta1 = c.get_double("gm.theta1", g.theta1);
  g.theta2 = c.get_double("gm.theta2", g.theta2);
  g.hyper.sigma1_sq = c.get_double("gm.sigma1_sq", g.hyper.sigma1_sq);
  g.hyper.sigma2_sq = c.get_double("gm.sigma2_sq", g.hyper.sigma2_sq);
  g.hyper.sigmax_sq = c.get_double("gm.sigmax_sq", g.hyper.sigmax_sq);
  if (c.has("gm.sizes")) g.sizes = to_sizes(c.get_list("gm.sizes"), "gm.sizes");
  g.iterations = c.get_uint("gm.iterations", g.iterations);
  g.full_iterations = c.get_uint("gm.full_iterations", g.full_iterations);
  g.burn_in = c.get_uint("gm.burn_in", g.burn_in);
  g.full_burn_in = c.get_uint("gm.full_burn_in", g.full_burn_in);
  g.thinning = c.get_uint("gm.thinning", g.thinning);
  g.alpha_start = c.get_double("gm.alpha_start", g.alpha_start);
  g.alpha_end = c.get_double("gm.alpha_end", g.alpha_end);
  g.delta2 = c.get_double("gm.delta2", g.delta2);
  g.beta_start = c.get_double("gm.beta_start", g.beta_start);
  g.beta_end = c.get_double("gm.beta_end", g.beta_end);
  g.delta1 = c.get_double("gm.delta1", g.delta1);
  g.beta_margin = c.get_double("gm.beta_margin", g.beta_margin);
  g.sinkhorn_lambda = c.get_double("gm.lambda", g.sinkhorn_lambda);
  g.mode_radius = c.get_double("gm.mode_radius", g.mode_radius);
  g.grid.resolution = c.get_double("gm.grid_resolution", g.grid.resolution);

  LogregSpec& l = e.logreg;
  l.data_path = c.get_string("data.path", c.get_string("logreg.data_path", l.data_path));
  if (c.has("data.seed")) l.data_seed = c.get_uint("data.seed");
  l.synthetic_fallback = c.get_bool("logreg.synthetic_fallback", l.synthetic_fallback);
  l.synth_rows = c.get_uint("logreg.synth_rows", l.synth_rows);
  l.synth_dim = c.get_uint("logreg.synth_dim", l.synth_dim);
  l.synth_weight_scale = c.get_double("logreg.synth_weight_scale", l.synth_weight_scale);
  l.train_fraction = c.get_double("data.train_fraction", c.get_double("logreg.train_fraction", l.train_fraction));
  if (c.has("logreg.agents")) l.agents = to_sizes(c.get_list("logreg.agents"), "logreg.agents");
  l.batch_size = c.get_uint("logreg.batch_size", l.batch_size);
  l.epochs = c.get_uint("logreg.epochs", l.epochs);
  l.record_every = c.get_uint("logreg.record_every", l.record_every);
  l.burn_in_epochs = c.get_uint("logreg.burn_in_epochs", l.burn_in_epochs);
  l.prior_scale = c.get_double("logreg.prior_scale", l.prior_scale);
  l.cula = read_schedule(c, "logreg.cula", l.cula);
  l.dula = read_schedule(c, "logreg.dula", l.dula);
  l.map_iterations = c.get_uint("logreg.map_iterations", l.map_iterations);

  e.config_hash = c.hash();
  if (warnings) {
    for (const auto& key : c.unused_keys()) warnings->push_back("unknown key '" + key + "' ignored");
  }
  return e;
}

ValidationReport check(const ExperimentConfig& cfg) {
  ValidationReport r;
  auto fail = [&](const std::string& m) {
    r.ok = false;
    r.errors.push_back(m);
  };

  auto check_schedule = [&](const StepSchedule& s, const std::string& name) {
    for (const auto& v : validate(s).violations) {
      (v.fatal ? r.errors : r.warnings).push_back(name + ": " + v.constraint);
      if (v.fatal) r.ok = false;
    }
  };

  std::vector<std::size_t> sizes;
  switch (cfg.kind) {
    case ExperimentKind::kCustom:
      sizes = {cfg.topology.n};
      check_schedule(cfg.schedule, "schedule");
      break;
    case ExperimentKind::kGm:
      sizes = cfg.gm.sizes;
      if (!(cfg.gm.alpha_start > cfg.gm.alpha_end && cfg.gm.alpha_end > 0)) {
        fail("gm: need alpha_start > alpha_end > 0");
      }
      break;
    case ExperimentKind::kLogreg:
      sizes = cfg.logreg.agents;
      check_schedule(cfg.logreg.dula, "logreg.dula");
      check_schedule(cfg.logreg.cula, "logreg.cula");
      break;
  }

  for (std::size_t n : sizes) {
    try {
      const Graph g = build_graph(cfg.topology, n);
      if (n > 1 && !g.is_connected()) fail("topology with n=" + std::to_string(n) + " is not connected");
      if (n > 1 && g.is_connected()) {
        double b = 0.0;
        if (cfg.kind == ExperimentKind::kCustom) b = cfg.schedule.b;
        if (cfg.kind == ExperimentKind::kLogreg) b = cfg.logreg.dula.b;
        if (b > 0.0) {
          const auto adm = validate_b(g, b);
          if (!adm.admissible) {
            r.warnings.push_back("b=" + format_double(b) + " violates b*sigma_max < 1 for n=" + std::to_string(n) +
                                 " (margin " + format_double(adm.margin) + ")");
          }
        }
      }
    } catch (const Error& e) {
      fail(e.what());
    }
  }
  if (cfg.kind == ExperimentKind::kCustom) {
    try {
      validate(cfg.run);
    } catch (const Error& e) {
      fail(e.what());
    }
  }
  return r;
}

void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, count);
  std::vector<std::exception_ptr> errors(count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// ---------------------------------------------------------------------------
// Custom runs

RunLog run_custom(const ExperimentConfig& cfg, std::uint64_t seed) {
  RunConfig rc = cfg.run;
  rc.seed = seed;
  const bool networked = rc.engine == Engine::kDula;
  const std::size_t agents = networked ? cfg.topology.n : 1;
  const Graph graph = build_graph(cfg.topology, agents);

  std::unique_ptr<Model> model;
  if (cfg.model == "quadratic") {
    const Eigen::MatrixXd precision =
        cfg.model_precision * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(cfg.model_dim),
                                                        static_cast<Eigen::Index>(cfg.model_dim));
    model = std::make_unique<QuadraticGaussian>(precision, agents);
  } else if (cfg.model == "gm") {
    Rng data_rng(seed, 0, StreamPurpose::kData);
    const auto data =
        generate_gm_data(data_rng, cfg.gm.data_points, cfg.gm.theta1, cfg.gm.theta2, cfg.gm.hyper.sigmax_sq);
    model = std::make_unique<GaussianMixtureTiedMeans>(split_values(data, partition(data.size(), agents, seed)),
                                                       cfg.gm.hyper);
  } else if (cfg.model == "logreg") {
    SparseDataset data;
    if (auto path = find_logreg_data(cfg.logreg)) {
      data = load_libsvm(*path);
    } else if (cfg.logreg.synthetic_fallback) {
      std::vector<double> w;
      data = synthetic_logreg_data(cfg.logreg, cfg.logreg.data_seed.value_or(cfg.base_seed), &w);
    } else {
      throw IoError("logistic regression data not found and synthetic fallback disabled");
    }
    model = std::make_unique<BayesianLogisticRegression>(dense_shards(data, partition(data.size(), agents, seed)),
                                                         cfg.logreg.prior_scale);
  } else {
    throw InvalidParameter("unknown model.kind '" + cfg.model + "'");
  }

  RunLog log = run(rc, graph, cfg.schedule, *model, zeros(model->dim(), agents));

  if (networked && cfg.theory && agents > 1) {
    try {
      const auto c = bound_constants(graph, cfg.schedule, cfg.theory->mu_g, model->dim(), 0.0);
      for (auto& rec : log.consensus) rec.bound = consensus_bound(c, rec.iter).two_term;
    } catch (const BoundUnavailable& e) {
      log.metadata["bound"] = std::string("unavailable: ") + e.what();
    }
  }
  log.metadata["config_hash"] = cfg.config_hash;
  log.metadata["dim"] = std::to_string(model->dim());
  log.metadata["agents"] = std::to_string(agents);
  log.metadata["model"] = cfg.model;
  log.metadata["schedule"] = describe(cfg.schedule);
  log.metadata["iterations"] = std::to_string(rc.iterations);
  log.metadata["burn_in"] = std::to_string(rc.burn_in);
  log.metadata["thinning"] = std::to_string(rc.thinning);
  log.metadata["timestamp"] = timestamp();
  return log;
}

// ---------------------------------------------------------------------------
// Gaussian mixture

StepSchedule schedule_from_endpoints(double alpha_start, double alpha_end, double delta2, double beta_start,
                                     double beta_end, double delta1, std::uint64_t iterations) {
  if (iterations < 2) throw InvalidParameter("need at least two iterations");
  if (!(alpha_start > alpha_end && alpha_end > 0.0 && delta2 > 0.0)) {
    throw InvalidParameter("alpha must decay from alpha_start to alpha_end > 0");
  }
  const double last = static_cast<double>(iterations - 1);
  // alpha_k = alpha0 / (b1 + k)^delta2 with alpha_0 = start, alpha_last = end.
  const double ra = std::pow(alpha_start / alpha_end, 1.0 / delta2);
  const double b1 = std::max(1.0, last / (ra - 1.0));
  const double alpha0 = alpha_start * std::pow(b1, delta2);

  double b2 = 1.0;
  double beta0 = beta_start;
  if (delta1 > 0.0 && beta_start > beta_end && beta_end > 0.0) {
    const double rb = std::pow(beta_start / beta_end, 1.0 / delta1);
    b2 = std::max(1.0, last / (rb - 1.0));
    beta0 = beta_start * std::pow(b2, delta1);
  }
  return StepSchedule::from_shifted(alpha0, b1, delta2, beta0, b2, delta1);
}

namespace {

struct GmRunOutput {
  GmRow row;
  DiscreteDistribution pooled;
  DiscreteDistribution reference;
};

GmRunOutput gm_single(const ExperimentConfig& cfg, std::size_t n, std::uint64_t seed, std::uint64_t iterations,
                      std::uint64_t burn_in) {
  const GmSpec& g = cfg.gm;
  Rng data_rng(seed, 0, StreamPurpose::kData);
  const auto data = generate_gm_data(data_rng, g.data_points, g.theta1, g.theta2, g.hyper.sigmax_sq);
  GaussianMixtureTiedMeans model(split_values(data, partition(data.size(), n, seed)), g.hyper);
  const GaussianMixtureTiedMeans pooled_model({data}, g.hyper);

  GmRunOutput out;
  GmRow& row = out.row;
  row.n = n;
  row.engine = n == 1 ? Engine::kCula : Engine::kDula;
  row.schedule = schedule_from_endpoints(g.alpha_start, g.alpha_end, g.delta2, g.beta_start, g.beta_end,
                                         g.delta1, iterations);
  const Graph graph = build_graph(cfg.topology, n);
  if (n > 1) {
    const double worst = row.schedule.beta(0) * graph.spectral().sigma_max;
    if (worst >= 1.0) {
      row.beta_scale = g.beta_margin / worst;
      row.schedule.b *= row.beta_scale;
    }
  }

  RunConfig rc;
  rc.engine = row.engine;
  rc.iterations = iterations;
  rc.burn_in = burn_in;
  rc.thinning = g.thinning;
  rc.seed = seed;
  rc.record_every = std::max<std::uint64_t>(1, iterations / 100);
  const RunLog log = run(rc, graph, row.schedule, model, zeros(2, n));
  row.divergence = log.divergence;

  std::vector<std::vector<Vector>> per_agent(n);
  std::vector<Vector> pooled;
  for (const auto& s : log.samples) {
    per_agent[s.agent].push_back(s.w);
    pooled.push_back(s.w);
  }
  row.samples_per_agent = per_agent.front().size();

  SinkhornOptions opt;
  opt.lambda = g.sinkhorn_lambda;
  out.reference = gm_reference_posterior(pooled_model, g.grid);
  if (pooled.empty()) throw DivergenceError(0, log.consensus.empty() ? 0 : log.consensus.back().iter);
  out.pooled = histogram(pooled, g.grid);
  const auto pooled_result = sinkhorn(out.pooled, out.reference, opt);
  row.d_m = pooled_result.cost;
  row.sinkhorn_converged = pooled_result.converged;

  const Vector mode1 = (Vector(2) << g.theta1, g.theta2).finished();
  const Vector mode2 = (Vector(2) << g.theta1 + g.theta2, -g.theta2).finished();
  for (std::size_t i = 0; i < n; ++i) {
    row.mass_mode1.push_back(mass_near(per_agent[i], mode1, g.mode_radius));
    row.mass_mode2.push_back(mass_near(per_agent[i], mode2, g.mode_radius));
    if (n == 1) {
      row.agent_d_m.push_back(row.d_m);
    } else {
      const auto res = sinkhorn(histogram(per_agent[i], g.grid), out.reference, opt);
      row.agent_d_m.push_back(res.cost);
      row.sinkhorn_converged = row.sinkhorn_converged && res.converged;
    }
  }
  return out;
}

}  // namespace

GmResult run_gm_experiment(const ExperimentConfig& cfg) {
  const GmSpec& g = cfg.gm;
  GmResult result;
  result.iterations = cfg.full_scale ? g.full_iterations : g.iterations;
  result.burn_in = cfg.full_scale ? g.full_burn_in : g.burn_in;
  if (result.burn_in >= result.iterations) throw InvalidParameter("gm burn-in must be below the iteration count");

  const std::size_t jobs = g.sizes.size() * cfg.replications;
  std::vector<GmRunOutput> outputs(jobs);
  parallel_for(jobs, cfg.threads, [&](std::size_t j) {
    const std::size_t size_index = j / cfg.replications;
    const std::size_t rep = j % cfg.replications;
    outputs[j] = gm_single(cfg, g.sizes[size_index], cfg.base_seed + rep, result.iterations, result.burn_in);
  });

  const double reps = static_cast<double>(cfg.replications);
  for (std::size_t s = 0; s < g.sizes.size(); ++s) {
    GmRow row = outputs[s * cfg.replications].row;
    for (std::size_t r = 1; r < cfg.replications; ++r) {
      const GmRow& other = outputs[s * cfg.replications + r].row;
      row.d_m += other.d_m;
      for (std::size_t i = 0; i < row.n; ++i) {
        row.agent_d_m[i] += other.agent_d_m[i];
        row.mass_mode1[i] += other.mass_mode1[i];
        row.mass_mode2[i] += other.mass_mode2[i];
      }
      row.sinkhorn_converged = row.sinkhorn_converged && other.sinkhorn_converged;
      if (!row.divergence) row.divergence = other.divergence;
    }
    row.d_m /= reps;
    for (std::size_t i = 0; i < row.n; ++i) {
      row.agent_d_m[i] /= reps;
      row.mass_mode1[i] /= reps;
      row.mass_mode2[i] /= reps;
    }
    if (row.beta_scale != 1.0) {
      result.notes.push_back("n=" + std::to_string(row.n) + ": beta scaled by " + format_double(row.beta_scale) +
                             " so that beta_0 * sigma_max = " + format_double(g.beta_margin));
    }
    result.notes.push_back("n=" + std::to_string(row.n) + " schedule: " + describe(row.schedule));
    result.pooled.push_back(outputs[s * cfg.replications].pooled);
    result.rows.push_back(std::move(row));
  }
  result.reference = outputs.front().reference;
  return result;
}

void write_gm_outputs(const GmResult& result, const std::filesystem::path& dir, const std::string& config_hash) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  CsvTable table;
  table.header = {"n", "engine", "d_m", "beta_scale", "samples_per_agent", "converged", "config_hash"};
  CsvTable agents;
  agents.header = {"n", "agent", "d_m", "mass_mode1", "mass_mode2", "config_hash"};
  for (const auto& row : result.rows) {
    table.rows.push_back({std::to_string(row.n), to_string(row.engine), format_double(row.d_m),
                          format_double(row.beta_scale), std::to_string(row.samples_per_agent),
                          row.sinkhorn_converged ? "1" : "0", config_hash});
    for (std::size_t i = 0; i < row.n; ++i) {
      agents.rows.push_back({std::to_string(row.n), std::to_string(i), format_double(row.agent_d_m[i]),
                             format_double(row.mass_mode1[i]), format_double(row.mass_mode2[i]), config_hash});
    }
  }
  write_csv(dir / "gm_distances.csv", table);
  write_csv(dir / "gm_agents.csv", agents);

  auto grid_table = [&](const DiscreteDistribution& d) {
    CsvTable t;
    t.header = {"x", "y", "weight", "config_hash"};
    for (Eigen::Index r = 0; r < d.points.rows(); ++r) {
      t.rows.push_back({format_double(d.points(r, 0)), format_double(d.points(r, 1)), format_double(d.weights(r)),
                        config_hash});
    }
    return t;
  };
  write_csv(dir / "posterior_reference.csv", grid_table(result.reference));
  for (std::size_t s = 0; s < result.rows.size(); ++s) {
    write_csv(dir / ("posterior_n" + std::to_string(result.rows[s].n) + ".csv"), grid_table(result.pooled[s]));
  }

  CsvTable meta;
  meta.header = {"key", "value"};
  meta.rows.push_back({"config_hash", config_hash});
  meta.rows.push_back({"iterations", std::to_string(result.iterations)});
  meta.rows.push_back({"burn_in", std::to_string(result.burn_in)});
  for (std::size_t i = 0; i < result.notes.size(); ++i) meta.rows.push_back({"note" + std::to_string(i), result.notes[i]});
  meta.rows.push_back({"timestamp", timestamp()});
  write_csv(dir / "metadata.csv", meta);
}

// ---------------------------------------------------------------------------
// Logistic regression

std::optional<std::filesystem::path> find_logreg_data(const LogregSpec& spec) {
  namespace fs = std::filesystem;
  if (!spec.data_path.empty()) {
    if (fs::exists(spec.data_path)) return fs::path(spec.data_path);
    return std::nullopt;
  }
  if (const char* env = std::getenv("DULA_DATA_DIR")) {
    for (const char* name : {"a9a", "a9a.txt", "a9a.libsvm"}) {
      const fs::path p = fs::path(env) / name;
      if (fs::exists(p)) return p;
    }
  }
  return std::nullopt;
}

Vector fit_map(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double prior_scale, std::uint64_t iterations) {
  if (x.rows() != y.size()) throw InvalidParameter("features and labels differ in count");
  if (!(prior_scale > 0.0)) throw InvalidParameter("prior scale must be positive");
  // Lipschitz constant of the logistic gradient: lambda_max(X^T X) / 4.
  const Eigen::MatrixXd gram = x.transpose() * x;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  const double lip = std::max(eig.eigenvalues().maxCoeff() / 4.0, 1e-12);
  const double step = 1.0 / lip;
  const double shrink = step / prior_scale;

  auto prox = [&](const Vector& v) {
    return v.unaryExpr([&](double t) { return t > shrink ? t - shrink : (t < -shrink ? t + shrink : 0.0); }).eval();
  };
  auto grad = [&](const Vector& w) {
    const Vector z = x * w;
    const Vector p = z.unaryExpr([](double t) { return sigmoid(t); });
    return (x.transpose() * (p - y)).eval();
  };

  Vector w = Vector::Zero(x.cols());
  Vector v = w;
  double t = 1.0;
  for (std::uint64_t it = 0; it < iterations; ++it) {
    const Vector next = prox(v - step * grad(v));
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    v = next + ((t - 1.0) / t_next) * (next - w);
    w = next;
    t = t_next;
  }
  return w;
}

namespace {

struct CurveKey {
  Engine engine;
  std::size_t agents;
};

struct LogregReplication {
  double map_accuracy = 0.0;
  double true_accuracy = 0.0;
  std::vector<std::vector<AccuracyPoint>> curves;  // per key
  std::vector<std::vector<double>> finals;         // per key, per agent
  std::vector<std::uint64_t> iterations;           // per key
};

std::vector<double> final_per_agent(const std::vector<AccuracyPoint>& curve, std::size_t agents) {
  std::vector<double> out(agents, 0.0);
  for (const auto& p : curve) out[p.agent] = p.accuracy;
  return out;
}

}  // namespace

LogregResult run_logreg_experiment(const ExperimentConfig& cfg) {
  const LogregSpec& spec = cfg.logreg;
  if (spec.batch_size == 0) throw InvalidParameter("logreg.batch_size must be positive");
  if (spec.record_every == 0) throw InvalidParameter("logreg.record_every must be positive");
  LogregResult result;

  SparseDataset data;
  std::vector<double> true_w;
  if (auto path = find_logreg_data(spec)) {
    data = load_libsvm(*path);
    result.dataset = path->string();
  } else if (spec.synthetic_fallback) {
    data = synthetic_logreg_data(spec, spec.data_seed.value_or(cfg.base_seed), &true_w);
    result.synthetic = true;
    result.dataset = "synthetic(" + std::to_string(spec.synth_rows) + "x" + std::to_string(spec.synth_dim) + ")";
    result.notes.push_back("a9a not found; using the synthetic fallback");
  } else {
    throw IoError("a9a not found (set logreg.data_path or DULA_DATA_DIR) and synthetic fallback disabled");
  }

  std::vector<CurveKey> keys;
  for (Engine e : cfg.engines) {
    if (e == Engine::kDula) {
      for (std::size_t a : spec.agents) keys.push_back({e, a});
    } else {
      keys.push_back({e, 1});
    }
  }

  std::vector<LogregReplication> reps(cfg.replications);
  parallel_for(cfg.replications, cfg.threads, [&](std::size_t r) {
    const std::uint64_t seed = cfg.base_seed + r;
    const auto [train, test] = train_test_split(data, spec.train_fraction, seed);
    const auto [test_x, test_y] = to_dense(test);
    const auto [train_x, train_y] = to_dense(train);
    LogregReplication& out = reps[r];

    PredictiveAccuracy scorer(test_x, test_y);
    out.map_accuracy = scorer.accuracy_of(fit_map(train_x, train_y, spec.prior_scale, spec.map_iterations));
    if (!true_w.empty()) {
      out.true_accuracy = scorer.accuracy_of(Eigen::Map<const Vector>(true_w.data(), static_cast<Eigen::Index>(true_w.size())));
    }

    for (const auto& key : keys) {
      const std::size_t n = key.agents;
      const Partition part = partition(train.size(), n, seed);
      BayesianLogisticRegression model(dense_shards(train, part), spec.prior_scale);
      std::size_t largest = 0;
      for (std::size_t i = 0; i < n; ++i) largest = std::max(largest, model.shard_size(i));
      const std::uint64_t per_epoch = (largest + spec.batch_size - 1) / spec.batch_size;

      RunConfig rc;
      rc.engine = key.engine;
      rc.iterations = spec.epochs * per_epoch;
      rc.burn_in = 0;
      rc.thinning = spec.record_every;
      rc.batch_size = spec.batch_size;
      rc.seed = seed;
      rc.record_every = spec.record_every;
      const StepSchedule& schedule = key.engine == Engine::kDula ? spec.dula : spec.cula;
      const Graph graph = build_graph(cfg.topology, n);
      const RunLog log = run(rc, graph, schedule, model, zeros(model.dim(), n));
      if (log.divergence) throw Error("logistic regression run diverged: " + *log.divergence);

      const std::uint64_t burn = key.engine == Engine::kSgd ? rc.iterations : spec.burn_in_epochs * per_epoch;
      out.curves.push_back(accuracy_curve(log.samples, burn, test_x, test_y));
      out.finals.push_back(final_per_agent(out.curves.back(), n));
      out.iterations.push_back(rc.iterations);
    }
  });

  for (const auto& rep : reps) {
    result.map_accuracy += rep.map_accuracy / static_cast<double>(reps.size());
    result.true_accuracy += rep.true_accuracy / static_cast<double>(reps.size());
  }

  for (std::size_t k = 0; k < keys.size(); ++k) {
    LogregCurve curve;
    curve.engine = keys[k].engine;
    curve.agents = keys[k].agents;
    curve.iterations = reps.front().iterations[k];
    std::vector<std::vector<AccuracyPoint>> runs;
    std::vector<double> rep_means;
    for (const auto& rep : reps) {
      runs.push_back(rep.curves[k]);
      const auto& f = rep.finals[k];
      curve.final_accuracy.push_back(f);
      const auto [lo, hi] = std::minmax_element(f.begin(), f.end());
      curve.worst_replication_spread = std::max(curve.worst_replication_spread, *hi - *lo);
      double m = 0.0;
      for (double v : f) m += v / static_cast<double>(f.size());
      rep_means.push_back(m);
    }
    curve.records = aggregate_accuracy(runs);
    std::vector<double> agent_means(curve.agents, 0.0);
    for (const auto& f : curve.final_accuracy) {
      for (std::size_t i = 0; i < f.size(); ++i) agent_means[i] += f[i] / static_cast<double>(reps.size());
    }
    const auto [lo, hi] = std::minmax_element(agent_means.begin(), agent_means.end());
    curve.agent_spread = *hi - *lo;
    for (double m : rep_means) curve.final_mean += m / static_cast<double>(rep_means.size());
    if (rep_means.size() > 1) {
      double ss = 0.0;
      for (double m : rep_means) ss += (m - curve.final_mean) * (m - curve.final_mean);
      curve.final_std = std::sqrt(ss / static_cast<double>(rep_means.size() - 1));
    }
    result.curves.push_back(std::move(curve));
  }
  return result;
}

void write_logreg_outputs(const LogregResult& result, const std::filesystem::path& dir,
                          const std::string& config_hash) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  CsvTable finals;
  finals.header = {"engine", "agents", "iterations", "final_mean", "final_std", "agent_spread", "worst_replication_spread",
                   "map_accuracy",
                   "config_hash"};
  for (const auto& c : result.curves) {
    CsvTable t;
    t.header = {"iter", "agent", "mean_acc", "std_acc", "config_hash"};
    for (const auto& a : c.records) {
      t.rows.push_back({std::to_string(a.iter), std::to_string(a.agent), format_double(a.mean_acc),
                        format_double(a.std_acc), config_hash});
    }
    write_csv(dir / ("accuracy_" + std::string(to_string(c.engine)) + "_n" + std::to_string(c.agents) + ".csv"), t);
    finals.rows.push_back({to_string(c.engine), std::to_string(c.agents), std::to_string(c.iterations),
                           format_double(c.final_mean), format_double(c.final_std), format_double(c.agent_spread),
                           format_double(c.worst_replication_spread), format_double(result.map_accuracy), config_hash});
  }
  write_csv(dir / "logreg_final.csv", finals);

  CsvTable meta;
  meta.header = {"key", "value"};
  meta.rows.push_back({"config_hash", config_hash});
  meta.rows.push_back({"dataset", result.dataset});
  meta.rows.push_back({"synthetic", result.synthetic ? "1" : "0"});
  meta.rows.push_back({"map_accuracy", format_double(result.map_accuracy)});
  if (result.synthetic) meta.rows.push_back({"true_weight_accuracy", format_double(result.true_accuracy)});
  for (std::size_t i = 0; i < result.notes.size(); ++i) meta.rows.push_back({"note" + std::to_string(i), result.notes[i]});
  meta.rows.push_back({"timestamp", timestamp()});
  write_csv(dir / "metadata.csv", meta);
}

}  // namespace dula
