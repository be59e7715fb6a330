#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "dula/config.hpp"
#include "dula/csv.hpp"
#include "dula/diagnostics.hpp"
#include "dula/error.hpp"
#include "dula/harness.hpp"

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::optional<std::size_t> replications;
  bool full_scale = false;
};

dula::ExperimentConfig load(const Common& opts, dula::ExperimentKind fallback) {
  dula::Config cfg;
  if (!opts.config.empty()) cfg = dula::Config::load(opts.config);
  if (!cfg.has("experiment.kind")) {
    cfg.set("experiment.kind", fallback == dula::ExperimentKind::kGm       ? "gm"
                               : fallback == dula::ExperimentKind::kLogreg ? "logreg"
                                                                           : "custom");
  }
  std::vector<std::string> warnings;
  auto e = dula::experiment_config(cfg, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
  if (opts.seed) {
    e.base_seed = *opts.seed;
    e.run.seed = *opts.seed;
  }
  if (opts.threads) e.threads = *opts.threads;
  if (opts.replications) e.replications = *opts.replications;
  if (opts.full_scale) e.full_scale = true;
  return e;
}

void report(const dula::ValidationReport& r) {
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
  for (const auto& e : r.errors) std::cerr << "error: " << e << '\n';
}

int cmd_gm(const dula::ExperimentConfig& e, const fs::path& out) {
  const auto result = dula::run_gm_experiment(e);
  dula::write_gm_outputs(result, out, e.config_hash);
  for (const auto& note : result.notes) std::cerr << "note: " << note << '\n';
  std::cout << "n,engine,d_m,min_mode_mass\n";
  for (const auto& row : result.rows) {
    double min_mass = 1.0;
    for (std::size_t i = 0; i < row.n; ++i) min_mass = std::min({min_mass, row.mass_mode1[i], row.mass_mode2[i]});
    std::cout << row.n << ',' << dula::to_string(row.engine) << ',' << dula::format_double(row.d_m) << ','
              << dula::format_double(min_mass) << '\n';
  }
  return 0;
}

int cmd_logreg(const dula::ExperimentConfig& e, const fs::path& out) {
  const auto result = dula::run_logreg_experiment(e);
  dula::write_logreg_outputs(result, out, e.config_hash);
  for (const auto& note : result.notes) std::cerr << "note: " << note << '\n';
  std::cout << "dataset: " << result.dataset << "\nmap_accuracy: " << dula::format_double(result.map_accuracy)
            << "\nengine,agents,final_mean,final_std,agent_spread\n";
  for (const auto& c : result.curves) {
    std::cout << dula::to_string(c.engine) << ',' << c.agents << ',' << dula::format_double(c.final_mean) << ','
              << dula::format_double(c.final_std) << ',' << dula::format_double(c.agent_spread) << '\n';
  }
  return 0;
}

std::string read_meta(const fs::path& dir, const std::string& key) {
  const auto t = dula::read_csv(dir / "metadata.csv");
  const auto k = t.column("key");
  const auto v = t.column("value");
  for (const auto& row : t.rows) {
    if (row[k] == key) return row[v];
  }
  throw dula::ParseError(0, "metadata.csv has no '" + key + "'");
}

int cmd_diagnose(const dula::ExperimentConfig& e, const fs::path& run_dir, const fs::path& out, double lambda) {
  fs::create_directories(out);

  // Consensus bounds.
  dula::CsvTable bounds;
  bounds.header = {"iter", "error_sq", "bound", "merged_bound", "below", "config_hash"};
  const auto consensus = dula::read_consensus(run_dir / "consensus.csv");
  const std::size_t n = e.topology.n;
  std::optional<dula::ConsensusBoundConstants> constants;
  if (e.theory && n > 1) {
    try {
      const dula::Graph g = dula::build_graph(e.topology, n);
      constants = dula::bound_constants(g, e.schedule, e.theory->mu_g, e.model_dim, 0.0);
    } catch (const dula::BoundUnavailable& err) {
      std::cerr << "warning: consensus bound unavailable: " << err.what() << '\n';
    }
  } else {
    std::cerr << "warning: no theory.mu_g configured; bounds.csv carries NaN bounds\n";
  }
  for (const auto& rec : consensus) {
    double two = std::nan("");
    double merged = std::nan("");
    if (constants) {
      const auto b = dula::consensus_bound(*constants, rec.iter);
      two = b.two_term;
      merged = b.merged;
    }
    bounds.rows.push_back({std::to_string(rec.iter), dula::format_double(rec.error_sq), dula::format_double(two),
                           dula::format_double(merged), std::isnan(two) ? "" : (rec.error_sq <= two ? "1" : "0"),
                           e.config_hash});
  }
  dula::write_csv(out / "bounds.csv", bounds);

  // Sinkhorn distances of 2-D samples to the mixture reference posterior.
  dula::CsvTable sink;
  sink.header = {"agent", "samples", "d_m", "converged", "config_hash"};
  const auto samples = dula::read_samples(run_dir / "samples.csv");
  if (e.model == "gm" && !samples.empty() && samples.front().w.size() == 2) {
    const std::uint64_t seed = std::stoull(read_meta(run_dir, "seed"));
    dula::Rng data_rng(seed, 0, dula::StreamPurpose::kData);
    const auto data = dula::generate_gm_data(data_rng, e.gm.data_points, e.gm.theta1, e.gm.theta2,
                                             e.gm.hyper.sigmax_sq);
    const dula::GaussianMixtureTiedMeans model({data}, e.gm.hyper);
    const auto reference = dula::gm_reference_posterior(model, e.gm.grid);
    dula::SinkhornOptions opt;
    opt.lambda = lambda;

    std::map<std::size_t, std::vector<dula::Vector>> per_agent;
    std::vector<dula::Vector> pooled;
    for (const auto& s : samples) {
      per_agent[s.agent].push_back(s.w);
      pooled.push_back(s.w);
    }
    auto emit = [&](const std::string& label, const std::vector<dula::Vector>& xs) {
      const auto res = dula::sinkhorn(dula::histogram(xs, e.gm.grid), reference, opt);
      sink.rows.push_back({label, std::to_string(xs.size()), dula::format_double(res.cost),
                           res.converged ? "1" : "0", e.config_hash});
    };
    for (const auto& [agent, xs] : per_agent) emit(std::to_string(agent), xs);
    emit("pooled", pooled);
  } else {
    std::cerr << "note: sinkhorn.csv needs 2-D samples of the mixture model; writing header only\n";
  }
  dula::write_csv(out / "sinkhorn.csv", sink);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decentralized unadjusted Langevin sampler"};
  app.require_subcommand(1);

  Common opts;
  auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* c = sub->add_option("--config,-c", opts.config, "configuration file");
    if (config_required) {
      c->required()->check(CLI::ExistingFile);
    } else {
      c->check(CLI::ExistingFile);
    }
    sub->add_option("--out,-o", opts.out, "output directory");
    sub->add_option("--seed", opts.seed, "base seed");
    sub->add_option("--threads", opts.threads, "worker threads (0 = auto)");
  };

  auto* run = app.add_subcommand("run", "run the configured sampler once and write CSV logs");
  add_common(run, true);

  auto* validate = app.add_subcommand("validate", "check schedule, connectivity and b-admissibility");
  add_common(validate, true);

  auto* gm = app.add_subcommand("gm-experiment", "Gaussian mixture posterior experiment");
  add_common(gm, false);
  gm->add_option("--replications", opts.replications, "replications");
  gm->add_flag("--full-scale", opts.full_scale, "run the full-length chains");

  auto* logreg = app.add_subcommand("logreg-experiment", "Bayesian logistic regression experiment");
  add_common(logreg, false);
  logreg->add_option("--replications", opts.replications, "replications");

  std::string run_dir;
  double lambda = 0.1;
  auto* diagnose = app.add_subcommand("diagnose", "consensus bounds and Sinkhorn distances of a run directory");
  add_common(diagnose, true);
  diagnose->get_option("--out")->description("output directory (default: the run directory)");
  diagnose->add_option("--run", run_dir, "directory holding samples.csv and consensus.csv")
      ->required()
      ->check(CLI::ExistingDirectory);
  diagnose->add_option("--lambda", lambda, "Sinkhorn entropic weight");

  CLI11_PARSE(app, argc, argv);

  try {
    const fs::path out(opts.out);
    if (*validate) {
      const auto e = load(opts, dula::ExperimentKind::kCustom);
      const auto r = dula::check(e);
      report(r);
      std::cout << (r.ok ? "ok" : "invalid") << '\n';
      return r.ok ? 0 : 1;
    }
    if (*run) {
      const auto e = load(opts, dula::ExperimentKind::kCustom);
      const auto r = dula::check(e);
      report(r);
      if (!r.ok) return 1;
      if (e.kind == dula::ExperimentKind::kGm) return cmd_gm(e, out);
      if (e.kind == dula::ExperimentKind::kLogreg) return cmd_logreg(e, out);
      const auto log = dula::run_custom(e, e.run.seed);
      dula::emit_csv(log, out);
      if (log.divergence) {
        std::cerr << "diverged: " << *log.divergence << '\n';
        return 2;
      }
      std::cout << "wrote " << out.string() << '\n';
      return 0;
    }
    if (*gm) return cmd_gm(load(opts, dula::ExperimentKind::kGm), out);
    if (*logreg) return cmd_logreg(load(opts, dula::ExperimentKind::kLogreg), out);
    if (*diagnose) {
      const fs::path target = diagnose->count("--out") ? out : fs::path(run_dir);
      return cmd_diagnose(load(opts, dula::ExperimentKind::kCustom), run_dir, target, lambda);
    }
  } catch (const dula::Error& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
  return 0;
}
