#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dula/config.hpp"
#include "dula/csv.hpp"
#include "dula/error.hpp"
#include "dula/harness.hpp"

using namespace dula;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("dula_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

TEST(Config, ParsesSectionsListsAndComments) {
  const auto c = Config::parse_string(R"(
# top comment
[run]
iterations = 2e5   # trailing
engine = "dula"
[topology]
edges = [[0,1], [1, 2]]
[gm]
sizes = [1, 5, 10]
flag = true
)");
  EXPECT_EQ(c.get_uint("run.iterations"), 200000u);
  EXPECT_EQ(c.get_string("run.engine"), "dula");
  EXPECT_EQ(c.get_list("gm.sizes"), (std::vector<double>{1, 5, 10}));
  const auto pairs = c.get_pairs("topology.edges");
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[1], (std::pair<std::size_t, std::size_t>{1, 2}));
  EXPECT_TRUE(c.get_bool("gm.flag", false));
  EXPECT_EQ(c.get_double("missing", 3.5), 3.5);
}

TEST(Config, ErrorsCarryLineNumbers) {
  try {
    Config::parse_string("a = 1\nb = 2\na = 3\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  EXPECT_THROW(Config::parse_string("just words\n"), ParseError);
  const auto c = Config::parse_string("x = abc\n");
  EXPECT_THROW(c.get_double("x"), Error);
  EXPECT_THROW(c.get_double("y"), Error);
  EXPECT_THROW(Config::load("/nonexistent/dula.cfg"), IoError);
}

TEST(Config, HashIgnoresOrderAndFormatting) {
  const auto a = Config::parse_string("[run]\nseed = 1\niterations = 10\n");
  const auto b = Config::parse_string("run.iterations=10\n# note\nrun.seed   =   1\n");
  const auto c = Config::parse_string("run.iterations=11\nrun.seed=1\n");
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_NE(a.hash(), c.hash());
  EXPECT_EQ(a.hash().size(), 16u);
}

TEST(Config, Fnv1aKnownAnswers) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(Config, UnknownKeysAreReported) {
  const auto c = Config::parse_string("run.iterations = 10\nrun.iteratons = 20\n");
  std::vector<std::string> warnings;
  const auto e = experiment_config(c, &warnings);
  EXPECT_EQ(e.run.iterations, 10u);
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("run.iteratons"), std::string::npos);
}

TEST(ExperimentConfigTest, ShiftedScheduleAliases) {
  const auto c = Config::parse_string("schedule.alpha0 = 0.5\nschedule.b1 = 11\nschedule.delta2 = 0.6\n");
  const auto e = experiment_config(c);
  EXPECT_DOUBLE_EQ(e.schedule.a, 0.5);
  EXPECT_DOUBLE_EQ(e.schedule.offset2, 10.0);
  EXPECT_NEAR(e.schedule.alpha(0), 0.5 / std::pow(11.0, 0.6), 1e-15);
}

TEST(ExperimentConfigTest, CheckFlagsProblems) {
  auto c = Config::parse_string(
      "topology = \"edges\"\ntopology.n = 4\ntopology.edges = [[0,1],[2,3]]\n"
      "schedule.a = 0.1\nschedule.b = 0.1\nschedule.delta1 = 0.05\nschedule.delta2 = 0.55\n");
  auto r = check(experiment_config(c));
  EXPECT_FALSE(r.ok);

  c = Config::parse_string("topology.n = 5\nschedule.a = 0.1\nschedule.b = 0.1\nschedule.delta1 = 0.05\n"
                           "schedule.delta2 = 0.55\n");
  r = check(experiment_config(c));
  EXPECT_TRUE(r.ok);
  EXPECT_FALSE(r.warnings.empty());  // delta2 on the 0.5 + 2 delta1 boundary

  c = Config::parse_string("topology.n = 5\nschedule.a = -1\n");
  EXPECT_FALSE(check(experiment_config(c)).ok);

  c = Config::parse_string("topology.n = 5\nschedule.b = 0.9\nschedule.delta1 = 0.05\nschedule.delta2 = 0.75\n");
  r = check(experiment_config(c));
  EXPECT_TRUE(r.ok);
  EXPECT_FALSE(r.warnings.empty());  // 0.9 * 4 > 1
}

// ---------------------------------------------------------------------------
// CSV

TEST(Csv, ShortestRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 0.0, 123456.789}) {
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(format_double(0.5), "0.5");
  EXPECT_EQ(format_double(std::nan("")), "nan");
}

TEST(Csv, EmitAndReadBack) {
  RunLog log;
  log.metadata["config_hash"] = "0123456789abcdef";
  log.metadata["dim"] = "2";
  log.samples.push_back({10, 0, Eigen::Vector2d(0.1, -1.0 / 3.0)});
  log.samples.push_back({10, 1, Eigen::Vector2d(2.0, 1e-17)});
  log.consensus.push_back({5, 0.25, 1.5});
  log.accuracy.push_back({10, 1, 0.875, 0.01});
  const auto dir = scratch_dir("emit");
  emit_csv(log, dir);

  const auto samples = read_samples(dir / "samples.csv");
  ASSERT_EQ(samples.size(), 2u);
  EXPECT_EQ(samples[0].w, log.samples[0].w);
  EXPECT_EQ(samples[1].w, log.samples[1].w);
  EXPECT_EQ(samples[1].agent, 1u);
  const auto cons = read_consensus(dir / "consensus.csv");
  ASSERT_EQ(cons.size(), 1u);
  EXPECT_EQ(cons[0].error_sq, 0.25);
  EXPECT_EQ(cons[0].bound, 1.5);
  const auto acc = read_accuracy(dir / "accuracy.csv");
  ASSERT_EQ(acc.size(), 1u);
  EXPECT_EQ(acc[0].mean_acc, 0.875);

  const auto table = read_csv(dir / "samples.csv");
  const auto hash_col = table.column("config_hash");
  EXPECT_EQ(hash_col, table.header.size() - 1);
  for (const auto& row : table.rows) EXPECT_EQ(row[hash_col], "0123456789abcdef");
  EXPECT_EQ(slurp(dir / "samples.csv").find('\r'), std::string::npos);
}

TEST(Csv, EmptyLogStillWritesHeaders) {
  RunLog log;
  log.metadata["dim"] = "3";
  const auto dir = scratch_dir("empty");
  emit_csv(log, dir);
  const auto table = read_csv(dir / "samples.csv");
  EXPECT_EQ(table.header,
            (std::vector<std::string>{"iter", "agent", "w0", "w1", "w2", "config_hash"}));
  EXPECT_TRUE(table.rows.empty());
  EXPECT_TRUE(read_consensus(dir / "consensus.csv").empty());
}

TEST(Csv, MissingColumnAndUnwritablePath) {
  std::istringstream in("a,b\n1,2\n");
  const auto t = read_csv(in);
  EXPECT_EQ(t.column("b"), 1u);
  EXPECT_THROW(t.column("c"), ParseError);
  EXPECT_THROW(write_csv("/nonexistent/dir/x.csv", t), IoError);
}

// ---------------------------------------------------------------------------
// Harness

TEST(ParallelFor, VisitsEveryIndexOnce) {
  std::vector<std::atomic<int>> hits(100);
  parallel_for(100, 4, [&](std::size_t i) { ++hits[i]; });
  for (auto& h : hits) EXPECT_EQ(h.load(), 1);
}

TEST(ParallelFor, RethrowsLowestIndexError) {
  try {
    parallel_for(10, 3, [](std::size_t i) {
      if (i == 7 || i == 4) throw InvalidParameter("job " + std::to_string(i));
    });
    FAIL();
  } catch (const InvalidParameter& e) {
    EXPECT_STREQ(e.what(), "job 4");
  }
}

TEST(ScheduleFromEndpoints, HitsEndpoints) {
  const auto s = schedule_from_endpoints(0.01, 1e-4, 0.55, 0.36, 0.24, 0.05, 200000);
  EXPECT_NEAR(s.alpha(0), 0.01, 1e-14);
  EXPECT_NEAR(s.alpha(199999), 1e-4, 1e-16);
  EXPECT_NEAR(s.beta(0), 0.36, 1e-14);
  EXPECT_NEAR(s.beta(199999), 0.24, 1e-14);
  for (std::uint64_t k = 1; k < 200000; k *= 3) EXPECT_LT(s.alpha(k), s.alpha(k - 1));
  EXPECT_THROW(schedule_from_endpoints(1e-4, 0.01, 0.55, 0.36, 0.24, 0.05, 100), InvalidParameter);
}

TEST(BuildGraph, SingleNodeAndEdges) {
  TopologySpec spec;
  EXPECT_EQ(build_graph(spec, 1).size(), 1u);
  EXPECT_EQ(build_graph(spec, 6).edges().size(), 6u);
  spec.kind = "edges";
  spec.n = 3;
  spec.edges = {{0, 1}, {1, 2}};
  EXPECT_EQ(build_graph(spec, 3).edges().size(), 2u);
}

TEST(FitMap, SoftThresholdStationarity) {
  Rng rng(3, 0, StreamPurpose::kData);
  Eigen::MatrixXd x(200, 4);
  Eigen::VectorXd y(200);
  for (int r = 0; r < 200; ++r) {
    for (int j = 0; j < 4; ++j) x(r, j) = rng.normal();
    y(r) = rng.uniform() < sigmoid(1.5 * x(r, 0) - x(r, 1)) ? 1.0 : 0.0;
  }
  const Vector w = fit_map(x, y, 1.0, 5000);
  // Subgradient optimality: |grad nll_j| <= 1 where w_j == 0, == -sign(w_j) elsewhere.
  Vector grad = Vector::Zero(4);
  for (int r = 0; r < 200; ++r) grad -= (y(r) - sigmoid(x.row(r).dot(w))) * x.row(r).transpose();
  for (int j = 0; j < 4; ++j) {
    if (w(j) == 0.0) {
      EXPECT_LE(std::abs(grad(j)), 1.0 + 1e-6);
    } else {
      EXPECT_NEAR(grad(j), w(j) > 0 ? -1.0 : 1.0, 1e-4);
    }
  }
  EXPECT_GT(w(0), 0.5);
  EXPECT_LT(w(1), -0.3);
}

TEST(RunCustom, QuadraticRunIsDeterministic) {
  const auto c = Config::parse_string(
      "model = \"quadratic\"\nmodel.dim = 2\ntopology.n = 4\nrun.iterations = 500\nrun.burn_in = 100\n"
      "run.thinning = 10\nschedule.a = 0.05\nschedule.b = 0.2\nschedule.delta1 = 0.05\nschedule.delta2 = 0.7\n");
  const auto cfg = experiment_config(c);
  const auto a = run_custom(cfg, 3);
  const auto b = run_custom(cfg, 3);
  ASSERT_EQ(a.samples.size(), 40u * 4u);
  for (std::size_t i = 0; i < a.samples.size(); ++i) ASSERT_EQ(a.samples[i].w, b.samples[i].w);
  EXPECT_EQ(a.metadata.at("config_hash"), c.hash());
}

TEST(RunCustom, TheoryFillsBounds) {
  const auto c = Config::parse_string(
      "model = \"quadratic\"\ntopology.n = 4\nrun.iterations = 200\nrun.record_every = 50\n"
      "schedule.a = 0.05\nschedule.b = 0.2\nschedule.delta1 = 0.05\nschedule.delta2 = 0.7\ntheory.mu_g = 0.1\n");
  const auto log = run_custom(experiment_config(c), 1);
  ASSERT_EQ(log.consensus.size(), 4u);
  for (const auto& r : log.consensus) {
    EXPECT_TRUE(std::isfinite(r.bound));
    EXPECT_LE(r.error_sq, r.bound);
  }
}

TEST(GmExperiment, IndependentOfThreadCount) {
  auto c = Config::parse_string(
      "experiment.kind = \"gm\"\nexperiment.replications = 2\ngm.sizes = [1, 3]\ngm.iterations = 4000\n"
      "gm.burn_in = 1000\ngm.grid_resolution = 0.2\n");
  auto cfg = experiment_config(c);
  cfg.threads = 1;
  const auto one = run_gm_experiment(cfg);
  cfg.threads = 4;
  const auto four = run_gm_experiment(cfg);
  ASSERT_EQ(one.rows.size(), 2u);
  for (std::size_t r = 0; r < 2; ++r) {
    EXPECT_EQ(one.rows[r].d_m, four.rows[r].d_m);
    EXPECT_EQ(one.rows[r].mass_mode1, four.rows[r].mass_mode1);
    EXPECT_EQ(one.rows[r].samples_per_agent, 300u);
  }
  EXPECT_EQ(one.rows[0].engine, Engine::kCula);
  EXPECT_EQ(one.rows[1].engine, Engine::kDula);

  const auto dir = scratch_dir("gm");
  write_gm_outputs(one, dir, cfg.config_hash);
  EXPECT_TRUE(fs::exists(dir / "gm_distances.csv"));
  EXPECT_TRUE(fs::exists(dir / "posterior_reference.csv"));
  EXPECT_TRUE(fs::exists(dir / "posterior_n3.csv"));
  EXPECT_EQ(read_csv(dir / "gm_distances.csv").rows.size(), 2u);
}

TEST(LogregExperiment, SmallSyntheticRun) {
  auto c = Config::parse_string(
      "experiment.kind = \"logreg\"\nexperiment.replications = 2\nlogreg.synth_rows = 400\n"
      "logreg.synth_dim = 5\nlogreg.agents = [2]\nlogreg.epochs = 3\nlogreg.burn_in_epochs = 1\n"
      "logreg.synth_weight_scale = 1.0\n");
  auto cfg = experiment_config(c);
  cfg.threads = 1;
  const auto one = run_logreg_experiment(cfg);
  cfg.threads = 3;
  const auto three = run_logreg_experiment(cfg);
  EXPECT_TRUE(one.synthetic);
  ASSERT_EQ(one.curves.size(), 2u);
  for (std::size_t i = 0; i < one.curves.size(); ++i) {
    EXPECT_EQ(one.curves[i].final_mean, three.curves[i].final_mean);
    EXPECT_EQ(one.curves[i].final_accuracy.size(), 2u);
    EXPECT_GT(one.curves[i].final_mean, 0.6);
  }
  EXPECT_GT(one.map_accuracy, 0.6);

  const auto dir = scratch_dir("logreg");
  write_logreg_outputs(one, dir, cfg.config_hash);
  EXPECT_TRUE(fs::exists(dir / "logreg_final.csv"));
  EXPECT_TRUE(fs::exists(dir / "accuracy_dula_n2.csv"));
  EXPECT_TRUE(fs::exists(dir / "accuracy_cula_n1.csv"));
}

TEST(LogregExperiment, MissingDataWithoutFallback) {
  auto c = Config::parse_string("experiment.kind = \"logreg\"\ndata.path = \"/nonexistent/a9a\"\n"
                                "logreg.synthetic_fallback = false\n");
  EXPECT_THROW(run_logreg_experiment(experiment_config(c)), IoError);
}
