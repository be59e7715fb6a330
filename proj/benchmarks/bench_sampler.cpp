#include <benchmark/benchmark.h>

#include "dula/models.hpp"
#include "dula/sampler.hpp"
#include "dula/topology.hpp"

using namespace dula;

namespace {

StepSchedule schedule() {
  StepSchedule s;
  s.a = 0.01;
  s.b = 0.2;
  s.delta1 = 0.05;
  s.delta2 = 0.7;
  return s;
}

void BM_DulaStepMixture(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(0, 0, StreamPurpose::kData);
  std::vector<std::vector<double>> shards(n);
  for (auto& s : shards) s = generate_gm_data(rng, 100 / n, 0.0, 1.0);
  const GaussianMixtureTiedMeans model(shards);
  const Graph g = n == 1 ? Graph(1, {}) : ring(n);
  NetworkState s(Eigen::MatrixXd::Zero(2, static_cast<Eigen::Index>(n)), 1);
  for (auto _ : state) dula_step(s, g, schedule(), model);
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_DulaStepMixture)->Arg(1)->Arg(5)->Arg(10);

void BM_DulaStepLogistic(benchmark::State& state) {
  Rng rng(0, 0, StreamPurpose::kData);
  std::vector<BayesianLogisticRegression::Shard> shards(5);
  for (auto& sh : shards) {
    sh.features.resize(1600, 123);
    sh.labels.resize(1600);
    for (Eigen::Index i = 0; i < sh.features.size(); ++i) sh.features.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < sh.labels.size(); ++i) sh.labels(i) = rng.coin() ? 1.0 : 0.0;
  }
  const BayesianLogisticRegression model(shards);
  const Graph g = ring(5);
  NetworkState s(Eigen::MatrixXd::Zero(123, 5), 1);
  StepOptions opt;
  opt.batch_size = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) dula_step(s, g, schedule(), model, opt);
}
BENCHMARK(BM_DulaStepLogistic)->Arg(10)->Arg(100);

}  // namespace
