#include <benchmark/benchmark.h>

#include "dula/diagnostics.hpp"

using namespace dula;

namespace {

DiscreteDistribution cloud(Eigen::Index m, std::uint64_t seed) {
  Rng rng(seed, 0, StreamPurpose::kInit);
  Eigen::MatrixXd x(m, 2);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  return DiscreteDistribution::make(x, Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m)));
}

void BM_Sinkhorn(benchmark::State& state) {
  const auto p = cloud(state.range(0), 1);
  const auto q = cloud(state.range(0), 2);
  SinkhornOptions opt;
  opt.lambda = 0.1;
  for (auto _ : state) benchmark::DoNotOptimize(sinkhorn_distance(p, q, opt));
}
BENCHMARK(BM_Sinkhorn)->Arg(64)->Arg(256)->Arg(1024);

void BM_ConsensusError(benchmark::State& state) {
  Rng rng(3, 0, StreamPurpose::kInit);
  Eigen::MatrixXd w(123, state.range(0));
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(consensus_error(w));
}
BENCHMARK(BM_ConsensusError)->Arg(5)->Arg(50);

}  // namespace
