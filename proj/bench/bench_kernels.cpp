// Copyright 2026 The MalLight Authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Serial versus OpenMP kernels on the shapes the diffusion path uses, plus
// one simulated decision interval and one agent update for scale.

#include <benchmark/benchmark.h>

#include <random>

#include "mallight/diffusion.hpp"
#include "mallight/harness.hpp"
#include "mallight/kernels.hpp"
#include "mallight/rl.hpp"

using namespace mallight;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix m(r, c);
  for (double& v : m.data()) v = u(rng);
  return m;
}

template <Matrix (*F)(const Matrix&, const Matrix&)>
void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n, n, 1);
  const auto b = random_matrix(n, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(F(a, b));
  state.SetComplexityN(state.range(0));
}

template <Matrix (*F)(std::span<const Matrix>, std::span<const double>)>
void BM_WeightedSum(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<Matrix> terms;
  for (int k = 0; k < 10; ++k) terms.push_back(random_matrix(n, 20, 10 + k));
  const std::vector<double> w(10, 0.1);
  for (auto _ : state) benchmark::DoNotOptimize(F(terms, w));
}

void BM_DiffusionTerms(benchmark::State& state) {
  const auto g = generate_grid(static_cast<int>(state.range(0)), static_cast<int>(state.range(0)),
                               300.0);
  const auto t = transition_matrix(build_edge_weights(g, default_sigma(g)));
  const DiffusionOperator op(t, MalfunctionMask::all(g.size()), 10);
  const auto s = random_matrix(g.size(), 20, 3);
  for (auto _ : state) benchmark::DoNotOptimize(diffusion_terms(s, op));
}

void BM_SimulatorStep(benchmark::State& state) {
  const auto g = generate_grid(4, 4, 300.0);
  const auto flow = generate_flow(g, FlowSpec{1200.0, 7200.0, OdPolicy::All, 1});
  Simulation sim(g, flow, SimConfig{});
  sim.inject_malfunction({5});
  std::vector<Phase> phases(16, Phase(0));
  phases[5] = Phase::off();
  int step = 0;
  for (auto _ : state) {
    for (std::size_t i = 0; i < 16; ++i)
      if (i != 5) phases[i] = Phase(step % kPhaseCount);
    benchmark::DoNotOptimize(sim.step(phases));
    if (++step == 700) {
      state.PauseTiming();
      sim = Simulation(g, flow, SimConfig{});
      sim.inject_malfunction({5});
      step = 0;
      state.ResumeTiming();
    }
  }
}

void BM_AgentUpdate(benchmark::State& state) {
  const auto g = generate_grid(4, 4, 300.0);
  const auto t = transition_matrix(build_edge_weights(g, default_sigma(g)));
  Agent agent(AgentConfig::mallight(), t);
  agent.set_malfunction({5});
  const auto flow = generate_flow(g, FlowSpec{1200.0, 600.0, OdPolicy::All, 1});
  Simulation sim(g, flow, SimConfig{});
  sim.inject_malfunction({5});
  std::vector<Transition> trans;
  rollout(sim, agent, 1.0, 300.0, nullptr, [&](const Transition& x) { trans.push_back(x); });
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(agent.update(trans[i], 0.95));
    i = (i + 1) % trans.size();
  }
}

}  // namespace

BENCHMARK(BM_Matmul<kernels::serial::matmul>)->Name("matmul/serial")->RangeMultiplier(4)->Range(16, 256);
BENCHMARK(BM_Matmul<kernels::omp::matmul>)->Name("matmul/omp")->RangeMultiplier(4)->Range(16, 256);
BENCHMARK(BM_WeightedSum<kernels::serial::weighted_sum>)->Name("weighted_sum/serial")->Arg(16)->Arg(256)->Arg(4096);
BENCHMARK(BM_WeightedSum<kernels::omp::weighted_sum>)->Name("weighted_sum/omp")->Arg(16)->Arg(256)->Arg(4096);
BENCHMARK(BM_DiffusionTerms)->Arg(4)->Arg(8)->Arg(16);
BENCHMARK(BM_SimulatorStep);
BENCHMARK(BM_AgentUpdate);

BENCHMARK_MAIN();
