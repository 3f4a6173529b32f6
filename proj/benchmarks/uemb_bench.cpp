// Copyright 2026 The uemb Authors. All Rights Reserved.
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

#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "uemb/gradcheck.hpp"
#include "uemb/kernels.hpp"
#include "uemb/model.hpp"
#include "uemb/objective.hpp"
#include "uemb/random.hpp"

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  uemb::Rng rng = uemb::make_rng(seed, {});
  std::vector<double> v(n);
  for (double& x : v) x = uemb::standard_normal(rng);
  return v;
}

void BM_GemmNN(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(n * n, 1);
  const auto b = random_values(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    uemb::kernels::gemm_nn(a, b, c, n, n, n);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_GemmNN)->Arg(32)->Arg(64)->Arg(128);

void BM_GemmNT(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(n * n, 3);
  const auto b = random_values(n * n, 4);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    uemb::kernels::gemm_nt(a, b, c, n, n, n);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_GemmNT)->Arg(64);

void BM_Forward(benchmark::State& state) {
  const uemb::ModelConfig cfg;
  const uemb::Parameters p = uemb::init_parameters(cfg, 0);
  uemb::Rng rng = uemb::make_rng(5, {});
  std::vector<int> ids{uemb::token_ids::bos_query};
  for (std::int64_t i = 0; i < state.range(0); ++i) {
    ids.push_back(static_cast<int>(uemb::token_ids::reserved_count +
                                   uemb::uniform_index(rng, cfg.vocab_size -
                                                                uemb::token_ids::reserved_count)));
  }
  ids.push_back(uemb::token_ids::eos_query);
  for (auto _ : state) {
    auto h = uemb::forward(p, ids);
    benchmark::DoNotOptimize(h);
  }
}
BENCHMARK(BM_Forward)->Arg(16)->Arg(62);

void BM_GradCacheStep(benchmark::State& state) {
  const uemb::ModelConfig cfg;
  uemb::Rng rng = uemb::make_rng(6, {});
  const uemb::AdapterConfig ac{uemb::AdapterMode::lora, 8, 8.0};
  const uemb::Parameters p = uemb::attach_lora(uemb::init_parameters(cfg, 6), ac, rng);
  const auto batch = uemb::random_instances(rng, 8, 7, 16, cfg.vocab_size);
  const auto trainable = uemb::trainable_set(p, ac);
  const auto chunk = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    auto g = uemb::grad_cache_gradients(p, batch, chunk, trainable, 0.05);
    benchmark::DoNotOptimize(g.loss);
  }
}
BENCHMARK(BM_GradCacheStep)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
