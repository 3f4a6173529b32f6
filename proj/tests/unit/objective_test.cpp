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

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "uemb/errors.hpp"
#include "uemb/gradcheck.hpp"
#include "uemb/objective.hpp"

namespace uemb {
namespace {

using testing::random_matrix;
using testing::tiny_model_config;

std::vector<double> vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

// Unit vector at angle theta in the plane spanned by the first two axes.
std::vector<double> at_angle(double theta, std::size_t d = 4) {
  std::vector<double> v(d, 0.0);
  v[0] = std::cos(theta);
  v[1] = std::sin(theta);
  return v;
}

double naive_infonce(const std::vector<double>& a, const std::vector<double>& p,
                     const std::vector<std::vector<double>>& negs, double tau) {
  auto cos = [](const std::vector<double>& x, const std::vector<double>& y) {
    long double dot = 0, nx = 0, ny = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      dot += x[i] * y[i];
      nx += x[i] * x[i];
      ny += y[i] * y[i];
    }
    return static_cast<double>(dot / std::sqrt(nx * ny));
  };
  long double denom = std::exp(static_cast<long double>(cos(a, p) / tau));
  for (const auto& n : negs) denom += std::exp(static_cast<long double>(cos(a, n) / tau));
  return static_cast<double>(-(cos(a, p) / tau) + std::log(denom));
}

TEST(ScoreTest, IdenticalOrthogonalOpposite) {
  const std::vector<double> x{1, 2, 3}, y{-2, 1, 0};
  EXPECT_DOUBLE_EQ(score(x, x, 0.05), 20.0);
  EXPECT_EQ(score(x, y, 0.05), 0.0);
  const std::vector<double> nx{-1, -2, -3};
  EXPECT_DOUBLE_EQ(score(x, nx, 0.05), -20.0);
}

TEST(ScoreTest, ZeroVectorIsContractError) {
  const std::vector<double> x{1, 2}, z{0, 0};
  EXPECT_THROW(score(x, z, 0.05), ContractError);
  EXPECT_THROW(cosine(z, x), ContractError);
}

TEST(ScoreTest, SymmetricAndScaleInvariantProperty) {
  Rng rng = make_rng(41);
  for (int trial = 0; trial < 200; ++trial) {
    const Tensor a = random_matrix(rng, 1, 6), b = random_matrix(rng, 1, 6);
    Tensor c = b;
    const double k = 0.01 + 100 * uniform_unit(rng);
    for (double& v : c.values()) v *= k;
    EXPECT_EQ(score(a.values(), b.values(), 0.05), score(b.values(), a.values(), 0.05));
    EXPECT_NEAR(score(a.values(), b.values(), 0.05), score(a.values(), c.values(), 0.05), 1e-12);
  }
}

TEST(SimilarityConfigTest, TemperatureMustBePositive) {
  EXPECT_NO_THROW(SimilarityConfig{}.validate());
  EXPECT_EQ(SimilarityConfig{}.temperature, 0.05);
  EXPECT_THROW(SimilarityConfig{0.0}.validate(), ConfigError);
}

TEST(InfoNceTest, UniformSimilaritiesGiveLogNPlusOne) {
  const auto a = at_angle(0), p = at_angle(1.0);
  std::vector<std::vector<double>> negs;
  for (int i = 0; i < 7; ++i) negs.push_back(at_angle(i % 2 ? 1.0 : -1.0));
  std::vector<std::span<const double>> spans(negs.begin(), negs.end());
  EXPECT_NEAR(infonce(a, p, spans, 0.05), std::log(8.0), 1e-9);
  EXPECT_NEAR(std::log(8.0), 2.07944, 1e-5);
}

TEST(InfoNceTest, ClosedFormSingleNegative) {
  const auto a = at_angle(0), p = at_angle(0), n = at_angle(M_PI / 2);
  const std::vector<std::span<const double>> negs{n};
  const double loss = infonce(a, p, negs, 0.05);
  EXPECT_NEAR(loss, std::log1p(std::exp(-20.0)), 1e-15);
  EXPECT_NEAR(loss, 2.061e-9, 1e-12);
}

TEST(InfoNceTest, StrictlyDecreasingInPositiveSimilarity) {
  std::vector<std::vector<double>> negs{at_angle(2.0), at_angle(-1.0), at_angle(0.5)};
  std::vector<std::span<const double>> spans(negs.begin(), negs.end());
  double previous = INFINITY;
  for (int i = 0; i <= 100; ++i) {
    const double theta = M_PI * (1.0 - i / 100.0);
    const double loss = infonce(at_angle(0), at_angle(theta), spans, 0.05);
    EXPECT_LT(loss, previous) << "theta " << theta;
    EXPECT_GT(loss, 0.0);
    previous = loss;
  }
}

TEST(InfoNceTest, MatchesNaiveFormulaProperty) {
  Rng rng = make_rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 8);
    const auto a = vec(random_matrix(rng, 1, 5)), p = vec(random_matrix(rng, 1, 5));
    std::vector<std::vector<double>> negs;
    for (std::size_t i = 0; i < n; ++i) negs.push_back(vec(random_matrix(rng, 1, 5)));
    std::vector<std::span<const double>> spans(negs.begin(), negs.end());
    const double tau = 0.05 + uniform_unit(rng);
    EXPECT_NEAR(infonce(a, p, spans, tau), naive_infonce(a, p, negs, tau), 1e-10);
  }
}

TEST(InfoNceTest, DifferentiableFormMatchesValueForm) {
  Rng rng = make_rng(43);
  const Tensor a = random_matrix(rng, 1, 5), p = random_matrix(rng, 1, 5);
  std::vector<Tensor> negs;
  for (int i = 0; i < 3; ++i) negs.push_back(random_matrix(rng, 1, 5));
  std::vector<ad::Var> nv(negs.begin(), negs.end());
  std::vector<std::span<const double>> spans;
  for (const auto& t : negs) spans.push_back(t.values());
  EXPECT_NEAR(infonce(ad::Var(a), ad::Var(p), nv, 0.05).value().item(),
              infonce(a.values(), p.values(), spans, 0.05), 1e-12);
}

// d/dx cos(x, y) = (ŷ - cos·x̂) / |x|. With magnitude = true, returns
// (|ŷ| + |cos·x̂|) / |x| instead, the size of the terms that cancel.
std::vector<double> cosine_grad(const std::vector<double>& x, const std::vector<double>& y,
                                bool magnitude = false) {
  double nx = 0, ny = 0, dot = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    nx += x[i] * x[i];
    ny += y[i] * y[i];
    dot += x[i] * y[i];
  }
  nx = std::sqrt(nx);
  ny = std::sqrt(ny);
  const double c = dot / (nx * ny);
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    g[i] = magnitude ? (std::abs(y[i] / ny) + std::abs(c * x[i] / nx)) / nx
                     : (y[i] / ny - c * x[i] / nx) / nx;
  }
  return g;
}

TEST(InfoNceTest, EmbeddingGradientIsSoftmaxWeighted) {
  Rng rng = make_rng(44);
  const double tau = 0.05;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::vector<double>> e;  // anchor, positive, negatives
    for (int i = 0; i < 2 + 7; ++i) e.push_back(vec(random_matrix(rng, 1, 4)));
    ad::Tape tape;
    std::vector<ad::Var> v;
    for (const auto& x : e) v.push_back(tape.leaf(Tensor::row(x)));
    tape.backward(infonce(v[0], v[1], std::span<const ad::Var>(v).subspan(2), tau));

    // p_i = softmax(s)_i over {positive, negatives}; dL/ds_i = p_i - [i = positive].
    std::vector<double> s;
    for (std::size_t i = 1; i < e.size(); ++i) s.push_back(cosine(e[0], e[i]) / tau);
    const double m = *std::max_element(s.begin(), s.end());
    double z = 0;
    for (double x : s) z += std::exp(x - m);
    std::vector<std::vector<double>> expected(e.size(), std::vector<double>(4, 0.0));
    std::vector<std::vector<double>> scale(e.size(), std::vector<double>(4, 0.0));
    for (std::size_t i = 1; i < e.size(); ++i) {
      const double prob = std::exp(s[i - 1] - m) / z, target = i == 1 ? 1.0 : 0.0;
      const double coef = (prob - target) / tau;
      // prob - target cancels when prob is near 1.
      const double coef_size = (prob + target) / tau;
      const auto ga = cosine_grad(e[0], e[i]);
      const auto gb = cosine_grad(e[i], e[0]);
      const auto ma = cosine_grad(e[0], e[i], true);
      const auto mb = cosine_grad(e[i], e[0], true);
      for (std::size_t k = 0; k < 4; ++k) {
        expected[0][k] += coef * ga[k];
        expected[i][k] += coef * gb[k];
        scale[0][k] += coef_size * ma[k];
        scale[i][k] += coef_size * mb[k];
      }
    }
    for (std::size_t i = 0; i < e.size(); ++i) {
      const Tensor g = tape.grad(v[i]);
      for (std::size_t k = 0; k < 4; ++k) {
        // Rounding scales with the size of the terms that cancel.
        const double tol = 1e-10 * scale[i][k] + 1e-18;
        ASSERT_NEAR(g[k], expected[i][k], tol) << "trial " << trial << " vector " << i;
      }
    }
  }
}

TEST(InfoNceTest, EmbeddingGradientMatchesFiniteDifferences) {
  Rng rng = make_rng(47);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Tensor> leaves;
    for (int i = 0; i < 2 + 7; ++i) leaves.push_back(random_matrix(rng, 1, 4));
    const ad::ScalarFn f = [](ad::Tape&, std::span<const ad::Var> v) {
      return infonce(v[0], v[1], v.subspan(2), 1.0);
    };
    const auto report = ad::finite_diff_check(f, leaves);
    ASSERT_LT(report.max_rel_error, 1e-4) << "trial " << trial;
  }
}

TEST(InfoNceTest, ScaledEmbeddingsLeaveLossUnchanged) {
  Rng rng = make_rng(45);
  for (int trial = 0; trial < 100; ++trial) {
    auto a = vec(random_matrix(rng, 1, 4)), p = vec(random_matrix(rng, 1, 4));
    std::vector<std::vector<double>> negs{vec(random_matrix(rng, 1, 4)), vec(random_matrix(rng, 1, 4))};
    std::vector<std::span<const double>> spans(negs.begin(), negs.end());
    const double before = infonce(a, p, spans, 0.05);
    for (double& v : a) v *= 3.7;
    for (double& v : negs[1]) v *= 0.02;
    EXPECT_NEAR(infonce(a, p, spans, 0.05), before, 1e-10);
  }
}

InstanceEmbeddings uniform_instance(std::size_t n) {
  InstanceEmbeddings e;
  e.anchor = Tensor::row(at_angle(0));
  e.positive = Tensor::row(at_angle(0.7));
  for (std::size_t i = 0; i < n; ++i) e.negatives.push_back(Tensor::row(at_angle(-0.7)));
  return e;
}

TEST(BatchLossTest, MeanReduction) {
  Rng rng = make_rng(46);
  InstanceEmbeddings one;
  one.anchor = random_matrix(rng, 1, 4);
  one.positive = random_matrix(rng, 1, 4);
  one.negatives = {random_matrix(rng, 1, 4), random_matrix(rng, 1, 4)};
  std::vector<std::span<const double>> spans{one.negatives[0].values(), one.negatives[1].values()};
  const double single = infonce(one.anchor.values(), one.positive.values(), spans, 0.05);
  EXPECT_EQ(batch_loss(LossBatch{{one}}, 0.05), single);
  EXPECT_EQ(batch_loss(LossBatch{{one, one}}, 0.05), single);
  EXPECT_NEAR(batch_loss(LossBatch{{uniform_instance(7), uniform_instance(7)}}, 0.05),
              std::log(8.0), 1e-12);
}

TEST(BatchLossTest, EmptyOrMixedNIsContractError) {
  EXPECT_THROW(batch_loss(LossBatch{}, 0.05), ContractError);
  EXPECT_THROW(batch_loss(LossBatch{{uniform_instance(1), uniform_instance(2)}}, 0.05),
               ContractError);
}

// Per weight, max |a - b| relative to that weight's gradient scale, floored
// at 1e-12 of the largest gradient entry in the model. Some weights (the key
// biases) have an identically zero true gradient, so their computed values
// are pure rounding noise.
double grad_rel_diff(const std::map<std::string, Tensor>& a, const std::map<std::string, Tensor>& b) {
  double global = 0;
  for (const auto& [name, t] : b) {
    for (double v : t.values()) global = std::max(global, std::abs(v));
  }
  double worst = 0;
  for (const auto& [name, ta] : a) {
    const Tensor& tb = b.at(name);
    double diff = 0, scale = 1e-12 * global;
    for (std::size_t i = 0; i < ta.size(); ++i) {
      diff = std::max(diff, std::abs(ta[i] - tb[i]));
      scale = std::max({scale, std::abs(ta[i]), std::abs(tb[i])});
    }
    worst = std::max(worst, diff / scale);
  }
  return worst;
}

struct GradCacheFixture {
  Parameters params;
  std::vector<TrainInstance> batch;
  std::vector<std::string> trainable;
};

GradCacheFixture make_fixture(AdapterMode mode, std::uint64_t seed, std::size_t batch = 8) {
  const ModelConfig cfg = tiny_model_config();
  GradCacheFixture f;
  Rng rng = make_rng(seed);
  const AdapterConfig ac{mode, 2, 2.0};
  f.params = init_parameters(cfg, seed);
  if (mode == AdapterMode::lora) {
    f.params = attach_lora(f.params, ac, rng);
    for (auto& [name, t] : f.params.weights) {
      if (name.ends_with(".lora_b")) {
        for (double& v : t.values()) v = 0.02 * standard_normal(rng);
      }
    }
  }
  f.params.adapter = ac;
  f.batch = random_instances(rng, batch, 3, 6, cfg.vocab_size);
  f.trainable = trainable_set(f.params, ac);
  return f;
}

TEST(GradCacheTest, FullChunkIsBitIdenticalToSinglePass) {
  for (AdapterMode mode : {AdapterMode::full, AdapterMode::lora, AdapterMode::bitfit}) {
    const auto f = make_fixture(mode, 51);
    const auto ref = single_pass_gradients(f.params, f.batch, f.trainable, 0.05);
    const auto gc = grad_cache_gradients(f.params, f.batch, f.batch.size(), f.trainable, 0.05);
    EXPECT_EQ(gc.loss, ref.loss);
    ASSERT_EQ(gc.grads.size(), ref.grads.size());
    for (const auto& [name, g] : ref.grads) EXPECT_EQ(gc.grads.at(name), g) << name;
  }
}

TEST(GradCacheTest, EveryChunkSizeMatchesFullBatch) {
  for (std::uint64_t seed = 52; seed < 57; ++seed) {
    const auto f = make_fixture(AdapterMode::full, seed);
    const auto ref = single_pass_gradients(f.params, f.batch, f.trainable, 0.05);
    for (std::size_t chunk : {1u, 2u, 3u, 4u, 8u}) {
      const auto gc = grad_cache_gradients(f.params, f.batch, chunk, f.trainable, 0.05);
      EXPECT_EQ(gc.loss, ref.loss) << "chunk " << chunk;
      EXPECT_LT(grad_rel_diff(gc.grads, ref.grads), 1e-6) << "chunk " << chunk;
    }
  }
}

TEST(GradCacheTest, PeakTapeScalesWithChunk) {
  const auto f = make_fixture(AdapterMode::lora, 58);
  const auto small = grad_cache_gradients(f.params, f.batch, 1, f.trainable, 0.05);
  const auto large = grad_cache_gradients(f.params, f.batch, 8, f.trainable, 0.05);
  const auto ref = single_pass_gradients(f.params, f.batch, f.trainable, 0.05);
  EXPECT_LT(small.peak_tape_nodes * 4, large.peak_tape_nodes);
  EXPECT_LT(small.peak_tape_nodes * 4, ref.peak_tape_nodes);
}

TEST(GradCacheTest, ChunkOutOfRangeIsConfigError) {
  const auto f = make_fixture(AdapterMode::full, 59, 4);
  EXPECT_THROW(grad_cache_gradients(f.params, f.batch, 0, f.trainable, 0.05), ConfigError);
  EXPECT_THROW(grad_cache_gradients(f.params, f.batch, 5, f.trainable, 0.05), ConfigError);
}

TEST(GradCacheTest, GradientsOnlyForTrainableWeights) {
  const auto f = make_fixture(AdapterMode::bitfit, 60, 2);
  const auto gc = grad_cache_gradients(f.params, f.batch, 1, f.trainable, 0.05);
  const std::set<std::string> want(f.trainable.begin(), f.trainable.end());
  std::set<std::string> got;
  for (const auto& [name, g] : gc.grads) got.insert(name);
  EXPECT_EQ(got, want);
}

}  // namespace
}  // namespace uemb
