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

#include "uemb/objective.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "uemb/errors.hpp"

namespace uemb {

void SimilarityConfig::validate() const {
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
}

double cosine(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw DimensionError("cosine: lengths " + std::to_string(x.size()) +
                         " and " + std::to_string(y.size()));
  }
  double xy = 0.0, xx = 0.0, yy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xy += x[i] * y[i];
    xx += x[i] * x[i];
    yy += y[i] * y[i];
  }
  if (xx == 0.0 || yy == 0.0) {
    throw ContractError("cosine of a zero vector is undefined");
  }
  return xy / (std::sqrt(xx) * std::sqrt(yy));
}

double score(std::span<const double> x, std::span<const double> y, double tau) {
  if (!(tau > 0.0)) throw ContractError("temperature must be positive");
  return cosine(x, y) / tau;
}

double infonce(std::span<const double> anchor, std::span<const double> positive,
               std::span<const std::span<const double>> negatives, double tau) {
  if (negatives.empty()) throw ContractError("infonce: need N >= 1 negatives");
  const double sp = score(anchor, positive, tau);
  std::vector<double> s{sp};
  for (const auto& neg : negatives) s.push_back(score(anchor, neg, tau));
  const double m = *std::max_element(s.begin(), s.end());
  double z = 0.0;
  for (double v : s) z += std::exp(v - m);
  return m + std::log(z) - sp;
}

ad::Var infonce(const ad::Var& anchor, const ad::Var& positive,
                std::span<const ad::Var> negatives, double tau) {
  if (negatives.empty()) throw ContractError("infonce: need N >= 1 negatives");
  if (!(tau > 0.0)) throw ContractError("temperature must be positive");
  std::vector<ad::Var> candidates;
  candidates.reserve(negatives.size() + 1);
  candidates.push_back(positive);
  candidates.insert(candidates.end(), negatives.begin(), negatives.end());
  ad::Var a = ad::l2_normalize_rows(anchor);
  ad::Var c = ad::l2_normalize_rows(ad::concat_rows(candidates));
  ad::Var logits = ad::scale(ad::matmul_nt(a, c), 1.0 / tau);
  return ad::cross_entropy_row(logits, 0);
}

ad::Var batch_loss(std::span<const InstanceVars> batch, double tau) {
  if (batch.empty()) throw ContractError("batch_loss: empty batch");
  const std::size_t n = batch.front().negatives.size();
  std::vector<ad::Var> losses;
  losses.reserve(batch.size());
  for (const InstanceVars& inst : batch) {
    if (inst.negatives.size() != n) {
      throw ContractError("batch_loss: instances disagree on N");
    }
    losses.push_back(infonce(inst.anchor, inst.positive, inst.negatives, tau));
  }
  return ad::scale(ad::sum_all(losses), 1.0 / static_cast<double>(batch.size()));
}

namespace {

ad::Var as_row(const Tensor& t) {
  return ad::Var(Tensor({1, t.size()},
                        std::vector<double>(t.values().begin(), t.values().end())));
}

}  // namespace

double batch_loss(const LossBatch& batch, double tau) {
  std::vector<InstanceVars> vars;
  for (const InstanceEmbeddings& inst : batch.instances) {
    InstanceVars v{as_row(inst.anchor), as_row(inst.positive), {}};
    for (const Tensor& n : inst.negatives) v.negatives.push_back(as_row(n));
    vars.push_back(std::move(v));
  }
  return batch_loss(vars, tau).value().item();
}

namespace {

// Flattened sequence order for an instance: anchor, positive, negatives.
std::vector<const TokenIds*> sequences_of(const TrainInstance& inst) {
  std::vector<const TokenIds*> out{&inst.anchor, &inst.positive};
  for (const TokenIds& n : inst.negatives) out.push_back(&n);
  return out;
}

InstanceVars assemble(std::span<const ad::Var> embs) {
  InstanceVars v{embs[0], embs[1], {}};
  v.negatives.assign(embs.begin() + 2, embs.end());
  return v;
}

void validate_batch(std::span<const TrainInstance> batch) {
  if (batch.empty()) throw ContractError("gradient computation on an empty batch");
  const std::size_t n = batch.front().n_negatives();
  if (n < 1) throw ContractError("instances need N >= 1 negatives");
  for (const TrainInstance& inst : batch) {
    if (inst.n_negatives() != n) {
      throw ContractError("instances in one batch must share N");
    }
  }
}

}  // namespace

GradientResult single_pass_gradients(const Parameters& p,
                                     std::span<const TrainInstance> batch,
                                     const std::vector<std::string>& trainable,
                                     double tau) {
  validate_batch(batch);
  const std::set<std::string> names(trainable.begin(), trainable.end());
  ad::Tape tape;
  BoundModel model(p, tape, names);
  std::vector<InstanceVars> vars;
  for (const TrainInstance& inst : batch) {
    std::vector<ad::Var> embs;
    for (const TokenIds* ids : sequences_of(inst)) embs.push_back(model.embed(*ids));
    vars.push_back(assemble(embs));
  }
  ad::Var loss = batch_loss(vars, tau);
  GradientResult result;
  result.loss = loss.value().item();
  result.peak_tape_nodes = tape.size();
  tape.backward(loss);
  for (const auto& [name, leaf] : model.leaves()) result.grads[name] = tape.grad(leaf);
  return result;
}

GradientResult grad_cache_gradients(const Parameters& p,
                                    std::span<const TrainInstance> batch,
                                    std::size_t chunk_size,
                                    const std::vector<std::string>& trainable,
                                    double tau) {
  validate_batch(batch);
  if (chunk_size < 1 || chunk_size > batch.size()) {
    throw ConfigError("chunk_size " + std::to_string(chunk_size) +
                      " outside [1, batch size " + std::to_string(batch.size()) +
                      "]");
  }
  const std::set<std::string> names(trainable.begin(), trainable.end());
  const std::size_t per_instance = batch.front().n_negatives() + 2;

  // Pass 1: embeddings without any recorded graph.
  std::vector<Tensor> embeddings;
  embeddings.reserve(batch.size() * per_instance);
  {
    ad::Tape no_grad(false);
    BoundModel model(p, no_grad, {});
    for (const TrainInstance& inst : batch) {
      for (const TokenIds* ids : sequences_of(inst)) {
        embeddings.push_back(model.embed(*ids).value());
      }
    }
  }

  // Loss and d(loss)/d(embedding) on the embedding-level graph.
  GradientResult result;
  std::vector<Tensor> cached;
  {
    ad::Tape tape;
    std::vector<ad::Var> leaves;
    leaves.reserve(embeddings.size());
    for (const Tensor& e : embeddings) leaves.push_back(tape.leaf(e));
    std::vector<InstanceVars> vars;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      vars.push_back(assemble(std::span<const ad::Var>(leaves).subspan(
          i * per_instance, per_instance)));
    }
    ad::Var loss = batch_loss(vars, tau);
    result.loss = loss.value().item();
    tape.backward(loss);
    result.peak_tape_nodes = tape.size();
    cached.reserve(leaves.size());
    for (const ad::Var& leaf : leaves) cached.push_back(tape.grad(leaf));
  }

  // Pass 2: per-chunk recomputation with the cached gradients as seeds.
  for (std::size_t begin = 0; begin < batch.size(); begin += chunk_size) {
    const std::size_t end = std::min(batch.size(), begin + chunk_size);
    ad::Tape tape;
    BoundModel model(p, tape, names);
    std::vector<ad::Var> embs;
    for (std::size_t i = begin; i < end; ++i) {
      for (const TokenIds* ids : sequences_of(batch[i])) {
        embs.push_back(model.embed(*ids));
      }
    }
    std::vector<ad::Var> terms;
    terms.reserve(embs.size());
    for (std::size_t j = 0; j < embs.size(); ++j) {
      terms.push_back(
          ad::sum(ad::mul(embs[j], ad::Var(cached[begin * per_instance + j]))));
    }
    ad::Var surrogate = ad::sum_all(terms);
    result.peak_tape_nodes = std::max(result.peak_tape_nodes, tape.size());
    tape.backward(surrogate);
    for (const auto& [name, leaf] : model.leaves()) {
      Tensor g = tape.grad(leaf);
      auto it = result.grads.find(name);
      if (it == result.grads.end()) {
        result.grads.emplace(name, std::move(g));
      } else {
        it->second.accumulate(g);
      }
    }
  }
  return result;
}

}  // namespace uemb
