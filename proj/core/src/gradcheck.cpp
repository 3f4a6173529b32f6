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

#include "uemb/gradcheck.hpp"

#include <map>

#include "uemb/autodiff.hpp"
#include "uemb/objective.hpp"

namespace uemb {

std::vector<TrainInstance> random_instances(Rng& rng, std::size_t count,
                                            std::size_t n_negatives,
                                            std::size_t seq_len,
                                            std::size_t vocab_size) {
  auto sequence = [&](InputType type) {
    const std::size_t len = 1 + uniform_index(rng, seq_len);
    TokenIds ids{token_ids::bos(type)};
    for (std::size_t i = 0; i < len; ++i) {
      ids.push_back(static_cast<int>(
          token_ids::reserved_count + uniform_index(rng, vocab_size - token_ids::reserved_count)));
    }
    ids.push_back(token_ids::eos(type));
    return ids;
  };
  std::vector<TrainInstance> out;
  for (std::size_t i = 0; i < count; ++i) {
    TrainInstance inst;
    inst.anchor = sequence(InputType::query);
    inst.positive = sequence(InputType::document);
    for (std::size_t n = 0; n < n_negatives; ++n) {
      inst.negatives.push_back(sequence(InputType::document));
    }
    inst.record_index = i;
    out.push_back(std::move(inst));
  }
  return out;
}

GradcheckTrial pipeline_gradcheck(const RunConfig& cfg, std::size_t trial) {
  cfg.validate();
  GradcheckTrial result;
  result.seed = derive_seed(cfg.seed, {0x6772616463686bULL, trial});
  Rng rng = make_rng(result.seed, {1});

  Parameters p = init_parameters(cfg.model, result.seed);
  if (cfg.adapter.mode == AdapterMode::lora) {
    p = attach_lora(std::move(p), cfg.adapter, rng);
    for (auto& [name, w] : p.weights) {
      if (name.ends_with(".lora_b")) {
        for (double& v : w.storage()) v = 0.02 * standard_normal(rng);
      }
    }
  } else {
    p.adapter = cfg.adapter;
  }
  const std::vector<std::string> names = trainable_set(p, cfg.adapter);
  std::vector<Tensor> leaves;
  for (const std::string& n : names) leaves.push_back(p.weights.at(n));

  const auto batch = random_instances(rng, cfg.gradcheck.batch, cfg.train.n_negatives,
                                      cfg.gradcheck.seq_len, cfg.model.vocab_size);
  const double tau = cfg.train.temperature;

  const ad::ScalarFn loss = [&](ad::Tape&, std::span<const ad::Var> vars) {
    std::map<std::string, ad::Var> bound;
    for (std::size_t i = 0; i < names.size(); ++i) bound.emplace(names[i], vars[i]);
    BoundModel model(p, bound);
    std::vector<InstanceVars> inst;
    for (const TrainInstance& t : batch) {
      InstanceVars v{model.embed(t.anchor), model.embed(t.positive), {}};
      for (const TokenIds& n : t.negatives) v.negatives.push_back(model.embed(n));
      inst.push_back(std::move(v));
    }
    return batch_loss(inst, tau);
  };

  ad::FiniteDiffOptions opts;
  opts.h = 1e-5;
  opts.max_coords = cfg.gradcheck.coords;
  opts.seed = result.seed;
  ad::debug::ScopedFault fault(cfg.gradcheck.fault);
  const ad::FiniteDiffReport r = ad::finite_diff_check(loss, leaves, opts);
  result.max_rel_error = r.max_rel_error;
  result.coords_checked = r.coords_checked;
  result.worst_weight = names.empty() ? "" : names[r.worst_leaf];
  result.worst_analytic = r.worst_analytic;
  result.worst_numeric = r.worst_numeric;
  return result;
}

}  // namespace uemb
