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

#include "uemb/trainer.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "uemb/errors.hpp"
#include "uemb/objective.hpp"

namespace uemb {

void TrainConfig::validate() const {
  if (!(warmup_frac >= 0.0 && warmup_frac < 1.0)) {
    throw ConfigError("warmup_frac must lie in [0, 1)");
  }
  if (!(floor_frac > 0.0 && floor_frac <= 1.0)) {
    throw ConfigError("floor_frac must lie in (0, 1]");
  }
  if (chunk_size < 1 || chunk_size > batch_size) {
    throw ConfigError("need batch_size >= chunk_size >= 1 (batch_size " +
                      std::to_string(batch_size) + ", chunk_size " +
                      std::to_string(chunk_size) + ")");
  }
  if (n_negatives < 1) throw ConfigError("negatives must be >= 1");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (!(peak_lr >= 0.0)) throw ConfigError("peak_lr must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("AdamW betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("AdamW eps must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
}

std::size_t TrainConfig::warmup_steps() const {
  return static_cast<std::size_t>(
      std::llround(warmup_frac * static_cast<double>(total_steps)));
}

double lr_at(std::size_t step, const TrainConfig& cfg) {
  const std::size_t warm = cfg.warmup_steps();
  if (step < warm) {
    return cfg.peak_lr * static_cast<double>(step) / static_cast<double>(warm);
  }
  if (cfg.total_steps <= warm) return cfg.peak_lr;
  const double progress = static_cast<double>(step - warm) /
                          static_cast<double>(cfg.total_steps - warm);
  const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  return cfg.peak_lr * (cfg.floor_frac + (1.0 - cfg.floor_frac) * cosine);
}

bool skips_weight_decay(const std::string& name) {
  auto ends = [&](std::string_view suffix) {
    return name.size() >= suffix.size() &&
           name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  return ends(".bias") || ends(".gain");
}

void adamw_step(std::map<std::string, Tensor>& weights,
                const std::map<std::string, Tensor>& grads, AdamWState& state,
                double lr, const TrainConfig& cfg) {
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (const auto& [name, g] : grads) {
    auto wit = weights.find(name);
    if (wit == weights.end()) throw ContractError("adamw_step: no weight " + name);
    Tensor& w = wit->second;
    if (g.shape() != w.shape()) {
      throw ContractError("adamw_step: gradient of " + name + " has shape " +
                          shape_string(g.shape()) + ", weight " +
                          shape_string(w.shape()));
    }
    Tensor& m = state.m.try_emplace(name, Tensor(w.shape())).first->second;
    Tensor& v = state.v.try_emplace(name, Tensor(w.shape())).first->second;
    const double decay = skips_weight_decay(name) ? 0.0 : lr * cfg.weight_decay;
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= decay * w[i];
      w[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

// --- checkpoint ----------------------------------------------------------------------

namespace {

std::string fmt_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw DataError("checkpoint: bad number '" + s + "'");
  }
  return v;
}

std::uint64_t parse_u64(const std::string& s) {
  std::uint64_t v = 0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw DataError("checkpoint: bad integer '" + s + "'");
  }
  return v;
}

using Digest = std::array<unsigned char, 32>;

Digest sha256(std::span<const unsigned char> data) {
  Digest out{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(),
                 nullptr) != 1 ||
      len != out.size()) {
    throw Error("SHA-256 computation failed");
  }
  return out;
}

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    u64(bits);
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void tensor(const Tensor& t) {
    u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) u64(d);
    for (double v : t.values()) f64(v);
  }
  void table(const std::map<std::string, Tensor>& entries) {
    u32(static_cast<std::uint32_t>(entries.size()));
    for (const auto& [name, t] : entries) {
      str(name);
      tensor(t);
    }
  }
  std::vector<unsigned char>& data() { return out_; }

 private:
  std::vector<unsigned char> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const unsigned char> in) : in_(in) {}
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw DataError("checkpoint: unexpected end of data");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{in_[pos_++]} << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{in_[pos_++]} << (8 * i);
    return v;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  Tensor tensor() {
    const std::uint32_t rank = u32();
    Shape shape(rank);
    for (auto& d : shape) d = u64();
    const std::size_t n = shape_size(shape);
    need(n * 8);
    std::vector<double> values(n);
    for (double& v : values) v = f64();
    return Tensor(std::move(shape), std::move(values));
  }
  std::map<std::string, Tensor> table() {
    const std::uint32_t count = u32();
    std::map<std::string, Tensor> out;
    for (std::uint32_t i = 0; i < count; ++i) {
      std::string name = str();
      out.emplace(std::move(name), tensor());
    }
    return out;
  }
  Digest digest() {
    need(32);
    Digest d;
    std::copy_n(in_.begin() + pos_, 32, d.begin());
    pos_ += 32;
    return d;
  }
  std::size_t pos() const { return pos_; }

 private:
  std::span<const unsigned char> in_;
  std::size_t pos_ = 0;
};

constexpr unsigned char kMagic[4] = {'U', 'E', 'C', 'K'};

std::map<std::string, std::string> parse_metadata(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("checkpoint: bad metadata line");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

}  // namespace

std::string checkpoint_metadata(const Checkpoint& c) {
  const ModelConfig& m = c.params.config;
  const AdapterConfig& a = c.params.adapter;
  const TrainConfig& t = c.train;
  std::ostringstream o;
  o << "model.d_model=" << m.d_model << '\n'
    << "model.n_layers=" << m.n_layers << '\n'
    << "model.n_heads=" << m.n_heads << '\n'
    << "model.d_ff=" << m.d_ff << '\n'
    << "model.vocab_size=" << m.vocab_size << '\n'
    << "model.max_len=" << m.max_len << '\n'
    << "model.pooling=" << to_string(m.pooling) << '\n'
    << "model.init_std=" << fmt_double(m.init_std) << '\n'
    << "adapter.mode=" << to_string(a.mode) << '\n'
    << "adapter.rank=" << a.rank << '\n'
    << "adapter.alpha=" << fmt_double(a.alpha) << '\n'
    << "adapter.attached=" << (c.params.lora_attached ? 1 : 0) << '\n'
    << "adapter.merged=" << (c.params.lora_merged ? 1 : 0) << '\n'
    << "train.peak_lr=" << fmt_double(t.peak_lr) << '\n'
    << "train.warmup_frac=" << fmt_double(t.warmup_frac) << '\n'
    << "train.floor_frac=" << fmt_double(t.floor_frac) << '\n'
    << "train.batch_size=" << t.batch_size << '\n'
    << "train.chunk_size=" << t.chunk_size << '\n'
    << "train.total_steps=" << t.total_steps << '\n'
    << "train.negatives=" << t.n_negatives << '\n'
    << "train.temperature=" << fmt_double(t.temperature) << '\n'
    << "train.beta1=" << fmt_double(t.beta1) << '\n'
    << "train.beta2=" << fmt_double(t.beta2) << '\n'
    << "train.eps=" << fmt_double(t.eps) << '\n'
    << "train.weight_decay=" << fmt_double(t.weight_decay) << '\n'
    << "train.seed=" << t.seed << '\n'
    << "optimizer.t=" << c.optimizer.t << '\n'
    << "vocab=" << c.vocab.serialize() << '\n';
  return o.str();
}

std::vector<unsigned char> serialize_checkpoint(const Checkpoint& c) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.table(c.params.weights);
  std::map<std::string, Tensor> opt;
  for (const auto& [name, t] : c.optimizer.m) opt.emplace("m/" + name, t);
  for (const auto& [name, t] : c.optimizer.v) opt.emplace("v/" + name, t);
  w.table(opt);
  w.u64(c.step);
  const std::string meta = checkpoint_metadata(c);
  const Digest config_hash = sha256(std::span<const unsigned char>(
      reinterpret_cast<const unsigned char*>(meta.data()), meta.size()));
  w.bytes(config_hash.data(), config_hash.size());
  w.str(meta);
  const Digest checksum = sha256(w.data());
  w.bytes(checksum.data(), checksum.size());
  return std::move(w.data());
}

Checkpoint deserialize_checkpoint(std::span<const unsigned char> bytes) {
  if (bytes.size() < 8 || !std::equal(kMagic, kMagic + 4, bytes.begin())) {
    throw FormatError("checkpoint: bad magic (expected UECK)");
  }
  Reader header(bytes.subspan(4, 4));
  const std::uint32_t version = header.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: version " + std::to_string(version) +
                      " is not supported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  if (bytes.size() < 8 + 32) throw ChecksumError("checkpoint: truncated file");
  const auto body = bytes.first(bytes.size() - 32);
  const Digest expected = sha256(body);
  if (!std::equal(expected.begin(), expected.end(), bytes.end() - 32)) {
    throw ChecksumError("checkpoint: checksum mismatch (truncated or corrupted)");
  }

  Reader r(body.subspan(8));
  Checkpoint c;
  c.params.weights = r.table();
  auto opt = r.table();
  c.step = r.u64();
  const Digest config_hash = r.digest();
  const std::string meta = r.str();
  if (r.pos() != body.size() - 8) throw DataError("checkpoint: trailing bytes");
  const Digest meta_hash = sha256(std::span<const unsigned char>(
      reinterpret_cast<const unsigned char*>(meta.data()), meta.size()));
  if (meta_hash != config_hash) throw ChecksumError("checkpoint: config hash mismatch");

  auto kv = parse_metadata(meta);
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw DataError(std::string("checkpoint: missing ") + key);
    return it->second;
  };
  ModelConfig& m = c.params.config;
  m.d_model = parse_u64(get("model.d_model"));
  m.n_layers = parse_u64(get("model.n_layers"));
  m.n_heads = parse_u64(get("model.n_heads"));
  m.d_ff = parse_u64(get("model.d_ff"));
  m.vocab_size = parse_u64(get("model.vocab_size"));
  m.max_len = parse_u64(get("model.max_len"));
  m.pooling = parse_pooling(get("model.pooling"));
  m.init_std = parse_double(get("model.init_std"));
  AdapterConfig& a = c.params.adapter;
  a.mode = parse_adapter_mode(get("adapter.mode"));
  a.rank = parse_u64(get("adapter.rank"));
  a.alpha = parse_double(get("adapter.alpha"));
  c.params.lora_attached = get("adapter.attached") == "1";
  c.params.lora_merged = get("adapter.merged") == "1";
  TrainConfig& t = c.train;
  t.peak_lr = parse_double(get("train.peak_lr"));
  t.warmup_frac = parse_double(get("train.warmup_frac"));
  t.floor_frac = parse_double(get("train.floor_frac"));
  t.batch_size = parse_u64(get("train.batch_size"));
  t.chunk_size = parse_u64(get("train.chunk_size"));
  t.total_steps = parse_u64(get("train.total_steps"));
  t.n_negatives = parse_u64(get("train.negatives"));
  t.temperature = parse_double(get("train.temperature"));
  t.beta1 = parse_double(get("train.beta1"));
  t.beta2 = parse_double(get("train.beta2"));
  t.eps = parse_double(get("train.eps"));
  t.weight_decay = parse_double(get("train.weight_decay"));
  t.seed = parse_u64(get("train.seed"));
  c.optimizer.t = parse_u64(get("optimizer.t"));
  c.vocab = Vocabulary::deserialize(get("vocab"));
  for (auto& [name, tensor] : opt) {
    if (name.rfind("m/", 0) == 0) {
      c.optimizer.m.emplace(name.substr(2), std::move(tensor));
    } else if (name.rfind("v/", 0) == 0) {
      c.optimizer.v.emplace(name.substr(2), std::move(tensor));
    } else {
      throw DataError("checkpoint: unknown optimizer entry " + name);
    }
  }
  return c;
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(c);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

// --- training loop -------------------------------------------------------------------

std::string format_trace_row(const TraceRow& row) {
  return std::to_string(row.step) + "," + fmt_double(row.lr) + "," +
         fmt_double(row.loss) + "\n";
}

Checkpoint initial_checkpoint(const ModelConfig& model,
                              const AdapterConfig& adapter,
                              const TrainConfig& train, const Vocabulary& vocab) {
  model.validate();
  adapter.validate(model);
  train.validate();
  if (vocab.size() > model.vocab_size) {
    throw ConfigError("vocabulary has " + std::to_string(vocab.size()) +
                      " ids but model.vocab_size is " +
                      std::to_string(model.vocab_size));
  }
  Checkpoint c;
  c.params = init_parameters(model, train.seed);
  if (adapter.mode == AdapterMode::lora) {
    Rng rng = make_rng(train.seed, {0x6c6f7261ULL});
    c.params = attach_lora(std::move(c.params), adapter, rng);
  } else {
    c.params.adapter = adapter;
  }
  c.train = train;
  c.vocab = vocab;
  return c;
}

std::vector<std::size_t> batch_indices(std::size_t n_records,
                                       std::size_t batch_size,
                                       std::uint64_t seed, std::size_t step) {
  if (n_records == 0) throw DataError("training dataset is empty");
  std::vector<std::size_t> out;
  out.reserve(batch_size);
  std::uint64_t cached_epoch = ~std::uint64_t{0};
  std::vector<std::size_t> perm;
  for (std::size_t j = 0; j < batch_size; ++j) {
    const std::uint64_t pos = static_cast<std::uint64_t>(step) * batch_size + j;
    const std::uint64_t epoch = pos / n_records;
    if (epoch != cached_epoch) {
      Rng rng = make_rng(seed, {0x65706f6368ULL, epoch});
      perm = permutation(rng, n_records);
      cached_epoch = epoch;
    }
    out.push_back(perm[pos % n_records]);
  }
  return out;
}

std::vector<TrainInstance> step_instances(const Dataset& data,
                                          const TrainConfig& cfg,
                                          std::size_t max_len,
                                          std::size_t step) {
  const auto idx = batch_indices(data.records.size(), cfg.batch_size, cfg.seed, step);
  std::vector<TrainInstance> out;
  out.reserve(idx.size());
  const InstanceOptions opts{cfg.n_negatives, max_len};
  for (std::size_t j = 0; j < idx.size(); ++j) {
    Rng rng = make_rng(cfg.seed, {0x696e7374ULL, step, j});
    out.push_back(build_instance(data.records[idx[j]], data.vocab, opts, rng, idx[j]));
  }
  return out;
}

TrainResult train(const Dataset& data, Checkpoint start, const TrainOptions& options) {
  const TrainConfig& cfg = start.train;
  cfg.validate();
  if (data.records.empty()) throw DataError("training dataset is empty");
  TrainResult result;
  const std::vector<std::string> trainable =
      trainable_set(start.params, start.params.adapter);
  const std::size_t end =
      std::min(cfg.total_steps, options.stop_at.value_or(cfg.total_steps));
  const std::size_t chunk = std::min(cfg.chunk_size, cfg.batch_size);

  for (std::size_t s = start.step; s < end; ++s) {
    const double lr = lr_at(s + 1, cfg);
    const auto batch = step_instances(data, cfg, start.params.config.max_len, s);
    GradientResult g =
        grad_cache_gradients(start.params, batch, chunk, trainable, cfg.temperature);
    if (!std::isfinite(g.loss)) {
      std::string ids;
      for (const TrainInstance& inst : batch) {
        if (!ids.empty()) ids += ",";
        ids += std::to_string(inst.record_index);
      }
      throw NumericalAbort("non-finite loss at step " + std::to_string(s + 1) +
                           " (records " + ids + ")");
    }
    adamw_step(start.params.weights, g.grads, start.optimizer, lr, cfg);
    start.step = s + 1;
    const TraceRow row{s + 1, lr, g.loss};
    result.trace.push_back(row);
    if (options.on_step) options.on_step(row);
  }
  result.checkpoint = std::move(start);
  return result;
}

}  // namespace uemb
