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

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "uemb/tensor.hpp"

namespace uemb::ad {

class Tape;

// A value flowing through a computation. Untracked Vars (constants, or
// anything produced on a non-recording tape) carry only their value; ops on
// them never touch a tape.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value)
      : value_(std::make_shared<const Tensor>(std::move(value))) {}

  const Tensor& value() const { return *value_; }
  const Shape& shape() const { return value_->shape(); }
  bool tracked() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  std::size_t node() const { return node_; }

  std::shared_ptr<const Tensor> shared_value() const { return value_; }

 private:
  friend class Tape;
  std::shared_ptr<const Tensor> value_;
  Tape* tape_ = nullptr;
  std::size_t node_ = 0;
};

// Receives d(loss)/d(output) and accumulates (+=) into the parents' gradient
// slots. A slot is nullptr when that parent is not tracked.
using BackwardFn =
    std::function<void(const Tensor& grad_out, std::span<Tensor* const>)>;

// Reverse-mode tape. Nodes are appended in evaluation order, so parents
// always precede children and backward is a single reverse sweep.
// Not thread-safe; one tape per thread.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }

  // Registers a differentiable input. On a non-recording tape this returns
  // an untracked Var.
  Var leaf(Tensor value);
  Var leaf(std::shared_ptr<const Tensor> value);

  // Appends an op node. Returns an untracked Var when no parent is tracked.
  Var record(Tensor value, std::vector<Var> parents, BackwardFn backward);

  // Backpropagates from a scalar loss. The tape is consumed: further
  // recording or a second backward requires reset().
  void backward(const Var& loss);

  // d(loss)/d(v) after backward; zeros for nodes the loss does not reach.
  Tensor grad(const Var& v) const;

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }
  void reset();

 private:
  struct Node {
    std::shared_ptr<const Tensor> value;
    std::vector<std::ptrdiff_t> parents;  // -1 for untracked parents
    BackwardFn backward;
    Tensor grad;
    bool reached = false;
  };

  Var make_var(std::shared_ptr<const Tensor> value, std::size_t node);

  bool recording_;
  bool consumed_ = false;
  std::vector<Node> nodes_;
};

// --- ops -------------------------------------------------------------------

Var matmul(const Var& a, const Var& b);     // a[m×k]·b[k×n]
Var matmul_nt(const Var& a, const Var& b);  // a[m×k]·b[n×k]ᵀ
Var add(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);  // elementwise
Var scale(const Var& a, double s);
Var add_row(const Var& a, const Var& row);  // broadcast row over a's rows
Var sum(const Var& a);                      // -> scalar
Var sum_all(std::span<const Var> terms);    // scalars -> scalar
Var gelu(const Var& a);                     // tanh approximation
Var softmax_rows(const Var& a);
// Row i may attend to columns j <= i only; masked entries are exactly 0.
Var causal_softmax_rows(const Var& a);
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps);
// Row i of the result is table[index[i]], or zeros when index[i] < 0.
Var gather_rows(const Var& table, std::span<const std::ptrdiff_t> index);
Var slice_rows(const Var& a, std::size_t begin, std::size_t end);
Var slice_cols(const Var& a, std::size_t begin, std::size_t end);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
// Divides each row by its l2 norm. A zero row is a ContractError.
Var l2_normalize_rows(const Var& a);
// -log softmax(logits)[target] for a single row of logits.
Var cross_entropy_row(const Var& logits, std::size_t target);

// --- verification ------------------------------------------------------------

using ScalarFn = std::function<Var(Tape&, std::span<const Var> leaves)>;

struct FiniteDiffOptions {
  double h = 1e-5;
  // Coordinates sampled per check; 0 checks every coordinate.
  std::size_t max_coords = 0;
  std::uint64_t seed = 0;
};

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  std::size_t worst_leaf = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Compares tape gradients with central differences
// (f(x+h) - f(x-h)) / 2h. Relative error per coordinate is
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-12).
FiniteDiffReport finite_diff_check(const ScalarFn& f,
                                   const std::vector<Tensor>& leaves,
                                   const FiniteDiffOptions& options = {});

namespace debug {

// Deliberate backward corruption for negative-control tests.
enum class Fault { none, gelu_backward, softmax_backward };

void set_fault(Fault fault);
Fault fault();

class ScopedFault {
 public:
  explicit ScopedFault(Fault f) : previous_(fault()) { set_fault(f); }
  ~ScopedFault() { set_fault(previous_); }
  ScopedFault(const ScopedFault&) = delete;
  ScopedFault& operator=(const ScopedFault&) = delete;

 private:
  Fault previous_;
};

}  // namespace debug

}  // namespace uemb::ad
