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

#include "uemb/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "uemb/errors.hpp"
#include "uemb/kernels.hpp"

namespace uemb::ad {

namespace debug {
namespace {
thread_local Fault g_fault = Fault::none;
}
void set_fault(Fault fault) { g_fault = fault; }
Fault fault() { return g_fault; }
}  // namespace debug

// --- tape ----------------------------------------------------------------------

Var Tape::make_var(std::shared_ptr<const Tensor> value, std::size_t node) {
  Var v;
  v.value_ = std::move(value);
  v.tape_ = this;
  v.node_ = node;
  return v;
}

Var Tape::leaf(Tensor value) {
  return leaf(std::make_shared<const Tensor>(std::move(value)));
}

Var Tape::leaf(std::shared_ptr<const Tensor> value) {
  if (!recording_) {
    Var v;
    v.value_ = std::move(value);
    return v;
  }
  if (consumed_) throw ContractError("tape already consumed; call reset()");
  nodes_.push_back(Node{value, {}, nullptr, Tensor(), false});
  return make_var(std::move(value), nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<Var> parents, BackwardFn backward) {
  auto shared = std::make_shared<const Tensor>(std::move(value));
  if (!recording_) return Var(*shared);
  bool any = false;
  std::vector<std::ptrdiff_t> ids;
  ids.reserve(parents.size());
  for (const Var& p : parents) {
    if (p.tracked()) {
      if (p.tape() != this) {
        throw ContractError("op mixes variables from different tapes");
      }
      any = true;
      ids.push_back(static_cast<std::ptrdiff_t>(p.node()));
    } else {
      ids.push_back(-1);
    }
  }
  if (!any) {
    Var v;
    v.value_ = std::move(shared);
    return v;
  }
  if (consumed_) throw ContractError("tape already consumed; call reset()");
  nodes_.push_back(Node{shared, std::move(ids), std::move(backward), Tensor(),
                        false});
  return make_var(std::move(shared), nodes_.size() - 1);
}

void Tape::backward(const Var& loss) {
  if (!loss.tracked() || loss.tape() != this) {
    throw ContractError("backward: loss is not a node on this tape");
  }
  if (loss.value().size() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " +
                        shape_string(loss.shape()));
  }
  if (consumed_) throw ContractError("tape already consumed; call reset()");
  consumed_ = true;

  Node& root = nodes_[loss.node()];
  root.grad = Tensor(root.value->shape());
  root.grad[0] = 1.0;
  root.reached = true;

  std::vector<Tensor*> slots;
  for (std::size_t i = loss.node() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.reached || !n.backward) continue;
    slots.assign(n.parents.size(), nullptr);
    for (std::size_t k = 0; k < n.parents.size(); ++k) {
      if (n.parents[k] < 0) continue;
      Node& p = nodes_[static_cast<std::size_t>(n.parents[k])];
      if (!p.reached) {
        p.grad = Tensor(p.value->shape());
        p.reached = true;
      }
      slots[k] = &p.grad;
    }
    n.backward(n.grad, slots);
  }
}

Tensor Tape::grad(const Var& v) const {
  if (!v.tracked() || v.tape() != this || v.node() >= nodes_.size()) {
    return Tensor(v.shape());
  }
  const Node& n = nodes_[v.node()];
  if (!n.reached) return Tensor(v.shape());
  return n.grad;
}

void Tape::reset() {
  nodes_.clear();
  consumed_ = false;
}

// --- helpers -------------------------------------------------------------------

namespace {

Tape* common_tape(std::initializer_list<const Var*> vars) {
  Tape* t = nullptr;
  for (const Var* v : vars) {
    if (!v->tracked()) continue;
    if (t && v->tape() != t) {
      throw ContractError("op mixes variables from different tapes");
    }
    t = v->tape();
  }
  return t;
}

Tape* common_tape(std::span<const Var> vars) {
  Tape* t = nullptr;
  for (const Var& v : vars) {
    if (!v.tracked()) continue;
    if (t && v.tape() != t) {
      throw ContractError("op mixes variables from different tapes");
    }
    t = v.tape();
  }
  return t;
}

Var finish(Tape* tape, Tensor value, std::vector<Var> parents,
           BackwardFn backward) {
  if (!tape) return Var(std::move(value));
  return tape->record(std::move(value), std::move(parents),
                      std::move(backward));
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " +
                         shape_string(t.shape()));
  }
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

constexpr double kGeluC = 0.044715;
const double kSqrt2OverPi = std::sqrt(2.0 / std::numbers::pi);

}  // namespace

// --- ops -----------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_matrix(A, "matmul");
  require_matrix(B, "matmul");
  if (A.cols() != B.rows()) {
    throw DimensionError("matmul: inner dimensions differ, " +
                         shape_string(A.shape()) + " · " +
                         shape_string(B.shape()));
  }
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  Tensor C({m, n});
  kernels::gemm_nn(A.values(), B.values(), C.values(), m, k, n);
  Tape* tape = common_tape({&a, &b});
  if (!tape) return Var(std::move(C));
  auto pa = a.shared_value(), pb = b.shared_value();
  return finish(tape, std::move(C), {a, b},
                [pa, pb, m, k, n](const Tensor& g, std::span<Tensor* const> s) {
                  if (s[0]) {  // dA += dC·Bᵀ
                    kernels::gemm_nt(g.values(), pb->values(), s[0]->values(),
                                     m, n, k);
                  }
                  if (s[1]) {  // dB += Aᵀ·dC
                    kernels::gemm_tn(pa->values(), g.values(), s[1]->values(),
                                     m, k, n);
                  }
                });
}

Var matmul_nt(const Var& a, const Var& b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_matrix(A, "matmul_nt");
  require_matrix(B, "matmul_nt");
  if (A.cols() != B.cols()) {
    throw DimensionError("matmul_nt: inner dimensions differ, " +
                         shape_string(A.shape()) + " · " +
                         shape_string(B.shape()) + "ᵀ");
  }
  const std::size_t m = A.rows(), k = A.cols(), n = B.rows();
  Tensor C({m, n});
  kernels::gemm_nt(A.values(), B.values(), C.values(), m, k, n);
  Tape* tape = common_tape({&a, &b});
  if (!tape) return Var(std::move(C));
  auto pa = a.shared_value(), pb = b.shared_value();
  return finish(tape, std::move(C), {a, b},
                [pa, pb, m, k, n](const Tensor& g, std::span<Tensor* const> s) {
                  if (s[0]) {  // dA += dC·B
                    kernels::gemm_nn(g.values(), pb->values(), s[0]->values(),
                                     m, n, k);
                  }
                  if (s[1]) {  // dB += dCᵀ·A
                    kernels::gemm_tn(g.values(), pa->values(), s[1]->values(),
                                     m, n, k);
                  }
                });
}

Var add(const Var& a, const Var& b) {
  require_same(a.value(), b.value(), "add");
  Tensor c = a.value();
  c.accumulate(b.value());
  return finish(common_tape({&a, &b}), std::move(c), {a, b},
                [](const Tensor& g, std::span<Tensor* const> s) {
                  if (s[0]) s[0]->accumulate(g);
                  if (s[1]) s[1]->accumulate(g);
                });
}

Var mul(const Var& a, const Var& b) {
  require_same(a.value(), b.value(), "mul");
  Tensor c = a.value();
  const Tensor& B = b.value();
  for (std::size_t i = 0; i < c.size(); ++i) c[i] *= B[i];
  Tape* tape = common_tape({&a, &b});
  if (!tape) return Var(std::move(c));
  auto pa = a.shared_value(), pb = b.shared_value();
  return finish(tape, std::move(c), {a, b},
                [pa, pb](const Tensor& g, std::span<Tensor* const> s) {
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    if (s[0]) (*s[0])[i] += g[i] * (*pb)[i];
                    if (s[1]) (*s[1])[i] += g[i] * (*pa)[i];
                  }
                });
}

Var scale(const Var& a, double factor) {
  Tensor c = a.value();
  for (double& v : c.values()) v *= factor;
  return finish(common_tape({&a}), std::move(c), {a},
                [factor](const Tensor& g, std::span<Tensor* const> s) {
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    (*s[0])[i] += g[i] * factor;
                  }
                });
}

Var add_row(const Var& a, const Var& row) {
  const Tensor& A = a.value();
  const Tensor& R = row.value();
  if (R.size() != A.cols()) {
    throw DimensionError("add_row: row " + shape_string(R.shape()) +
                         " does not match columns of " +
                         shape_string(A.shape()));
  }
  Tensor c = A;
  const std::size_t rows = A.rows(), cols = A.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < cols; ++j) c[r * cols + j] += R[j];
  }
  return finish(common_tape({&a, &row}), std::move(c), {a, row},
                [rows, cols](const Tensor& g, std::span<Tensor* const> s) {
                  if (s[0]) s[0]->accumulate(g);
                  if (s[1]) {
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t j = 0; j < cols; ++j) {
                        (*s[1])[j] += g[r * cols + j];
                      }
                    }
                  }
                });
}

Var sum(const Var& a) {
  double total = 0.0;
  for (double v : a.value().values()) total += v;
  return finish(common_tape({&a}), Tensor::scalar(total), {a},
                [](const Tensor& g, std::span<Tensor* const> s) {
                  const double gv = g[0];
                  for (double& v : s[0]->values()) v += gv;
                });
}

Var sum_all(std::span<const Var> terms) {
  if (terms.empty()) throw ContractError("sum_all: no terms");
  double total = 0.0;
  for (const Var& t : terms) total += t.value().item();
  std::vector<Var> parents(terms.begin(), terms.end());
  return finish(common_tape(terms), Tensor::scalar(total), std::move(parents),
                [](const Tensor& g, std::span<Tensor* const> s) {
                  for (Tensor* slot : s) {
                    if (slot) (*slot)[0] += g[0];
                  }
                });
}

Var gelu(const Var& a) {
  Tensor c = a.value();
  for (double& x : c.values()) {
    const double t = std::tanh(kSqrt2OverPi * (x + kGeluC * x * x * x));
    x = 0.5 * x * (1.0 + t);
  }
  Tape* tape = common_tape({&a});
  if (!tape) return Var(std::move(c));
  auto pa = a.shared_value();
  return finish(tape, std::move(c), {a},
                [pa](const Tensor& g, std::span<Tensor* const> s) {
                  const bool faulty =
                      debug::fault() == debug::Fault::gelu_backward;
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    const double x = (*pa)[i];
                    const double u = kSqrt2OverPi * (x + kGeluC * x * x * x);
                    const double t = std::tanh(u);
                    const double du = kSqrt2OverPi * (1.0 + 3.0 * kGeluC * x * x);
                    double d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
                    if (faulty) d = 0.5 * (1.0 + t);
                    (*s[0])[i] += g[i] * d;
                  }
                });
}

namespace {

Var softmax_impl(const Var& a, bool causal) {
  const Tensor& A = a.value();
  require_matrix(A, causal ? "causal_softmax_rows" : "softmax_rows");
  const std::size_t rows = A.rows(), cols = A.cols();
  Tensor y({rows, cols});
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t limit = causal ? std::min(cols, r + 1) : cols;
    double m = A.at(r, 0);
    for (std::size_t j = 1; j < limit; ++j) m = std::max(m, A.at(r, j));
    double z = 0.0;
    for (std::size_t j = 0; j < limit; ++j) {
      const double e = std::exp(A.at(r, j) - m);
      y.at(r, j) = e;
      z += e;
    }
    for (std::size_t j = 0; j < limit; ++j) y.at(r, j) /= z;
  }
  Tape* tape = common_tape({&a});
  if (!tape) return Var(std::move(y));
  auto py = std::make_shared<const Tensor>(y);
  return finish(tape, std::move(y), {a},
                [py, rows, cols](const Tensor& g, std::span<Tensor* const> s) {
                  const bool faulty =
                      debug::fault() == debug::Fault::softmax_backward;
                  for (std::size_t r = 0; r < rows; ++r) {
                    double dot = 0.0;
                    for (std::size_t j = 0; j < cols; ++j) {
                      dot += g[r * cols + j] * (*py)[r * cols + j];
                    }
                    if (faulty) dot = 0.0;
                    for (std::size_t j = 0; j < cols; ++j) {
                      const double yv = (*py)[r * cols + j];
                      (*s[0])[r * cols + j] += yv * (g[r * cols + j] - dot);
                    }
                  }
                });
}

}  // namespace

Var softmax_rows(const Var& a) { return softmax_impl(a, false); }
Var causal_softmax_rows(const Var& a) { return softmax_impl(a, true); }

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  const Tensor& X = x.value();
  const std::size_t d = X.cols();
  const std::size_t rows = X.rows();
  if (d == 0) throw DimensionError("layer_norm: empty last axis");
  if (gain.value().size() != d || bias.value().size() != d) {
    throw DimensionError("layer_norm: gain/bias " +
                         shape_string(gain.shape()) + "/" +
                         shape_string(bias.shape()) + " vs input " +
                         shape_string(X.shape()));
  }
  if (!(eps > 0.0)) throw ContractError("layer_norm: eps must be positive");
  const Tensor& G = gain.value();
  const Tensor& B = bias.value();
  Tensor y(X.shape());
  Tensor xhat(X.shape());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = X.row_span(r);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (row[j] - mean) * is;
      xhat[r * d + j] = h;
      y[r * d + j] = G[j] * h + B[j];
    }
  }
  Tape* tape = common_tape({&x, &gain, &bias});
  if (!tape) return Var(std::move(y));
  auto pxhat = std::make_shared<const Tensor>(std::move(xhat));
  auto pg = gain.shared_value();
  return finish(
      tape, std::move(y), {x, gain, bias},
      [pxhat, pg, inv_std = std::move(inv_std), rows, d](
          const Tensor& g, std::span<Tensor* const> s) {
        std::vector<double> dxhat(d);
        for (std::size_t r = 0; r < rows; ++r) {
          double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const double gy = g[r * d + j];
            const double h = (*pxhat)[r * d + j];
            if (s[1]) (*s[1])[j] += gy * h;
            if (s[2]) (*s[2])[j] += gy;
            dxhat[j] = gy * (*pg)[j];
            mean_dxhat += dxhat[j];
            mean_dxhat_xhat += dxhat[j] * h;
          }
          if (!s[0]) continue;
          mean_dxhat /= static_cast<double>(d);
          mean_dxhat_xhat /= static_cast<double>(d);
          for (std::size_t j = 0; j < d; ++j) {
            const double h = (*pxhat)[r * d + j];
            (*s[0])[r * d + j] +=
                inv_std[r] * (dxhat[j] - mean_dxhat - h * mean_dxhat_xhat);
          }
        }
      });
}

Var gather_rows(const Var& table, std::span<const std::ptrdiff_t> index) {
  const Tensor& T = table.value();
  require_matrix(T, "gather_rows");
  const std::size_t cols = T.cols();
  const std::size_t n = index.size();
  Tensor out({n, cols});
  for (std::size_t i = 0; i < n; ++i) {
    if (index[i] < 0) continue;
    const auto r = static_cast<std::size_t>(index[i]);
    if (r >= T.rows()) {
      throw DimensionError("gather_rows: row " + std::to_string(r) +
                           " out of range for " + shape_string(T.shape()));
    }
    std::copy_n(T.row_span(r).begin(), cols, out.row_span(i).begin());
  }
  std::vector<std::ptrdiff_t> idx(index.begin(), index.end());
  return finish(common_tape({&table}), std::move(out), {table},
                [idx = std::move(idx), cols](const Tensor& g,
                                             std::span<Tensor* const> s) {
                  for (std::size_t i = 0; i < idx.size(); ++i) {
                    if (idx[i] < 0) continue;
                    const auto r = static_cast<std::size_t>(idx[i]);
                    for (std::size_t j = 0; j < cols; ++j) {
                      (*s[0])[r * cols + j] += g[i * cols + j];
                    }
                  }
                });
}

Var slice_rows(const Var& a, std::size_t begin, std::size_t end) {
  const Tensor& A = a.value();
  require_matrix(A, "slice_rows");
  if (begin > end || end > A.rows()) {
    throw DimensionError("slice_rows [" + std::to_string(begin) + "," +
                         std::to_string(end) + ") of " +
                         shape_string(A.shape()));
  }
  const std::size_t cols = A.cols();
  std::vector<double> v(A.values().begin() + begin * cols,
                        A.values().begin() + end * cols);
  Tensor out({end - begin, cols}, std::move(v));
  return finish(common_tape({&a}), std::move(out), {a},
                [begin, cols](const Tensor& g, std::span<Tensor* const> s) {
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    (*s[0])[begin * cols + i] += g[i];
                  }
                });
}

Var slice_cols(const Var& a, std::size_t begin, std::size_t end) {
  const Tensor& A = a.value();
  require_matrix(A, "slice_cols");
  if (begin > end || end > A.cols()) {
    throw DimensionError("slice_cols [" + std::to_string(begin) + "," +
                         std::to_string(end) + ") of " +
                         shape_string(A.shape()));
  }
  const std::size_t rows = A.rows(), cols = A.cols(), w = end - begin;
  Tensor out({rows, w});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < w; ++j) out[r * w + j] = A[r * cols + begin + j];
  }
  return finish(common_tape({&a}), std::move(out), {a},
                [rows, cols, begin, w](const Tensor& g,
                                       std::span<Tensor* const> s) {
                  for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t j = 0; j < w; ++j) {
                      (*s[0])[r * cols + begin + j] += g[r * w + j];
                    }
                  }
                });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no parts");
  const std::size_t cols = parts[0].value().cols();
  std::size_t rows = 0;
  std::vector<std::size_t> offsets;
  for (const Var& p : parts) {
    if (p.value().cols() != cols) {
      throw DimensionError("concat_rows: column mismatch " +
                           shape_string(parts[0].shape()) + " vs " +
                           shape_string(p.shape()));
    }
    offsets.push_back(rows);
    rows += p.value().rows();
  }
  Tensor out({rows, cols});
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto v = parts[k].value().values();
    std::copy(v.begin(), v.end(), out.values().begin() + offsets[k] * cols);
  }
  std::vector<Var> parents(parts.begin(), parts.end());
  return finish(common_tape(parts), std::move(out), std::move(parents),
                [offsets, cols](const Tensor& g, std::span<Tensor* const> s) {
                  for (std::size_t k = 0; k < s.size(); ++k) {
                    if (!s[k]) continue;
                    const std::size_t base = offsets[k] * cols;
                    for (std::size_t i = 0; i < s[k]->size(); ++i) {
                      (*s[k])[i] += g[base + i];
                    }
                  }
                });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no parts");
  const std::size_t rows = parts[0].value().rows();
  std::size_t cols = 0;
  std::vector<std::size_t> offsets, widths;
  for (const Var& p : parts) {
    if (p.value().rows() != rows) {
      throw DimensionError("concat_cols: row mismatch " +
                           shape_string(parts[0].shape()) + " vs " +
                           shape_string(p.shape()));
    }
    offsets.push_back(cols);
    widths.push_back(p.value().cols());
    cols += p.value().cols();
  }
  Tensor out({rows, cols});
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& P = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < widths[k]; ++j) {
        out[r * cols + offsets[k] + j] = P[r * widths[k] + j];
      }
    }
  }
  std::vector<Var> parents(parts.begin(), parts.end());
  return finish(common_tape(parts), std::move(out), std::move(parents),
                [offsets, widths, rows, cols](const Tensor& g,
                                              std::span<Tensor* const> s) {
                  for (std::size_t k = 0; k < s.size(); ++k) {
                    if (!s[k]) continue;
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t j = 0; j < widths[k]; ++j) {
                        (*s[k])[r * widths[k] + j] +=
                            g[r * cols + offsets[k] + j];
                      }
                    }
                  }
                });
}

Var l2_normalize_rows(const Var& a) {
  const Tensor& A = a.value();
  const std::size_t rows = A.rows(), cols = A.cols();
  Tensor y(A.shape());
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double ss = 0.0;
    for (std::size_t j = 0; j < cols; ++j) ss += A[r * cols + j] * A[r * cols + j];
    const double n = std::sqrt(ss);
    if (n == 0.0) {
      throw ContractError("l2_normalize_rows: row " + std::to_string(r) +
                          " is a zero vector");
    }
    norms[r] = n;
    for (std::size_t j = 0; j < cols; ++j) y[r * cols + j] = A[r * cols + j] / n;
  }
  Tape* tape = common_tape({&a});
  if (!tape) return Var(std::move(y));
  auto py = std::make_shared<const Tensor>(y);
  return finish(tape, std::move(y), {a},
                [py, norms = std::move(norms), rows, cols](
                    const Tensor& g, std::span<Tensor* const> s) {
                  for (std::size_t r = 0; r < rows; ++r) {
                    double dot = 0.0;
                    for (std::size_t j = 0; j < cols; ++j) {
                      dot += g[r * cols + j] * (*py)[r * cols + j];
                    }
                    for (std::size_t j = 0; j < cols; ++j) {
                      (*s[0])[r * cols + j] +=
                          (g[r * cols + j] - (*py)[r * cols + j] * dot) /
                          norms[r];
                    }
                  }
                });
}

Var cross_entropy_row(const Var& logits, std::size_t target) {
  const Tensor& L = logits.value();
  const std::size_t n = L.size();
  if (L.rows() != 1 || target >= n) {
    throw DimensionError("cross_entropy_row: target " + std::to_string(target) +
                         " for logits " + shape_string(L.shape()));
  }
  double m = L[0];
  for (std::size_t j = 1; j < n; ++j) m = std::max(m, L[j]);
  double z = 0.0;
  for (std::size_t j = 0; j < n; ++j) z += std::exp(L[j] - m);
  const double lse = m + std::log(z);
  const double loss = lse - L[target];
  Tape* tape = common_tape({&logits});
  if (!tape) return Var(Tensor::scalar(loss));
  auto pl = logits.shared_value();
  return finish(tape, Tensor::scalar(loss), {logits},
                [pl, lse, target, n](const Tensor& g, std::span<Tensor* const> s) {
                  for (std::size_t j = 0; j < n; ++j) {
                    double p = std::exp((*pl)[j] - lse);
                    if (j == target) p -= 1.0;
                    (*s[0])[j] += g[0] * p;
                  }
                });
}

// --- verification ------------------------------------------------------------

FiniteDiffReport finite_diff_check(const ScalarFn& f,
                                   const std::vector<Tensor>& leaves,
                                   const FiniteDiffOptions& options) {
  if (!(options.h > 0.0)) throw ContractError("finite_diff_check: h must be > 0");

  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : leaves) vars.push_back(tape.leaf(t));
    Var loss = f(tape, vars);
    tape.backward(loss);
    for (const Var& v : vars) analytic.push_back(tape.grad(v));
  }

  auto evaluate = [&](const std::vector<Tensor>& point) {
    Tape tape(false);
    std::vector<Var> vars;
    for (const Tensor& t : point) vars.push_back(tape.leaf(t));
    return f(tape, vars).value().item();
  };

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    for (std::size_t i = 0; i < leaves[l].size(); ++i) coords.emplace_back(l, i);
  }
  if (options.max_coords > 0 && coords.size() > options.max_coords) {
    std::mt19937_64 rng(options.seed);
    // Partial Fisher-Yates: the first max_coords entries become the sample.
    for (std::size_t i = 0; i < options.max_coords; ++i) {
      const std::size_t j = i + rng() % (coords.size() - i);
      std::swap(coords[i], coords[j]);
    }
    coords.resize(options.max_coords);
  }

  FiniteDiffReport report;
  std::vector<Tensor> point = leaves;
  for (const auto& [l, i] : coords) {
    const double orig = point[l][i];
    point[l][i] = orig + options.h;
    const double up = evaluate(point);
    point[l][i] = orig - options.h;
    const double down = evaluate(point);
    point[l][i] = orig;
    const double numeric = (up - down) / (2.0 * options.h);
    const double a = analytic[l][i];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-12});
    const double rel = std::abs(a - numeric) / denom;
    ++report.coords_checked;
    if (rel > report.max_rel_error || report.coords_checked == 1) {
      report.max_rel_error = std::max(report.max_rel_error, rel);
      if (rel >= report.max_rel_error) {
        report.worst_leaf = l;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace uemb::ad
