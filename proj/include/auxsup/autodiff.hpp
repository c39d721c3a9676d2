// auxsup/autodiff.hpp
//
// Copyright 2026 The auxsup Authors
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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "auxsup/rng.hpp"
#include "auxsup/tensor.hpp"

namespace auxsup {

// A named tensor registered for optimization. Gradients accumulate by
// summation; the optimizer zeroes them between steps.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {
    grad = Tensor(value.shape());
  }
};

using ParameterPtr = std::shared_ptr<Parameter>;

// Owns parameters in a stable creation order; names are unique.
class ParameterStore {
 public:
  ParameterPtr create(const std::string& name, Tensor init) {
    if (index_.count(name))
      throw std::invalid_argument("ParameterStore: duplicate parameter name '" + name + "'");
    auto p = std::make_shared<Parameter>(name, std::move(init));
    index_[name] = list_.size();
    list_.push_back(p);
    return p;
  }

  ParameterPtr find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : list_[it->second];
  }

  const std::vector<ParameterPtr>& all() const { return list_; }

  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& p : list_) n += p->value.numel();
    return n;
  }

  void zero_grad() {
    for (auto& p : list_) p->grad.fill(0.0);
  }

 private:
  std::vector<ParameterPtr> list_;
  std::unordered_map<std::string, std::size_t> index_;
};

class Tape;

namespace detail {
struct Node {
  Tensor value;
  Tensor grad;
  std::function<void()> backward;  // empty for leaves
};
}  // namespace detail

// Handle to a node on a tape. Cheap to copy; lifetime is bounded by the tape.
class Var {
 public:
  Var() = default;
  const Tensor& value() const { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  bool valid() const { return node_ != nullptr; }
  Tape* tape() const { return tape_; }

 private:
  friend class Tape;
  Var(Tape* t, detail::Node* n) : tape_(t), node_(n) {}
  Tape* tape_ = nullptr;
  detail::Node* node_ = nullptr;
};

// Records one forward computation. Nodes are stored in creation order, which
// is a valid topological order, so the reverse sweep visits each node exactly
// once. One tape is confined to one thread; distinct tapes may run
// concurrently.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf holding a constant; gradients flow into it but go nowhere further.
  Var constant(Tensor value) { return alloc(std::move(value), nullptr); }

  // Leaf bound to a parameter: after the reverse sweep its gradient is added
  // into the parameter's accumulator.
  Var param(const ParameterPtr& p) {
    Var v = alloc(p->value, nullptr);
    bindings_.emplace_back(v.node_, p.get());
    return v;
  }

  // Low-level node constructor for custom ops. The backward callable adds
  // this node's gradient contribution into its parents' grad tensors.
  Var alloc(Tensor value, std::function<void()> backward) {
    auto node = std::make_unique<detail::Node>();
    node->value = std::move(value);
    node->grad = Tensor(node->value.shape());
    node->backward = std::move(backward);
    detail::Node* raw = node.get();
    nodes_.push_back(std::move(node));
    return Var(this, raw);
  }

  detail::Node* node_of(const Var& v) { return v.node_; }

  // Reverse sweep from a scalar loss. May be called once per tape.
  void backward(const Var& loss) {
    if (loss.tape_ != this) throw std::invalid_argument("backward: node is not on this tape");
    if (loss.node_->value.numel() != 1)
      throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                  loss.node_->value.shape_str());
    if (!std::isfinite(loss.node_->value[0]))
      throw std::invalid_argument("backward: loss is not finite");
    if (swept_) throw std::logic_error("backward: tape already swept");
    swept_ = true;
    loss.node_->grad[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if ((*it)->backward) (*it)->backward();
    }
    for (auto& [node, param] : bindings_) {
      for (std::size_t i = 0; i < node->grad.numel(); ++i) param->grad[i] += node->grad[i];
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<std::unique_ptr<detail::Node>> nodes_;
  std::vector<std::pair<detail::Node*, Parameter*>> bindings_;
  bool swept_ = false;
};

namespace detail {

inline Node* unwrap(Tape& t, const Var& v) {
  if (v.tape() != &t) throw std::invalid_argument("op: operands belong to different tapes");
  return t.node_of(v);
}

inline Tape& tape_of(const Var& v) {
  if (!v.valid()) throw std::invalid_argument("op: empty Var");
  return *v.tape();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Forward ops. Shapes are validated up front; errors name both shapes.
// ---------------------------------------------------------------------------

inline Var matmul(const Var& a, const Var& b) {
  Tape& t = detail::tape_of(a);
  auto* na = detail::unwrap(t, a);
  auto* nb = detail::unwrap(t, b);
  const Tensor& A = na->value;
  const Tensor& B = nb->value;
  if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.rows())
    throw std::invalid_argument("matmul: incompatible shapes " + A.shape_str() + " x " +
                                B.shape_str());
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  Tensor C({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = A.data() + i * k;
    double* crow = C.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = B.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  Var out = t.alloc(std::move(C), nullptr);
  auto* no = t.node_of(out);
  no->backward = [na, nb, no, m, k, n]() {
    // dA += dC * B^T ; dB += A^T * dC
    for (std::size_t i = 0; i < m; ++i) {
      const double* grow = no->grad.data() + i * n;
      double* darow = na->grad.data() + i * k;
      const double* arow = na->value.data() + i * k;
      for (std::size_t p = 0; p < k; ++p) {
        const double* brow = nb->value.data() + p * n;
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
        darow[p] += acc;
        const double av = arow[p];
        if (av != 0.0) {
          double* dbrow = nb->grad.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) dbrow[j] += av * grow[j];
        }
      }
    }
  };
  return out;
}

// add: same-shape elementwise, or rank-2 + rank-1 broadcast over rows.
inline Var add(const Var& a, const Var& b) {
  Tape& t = detail::tape_of(a);
  auto* na = detail::unwrap(t, a);
  auto* nb = detail::unwrap(t, b);
  const Tensor& A = na->value;
  const Tensor& B = nb->value;
  if (A.same_shape(B)) {
    Tensor C = A;
    for (std::size_t i = 0; i < C.numel(); ++i) C[i] += B[i];
    Var out = t.alloc(std::move(C), nullptr);
    auto* no = t.node_of(out);
    no->backward = [na, nb, no]() {
      for (std::size_t i = 0; i < no->grad.numel(); ++i) {
        na->grad[i] += no->grad[i];
        nb->grad[i] += no->grad[i];
      }
    };
    return out;
  }
  // Row broadcast: rank-1 vector or 1 x n matrix added to every row.
  const bool b_vec = B.rank() == 1 && A.rank() == 2 && A.cols() == B.size();
  const bool b_row = B.rank() == 2 && A.rank() == 2 && B.rows() == 1 && A.cols() == B.cols();
  if (b_vec || b_row) {
    Tensor C = A;
    const std::size_t m = A.rows(), n = A.cols();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) C(i, j) += B[j];
    Var out = t.alloc(std::move(C), nullptr);
    auto* no = t.node_of(out);
    no->backward = [na, nb, no, m, n]() {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          na->grad(i, j) += no->grad(i, j);
          nb->grad[j] += no->grad(i, j);
        }
    };
    return out;
  }
  throw std::invalid_argument("add: incompatible shapes " + A.shape_str() + " vs " +
                              B.shape_str());
}

inline Var mul(const Var& a, const Var& b) {
  Tape& t = detail::tape_of(a);
  auto* na = detail::unwrap(t, a);
  auto* nb = detail::unwrap(t, b);
  check_same_shape(na->value, nb->value, "mul");
  Tensor C = na->value;
  for (std::size_t i = 0; i < C.numel(); ++i) C[i] *= nb->value[i];
  Var out = t.alloc(std::move(C), nullptr);
  auto* no = t.node_of(out);
  no->backward = [na, nb, no]() {
    for (std::size_t i = 0; i < no->grad.numel(); ++i) {
      na->grad[i] += no->grad[i] * nb->value[i];
      nb->grad[i] += no->grad[i] * na->value[i];
    }
  };
  return out;
}

inline Var scale(const Var& a, double c) {
  Tape& t = detail::tape_of(a);
  auto* na = detail::unwrap(t, a);
  Tensor C = na->value;
  for (std::size_t i = 0; i < C.numel(); ++i) C[i] *= c;
  Var out = t.alloc(std::move(C), nullptr);
  auto* no = t.node_of(out);
  no->backward = [na, no, c]() {
    for (std::size_t i = 0; i < no->grad.numel(); ++i) na->grad[i] += c * no->grad[i];
  };
  return out;
}

inline Var sigmoid(const Var& a) {
  Tape& t = detail::tape_of(a);
  auto* na = detail::unwrap(t, a);
  Tensor C = na->value;
  for (std::size_t i = 0; i < C.numel(); ++i) C[i] = 1.0 / (1.0 + std::exp(-C[i]));
  Var out = t.alloc(std::move(C), nullptr);
  auto* no = t.node_of(out);
  no->backward = [na, no]() {
    for (std::size_t i = 0; i < no->grad.numel(); ++i) {
      const double y = no->value[i];
      na->grad[i] += no->grad[i] * y * (1.0 - y);
    }
  };
  return out;
}

inline Var tanh_op(const Var& a) {
  Tape& t = detail::tape_of(a);
  auto* na = detail::unwrap(t, a);
  Tensor C = na->value;
  for (std::size_t i = 0; i < C.numel(); ++i) C[i] = std::tanh(C[i]);
  Var out = t.alloc(std::move(C), nullptr);
  auto* no = t.node_of(out);
  no->backward = [na, no]() {
    for (std::size_t i = 0; i < no->grad.numel(); ++i) {
      const double y = no->value[i];
      na->grad[i] += no->grad[i] * (1.0 - y * y);
    }
  };
  return out;
}

inline Var relu(const Var& a) {
  Tape& t = detail::tape_of(a);
  auto* na = detail::unwrap(t, a);
  Tensor C = na->value;
  for (std::size_t i = 0; i < C.numel(); ++i) C[i] = C[i] > 0.0 ? C[i] : 0.0;
  Var out = t.alloc(std::move(C), nullptr);
  auto* no = t.node_of(out);
  no->backward = [na, no]() {
    for (std::size_t i = 0; i < no->grad.numel(); ++i)
      if (na->value[i] > 0.0) na->grad[i] += no->grad[i];
  };
  return out;
}

namespace detail {

// Rows of a rank-2 tensor, or the whole of a rank-1 tensor.
inline std::pair<std::size_t, std::size_t> row_view(const Tensor& x, const char* op) {
  if (x.rank() == 1) return {1, x.size()};
  if (x.rank() == 2) return {x.rows(), x.cols()};
  throw std::invalid_argument(std::string(op) + ": expected rank 1 or 2, got " + x.shape_str());
}

}  // namespace detail

// softmax over the last dimension (per row for rank 2).
inline Var softmax(const Var& a) {
  Tape& t = detail::tape_of(a);
  auto* na = detail::unwrap(t, a);
  auto [rows, cols] = detail::row_view(na->value, "softmax");
  Tensor C = na->value;
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = C.data() + r * cols;
    double mx = row[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      row[j] = std::exp(row[j] - mx);
      z += row[j];
    }
    for (std::size_t j = 0; j < cols; ++j) row[j] /= z;
  }
  Var out = t.alloc(std::move(C), nullptr);
  auto* no = t.node_of(out);
  no->backward = [na, no, rows = rows, cols = cols]() {
    // dx = y * (dy - sum(dy * y))
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = no->value.data() + r * cols;
      const double* dy = no->grad.data() + r * cols;
      double* dx = na->grad.data() + r * cols;
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j) dot += dy[j] * y[j];
      for (std::size_t j = 0; j < cols; ++j) dx[j] += y[j] * (dy[j] - dot);
    }
  };
  return out;
}

// log-softmax over the last dimension, computed with max subtraction.
inline Var log_softmax(const Var& a) {
  Tape& t = detail::tape_of(a);
  auto* na = detail::unwrap(t, a);
  auto [rows, cols] = detail::row_view(na->value, "log_softmax");
  Tensor C = na->value;
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = C.data() + r * cols;
    double mx = row[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) z += std::exp(row[j] - mx);
    const double lz = mx + std::log(z);
    for (std::size_t j = 0; j < cols; ++j) row[j] -= lz;
  }
  Var out = t.alloc(std::move(C), nullptr);
  auto* no = t.node_of(out);
  no->backward = [na, no, rows = rows, cols = cols]() {
    // dx = dy - softmax(x) * sum(dy)
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = no->value.data() + r * cols;  // log-probs
      const double* dy = no->grad.data() + r * cols;
      double* dx = na->grad.data() + r * cols;
      double s = 0.0;
      for (std::size_t j = 0; j < cols; ++j) s += dy[j];
      for (std::size_t j = 0; j < cols; ++j) dx[j] += dy[j] - std::exp(y[j]) * s;
    }
  };
  return out;
}

// concat along axis 0 (stack rows) or axis 1 (widen columns), rank 2.
inline Var concat(const std::vector<Var>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no operands");
  Tape& t = detail::tape_of(parts[0]);
  std::vector<detail::Node*> ns;
  ns.reserve(parts.size());
  for (const auto& p : parts) ns.push_back(detail::unwrap(t, p));
  for (auto* n : ns)
    if (n->value.rank() != 2)
      throw std::invalid_argument("concat: expected rank-2 operands, got " +
                                  n->value.shape_str());
  std::size_t rows = 0, cols = 0;
  if (axis == 0) {
    cols = ns[0]->value.cols();
    for (auto* n : ns) {
      if (n->value.cols() != cols)
        throw std::invalid_argument("concat axis 0: column mismatch " + n->value.shape_str());
      rows += n->value.rows();
    }
  } else if (axis == 1) {
    rows = ns[0]->value.rows();
    for (auto* n : ns) {
      if (n->value.rows() != rows)
        throw std::invalid_argument("concat axis 1: row mismatch " + n->value.shape_str());
      cols += n->value.cols();
    }
  } else {
    throw std::invalid_argument("concat: axis must be 0 or 1");
  }
  Tensor C({rows, cols});
  if (axis == 0) {
    std::size_t r0 = 0;
    for (auto* n : ns) {
      std::copy(n->value.data(), n->value.data() + n->value.numel(), C.data() + r0 * cols);
      r0 += n->value.rows();
    }
  } else {
    std::size_t c0 = 0;
    for (auto* n : ns) {
      const std::size_t w = n->value.cols();
      for (std::size_t r = 0; r < rows; ++r)
        std::copy(n->value.data() + r * w, n->value.data() + (r + 1) * w,
                  C.data() + r * cols + c0);
      c0 += w;
    }
  }
  Var out = t.alloc(std::move(C), nullptr);
  auto* no = t.node_of(out);
  no->backward = [ns, no, axis, rows, cols]() {
    if (axis == 0) {
      std::size_t r0 = 0;
      for (auto* n : ns) {
        const std::size_t cnt = n->value.numel();
        const double* g = no->grad.data() + r0 * cols;
        for (std::size_t i = 0; i < cnt; ++i) n->grad[i] += g[i];
        r0 += n->value.rows();
      }
    } else {
      std::size_t c0 = 0;
      for (auto* n : ns) {
        const std::size_t w = n->value.cols();
        for (std::size_t r = 0; r < rows; ++r) {
          const double* g = no->grad.data() + r * cols + c0;
          double* d = n->grad.data() + r * w;
          for (std::size_t j = 0; j < w; ++j) d[j] += g[j];
        }
        c0 += w;
      }
    }
  };
  return out;
}

inline Var slice_rows(const Var& a, std::size_t r0, std::size_t r1) {
  Tape& t = detail::tape_of(a);
  auto* na = detail::unwrap(t, a);
  const Tensor& A = na->value;
  if (A.rank() != 2 || r0 >= r1 || r1 > A.rows())
    throw std::invalid_argument("slice_rows: bad range [" + std::to_string(r0) + "," +
                                std::to_string(r1) + ") for " + A.shape_str());
  const std::size_t cols = A.cols();
  Tensor C({r1 - r0, cols});
  std::copy(A.data() + r0 * cols, A.data() + r1 * cols, C.data());
  Var out = t.alloc(std::move(C), nullptr);
  auto* no = t.node_of(out);
  no->backward = [na, no, r0, cols]() {
    double* d = na->grad.data() + r0 * cols;
    for (std::size_t i = 0; i < no->grad.numel(); ++i) d[i] += no->grad[i];
  };
  return out;
}

inline Var row(const Var& a, std::size_t r) { return slice_rows(a, r, r + 1); }

inline Var slice_cols(const Var& a, std::size_t c0, std::size_t c1) {
  Tape& t = detail::tape_of(a);
  auto* na = detail::unwrap(t, a);
  const Tensor& A = na->value;
  if (A.rank() != 2 || c0 >= c1 || c1 > A.cols())
    throw std::invalid_argument("slice_cols: bad range [" + std::to_string(c0) + "," +
                                std::to_string(c1) + ") for " + A.shape_str());
  const std::size_t rows = A.rows(), cols = A.cols(), w = c1 - c0;
  Tensor C({rows, w});
  for (std::size_t r = 0; r < rows; ++r)
    std::copy(A.data() + r * cols + c0, A.data() + r * cols + c1, C.data() + r * w);
  Var out = t.alloc(std::move(C), nullptr);
  auto* no = t.node_of(out);
  no->backward = [na, no, rows, cols, c0, w]() {
    for (std::size_t r = 0; r < rows; ++r) {
      const double* g = no->grad.data() + r * w;
      double* d = na->grad.data() + r * cols + c0;
      for (std::size_t j = 0; j < w; ++j) d[j] += g[j];
    }
  };
  return out;
}

inline Var transpose(const Var& a) {
  Tape& t = detail::tape_of(a);
  auto* na = detail::unwrap(t, a);
  const Tensor& A = na->value;
  if (A.rank() != 2) throw std::invalid_argument("transpose: expected rank 2, got " + A.shape_str());
  const std::size_t rows = A.rows(), cols = A.cols();
  Tensor C({cols, rows});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) C(c, r) = A(r, c);
  Var out = t.alloc(std::move(C), nullptr);
  auto* no = t.node_of(out);
  no->backward = [na, no, rows, cols]() {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) na->grad(r, c) += no->grad(c, r);
  };
  return out;
}

// Max over time windows of `stride` rows; the ragged tail window is kept, so
// the output has ceil(T / stride) rows.
inline Var time_max_pool(const Var& a, std::size_t stride) {
  Tape& t = detail::tape_of(a);
  auto* na = detail::unwrap(t, a);
  const Tensor& A = na->value;
  if (A.rank() != 2) throw std::invalid_argument("time_max_pool: expected rank 2");
  if (stride < 1) throw std::invalid_argument("time_max_pool: stride must be >= 1");
  if (stride == 1) return a;
  const std::size_t rows = A.rows(), cols = A.cols();
  const std::size_t out_rows = (rows + stride - 1) / stride;
  Tensor C({out_rows, cols});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out_rows * cols);
  for (std::size_t o = 0; o < out_rows; ++o) {
    const std::size_t lo = o * stride, hi = std::min(rows, lo + stride);
    for (std::size_t c = 0; c < cols; ++c) {
      std::size_t best = lo;
      double bv = A(lo, c);
      for (std::size_t r = lo + 1; r < hi; ++r)
        if (A(r, c) > bv) {
          bv = A(r, c);
          best = r;
        }
      C(o, c) = bv;
      (*argmax)[o * cols + c] = best;
    }
  }
  Var out = t.alloc(std::move(C), nullptr);
  auto* no = t.node_of(out);
  no->backward = [na, no, argmax, out_rows, cols]() {
    for (std::size_t o = 0; o < out_rows; ++o)
      for (std::size_t c = 0; c < cols; ++c)
        na->grad((*argmax)[o * cols + c], c) += no->grad(o, c);
  };
  return out;
}

// Inverted dropout: kept activations scale by 1/(1-rate). rate 0 is the
// identity; callers skip the op entirely in evaluation mode.
inline Var dropout(const Var& a, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0, 1)");
  if (rate == 0.0) return a;
  Tape& t = detail::tape_of(a);
  auto* na = detail::unwrap(t, a);
  const double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(na->value.numel());
  Tensor C = na->value;
  for (std::size_t i = 0; i < C.numel(); ++i) {
    const double m = rng.uniform() < rate ? 0.0 : keep_scale;
    (*mask)[i] = m;
    C[i] *= m;
  }
  Var out = t.alloc(std::move(C), nullptr);
  auto* no = t.node_of(out);
  no->backward = [na, no, mask]() {
    for (std::size_t i = 0; i < no->grad.numel(); ++i) na->grad[i] += no->grad[i] * (*mask)[i];
  };
  return out;
}

// Elementwise max(x, floor). Gradient passes only where x > floor, matching
// floor-before-log semantics.
inline Var clamp_min(const Var& a, double floor) {
  Tape& t = detail::tape_of(a);
  auto* na = detail::unwrap(t, a);
  Tensor C = na->value;
  for (std::size_t i = 0; i < C.numel(); ++i) C[i] = std::max(C[i], floor);
  Var out = t.alloc(std::move(C), nullptr);
  auto* no = t.node_of(out);
  no->backward = [na, no, floor]() {
    for (std::size_t i = 0; i < no->grad.numel(); ++i)
      if (na->value[i] > floor) na->grad[i] += no->grad[i];
  };
  return out;
}

inline Var sum(const Var& a) {
  Tape& t = detail::tape_of(a);
  auto* na = detail::unwrap(t, a);
  double s = 0.0;
  for (std::size_t i = 0; i < na->value.numel(); ++i) s += na->value[i];
  Var out = t.alloc(Tensor::scalar(s), nullptr);
  auto* no = t.node_of(out);
  no->backward = [na, no]() {
    const double g = no->grad[0];
    for (std::size_t i = 0; i < na->grad.numel(); ++i) na->grad[i] += g;
  };
  return out;
}

inline Var mean(const Var& a) {
  Tape& t = detail::tape_of(a);
  auto* na = detail::unwrap(t, a);
  const std::size_t n = na->value.numel();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += na->value[i];
  Var out = t.alloc(Tensor::scalar(s / static_cast<double>(n)), nullptr);
  auto* no = t.node_of(out);
  no->backward = [na, no, n]() {
    const double g = no->grad[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < na->grad.numel(); ++i) na->grad[i] += g;
  };
  return out;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient verification.
// ---------------------------------------------------------------------------

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
};

// Central differences against the reverse-mode gradient for every component
// of every parameter in the store. The builder must be a deterministic
// function of the parameter values (fixed dropout seeds).
inline GradCheckReport grad_check(ParameterStore& params,
                                  const std::function<Var(Tape&)>& build, double eps = 1e-5) {
  params.zero_grad();
  std::vector<Tensor> analytic;
  {
    Tape tape;
    Var loss = build(tape);
    tape.backward(loss);
  }
  for (const auto& p : params.all()) analytic.push_back(p->grad);

  auto eval = [&](const char* where, const std::string& pname, std::size_t idx) {
    Tape tape;
    Var loss = build(tape);
    const double v = loss.value()[0];
    if (!std::isfinite(v))
      throw std::runtime_error(std::string("grad_check: non-finite loss while probing ") + where +
                               " of " + pname + "[" + std::to_string(idx) + "]");
    return v;
  };

  GradCheckReport report;
  const auto& all = params.all();
  for (std::size_t pi = 0; pi < all.size(); ++pi) {
    Parameter& p = *all[pi];
    for (std::size_t i = 0; i < p.value.numel(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + eps;
      const double f1 = eval("+eps", p.name, i);
      p.value[i] = saved - eps;
      const double f2 = eval("-eps", p.name, i);
      p.value[i] = saved;
      const double numeric = (f1 - f2) / (2.0 * eps);
      const double a = analytic[pi][i];
      const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = p.name;
        report.worst_index = i;
      }
    }
  }
  return report;
}

}  // namespace auxsup
