#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dfa/ad/gemm.hpp"
#include "dfa/ad/tape.hpp"
#include "dfa/ad/tensor.hpp"
#include "dfa/errors.hpp"
#include "dfa/fnv.hpp"

namespace dfa::ad {

// When set, every relu forward folds the sign pattern of its input into this
// hash. The finite-difference harness uses it to detect coordinates whose
// perturbation crosses a kink.
inline thread_local uint64_t* relu_sign_sink = nullptr;

template <class T>
bool needs_grad(const Tape<T>* tape, const Tensor<T>& t) {
  if (!tape) return false;
  if (t.node() >= 0 && t.epoch() != tape->epoch()) {
    throw ContractError("tensor recorded on a stale tape epoch used as op input");
  }
  return t.requires_grad() || t.node() >= 0;
}

inline std::vector<uint64_t> grad_ids(bool ga, uint64_t a, bool gb, uint64_t b) {
  std::vector<uint64_t> v;
  if (ga) v.push_back(a);
  if (gb) v.push_back(b);
  return v;
}

inline std::vector<uint64_t> grad_ids(bool ga, uint64_t a, bool gb, uint64_t b,
                                      bool gc, uint64_t c) {
  std::vector<uint64_t> v = grad_ids(ga, a, gb, b);
  if (gc) v.push_back(c);
  return v;
}

template <class T>
void check_2d(const Tensor<T>& t, const char* who) {
  if (t.ndim() != 2) {
    throw ContractError(std::string(who) + ": expected rank-2 tensor, got " +
                        shape_str(t.shape()));
  }
}

// ---------------------------------------------------------------------------
// matmul: [m,k] x [k,n] -> [m,n]

template <class T>
Tensor<T> matmul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  check_2d(a, "matmul lhs");
  check_2d(b, "matmul rhs");
  if (a.dim(1) != b.dim(0)) {
    throw ContractError("matmul inner dimensions differ: " +
                        shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<T> c({m, n});
  if (m > 0 && n > 0 && k > 0) {
    gemm(false, false, m, n, k, T(1), a.vals().data(), k, b.vals().data(), n,
         T(0), c.vals().data(), n);
  }
  const bool ga = needs_grad(tape, a), gb = needs_grad(tape, b);
  if (tape && (ga || gb)) {
    Tensor<T> ca = a, cb = b, cc = c;
    int node = tape->push("matmul", c.id(), {a.id(), b.id()},
                          grad_ids(ga, a.id(), gb, b.id()),
                          [ca, cb, cc, m, n, k, ga, gb]() mutable {
      if (!cc.has_grad()) return;
      const T* gc = cc.grad().data();
      if (ga && m > 0 && k > 0 && n > 0) {
        ca.ensure_grad();
        gemm(false, true, m, k, n, T(1), gc, n, cb.vals().data(), n, T(1),
             ca.grad().data(), k);
      }
      if (gb && k > 0 && n > 0 && m > 0) {
        cb.ensure_grad();
        gemm(true, false, k, n, m, T(1), ca.vals().data(), k, gc, n, T(1),
             cb.grad().data(), n);
      }
    });
    c.bind_node(node, tape->epoch());
  }
  return c;
}

// ---------------------------------------------------------------------------
// add_bias: [m,n] + [n] broadcast over rows

template <class T>
Tensor<T> add_bias(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& bias) {
  check_2d(x, "add_bias input");
  if (bias.ndim() != 1 || bias.dim(0) != x.dim(1)) {
    throw ContractError("add_bias: bias " + shape_str(bias.shape()) +
                        " does not match input " + shape_str(x.shape()));
  }
  const int m = x.dim(0), n = x.dim(1);
  Tensor<T> out({m, n});
  for (int i = 0; i < m; ++i) {
    const T* xr = x.vals().data() + static_cast<size_t>(i) * n;
    T* outr = out.vals().data() + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) outr[j] = xr[j] + bias.vals()[static_cast<size_t>(j)];
  }
  const bool gx = needs_grad(tape, x), gb = needs_grad(tape, bias);
  if (tape && (gx || gb)) {
    Tensor<T> cx = x, cb = bias, co = out;
    int node = tape->push("add_bias", out.id(), {x.id(), bias.id()},
                          grad_ids(gx, x.id(), gb, bias.id()),
                          [cx, cb, co, m, n, gx, gb]() mutable {
      if (!co.has_grad()) return;
      const T* g = co.grad().data();
      if (gx) cx.accumulate_grad(std::span<const T>(g, static_cast<size_t>(m) * n));
      if (gb) {
        cb.ensure_grad();
        T* gbuf = cb.grad().data();
        for (int i = 0; i < m; ++i) {
          const T* gr = g + static_cast<size_t>(i) * n;
          for (int j = 0; j < n; ++j) gbuf[j] += gr[j];
        }
      }
    });
    out.bind_node(node, tape->epoch());
  }
  return out;
}

// ---------------------------------------------------------------------------
// elementwise ops (same shape)

template <class T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* who) {
  if (a.shape() != b.shape()) {
    throw ContractError(std::string(who) + ": shape mismatch " +
                        shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

template <class T>
Tensor<T> add(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "add");
  Tensor<T> out(a.shape());
  for (int64_t i = 0; i < a.size(); ++i) {
    out.vals()[static_cast<size_t>(i)] =
        a.vals()[static_cast<size_t>(i)] + b.vals()[static_cast<size_t>(i)];
  }
  const bool ga = needs_grad(tape, a), gb = needs_grad(tape, b);
  if (tape && (ga || gb)) {
    Tensor<T> ca = a, cb = b, co = out;
    int node = tape->push("add", out.id(), {a.id(), b.id()},
                          grad_ids(ga, a.id(), gb, b.id()),
                          [ca, cb, co, ga, gb]() mutable {
      if (!co.has_grad()) return;
      const auto& g = co.grad();
      if (ga) ca.accumulate_grad(std::span<const T>(g.data(), g.size()));
      if (gb) cb.accumulate_grad(std::span<const T>(g.data(), g.size()));
    });
    out.bind_node(node, tape->epoch());
  }
  return out;
}

template <class T>
Tensor<T> sub(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "sub");
  Tensor<T> out(a.shape());
  for (int64_t i = 0; i < a.size(); ++i) {
    out.vals()[static_cast<size_t>(i)] =
        a.vals()[static_cast<size_t>(i)] - b.vals()[static_cast<size_t>(i)];
  }
  const bool ga = needs_grad(tape, a), gb = needs_grad(tape, b);
  if (tape && (ga || gb)) {
    Tensor<T> ca = a, cb = b, co = out;
    int node = tape->push("sub", out.id(), {a.id(), b.id()},
                          grad_ids(ga, a.id(), gb, b.id()),
                          [ca, cb, co, ga, gb]() mutable {
      if (!co.has_grad()) return;
      const auto& g = co.grad();
      if (ga) ca.accumulate_grad(std::span<const T>(g.data(), g.size()));
      if (gb) {
        cb.ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) cb.grad()[i] -= g[i];
      }
    });
    out.bind_node(node, tape->epoch());
  }
  return out;
}

template <class T>
Tensor<T> mul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "mul");
  Tensor<T> out(a.shape());
  for (int64_t i = 0; i < a.size(); ++i) {
    out.vals()[static_cast<size_t>(i)] =
        a.vals()[static_cast<size_t>(i)] * b.vals()[static_cast<size_t>(i)];
  }
  const bool ga = needs_grad(tape, a), gb = needs_grad(tape, b);
  if (tape && (ga || gb)) {
    Tensor<T> ca = a, cb = b, co = out;
    int node = tape->push("mul", out.id(), {a.id(), b.id()},
                          grad_ids(ga, a.id(), gb, b.id()),
                          [ca, cb, co, ga, gb]() mutable {
      if (!co.has_grad()) return;
      const auto& g = co.grad();
      if (ga) {
        ca.ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) ca.grad()[i] += g[i] * cb.vals()[i];
      }
      if (gb) {
        cb.ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) cb.grad()[i] += g[i] * ca.vals()[i];
      }
    });
    out.bind_node(node, tape->epoch());
  }
  return out;
}

template <class T>
Tensor<T> scale(Tape<T>* tape, const Tensor<T>& x, double c) {
  Tensor<T> out(x.shape());
  for (int64_t i = 0; i < x.size(); ++i) {
    out.vals()[static_cast<size_t>(i)] =
        static_cast<T>(c) * x.vals()[static_cast<size_t>(i)];
  }
  if (tape && needs_grad(tape, x)) {
    Tensor<T> cx = x, co = out;
    int node = tape->push("scale", out.id(), {x.id()}, {x.id()}, [cx, co, c]() mutable {
      if (!co.has_grad()) return;
      const auto& g = co.grad();
      cx.ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) cx.grad()[i] += static_cast<T>(c) * g[i];
    });
    out.bind_node(node, tape->epoch());
  }
  return out;
}

// ---------------------------------------------------------------------------
// relu

template <class T>
Tensor<T> relu(Tape<T>* tape, const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  if (relu_sign_sink) {
    uint64_t h = *relu_sign_sink;
    for (int64_t i = 0; i < x.size(); ++i) {
      h = (h ^ static_cast<uint64_t>(x.vals()[static_cast<size_t>(i)] > T(0))) *
          kFnvPrime;
    }
    *relu_sign_sink = h;
  }
  for (int64_t i = 0; i < x.size(); ++i) {
    T v = x.vals()[static_cast<size_t>(i)];
    out.vals()[static_cast<size_t>(i)] = v > T(0) ? v : T(0);
  }
  if (tape && needs_grad(tape, x)) {
    Tensor<T> cx = x, co = out;
    int node = tape->push("relu", out.id(), {x.id()}, {x.id()}, [cx, co]() mutable {
      if (!co.has_grad()) return;
      const auto& g = co.grad();
      cx.ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) {
        if (cx.vals()[i] > T(0)) cx.grad()[i] += g[i];
      }
    });
    out.bind_node(node, tape->epoch());
  }
  return out;
}

// ---------------------------------------------------------------------------
// concat_cols: [m,p] ++ [m,q] -> [m,p+q]

template <class T>
Tensor<T> concat_cols(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  check_2d(a, "concat_cols lhs");
  check_2d(b, "concat_cols rhs");
  if (a.dim(0) != b.dim(0)) {
    throw ContractError("concat_cols: row counts differ: " +
                        shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const int m = a.dim(0), p = a.dim(1), q = b.dim(1);
  Tensor<T> out({m, p + q});
  for (int i = 0; i < m; ++i) {
    T* dst = out.vals().data() + static_cast<size_t>(i) * (p + q);
    std::copy_n(a.vals().data() + static_cast<size_t>(i) * p, p, dst);
    std::copy_n(b.vals().data() + static_cast<size_t>(i) * q, q, dst + p);
  }
  const bool ga = needs_grad(tape, a), gb = needs_grad(tape, b);
  if (tape && (ga || gb)) {
    Tensor<T> ca = a, cb = b, co = out;
    int node = tape->push("concat_cols", out.id(), {a.id(), b.id()},
                          grad_ids(ga, a.id(), gb, b.id()),
                          [ca, cb, co, m, p, q, ga, gb]() mutable {
      if (!co.has_grad()) return;
      const T* g = co.grad().data();
      if (ga) ca.ensure_grad();
      if (gb) cb.ensure_grad();
      for (int i = 0; i < m; ++i) {
        const T* gr = g + static_cast<size_t>(i) * (p + q);
        if (ga) {
          T* da = ca.grad().data() + static_cast<size_t>(i) * p;
          for (int j = 0; j < p; ++j) da[j] += gr[j];
        }
        if (gb) {
          T* db = cb.grad().data() + static_cast<size_t>(i) * q;
          for (int j = 0; j < q; ++j) db[j] += gr[p + j];
        }
      }
    });
    out.bind_node(node, tape->epoch());
  }
  return out;
}

// ---------------------------------------------------------------------------
// gather_rows: out[i,:] = x[perm[i],:], perm must be a bijection

template <class T>
Tensor<T> gather_rows(Tape<T>* tape, const Tensor<T>& x,
                      const std::vector<int>& perm) {
  check_2d(x, "gather_rows input");
  const int m = x.dim(0), n = x.dim(1);
  if (static_cast<int>(perm.size()) != m) {
    throw ContractError("gather_rows: permutation length " +
                        std::to_string(perm.size()) + " != row count " +
                        std::to_string(m));
  }
  std::vector<bool> seen(static_cast<size_t>(m), false);
  for (int p : perm) {
    if (p < 0 || p >= m || seen[static_cast<size_t>(p)]) {
      throw ContractError("gather_rows: index list is not a permutation of [0," +
                          std::to_string(m) + ")");
    }
    seen[static_cast<size_t>(p)] = true;
  }
  Tensor<T> out({m, n});
  for (int i = 0; i < m; ++i) {
    std::copy_n(x.vals().data() + static_cast<size_t>(perm[static_cast<size_t>(i)]) * n,
                n, out.vals().data() + static_cast<size_t>(i) * n);
  }
  if (tape && needs_grad(tape, x)) {
    Tensor<T> cx = x, co = out;
    std::vector<int> cp = perm;
    int node = tape->push("gather_rows", out.id(), {x.id()}, {x.id()},
                          [cx, co, cp, m, n]() mutable {
      if (!co.has_grad()) return;
      const T* g = co.grad().data();
      cx.ensure_grad();
      for (int i = 0; i < m; ++i) {
        T* dst = cx.grad().data() +
                 static_cast<size_t>(cp[static_cast<size_t>(i)]) * n;
        const T* src = g + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) dst[j] += src[j];
      }
    });
    out.bind_node(node, tape->epoch());
  }
  return out;
}

// ---------------------------------------------------------------------------
// detach: value copy with no graph history

template <class T>
Tensor<T> detach(const Tensor<T>& x) {
  return Tensor<T>(x.shape(), x.vals());
}

// ---------------------------------------------------------------------------
// reductions

template <class T>
Tensor<T> sum_all(Tape<T>* tape, const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.vals()) acc += v;
  Tensor<T> out = Tensor<T>::scalar(acc);
  if (tape && needs_grad(tape, x)) {
    Tensor<T> cx = x, co = out;
    int node = tape->push("sum_all", out.id(), {x.id()}, {x.id()}, [cx, co]() mutable {
      if (!co.has_grad()) return;
      T g = co.grad()[0];
      cx.ensure_grad();
      for (auto& d : cx.grad()) d += g;
    });
    out.bind_node(node, tape->epoch());
  }
  return out;
}

template <class T>
Tensor<T> mean_all(Tape<T>* tape, const Tensor<T>& x) {
  if (x.size() == 0) throw ContractError("mean_all of empty tensor");
  const T inv = T(1) / static_cast<T>(x.size());
  T acc = 0;
  for (T v : x.vals()) acc += v;
  Tensor<T> out = Tensor<T>::scalar(acc * inv);
  if (tape && needs_grad(tape, x)) {
    Tensor<T> cx = x, co = out;
    int node = tape->push("mean_all", out.id(), {x.id()}, {x.id()}, [cx, co, inv]() mutable {
      if (!co.has_grad()) return;
      T g = co.grad()[0] * inv;
      cx.ensure_grad();
      for (auto& d : cx.grad()) d += g;
    });
    out.bind_node(node, tape->epoch());
  }
  return out;
}

// ---------------------------------------------------------------------------
// fused softmax cross-entropy, per-sample losses: [m,C] x labels -> [m]

template <class T>
void check_labels(const std::vector<int>& labels, int m, int classes,
                  const char* who) {
  if (static_cast<int>(labels.size()) != m) {
    throw ContractError(std::string(who) + ": label count " +
                        std::to_string(labels.size()) + " != batch rows " +
                        std::to_string(m));
  }
  for (int y : labels) {
    if (y < 0 || y >= classes) {
      throw ContractError(std::string(who) + ": label " + std::to_string(y) +
                          " outside [0," + std::to_string(classes) + ")");
    }
  }
}

template <class T>
Tensor<T> softmax_ce(Tape<T>* tape, const Tensor<T>& logits,
                     const std::vector<int>& labels) {
  check_2d(logits, "softmax_ce logits");
  const int m = logits.dim(0), classes = logits.dim(1);
  if (classes < 1) throw ContractError("softmax_ce: no classes");
  check_labels<T>(labels, m, classes, "softmax_ce");
  Tensor<T> out({m});
  auto probs = std::make_shared<std::vector<T>>(static_cast<size_t>(m) * classes);
  for (int i = 0; i < m; ++i) {
    const T* row = logits.vals().data() + static_cast<size_t>(i) * classes;
    T* prow = probs->data() + static_cast<size_t>(i) * classes;
    T mx = row[0];
    for (int c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
    T s = 0;
    for (int c = 0; c < classes; ++c) {
      prow[c] = std::exp(row[c] - mx);
      s += prow[c];
    }
    for (int c = 0; c < classes; ++c) prow[c] /= s;
    const T lse = mx + std::log(s);
    out.vals()[static_cast<size_t>(i)] = lse - row[labels[static_cast<size_t>(i)]];
  }
  if (tape && needs_grad(tape, logits)) {
    Tensor<T> cl = logits, co = out;
    std::vector<int> cy = labels;
    int node = tape->push("softmax_ce", out.id(), {logits.id()}, {logits.id()},
                          [cl, co, cy, probs, m, classes]() mutable {
      if (!co.has_grad()) return;
      const auto& g = co.grad();
      cl.ensure_grad();
      T* dl = cl.grad().data();
      for (int i = 0; i < m; ++i) {
        const T gi = g[static_cast<size_t>(i)];
        if (gi == T(0)) continue;
        const T* prow = probs->data() + static_cast<size_t>(i) * classes;
        T* drow = dl + static_cast<size_t>(i) * classes;
        const int y = cy[static_cast<size_t>(i)];
        for (int c = 0; c < classes; ++c) drow[c] += gi * prow[c];
        drow[y] -= gi;
      }
    });
    out.bind_node(node, tape->epoch());
  }
  return out;
}

// ---------------------------------------------------------------------------
// generalized cross-entropy (1 - p_y^q)/q, per-sample losses: [m,C] -> [m]

template <class T>
Tensor<T> gce(Tape<T>* tape, const Tensor<T>& logits,
              const std::vector<int>& labels, double q) {
  check_2d(logits, "gce logits");
  if (!(q > 0.0 && q <= 1.0)) {
    throw ConfigError("gce: q must lie in (0,1], got " + std::to_string(q));
  }
  const int m = logits.dim(0), classes = logits.dim(1);
  if (classes < 1) throw ContractError("gce: no classes");
  check_labels<T>(labels, m, classes, "gce");
  Tensor<T> out({m});
  auto probs = std::make_shared<std::vector<T>>(static_cast<size_t>(m) * classes);
  auto pyq = std::make_shared<std::vector<T>>(static_cast<size_t>(m));
  const T qt = static_cast<T>(q);
  for (int i = 0; i < m; ++i) {
    const T* row = logits.vals().data() + static_cast<size_t>(i) * classes;
    T* prow = probs->data() + static_cast<size_t>(i) * classes;
    T mx = row[0];
    for (int c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
    T s = 0;
    for (int c = 0; c < classes; ++c) {
      prow[c] = std::exp(row[c] - mx);
      s += prow[c];
    }
    for (int c = 0; c < classes; ++c) prow[c] /= s;
    const int y = labels[static_cast<size_t>(i)];
    // p_y^q as exp(q * log p_y): stable for tiny p_y, exact 0 when p_y == 0.
    const T logp_y = (row[y] - mx) - std::log(s);
    const T v = std::exp(qt * logp_y);
    (*pyq)[static_cast<size_t>(i)] = v;
    out.vals()[static_cast<size_t>(i)] = (T(1) - v) / qt;
  }
  if (tape && needs_grad(tape, logits)) {
    Tensor<T> cl = logits, co = out;
    std::vector<int> cy = labels;
    int node = tape->push("gce", out.id(), {logits.id()}, {logits.id()},
                          [cl, co, cy, probs, pyq, m, classes]() mutable {
      if (!co.has_grad()) return;
      const auto& g = co.grad();
      cl.ensure_grad();
      T* dl = cl.grad().data();
      for (int i = 0; i < m; ++i) {
        const T gi = g[static_cast<size_t>(i)] * (*pyq)[static_cast<size_t>(i)];
        if (gi == T(0)) continue;
        const T* prow = probs->data() + static_cast<size_t>(i) * classes;
        T* drow = dl + static_cast<size_t>(i) * classes;
        const int y = cy[static_cast<size_t>(i)];
        for (int c = 0; c < classes; ++c) drow[c] += gi * prow[c];
        drow[y] -= gi;
      }
    });
    out.bind_node(node, tape->epoch());
  }
  return out;
}

// ---------------------------------------------------------------------------
// 3x3 convolution over NHWC with pad 1, plus global average pooling

inline int conv_out_extent(int in, int stride) { return (in - 1) / stride + 1; }

template <class T>
void im2col_3x3(const T* x, int n, int h, int w, int c, int stride, T* col) {
  const int ho = conv_out_extent(h, stride), wo = conv_out_extent(w, stride);
  size_t r = 0;
  for (int i = 0; i < n; ++i) {
    const T* img = x + static_cast<size_t>(i) * h * w * c;
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        T* dst = col + r * (9 * static_cast<size_t>(c));
        for (int dy = 0; dy < 3; ++dy) {
          const int iy = oy * stride + dy - 1;
          for (int dx = 0; dx < 3; ++dx) {
            const int ix = ox * stride + dx - 1;
            T* cell = dst + static_cast<size_t>(dy * 3 + dx) * c;
            if (iy < 0 || iy >= h || ix < 0 || ix >= w) {
              std::fill_n(cell, c, T(0));
            } else {
              std::copy_n(img + (static_cast<size_t>(iy) * w + ix) * c, c, cell);
            }
          }
        }
        ++r;
      }
    }
  }
}

template <class T>
void col2im_3x3(const T* dcol, int n, int h, int w, int c, int stride, T* dx) {
  const int ho = conv_out_extent(h, stride), wo = conv_out_extent(w, stride);
  size_t r = 0;
  for (int i = 0; i < n; ++i) {
    T* img = dx + static_cast<size_t>(i) * h * w * c;
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        const T* src = dcol + r * (9 * static_cast<size_t>(c));
        for (int dy = 0; dy < 3; ++dy) {
          const int iy = oy * stride + dy - 1;
          if (iy < 0 || iy >= h) continue;
          for (int dx2 = 0; dx2 < 3; ++dx2) {
            const int ix = ox * stride + dx2 - 1;
            if (ix < 0 || ix >= w) continue;
            const T* cell = src + static_cast<size_t>(dy * 3 + dx2) * c;
            T* dst = img + (static_cast<size_t>(iy) * w + ix) * c;
            for (int ch = 0; ch < c; ++ch) dst[ch] += cell[ch];
          }
        }
        ++r;
      }
    }
  }
}

// x: {n,h,w,c}, weight: {9*c, k}, bias: {k} -> {n,ho,wo,k}
template <class T>
Tensor<T> conv3x3(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& weight,
                  const Tensor<T>& bias, int stride) {
  if (x.ndim() != 4) {
    throw ContractError("conv3x3: expected NHWC input, got " + shape_str(x.shape()));
  }
  if (stride != 1 && stride != 2) throw ContractError("conv3x3: stride must be 1 or 2");
  const int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  check_2d(weight, "conv3x3 weight");
  if (weight.dim(0) != 9 * c) {
    throw ContractError("conv3x3: weight rows " + std::to_string(weight.dim(0)) +
                        " != 9*channels " + std::to_string(9 * c));
  }
  const int k = weight.dim(1);
  if (bias.ndim() != 1 || bias.dim(0) != k) {
    throw ContractError("conv3x3: bias shape " + shape_str(bias.shape()));
  }
  const int ho = conv_out_extent(h, stride), wo = conv_out_extent(w, stride);
  const int64_t rows = static_cast<int64_t>(n) * ho * wo;
  auto col = std::make_shared<std::vector<T>>(static_cast<size_t>(rows) * 9 * c);
  im2col_3x3(x.vals().data(), n, h, w, c, stride, col->data());
  Tensor<T> out({n, ho, wo, k});
  gemm(false, false, static_cast<int>(rows), k, 9 * c, T(1), col->data(), 9 * c,
       weight.vals().data(), k, T(0), out.vals().data(), k);
  for (int64_t r = 0; r < rows; ++r) {
    T* orow = out.vals().data() + static_cast<size_t>(r) * k;
    for (int j = 0; j < k; ++j) orow[j] += bias.vals()[static_cast<size_t>(j)];
  }
  const bool gx = needs_grad(tape, x), gw = needs_grad(tape, weight),
             gb = needs_grad(tape, bias);
  if (tape && (gx || gw || gb)) {
    Tensor<T> cx = x, cw = weight, cb = bias, co = out;
    int node = tape->push(
        "conv3x3", out.id(), {x.id(), weight.id(), bias.id()},
        grad_ids(gx, x.id(), gw, weight.id(), gb, bias.id()),
        [cx, cw, cb, co, col, n, h, w, c, k, stride, rows, gx, gw, gb]() mutable {
      if (!co.has_grad()) return;
      const T* g = co.grad().data();
      if (gw) {
        cw.ensure_grad();
        gemm(true, false, 9 * c, k, static_cast<int>(rows), T(1), col->data(),
             9 * c, g, k, T(1), cw.grad().data(), k);
      }
      if (gb) {
        cb.ensure_grad();
        T* db = cb.grad().data();
        for (int64_t r = 0; r < rows; ++r) {
          const T* gr = g + static_cast<size_t>(r) * k;
          for (int j = 0; j < k; ++j) db[j] += gr[j];
        }
      }
      if (gx) {
        std::vector<T> dcol(static_cast<size_t>(rows) * 9 * c);
        gemm(false, true, static_cast<int>(rows), 9 * c, k, T(1), g, k,
             cw.vals().data(), k, T(0), dcol.data(), 9 * c);
        cx.ensure_grad();
        col2im_3x3(dcol.data(), n, h, w, c, stride, cx.grad().data());
      }
    });
    out.bind_node(node, tape->epoch());
  }
  return out;
}

// {n,h,w,c} -> {n,c}
template <class T>
Tensor<T> global_avg_pool(Tape<T>* tape, const Tensor<T>& x) {
  if (x.ndim() != 4) {
    throw ContractError("global_avg_pool: expected NHWC input, got " +
                        shape_str(x.shape()));
  }
  const int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  if (h * w == 0) throw ContractError("global_avg_pool: empty spatial extent");
  const T inv = T(1) / static_cast<T>(h * w);
  Tensor<T> out({n, c});
  for (int i = 0; i < n; ++i) {
    const T* img = x.vals().data() + static_cast<size_t>(i) * h * w * c;
    T* orow = out.vals().data() + static_cast<size_t>(i) * c;
    for (int p = 0; p < h * w; ++p) {
      for (int ch = 0; ch < c; ++ch) orow[ch] += img[static_cast<size_t>(p) * c + ch];
    }
    for (int ch = 0; ch < c; ++ch) orow[ch] *= inv;
  }
  if (tape && needs_grad(tape, x)) {
    Tensor<T> cx = x, co = out;
    int node = tape->push("global_avg_pool", out.id(), {x.id()}, {x.id()},
                          [cx, co, n, h, w, c, inv]() mutable {
      if (!co.has_grad()) return;
      const T* g = co.grad().data();
      cx.ensure_grad();
      for (int i = 0; i < n; ++i) {
        const T* grow = g + static_cast<size_t>(i) * c;
        T* img = cx.grad().data() + static_cast<size_t>(i) * h * w * c;
        for (int p = 0; p < h * w; ++p) {
          for (int ch = 0; ch < c; ++ch) img[static_cast<size_t>(p) * c + ch] += grow[ch] * inv;
        }
      }
    });
    out.bind_node(node, tape->epoch());
  }
  return out;
}

// ---------------------------------------------------------------------------
// value-only helpers

template <class T>
int argmax_row(const T* row, int n) {
  int best = 0;
  for (int c = 1; c < n; ++c) {
    if (row[c] > row[best]) best = c;
  }
  return best;
}

}  // namespace dfa::ad
