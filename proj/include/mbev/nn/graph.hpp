// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstring>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mbev/common.hpp"
#include "mbev/nn/kernels.hpp"

namespace mbev::nn {

// A named parameter living outside any graph. Gradients accumulate here
// across graph builds until the optimizer consumes them.
template <class S>
struct ParamTensor {
  std::string name;
  int rows = 0, cols = 0;
  std::vector<S> v;
  std::vector<S> g;

  ParamTensor() = default;
  ParamTensor(std::string n, int r, int c)
      : name(std::move(n)), rows(r), cols(c), v(size_t(r) * c, S(0)),
        g(size_t(r) * c, S(0)) {}

  size_t size() const { return v.size(); }
  void zero_grad() { std::fill(g.begin(), g.end(), S(0)); }
  void init_normal(Rng& rng, double stddev) {
    for (auto& x : v) x = S(rng.normal() * stddev);
  }
  void fill(S c) { std::fill(v.begin(), v.end(), c); }
};

// Dynamic reverse-mode tape over 2-D row-major tensors. Each op appends a
// node holding its value and a closure that scatters the node's gradient
// into its parents. Nodes are addressed by index; the tape is append-only
// so creation order is a valid topological order.
template <class S>
class Graph {
 public:
  using Val = int;

  struct Node {
    std::vector<S> val;
    std::vector<S> grad;  // empty unless recording
    int rows = 0, cols = 0;
    std::function<void(Graph&)> back;  // null for leaves
  };

  explicit Graph(bool recording = true) : recording_(recording) {
    nodes_.reserve(4096);
  }
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return recording_; }
  int rows(Val a) const { return nodes_[a].rows; }
  int cols(Val a) const { return nodes_[a].cols; }
  size_t size(Val a) const { return nodes_[a].val.size(); }
  const std::vector<S>& val(Val a) const { return nodes_[a].val; }
  std::vector<S>& mutable_val(Val a) { return nodes_[a].val; }
  const std::vector<S>& grad(Val a) const { return nodes_[a].grad; }
  S scalar(Val a) const { return nodes_[a].val[0]; }

  // ---- leaves ----

  Val input(int r, int c, const S* data) {
    Val i = alloc(r, c);
    if (data) std::memcpy(nodes_[i].val.data(), data, sizeof(S) * size_t(r) * c);
    return i;
  }
  Val input(int r, int c, const std::vector<S>& data) {
    MBEV_CHECK(data.size() == size_t(r) * c, Err::ShapeMismatch, "input size");
    return input(r, c, data.data());
  }
  Val zeros(int r, int c) { return alloc(r, c); }

  Val constant(S x) {
    Val i = alloc(1, 1);
    nodes_[i].val[0] = x;
    return i;
  }

  // Parameter leaf. Frozen parameters enter as plain inputs: no gradient is
  // ever produced for them, which is what the encoder freeze contract needs.
  // One node per parameter per graph; repeated uses share it, so gradients
  // from every use accumulate in a single place.
  Val param(ParamTensor<S>& p, bool frozen = false) {
    auto it = param_cache_.find(&p);
    if (it != param_cache_.end()) {
      MBEV_CHECK(it->second.second == frozen, Err::BadConfig,
                 "parameter bound both frozen and trainable in one graph");
      return it->second.first;
    }
    Val i = input(p.rows, p.cols, p.v.data());
    if (recording_ && !frozen) bindings_.push_back({&p, i});
    param_cache_.emplace(&p, std::pair<Val, bool>{i, frozen});
    return i;
  }

  // ---- elementwise ----

  Val add(Val a, Val b) { return lincomb(a, b, S(1), S(1)); }
  Val sub(Val a, Val b) { return lincomb(a, b, S(1), S(-1)); }

  Val lincomb(Val a, Val b, S alpha, S beta) {
    check_same_shape(a, b, "lincomb");
    Val y = alloc_like(a);
    const auto& av = nodes_[a].val;
    const auto& bv = nodes_[b].val;
    auto& yv = nodes_[y].val;
    for (size_t i = 0; i < yv.size(); ++i) yv[i] = alpha * av[i] + beta * bv[i];
    if (recording_)
      nodes_[y].back = [a, b, y, alpha, beta](Graph& g) {
        auto& dy = g.nodes_[y].grad;
        auto& da = g.nodes_[a].grad;
        auto& db = g.nodes_[b].grad;
        for (size_t i = 0; i < dy.size(); ++i) {
          da[i] += alpha * dy[i];
          db[i] += beta * dy[i];
        }
      };
    return y;
  }

  Val add_many(const std::vector<Val>& xs) {
    MBEV_CHECK(!xs.empty(), Err::ShapeMismatch, "add_many: empty");
    Val y = alloc_like(xs[0]);
    auto& yv = nodes_[y].val;
    for (Val x : xs) {
      check_same_shape(x, y, "add_many");
      const auto& xv = nodes_[x].val;
      for (size_t i = 0; i < yv.size(); ++i) yv[i] += xv[i];
    }
    if (recording_) {
      std::vector<Val> parents = xs;
      nodes_[y].back = [parents, y](Graph& g) {
        const auto& dy = g.nodes_[y].grad;
        for (Val x : parents) {
          auto& dx = g.nodes_[x].grad;
          for (size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
        }
      };
    }
    return y;
  }

  Val mul(Val a, Val b) {
    check_same_shape(a, b, "mul");
    Val y = alloc_like(a);
    const auto& av = nodes_[a].val;
    const auto& bv = nodes_[b].val;
    auto& yv = nodes_[y].val;
    for (size_t i = 0; i < yv.size(); ++i) yv[i] = av[i] * bv[i];
    if (recording_)
      nodes_[y].back = [a, b, y](Graph& g) {
        const auto& dy = g.nodes_[y].grad;
        const auto& av = g.nodes_[a].val;
        const auto& bv = g.nodes_[b].val;
        auto& da = g.nodes_[a].grad;
        auto& db = g.nodes_[b].grad;
        for (size_t i = 0; i < dy.size(); ++i) {
          da[i] += dy[i] * bv[i];
          db[i] += dy[i] * av[i];
        }
      };
    return y;
  }

  Val scale(Val a, S c) { return affine(a, c, S(0)); }

  Val affine(Val a, S m, S c) {
    Val y = alloc_like(a);
    const auto& av = nodes_[a].val;
    auto& yv = nodes_[y].val;
    for (size_t i = 0; i < yv.size(); ++i) yv[i] = m * av[i] + c;
    if (recording_)
      nodes_[y].back = [a, y, m](Graph& g) {
        const auto& dy = g.nodes_[y].grad;
        auto& da = g.nodes_[a].grad;
        for (size_t i = 0; i < dy.size(); ++i) da[i] += m * dy[i];
      };
    return y;
  }

  Val add_rowvec(Val x, Val v) {
    const int n = rows(x), d = cols(x);
    MBEV_CHECK(rows(v) == 1 && cols(v) == d, Err::ShapeMismatch, "add_rowvec");
    Val y = alloc(n, d);
    const auto& xv = nodes_[x].val;
    const auto& vv = nodes_[v].val;
    auto& yv = nodes_[y].val;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) yv[size_t(i) * d + j] = xv[size_t(i) * d + j] + vv[j];
    if (recording_)
      nodes_[y].back = [x, v, y, n, d](Graph& g) {
        const auto& dy = g.nodes_[y].grad;
        auto& dx = g.nodes_[x].grad;
        auto& dv = g.nodes_[v].grad;
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < d; ++j) {
            dx[size_t(i) * d + j] += dy[size_t(i) * d + j];
            dv[j] += dy[size_t(i) * d + j];
          }
      };
    return y;
  }

  // ---- matrix ops ----

  Val matmul(Val a, Val b) {
    const int m = rows(a), k = cols(a), n = cols(b);
    MBEV_CHECK(rows(b) == k, Err::ShapeMismatch, "matmul inner dim");
    Val y = alloc(m, n);
    mm_nn_acc(nodes_[a].val.data(), nodes_[b].val.data(), nodes_[y].val.data(), m, k, n);
    if (recording_)
      nodes_[y].back = [a, b, y, m, k, n](Graph& g) {
        // da += dy * b^T ; db += a^T * dy
        mm_nt_acc(g.nodes_[y].grad.data(), g.nodes_[b].val.data(),
                  g.nodes_[a].grad.data(), m, n, k);
        mm_tn_acc(g.nodes_[a].val.data(), g.nodes_[y].grad.data(),
                  g.nodes_[b].grad.data(), m, k, n);
      };
    return y;
  }

  // y = a * b^T with a[m,k], b[n,k]
  Val matmul_nt(Val a, Val b) {
    const int m = rows(a), k = cols(a), n = rows(b);
    MBEV_CHECK(cols(b) == k, Err::ShapeMismatch, "matmul_nt inner dim");
    Val y = alloc(m, n);
    mm_nt_acc(nodes_[a].val.data(), nodes_[b].val.data(), nodes_[y].val.data(), m, k, n);
    if (recording_)
      nodes_[y].back = [a, b, y, m, k, n](Graph& g) {
        // da += dy * b ; db += dy^T * a
        mm_nn_acc(g.nodes_[y].grad.data(), g.nodes_[b].val.data(),
                  g.nodes_[a].grad.data(), m, n, k);
        mm_tn_acc(g.nodes_[y].grad.data(), g.nodes_[a].val.data(),
                  g.nodes_[b].grad.data(), m, n, k);
      };
    return y;
  }

  Val linear(Val x, Val w, Val b) {
    const int n = rows(x), din = cols(x), dout = cols(w);
    MBEV_CHECK(rows(w) == din, Err::ShapeMismatch, "linear weight shape");
    MBEV_CHECK(rows(b) == 1 && cols(b) == dout, Err::ShapeMismatch, "linear bias shape");
    Val y = alloc(n, dout);
    auto& yv = nodes_[y].val;
    const auto& bv = nodes_[b].val;
    for (int i = 0; i < n; ++i)
      std::memcpy(yv.data() + size_t(i) * dout, bv.data(), sizeof(S) * dout);
    mm_nn_acc(nodes_[x].val.data(), nodes_[w].val.data(), yv.data(), n, din, dout);
    if (recording_)
      nodes_[y].back = [x, w, b, y, n, din, dout](Graph& g) {
        mm_nt_acc(g.nodes_[y].grad.data(), g.nodes_[w].val.data(),
                  g.nodes_[x].grad.data(), n, dout, din);
        mm_tn_acc(g.nodes_[x].val.data(), g.nodes_[y].grad.data(),
                  g.nodes_[w].grad.data(), n, din, dout);
        const auto& dy = g.nodes_[y].grad;
        auto& db = g.nodes_[b].grad;
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < dout; ++j) db[j] += dy[size_t(i) * dout + j];
      };
    return y;
  }

  // ---- nonlinearities / norms ----

  Val gelu(Val x) {
    Val y = alloc_like(x);
    const auto& xv = nodes_[x].val;
    auto& yv = nodes_[y].val;
    for (size_t i = 0; i < yv.size(); ++i) {
      const double z = double(xv[i]);
      yv[i] = S(z * 0.5 * (1.0 + std::erf(z * M_SQRT1_2)));
    }
    if (recording_)
      nodes_[y].back = [x, y](Graph& g) {
        const auto& dy = g.nodes_[y].grad;
        const auto& xv = g.nodes_[x].val;
        auto& dx = g.nodes_[x].grad;
        for (size_t i = 0; i < dy.size(); ++i) {
          const double z = double(xv[i]);
          const double phi = std::exp(-0.5 * z * z) * 0.3989422804014327;
          const double cdf = 0.5 * (1.0 + std::erf(z * M_SQRT1_2));
          dx[i] += dy[i] * S(cdf + z * phi);
        }
      };
    return y;
  }

  Val sigmoid(Val x) {
    Val y = alloc_like(x);
    const auto& xv = nodes_[x].val;
    auto& yv = nodes_[y].val;
    for (size_t i = 0; i < yv.size(); ++i) yv[i] = S(1) / (S(1) + std::exp(-xv[i]));
    if (recording_)
      nodes_[y].back = [x, y](Graph& g) {
        const auto& dy = g.nodes_[y].grad;
        const auto& yv = g.nodes_[y].val;
        auto& dx = g.nodes_[x].grad;
        for (size_t i = 0; i < dy.size(); ++i)
          dx[i] += dy[i] * yv[i] * (S(1) - yv[i]);
      };
    return y;
  }

  Val exp_(Val x) {
    Val y = alloc_like(x);
    const auto& xv = nodes_[x].val;
    auto& yv = nodes_[y].val;
    for (size_t i = 0; i < yv.size(); ++i) yv[i] = std::exp(xv[i]);
    if (recording_)
      nodes_[y].back = [x, y](Graph& g) {
        const auto& dy = g.nodes_[y].grad;
        const auto& yv = g.nodes_[y].val;
        auto& dx = g.nodes_[x].grad;
        for (size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * yv[i];
      };
    return y;
  }

  Val layernorm(Val x, Val gamma, Val beta, S eps = S(1e-5)) {
    const int n = rows(x), d = cols(x);
    MBEV_CHECK(cols(gamma) == d && cols(beta) == d, Err::ShapeMismatch, "layernorm params");
    Val y = alloc(n, d);
    std::vector<S> xhat(size_t(n) * d);
    std::vector<S> inv(n);
    const auto& xv = nodes_[x].val;
    const auto& gv = nodes_[gamma].val;
    const auto& bv = nodes_[beta].val;
    auto& yv = nodes_[y].val;
    for (int i = 0; i < n; ++i) {
      const S* xr = xv.data() + size_t(i) * d;
      S mu = 0;
      for (int j = 0; j < d; ++j) mu += xr[j];
      mu /= S(d);
      S var = 0;
      for (int j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
      var /= S(d);
      const S iv = S(1) / std::sqrt(var + eps);
      inv[i] = iv;
      for (int j = 0; j < d; ++j) {
        const S xh = (xr[j] - mu) * iv;
        xhat[size_t(i) * d + j] = xh;
        yv[size_t(i) * d + j] = gv[j] * xh + bv[j];
      }
    }
    if (recording_)
      nodes_[y].back = [x, gamma, beta, y, n, d, xhat = std::move(xhat),
                        inv = std::move(inv)](Graph& g) {
        const auto& dy = g.nodes_[y].grad;
        const auto& gv = g.nodes_[gamma].val;
        auto& dx = g.nodes_[x].grad;
        auto& dg = g.nodes_[gamma].grad;
        auto& db = g.nodes_[beta].grad;
        for (int i = 0; i < n; ++i) {
          const S* dyr = dy.data() + size_t(i) * d;
          const S* xhr = xhat.data() + size_t(i) * d;
          S m1 = 0, m2 = 0;
          for (int j = 0; j < d; ++j) {
            const S t = dyr[j] * gv[j];
            m1 += t;
            m2 += t * xhr[j];
          }
          m1 /= S(d);
          m2 /= S(d);
          for (int j = 0; j < d; ++j) {
            const S t = dyr[j] * gv[j];
            dx[size_t(i) * d + j] += (t - m1 - xhr[j] * m2) * inv[i];
            dg[j] += dyr[j] * xhr[j];
            db[j] += dyr[j];
          }
        }
      };
    return y;
  }

  Val softmax_rows(Val x) {
    const int n = rows(x), d = cols(x);
    Val y = alloc(n, d);
    const auto& xv = nodes_[x].val;
    auto& yv = nodes_[y].val;
    for (int i = 0; i < n; ++i) {
      const S* xr = xv.data() + size_t(i) * d;
      S* yr = yv.data() + size_t(i) * d;
      S mx = xr[0];
      for (int j = 1; j < d; ++j) mx = std::max(mx, xr[j]);
      S sum = 0;
      for (int j = 0; j < d; ++j) {
        yr[j] = std::exp(xr[j] - mx);
        sum += yr[j];
      }
      const S is = S(1) / sum;
      for (int j = 0; j < d; ++j) yr[j] *= is;
    }
    if (recording_)
      nodes_[y].back = [x, y, n, d](Graph& g) {
        const auto& dy = g.nodes_[y].grad;
        const auto& yv = g.nodes_[y].val;
        auto& dx = g.nodes_[x].grad;
        for (int i = 0; i < n; ++i) {
          const S* dyr = dy.data() + size_t(i) * d;
          const S* yr = yv.data() + size_t(i) * d;
          S dot = 0;
          for (int j = 0; j < d; ++j) dot += dyr[j] * yr[j];
          for (int j = 0; j < d; ++j)
            dx[size_t(i) * d + j] += (dyr[j] - dot) * yr[j];
        }
      };
    return y;
  }

  // ---- shape ops ----

  Val slice_rows(Val x, int r0, int nr) {
    const int n = rows(x), d = cols(x);
    MBEV_CHECK(r0 >= 0 && r0 + nr <= n, Err::ShapeMismatch, "slice_rows range");
    Val y = alloc(nr, d);
    std::memcpy(nodes_[y].val.data(), nodes_[x].val.data() + size_t(r0) * d,
                sizeof(S) * size_t(nr) * d);
    if (recording_)
      nodes_[y].back = [x, y, r0, nr, d](Graph& g) {
        const auto& dy = g.nodes_[y].grad;
        auto& dx = g.nodes_[x].grad;
        for (size_t i = 0; i < size_t(nr) * d; ++i) dx[size_t(r0) * d + i] += dy[i];
      };
    return y;
  }

  Val slice_cols(Val x, int c0, int nc) {
    const int n = rows(x), d = cols(x);
    MBEV_CHECK(c0 >= 0 && c0 + nc <= d, Err::ShapeMismatch, "slice_cols range");
    Val y = alloc(n, nc);
    const auto& xv = nodes_[x].val;
    auto& yv = nodes_[y].val;
    for (int i = 0; i < n; ++i)
      std::memcpy(yv.data() + size_t(i) * nc, xv.data() + size_t(i) * d + c0,
                  sizeof(S) * nc);
    if (recording_)
      nodes_[y].back = [x, y, c0, nc, n, d](Graph& g) {
        const auto& dy = g.nodes_[y].grad;
        auto& dx = g.nodes_[x].grad;
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < nc; ++j)
            dx[size_t(i) * d + c0 + j] += dy[size_t(i) * nc + j];
      };
    return y;
  }

  Val concat_rows(const std::vector<Val>& xs) {
    MBEV_CHECK(!xs.empty(), Err::ShapeMismatch, "concat_rows: empty");
    const int d = cols(xs[0]);
    int n = 0;
    for (Val x : xs) {
      MBEV_CHECK(cols(x) == d, Err::ShapeMismatch, "concat_rows cols");
      n += rows(x);
    }
    Val y = alloc(n, d);
    auto& yv = nodes_[y].val;
    size_t off = 0;
    for (Val x : xs) {
      std::memcpy(yv.data() + off, nodes_[x].val.data(), sizeof(S) * size(x));
      off += size(x);
    }
    if (recording_) {
      std::vector<Val> parents = xs;
      nodes_[y].back = [parents, y](Graph& g) {
        const auto& dy = g.nodes_[y].grad;
        size_t off = 0;
        for (Val x : parents) {
          auto& dx = g.nodes_[x].grad;
          for (size_t i = 0; i < dx.size(); ++i) dx[i] += dy[off + i];
          off += dx.size();
        }
      };
    }
    return y;
  }

  Val concat_cols(const std::vector<Val>& xs) {
    MBEV_CHECK(!xs.empty(), Err::ShapeMismatch, "concat_cols: empty");
    const int n = rows(xs[0]);
    int d = 0;
    for (Val x : xs) {
      MBEV_CHECK(rows(x) == n, Err::ShapeMismatch, "concat_cols rows");
      d += cols(x);
    }
    Val y = alloc(n, d);
    auto& yv = nodes_[y].val;
    int c0 = 0;
    for (Val x : xs) {
      const int nc = cols(x);
      const auto& xv = nodes_[x].val;
      for (int i = 0; i < n; ++i)
        std::memcpy(yv.data() + size_t(i) * d + c0, xv.data() + size_t(i) * nc,
                    sizeof(S) * nc);
      c0 += nc;
    }
    if (recording_) {
      std::vector<Val> parents = xs;
      nodes_[y].back = [parents, y, n, d](Graph& g) {
        const auto& dy = g.nodes_[y].grad;
        int c0 = 0;
        for (Val x : parents) {
          const int nc = g.cols(x);
          auto& dx = g.nodes_[x].grad;
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < nc; ++j)
              dx[size_t(i) * nc + j] += dy[size_t(i) * d + c0 + j];
          c0 += nc;
        }
      };
    }
    return y;
  }

  Val gather_rows(Val x, const std::vector<int>& idx) {
    const int d = cols(x);
    Val y = alloc(int(idx.size()), d);
    const auto& xv = nodes_[x].val;
    auto& yv = nodes_[y].val;
    for (size_t i = 0; i < idx.size(); ++i) {
      MBEV_CHECK(idx[i] >= 0 && idx[i] < rows(x), Err::ShapeMismatch, "gather index");
      std::memcpy(yv.data() + i * d, xv.data() + size_t(idx[i]) * d, sizeof(S) * d);
    }
    if (recording_)
      nodes_[y].back = [x, y, idx, d](Graph& g) {
        const auto& dy = g.nodes_[y].grad;
        auto& dx = g.nodes_[x].grad;
        for (size_t i = 0; i < idx.size(); ++i)
          for (int j = 0; j < d; ++j)
            dx[size_t(idx[i]) * d + j] += dy[i * d + j];
      };
    return y;
  }

  Val tile_rows(Val v, int n) {
    const int d = cols(v);
    MBEV_CHECK(rows(v) == 1, Err::ShapeMismatch, "tile_rows expects a row vector");
    Val y = alloc(n, d);
    const auto& vv = nodes_[v].val;
    auto& yv = nodes_[y].val;
    for (int i = 0; i < n; ++i)
      std::memcpy(yv.data() + size_t(i) * d, vv.data(), sizeof(S) * d);
    if (recording_)
      nodes_[y].back = [v, y, n, d](Graph& g) {
        const auto& dy = g.nodes_[y].grad;
        auto& dv = g.nodes_[v].grad;
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < d; ++j) dv[j] += dy[size_t(i) * d + j];
      };
    return y;
  }

  // Depthwise 3x3 over an H x W grid of tokens laid out row-major as
  // x[H*W, C]; w[9, C] taps in (dr, dc) scan order, zero padding.
  Val dwconv3x3(Val x, int H, int W, Val w, Val b) {
    const int C = cols(x);
    MBEV_CHECK(rows(x) == H * W, Err::ShapeMismatch, "dwconv grid size");
    MBEV_CHECK(rows(w) == 9 && cols(w) == C, Err::ShapeMismatch, "dwconv weights");
    Val y = alloc(H * W, C);
    const auto& xv = nodes_[x].val;
    const auto& wv = nodes_[w].val;
    const auto& bv = nodes_[b].val;
    auto& yv = nodes_[y].val;
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c) {
        S* yr = yv.data() + (size_t(r) * W + c) * C;
        std::memcpy(yr, bv.data(), sizeof(S) * C);
        for (int t = 0; t < 9; ++t) {
          const int rr = r + t / 3 - 1, cc = c + t % 3 - 1;
          if (rr < 0 || rr >= H || cc < 0 || cc >= W) continue;
          const S* xr = xv.data() + (size_t(rr) * W + cc) * C;
          const S* wr = wv.data() + size_t(t) * C;
          for (int j = 0; j < C; ++j) yr[j] += wr[j] * xr[j];
        }
      }
    if (recording_)
      nodes_[y].back = [x, w, b, y, H, W, C](Graph& g) {
        const auto& dy = g.nodes_[y].grad;
        const auto& xv = g.nodes_[x].val;
        const auto& wv = g.nodes_[w].val;
        auto& dx = g.nodes_[x].grad;
        auto& dw = g.nodes_[w].grad;
        auto& db = g.nodes_[b].grad;
        for (int r = 0; r < H; ++r)
          for (int c = 0; c < W; ++c) {
            const S* dyr = dy.data() + (size_t(r) * W + c) * C;
            for (int j = 0; j < C; ++j) db[j] += dyr[j];
            for (int t = 0; t < 9; ++t) {
              const int rr = r + t / 3 - 1, cc = c + t % 3 - 1;
              if (rr < 0 || rr >= H || cc < 0 || cc >= W) continue;
              const size_t xo = (size_t(rr) * W + cc) * C;
              const S* wr = wv.data() + size_t(t) * C;
              S* dwr = dw.data() + size_t(t) * C;
              for (int j = 0; j < C; ++j) {
                dx[xo + j] += wr[j] * dyr[j];
                dwr[j] += xv[xo + j] * dyr[j];
              }
            }
          }
      };
    return y;
  }

  // ---- reductions / losses ----

  Val sum_all(Val x) {
    Val y = alloc(1, 1);
    const auto& xv = nodes_[x].val;
    S s = 0;
    for (S v : xv) s += v;
    nodes_[y].val[0] = s;
    if (recording_)
      nodes_[y].back = [x, y](Graph& g) {
        const S dy = g.nodes_[y].grad[0];
        auto& dx = g.nodes_[x].grad;
        for (auto& v : dx) v += dy;
      };
    return y;
  }

  Val mean_all(Val x) { return scale(sum_all(x), S(1) / S(size(x))); }

  Val mse(Val a, Val b) {
    check_same_shape(a, b, "mse");
    Val y = alloc(1, 1);
    const auto& av = nodes_[a].val;
    const auto& bv = nodes_[b].val;
    S s = 0;
    for (size_t i = 0; i < av.size(); ++i) {
      const S d = av[i] - bv[i];
      s += d * d;
    }
    const S n = S(av.size());
    nodes_[y].val[0] = s / n;
    if (recording_)
      nodes_[y].back = [a, b, y, n](Graph& g) {
        const S dy = g.nodes_[y].grad[0];
        const auto& av = g.nodes_[a].val;
        const auto& bv = g.nodes_[b].val;
        auto& da = g.nodes_[a].grad;
        auto& db = g.nodes_[b].grad;
        for (size_t i = 0; i < av.size(); ++i) {
          const S t = S(2) * (av[i] - bv[i]) / n * dy;
          da[i] += t;
          db[i] -= t;
        }
      };
    return y;
  }

  Val l1_mean(Val a, Val b) {
    check_same_shape(a, b, "l1_mean");
    Val y = alloc(1, 1);
    const auto& av = nodes_[a].val;
    const auto& bv = nodes_[b].val;
    S s = 0;
    for (size_t i = 0; i < av.size(); ++i) s += std::abs(av[i] - bv[i]);
    const S n = S(av.size());
    nodes_[y].val[0] = s / n;
    if (recording_)
      nodes_[y].back = [a, b, y, n](Graph& g) {
        const S dy = g.nodes_[y].grad[0];
        const auto& av = g.nodes_[a].val;
        const auto& bv = g.nodes_[b].val;
        auto& da = g.nodes_[a].grad;
        auto& db = g.nodes_[b].grad;
        for (size_t i = 0; i < av.size(); ++i) {
          const S sg = (av[i] > bv[i]) ? S(1) : (av[i] < bv[i] ? S(-1) : S(0));
          da[i] += sg / n * dy;
          db[i] -= sg / n * dy;
        }
      };
    return y;
  }

  // y[i,0] = x[i, idx[i]]
  Val take_per_row(Val x, const std::vector<int>& idx) {
    const int n = rows(x), d = cols(x);
    MBEV_CHECK(int(idx.size()) == n, Err::ShapeMismatch, "take_per_row count");
    Val y = alloc(n, 1);
    const auto& xv = nodes_[x].val;
    auto& yv = nodes_[y].val;
    for (int i = 0; i < n; ++i) {
      MBEV_CHECK(idx[i] >= 0 && idx[i] < d, Err::ShapeMismatch, "take index");
      yv[i] = xv[size_t(i) * d + idx[i]];
    }
    if (recording_)
      nodes_[y].back = [x, y, idx, d](Graph& g) {
        const auto& dy = g.nodes_[y].grad;
        auto& dx = g.nodes_[x].grad;
        for (size_t i = 0; i < idx.size(); ++i) dx[i * d + idx[i]] += dy[i];
      };
    return y;
  }

  // mean_i alpha * (1 - p_i)^gamma * (-log p_i), with p clamped away from 0.
  Val focal_from_probs(Val pt, S alpha, S gamma) {
    const int n = rows(pt);
    MBEV_CHECK(cols(pt) == 1, Err::ShapeMismatch, "focal expects a column");
    Val y = alloc(1, 1);
    const auto& pv = nodes_[pt].val;
    const S eps = S(1e-12);
    S s = 0;
    for (int i = 0; i < n; ++i) {
      const S p = std::max(pv[i], eps);
      s += alpha * std::pow(S(1) - p, gamma) * (-std::log(p));
    }
    nodes_[y].val[0] = s / S(n);
    if (recording_)
      nodes_[y].back = [pt, y, n, alpha, gamma, eps](Graph& g) {
        const S dy = g.nodes_[y].grad[0];
        const auto& pv = g.nodes_[pt].val;
        auto& dp = g.nodes_[pt].grad;
        for (int i = 0; i < n; ++i) {
          const S p = std::max(pv[i], eps);
          const S om = S(1) - p;
          S d = -std::pow(om, gamma) / p;
          if (gamma > S(0)) d += gamma * std::pow(om, gamma - S(1)) * std::log(p);
          dp[i] += alpha * d / S(n) * dy;
        }
      };
    return y;
  }

  // ---- backward ----

  void backward(Val loss) {
    MBEV_CHECK(recording_, Err::BadConfig, "backward on a non-recording graph");
    MBEV_CHECK(size(loss) == 1, Err::ShapeMismatch, "backward target must be scalar");
    nodes_[loss].grad[0] = S(1);
    for (int i = loss; i >= 0; --i)
      if (nodes_[i].back) nodes_[i].back(*this);
    for (auto& [p, idx] : bindings_) {
      const auto& gsrc = nodes_[idx].grad;
      for (size_t i = 0; i < gsrc.size(); ++i) p->g[i] += gsrc[i];
    }
  }

 private:
  Val alloc(int r, int c) {
    Node nd;
    nd.rows = r;
    nd.cols = c;
    nd.val.assign(size_t(r) * c, S(0));
    if (recording_) nd.grad.assign(size_t(r) * c, S(0));
    nodes_.push_back(std::move(nd));
    return Val(nodes_.size() - 1);
  }
  Val alloc_like(Val a) { return alloc(rows(a), cols(a)); }

  void check_same_shape(Val a, Val b, const char* what) {
    MBEV_CHECK(rows(a) == rows(b) && cols(a) == cols(b), Err::ShapeMismatch, what);
  }

  bool recording_;
  std::vector<Node> nodes_;
  std::vector<std::pair<ParamTensor<S>*, Val>> bindings_;
  std::unordered_map<const ParamTensor<S>*, std::pair<Val, bool>> param_cache_;
};

}  // namespace mbev::nn
