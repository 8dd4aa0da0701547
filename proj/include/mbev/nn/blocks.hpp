// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include "mbev/nn/graph.hpp"

namespace mbev::nn {

// Reusable layer parameter bundles + their graph builders. Multi-head
// attention is composed from per-head slices; sequence lengths here are a
// few hundred tokens so node overhead is irrelevant next to the matmuls.

template <class S>
struct LinearP {
  ParamTensor<S> w, b;
  LinearP() = default;
  LinearP(const std::string& name, int din, int dout)
      : w(name + ".w", din, dout), b(name + ".b", 1, dout) {}
  void init(Rng& rng, double stddev = 0.02) {
    w.init_normal(rng, stddev);
    b.fill(S(0));
  }
  typename Graph<S>::Val fwd(Graph<S>& g, typename Graph<S>::Val x, bool frozen = false) {
    return g.linear(x, g.param(w, frozen), g.param(b, frozen));
  }
  void collect(std::vector<ParamTensor<S>*>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }
};

template <class S>
struct LayerNormP {
  ParamTensor<S> gamma, beta;
  LayerNormP() = default;
  LayerNormP(const std::string& name, int d)
      : gamma(name + ".g", 1, d), beta(name + ".b", 1, d) {
    gamma.fill(S(1));
    beta.fill(S(0));
  }
  typename Graph<S>::Val fwd(Graph<S>& g, typename Graph<S>::Val x, bool frozen = false) {
    return g.layernorm(x, g.param(gamma, frozen), g.param(beta, frozen));
  }
  void collect(std::vector<ParamTensor<S>*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }
};

template <class S>
struct MhaP {
  LinearP<S> wq, wk, wv, wo;
  int heads = 1;
  MhaP() = default;
  MhaP(const std::string& name, int dim, int n_heads)
      : wq(name + ".q", dim, dim), wk(name + ".k", dim, dim),
        wv(name + ".v", dim, dim), wo(name + ".o", dim, dim), heads(n_heads) {
    MBEV_CHECK(dim % n_heads == 0, Err::BadConfig, "attention dim % heads != 0");
  }
  void init(Rng& rng, double stddev = 0.02) {
    wq.init(rng, stddev);
    wk.init(rng, stddev);
    wv.init(rng, stddev);
    wo.init(rng, stddev);
  }
  // Cross attention when kv != q; self attention when the caller passes the
  // same node for both.
  typename Graph<S>::Val fwd(Graph<S>& g, typename Graph<S>::Val xq,
                             typename Graph<S>::Val xkv, bool frozen = false) {
    const int dim = g.cols(xq);
    const int dh = dim / heads;
    auto q = wq.fwd(g, xq, frozen);
    auto k = wk.fwd(g, xkv, frozen);
    auto v = wv.fwd(g, xkv, frozen);
    std::vector<typename Graph<S>::Val> ctx;
    ctx.reserve(heads);
    const S inv_sqrt = S(1.0 / std::sqrt(double(dh)));
    for (int h = 0; h < heads; ++h) {
      auto qh = g.slice_cols(q, h * dh, dh);
      auto kh = g.slice_cols(k, h * dh, dh);
      auto vh = g.slice_cols(v, h * dh, dh);
      auto att = g.softmax_rows(g.scale(g.matmul_nt(qh, kh), inv_sqrt));
      ctx.push_back(g.matmul(att, vh));
    }
    return wo.fwd(g, g.concat_cols(ctx), frozen);
  }
  void collect(std::vector<ParamTensor<S>*>& out) {
    wq.collect(out);
    wk.collect(out);
    wv.collect(out);
    wo.collect(out);
  }
};

// Attention whose keys/values come from a context with a different width
// than the query stream (queries run at `dim`, context at `kv_dim`).
template <class S>
struct CrossMhaP {
  LinearP<S> wq, wk, wv, wo;
  int heads = 1;
  CrossMhaP() = default;
  CrossMhaP(const std::string& name, int dim, int kv_dim, int n_heads)
      : wq(name + ".q", dim, dim), wk(name + ".k", kv_dim, dim),
        wv(name + ".v", kv_dim, dim), wo(name + ".o", dim, dim), heads(n_heads) {
    MBEV_CHECK(dim % n_heads == 0, Err::BadConfig, "attention dim % heads != 0");
  }
  void init(Rng& rng, double stddev = 0.02) {
    wq.init(rng, stddev);
    wk.init(rng, stddev);
    wv.init(rng, stddev);
    wo.init(rng, stddev);
  }
  typename Graph<S>::Val fwd(Graph<S>& g, typename Graph<S>::Val xq,
                             typename Graph<S>::Val ctx, bool frozen = false) {
    const int dim = g.cols(xq);
    const int dh = dim / heads;
    auto q = wq.fwd(g, xq, frozen);
    auto k = wk.fwd(g, ctx, frozen);
    auto v = wv.fwd(g, ctx, frozen);
    std::vector<typename Graph<S>::Val> out;
    out.reserve(heads);
    const S inv_sqrt = S(1.0 / std::sqrt(double(dh)));
    for (int h = 0; h < heads; ++h) {
      auto qh = g.slice_cols(q, h * dh, dh);
      auto kh = g.slice_cols(k, h * dh, dh);
      auto vh = g.slice_cols(v, h * dh, dh);
      auto att = g.softmax_rows(g.scale(g.matmul_nt(qh, kh), inv_sqrt));
      out.push_back(g.matmul(att, vh));
    }
    return wo.fwd(g, g.concat_cols(out), frozen);
  }
  void collect(std::vector<ParamTensor<S>*>& out) {
    wq.collect(out);
    wk.collect(out);
    wv.collect(out);
    wo.collect(out);
  }
};

template <class S>
struct MlpP {
  LinearP<S> fc1, fc2;
  MlpP() = default;
  MlpP(const std::string& name, int dim, int hidden)
      : fc1(name + ".fc1", dim, hidden), fc2(name + ".fc2", hidden, dim) {}
  void init(Rng& rng, double stddev = 0.02) {
    fc1.init(rng, stddev);
    fc2.init(rng, stddev);
  }
  typename Graph<S>::Val fwd(Graph<S>& g, typename Graph<S>::Val x, bool frozen = false) {
    return fc2.fwd(g, g.gelu(fc1.fwd(g, x, frozen)), frozen);
  }
  void collect(std::vector<ParamTensor<S>*>& out) {
    fc1.collect(out);
    fc2.collect(out);
  }
};

// Pre-norm transformer block: x += MHA(LN(x)); x += MLP(LN(x)).
template <class S>
struct TransformerBlockP {
  LayerNormP<S> ln1, ln2;
  MhaP<S> attn;
  MlpP<S> mlp;
  TransformerBlockP() = default;
  TransformerBlockP(const std::string& name, int dim, int heads, int mlp_hidden)
      : ln1(name + ".ln1", dim), ln2(name + ".ln2", dim),
        attn(name + ".attn", dim, heads), mlp(name + ".mlp", dim, mlp_hidden) {}
  void init(Rng& rng, double stddev = 0.02) {
    attn.init(rng, stddev);
    mlp.init(rng, stddev);
  }
  typename Graph<S>::Val fwd(Graph<S>& g, typename Graph<S>::Val x, bool frozen = false) {
    auto h = ln1.fwd(g, x, frozen);
    x = g.add(x, attn.fwd(g, h, h, frozen));
    return g.add(x, mlp.fwd(g, ln2.fwd(g, x, frozen), frozen));
  }
  void collect(std::vector<ParamTensor<S>*>& out) {
    ln1.collect(out);
    ln2.collect(out);
    attn.collect(out);
    mlp.collect(out);
  }
};

}  // namespace mbev::nn
