// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "mbev/nn/adamw.hpp"
#include "mbev/nn/blocks.hpp"
#include "mbev/nn/graph.hpp"
#include "support/oracles.hpp"

using namespace mbev;
using G = nn::Graph<double>;
using P = nn::ParamTensor<double>;

namespace {

P make_param(const char* name, int r, int c, uint64_t seed, double scale = 0.5) {
  P p(name, r, c);
  Rng rng(seed);
  p.init_normal(rng, scale);
  return p;
}

}  // namespace

TEST_CASE("matmul kernels agree with naive reference") {
  Rng rng(3);
  const int m = 5, k = 7, n = 4;
  std::vector<double> a(m * k), b(k * n);
  for (auto& x : a) x = rng.normal();
  for (auto& x : b) x = rng.normal();
  std::vector<double> y(m * n, 0.0), ref(m * n, 0.0);
  nn::mm_nn_acc(a.data(), b.data(), y.data(), m, k, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      for (int p = 0; p < k; ++p) ref[i * n + j] += a[i * k + p] * b[p * n + j];
  for (int i = 0; i < m * n; ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-12));

  // nt: y2 = a[m,k] * bt[n,k]^T must equal a * b when bt = b^T
  std::vector<double> bt(n * k);
  for (int p = 0; p < k; ++p)
    for (int j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];
  std::vector<double> y2(m * n, 0.0);
  nn::mm_nt_acc(a.data(), bt.data(), y2.data(), m, k, n);
  for (int i = 0; i < m * n; ++i) CHECK(y2[i] == doctest::Approx(ref[i]).epsilon(1e-12));

  // tn: y3 = at[k,m]^T... mm_tn_acc(a, b, y, m, k, n) computes a^T b with a[m,k]
  std::vector<double> y3(k * n, 0.0), ref3(k * n, 0.0);
  nn::mm_tn_acc(a.data(), b.data(), y3.data(), m, k, n);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < n; ++j)
      for (int p = 0; p < m; ++p) ref3[i * n + j] += a[p * k + i] * b[p * n + j];
  for (int i = 0; i < k * n; ++i) CHECK(y3[i] == doctest::Approx(ref3[i]).epsilon(1e-12));
}

TEST_CASE("gradients match central finite differences per op") {
  auto w1 = make_param("w1", 4, 6, 11);
  auto w2 = make_param("w2", 6, 3, 12);
  auto b2 = make_param("b2", 1, 3, 13, 0.1);
  auto gm = make_param("gm", 1, 6, 14, 0.2);
  auto bt = make_param("bt", 1, 6, 15, 0.2);
  for (auto& v : gm.v) v += 1.0;  // keep the norm scale near 1

  SUBCASE("linear + gelu + layernorm chain") {
    const double err = oracles::grad_check<double>(
        {&w1, &w2, &b2, &gm, &bt}, [&](G& g) {
          auto x = g.param(w1);
          auto ln = g.layernorm(x, g.param(gm), g.param(bt));
          auto y = g.linear(g.gelu(ln), g.param(w2), g.param(b2));
          return g.mse(y, g.zeros(4, 3));
        });
    CHECK(err < 1e-6);
  }

  SUBCASE("softmax attention composition") {
    auto q = make_param("q", 3, 4, 21);
    auto kk = make_param("k", 5, 4, 22);
    auto v = make_param("v", 5, 4, 23);
    const double err = oracles::grad_check<double>({&q, &kk, &v}, [&](G& g) {
      auto att = g.softmax_rows(g.scale(g.matmul_nt(g.param(q), g.param(kk)), 0.5));
      auto ctx = g.matmul(att, g.param(v));
      return g.mean_all(g.mul(ctx, ctx));
    });
    CHECK(err < 1e-6);
  }

  SUBCASE("slices, concats, gather, tile") {
    auto a = make_param("a", 6, 4, 31);
    auto t = make_param("t", 1, 4, 32);
    const double err = oracles::grad_check<double>({&a, &t}, [&](G& g) {
      auto x = g.param(a);
      auto top = g.slice_rows(x, 0, 3);
      auto cols = g.slice_cols(x, 1, 2);
      auto tiled = g.tile_rows(g.param(t), 3);
      auto cat = g.concat_rows({top, tiled});
      auto gat = g.gather_rows(cat, {0, 5, 2, 2});
      auto cc = g.concat_cols({g.slice_cols(gat, 0, 2), g.slice_cols(gat, 2, 2)});
      return g.add(g.mse(cc, g.zeros(4, 4)), g.l1_mean(cols, g.zeros(6, 2)));
    });
    CHECK(err < 1e-6);
  }

  SUBCASE("depthwise conv") {
    auto x = make_param("x", 12, 5, 41);
    auto w = make_param("w", 9, 5, 42, 0.3);
    auto b = make_param("b", 1, 5, 43, 0.1);
    const double err = oracles::grad_check<double>({&x, &w, &b}, [&](G& g) {
      auto y = g.dwconv3x3(g.param(x), 3, 4, g.param(w), g.param(b));
      return g.mean_all(g.mul(y, y));
    });
    CHECK(err < 1e-6);
  }

  SUBCASE("sigmoid exp affine lincomb") {
    auto a = make_param("a", 3, 3, 51, 0.4);
    auto b = make_param("b", 3, 3, 52, 0.4);
    const double err = oracles::grad_check<double>({&a, &b}, [&](G& g) {
      auto s = g.sigmoid(g.param(a));
      auto e = g.exp_(g.scale(g.param(b), 0.3));
      auto mix = g.lincomb(s, e, 0.7, 0.4);
      return g.mean_all(g.mul(mix, g.affine(mix, 1.2, -0.1)));
    });
    CHECK(err < 1e-6);
  }

  SUBCASE("focal from probabilities") {
    auto logits = make_param("lg", 4, 3, 61, 0.8);
    const std::vector<int> targets = {0, 2, 1, 2};
    const double err = oracles::grad_check<double>({&logits}, [&](G& g) {
      auto p = g.softmax_rows(g.param(logits));
      return g.focal_from_probs(g.take_per_row(p, targets), 0.25, 2.0);
    });
    CHECK(err < 1e-6);
  }

  SUBCASE("add_rowvec add_many sum") {
    auto x = make_param("x", 4, 3, 71);
    auto r = make_param("r", 1, 3, 72);
    const double err = oracles::grad_check<double>({&x, &r}, [&](G& g) {
      auto y = g.add_rowvec(g.param(x), g.param(r));
      auto z = g.add_many({y, y, g.param(x)});
      return g.scale(g.sum_all(g.mul(z, z)), 0.01);
    });
    CHECK(err < 1e-6);
  }
}

TEST_CASE("transformer block gradient check") {
  Rng rng(99);
  nn::TransformerBlockP<double> block("blk", 8, 2, 16);
  block.init(rng, 0.2);
  auto x = make_param("x", 6, 8, 100, 0.5);
  std::vector<P*> params = {&x};
  block.collect(params);
  const double err = oracles::grad_check<double>(params, [&](G& g) {
    auto y = block.fwd(g, g.param(x));
    return g.mse(y, g.zeros(6, 8));
  });
  CHECK(err < 1e-5);
}

TEST_CASE("shared parameter nodes accumulate both uses") {
  auto w = make_param("w", 2, 2, 7);
  const double err = oracles::grad_check<double>({&w}, [&](G& g) {
    auto a = g.param(w);
    auto b = g.param(w);  // same node, cached
    return g.mean_all(g.mul(a, b));
  });
  CHECK(err < 1e-7);
}

TEST_CASE("frozen parameters receive no gradient") {
  auto w = make_param("w", 2, 3, 8);
  w.zero_grad();
  G g;
  auto y = g.mse(g.param(w, /*frozen=*/true), g.zeros(2, 3));
  g.backward(y);
  for (double v : w.g) CHECK(v == 0.0);
}

TEST_CASE("adamw moves weights and respects zero gradients") {
  auto w = make_param("w", 2, 2, 9);
  const auto before = w.v;
  nn::AdamW<double>::Options opt;
  opt.lr = 1e-2;
  opt.total_steps = 10;
  opt.warmup_steps = 0;
  nn::AdamW<double> adam({&w}, opt);
  w.g = {1.0, -1.0, 0.5, 0.0};
  adam.step();
  CHECK(w.v[0] != before[0]);
  CHECK(w.v[3] != before[3]);  // weight decay still applies to matrices
  for (double gv : w.g) CHECK(gv == 0.0);
}
