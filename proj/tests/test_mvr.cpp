// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "mbev/flops.hpp"
#include "mbev/mvr.hpp"
#include "support/oracles.hpp"

using namespace mbev;
using G = nn::Graph<double>;
using Val = G::Val;

namespace {

const double kRatioSweep[] = {0.60, 0.64, 0.68, 0.72, 0.76, 0.80};

// A grid of distinct pseudo-random values so copies are traceable.
FeatureGridT<double> random_grid(int hf, int wf, int c, uint64_t seed) {
  FeatureGridT<double> f;
  f.hf = hf;
  f.wf = wf;
  f.channels = c;
  f.allocate();
  Rng rng(seed);
  for (auto& s : f.slices)
    for (auto& v : s) v = rng.normal();
  return f;
}

MVRConfig tiny_cfg(MvrVariant variant, double ratio = 0.76, bool pe = false) {
  MVRConfig cfg;
  cfg.variant = variant;
  cfg.mask_ratio = ratio;
  cfg.decoder_layers = 1;
  cfg.decoder_dim = 8;
  cfg.heads = 2;
  cfg.mlp_ratio = 2;
  cfg.pe_enabled = pe;
  return cfg;
}

Rig test_rig(int hf, int wf) { return make_rig(6, 70, 60, 1.5, hf * 8, wf * 8); }

}  // namespace

TEST_CASE("column partition") {
  auto check_split = [](int wf, double ratio, int l, int m, int r) {
    const auto s = partition_columns(wf, ratio);
    CHECK(s.left == l);
    CHECK(s.mid == m);
    CHECK(s.right == r);
  };
  check_split(16, 0.76, 2, 12, 2);
  check_split(10, 0.80, 1, 8, 1);
  check_split(3, 0.34, 1, 1, 1);
  CHECK_THROWS_AS((void)partition_columns(2, 0.5), MbevError);
  CHECK_THROWS_AS((void)partition_columns(16, 0.0), MbevError);
  CHECK_THROWS_AS((void)partition_columns(16, 1.0), MbevError);
  CHECK_THROWS_AS((void)partition_columns(4, 0.01), MbevError);  // mid would vanish

  SUBCASE("budget invariant over randomized valid inputs") {
    Rng rng(31);
    int checked = 0;
    for (int trial = 0; trial < 500; ++trial) {
      const int wf = 3 + rng.uniform_int(62);
      const double ratio = 0.02 + 0.96 * rng.uniform();
      ColumnSplit s;
      try {
        s = partition_columns(wf, ratio);
      } catch (const MbevError&) {
        continue;
      }
      CHECK(s.left + s.mid + s.right == wf);
      CHECK(s.left >= 1);
      CHECK(s.mid >= 1);
      CHECK(s.right >= 1);
      CHECK(s.left == s.right);
      CHECK(s.left == std::max<long>(1, std::lround((1.0 - ratio) / 2.0 * wf)));
      ++checked;
    }
    CHECK(checked > 400);
  }
}

TEST_CASE("reference decoder scale constants") {
  const auto ref = MVRConfig::reference_scale();
  CHECK(ref.decoder_layers == 4);
  CHECK(ref.decoder_dim == 512);
}

TEST_CASE("local assembly content") {
  const int hf = 2, wf = 5, c = 3;
  const Rig rig = test_rig(hf, wf);
  Rng rng(8);

  SUBCASE("constant neighbors fill the sides with that constant") {
    FeatureGridT<double> f;
    f.hf = hf;
    f.wf = wf;
    f.channels = c;
    f.allocate();
    const int view = 2;
    const double a = 1.75;
    for (int t = 0; t < 2; ++t) {
      for (auto& v : f.slices[slice_index(rig.left_of(view), t)]) v = a;
      for (auto& v : f.slices[slice_index(rig.right_of(view), t)]) v = a;
    }
    MaskPattern p;
    p.masked[view] = true;
    MvrModuleT<double> mvr(tiny_cfg(MvrVariant::Local, 0.6), c, rng);
    G g(false);
    auto grid = grid_inputs(g, f);
    const auto seq = mvr.assemble_local(g, grid, p, view, rig, nullptr);
    const auto split = partition_columns(wf, 0.6);
    const auto& tokens = g.val(seq.tokens);
    CHECK(int(seq.provenance.size()) == 2 * hf * wf);
    CHECK(seq.masked_idx.size() == size_t(2 * hf * wf));
    for (int r = 0; r < hf; ++r)
      for (int col = 0; col < split.left; ++col)
        for (int ch = 0; ch < c; ++ch)
          CHECK(tokens[(size_t(r) * wf + col) * c + ch] == doctest::Approx(a));
  }

  SUBCASE("side parts average the two timesteps") {
    FeatureGridT<double> f;
    f.hf = hf;
    f.wf = wf;
    f.channels = c;
    f.allocate();
    const int view = 0;
    const double a = 2.0, b = 5.0;
    for (auto& v : f.slices[slice_index(rig.left_of(view), 0)]) v = a;
    for (auto& v : f.slices[slice_index(rig.left_of(view), 1)]) v = b;
    MaskPattern p;
    p.masked[view] = true;
    MvrModuleT<double> mvr(tiny_cfg(MvrVariant::Local, 0.6), c, rng);
    G g(false);
    const auto seq = mvr.assemble_local(g, grid_inputs(g, f), p, view, rig, nullptr);
    const auto& tokens = g.val(seq.tokens);
    CHECK(tokens[0] == doctest::Approx((a + b) / 2));
  }

  SUBCASE("both neighbors masked: pure mask-token plane") {
    const auto f = random_grid(hf, wf, c, 77);
    MaskPattern p;
    p.masked[0] = p.masked[1] = p.masked[5] = true;
    MvrModuleT<double> mvr(tiny_cfg(MvrVariant::Local), c, rng);
    G g(false);
    const auto seq = mvr.assemble_local(g, grid_inputs(g, f), p, 0, rig, nullptr);
    const auto& tokens = g.val(seq.tokens);
    const auto& tok = mvr.mask_token().v;
    for (int i = 0; i < 2 * hf * wf; ++i)
      for (int ch = 0; ch < c; ++ch)
        CHECK(tokens[size_t(i) * c + ch] == tok[ch]);
  }

  SUBCASE("requires the view to be masked") {
    const auto f = random_grid(hf, wf, c, 5);
    MaskPattern p;
    p.masked[1] = true;
    MvrModuleT<double> mvr(tiny_cfg(MvrVariant::Local), c, rng);
    G g(false);
    auto grid = grid_inputs(g, f);
    CHECK_THROWS_AS((void)mvr.assemble_local(g, grid, p, 0, rig, nullptr), MbevError);
  }
}

TEST_CASE("local assembly equals the per-cell reference") {
  Rng rng(2024);
  for (double ratio : kRatioSweep) {
    for (int wf = 4; wf <= 16; wf += 3) {
      const int hf = 2 + int(rng.uniform_int(3));
      const int c = 4;
      const Rig rig = test_rig(hf, wf);
      const auto f = random_grid(hf, wf, c, rng.next_u64());
      MaskPattern p;
      const int view = rng.uniform_int(6);
      p.masked[view] = true;
      if (rng.uniform() < 0.5) p.masked[rig.left_of(view)] = true;
      if (rng.uniform() < 0.3) p.masked[rig.right_of(view)] = true;

      MvrModuleT<double> mvr(tiny_cfg(MvrVariant::Local, ratio), c, rng);
      G g(false);
      const auto seq = mvr.assemble_local(g, grid_inputs(g, f), p, view, rig, nullptr);
      const auto split = partition_columns(wf, ratio);
      const auto ref = oracles::local_assembly_reference<double>(
          f.slices, hf, wf, c, p, view, rig.left_of(view), rig.right_of(view),
          mvr.mask_token().v, split.left, split.mid, split.right);
      const auto& tokens = g.val(seq.tokens);
      REQUIRE(tokens.size() == 2 * ref.size());
      for (size_t i = 0; i < ref.size(); ++i) {
        CHECK(tokens[i] == ref[i]);                  // timestep slot 0
        CHECK(tokens[ref.size() + i] == ref[i]);     // same plane, slot 1
      }
    }
  }
}

TEST_CASE("side parts depend only on the matching neighbor") {
  const int hf = 2, wf = 6, c = 3;
  const Rig rig = test_rig(hf, wf);
  Rng rng(4);
  auto f = random_grid(hf, wf, c, 9);
  const int view = 3;
  MaskPattern p;
  p.masked[view] = true;
  MvrModuleT<double> mvr(tiny_cfg(MvrVariant::Local, 0.66), c, rng);

  auto left_part = [&](const FeatureGridT<double>& grid) {
    G g(false);
    const auto seq = mvr.assemble_local(g, grid_inputs(g, grid), p, view, rig, nullptr);
    const auto split = partition_columns(wf, 0.66);
    std::vector<double> out;
    const auto& tokens = g.val(seq.tokens);
    for (int r = 0; r < hf; ++r)
      for (int col = 0; col < split.left; ++col)
        for (int ch = 0; ch < c; ++ch)
          out.push_back(tokens[(size_t(r) * wf + col) * c + ch]);
    return out;
  };

  const auto base = left_part(f);
  // perturb every unmasked view except the left neighbor
  for (int v = 0; v < kViews; ++v) {
    if (v == view || v == rig.left_of(view)) continue;
    for (int t = 0; t < 2; ++t)
      for (auto& x : f.slices[slice_index(v, t)]) x += 3.0;
  }
  CHECK(left_part(f) == base);
  // now perturb the left neighbor: the left part must move
  for (auto& x : f.slices[slice_index(rig.left_of(view), 0)]) x += 1.0;
  CHECK(left_part(f) != base);
}

TEST_CASE("global assembly") {
  const int hf = 8, wf = 16, c = 4;
  Rng rng(6);
  const auto f = random_grid(hf, wf, c, 11);
  MvrModuleT<double> mvr(tiny_cfg(MvrVariant::Global), c, rng);

  SUBCASE("sequence and masked-index bookkeeping") {
    MaskPattern p;
    p.masked[2] = true;
    G g(false);
    const auto seq = mvr.assemble_global(g, grid_inputs(g, f), p, nullptr, nullptr);
    CHECK(g.rows(seq.tokens) == 12 * hf * wf);  // 1536 at this grid
    CHECK(seq.masked_idx.size() == size_t(2 * hf * wf));  // 256
    CHECK(seq.provenance.size() == size_t(12 * hf * wf));
    // provenance covers each slot exactly once
    std::set<std::tuple<int, int, int, int>> slots;
    for (const auto& pr : seq.provenance)
      slots.insert({pr.view, pr.t, pr.row, pr.col});
    CHECK(slots.size() == seq.provenance.size());
    // masked indices point at view 2's slots
    for (int idx : seq.masked_idx) CHECK(seq.provenance[idx].view == 2);
  }

  SUBCASE("all views masked is rejected") {
    MaskPattern p;
    for (int v = 0; v < kViews; ++v) p.masked[v] = true;
    G g(false);
    auto grid = grid_inputs(g, f);
    try {
      (void)mvr.assemble_global(g, grid, p, nullptr, nullptr);
      FAIL("expected NoContext");
    } catch (const MbevError& e) {
      CHECK(e.code() == Err::NoContext);
    }
  }

  SUBCASE("nothing masked is a bypass, not an assembly") {
    MaskPattern p;
    G g(false);
    auto grid = grid_inputs(g, f);
    try {
      (void)mvr.assemble_global(g, grid, p, nullptr, nullptr);
      FAIL("expected NothingToReconstruct");
    } catch (const MbevError& e) {
      CHECK(e.code() == Err::NothingToReconstruct);
    }
  }
}

TEST_CASE("decoder output and reconstruction loss") {
  const int hf = 2, wf = 4, c = 8;
  const Rig rig = test_rig(hf, wf);
  Rng rng(13);

  SUBCASE("zeroed final projection gives all-zero reconstructions") {
    // C == dim here, so zero the final transformer mlp and attention output
    // plus the output norm scale: the decoder then emits exactly zero.
    MVRConfig cfg = tiny_cfg(MvrVariant::Local);
    cfg.decoder_dim = c;
    MvrModuleT<double> mvr(cfg, c, rng);
    std::vector<nn::ParamTensor<double>*> params;
    mvr.collect(params);
    for (auto* p : params)
      if (p->name == "mvr.out_ln.g") p->fill(0.0);
    const auto f = random_grid(hf, wf, c, 3);
    MaskPattern p;
    p.masked[4] = true;
    G g(false);
    const auto seq = mvr.assemble_local(g, grid_inputs(g, f), p, 4, rig, nullptr);
    const auto rec = mvr.decode(g, seq);
    for (const auto& e : rec.entries)
      for (const auto& slice : e.slice)
        for (double v : g.val(slice)) CHECK(v == 0.0);
  }

  SUBCASE("loss spot values") {
    G g(false);
    // identical tensors
    FeatureGridT<double> f = random_grid(hf, wf, 1, 21);
    auto grid = grid_inputs(g, f);
    ReconstructedFeatures<double> same;
    same.entries.push_back({3, {grid.slice[slice_index(3, 0)],
                                grid.slice[slice_index(3, 1)]}});
    CHECK(g.scalar(recon_loss(g, grid, same)) == doctest::Approx(0.0));

    // all-zero originals vs all-one reconstructions: unit residual
    FeatureGridT<double> zeros;
    zeros.hf = hf;
    zeros.wf = wf;
    zeros.channels = 1;
    zeros.allocate();
    auto zgrid = grid_inputs(g, zeros);
    std::vector<double> ones(size_t(hf) * wf, 1.0);
    ReconstructedFeatures<double> ones_rec;
    ones_rec.entries.push_back(
        {0, {g.input(hf * wf, 1, ones), g.input(hf * wf, 1, ones)}});
    CHECK(g.scalar(recon_loss(g, zgrid, ones_rec)) == doctest::Approx(1.0));
  }

  SUBCASE("two scalar tokens give mean squared residual 12.5") {
    G g(false);
    const auto a = g.input(2, 1, std::vector<double>{0.0, 0.0});
    const auto b = g.input(2, 1, std::vector<double>{3.0, 4.0});
    CHECK(g.scalar(g.mse(a, b)) == doctest::Approx(12.5));
  }

  SUBCASE("shape mismatch throws") {
    G g(false);
    auto a = g.zeros(4, 2);
    auto b = g.zeros(4, 3);
    CHECK_THROWS_AS((void)g.mse(a, b), MbevError);
  }
}

TEST_CASE("reconstruction loss gradients vs finite differences") {
  const int hf = 2, wf = 4, c = 8;
  const Rig rig = test_rig(hf, wf);
  Rng rng(19);
  const auto f = random_grid(hf, wf, c, 29);

  SUBCASE("local variant, token and decoder weights") {
    MvrModuleT<double> mvr(tiny_cfg(MvrVariant::Local, 0.7, true), c, rng);
    TimePET<double> tpe(c, rng);
    MaskPattern p;
    p.masked[1] = true;
    std::vector<nn::ParamTensor<double>*> params;
    mvr.collect(params);
    tpe.collect(params);
    const double err = oracles::grad_check<double>(params, [&](G& g) {
      auto grid = grid_inputs(g, f);
      auto seq = mvr.assemble_local(g, grid, p, 1, rig, &tpe);
      return recon_loss(g, grid, mvr.decode(g, seq));
    });
    CHECK(err < 1e-3);
  }

  SUBCASE("global variant with frustum embedding") {
    MVRConfig cfg = tiny_cfg(MvrVariant::Global, 0.76, true);
    MvrModuleT<double> mvr(cfg, c, rng);
    TimePET<double> tpe(c, rng);
    PEConfig pec;
    pec.depth_bins = 2;
    PE3DT<double> pe3(rig, hf, wf, 8, c, pec, rng);
    MaskPattern p;
    p.masked[0] = p.masked[3] = true;
    std::vector<nn::ParamTensor<double>*> params;
    mvr.collect(params);
    const double err = oracles::grad_check<double>(params, [&](G& g) {
      auto grid = grid_inputs(g, f);
      auto seq = mvr.assemble_global(g, grid, p, &pe3, &tpe);
      return recon_loss(g, grid, mvr.decode(g, seq));
    });
    CHECK(err < 1e-3);
  }
}

TEST_CASE("substitution locality") {
  const int hf = 2, wf = 4, c = 3;
  Rng rng(23);
  const auto f = random_grid(hf, wf, c, 31);
  MvrModuleT<double> mvr(tiny_cfg(MvrVariant::Local), c, rng);

  SUBCASE("empty pattern is the identity") {
    G g(false);
    auto grid = grid_inputs(g, f);
    const auto out = substitute(grid, MaskPattern{}, ReconstructedFeatures<double>{});
    for (int i = 0; i < kSlices; ++i) CHECK(out.slice[i] == grid.slice[i]);
  }

  SUBCASE("only the masked view changes, bit for bit") {
    G g(false);
    auto grid = grid_inputs(g, f);
    MaskPattern p;
    p.masked[2] = true;
    std::vector<double> repl(size_t(hf) * wf * c, 7.0);
    ReconstructedFeatures<double> rec;
    rec.entries.push_back({2, {g.input(hf * wf, c, repl), g.input(hf * wf, c, repl)}});
    const auto out = substitute(grid, p, rec);
    for (int v = 0; v < kViews; ++v)
      for (int t = 0; t < kTimesteps; ++t) {
        if (v == 2) {
          for (double x : g.val(out.slice[slice_index(v, t)]))
            CHECK(x == 7.0);
        } else {
          CHECK(out.slice[slice_index(v, t)] == grid.slice[slice_index(v, t)]);
        }
      }
  }

  SUBCASE("five of six replaced") {
    G g(false);
    auto grid = grid_inputs(g, f);
    MaskPattern p;
    for (int v = 0; v < kViews; ++v) p.masked[v] = v != 4;
    ReconstructedFeatures<double> rec;
    for (int v = 0; v < kViews; ++v)
      if (v != 4)
        rec.entries.push_back({v, {g.zeros(hf * wf, c), g.zeros(hf * wf, c)}});
    const auto out = substitute(grid, p, rec);
    CHECK(out.slice[slice_index(4, 0)] == grid.slice[slice_index(4, 0)]);
    int replaced = 0;
    for (int v = 0; v < kViews; ++v)
      replaced += out.slice[slice_index(v, 0)] != grid.slice[slice_index(v, 0)];
    CHECK(replaced == 5);
  }

  SUBCASE("reconstruction for an unmasked view is rejected") {
    G g(false);
    auto grid = grid_inputs(g, f);
    MaskPattern p;
    p.masked[1] = true;
    ReconstructedFeatures<double> rec;
    rec.entries.push_back({0, {g.zeros(hf * wf, c), g.zeros(hf * wf, c)}});
    CHECK_THROWS_AS((void)substitute(grid, p, rec), MbevError);
  }
}

TEST_CASE("local decode is always analytically cheaper than global") {
  Rng rng(41);
  for (int trial = 0; trial < 200; ++trial) {
    MVRConfig cfg;
    cfg.decoder_layers = 1 + rng.uniform_int(3);
    const int dims[] = {8, 16, 32, 64};
    cfg.decoder_dim = dims[rng.uniform_int(4)];
    cfg.heads = cfg.decoder_dim >= 16 ? 4 : 2;
    cfg.mlp_ratio = 1 + rng.uniform_int(4);
    const int hf = 2 + rng.uniform_int(6);
    const int wf = 3 + rng.uniform_int(12);
    const int c = 4 * (1 + rng.uniform_int(16));
    const int k = 1 + rng.uniform_int(5);
    cfg.variant = MvrVariant::Local;
    const double local = mvr_decode_flops(cfg, c, hf, wf, k);
    cfg.variant = MvrVariant::Global;
    const double global = mvr_decode_flops(cfg, c, hf, wf, k);
    CHECK(local < global);
  }
}
