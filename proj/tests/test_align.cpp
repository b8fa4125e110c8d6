#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "utvc/align.hpp"
#include "utvc/kernels.hpp"

using namespace utvc;

namespace {

void fill(Tensor& t, float lo, float hi, Rng& rng) {
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform_f(lo, hi);
}

// 1x1 bias-free conv in double: out[c][p] = sum_ic w[c][ic] x[ic][p]
std::vector<double> conv1x1_d(const Tensor& w, const Tensor& x) {
  const int oc = w.dim(0), ic = w.dim(1);
  const int64_t hw = static_cast<int64_t>(x.dim(1)) * x.dim(2);
  std::vector<double> out(static_cast<size_t>(oc) * hw, 0.0);
  for (int c = 0; c < oc; ++c)
    for (int i = 0; i < ic; ++i)
      for (int64_t p = 0; p < hw; ++p)
        out[c * hw + p] += static_cast<double>(w[(c * ic + i)]) * x[i * hw + p];
  return out;
}

// clamped bilinear on a double plane, same corner convention as the kernels
double sample_d(const double* plane, int h, int w, float xf, float yf) {
  const double x = xf, y = yf;
  const double fx = x - std::floor(x), fy = y - std::floor(y);
  const int xi = static_cast<int>(std::floor(x)), yi = static_cast<int>(std::floor(y));
  auto cl = [](int v, int hi) { return v < 0 ? 0 : (v > hi ? hi : v); };
  const int x0 = cl(xi, w - 1), x1 = cl(xi + 1, w - 1);
  const int y0 = cl(yi, h - 1), y1 = cl(yi + 1, h - 1);
  return (1.0 - fy) * ((1.0 - fx) * plane[y0 * w + x0] + fx * plane[y0 * w + x1]) +
         fy * ((1.0 - fx) * plane[y1 * w + x0] + fx * plane[y1 * w + x1]);
}

}  // namespace

TEST_CASE("offset head shapes follow the config") {
  AlignConfig cfg;  // C=48, L=32
  Rng rng(31);
  AlignParams p = make_align_params(cfg, rng);
  CHECK(p.ltmr_w.dim(0) == 64);
  CHECK(p.ltmr_w.dim(1) == 97);
  CHECK(p.ltmr_w.dim(2) == 3);
  CHECK(p.ltmr_w.dim(3) == 3);
  CHECK(p.ltmr_b.dim(0) == 64);

  Tape t;
  const AlignIds ids = bind_align(t, p, false);
  const int ytil = t.leaf(Tensor::uniform({48, 6, 5}, -1.0f, 1.0f, rng));
  const int y1 = t.leaf(Tensor::uniform({48, 6, 5}, -1.0f, 1.0f, rng));
  const int y2 = t.leaf(Tensor::uniform({48, 6, 5}, -1.0f, 1.0f, rng));
  const int y3 = t.leaf(Tensor::uniform({48, 6, 5}, -1.0f, 1.0f, rng));
  const Tensor oh = Tensor::uniform({2, 6, 5}, 0.3f, 2.0f, rng);
  const int obar = build_ltmr(t, ytil, y1, y2, y3, t.leaf(oh), cfg, ids);
  CHECK(t.val(obar).dim(0) == 64);
  CHECK(t.val(obar).dim(1) == 6);
  CHECK(t.val(obar).dim(2) == 5);

  AlignConfig bad;
  bad.offsets = 0;
  CHECK_THROWS_AS(make_align_params(bad, rng), std::invalid_argument);
}

TEST_CASE("zero refinement broadcasts the block flow to every offset pair") {
  AlignConfig cfg;
  cfg.latent_c = 4;
  cfg.offsets = 3;
  Rng rng(32);
  AlignParams p = make_align_params(cfg, rng);  // refinement head opens at zero

  Tape t;
  const AlignIds ids = bind_align(t, p, false);
  const int ytil = t.leaf(Tensor::uniform({4, 5, 4}, -2.0f, 2.0f, rng));
  const int y1 = t.leaf(Tensor::uniform({4, 5, 4}, -2.0f, 2.0f, rng));
  const int y2 = t.leaf(Tensor::uniform({4, 5, 4}, -2.0f, 2.0f, rng));
  const int y3 = t.leaf(Tensor::uniform({4, 5, 4}, -2.0f, 2.0f, rng));
  Tensor oh(std::vector<int>{2, 5, 4});
  for (int64_t i = 0; i < 20; ++i) {
    oh[i] = rng.uniform_f(0.3f, 2.0f);        // dx
    oh[20 + i] = rng.uniform_f(-2.0f, -0.3f);  // dy
  }
  const Tensor obar = t.val(build_ltmr(t, ytil, y1, y2, y3, t.leaf(oh), cfg, ids));
  REQUIRE(obar.dim(0) == 6);
  for (int l = 0; l < 3; ++l)
    for (int64_t i = 0; i < 20; ++i) {
      CHECK(obar[(2 * l) * 20 + i] == oh[i]);
      CHECK(obar[(2 * l + 1) * 20 + i] == oh[20 + i]);
    }
}

TEST_CASE("the grouped refinement reads the two input halves separately") {
  // inputs concat to 18 channels, so group 0 sees channels 0..8 (coarse
  // latent, reference, first history channel) and group 1 sees 9..17
  // (rest of history, block flow)
  AlignConfig cfg;
  cfg.latent_c = 4;
  cfg.offsets = 3;
  Rng rng(33);
  AlignParams p = make_align_params(cfg, rng);
  fill(p.ltmr_w, -0.5f, 0.5f, rng);
  fill(p.ltmr_b, -0.2f, 0.2f, rng);

  const Tensor y1 = Tensor::uniform({4, 5, 4}, -2.0f, 2.0f, rng);
  const Tensor y2 = Tensor::uniform({4, 5, 4}, -2.0f, 2.0f, rng);
  const Tensor y3a = Tensor::uniform({4, 5, 4}, -2.0f, 2.0f, rng);
  const Tensor y3b = Tensor::uniform({4, 5, 4}, -2.0f, 2.0f, rng);
  const Tensor ya = Tensor::uniform({4, 5, 4}, -2.0f, 2.0f, rng);
  const Tensor yb = Tensor::uniform({4, 5, 4}, -2.0f, 2.0f, rng);
  const Tensor oh = Tensor::uniform({2, 5, 4}, 0.3f, 1.0f, rng);

  auto run = [&](const Tensor& ytil, const Tensor& y3) {
    Tape t;
    const AlignIds ids = bind_align(t, p, false);
    return t.val(build_ltmr(t, t.leaf(ytil), t.leaf(y1), t.leaf(y2), t.leaf(y3), t.leaf(oh), cfg,
                            ids));
  };
  const Tensor oa = run(ya, y3a);
  const Tensor ob = run(yb, y3a);  // coarse latent changed: group 0 only
  const Tensor oc = run(ya, y3b);  // deep history changed: group 1 only

  bool g0_changed = false, g1_changed = false;
  for (int64_t i = 0; i < 3 * 20; ++i) {
    if (oa[i] != ob[i]) g0_changed = true;
    CHECK(oa[3 * 20 + i] == ob[3 * 20 + i]);
  }
  for (int64_t i = 0; i < 3 * 20; ++i) {
    CHECK(oa[i] == oc[i]);
    if (oa[3 * 20 + i] != oc[3 * 20 + i]) g1_changed = true;
  }
  CHECK(g0_changed);
  CHECK(g1_changed);
}

TEST_CASE("a single offset returns the projected previous latent") {
  AlignConfig cfg;
  cfg.latent_c = 5;
  cfg.offsets = 1;
  Rng rng(34);
  AlignParams p = make_align_params(cfg, rng);

  Tape t;
  const AlignIds ids = bind_align(t, p, false);
  const int ytil = t.leaf(Tensor::uniform({5, 4, 6}, -1.5f, 1.5f, rng));
  const int yprev = t.leaf(Tensor::uniform({5, 4, 6}, -1.5f, 1.5f, rng));
  const int obar = t.leaf(Tensor::zeros({2, 4, 6}));
  Tensor attn;
  const int out = build_fg_dca(t, ytil, yprev, obar, cfg, ids, &attn);

  // softmax over one row is exactly one, and lattice-point gathers are exact
  REQUIRE(attn.numel() == 24);
  for (int64_t i = 0; i < attn.numel(); ++i) CHECK(attn[i] == 1.0f);
  const int vmap = t.conv2d(yprev, ids.pv, -1, 1, 1, true);
  CHECK(bit_equal(t.val(out), t.val(vmap)));
}

TEST_CASE("uniform keys average the sampled value rows") {
  AlignConfig cfg;
  cfg.latent_c = 3;
  cfg.offsets = 4;
  Rng rng(35);
  AlignParams p = make_align_params(cfg, rng);
  p.pk = Tensor::zeros(p.pk.shape());  // every score is zero

  const int h = 4, w = 6, hw = h * w, L = 4, C = 3;
  Tape t;
  const AlignIds ids = bind_align(t, p, false);
  const Tensor ytilv = Tensor::uniform({C, h, w}, -1.5f, 1.5f, rng);
  const Tensor yprevv = Tensor::uniform({C, h, w}, -1.5f, 1.5f, rng);
  const Tensor obarv = Tensor::uniform({2 * L, h, w}, -1.2f, 1.2f, rng);
  Tensor attn;
  const int out =
      build_fg_dca(t, t.leaf(ytilv), t.leaf(yprevv), t.leaf(obarv), cfg, ids, &attn);
  for (int64_t i = 0; i < attn.numel(); ++i) CHECK(attn[i] == 0.25f);

  // oracle: gather the projected values at the same locations and average
  const Tensor vmap = t.val(t.conv2d(t.leaf(yprevv), ids.pv, -1, 1, 1, true));
  std::vector<float> loc(static_cast<size_t>(L) * hw * 2);
  std::vector<float> rows(static_cast<size_t>(L) * hw * C);
  for (int l = 0; l < L; ++l)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int64_t pidx = y * w + x;
        loc[(l * hw + pidx) * 2 + 0] = obarv[(2 * l) * hw + pidx] + static_cast<float>(x);
        loc[(l * hw + pidx) * 2 + 1] = obarv[(2 * l + 1) * hw + pidx] + static_cast<float>(y);
      }
  kernels::bilinear_gather(vmap.data(), C, h, w, loc.data(), L * hw, rows.data());
  const Tensor& got = t.val(out);
  for (int c = 0; c < C; ++c)
    for (int64_t pidx = 0; pidx < hw; ++pidx) {
      double avg = 0.0;
      for (int l = 0; l < L; ++l) avg += 0.25 * rows[(l * hw + pidx) * C + c];
      CHECK(std::abs(got[c * hw + pidx] - avg) < 1e-6);
    }
}

TEST_CASE("attention matches a double-precision oracle") {
  AlignConfig cfg;
  cfg.latent_c = 8;
  cfg.offsets = 4;
  Rng rng(36);
  AlignParams p = make_align_params(cfg, rng);
  fill(p.pq, -0.3f, 0.3f, rng);
  fill(p.pk, -0.3f, 0.3f, rng);
  fill(p.pv, -0.3f, 0.3f, rng);

  const int h = 5, w = 5, hw = 25, C = 8, L = 4;
  const Tensor ytilv = Tensor::uniform({C, h, w}, -1.5f, 1.5f, rng);
  const Tensor yprevv = Tensor::uniform({C, h, w}, -1.5f, 1.5f, rng);
  const Tensor obarv = Tensor::uniform({2 * L, h, w}, -2.0f, 2.0f, rng);

  Tape t;
  const AlignIds ids = bind_align(t, p, false);
  const int out = build_fg_dca(t, t.leaf(ytilv), t.leaf(yprevv), t.leaf(obarv), cfg, ids);
  const Tensor& got = t.val(out);

  const std::vector<double> Q = conv1x1_d(p.pq, ytilv);
  const std::vector<double> K = conv1x1_d(p.pk, yprevv);
  const std::vector<double> V = conv1x1_d(p.pv, yprevv);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int64_t pidx = y * w + x;
      double score[4], krow[4][8], vrow[4][8];
      for (int l = 0; l < L; ++l) {
        // the tape forms each location as a float sum, mirror that exactly
        const float lx = obarv[(2 * l) * hw + pidx] + static_cast<float>(x);
        const float ly = obarv[(2 * l + 1) * hw + pidx] + static_cast<float>(y);
        double s = 0.0;
        for (int c = 0; c < C; ++c) {
          krow[l][c] = sample_d(K.data() + c * hw, h, w, lx, ly);
          vrow[l][c] = sample_d(V.data() + c * hw, h, w, lx, ly);
          s += krow[l][c] * Q[c * hw + pidx];
        }
        score[l] = s / std::sqrt(static_cast<double>(C));
      }
      double mx = score[0];
      for (int l = 1; l < L; ++l) mx = std::max(mx, score[l]);
      double wsum = 0.0, wgt[4];
      for (int l = 0; l < L; ++l) wsum += (wgt[l] = std::exp(score[l] - mx));
      for (int c = 0; c < C; ++c) {
        double o = 0.0;
        for (int l = 0; l < L; ++l) o += (wgt[l] / wsum) * vrow[l][c];
        CHECK(std::abs(got[c * hw + pidx] - o) < 1e-5);
      }
    }
}

TEST_CASE("attention weights form a distribution per position") {
  AlignConfig cfg;
  cfg.latent_c = 6;
  cfg.offsets = 3;
  Rng rng(37);
  AlignParams p = make_align_params(cfg, rng);

  Tape t;
  const AlignIds ids = bind_align(t, p, false);
  const int ytil = t.leaf(Tensor::uniform({6, 7, 4}, -2.0f, 2.0f, rng));
  const int yprev = t.leaf(Tensor::uniform({6, 7, 4}, -2.0f, 2.0f, rng));
  const int obar = t.leaf(Tensor::uniform({6, 7, 4}, -1.5f, 1.5f, rng));
  Tensor attn;
  build_fg_dca(t, ytil, yprev, obar, cfg, ids, &attn);

  REQUIRE(attn.dim(0) == 3);
  REQUIRE(attn.dim(1) == 28);
  REQUIRE(attn.dim(2) == 1);
  for (int64_t pidx = 0; pidx < 28; ++pidx) {
    float sum = 0.0f;
    for (int l = 0; l < 3; ++l) {
      const float v = attn[l * 28 + pidx];
      CHECK(v >= 0.0f);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0f) < 1e-6f);
  }
}

TEST_CASE("fine alignment opens as the coarse latent") {
  AlignConfig cfg;
  cfg.latent_c = 6;
  cfg.offsets = 4;
  Rng rng(38);
  const AlignParams p = make_align_params(cfg, rng);

  Tape t;
  const AlignIds ids = bind_align(t, p, false);
  const int ytil = t.leaf(Tensor::uniform({6, 5, 5}, -1.5f, 1.5f, rng));
  const int y1 = t.leaf(Tensor::uniform({6, 5, 5}, -1.5f, 1.5f, rng));
  const int y2 = t.leaf(Tensor::uniform({6, 5, 5}, -1.5f, 1.5f, rng));
  const int y3 = t.leaf(Tensor::uniform({6, 5, 5}, -1.5f, 1.5f, rng));
  const int ohat = t.leaf(Tensor::uniform({2, 5, 5}, 0.2f, 0.6f, rng));
  const int ycheck = build_fine_align(t, ytil, y1, y2, y3, ohat, cfg, ids);
  CHECK(bit_equal(t.val(ycheck), t.val(ytil)));
}

TEST_CASE("the latent buffer repeats the oldest entry") {
  LatentBuffer buf;
  CHECK(buf.empty());
  CHECK_THROWS_AS(buf.latent(1), std::logic_error);
  CHECK_THROWS_AS(buf.latent(0), std::invalid_argument);
  CHECK_THROWS_AS(buf.latent(4), std::invalid_argument);

  const Tensor a = Tensor::full({2, 2, 2}, 1.0f);
  const Tensor b = Tensor::full({2, 2, 2}, 2.0f);
  const Tensor c = Tensor::full({2, 2, 2}, 3.0f);
  const Tensor d = Tensor::full({2, 2, 2}, 4.0f);
  const Tensor xa = Tensor::full({3, 8, 8}, 0.25f);
  const Tensor xb = Tensor::full({3, 8, 8}, 0.75f);

  buf.push(a, xa);
  CHECK(!buf.empty());
  CHECK(bit_equal(buf.latent(1), a));
  CHECK(bit_equal(buf.latent(2), a));
  CHECK(bit_equal(buf.latent(3), a));
  CHECK(buf.xprev[0] == 0.25f);

  buf.push(b, xb);
  CHECK(bit_equal(buf.latent(1), b));
  CHECK(bit_equal(buf.latent(2), a));
  CHECK(bit_equal(buf.latent(3), a));
  CHECK(buf.xprev[0] == 0.75f);

  buf.push(c, xa);
  CHECK(bit_equal(buf.latent(3), a));

  buf.push(d, xa);  // capacity three: the very first entry falls off
  CHECK(buf.latents.size() == 3);
  CHECK(bit_equal(buf.latent(1), d));
  CHECK(bit_equal(buf.latent(2), c));
  CHECK(bit_equal(buf.latent(3), b));

  buf.clear();
  CHECK(buf.empty());
  CHECK(buf.xprev.numel() == 0);
  CHECK_THROWS_AS(buf.latent(2), std::logic_error);
}

TEST_CASE("alignment replays identically from decoder-side state") {
  TransformConfig tcfg;  // block transform, stride 4, 48 channels
  QcmoeConfig qcfg{48, 4, 2};
  AlignConfig acfg;
  acfg.offsets = 8;
  Rng rng(39);
  QcmoeParams qp = make_qcmoe_params(qcfg, rng);
  for (size_t k = 0; k < qp.e_w2.size(); ++k) {
    fill(qp.e_w2[k], -0.3f, 0.3f, rng);
    fill(qp.e_b2[k], -0.2f, 0.2f, rng);
  }
  AlignParams ap = make_align_params(acfg, rng);
  fill(ap.ltmr_w, -0.1f, 0.1f, rng);
  fill(ap.ltmr_b, -0.05f, 0.05f, rng);
  fill(ap.mlp_w2, -0.2f, 0.2f, rng);
  fill(ap.fuse_w, -0.1f, 0.1f, rng);

  LatentBuffer buf;
  buf.push(Tensor::uniform({48, 4, 4}, -3.0f, 3.0f, rng),
           Tensor::uniform({3, 16, 16}, 0.0f, 1.0f, rng));
  FlowField vhat;
  vhat.data = Tensor(std::vector<int>{2, 16, 16});
  for (int64_t i = 0; i < 256; ++i) {
    vhat.data[i] = 1.25f;
    vhat.data[256 + i] = -0.75f;
  }
  Tensor logq(std::vector<int>{48});
  for (int c = 0; c < 48; ++c) logq[c] = 0.05f * static_cast<float>(c % 5) - 0.1f;

  const ProgressiveOut r1 = progressive_align(buf, vhat, logq, tcfg, nullptr, qcfg, qp, acfg, ap);
  const ProgressiveOut r2 = progressive_align(buf, vhat, logq, tcfg, nullptr, qcfg, qp, acfg, ap);
  CHECK(bit_equal(r1.ytil, r2.ytil));
  CHECK(bit_equal(r1.ycheck, r2.ycheck));
  CHECK(r1.ytil.dim(0) == 48);
  CHECK(r1.ytil.dim(1) == 4);
  CHECK(r1.ytil.dim(2) == 4);
  CHECK(r1.ycheck.dim(0) == 48);

  // the training-side graph, bound trainable, produces the same values
  Tape t;
  const QcmoeIds qids = bind_qcmoe(t, qp, true);
  const AlignIds aids = bind_align(t, ap, true);
  const AlignOut o =
      build_progressive_align(t, buf, vhat, t.input(logq, true), tcfg, {}, qcfg, qids, acfg, aids);
  CHECK(bit_equal(t.val(o.ytil), r1.ytil));
  CHECK(bit_equal(t.val(o.ycheck), r1.ycheck));

  TransformConfig tiny;
  tiny.kind = TransformKind::TinyConv;
  CHECK_THROWS_AS(progressive_align(buf, vhat, logq, tiny, nullptr, qcfg, qp, acfg, ap),
                  std::invalid_argument);
}

TEST_CASE("alignment stages pass finite-difference gradient checks") {
  AlignConfig cfg;
  cfg.latent_c = 4;
  cfg.offsets = 2;
  Rng rng(40);
  AlignParams p = make_align_params(cfg, rng);
  fill(p.pq, -0.3f, 0.3f, rng);
  fill(p.pk, -0.3f, 0.3f, rng);
  fill(p.pv, -0.3f, 0.3f, rng);
  // small first layer plus positive bias keeps every pre-activation on the
  // linear side of the leaky relu, so bias probes cannot cross the kink
  fill(p.mlp_w1, -0.05f, 0.05f, rng);
  fill(p.mlp_b1, 0.5f, 1.0f, rng);
  fill(p.mlp_w2, -0.3f, 0.3f, rng);
  fill(p.fuse_w, -0.2f, 0.2f, rng);

  const Tensor ytil = Tensor::uniform({4, 4, 4}, -1.5f, 1.5f, rng);
  const Tensor y1 = Tensor::uniform({4, 4, 4}, -1.5f, 1.5f, rng);
  const Tensor y2 = Tensor::uniform({4, 4, 4}, -1.5f, 1.5f, rng);
  const Tensor y3 = Tensor::uniform({4, 4, 4}, -1.5f, 1.5f, rng);
  // fractional parts well inside a bilinear cell; the refinement head is
  // probed at zero, so sampling locations move by at most a few h
  const Tensor ohat = Tensor::uniform({2, 4, 4}, 0.25f, 0.4f, rng);

  const std::vector<Tensor*> inputs = {&p.ltmr_w, &p.ltmr_b, &p.pq,     &p.pk,
                                       &p.pv,     &p.mlp_w1, &p.mlp_b1, &p.mlp_w2,
                                       &p.mlp_b2, &p.fuse_w, &p.fuse_b};
  auto build = [&](Tape& t, const std::vector<int>& in) {
    AlignIds ids;
    ids.ltmr_w = in[0], ids.ltmr_b = in[1];
    ids.pq = in[2], ids.pk = in[3], ids.pv = in[4];
    ids.mlp_w1 = in[5], ids.mlp_b1 = in[6], ids.mlp_w2 = in[7], ids.mlp_b2 = in[8];
    ids.fuse_w = in[9], ids.fuse_b = in[10];
    return build_fine_align(t, t.leaf(ytil), t.leaf(y1), t.leaf(y2), t.leaf(y3), t.leaf(ohat),
                            cfg, ids);
  };
  const GradCheckResult r = grad_check(build, inputs, 1e-3, 6, rng);
  CHECK(r.max_rel_err < 0.25);
  CHECK(r.mean_rel_err() < 2e-3);
}
