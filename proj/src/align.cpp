#include "utvc/align.hpp"

#include <cmath>
#include <stdexcept>

namespace utvc {

namespace {
Tensor conv_init(int oc, int ic, int kh, int kw, Rng& rng) {
  const float bound = std::sqrt(2.0f / (static_cast<float>(ic) * kh * kw));
  return Tensor::uniform({oc, ic, kh, kw}, -bound, bound, rng);
}

// integer lattice positions (x, y), the whole grid repeated `reps` times
Tensor lattice(int h, int w, int reps) {
  Tensor out(std::vector<int>{reps * h * w, 2});
  int64_t i = 0;
  for (int r = 0; r < reps; ++r)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        out[i++] = static_cast<float>(x);
        out[i++] = static_cast<float>(y);
      }
  return out;
}
}  // namespace

AlignParams make_align_params(const AlignConfig& cfg, Rng& rng) {
  if (cfg.offsets < 1) throw std::invalid_argument("align: need at least one offset");
  const int C = cfg.latent_c, L = cfg.offsets;
  AlignParams p;
  p.ltmr_w = Tensor::zeros({2 * L, (4 * C + 2) / 2, 3, 3});  // groups=2
  p.ltmr_b = Tensor::zeros({2 * L});
  p.pq = conv_init(C, C, 1, 1, rng);
  p.pk = conv_init(C, C, 1, 1, rng);
  p.pv = conv_init(C, C, 1, 1, rng);
  p.mlp_w1 = conv_init(2 * C, C, 1, 1, rng);
  p.mlp_b1 = Tensor::zeros({2 * C});
  p.mlp_w2 = Tensor::zeros({C, 2 * C, 1, 1});
  p.mlp_b2 = Tensor::zeros({C});
  p.fuse_w = Tensor::zeros({C, 2 * C, 3, 3});
  for (int oc = 0; oc < C; ++oc) p.fuse_w[((oc * 2 * C) + C + oc) * 9 + 4] = 1.0f;
  p.fuse_b = Tensor::zeros({C});
  return p;
}

AlignIds bind_align(Tape& t, const AlignParams& p, bool trainable) {
  AlignIds ids;
  ids.ltmr_w = t.input(p.ltmr_w, trainable);
  ids.ltmr_b = t.input(p.ltmr_b, trainable);
  ids.pq = t.input(p.pq, trainable);
  ids.pk = t.input(p.pk, trainable);
  ids.pv = t.input(p.pv, trainable);
  ids.mlp_w1 = t.input(p.mlp_w1, trainable);
  ids.mlp_b1 = t.input(p.mlp_b1, trainable);
  ids.mlp_w2 = t.input(p.mlp_w2, trainable);
  ids.mlp_b2 = t.input(p.mlp_b2, trainable);
  ids.fuse_w = t.input(p.fuse_w, trainable);
  ids.fuse_b = t.input(p.fuse_b, trainable);
  return ids;
}

void LatentBuffer::push(const Tensor& yhat, const Tensor& xhat) {
  latents.insert(latents.begin(), yhat);
  if (latents.size() > 3) latents.resize(3);
  xprev = xhat;
}

const Tensor& LatentBuffer::latent(int ago) const {
  if (ago < 1 || ago > 3) throw std::invalid_argument("buffer: ago must be 1..3");
  if (latents.empty()) throw std::logic_error("buffer: no decoded latent yet");
  const size_t i = static_cast<size_t>(ago) - 1;
  return i < latents.size() ? latents[i] : latents.back();
}

void LatentBuffer::clear() {
  latents.clear();
  xprev = Tensor();
}

int build_ltmr(Tape& t, int ytil, int y1, int y2, int y3, int ohat, const AlignConfig& cfg,
               const AlignIds& ids) {
  const int L = cfg.offsets;
  const int in = t.concat({ytil, y1, y2, y3, ohat}, 0);
  const int o = t.conv2d(in, ids.ltmr_w, ids.ltmr_b, 1, 2, true);
  std::vector<int> copies(static_cast<size_t>(L), ohat);
  return t.add(o, t.concat(copies, 0));
}

int build_fg_dca(Tape& t, int ytil, int yprev, int obar, const AlignConfig& cfg,
                 const AlignIds& ids, Tensor* attn) {
  const int C = cfg.latent_c, L = cfg.offsets;
  const int h = t.val(ytil).dim(1), w = t.val(ytil).dim(2);
  const int hw = h * w;
  const int qmap = t.conv2d(ytil, ids.pq, -1, 1, 1, true);
  const int kmap = t.conv2d(yprev, ids.pk, -1, 1, 1, true);
  const int vmap = t.conv2d(yprev, ids.pv, -1, 1, 1, true);
  // offsets (2L,h,w) -> sampling locations (L*hw, 2); lattice gathers are
  // exact, so the query rows are the projected coarse latent itself
  const int o3 = t.reshape(obar, {L, 2, hw});
  const int ox = t.reshape(t.slice(o3, 1, 0, 1), {L, hw, 1});
  const int oy = t.reshape(t.slice(o3, 1, 1, 1), {L, hw, 1});
  const int off = t.reshape(t.concat({ox, oy}, 2), {L * hw, 2});
  const int loc = t.add(off, t.leaf(lattice(h, w, L)));
  const int krows = t.reshape(t.bilinear(kmap, loc), {L, hw, C});
  const int vrows = t.reshape(t.bilinear(vmap, loc), {L, hw, C});
  const int qrows = t.reshape(t.bilinear(qmap, t.leaf(lattice(h, w, 1))), {1, hw, C});
  const int score =
      t.cmul(t.sum_axis(t.mul(krows, qrows), 2), 1.0f / std::sqrt(static_cast<float>(C)));
  const int wgt = t.softmax(score, 0);  // (L,hw,1)
  if (attn) *attn = t.val(wgt);
  const int mix = t.reshape(t.sum_axis(t.mul(wgt, vrows), 0), {hw, C});
  return t.reshape(transpose2d(t, mix), {C, h, w});
}

int build_fine_align(Tape& t, int ytil, int y1, int y2, int y3, int ohat, const AlignConfig& cfg,
                     const AlignIds& ids) {
  const int obar = build_ltmr(t, ytil, y1, y2, y3, ohat, cfg, ids);
  const int att = build_fg_dca(t, ytil, y1, obar, cfg, ids);
  const int yp = t.add(att, cfg.residual_coarse ? ytil : y1);
  int m = t.conv2d(yp, ids.mlp_w1, ids.mlp_b1, 1, 1, true);
  m = leaky_relu(t, m, 0.1f);
  m = t.conv2d(m, ids.mlp_w2, ids.mlp_b2, 1, 1, true);
  const int ypp = t.add(m, yp);
  return t.conv2d(t.concat({ypp, ytil}, 0), ids.fuse_w, ids.fuse_b, 1, 1, true);
}

AlignOut build_progressive_align(Tape& t, const LatentBuffer& buf, const FlowField& vhat,
                                 int logq, const TransformConfig& tcfg, const TransformIds& tids,
                                 const QcmoeConfig& qcfg, const QcmoeIds& enc,
                                 const AlignConfig& acfg, const AlignIds& aids) {
  const Tensor xtil = warp(buf.xprev, vhat);
  const FlowField ohat = downsample_flow(vhat, tcfg.stride());
  const int yraw = build_analyze(t, t.leaf(xtil), tcfg, tids);
  AlignOut out;
  out.ytil = t.mul(yraw, build_qcmoe_scale(t, yraw, logq, qcfg, enc));
  const int y1 = t.leaf(buf.latent(1));
  const int y2 = t.leaf(buf.latent(2));
  const int y3 = t.leaf(buf.latent(3));
  out.ycheck = build_fine_align(t, out.ytil, y1, y2, y3, t.leaf(ohat.data), acfg, aids);
  return out;
}

ProgressiveOut progressive_align(const LatentBuffer& buf, const FlowField& vhat,
                                 const Tensor& logq, const TransformConfig& tcfg,
                                 const TransformParams* tp, const QcmoeConfig& qcfg,
                                 const QcmoeParams& enc, const AlignConfig& acfg,
                                 const AlignParams& ap) {
  if (tcfg.kind == TransformKind::TinyConv && !tp)
    throw std::invalid_argument("progressive_align: TinyConv needs transform params");
  Tape t;
  const TransformIds tids = tp ? bind_transform(t, *tp, false) : TransformIds{};
  const QcmoeIds qids = bind_qcmoe(t, enc, false);
  const AlignIds aids = bind_align(t, ap, false);
  const AlignOut o = build_progressive_align(t, buf, vhat, t.leaf(logq), tcfg, tids, qcfg, qids,
                                             acfg, aids);
  return {t.val(o.ytil), t.val(o.ycheck)};
}

}  // namespace utvc
