#include "utvc/scaling.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace utvc {

namespace {
Tensor conv_init(int oc, int ic, Rng& rng) {
  const float bound = std::sqrt(2.0f / static_cast<float>(ic));
  return Tensor::uniform({oc, ic, 1, 1}, -bound, bound, rng);
}
}  // namespace

QcmoeParams make_qcmoe_params(const QcmoeConfig& cfg, Rng& rng) {
  if (cfg.active < 1 || cfg.active > cfg.experts)
    throw std::invalid_argument("qcmoe: need 1 <= K <= M");
  const int C = cfg.channels, H = 2 * cfg.channels;
  QcmoeParams p;
  p.r_w1 = conv_init(H, C, rng);
  p.r_b1 = Tensor::zeros({H});
  p.r_w2 = conv_init(cfg.experts, H, rng);
  p.r_b2 = Tensor::zeros({cfg.experts});
  for (int k = 0; k < cfg.experts; ++k) {
    p.e_w1.push_back(conv_init(H, C, rng));
    p.e_b1.push_back(Tensor::zeros({H}));
    p.e_w2.push_back(Tensor::zeros({C, H, 1, 1}));
    p.e_b2.push_back(Tensor::zeros({C}));
  }
  return p;
}

QcmoeIds bind_qcmoe(Tape& t, const QcmoeParams& p, bool trainable) {
  QcmoeIds ids;
  ids.r_w1 = t.input(p.r_w1, trainable);
  ids.r_b1 = t.input(p.r_b1, trainable);
  ids.r_w2 = t.input(p.r_w2, trainable);
  ids.r_b2 = t.input(p.r_b2, trainable);
  for (size_t k = 0; k < p.e_w1.size(); ++k) {
    ids.e_w1.push_back(t.input(p.e_w1[k], trainable));
    ids.e_b1.push_back(t.input(p.e_b1[k], trainable));
    ids.e_w2.push_back(t.input(p.e_w2[k], trainable));
    ids.e_b2.push_back(t.input(p.e_b2[k], trainable));
  }
  return ids;
}

Tensor topk_mask(const Tensor& sm, int k) {
  const int M = sm.dim(0);
  const int64_t pixels = sm.numel() / M;
  if (k < 1 || k > M) throw std::invalid_argument("qcmoe: need 1 <= K <= M");
  Tensor mask = Tensor::zeros(sm.shape());
  std::vector<int> order(static_cast<size_t>(M));
  for (int64_t p = 0; p < pixels; ++p) {
    for (int i = 0; i < M; ++i) order[static_cast<size_t>(i)] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return sm[a * pixels + p] > sm[b * pixels + p]; });
    for (int i = 0; i < k; ++i) mask[order[static_cast<size_t>(i)] * pixels + p] = 1.0f;
  }
  return mask;
}

int build_qcmoe_scale(Tape& t, int y, int logq, const QcmoeConfig& cfg, const QcmoeIds& ids,
                      Tensor* router_weights, Tensor* top1) {
  const int M = cfg.experts, K = cfg.active;
  if (K < 1 || K > M) throw std::invalid_argument("qcmoe: need 1 <= K <= M");
  const int q = t.exp_(t.reshape(logq, {cfg.channels, 1, 1}));
  int h = t.conv2d(t.add(y, q), ids.r_w1, ids.r_b1, 1, 1, true);
  h = leaky_relu(t, h, 0.1f);
  const int logits = t.conv2d(h, ids.r_w2, ids.r_b2, 1, 1, true);
  const int sm = t.softmax(logits, 0);
  const int w = t.mul(sm, t.leaf(topk_mask(t.val(sm), K)));
  int acc = -1;
  for (int k = 0; k < M; ++k) {
    int eh = t.conv2d(y, ids.e_w1[static_cast<size_t>(k)], ids.e_b1[static_cast<size_t>(k)], 1, 1,
                      true);
    eh = leaky_relu(t, eh, 0.1f);
    const int fk = t.exp_(t.conv2d(eh, ids.e_w2[static_cast<size_t>(k)],
                                   ids.e_b2[static_cast<size_t>(k)], 1, 1, true));
    const int term = t.mul(fk, t.slice(w, 0, k, 1));  // (1,h,w) spreads over channels
    acc = k == 0 ? term : t.add(acc, term);
  }
  if (router_weights) *router_weights = t.val(w);
  if (top1) {
    const Tensor& s = t.val(sm);
    const int64_t pixels = s.numel() / M;
    Tensor idx(std::vector<int>{static_cast<int>(s.dim(1)), static_cast<int>(s.dim(2))});
    for (int64_t p = 0; p < pixels; ++p) {
      int best = 0;
      for (int i = 1; i < M; ++i)
        if (s[i * pixels + p] > s[best * pixels + p]) best = i;
      idx[p] = static_cast<float>(best);
    }
    *top1 = std::move(idx);
  }
  return t.mul(acc, q);
}

QuantizeIds build_qcmoe_quantize(Tape& t, int yp, int logq, const QcmoeConfig& cfg,
                                 const QcmoeIds& enc, const QcmoeIds& dec) {
  QuantizeIds out;
  out.y = t.mul(yp, build_qcmoe_scale(t, yp, logq, cfg, enc));
  out.yq = t.round_ste(out.y);
  out.yr = t.mul(out.yq, reciprocal(t, build_qcmoe_scale(t, out.yq, logq, cfg, dec)));
  return out;
}

std::pair<Tensor, Tensor> quantize_naive(const Tensor& yp, float s) {
  if (!(s > 0.0f)) throw std::invalid_argument("quantize_naive: scale must be positive");
  Tensor yq(yp.shape()), yr(yp.shape());
  for (int64_t i = 0; i < yp.numel(); ++i) {
    yq[i] = round_half_away(yp[i] * s);
    yr[i] = yq[i] / s;
  }
  return {std::move(yq), std::move(yr)};
}

std::pair<Tensor, Tensor> quantize_channelwise(const Tensor& yp, const Tensor& m) {
  if (m.numel() != yp.dim(0))
    throw std::invalid_argument("quantize_channelwise: m length must match channels");
  for (int64_t c = 0; c < m.numel(); ++c)
    if (!(m[c] > 0.0f)) throw std::invalid_argument("quantize_channelwise: m must be positive");
  const int64_t plane = yp.numel() / yp.dim(0);
  Tensor yq(yp.shape()), yr(yp.shape());
  for (int64_t c = 0; c < yp.dim(0); ++c)
    for (int64_t i = c * plane; i < (c + 1) * plane; ++i) {
      yq[i] = round_half_away(yp[i] * m[c]);
      yr[i] = yq[i] / m[c];
    }
  return {std::move(yq), std::move(yr)};
}

QcmoeForwardOut qcmoe_forward(const Tensor& yp, const Tensor& logq, const QcmoeConfig& cfg,
                              const QcmoeParams& params) {
  Tape t;
  const QcmoeIds ids = bind_qcmoe(t, params, false);
  QcmoeForwardOut out;
  const int s = build_qcmoe_scale(t, t.leaf(yp), t.leaf(logq), cfg, ids, &out.router_weights,
                                  &out.top1);
  out.scale_map = t.val(s);
  return out;
}

QcmoeQuantizeOut qcmoe_quantize(const Tensor& yp, const Tensor& logq, const QcmoeConfig& cfg,
                                const QcmoeParams& enc, const QcmoeParams& dec) {
  Tape t;
  const QcmoeIds ei = bind_qcmoe(t, enc, false);
  const QcmoeIds di = bind_qcmoe(t, dec, false);
  const QuantizeIds ids = build_qcmoe_quantize(t, t.leaf(yp), t.leaf(logq), cfg, ei, di);
  return {t.val(ids.y), t.val(ids.yq), t.val(ids.yr)};
}

Tensor qcmoe_dequantize(const Tensor& yq, const Tensor& logq, const QcmoeConfig& cfg,
                        const QcmoeParams& dec) {
  Tape t;
  const QcmoeIds di = bind_qcmoe(t, dec, false);
  const int id = t.leaf(yq);
  return t.val(t.mul(id, reciprocal(t, build_qcmoe_scale(t, id, t.leaf(logq), cfg, di))));
}

Tensor interpolate_quality(const Tensor& logqm, const Tensor& logqn, float l) {
  if (logqm.numel() != logqn.numel())
    throw std::invalid_argument("interpolate_quality: size mismatch");
  Tensor out(logqm.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = l * logqm[i] + (1.0f - l) * logqn[i];
  return out;
}

}  // namespace utvc
