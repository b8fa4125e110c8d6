#pragma once
#include <utility>
#include <vector>

#include "utvc/autodiff.hpp"
#include "utvc/rng.hpp"
#include "utvc/tensor.hpp"

namespace utvc {

// Quantization-step controllers for the latent: a single global scale, a
// per-channel scale vector, and a content-adaptive mixture of scaling
// experts steered by a positive per-channel quality vector q. Quality
// vectors are stored and interpolated as log-values.

struct QcmoeConfig {
  int channels = 48;  // C
  int experts = 6;    // M
  int active = 2;     // K experts kept per pixel
};

// router and experts are per-pixel MLPs, realized as pairs of 1x1
// convolutions with hidden width 2C; experts end in an exponential head so
// every scale stays strictly positive. The encoder- and decoder-side
// mixtures share this structure but never share parameters.
struct QcmoeParams {
  Tensor r_w1, r_b1, r_w2, r_b2;
  std::vector<Tensor> e_w1, e_b1, e_w2, e_b2;  // one entry per expert
};

struct QcmoeIds {
  int r_w1 = -1, r_b1 = -1, r_w2 = -1, r_b2 = -1;
  std::vector<int> e_w1, e_b1, e_w2, e_b2;
};

// expert output layers start at zero, so every expert opens as the unit
// scale and the initial pipeline reduces to quality-vector scaling; the
// router starts random so the top-K choice is nondegenerate from step one
QcmoeParams make_qcmoe_params(const QcmoeConfig& cfg, Rng& rng);
QcmoeIds bind_qcmoe(Tape& t, const QcmoeParams& p, bool trainable);

// per pixel, the K largest softmax entries keep their values and the rest
// become zero; no renormalization of the survivors. Ties break toward the
// lower expert index so encode and decode always agree.
Tensor topk_mask(const Tensor& sm, int k);

// scale = q (*) sum_k w_k f_k(y) with w the masked router softmax. The mask
// enters the tape as a constant leaf, so gradients flow only through the
// surviving weights. Optional outs receive the masked router weights
// (M,h,w) and the strongest expert index per pixel (h,w).
int build_qcmoe_scale(Tape& t, int y, int logq, const QcmoeConfig& cfg, const QcmoeIds& ids,
                      Tensor* router_weights = nullptr, Tensor* top1 = nullptr);

struct QuantizeIds {
  int y = -1;   // scaled latent
  int yq = -1;  // rounded integers (straight-through gradient)
  int yr = -1;  // rescaled latent, recomputable from yq alone
};

// y = yp (*) scale_enc(yp, q); yq = round(y); yr = yq (*) 1/scale_dec(yq, q).
// The inverse scale is conditioned on yq, which the decoder has, so yr never
// depends on encoder-only data.
QuantizeIds build_qcmoe_quantize(Tape& t, int yp, int logq, const QcmoeConfig& cfg,
                                 const QcmoeIds& enc, const QcmoeIds& dec);

// plain-tensor entry points (no gradients; local tapes inside)
// yq = round(yp * s), yr = yq / s; round is half-away-from-zero
std::pair<Tensor, Tensor> quantize_naive(const Tensor& yp, float s);
// per-channel steps: yq = round(yp (*) m), yr = yq (*) 1/m; m > 0, length C
std::pair<Tensor, Tensor> quantize_channelwise(const Tensor& yp, const Tensor& m);

struct QcmoeForwardOut {
  Tensor scale_map;       // (C,h,w), strictly positive
  Tensor router_weights;  // (M,h,w), exactly K nonzero per pixel
  Tensor top1;            // (h,w), strongest expert index per pixel
};
QcmoeForwardOut qcmoe_forward(const Tensor& yp, const Tensor& logq, const QcmoeConfig& cfg,
                              const QcmoeParams& params);

struct QcmoeQuantizeOut {
  Tensor y, yq, yr;
};
QcmoeQuantizeOut qcmoe_quantize(const Tensor& yp, const Tensor& logq, const QcmoeConfig& cfg,
                                const QcmoeParams& enc, const QcmoeParams& dec);

// decoder-side rescale yr = yq (*) 1/scale_dec(yq, q); runs the same ops as
// the quantize path so the result is bit-identical given the same yq
Tensor qcmoe_dequantize(const Tensor& yq, const Tensor& logq, const QcmoeConfig& cfg,
                        const QcmoeParams& dec);

// exponential interpolation between two quality vectors, carried out where
// they live: log q_r = l log q_m + (1 - l) log q_n
Tensor interpolate_quality(const Tensor& logqm, const Tensor& logqn, float l);

}  // namespace utvc
