#pragma once
#include <vector>

#include "utvc/autodiff.hpp"
#include "utvc/motion.hpp"
#include "utvc/scaling.hpp"
#include "utvc/transform.hpp"

namespace utvc {

// Progressive temporal alignment in the latent domain. A grouped
// convolution refines the block flow into L offsets per latent position,
// deformable cross-attention gathers the previous latent at those offsets,
// and a small fusion stack folds the result into the coarsely aligned
// latent. Everything here consumes decoder-available values only.

struct AlignConfig {
  int latent_c = 48;  // C
  int offsets = 32;   // L
  // residual added to the attention output: previous decoded latent
  // (default, matches the additive form) or the coarsely aligned latent
  bool residual_coarse = false;
};

struct AlignParams {
  Tensor ltmr_w, ltmr_b;                  // grouped 3x3, (4C+2) -> 2L, opens at zero
  Tensor pq, pk, pv;                      // bias-free 1x1 projections, C -> C
  Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;  // per-pixel C -> 2C -> C, last layer opens at zero
  Tensor fuse_w, fuse_b;                  // 3x3, 2C -> C, opens as identity on the coarse half
};
AlignParams make_align_params(const AlignConfig& cfg, Rng& rng);

struct AlignIds {
  int ltmr_w = -1, ltmr_b = -1;
  int pq = -1, pk = -1, pv = -1;
  int mlp_w1 = -1, mlp_b1 = -1, mlp_w2 = -1, mlp_b2 = -1;
  int fuse_w = -1, fuse_b = -1;
};
AlignIds bind_align(Tape& t, const AlignParams& p, bool trainable);

// decoded-side history shared by encoder and decoder; never holds
// encoder-only values
struct LatentBuffer {
  std::vector<Tensor> latents;  // newest first
  Tensor xprev;                 // previous reconstructed frame
  void push(const Tensor& yhat, const Tensor& xhat);
  // ago in {1,2,3}; early frames repeat the oldest entry
  const Tensor& latent(int ago) const;
  bool empty() const { return latents.empty(); }
  void clear();
};

// refined offsets (2L,h,w) from Concat(ytil, y1, y2, y3, ohat); channels
// pair up as (dx_l, dy_l) and the block flow is added to every pair, so
// zero weights broadcast the block flow unchanged
int build_ltmr(Tape& t, int ytil, int y1, int y2, int y3, int ohat, const AlignConfig& cfg,
               const AlignIds& ids);

// deformable cross-attention: per position, L rows of the projected
// previous latent sampled at position + offset, attended by the projected
// coarse latent. Optional out receives the (L, h*w, 1) attention weights.
int build_fg_dca(Tape& t, int ytil, int yprev, int obar, const AlignConfig& cfg,
                 const AlignIds& ids, Tensor* attn = nullptr);

// attention output + residual, per-pixel MLP with skip, 3x3 fusion with the
// coarse latent; the stages downstream of ytil, shared by training losses
int build_fine_align(Tape& t, int ytil, int y1, int y2, int y3, int ohat, const AlignConfig& cfg,
                     const AlignIds& ids);

struct AlignOut {
  int ytil = -1;    // coarse aligned latent, scaled domain
  int ycheck = -1;  // fine aligned latent
};

// warp the previous reconstruction by the coded flow, transform and scale
// it, then refine. The warp and flow pooling run outside the tape; nothing
// upstream of them ever needs gradients.
AlignOut build_progressive_align(Tape& t, const LatentBuffer& buf, const FlowField& vhat,
                                 int logq, const TransformConfig& tcfg, const TransformIds& tids,
                                 const QcmoeConfig& qcfg, const QcmoeIds& enc,
                                 const AlignConfig& acfg, const AlignIds& aids);

struct ProgressiveOut {
  Tensor ytil, ycheck;
};
ProgressiveOut progressive_align(const LatentBuffer& buf, const FlowField& vhat,
                                 const Tensor& logq, const TransformConfig& tcfg,
                                 const TransformParams* tp, const QcmoeConfig& qcfg,
                                 const QcmoeParams& enc, const AlignConfig& acfg,
                                 const AlignParams& ap);

}  // namespace utvc
