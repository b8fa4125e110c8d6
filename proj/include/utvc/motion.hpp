#pragma once
#include <cstdint>
#include <string>
#include <utility>

#include "utvc/entropy.hpp"
#include "utvc/tensor.hpp"

namespace utvc {

// Motion side of the codec: classical hierarchical block matching, flow
// coding on the block grid, and backward warping. Flow values point from
// each current-frame position to its source in the reference, so warping,
// downsampling, and attention offsets all add the flow as-is.

struct FlowField {
  Tensor data;  // (2,H,W): plane 0 = dx, plane 1 = dy, in pixels of its grid
  enum class Grid { pixel, latent };
  Grid grid = Grid::pixel;
};

constexpr int kFlowBlock = 8;
// residual model for the coded flow, in quarter-pel symbol units; narrow on
// purpose so an all-zero field costs well under 0.02 bits per pixel
constexpr double kFlowSigma = 0.2;

// three-level pyramid block matching on channel-mean intensity with
// mean-removed SAD (brightness changes are not motion): full +-8 integer
// search at the coarsest level, +-2 refinement per level (seeded window
// plus a zero-anchored window), then quarter-pel refinement on the full
// image. Costs carry a small displacement penalty; remaining ties prefer
// the smaller displacement, then smaller dx, then larger dy.
FlowField estimate_flow(const Tensor& cur, const Tensor& ref);

// block means quantized to quarter-pel, left-neighbor DPCM along each block
// row, residuals coded under the fixed zero-mean Gaussian. vhat is the coded
// flow expanded block-constant, identical at encoder and decoder.
std::pair<Bitchunk, FlowField> code_flow(const FlowField& v);
FlowField decode_flow(const uint8_t* bytes, size_t n, int h, int w);

// backward warp with edge clamp: out(x) = ref(x + vhat(x))
Tensor warp(const Tensor& ref, const FlowField& vhat);

// pxp mean pooling of each plane plus division by p (unit conversion into
// latent-grid pixels)
FlowField downsample_flow(const FlowField& vhat, int p);

// flow dump: magic "FLO2", u32 width and height, then float32 (dx, dy)
// pairs row-major per pixel
void write_flo2(const std::string& path, const FlowField& f);
FlowField read_flo2(const std::string& path);

}  // namespace utvc
