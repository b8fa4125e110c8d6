#pragma once
#include <string>
#include <vector>

#include "utvc/autodiff.hpp"

namespace utvc {

// Shared analysis/synthesis transform. One instance serves intra frames,
// inter frames, and motion-compensated frames alike.
enum class TransformKind { BlockDct, TinyConv };

struct TransformConfig {
  TransformKind kind = TransformKind::BlockDct;
  int p = 4;           // spatial stride; BlockDct emits 3p^2 channels
  int latent_c = 48;   // TinyConv output channels (BlockDct ignores this)
  int hidden_c = 16;   // TinyConv hidden width
  int channels() const { return kind == TransformKind::BlockDct ? 3 * p * p : latent_c; }
  // spatial downsampling factor between frame and latent grids
  int stride() const { return kind == TransformKind::BlockDct ? p : 4; }
};

// trainable tensors for the TinyConv kind; BlockDct has none
struct TransformParams {
  Tensor enc_w1, enc_b1, enc_w2, enc_b2;
  Tensor dec_w1, dec_b1, dec_w2, dec_b2;
};
TransformParams make_tiny_conv_params(const TransformConfig& cfg, Rng& rng);

// the same tensors bound into a tape, for wiring training graphs
struct TransformIds {
  int enc_w1 = -1, enc_b1 = -1, enc_w2 = -1, enc_b2 = -1;
  int dec_w1 = -1, dec_b1 = -1, dec_w2 = -1, dec_b2 = -1;
};
TransformIds bind_transform(Tape& t, const TransformParams& tp, bool trainable);

int build_analyze(Tape& t, int frame, const TransformConfig& cfg, const TransformIds& ids = {});
// clamp01 applies the [0,1] output clamp; pass false to look at the raw synthesis
int build_synthesize(Tape& t, int latent, const TransformConfig& cfg, const TransformIds& ids = {},
                     bool clamp01 = true);

// inference wrappers running a throwaway tape, so encoder and decoder share
// one code path with training
Tensor analyze(const Tensor& frame, const TransformConfig& cfg, const TransformParams* tp = nullptr);
Tensor synthesize(const Tensor& latent, const TransformConfig& cfg,
                  const TransformParams* tp = nullptr, bool clamp01 = true);
float roundtrip_error(const Tensor& frame, const TransformConfig& cfg,
                      const TransformParams* tp = nullptr);

// frame <-> 8-bit sample conversion (3xHxW in [0,1], interleaved RGB bytes)
Tensor frame_from_rgb8(const unsigned char* rgb, int h, int w);
std::vector<unsigned char> frame_to_rgb8(const Tensor& frame);

// binary PPM (P6, maxval 255)
void write_ppm(const std::string& path, const Tensor& frame);
Tensor read_ppm(const std::string& path);

// raw planar RGB888 stream: data at `path`, sidecar text header at
// `path + ".hdr"` holding "width height frame_count"
void write_raw_stream(const std::string& path, const std::vector<Tensor>& frames);
std::vector<Tensor> read_raw_stream(const std::string& path);

}  // namespace utvc
