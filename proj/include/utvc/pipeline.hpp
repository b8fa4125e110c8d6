#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "utvc/model.hpp"

namespace utvc {

// GOP orchestration over the unified transform: one intra scheme for the
// first frame of each GOP, one inter scheme for the rest, and temporal
// state that only ever holds decoder-reproducible values. For every frame,
// (frame, quality, parameters) fully determine yq and xhat; the temporal
// buffers steer bit allocation only, so a damaged frame can never leak
// into later reconstructions.

struct GopConfig {
  int gop = 32;
  QualitySpec quality;
};

struct RdTerms {
  double r_i = 0.0, r_p = 0.0;  // payload bits, split by frame type
  double d_i = 0.0, d_p = 0.0;  // mean squared error in [0,1] pixel units
  double lambda = 0.0;          // filled by training losses, zero when encoding
  double flow_bits = 0.0, hyper_bits = 0.0, latent_bits = 0.0;
  bool intra = false;
  double bits() const { return r_i + r_p; }
  double mse() const { return intra ? d_i : d_p; }
};

struct FrameResult {
  std::vector<uint8_t> payload;
  Tensor yq, xhat;
  RdTerms rd;
};

struct DecodedFrame {
  Tensor yq, xhat;
};

// decoded-side temporal state; encoder and decoder advance identical copies
struct CodecState {
  LatentBuffer buf;
  void reset() { buf.clear(); }
};

FrameResult encode_intra(const Tensor& x, const Tensor& logq, const Model& m);
FrameResult encode_inter(const Tensor& x, const CodecState& st, const Tensor& logq,
                         const Model& m);
DecodedFrame decode_intra(const std::vector<uint8_t>& payload, int h, int w, const Tensor& logq,
                          const Model& m);
DecodedFrame decode_inter(const std::vector<uint8_t>& payload, int h, int w,
                          const CodecState& st, const Tensor& logq, const Model& m);

// bitstream container: magic "UTVS", version, header, per-frame payloads;
// decodable with the header and the named checkpoint alone
constexpr uint16_t kStreamVersion = 1;

struct VideoStream {
  int width = 0, height = 0, gop = 1;
  QualitySpec quality;
  uint64_t model_hash = 0;
  std::vector<std::vector<uint8_t>> payloads;
};

std::vector<uint8_t> serialize_stream(const VideoStream& vs);
VideoStream parse_stream(const uint8_t* bytes, size_t n);
void save_stream(const std::string& path, const VideoStream& vs);
VideoStream load_stream(const std::string& path);

struct EncodeResult {
  VideoStream stream;
  std::vector<Tensor> recon;  // encoder-side reconstructions, decoder-identical
  std::vector<Tensor> yq;
  std::vector<RdTerms> rd;
};

EncodeResult encode_sequence(const std::vector<Tensor>& frames, const GopConfig& cfg,
                             const Model& m);
// refuses a stream whose header hash does not match the model
std::vector<Tensor> decode_sequence(const VideoStream& vs, const Model& m);

struct AuditReport {
  bool ok = true;
  int first_diff_frame = -1;  // -1 when every later frame matched
  std::string detail;
  std::vector<double> bit_delta;  // perturbed minus original payload bits, per frame
};

// encodes both sequences and demands bit-identical yq and xhat for every
// frame after t0; the sequences must differ at t0 only
AuditReport reconstruction_independence_audit(const std::vector<Tensor>& frames,
                                              const std::vector<Tensor>& perturbed, int t0,
                                              const GopConfig& cfg, const Model& m);

}  // namespace utvc
