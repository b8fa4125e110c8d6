#pragma once
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "utvc/autodiff.hpp"

namespace utvc {

// standard normal CDF via the Abramowitz-Stegun 7.1.26 rational erf
// approximation in float64, so streams do not depend on the platform libm
double phi_as(double x);

// bin mass of integer symbol k under N(mu, sigma) with half-integer bin
// edges; tail mass beyond [-256, 256] is folded into the extreme symbols
double gaussian_pmf(int k, double mu, double sigma);

constexpr int kSymMin = -256;
constexpr int kSymMax = 256;
constexpr int kEscapeIndex = 513;  // follows the 513 integer symbols
constexpr int kNumSymbols = 514;
constexpr uint32_t kCdfTotal = 1u << 16;
constexpr float kSigmaMin = 0.11f;
constexpr float kSigmaMax = 64.0f;

// quantized CDF over the 514-symbol alphabet: qcdf[0] = 0, qcdf[514] = 2^16,
// strictly monotone, so every symbol keeps frequency >= 1
void build_symbol_table(double mu, double sigma, uint32_t* qcdf /* 515 entries */);

struct Bitchunk {
  std::vector<uint8_t> bytes;
  uint64_t bits = 0;  // 8 * bytes.size(); kept explicit for payload framing
};

class RangeEncoder {
 public:
  RangeEncoder() : out_(1, 0) {}  // leading byte absorbs carries
  void encode(uint32_t cum, uint32_t freq);  // total is always 2^16
  Bitchunk finish();
  double ideal_bits() const { return ideal_; }

 private:
  void shift_low();
  void add_carry(uint32_t c);
  uint64_t low_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  std::vector<uint8_t> out_;
  double ideal_ = 0.0;
  bool finished_ = false;
};

class RangeDecoder {
 public:
  RangeDecoder(const uint8_t* bytes, size_t n);
  uint32_t decode_target();               // cumulative-frequency estimate in [0, 2^16)
  void consume(uint32_t cum, uint32_t freq);
  size_t pos() const { return pos_; }
  // bytes read past the declared end; > 4 means the stream was truncated
  size_t overrun() const { return over_; }

 private:
  uint8_t next();
  const uint8_t* p_;
  size_t n_, pos_ = 0, over_ = 0;
  uint32_t range_ = 0xFFFFFFFFu, code_ = 0, r16_ = 0;
};

// value-level symbol codec; |value| > 256 goes out as escape + raw 32 bits
void encode_symbol(RangeEncoder& rc, int32_t value, const uint32_t* qcdf);
int32_t decode_symbol(RangeDecoder& rc, const uint32_t* qcdf);

// per-frame payload framing: chunks in a declared order, each prefixed with a
// little-endian u32 bit count
std::vector<uint8_t> assemble_payload(const std::vector<Bitchunk>& chunks);
std::vector<Bitchunk> parse_payload(const uint8_t* bytes, size_t n, int expected_chunks);

struct GaussianParams {
  Tensor mu, sigma;
};

struct EntropyConfig {
  int latent_c = 48;   // must be even; group 1 = first half of the channels
  int hyper_c = 24;
  int z_c = 8;
  int hyper_f = 24;    // feature channels handed to the parameter predictors
  int tcm_c = 16;      // temporal prior channels
  int fuse_hidden = 32;
};

struct EntropyParams {
  Tensor ha_w1, ha_b1, ha_w2, ha_b2;                  // hyper-analysis of |y|
  Tensor hs_w1, hs_b1, hs_w2, hs_b2, hs_w3, hs_b3;    // hyper-synthesis of zhat
  Tensor tcm_w1, tcm_b1, tcm_w2, tcm_b2;              // temporal context module
  Tensor g1_w1, g1_b1, g1_wt, g1_w2, g1_b2;           // group-1 parameter head
  Tensor g2_w1, g2_b1, g2_wt, g2_w2, g2_b2;           // group-2 parameter head
  Tensor z_loc, z_logscale;                           // factorized prior over z
};
EntropyParams make_entropy_params(const EntropyConfig& cfg, Rng& rng);

struct EntropyIds {
  int ha_w1 = -1, ha_b1 = -1, ha_w2 = -1, ha_b2 = -1;
  int hs_w1 = -1, hs_b1 = -1, hs_w2 = -1, hs_b2 = -1, hs_w3 = -1, hs_b3 = -1;
  int tcm_w1 = -1, tcm_b1 = -1, tcm_w2 = -1, tcm_b2 = -1;
  int g1_w1 = -1, g1_b1 = -1, g1_wt = -1, g1_w2 = -1, g1_b2 = -1;
  int g2_w1 = -1, g2_b1 = -1, g2_wt = -1, g2_w2 = -1, g2_b2 = -1;
  int z_loc = -1, z_logscale = -1;
};
EntropyIds bind_entropy(Tape& t, const EntropyParams& ep, bool trainable);

int build_hyper_analyze(Tape& t, int y, const EntropyConfig& cfg, const EntropyIds& ids);
int build_hyper_synthesize(Tape& t, int zhat, const EntropyConfig& cfg, const EntropyIds& ids);
int build_temporal_prior(Tape& t, int ytil, int ycheck, const EntropyConfig& cfg,
                         const EntropyIds& ids);
// (mu, sigma) for one channel group; tprior = -1 for the intra path,
// g1dec required when group == 2
std::pair<int, int> build_group_params(Tape& t, int group, int hyper_feat, int g1dec, int tprior,
                                       const EntropyConfig& cfg, const EntropyIds& ids);
// ideal codelength of integer tensor zq under the factorized per-channel prior
int build_factorized_bits(Tape& t, int zq, const EntropyConfig& cfg, const EntropyIds& ids);

Tensor hyper_analyze(const Tensor& y, const EntropyConfig& cfg, const EntropyParams& ep);
Tensor hyper_synthesize(const Tensor& zhat, const EntropyConfig& cfg, const EntropyParams& ep);
Tensor temporal_prior(const Tensor& ytil, const Tensor& ycheck, const EntropyConfig& cfg,
                      const EntropyParams& ep);

// full-latent parameter prediction; group-2 channels are placeholders
// (mu 0, sigma min) until yq_g1 is supplied. Decoder-available inputs only.
GaussianParams predict_params_intra(const Tensor* yq_g1, const Tensor& zhat,
                                    const EntropyConfig& cfg, const EntropyParams& ep);
GaussianParams predict_params_inter(const Tensor& ytil, const Tensor& ycheck, const Tensor& zhat,
                                    const Tensor* yq_g1, const EntropyConfig& cfg,
                                    const EntropyParams& ep);

// latent coding, group 1 then group 2, raster order inside a group
std::pair<Bitchunk, Bitchunk> code_latent_groups(const Tensor& yq, const GaussianParams& gp);
// params_for(group, g1dec) must reproduce the encoder-side parameters from
// decoded-side data; g1dec is null for group 1
Tensor decode_latent_groups(
    const Bitchunk& g1, const Bitchunk& g2, int c, int h, int w,
    const std::function<GaussianParams(int group, const Tensor* g1dec)>& params_for);

// hyper latent coding under the factorized prior
Bitchunk code_hyper(const Tensor& zq, const EntropyConfig& cfg, const EntropyParams& ep);
Tensor decode_hyper(const Bitchunk& chunk, int c, int h, int w, const EntropyConfig& cfg,
                    const EntropyParams& ep);

}  // namespace utvc
