#include "utvc/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace utvc {

namespace {
double erf_as(double x) {
  // Abramowitz-Stegun 7.1.26, max abs error ~1.5e-7
  const double a1 = 0.254829592, a2 = -0.284496736, a3 = 1.421413741;
  const double a4 = -1.453152027, a5 = 1.061405429, p = 0.3275911;
  const double ax = std::fabs(x);
  const double t = 1.0 / (1.0 + p * ax);
  const double poly = ((((a5 * t + a4) * t + a3) * t + a2) * t + a1) * t;
  const double e = poly * std::exp(-ax * ax);
  const double v = 1.0 - e;
  return x < 0 ? -v : v;
}
constexpr double kInvSqrt2 = 0.70710678118654752440;
// beyond this many sigmas the CDF quantizes to exactly 0 or 1
constexpr double kSatSigmas = 5.5;
}  // namespace

double phi_as(double x) { return 0.5 * (1.0 + erf_as(x * kInvSqrt2)); }

double gaussian_pmf(int k, double mu, double sigma) {
  sigma = std::clamp(sigma, double(kSigmaMin), double(kSigmaMax));
  const double lo = k <= kSymMin ? 0.0 : phi_as((k - 0.5 - mu) / sigma);
  const double hi = k >= kSymMax ? 1.0 : phi_as((k + 0.5 - mu) / sigma);
  return hi - lo;
}

void build_symbol_table(double mu, double sigma, uint32_t* qcdf) {
  sigma = std::clamp(sigma, double(kSigmaMin), double(kSigmaMax));
  const uint32_t K = kCdfTotal - kNumSymbols;
  // edge j sits at j - 256.5; outside the saturation window the CDF is
  // exactly 0 or 1, so only the live window needs erf evaluations
  const double lo_edge = mu + 256.5 - kSatSigmas * sigma;
  const double hi_edge = mu + 256.5 + kSatSigmas * sigma;
  // the low-side fill assumes the CDF is still 0 there; edges 513 and 514 are
  // pinned to 1 by definition, so they may never land in it
  const int jlo = std::clamp(static_cast<int>(std::floor(lo_edge)), 0, kEscapeIndex - 1);
  const int jhi = std::clamp(static_cast<int>(std::ceil(hi_edge)) + 1, jlo + 1, kNumSymbols);
  for (int j = 0; j <= jlo; ++j) qcdf[j] = static_cast<uint32_t>(j);
  for (int j = jhi; j <= kNumSymbols; ++j) qcdf[j] = K + static_cast<uint32_t>(j);
  for (int j = jlo + 1; j < jhi; ++j) {
    const double c = (j == 0) ? 0.0
                     : (j >= kEscapeIndex)
                         ? 1.0
                         : phi_as((static_cast<double>(j) - 256.5 - mu) / sigma);
    uint32_t v = static_cast<uint32_t>(std::floor(c * K)) + static_cast<uint32_t>(j);
    v = std::min(v, K + static_cast<uint32_t>(j));       // keep the tail join monotone
    qcdf[j] = std::max(v, qcdf[j - 1] + 1);              // freq >= 1 regardless of erf wiggle
  }
}

void RangeEncoder::encode(uint32_t cum, uint32_t freq) {
  range_ >>= 16;
  low_ += static_cast<uint64_t>(cum) * range_;
  range_ *= freq;
  ideal_ += std::log2(static_cast<double>(kCdfTotal) / freq);
  while (range_ < (1u << 24)) {
    shift_low();
    range_ <<= 8;
  }
}

void RangeEncoder::shift_low() {
  const uint32_t carry = static_cast<uint32_t>(low_ >> 32);
  if (carry) add_carry(carry);
  out_.push_back(static_cast<uint8_t>(low_ >> 24));
  low_ = (low_ << 8) & 0xFFFFFFFFull;
}

void RangeEncoder::add_carry(uint32_t c) {
  for (size_t i = out_.size(); c && i-- > 0;) {
    const uint32_t v = out_[i] + c;
    out_[i] = static_cast<uint8_t>(v);
    c = v >> 8;
  }
  // the constructed leading zero byte absorbs every carry chain
}

Bitchunk RangeEncoder::finish() {
  if (finished_) throw std::logic_error("RangeEncoder: finish called twice");
  finished_ = true;
  // round low up to a multiple of 2^16 inside [low, low+range); the decoder
  // zero-pads, so the two trailing zero bytes never hit the stream
  low_ = (low_ + 0xFFFFull) & ~0xFFFFull;
  shift_low();
  shift_low();
  Bitchunk b;
  b.bytes = std::move(out_);
  b.bits = 8ull * b.bytes.size();
  return b;
}

RangeDecoder::RangeDecoder(const uint8_t* bytes, size_t n) : p_(bytes), n_(n) {
  for (int i = 0; i < 5; ++i) code_ = (code_ << 8) | next();
}

uint8_t RangeDecoder::next() {
  if (pos_ < n_) return p_[pos_++];
  ++pos_;
  ++over_;
  return 0;
}

uint32_t RangeDecoder::decode_target() {
  r16_ = range_ >> 16;
  const uint32_t f = code_ / r16_;
  return f >= kCdfTotal ? kCdfTotal - 1 : f;
}

void RangeDecoder::consume(uint32_t cum, uint32_t freq) {
  code_ -= cum * r16_;
  range_ = r16_ * freq;
  while (range_ < (1u << 24)) {
    code_ = (code_ << 8) | next();
    range_ <<= 8;
  }
}

void encode_symbol(RangeEncoder& rc, int32_t value, const uint32_t* qcdf) {
  const int j =
      (value >= kSymMin && value <= kSymMax) ? value - kSymMin : kEscapeIndex;
  rc.encode(qcdf[j], qcdf[j + 1] - qcdf[j]);
  if (j == kEscapeIndex) {
    const uint32_t u = static_cast<uint32_t>(static_cast<int64_t>(value) + 0x80000000ll);
    for (int b = 3; b >= 0; --b) rc.encode(((u >> (8 * b)) & 0xFFu) * 256u, 256u);
  }
}

int32_t decode_symbol(RangeDecoder& rc, const uint32_t* qcdf) {
  const uint32_t f = rc.decode_target();
  const uint32_t* it = std::upper_bound(qcdf, qcdf + kNumSymbols + 1, f);
  const int j = static_cast<int>(it - qcdf) - 1;
  rc.consume(qcdf[j], qcdf[j + 1] - qcdf[j]);
  if (j != kEscapeIndex) return j + kSymMin;
  uint32_t u = 0;
  for (int b = 0; b < 4; ++b) {
    const uint32_t byte = rc.decode_target() >> 8;
    rc.consume(byte * 256u, 256u);
    u = (u << 8) | byte;
  }
  return static_cast<int32_t>(static_cast<int64_t>(u) - 0x80000000ll);
}

std::vector<uint8_t> assemble_payload(const std::vector<Bitchunk>& chunks) {
  std::vector<uint8_t> out;
  for (const Bitchunk& c : chunks) {
    const uint32_t bits = static_cast<uint32_t>(c.bits);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(bits >> (8 * i)));
    out.insert(out.end(), c.bytes.begin(), c.bytes.end());
  }
  return out;
}

std::vector<Bitchunk> parse_payload(const uint8_t* bytes, size_t n, int expected_chunks) {
  std::vector<Bitchunk> out;
  size_t pos = 0;
  for (int k = 0; k < expected_chunks; ++k) {
    if (pos + 4 > n)
      throw std::runtime_error("payload truncated in length prefix of chunk " +
                               std::to_string(k) + " at byte " + std::to_string(pos));
    uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<uint32_t>(bytes[pos + i]) << (8 * i);
    pos += 4;
    const size_t nbytes = (bits + 7) / 8;
    if (pos + nbytes > n)
      throw std::runtime_error("payload truncated inside chunk " + std::to_string(k) +
                               " at byte " + std::to_string(pos) + ", need " +
                               std::to_string(nbytes));
    Bitchunk c;
    c.bits = bits;
    c.bytes.assign(bytes + pos, bytes + pos + nbytes);
    pos += nbytes;
    out.push_back(std::move(c));
  }
  if (pos != n)
    throw std::runtime_error("payload has " + std::to_string(n - pos) + " trailing bytes");
  return out;
}

namespace {
Tensor conv_init(int oc, int ic, int kh, int kw, Rng& rng) {
  const float bound = std::sqrt(2.0f / (static_cast<float>(ic) * kh * kw));
  return Tensor::uniform({oc, ic, kh, kw}, -bound, bound, rng);
}
}  // namespace

EntropyParams make_entropy_params(const EntropyConfig& cfg, Rng& rng) {
  if (cfg.latent_c % 2) throw std::invalid_argument("entropy: latent_c must be even");
  if (cfg.tcm_c % 2) throw std::invalid_argument("entropy: tcm_c must be even");
  const int C = cfg.latent_c, half = C / 2;
  EntropyParams ep;
  ep.ha_w1 = conv_init(cfg.hyper_c, C, 3, 3, rng);
  ep.ha_b1 = Tensor::zeros({cfg.hyper_c});
  ep.ha_w2 = conv_init(cfg.z_c, cfg.hyper_c, 3, 3, rng);
  ep.ha_b2 = Tensor::zeros({cfg.z_c});
  ep.hs_w1 = conv_init(cfg.hyper_c, cfg.z_c, 3, 3, rng);
  ep.hs_b1 = Tensor::zeros({cfg.hyper_c});
  ep.hs_w2 = conv_init(cfg.hyper_c, cfg.hyper_c, 3, 3, rng);
  ep.hs_b2 = Tensor::zeros({cfg.hyper_c});
  ep.hs_w3 = conv_init(cfg.hyper_f, cfg.hyper_c, 3, 3, rng);
  ep.hs_b3 = Tensor::zeros({cfg.hyper_f});
  // group convolutions over concat(ytil, ycheck): each group sees one latent
  ep.tcm_w1 = conv_init(cfg.tcm_c, 2 * C / 2, 3, 3, rng);  // groups=2
  ep.tcm_b1 = Tensor::zeros({cfg.tcm_c});
  ep.tcm_w2 = conv_init(cfg.tcm_c, cfg.tcm_c / 2, 3, 3, rng);  // groups=2
  ep.tcm_b2 = Tensor::zeros({cfg.tcm_c});
  ep.g1_w1 = conv_init(cfg.fuse_hidden, cfg.hyper_f, 1, 1, rng);
  ep.g1_b1 = Tensor::zeros({cfg.fuse_hidden});
  ep.g1_wt = Tensor::zeros({cfg.fuse_hidden, cfg.tcm_c, 1, 1});
  ep.g1_w2 = conv_init(C, cfg.fuse_hidden, 1, 1, rng);
  ep.g1_b2 = Tensor::zeros({C});
  ep.g2_w1 = conv_init(cfg.fuse_hidden, cfg.hyper_f + half, 1, 1, rng);
  ep.g2_b1 = Tensor::zeros({cfg.fuse_hidden});
  ep.g2_wt = Tensor::zeros({cfg.fuse_hidden, cfg.tcm_c, 1, 1});
  ep.g2_w2 = conv_init(C, cfg.fuse_hidden, 1, 1, rng);
  ep.g2_b2 = Tensor::zeros({C});
  ep.z_loc = Tensor::zeros({cfg.z_c});
  ep.z_logscale = Tensor::zeros({cfg.z_c});
  return ep;
}

EntropyIds bind_entropy(Tape& t, const EntropyParams& ep, bool trainable) {
  EntropyIds ids;
  ids.ha_w1 = t.input(ep.ha_w1, trainable);
  ids.ha_b1 = t.input(ep.ha_b1, trainable);
  ids.ha_w2 = t.input(ep.ha_w2, trainable);
  ids.ha_b2 = t.input(ep.ha_b2, trainable);
  ids.hs_w1 = t.input(ep.hs_w1, trainable);
  ids.hs_b1 = t.input(ep.hs_b1, trainable);
  ids.hs_w2 = t.input(ep.hs_w2, trainable);
  ids.hs_b2 = t.input(ep.hs_b2, trainable);
  ids.hs_w3 = t.input(ep.hs_w3, trainable);
  ids.hs_b3 = t.input(ep.hs_b3, trainable);
  ids.tcm_w1 = t.input(ep.tcm_w1, trainable);
  ids.tcm_b1 = t.input(ep.tcm_b1, trainable);
  ids.tcm_w2 = t.input(ep.tcm_w2, trainable);
  ids.tcm_b2 = t.input(ep.tcm_b2, trainable);
  ids.g1_w1 = t.input(ep.g1_w1, trainable);
  ids.g1_b1 = t.input(ep.g1_b1, trainable);
  ids.g1_wt = t.input(ep.g1_wt, trainable);
  ids.g1_w2 = t.input(ep.g1_w2, trainable);
  ids.g1_b2 = t.input(ep.g1_b2, trainable);
  ids.g2_w1 = t.input(ep.g2_w1, trainable);
  ids.g2_b1 = t.input(ep.g2_b1, trainable);
  ids.g2_wt = t.input(ep.g2_wt, trainable);
  ids.g2_w2 = t.input(ep.g2_w2, trainable);
  ids.g2_b2 = t.input(ep.g2_b2, trainable);
  ids.z_loc = t.input(ep.z_loc, trainable);
  ids.z_logscale = t.input(ep.z_logscale, trainable);
  return ids;
}

int build_hyper_analyze(Tape& t, int y, const EntropyConfig&, const EntropyIds& ids) {
  int h = t.conv2d(abs_(t, y), ids.ha_w1, ids.ha_b1, 2, 1, true);
  h = leaky_relu(t, h, 0.1f);
  return t.conv2d(h, ids.ha_w2, ids.ha_b2, 2, 1, true);
}

int build_hyper_synthesize(Tape& t, int zhat, const EntropyConfig&, const EntropyIds& ids) {
  int h = t.conv2d(zhat, ids.hs_w1, ids.hs_b1, 1, 1, true);
  h = leaky_relu(t, h, 0.1f);
  h = t.resize2x(h);
  h = t.conv2d(h, ids.hs_w2, ids.hs_b2, 1, 1, true);
  h = leaky_relu(t, h, 0.1f);
  h = t.resize2x(h);
  return t.conv2d(h, ids.hs_w3, ids.hs_b3, 1, 1, true);
}

int build_temporal_prior(Tape& t, int ytil, int ycheck, const EntropyConfig&,
                         const EntropyIds& ids) {
  int x = t.concat({ytil, ycheck}, 0);
  x = t.conv2d(x, ids.tcm_w1, ids.tcm_b1, 1, 2, true);
  x = leaky_relu(t, x, 0.1f);
  return t.conv2d(x, ids.tcm_w2, ids.tcm_b2, 1, 2, true);
}

std::pair<int, int> build_group_params(Tape& t, int group, int hyper_feat, int g1dec, int tprior,
                                       const EntropyConfig& cfg, const EntropyIds& ids) {
  if (group != 1 && group != 2) throw std::invalid_argument("build_group_params: group is 1 or 2");
  const int half = cfg.latent_c / 2;
  int in, w1, b1, wt, w2, b2;
  if (group == 1) {
    in = hyper_feat;
    w1 = ids.g1_w1, b1 = ids.g1_b1, wt = ids.g1_wt, w2 = ids.g1_w2, b2 = ids.g1_b2;
  } else {
    if (g1dec < 0) throw std::invalid_argument("build_group_params: group 2 needs decoded group 1");
    in = t.concat({hyper_feat, g1dec}, 0);
    w1 = ids.g2_w1, b1 = ids.g2_b1, wt = ids.g2_wt, w2 = ids.g2_w2, b2 = ids.g2_b2;
  }
  int h = t.conv2d(in, w1, b1, 1, 1, true);
  // temporal prior joins before the nonlinearity through a zero-initialized
  // no-bias projection, so a zero prior reproduces the intra path exactly
  if (tprior >= 0) h = t.add(h, t.conv2d(tprior, wt, -1, 1, 1, true));
  h = leaky_relu(t, h, 0.1f);
  const int out = t.conv2d(h, w2, b2, 1, 1, true);
  const int mu = t.slice(out, 0, 0, half);
  const int sigma = t.clamp(t.exp_(t.slice(out, 0, half, half)), kSigmaMin, kSigmaMax);
  return {mu, sigma};
}

int build_factorized_bits(Tape& t, int zq, const EntropyConfig& cfg, const EntropyIds& ids) {
  const int mu = t.reshape(ids.z_loc, {cfg.z_c, 1, 1});
  const int sigma =
      t.clamp(t.exp_(t.reshape(ids.z_logscale, {cfg.z_c, 1, 1})), kSigmaMin, kSigmaMax);
  return gaussian_bits(t, zq, mu, sigma);
}

Tensor hyper_analyze(const Tensor& y, const EntropyConfig& cfg, const EntropyParams& ep) {
  Tape t;
  EntropyIds ids = bind_entropy(t, ep, false);
  return t.val(build_hyper_analyze(t, t.leaf(y), cfg, ids));
}

Tensor hyper_synthesize(const Tensor& zhat, const EntropyConfig& cfg, const EntropyParams& ep) {
  Tape t;
  EntropyIds ids = bind_entropy(t, ep, false);
  return t.val(build_hyper_synthesize(t, t.leaf(zhat), cfg, ids));
}

Tensor temporal_prior(const Tensor& ytil, const Tensor& ycheck, const EntropyConfig& cfg,
                      const EntropyParams& ep) {
  Tape t;
  EntropyIds ids = bind_entropy(t, ep, false);
  return t.val(build_temporal_prior(t, t.leaf(ytil), t.leaf(ycheck), cfg, ids));
}

namespace {
GaussianParams assemble_full(const Tape& t, const EntropyConfig& cfg, int m1, int s1, int m2,
                             int s2) {
  const Tensor& mu1 = t.val(m1);
  const int half = cfg.latent_c / 2, h = mu1.dim(1), w = mu1.dim(2);
  const int64_t gsz = static_cast<int64_t>(half) * h * w;
  GaussianParams gp{Tensor::zeros({cfg.latent_c, h, w}),
                    Tensor::full({cfg.latent_c, h, w}, kSigmaMin)};
  for (int64_t i = 0; i < gsz; ++i) {
    gp.mu[i] = mu1[i];
    gp.sigma[i] = t.val(s1)[i];
  }
  if (m2 >= 0)
    for (int64_t i = 0; i < gsz; ++i) {
      gp.mu[gsz + i] = t.val(m2)[i];
      gp.sigma[gsz + i] = t.val(s2)[i];
    }
  return gp;
}
}  // namespace

GaussianParams predict_params_intra(const Tensor* yq_g1, const Tensor& zhat,
                                    const EntropyConfig& cfg, const EntropyParams& ep) {
  Tape t;
  EntropyIds ids = bind_entropy(t, ep, false);
  const int F = build_hyper_synthesize(t, t.leaf(zhat), cfg, ids);
  auto [m1, s1] = build_group_params(t, 1, F, -1, -1, cfg, ids);
  int m2 = -1, s2 = -1;
  if (yq_g1) {
    auto pr = build_group_params(t, 2, F, t.leaf(*yq_g1), -1, cfg, ids);
    m2 = pr.first;
    s2 = pr.second;
  }
  return assemble_full(t, cfg, m1, s1, m2, s2);
}

GaussianParams predict_params_inter(const Tensor& ytil, const Tensor& ycheck, const Tensor& zhat,
                                    const Tensor* yq_g1, const EntropyConfig& cfg,
                                    const EntropyParams& ep) {
  Tape t;
  EntropyIds ids = bind_entropy(t, ep, false);
  const int F = build_hyper_synthesize(t, t.leaf(zhat), cfg, ids);
  const int T = build_temporal_prior(t, t.leaf(ytil), t.leaf(ycheck), cfg, ids);
  auto [m1, s1] = build_group_params(t, 1, F, -1, T, cfg, ids);
  int m2 = -1, s2 = -1;
  if (yq_g1) {
    auto pr = build_group_params(t, 2, F, t.leaf(*yq_g1), T, cfg, ids);
    m2 = pr.first;
    s2 = pr.second;
  }
  return assemble_full(t, cfg, m1, s1, m2, s2);
}

namespace {
void code_range(RangeEncoder& rc, const Tensor& yq, const GaussianParams& gp, int64_t lo,
                int64_t hi) {
  uint32_t qcdf[kNumSymbols + 1];
  for (int64_t i = lo; i < hi; ++i) {
    build_symbol_table(gp.mu[i], gp.sigma[i], qcdf);
    encode_symbol(rc, static_cast<int32_t>(std::llround(yq[i])), qcdf);
  }
}

void decode_range(RangeDecoder& rc, Tensor& yq, const GaussianParams& gp, int64_t lo, int64_t hi,
                  const char* what) {
  uint32_t qcdf[kNumSymbols + 1];
  for (int64_t i = lo; i < hi; ++i) {
    build_symbol_table(gp.mu[i], gp.sigma[i], qcdf);
    yq[i] = static_cast<float>(decode_symbol(rc, qcdf));
    if (rc.overrun() > 4)
      throw std::runtime_error(std::string(what) + " chunk truncated at byte " +
                               std::to_string(rc.pos()) + " (element " + std::to_string(i - lo) +
                               ")");
  }
}
}  // namespace

std::pair<Bitchunk, Bitchunk> code_latent_groups(const Tensor& yq, const GaussianParams& gp) {
  if (yq.rank() != 3 || yq.dim(0) % 2) throw std::invalid_argument("code_latent: want CxHxW, even C");
  const int64_t gsz = yq.numel() / 2;
  RangeEncoder rc1, rc2;
  code_range(rc1, yq, gp, 0, gsz);
  code_range(rc2, yq, gp, gsz, yq.numel());
  return {rc1.finish(), rc2.finish()};
}

Tensor decode_latent_groups(
    const Bitchunk& g1, const Bitchunk& g2, int c, int h, int w,
    const std::function<GaussianParams(int group, const Tensor* g1dec)>& params_for) {
  Tensor yq = Tensor::zeros({c, h, w});
  const int64_t gsz = yq.numel() / 2;
  GaussianParams p1 = params_for(1, nullptr);
  RangeDecoder rc1(g1.bytes.data(), g1.bytes.size());
  decode_range(rc1, yq, p1, 0, gsz, "latent group 1");
  Tensor g1dec({c / 2, h, w});
  for (int64_t i = 0; i < gsz; ++i) g1dec[i] = yq[i];
  GaussianParams p2 = params_for(2, &g1dec);
  RangeDecoder rc2(g2.bytes.data(), g2.bytes.size());
  decode_range(rc2, yq, p2, gsz, yq.numel(), "latent group 2");
  return yq;
}

Bitchunk code_hyper(const Tensor& zq, const EntropyConfig& cfg, const EntropyParams& ep) {
  if (zq.rank() != 3 || zq.dim(0) != cfg.z_c) throw std::invalid_argument("code_hyper: bad shape");
  RangeEncoder rc;
  uint32_t qcdf[kNumSymbols + 1];
  const int64_t plane = static_cast<int64_t>(zq.dim(1)) * zq.dim(2);
  for (int ch = 0; ch < cfg.z_c; ++ch) {
    const double sigma = std::exp(static_cast<double>(ep.z_logscale[ch]));
    build_symbol_table(ep.z_loc[ch], sigma, qcdf);  // one table per channel
    for (int64_t i = 0; i < plane; ++i)
      encode_symbol(rc, static_cast<int32_t>(std::llround(zq[ch * plane + i])), qcdf);
  }
  return rc.finish();
}

Tensor decode_hyper(const Bitchunk& chunk, int c, int h, int w, const EntropyConfig& cfg,
                    const EntropyParams& ep) {
  if (c != cfg.z_c) throw std::invalid_argument("decode_hyper: channel mismatch");
  Tensor zq({c, h, w});
  RangeDecoder rc(chunk.bytes.data(), chunk.bytes.size());
  uint32_t qcdf[kNumSymbols + 1];
  const int64_t plane = static_cast<int64_t>(h) * w;
  for (int ch = 0; ch < c; ++ch) {
    const double sigma = std::exp(static_cast<double>(ep.z_logscale[ch]));
    build_symbol_table(ep.z_loc[ch], sigma, qcdf);
    for (int64_t i = 0; i < plane; ++i) {
      zq[ch * plane + i] = static_cast<float>(decode_symbol(rc, qcdf));
      if (rc.overrun() > 4)
        throw std::runtime_error("hyper chunk truncated at byte " + std::to_string(rc.pos()));
    }
  }
  return zq;
}

}  // namespace utvc
