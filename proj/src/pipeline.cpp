#include "utvc/pipeline.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "utvc/checkpoint.hpp"

namespace utvc {

namespace {
double frame_mse(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += d * d;
  }
  return s / static_cast<double>(a.numel());
}

void check_extents(const Tensor& x, const TransformConfig& tcfg) {
  if (x.rank() != 3 || x.dim(0) != 3)
    throw std::invalid_argument("pipeline: frame must be 3xHxW");
  const int unit = 4 * tcfg.stride();  // transform stride times two hyper halvings
  if (x.dim(1) % unit || x.dim(2) % unit)
    throw std::invalid_argument("pipeline: frame extents must be divisible by " +
                                std::to_string(unit));
}

Tensor round_tensor(const Tensor& z) {
  Tensor zq(z.shape());
  for (int64_t i = 0; i < z.numel(); ++i) zq[i] = round_half_away(z[i]);
  return zq;
}

Tensor first_half(const Tensor& yq) {
  Tensor g({yq.dim(0) / 2, yq.dim(1), yq.dim(2)});
  for (int64_t i = 0; i < g.numel(); ++i) g[i] = yq[i];
  return g;
}

const TransformParams* transform_params(const Model& m) {
  return m.cfg.transform.kind == TransformKind::TinyConv ? &m.transform : nullptr;
}
}  // namespace

FrameResult encode_intra(const Tensor& x, const Tensor& logq, const Model& m) {
  check_extents(x, m.cfg.transform);
  const TransformParams* tp = transform_params(m);
  const Tensor yp = analyze(x, m.cfg.transform, tp);
  const QcmoeQuantizeOut q = qcmoe_quantize(yp, logq, m.cfg.qcmoe, m.qc_enc, m.qc_dec);
  const Tensor zq = round_tensor(hyper_analyze(q.y, m.cfg.entropy, m.entropy));
  const Bitchunk hyper = code_hyper(zq, m.cfg.entropy, m.entropy);
  const Tensor g1 = first_half(q.yq);
  const GaussianParams gp = predict_params_intra(&g1, zq, m.cfg.entropy, m.entropy);
  const auto [c1, c2] = code_latent_groups(q.yq, gp);
  FrameResult fr;
  fr.payload = assemble_payload({hyper, c1, c2});
  fr.yq = q.yq;
  fr.xhat = synthesize(q.yr, m.cfg.transform, tp);
  fr.rd.intra = true;
  fr.rd.r_i = 8.0 * static_cast<double>(fr.payload.size());
  fr.rd.hyper_bits = static_cast<double>(hyper.bits);
  fr.rd.latent_bits = static_cast<double>(c1.bits + c2.bits);
  fr.rd.d_i = frame_mse(x, fr.xhat);
  return fr;
}

FrameResult encode_inter(const Tensor& x, const CodecState& st, const Tensor& logq,
                         const Model& m) {
  check_extents(x, m.cfg.transform);
  if (st.buf.empty()) throw std::invalid_argument("pipeline: inter frame needs a primed buffer");
  const TransformParams* tp = transform_params(m);
  const auto [fchunk, vhat] = code_flow(estimate_flow(x, st.buf.xprev));
  const ProgressiveOut po = progressive_align(st.buf, vhat, logq, m.cfg.transform, tp,
                                              m.cfg.qcmoe, m.qc_enc, m.cfg.align, m.align);
  const Tensor yp = analyze(x, m.cfg.transform, tp);
  const QcmoeQuantizeOut q = qcmoe_quantize(yp, logq, m.cfg.qcmoe, m.qc_enc, m.qc_dec);
  const Tensor zq = round_tensor(hyper_analyze(q.y, m.cfg.entropy, m.entropy));
  const Bitchunk hyper = code_hyper(zq, m.cfg.entropy, m.entropy);
  const Tensor g1 = first_half(q.yq);
  const GaussianParams gp =
      predict_params_inter(po.ytil, po.ycheck, zq, &g1, m.cfg.entropy, m.entropy);
  const auto [c1, c2] = code_latent_groups(q.yq, gp);
  FrameResult fr;
  fr.payload = assemble_payload({fchunk, hyper, c1, c2});
  fr.yq = q.yq;
  fr.xhat = synthesize(q.yr, m.cfg.transform, tp);
  fr.rd.r_p = 8.0 * static_cast<double>(fr.payload.size());
  fr.rd.flow_bits = static_cast<double>(fchunk.bits);
  fr.rd.hyper_bits = static_cast<double>(hyper.bits);
  fr.rd.latent_bits = static_cast<double>(c1.bits + c2.bits);
  fr.rd.d_p = frame_mse(x, fr.xhat);
  return fr;
}

DecodedFrame decode_intra(const std::vector<uint8_t>& payload, int h, int w, const Tensor& logq,
                          const Model& m) {
  const int s = m.cfg.transform.stride();
  const int hl = h / s, wl = w / s;
  const auto chunks = parse_payload(payload.data(), payload.size(), 3);
  const Tensor zhat =
      decode_hyper(chunks[0], m.cfg.entropy.z_c, hl / 4, wl / 4, m.cfg.entropy, m.entropy);
  const Tensor yq = decode_latent_groups(
      chunks[1], chunks[2], m.cfg.qcmoe.channels, hl, wl, [&](int group, const Tensor* g1dec) {
        return predict_params_intra(group == 2 ? g1dec : nullptr, zhat, m.cfg.entropy, m.entropy);
      });
  const Tensor yr = qcmoe_dequantize(yq, logq, m.cfg.qcmoe, m.qc_dec);
  return {yq, synthesize(yr, m.cfg.transform, transform_params(m))};
}

DecodedFrame decode_inter(const std::vector<uint8_t>& payload, int h, int w,
                          const CodecState& st, const Tensor& logq, const Model& m) {
  if (st.buf.empty()) throw std::invalid_argument("pipeline: inter frame needs a primed buffer");
  const int s = m.cfg.transform.stride();
  const int hl = h / s, wl = w / s;
  const auto chunks = parse_payload(payload.data(), payload.size(), 4);
  const FlowField vhat = decode_flow(chunks[0].bytes.data(), chunks[0].bytes.size(), h, w);
  const ProgressiveOut po =
      progressive_align(st.buf, vhat, logq, m.cfg.transform, transform_params(m), m.cfg.qcmoe,
                        m.qc_enc, m.cfg.align, m.align);
  const Tensor zhat =
      decode_hyper(chunks[1], m.cfg.entropy.z_c, hl / 4, wl / 4, m.cfg.entropy, m.entropy);
  const Tensor yq = decode_latent_groups(
      chunks[2], chunks[3], m.cfg.qcmoe.channels, hl, wl, [&](int group, const Tensor* g1dec) {
        return predict_params_inter(po.ytil, po.ycheck, zhat, group == 2 ? g1dec : nullptr,
                                    m.cfg.entropy, m.entropy);
      });
  const Tensor yr = qcmoe_dequantize(yq, logq, m.cfg.qcmoe, m.qc_dec);
  return {yq, synthesize(yr, m.cfg.transform, transform_params(m))};
}

namespace {
void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v));
  out.push_back(static_cast<uint8_t>(v >> 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

struct Reader {
  const uint8_t* p;
  size_t n, pos = 0;
  void need(size_t k, const std::string& what) {
    if (pos + k > n)
      throw std::runtime_error("stream truncated in " + what + " at byte " + std::to_string(pos));
  }
  uint8_t u8(const std::string& what) {
    need(1, what);
    return p[pos++];
  }
  uint16_t u16(const std::string& what) {
    need(2, what);
    const uint16_t v = static_cast<uint16_t>(p[pos] | (p[pos + 1] << 8));
    pos += 2;
    return v;
  }
  uint32_t u32(const std::string& what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64(const std::string& what) {
    need(8, what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
};
}  // namespace

std::vector<uint8_t> serialize_stream(const VideoStream& vs) {
  std::vector<uint8_t> out = {'U', 'T', 'V', 'S'};
  put_u16(out, kStreamVersion);
  put_u32(out, static_cast<uint32_t>(vs.width));
  put_u32(out, static_cast<uint32_t>(vs.height));
  put_u32(out, static_cast<uint32_t>(vs.payloads.size()));
  put_u32(out, static_cast<uint32_t>(vs.gop));
  out.push_back(static_cast<uint8_t>(vs.quality.m));
  out.push_back(static_cast<uint8_t>(vs.quality.n));
  put_u32(out, std::bit_cast<uint32_t>(vs.quality.l));
  put_u64(out, vs.model_hash);
  for (const auto& p : vs.payloads) {
    put_u32(out, static_cast<uint32_t>(p.size()));
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

VideoStream parse_stream(const uint8_t* bytes, size_t n) {
  Reader r{bytes, n};
  r.need(4, "magic");
  if (std::memcmp(bytes, "UTVS", 4) != 0) throw std::runtime_error("stream: bad magic");
  r.pos = 4;
  const uint16_t ver = r.u16("version");
  if (ver != kStreamVersion)
    throw std::runtime_error("stream: unsupported version " + std::to_string(ver));
  VideoStream vs;
  vs.width = static_cast<int>(r.u32("width"));
  vs.height = static_cast<int>(r.u32("height"));
  const uint32_t frames = r.u32("frame count");
  vs.gop = static_cast<int>(r.u32("gop size"));
  vs.quality.m = r.u8("quality");
  vs.quality.n = r.u8("quality");
  vs.quality.l = std::bit_cast<float>(r.u32("quality weight"));
  vs.model_hash = r.u64("checkpoint hash");
  if (vs.width <= 0 || vs.height <= 0 || vs.gop < 1)
    throw std::runtime_error("stream: nonsensical header");
  if (vs.quality.m < 1 || vs.quality.m > kQualityAnchors || vs.quality.n < 1 ||
      vs.quality.n > kQualityAnchors || !(vs.quality.l >= 0.0f && vs.quality.l <= 1.0f))
    throw std::runtime_error("stream: quality spec out of range");
  for (uint32_t t = 0; t < frames; ++t) {
    const std::string what = "frame " + std::to_string(t);
    const uint32_t len = r.u32(what + " length");
    r.need(len, what + " payload");
    vs.payloads.emplace_back(bytes + r.pos, bytes + r.pos + len);
    r.pos += len;
  }
  if (r.pos != n)
    throw std::runtime_error("stream: " + std::to_string(n - r.pos) + " trailing bytes");
  return vs;
}

void save_stream(const std::string& path, const VideoStream& vs) {
  write_file(path, serialize_stream(vs));
}

VideoStream load_stream(const std::string& path) {
  const std::vector<uint8_t> bytes = read_file(path);
  return parse_stream(bytes.data(), bytes.size());
}

EncodeResult encode_sequence(const std::vector<Tensor>& frames, const GopConfig& cfg,
                             const Model& m) {
  if (frames.empty()) throw std::invalid_argument("pipeline: need at least one frame");
  if (cfg.gop < 1) throw std::invalid_argument("pipeline: gop must be >= 1");
  for (const Tensor& f : frames)
    if (!f.same_shape(frames[0]))
      throw std::invalid_argument("pipeline: frames must share extents");
  const Tensor logq = quality_logq(m, cfg.quality);
  EncodeResult out;
  out.stream.width = frames[0].dim(2);
  out.stream.height = frames[0].dim(1);
  out.stream.gop = cfg.gop;
  out.stream.quality = cfg.quality;
  out.stream.model_hash = model_hash(m);
  CodecState st;
  for (size_t t = 0; t < frames.size(); ++t) {
    FrameResult fr;
    if (t % static_cast<size_t>(cfg.gop) == 0) {
      st.reset();
      fr = encode_intra(frames[t], logq, m);
    } else {
      fr = encode_inter(frames[t], st, logq, m);
    }
    st.buf.push(fr.yq, fr.xhat);
    out.stream.payloads.push_back(std::move(fr.payload));
    out.recon.push_back(std::move(fr.xhat));
    out.yq.push_back(std::move(fr.yq));
    out.rd.push_back(fr.rd);
  }
  return out;
}

std::vector<Tensor> decode_sequence(const VideoStream& vs, const Model& m) {
  const uint64_t have = model_hash(m);
  if (vs.model_hash != have)
    throw std::runtime_error("stream was produced by checkpoint " +
                             std::to_string(vs.model_hash) + ", loaded model hashes to " +
                             std::to_string(have));
  if (vs.gop < 1) throw std::runtime_error("stream: gop must be >= 1");
  const Tensor logq = quality_logq(m, vs.quality);
  std::vector<Tensor> recon;
  CodecState st;
  for (size_t t = 0; t < vs.payloads.size(); ++t) {
    DecodedFrame df;
    try {
      if (t % static_cast<size_t>(vs.gop) == 0) {
        st.reset();
        df = decode_intra(vs.payloads[t], vs.height, vs.width, logq, m);
      } else {
        df = decode_inter(vs.payloads[t], vs.height, vs.width, st, logq, m);
      }
    } catch (const std::exception& e) {
      throw std::runtime_error("frame " + std::to_string(t) + ": " + e.what());
    }
    st.buf.push(df.yq, df.xhat);
    recon.push_back(std::move(df.xhat));
  }
  return recon;
}

AuditReport reconstruction_independence_audit(const std::vector<Tensor>& frames,
                                              const std::vector<Tensor>& perturbed, int t0,
                                              const GopConfig& cfg, const Model& m) {
  if (frames.size() != perturbed.size())
    throw std::invalid_argument("audit: sequences must have equal length");
  if (t0 < 0 || t0 + 1 >= static_cast<int>(frames.size()))
    throw std::invalid_argument("audit: t0 must leave at least one later frame");
  for (size_t t = 0; t < frames.size(); ++t)
    if (t != static_cast<size_t>(t0) && !bit_equal(frames[t], perturbed[t]))
      throw std::invalid_argument("audit: sequences differ at frame " + std::to_string(t) +
                                  ", only t0 may change");
  const EncodeResult a = encode_sequence(frames, cfg, m);
  const EncodeResult b = encode_sequence(perturbed, cfg, m);
  AuditReport rep;
  for (size_t t = 0; t < frames.size(); ++t)
    rep.bit_delta.push_back(b.rd[t].bits() - a.rd[t].bits());
  auto first_diff = [](const Tensor& x, const Tensor& y) {
    for (int64_t i = 0; i < x.numel(); ++i)
      if (std::bit_cast<uint32_t>(x[i]) != std::bit_cast<uint32_t>(y[i])) return i;
    return int64_t{-1};
  };
  for (size_t t = static_cast<size_t>(t0) + 1; t < frames.size(); ++t) {
    for (auto [name, x, y] : {std::tuple{"yq", &a.yq[t], &b.yq[t]},
                              std::tuple{"xhat", &a.recon[t], &b.recon[t]}}) {
      const int64_t i = first_diff(*x, *y);
      if (i < 0) continue;
      rep.ok = false;
      rep.first_diff_frame = static_cast<int>(t);
      rep.detail = std::string(name) + " of frame " + std::to_string(t) + " differs at element " +
                   std::to_string(i) + " (" + std::to_string((*x)[i]) + " vs " +
                   std::to_string((*y)[i]) + ")";
      return rep;
    }
  }
  return rep;
}

}  // namespace utvc
