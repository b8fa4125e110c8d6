#include "utvc/transform.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace utvc {

namespace {
Tensor conv_init(int oc, int ic, int kh, int kw, Rng& rng) {
  const float bound = std::sqrt(2.0f / (static_cast<float>(ic) * kh * kw));
  return Tensor::uniform({oc, ic, kh, kw}, -bound, bound, rng);
}
}  // namespace

TransformParams make_tiny_conv_params(const TransformConfig& cfg, Rng& rng) {
  TransformParams tp;
  tp.enc_w1 = conv_init(cfg.hidden_c, 3, 3, 3, rng);
  tp.enc_b1 = Tensor::zeros({cfg.hidden_c});
  tp.enc_w2 = conv_init(cfg.latent_c, cfg.hidden_c, 3, 3, rng);
  tp.enc_b2 = Tensor::zeros({cfg.latent_c});
  tp.dec_w1 = conv_init(cfg.hidden_c, cfg.latent_c, 3, 3, rng);
  tp.dec_b1 = Tensor::zeros({cfg.hidden_c});
  tp.dec_w2 = conv_init(3, cfg.hidden_c, 3, 3, rng);
  tp.dec_b2 = Tensor::zeros({3});
  return tp;
}

TransformIds bind_transform(Tape& t, const TransformParams& tp, bool trainable) {
  TransformIds ids;
  ids.enc_w1 = t.input(tp.enc_w1, trainable);
  ids.enc_b1 = t.input(tp.enc_b1, trainable);
  ids.enc_w2 = t.input(tp.enc_w2, trainable);
  ids.enc_b2 = t.input(tp.enc_b2, trainable);
  ids.dec_w1 = t.input(tp.dec_w1, trainable);
  ids.dec_b1 = t.input(tp.dec_b1, trainable);
  ids.dec_w2 = t.input(tp.dec_w2, trainable);
  ids.dec_b2 = t.input(tp.dec_b2, trainable);
  return ids;
}

int build_analyze(Tape& t, int frame, const TransformConfig& cfg, const TransformIds& ids) {
  const Tensor& x = t.val(frame);
  if (x.rank() != 3 || x.dim(0) != 3) throw std::invalid_argument("analyze: want 3xHxW frame");
  if (x.dim(1) % cfg.p || x.dim(2) % cfg.p)
    throw std::invalid_argument("analyze: extents must divide by the transform stride");
  if (cfg.kind == TransformKind::BlockDct) return t.dct2(frame, cfg.p);
  if (ids.enc_w1 < 0) throw std::invalid_argument("analyze: tiny-conv needs bound params");
  int h = t.conv2d(frame, ids.enc_w1, ids.enc_b1, 2, 1, true);
  h = leaky_relu(t, h, 0.1f);
  return t.conv2d(h, ids.enc_w2, ids.enc_b2, 2, 1, true);
}

int build_synthesize(Tape& t, int latent, const TransformConfig& cfg, const TransformIds& ids,
                     bool clamp01) {
  const Tensor& y = t.val(latent);
  if (y.rank() != 3 || y.dim(0) != cfg.channels())
    throw std::invalid_argument("synthesize: latent channel count mismatch");
  int out;
  if (cfg.kind == TransformKind::BlockDct) {
    out = t.idct2(latent, cfg.p);
  } else {
    if (ids.dec_w1 < 0) throw std::invalid_argument("synthesize: tiny-conv needs bound params");
    int h = t.resize2x(latent);
    h = t.conv2d(h, ids.dec_w1, ids.dec_b1, 1, 1, true);
    h = leaky_relu(t, h, 0.1f);
    h = t.resize2x(h);
    out = t.conv2d(h, ids.dec_w2, ids.dec_b2, 1, 1, true);
  }
  return clamp01 ? t.clamp(out, 0.0f, 1.0f) : out;
}

namespace {
TransformIds bind_if(Tape& t, const TransformConfig& cfg, const TransformParams* tp) {
  if (cfg.kind == TransformKind::TinyConv) {
    if (!tp) throw std::invalid_argument("tiny-conv transform needs params");
    return bind_transform(t, *tp, false);
  }
  return {};
}
}  // namespace

Tensor analyze(const Tensor& frame, const TransformConfig& cfg, const TransformParams* tp) {
  Tape t;
  TransformIds ids = bind_if(t, cfg, tp);
  return t.val(build_analyze(t, t.leaf(frame), cfg, ids));
}

Tensor synthesize(const Tensor& latent, const TransformConfig& cfg, const TransformParams* tp,
                  bool clamp01) {
  Tape t;
  TransformIds ids = bind_if(t, cfg, tp);
  return t.val(build_synthesize(t, t.leaf(latent), cfg, ids, clamp01));
}

float roundtrip_error(const Tensor& frame, const TransformConfig& cfg, const TransformParams* tp) {
  Tensor back = synthesize(analyze(frame, cfg, tp), cfg, tp, false);
  return max_abs_diff(frame, back);
}

Tensor frame_from_rgb8(const unsigned char* rgb, int h, int w) {
  Tensor f({3, h, w});
  const int64_t plane = static_cast<int64_t>(h) * w;
  for (int64_t i = 0; i < plane; ++i)
    for (int c = 0; c < 3; ++c) f[c * plane + i] = static_cast<float>(rgb[i * 3 + c]) / 255.0f;
  return f;
}

std::vector<unsigned char> frame_to_rgb8(const Tensor& frame) {
  if (frame.rank() != 3 || frame.dim(0) != 3)
    throw std::invalid_argument("frame_to_rgb8: want 3xHxW");
  const int64_t plane = static_cast<int64_t>(frame.dim(1)) * frame.dim(2);
  std::vector<unsigned char> rgb(static_cast<size_t>(plane) * 3);
  for (int64_t i = 0; i < plane; ++i)
    for (int c = 0; c < 3; ++c) {
      float v = frame[c * plane + i];
      v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
      rgb[static_cast<size_t>(i * 3 + c)] =
          static_cast<unsigned char>(round_half_away(v * 255.0f));
    }
  return rgb;
}

void write_ppm(const std::string& path, const Tensor& frame) {
  std::vector<unsigned char> rgb = frame_to_rgb8(frame);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_ppm: cannot open " + path);
  f << "P6\n" << frame.dim(2) << " " << frame.dim(1) << "\n255\n";
  f.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  if (!f) throw std::runtime_error("write_ppm: short write to " + path);
}

Tensor read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_ppm: cannot open " + path);
  std::string magic;
  f >> magic;
  if (magic != "P6") throw std::runtime_error("read_ppm: not a P6 file: " + path);
  auto next_int = [&f, &path]() {
    // skip whitespace and # comments between header fields
    int ch = f.get();
    while (ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r' || ch == '#') {
      if (ch == '#')
        while (ch != '\n' && ch != EOF) ch = f.get();
      ch = f.get();
    }
    int v = 0;
    bool any = false;
    while (ch >= '0' && ch <= '9') {
      v = v * 10 + (ch - '0');
      any = true;
      ch = f.get();
    }
    if (!any) throw std::runtime_error("read_ppm: bad header in " + path);
    return v;
  };
  const int w = next_int(), h = next_int(), maxval = next_int();
  if (maxval != 255) throw std::runtime_error("read_ppm: only maxval 255 supported");
  std::vector<unsigned char> rgb(static_cast<size_t>(h) * w * 3);
  f.read(reinterpret_cast<char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  if (f.gcount() != static_cast<std::streamsize>(rgb.size()))
    throw std::runtime_error("read_ppm: truncated pixel data in " + path);
  return frame_from_rgb8(rgb.data(), h, w);
}

void write_raw_stream(const std::string& path, const std::vector<Tensor>& frames) {
  if (frames.empty()) throw std::invalid_argument("write_raw_stream: no frames");
  const int h = frames[0].dim(1), w = frames[0].dim(2);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_raw_stream: cannot open " + path);
  for (const Tensor& fr : frames) {
    if (fr.rank() != 3 || fr.dim(0) != 3 || fr.dim(1) != h || fr.dim(2) != w)
      throw std::invalid_argument("write_raw_stream: mixed frame extents");
    const int64_t plane = static_cast<int64_t>(h) * w;
    std::vector<unsigned char> buf(static_cast<size_t>(plane));
    for (int c = 0; c < 3; ++c) {
      for (int64_t i = 0; i < plane; ++i) {
        float v = fr[c * plane + i];
        v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
        buf[static_cast<size_t>(i)] = static_cast<unsigned char>(round_half_away(v * 255.0f));
      }
      f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(plane));
    }
  }
  std::ofstream hdr(path + ".hdr");
  hdr << w << " " << h << " " << frames.size() << "\n";
  if (!hdr) throw std::runtime_error("write_raw_stream: cannot write header for " + path);
}

std::vector<Tensor> read_raw_stream(const std::string& path) {
  std::ifstream hdr(path + ".hdr");
  if (!hdr) throw std::runtime_error("read_raw_stream: missing header " + path + ".hdr");
  int w = 0, h = 0;
  size_t n = 0;
  hdr >> w >> h >> n;
  if (w <= 0 || h <= 0 || n == 0) throw std::runtime_error("read_raw_stream: bad header");
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_raw_stream: cannot open " + path);
  const int64_t plane = static_cast<int64_t>(h) * w;
  std::vector<Tensor> frames;
  std::vector<unsigned char> buf(static_cast<size_t>(plane) * 3);
  for (size_t k = 0; k < n; ++k) {
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (f.gcount() != static_cast<std::streamsize>(buf.size()))
      throw std::runtime_error("read_raw_stream: truncated stream");
    Tensor fr({3, h, w});
    for (int64_t i = 0; i < plane * 3; ++i) fr[i] = static_cast<float>(buf[i]) / 255.0f;
    frames.push_back(std::move(fr));
  }
  return frames;
}

}  // namespace utvc
