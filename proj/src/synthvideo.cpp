#include "utvc/synthvideo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "utvc/rng.hpp"
#include "utvc/transform.hpp"

namespace utvc {

namespace {

constexpr int kShakeMax = 20;
constexpr float kPulseLow = 0.9f;

float clamp01(float v) { return std::min(1.0f, std::max(0.0f, v)); }

void check_base(const Tensor& base) {
  if (base.rank() != 3 || base.dim(0) != 3 || base.dim(1) < 1 || base.dim(2) < 1)
    throw std::invalid_argument("pattern base must be a (3,H,W) image");
}

Tensor map_gain_bias(const Tensor& x, float gain, float bias) {
  Tensor out = x;
  for (float& v : out.vec()) v = clamp01(v * gain + bias);
  return out;
}

// separable blur with edge clamp; weights are whatever the caller built
Tensor blur_1d_weights(const Tensor& x, const std::vector<float>& w) {
  const int r = static_cast<int>(w.size()) / 2;
  const int h = x.dim(1), wd = x.dim(2);
  Tensor mid({3, h, wd}), out({3, h, wd});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < wd; ++xx) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i)
          acc += w[i + r] * x.at(c, y, std::clamp(xx + i, 0, wd - 1));
        mid.at(c, y, xx) = static_cast<float>(acc);
      }
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < wd; ++xx) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i)
          acc += w[i + r] * mid.at(c, std::clamp(y + i, 0, h - 1), xx);
        out.at(c, y, xx) = static_cast<float>(acc);
      }
  return out;
}

Tensor gaussian_blur(const Tensor& x, float sigma) {
  const int r = static_cast<int>(std::ceil(3.0f * sigma));
  std::vector<float> w(2 * r + 1);
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    w[i + r] = static_cast<float>(std::exp(-(double(i) * i) / (2.0 * sigma * sigma)));
    sum += w[i + r];
  }
  for (float& v : w) v = static_cast<float>(v / sum);
  return blur_1d_weights(x, w);
}

Tensor box_blur(const Tensor& x, int k) {
  if (k <= 1) return x;
  std::vector<float> w(k, 1.0f / static_cast<float>(k));
  return blur_1d_weights(x, w);
}

float sample_bilinear(const Tensor& img, int c, float y, float x) {
  const int h = img.dim(1), w = img.dim(2);
  x = std::clamp(x, 0.0f, static_cast<float>(w - 1));
  y = std::clamp(y, 0.0f, static_cast<float>(h - 1));
  const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const float fx = x - static_cast<float>(x0), fy = y - static_cast<float>(y0);
  return (1.0f - fy) * ((1.0f - fx) * img.at(c, y0, x0) + fx * img.at(c, y0, x1)) +
         fy * ((1.0f - fx) * img.at(c, y1, x0) + fx * img.at(c, y1, x1));
}

int blur_kernel_size(int t) { return 2 * (5 * t / 64) + 1; }

Tensor pattern_frame(const PatternSpec& spec, int t,
                     const std::vector<std::pair<int, int>>& shifts) {
  const Tensor& base = spec.base;
  const int h = base.dim(1), w = base.dim(2);
  const float a = static_cast<float>(t) / 32.0f;
  switch (spec.kind) {
    case PatternKind::Sharpening: {
      Tensor g = gaussian_blur(base, a + 1.0f);
      Tensor out = base;
      for (size_t i = 0; i < out.vec().size(); ++i)
        out.vec()[i] = clamp01(2.0f * base.vec()[i] - g.vec()[i]);
      return out;
    }
    case PatternKind::Lightening:
      return map_gain_bias(base, 1.0f, a);
    case PatternKind::Zooming: {
      const float pan = 100.0f * a;
      const float s = static_cast<float>(std::pow(0.98, t));
      const float cx = static_cast<float>(w - 1) * 0.5f;
      const float cy = static_cast<float>(h - 1) * 0.5f;
      Tensor out({3, h, w});
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x)
            out.at(c, y, x) = sample_bilinear(base, c, cy + (float(y) - cy) / s,
                                              cx + (float(x) - pan - cx) / s);
      return out;
    }
    case PatternKind::Fading:
      return map_gain_bias(base, 1.0f - a, 0.5f * a);
    case PatternKind::Blurring:
      return box_blur(base, blur_kernel_size(t));
    case PatternKind::Darkening:
      return map_gain_bias(base, 1.0f - a, 0.0f);
    case PatternKind::Pulsing:
      return t % 2 == 0 ? base : map_gain_bias(base, kPulseLow, 0.0f);
    case PatternKind::Shaking: {
      const auto [dx, dy] = shifts[static_cast<size_t>(t)];
      Tensor out({3, h, w});
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x)
            out.at(c, y, x) =
                base.at(c, std::clamp(y + dy, 0, h - 1), std::clamp(x + dx, 0, w - 1));
      return out;
    }
  }
  throw std::invalid_argument("unknown pattern kind");
}

}  // namespace

PatternKind pattern_from_name(const std::string& name) {
  static constexpr PatternKind kKinds[] = {
      PatternKind::Sharpening, PatternKind::Lightening, PatternKind::Zooming,
      PatternKind::Fading,     PatternKind::Blurring,   PatternKind::Darkening,
      PatternKind::Pulsing,    PatternKind::Shaking,
  };
  for (PatternKind k : kKinds)
    if (name == pattern_name(k)) return k;
  throw std::invalid_argument("unknown pattern name: " + name);
}

const char* pattern_name(PatternKind kind) {
  switch (kind) {
    case PatternKind::Sharpening: return "sharpening";
    case PatternKind::Lightening: return "lightening";
    case PatternKind::Zooming: return "zooming";
    case PatternKind::Fading: return "fading";
    case PatternKind::Blurring: return "blurring";
    case PatternKind::Darkening: return "darkening";
    case PatternKind::Pulsing: return "pulsing";
    case PatternKind::Shaking: return "shaking";
  }
  throw std::invalid_argument("unknown pattern kind");
}

std::vector<std::pair<int, int>> shake_offsets(uint64_t seed, int frames) {
  Rng rng(seed);
  std::vector<std::pair<int, int>> d(static_cast<size_t>(std::max(frames, 0)));
  for (auto& p : d) {
    p.first = static_cast<int>(rng.uniform_int(-kShakeMax, kShakeMax));
    p.second = static_cast<int>(rng.uniform_int(-kShakeMax, kShakeMax));
  }
  return d;
}

std::vector<Tensor> gen_pattern(const PatternSpec& spec) {
  check_base(spec.base);
  if (spec.frames < 1) throw std::invalid_argument("pattern needs at least one frame");
  pattern_name(spec.kind);  // rejects out-of-range kinds up front
  std::vector<std::pair<int, int>> shifts;
  if (spec.kind == PatternKind::Shaking) shifts = shake_offsets(spec.seed, spec.frames);
  std::vector<Tensor> out(static_cast<size_t>(spec.frames));
#pragma omp parallel for schedule(dynamic)
  for (int t = 0; t < spec.frames; ++t)
    out[static_cast<size_t>(t)] = pattern_frame(spec, t, shifts);
  return out;
}

std::string pattern_params(const PatternSpec& spec, int t) {
  char buf[64];
  const double a = t / 32.0;
  switch (spec.kind) {
    case PatternKind::Sharpening:
      std::snprintf(buf, sizeof buf, "sigma=%g", a + 1.0);
      return buf;
    case PatternKind::Lightening:
      std::snprintf(buf, sizeof buf, "add=%g", a);
      return buf;
    case PatternKind::Zooming:
      std::snprintf(buf, sizeof buf, "pan=%g scale=%g", 100.0 * a, std::pow(0.98, t));
      return buf;
    case PatternKind::Fading:
      std::snprintf(buf, sizeof buf, "gray=%g", a);
      return buf;
    case PatternKind::Blurring:
      std::snprintf(buf, sizeof buf, "k=%d", blur_kernel_size(t));
      return buf;
    case PatternKind::Darkening:
      std::snprintf(buf, sizeof buf, "gain=%g", 1.0 - a);
      return buf;
    case PatternKind::Pulsing:
      std::snprintf(buf, sizeof buf, "gain=%g", t % 2 == 0 ? 1.0 : double(kPulseLow));
      return buf;
    case PatternKind::Shaking: {
      const auto d = shake_offsets(spec.seed, spec.frames);
      const auto [dx, dy] = d.at(static_cast<size_t>(t));
      std::snprintf(buf, sizeof buf, "dx=%d dy=%d", dx, dy);
      return buf;
    }
  }
  throw std::invalid_argument("unknown pattern kind");
}

Tensor base_noise(int h, int w, uint64_t seed) {
  Rng rng(seed);
  Tensor img = Tensor::full({3, h, w}, 0.5f);
  for (int c = 0; c < 3; ++c)
    for (int oct = 0; oct < 3; ++oct) {
      const int cell = 16 >> oct;
      const float amp = 0.5f / static_cast<float>(1 << oct);
      const int gh = h / cell + 2, gw = w / cell + 2;
      Tensor lat = Tensor::uniform({gh, gw}, 0.0f, 1.0f, rng);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const float gy = static_cast<float>(y) / cell, gx = static_cast<float>(x) / cell;
          const int y0 = static_cast<int>(gy), x0 = static_cast<int>(gx);
          const float fy = gy - y0, fx = gx - x0;
          const float v = (1 - fy) * ((1 - fx) * lat.at(y0, x0) + fx * lat.at(y0, x0 + 1)) +
                          fy * ((1 - fx) * lat.at(y0 + 1, x0) + fx * lat.at(y0 + 1, x0 + 1));
          img.at(c, y, x) = clamp01(img.at(c, y, x) + amp * (v - 0.5f));
        }
    }
  return img;
}

Tensor base_gradient(int h, int w, uint64_t seed) {
  Rng rng(seed);
  const float ang = rng.uniform_f(0.0f, 6.2831853f);
  const float dx = std::cos(ang), dy = std::sin(ang);
  float c0[3], c1[3];
  for (int c = 0; c < 3; ++c) {
    c0[c] = rng.uniform_f(0.1f, 0.9f);
    c1[c] = rng.uniform_f(0.1f, 0.9f);
  }
  float lo = 0.0f, hi = 0.0f;
  for (int corner = 0; corner < 4; ++corner) {
    const float p = dx * ((corner & 1) ? w - 1 : 0) + dy * ((corner & 2) ? h - 1 : 0);
    lo = std::min(lo, p);
    hi = std::max(hi, p);
  }
  const float span = std::max(hi - lo, 1e-6f);
  Tensor img({3, h, w});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const float s = (dx * x + dy * y - lo) / span;
        img.at(c, y, x) = c0[c] + s * (c1[c] - c0[c]);
      }
  return img;
}

Tensor base_checker(int h, int w, uint64_t seed) {
  Rng rng(seed);
  const int cell = 4 << rng.uniform_int(0, 2);
  float c0[3], c1[3];
  for (int c = 0; c < 3; ++c) {
    c0[c] = rng.uniform_f(0.05f, 0.95f);
    c1[c] = rng.uniform_f(0.05f, 0.95f);
  }
  Tensor img({3, h, w});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        img.at(c, y, x) = ((x / cell + y / cell) % 2 == 0) ? c0[c] : c1[c];
  return img;
}

TranslationClip gen_translation(const Tensor& base, float vx, float vy, int frames) {
  check_base(base);
  if (frames < 1) throw std::invalid_argument("translation needs at least one frame");
  for (float v : {vx, vy})
    if (v * 4.0f != std::round(v * 4.0f))
      throw std::invalid_argument("translation velocity must be a multiple of 0.25 px");
  const int h = base.dim(1), w = base.dim(2);
  TranslationClip clip;
  clip.frames.resize(static_cast<size_t>(frames));
#pragma omp parallel for schedule(dynamic)
  for (int t = 0; t < frames; ++t) {
    Tensor f({3, h, w});
    const float ox = vx * static_cast<float>(t), oy = vy * static_cast<float>(t);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          f.at(c, y, x) = sample_bilinear(base, c, float(y) + oy, float(x) + ox);
    clip.frames[static_cast<size_t>(t)] = std::move(f);
  }
  for (int t = 0; t + 1 < frames; ++t) {
    FlowField fl;
    fl.data = Tensor({2, h, w});
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        fl.data.at(0, y, x) = vx;
        fl.data.at(1, y, x) = vy;
      }
    clip.flows.push_back(std::move(fl));
  }
  return clip;
}

std::vector<std::string> write_synth_corpus(const std::string& dir, const SynthConfig& cfg) {
  namespace fs = std::filesystem;
  if (cfg.height < 1 || cfg.width < 1 || cfg.frames < 1)
    throw std::invalid_argument("corpus extents and frame count must be positive");
  fs::create_directories(dir);
  std::ofstream mf(dir + "/manifest.txt", std::ios::binary);
  if (!mf) throw std::runtime_error("cannot write " + dir + "/manifest.txt");
  mf << "corpus seed=" << cfg.seed << " width=" << cfg.width << " height=" << cfg.height
     << " frames=" << cfg.frames << "\n";

  const auto frame_path = [&](const std::string& clip, int t) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "/frame_%03d.ppm", t);
    return dir + "/" + clip + buf;
  };
  const auto emit_frames = [&](const std::string& clip, const std::vector<Tensor>& frames) {
    fs::create_directories(dir + "/" + clip);
    for (size_t t = 0; t < frames.size(); ++t)
      write_ppm(frame_path(clip, static_cast<int>(t)), frames[t]);
  };

  Rng root(cfg.seed);
  std::vector<std::string> names;

  static constexpr PatternKind kKinds[] = {
      PatternKind::Sharpening, PatternKind::Lightening, PatternKind::Zooming,
      PatternKind::Fading,     PatternKind::Blurring,   PatternKind::Darkening,
      PatternKind::Pulsing,    PatternKind::Shaking,
  };
  static constexpr const char* kBaseNames[] = {"noise", "gradient", "checker"};
  for (int i = 0; i < 8; ++i) {
    const uint64_t clip_seed = root.next_u64();
    const int b = i % 3;
    Tensor base = b == 0   ? base_noise(cfg.height, cfg.width, clip_seed)
                  : b == 1 ? base_gradient(cfg.height, cfg.width, clip_seed)
                           : base_checker(cfg.height, cfg.width, clip_seed);
    PatternSpec spec{kKinds[i], std::move(base), cfg.frames, clip_seed};
    emit_frames(pattern_name(spec.kind), gen_pattern(spec));
    names.emplace_back(pattern_name(spec.kind));
    mf << "clip " << pattern_name(spec.kind) << " base=" << kBaseNames[b]
       << " seed=" << clip_seed << " frames=" << cfg.frames << "\n";
    for (int t = 0; t < cfg.frames; ++t)
      mf << "  t=" << t << " " << pattern_params(spec, t) << "\n";
  }

  struct Slide {
    const char* name;
    float vx, vy;
  };
  static constexpr Slide kSlides[] = {
      {"slide_x", 1.0f, 0.0f}, {"slide_y", 0.0f, -0.75f}, {"slide_xy", 0.5f, 0.25f}};
  for (const Slide& s : kSlides) {
    const uint64_t clip_seed = root.next_u64();
    TranslationClip clip =
        gen_translation(base_noise(cfg.height, cfg.width, clip_seed), s.vx, s.vy, cfg.frames);
    emit_frames(s.name, clip.frames);
    for (size_t t = 0; t < clip.flows.size(); ++t) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "/flow_%03d.flo2", static_cast<int>(t));
      write_flo2(dir + "/" + s.name + buf, clip.flows[t]);
    }
    names.emplace_back(s.name);
    mf << "clip " << s.name << " base=noise seed=" << clip_seed << " frames=" << cfg.frames
       << " vx=" << s.vx << " vy=" << s.vy << "\n";
    for (int t = 0; t < cfg.frames; ++t)
      mf << "  t=" << t << " dx=" << s.vx * t << " dy=" << s.vy * t << "\n";
  }
  if (!mf.flush()) throw std::runtime_error("short write on " + dir + "/manifest.txt");
  return names;
}

}  // namespace utvc
