#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "utvc/synthvideo.hpp"
#include "utvc/transform.hpp"

using namespace utvc;

namespace {

Tensor ramp_x(int h, int w) {
  Tensor img({3, h, w});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) img.at(c, y, x) = static_cast<float>(x) / (w - 1);
  return img;
}

Tensor row_image(const std::vector<float>& vals) {
  Tensor img({3, 1, static_cast<int>(vals.size())});
  for (int c = 0; c < 3; ++c)
    for (size_t x = 0; x < vals.size(); ++x) img.at(c, 0, static_cast<int>(x)) = vals[x];
  return img;
}

std::map<std::string, std::string> slurp_tree(const std::filesystem::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root))
    if (e.is_regular_file()) {
      std::ifstream in(e.path(), std::ios::binary);
      REQUIRE(bool(in));
      std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      out[std::filesystem::relative(e.path(), root).generic_string()] = std::move(bytes);
    }
  return out;
}

}  // namespace

TEST_CASE("pattern names round-trip and bad inputs are rejected") {
  const PatternKind kinds[] = {PatternKind::Sharpening, PatternKind::Lightening,
                               PatternKind::Zooming,    PatternKind::Fading,
                               PatternKind::Blurring,   PatternKind::Darkening,
                               PatternKind::Pulsing,    PatternKind::Shaking};
  for (PatternKind k : kinds) CHECK(pattern_from_name(pattern_name(k)) == k);
  CHECK_THROWS_AS(pattern_from_name("wobble"), std::invalid_argument);

  PatternSpec spec;
  spec.base = base_noise(8, 8, 1);
  spec.frames = 0;
  CHECK_THROWS_AS(gen_pattern(spec), std::invalid_argument);
  spec.frames = 2;
  spec.kind = static_cast<PatternKind>(99);
  CHECK_THROWS_AS(gen_pattern(spec), std::invalid_argument);
  CHECK_THROWS_AS(pattern_params(spec, 0), std::invalid_argument);
  spec.kind = PatternKind::Fading;
  spec.base = Tensor({3, 4});
  CHECK_THROWS_AS(gen_pattern(spec), std::invalid_argument);
  spec.base = Tensor({4, 8, 8});
  CHECK_THROWS_AS(gen_pattern(spec), std::invalid_argument);
}

TEST_CASE("brightness patterns follow their frame-index formulas exactly") {
  const Tensor base = base_noise(12, 16, 42);

  SUBCASE("darkening scales by one minus t over 32") {
    const auto f = gen_pattern({PatternKind::Darkening, base, 32, 0});
    REQUIRE(f.size() == 32);
    CHECK(bit_equal(f[0], base));
    for (size_t i = 0; i < base.vec().size(); ++i) {
      CHECK(f[16].vec()[i] == 0.5f * base.vec()[i]);
      CHECK(f[31].vec()[i] == doctest::Approx(base.vec()[i] / 32.0f).epsilon(1e-6));
    }
  }
  SUBCASE("lightening adds t over 32") {
    const auto f = gen_pattern({PatternKind::Lightening, Tensor::full({3, 6, 6}, 0.25f), 16, 0});
    CHECK(bit_equal(f[0], Tensor::full({3, 6, 6}, 0.25f)));
    for (float v : f[8].vec()) CHECK(v == 0.5f);
  }
  SUBCASE("pulsing alternates unit gain and 0.9 with period 2") {
    const auto f = gen_pattern({PatternKind::Pulsing, base, 6, 0});
    CHECK(bit_equal(f[0], base));
    CHECK(bit_equal(f[2], base));
    CHECK(bit_equal(f[4], base));
    CHECK(bit_equal(f[1], f[3]));
    for (size_t i = 0; i < base.vec().size(); ++i) CHECK(f[1].vec()[i] == 0.9f * base.vec()[i]);
  }
  SUBCASE("fading blends toward mid-gray with weight t over 32") {
    const auto f = gen_pattern({PatternKind::Fading, base, 32, 0});
    CHECK(bit_equal(f[0], base));
    for (size_t i = 0; i < base.vec().size(); ++i)
      CHECK(f[16].vec()[i] == 0.5f * base.vec()[i] + 0.25f);
    // weight 1 would be all gray; the last frame of 32 is one step short
    for (size_t i = 0; i < base.vec().size(); ++i)
      CHECK(f[31].vec()[i] ==
            doctest::Approx(base.vec()[i] / 32.0f + 0.5f * 31.0f / 32.0f).epsilon(1e-6));
  }
}

TEST_CASE("blurring kernel grows 1 to 3 to 5 with breaks at t=13 and t=26") {
  const Tensor base = base_noise(10, 14, 3);
  const auto f = gen_pattern({PatternKind::Blurring, base, 32, 0});
  for (int t = 0; t <= 12; ++t) CHECK(bit_equal(f[t], base));
  CHECK_FALSE(bit_equal(f[13], base));
  for (int t = 14; t <= 25; ++t) CHECK(bit_equal(f[t], f[13]));
  CHECK_FALSE(bit_equal(f[26], f[25]));
  for (int t = 27; t <= 31; ++t) CHECK(bit_equal(f[t], f[26]));

  // hand-checked rows: box filters clamp at the edges
  const auto g = gen_pattern({PatternKind::Blurring, row_image({0.0f, 1.0f, 0.0f, 0.0f}), 32, 0});
  const float third = 1.0f / 3.0f;
  const float want3[] = {third, third, third, 0.0f};
  for (int x = 0; x < 4; ++x)
    CHECK(g[13].at(0, 0, x) == doctest::Approx(want3[x]).epsilon(1e-6));
  for (int x = 0; x < 4; ++x)
    CHECK(g[26].at(1, 0, x) == doctest::Approx(0.2f).epsilon(1e-6));
}

TEST_CASE("sharpening is unsharp masking with a 3-sigma gaussian, sigma = t/32 + 1") {
  SUBCASE("constant images are fixed points") {
    const Tensor base = Tensor::full({3, 8, 8}, 0.375f);
    const auto f = gen_pattern({PatternKind::Sharpening, base, 32, 0});
    for (int t : {0, 31})
      for (float v : f[t].vec()) CHECK(v == doctest::Approx(0.375f).epsilon(1e-5));
  }
  SUBCASE("the blur recovered from an impulse row matches the kernel") {
    // out = 2x - gauss(x), so gauss(x) = 2x - out; on a background 0.5 row
    // with a +0.25 impulse at x=7 the blur is 0.5 + 0.25 * w(x - 7)
    std::vector<float> vals(15, 0.5f);
    vals[7] = 0.75f;
    const auto f = gen_pattern({PatternKind::Sharpening, row_image(vals), 32, 0});
    const double sigma = 16.0 / 32.0 + 1.0;
    const int r = 5;  // ceil(3 * 1.5)
    std::vector<double> w(2 * r + 1);
    double sum = 0.0;
    for (int i = -r; i <= r; ++i) {
      w[i + r] = std::exp(-(double(i) * i) / (2.0 * sigma * sigma));
      sum += w[i + r];
    }
    for (double& v : w) v /= sum;
    for (int x = 0; x < 15; ++x) {
      const double kern = std::abs(x - 7) <= r ? w[x - 7 + r] : 0.0;
      const double got_blur = 2.0 * (x == 7 ? 0.75 : 0.5) - f[16].at(2, 0, x);
      CHECK(got_blur == doctest::Approx(0.5 + 0.25 * kern).epsilon(1e-6));
    }
  }
}

TEST_CASE("zooming pans right and shrinks about the center") {
  SUBCASE("t=0 is the identity") {
    const Tensor base = base_gradient(8, 12, 11);
    const auto f = gen_pattern({PatternKind::Zooming, base, 2, 0});
    CHECK(bit_equal(f[0], base));
  }
  SUBCASE("frames match an independent bilinear resampler") {
    const Tensor base = base_noise(6, 10, 4);
    const auto f = gen_pattern({PatternKind::Zooming, base, 4, 0});
    const int t = 1;
    const double pan = 100.0 * t / 32.0, s = std::pow(0.98, t);
    const double cx = (10 - 1) * 0.5, cy = (6 - 1) * 0.5;
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 10; ++x) {
          double sx = cx + (x - pan - cx) / s, sy = cy + (y - cy) / s;
          sx = std::min(std::max(sx, 0.0), 9.0);
          sy = std::min(std::max(sy, 0.0), 5.0);
          const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
          const int x1 = std::min(x0 + 1, 9), y1 = std::min(y0 + 1, 5);
          const double fx = sx - x0, fy = sy - y0;
          const double want = (1 - fy) * ((1 - fx) * base.at(c, y0, x0) + fx * base.at(c, y0, x1)) +
                              fy * ((1 - fx) * base.at(c, y1, x0) + fx * base.at(c, y1, x1));
          CHECK(f[t].at(c, y, x) == doctest::Approx(want).epsilon(1e-6));
        }
  }
  SUBCASE("content moves rightward, so a rising ramp reads lower at the center") {
    const Tensor base = ramp_x(8, 64);
    const auto f = gen_pattern({PatternKind::Zooming, base, 16, 0});
    CHECK(f[8].at(0, 4, 32) < base.at(0, 4, 32));
  }
}

TEST_CASE("shaking applies bounded seeded integer shifts") {
  const auto d = shake_offsets(9, 40);
  REQUIRE(d.size() == 40);
  for (const auto& [dx, dy] : d) {
    CHECK(std::abs(dx) <= 20);
    CHECK(std::abs(dy) <= 20);
  }
  CHECK(shake_offsets(9, 40) == d);
  CHECK(shake_offsets(10, 40) != d);

  const Tensor base = base_noise(48, 48, 77);
  const PatternSpec spec{PatternKind::Shaking, base, 40, 9};
  const auto f = gen_pattern(spec);
  for (int t : {0, 5, 39}) {
    const auto [dx, dy] = d[static_cast<size_t>(t)];
    for (int c = 0; c < 3; ++c)
      for (int y = 20; y < 28; ++y)
        for (int x = 20; x < 28; ++x) CHECK(f[t].at(c, y, x) == base.at(c, y + dy, x + dx));
  }
  const auto again = gen_pattern(spec);
  for (int t = 0; t < 40; ++t) CHECK(bit_equal(again[t], f[t]));
}

TEST_CASE("translation clips carry exact quarter-pel motion with ground-truth flow") {
  const Tensor base = base_noise(48, 64, 5);

  SUBCASE("zero velocity repeats the base with zero flow") {
    const TranslationClip clip = gen_translation(base, 0.0f, 0.0f, 3);
    REQUIRE(clip.frames.size() == 3);
    REQUIRE(clip.flows.size() == 2);
    for (const Tensor& f : clip.frames) CHECK(bit_equal(f, base));
    for (const FlowField& fl : clip.flows)
      for (float v : fl.data.vec()) CHECK(v == 0.0f);
  }
  SUBCASE("integer velocity shifts pixels exactly") {
    const TranslationClip clip = gen_translation(base, 1.0f, 0.0f, 6);
    for (int t : {1, 5})
      for (int y = 0; y < 48; ++y)
        for (int x = 0; x < 64 - t; ++x) CHECK(clip.frames[t].at(1, y, x) == base.at(1, y, x + t));
  }
  SUBCASE("the block matcher recovers the injected velocity") {
    const TranslationClip clip = gen_translation(base, 1.0f, 0.0f, 2);
    const FlowField est = estimate_flow(clip.frames[1], clip.frames[0]);
    for (int y = 8; y < 40; ++y)
      for (int x = 8; x < 56; ++x) {
        CHECK(std::abs(est.data.at(0, y, x) - 1.0f) <= 0.25f);
        CHECK(std::abs(est.data.at(1, y, x)) <= 0.25f);
      }
  }
  SUBCASE("fractional velocities are quarter-pel and dump to FLO2 losslessly") {
    const TranslationClip clip = gen_translation(base, 0.5f, -0.25f, 4);
    CHECK_FALSE(bit_equal(clip.frames[1], base));
    for (const FlowField& fl : clip.flows)
      for (int y = 0; y < 48; ++y)
        for (int x = 0; x < 64; x += 17) {
          CHECK(fl.data.at(0, y, x) == 0.5f);
          CHECK(fl.data.at(1, y, x) == -0.25f);
        }
    const char* path = "synth_flow_roundtrip.flo2";
    write_flo2(path, clip.flows[0]);
    const FlowField back = read_flo2(path);
    CHECK(bit_equal(back.data, clip.flows[0].data));
    std::remove(path);
  }
  SUBCASE("non-quarter-pel velocities are rejected") {
    CHECK_THROWS_AS(gen_translation(base, 0.3f, 0.0f, 2), std::invalid_argument);
    CHECK_THROWS_AS(gen_translation(base, 0.0f, 0.1f, 2), std::invalid_argument);
    CHECK_THROWS_AS(gen_translation(base, 0.25f, 0.0f, 0), std::invalid_argument);
  }
}

TEST_CASE("a pure brightness ramp reads as no motion to the block matcher") {
  const auto f = gen_pattern({PatternKind::Lightening, base_noise(64, 64, 21), 9, 0});
  const FlowField est = estimate_flow(f[8], f[0]);
  int total = 0, still = 0;
  for (int y = 4; y < 60; y += 8)
    for (int x = 4; x < 60; x += 8) {
      ++total;
      if (std::abs(est.data.at(0, y, x)) <= 1.0f && std::abs(est.data.at(1, y, x)) <= 1.0f)
        ++still;
    }
  CHECK(still >= (total * 9 + 9) / 10);
}

TEST_CASE("a corpus regenerates byte-identically and documents every frame") {
  namespace fs = std::filesystem;
  const fs::path a = "synth_corpus_a", b = "synth_corpus_b", c = "synth_corpus_c";
  for (const auto& p : {a, b, c}) fs::remove_all(p);

  SynthConfig cfg;
  cfg.height = 32;
  cfg.width = 32;
  cfg.frames = 6;
  cfg.seed = 5;
  const auto names = write_synth_corpus(a.string(), cfg);
  REQUIRE(names.size() == 11);
  CHECK(names[0] == "sharpening");
  CHECK(names[7] == "shaking");
  CHECK(names[8] == "slide_x");
  CHECK(names[10] == "slide_xy");

  CHECK(write_synth_corpus(b.string(), cfg) == names);
  const auto ta = slurp_tree(a), tb = slurp_tree(b);
  CHECK(ta.size() == 1 + 8 * 6 + 3 * (6 + 5));
  CHECK(ta == tb);

  const std::string manifest = ta.at("manifest.txt");
  CHECK(manifest.find("corpus seed=5 width=32 height=32 frames=6") != std::string::npos);
  CHECK(manifest.find("clip sharpening base=noise") != std::string::npos);
  CHECK(manifest.find("sigma=1.03125") != std::string::npos);
  CHECK(manifest.find("clip slide_y base=noise") != std::string::npos);
  CHECK(manifest.find("vx=0 vy=-0.75") != std::string::npos);
  CHECK(manifest.find("dx=") != std::string::npos);
  CHECK(ta.count("slide_x/frame_005.ppm") == 1);
  CHECK(ta.count("slide_x/flow_004.flo2") == 1);
  CHECK(ta.count("slide_x/flow_005.flo2") == 0);

  const Tensor frame = read_ppm((a / "fading" / "frame_003.ppm").string());
  REQUIRE(frame.rank() == 3);
  CHECK(frame.dim(0) == 3);
  CHECK(frame.dim(1) == 32);
  CHECK(frame.dim(2) == 32);

  cfg.seed = 6;
  write_synth_corpus(c.string(), cfg);
  const auto tc = slurp_tree(c);
  CHECK(tc.at("manifest.txt") != manifest);
  CHECK(tc.at("sharpening/frame_000.ppm") != ta.at("sharpening/frame_000.ppm"));

  for (const auto& p : {a, b, c}) fs::remove_all(p);
}
