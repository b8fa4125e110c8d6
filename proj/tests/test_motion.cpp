#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <unistd.h>

#include <cmath>
#include <cstdio>

#include "doctest.h"
#include "utvc/motion.hpp"

using namespace utvc;

namespace {

Tensor random_frame(int h, int w, Rng& rng, float lo = 0.05f, float hi = 0.95f) {
  return Tensor::uniform({3, h, w}, lo, hi, rng);
}

FlowField constant_flow(int h, int w, float dx, float dy) {
  Tensor d(std::vector<int>{2, h, w});
  const int64_t n = static_cast<int64_t>(h) * w;
  for (int64_t i = 0; i < n; ++i) d[i] = dx, d[n + i] = dy;
  return {std::move(d), FlowField::Grid::pixel};
}

float at(const FlowField& f, int comp, int y, int x) {
  const int w = f.data.dim(2);
  return f.data[static_cast<int64_t>(comp) * f.data.dim(1) * w + static_cast<int64_t>(y) * w + x];
}

}  // namespace

TEST_CASE("identical frames give exactly zero flow") {
  Rng rng(31);
  const Tensor f = random_frame(32, 48, rng);
  const FlowField v = estimate_flow(f, f);
  for (int64_t i = 0; i < v.data.numel(); ++i) CHECK(v.data[i] == 0.0f);

  const Tensor other = random_frame(32, 32, rng);
  CHECK_THROWS_AS(estimate_flow(f, other), std::invalid_argument);
}

TEST_CASE("global translation is recovered in the interior") {
  Rng rng(32);
  const Tensor ref = random_frame(64, 64, rng);

  SUBCASE("integer shift") {
    const FlowField truth = constant_flow(64, 64, -3.0f, 0.0f);
    const Tensor cur = warp(ref, truth);
    const FlowField v = estimate_flow(cur, ref);
    for (int y = 8; y < 56; ++y)
      for (int x = 8; x < 56; ++x) {
        CHECK(std::abs(at(v, 0, y, x) + 3.0f) <= 0.25f);
        CHECK(std::abs(at(v, 1, y, x)) <= 0.25f);
      }
  }

  SUBCASE("fractional shift lands on the quarter-pel lattice") {
    const FlowField truth = constant_flow(64, 64, -2.75f, 1.5f);
    const Tensor cur = warp(ref, truth);
    const FlowField v = estimate_flow(cur, ref);
    for (int y = 8; y < 56; ++y)
      for (int x = 8; x < 56; ++x) {
        CHECK(std::abs(at(v, 0, y, x) + 2.75f) <= 0.25f);
        CHECK(std::abs(at(v, 1, y, x) - 1.5f) <= 0.25f);
      }
  }
}

TEST_CASE("a pure brightness change produces no spurious motion") {
  Rng rng(33);
  const Tensor ref = random_frame(64, 64, rng, 0.1f, 0.75f);
  Tensor cur = ref;
  for (int64_t i = 0; i < cur.numel(); ++i) cur[i] += 0.125f;
  const FlowField v = estimate_flow(cur, ref);
  int64_t still = 0;
  const int64_t n = 64 * 64;
  for (int64_t i = 0; i < n; ++i)
    if (std::abs(v.data[i]) <= 1.0f && std::abs(v.data[n + i]) <= 1.0f) ++still;
  CHECK(still >= n * 9 / 10);
}

TEST_CASE("coded flow round-trips bit-exactly") {
  Rng rng(34);
  FlowField v{Tensor::uniform({2, 48, 64}, -6.0f, 6.0f, rng), FlowField::Grid::pixel};
  auto [bits, vhat] = code_flow(v);
  CHECK(bits.bits == 8 * bits.bytes.size());
  const FlowField back = decode_flow(bits.bytes.data(), bits.bytes.size(), 48, 64);
  CHECK(bit_equal(back.data, vhat.data));
  // coded values live on the quarter-pel lattice, constant per 8x8 block
  for (int64_t i = 0; i < vhat.data.numel(); ++i)
    CHECK(vhat.data[i] == 0.25f * std::round(vhat.data[i] * 4.0f));
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 64; ++x)
      CHECK(at(vhat, 0, y, x) == at(vhat, 0, y - y % 8, x - x % 8));

  FlowField latent{Tensor::zeros({2, 8, 8}), FlowField::Grid::latent};
  CHECK_THROWS_AS(code_flow(latent), std::invalid_argument);
}

TEST_CASE("zero flow codes far below 0.02 bits per pixel") {
  auto [bits, vhat] = code_flow(constant_flow(48, 48, 0.0f, 0.0f));
  for (int64_t i = 0; i < vhat.data.numel(); ++i) CHECK(vhat.data[i] == 0.0f);
  CHECK(static_cast<double>(bits.bits) / (48.0 * 48.0) < 0.02);
}

TEST_CASE("constant flow pays only for each row's first block") {
  auto [bits, vhat] = code_flow(constant_flow(64, 64, 5.25f, -2.5f));
  for (int64_t i = 0; i < 64 * 64; ++i) {
    CHECK(vhat.data[i] == 5.25f);
    CHECK(vhat.data[64 * 64 + i] == -2.5f);
  }
  const FlowField back = decode_flow(bits.bytes.data(), bits.bytes.size(), 64, 64);
  CHECK(bit_equal(back.data, vhat.data));
  // widening the field adds only zero-residual blocks, which are almost free
  auto [bits_wide, vhat_wide] = code_flow(constant_flow(64, 128, 5.25f, -2.5f));
  CHECK(bits_wide.bits <= bits.bits + 40);
}

TEST_CASE("warping follows the stored flow") {
  Rng rng(35);
  const Tensor ref = random_frame(24, 40, rng);

  SUBCASE("zero flow is the identity") {
    const Tensor out = warp(ref, constant_flow(24, 40, 0.0f, 0.0f));
    CHECK(bit_equal(out, ref));
  }

  SUBCASE("unit flow shifts by one pixel and clamps the border") {
    const Tensor out = warp(ref, constant_flow(24, 40, 1.0f, 0.0f));
    const int64_t n = 24 * 40;
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 24; ++y) {
        for (int x = 0; x < 39; ++x)
          CHECK(out[c * n + y * 40 + x] == ref[c * n + y * 40 + x + 1]);
        CHECK(out[c * n + y * 40 + 39] == ref[c * n + y * 40 + 39]);
      }
  }

  SUBCASE("half-pixel flow averages horizontal neighbors") {
    const Tensor out = warp(ref, constant_flow(24, 40, 0.5f, 0.0f));
    const int64_t n = 24 * 40;
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 24; ++y)
        for (int x = 0; x < 39; ++x)
          CHECK(std::abs(out[c * n + y * 40 + x] -
                         0.5f * (ref[c * n + y * 40 + x] + ref[c * n + y * 40 + x + 1])) <=
                1e-6f);
  }

  Tensor small = random_frame(16, 16, rng);
  CHECK_THROWS_AS(warp(small, constant_flow(24, 40, 0.0f, 0.0f)), std::invalid_argument);
}

TEST_CASE("flow downsampling pools and converts units") {
  const FlowField four = constant_flow(16, 32, 4.0f, 0.0f);
  const FlowField down = downsample_flow(four, 4);
  CHECK(down.grid == FlowField::Grid::latent);
  CHECK(down.data.dim(1) == 4);
  CHECK(down.data.dim(2) == 8);
  for (int64_t i = 0; i < 32; ++i) {
    CHECK(down.data[i] == 1.0f);
    CHECK(down.data[32 + i] == 0.0f);
  }

  // a horizontal ramp pools to the block mean of the ramp
  Tensor ramp(std::vector<int>{2, 16, 32});
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 32; ++x) {
      ramp[y * 32 + x] = 0.1f * static_cast<float>(x);
      ramp[16 * 32 + y * 32 + x] = 0.0f;
    }
  const FlowField dr = downsample_flow({ramp, FlowField::Grid::pixel}, 4);
  for (int by = 0; by < 4; ++by)
    for (int bx = 0; bx < 8; ++bx) {
      const double want = 0.1 * (4.0 * bx + 1.5) / 4.0;
      CHECK(std::abs(dr.data[by * 8 + bx] - want) <= 1e-6);
    }

  CHECK_THROWS_AS(downsample_flow(constant_flow(15, 32, 0.0f, 0.0f), 4), std::invalid_argument);
  CHECK_THROWS_AS(downsample_flow(dr, 4), std::invalid_argument);
}

TEST_CASE("flow dump files round-trip") {
  Rng rng(36);
  FlowField v{Tensor::uniform({2, 12, 20}, -9.0f, 9.0f, rng), FlowField::Grid::pixel};
  const std::string path = "test_flow.flo2";
  write_flo2(path, v);
  const FlowField back = read_flo2(path);
  CHECK(bit_equal(back.data, v.data));
  CHECK(back.data.dim(1) == 12);
  CHECK(back.data.dim(2) == 20);

  // corrupt the magic
  {
    FILE* f = std::fopen(path.c_str(), "r+b");
    REQUIRE(f);
    std::fputc('X', f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(read_flo2(path), std::runtime_error);
  write_flo2(path, v);
  {
    FILE* f = std::fopen(path.c_str(), "r+b");
    REQUIRE(f);
    CHECK(std::fseek(f, 0, SEEK_END) == 0);
    const long full = std::ftell(f);
    std::fclose(f);
    CHECK(::truncate(path.c_str(), full - 5) == 0);
  }
  CHECK_THROWS_AS(read_flo2(path), std::runtime_error);
  std::remove(path.c_str());
}
