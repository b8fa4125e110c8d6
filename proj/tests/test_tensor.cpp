#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "utvc/tensor.hpp"

using namespace utvc;

TEST_CASE("shape and indexing") {
  Tensor t({2, 3, 4});
  CHECK(t.numel() == 24);
  t.at(1, 2, 3) = 5.0f;
  CHECK(t[23] == 5.0f);
  CHECK(t.at(0, 0, 0) == 0.0f);
}

TEST_CASE("construction rejects non-finite values") {
  CHECK_THROWS_AS(Tensor({2}, {1.0f, std::numeric_limits<float>::infinity()}),
                  std::invalid_argument);
  CHECK_THROWS_AS(Tensor({1}, {std::nanf("")}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({0}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0f}), std::invalid_argument);
}

TEST_CASE("rounding is half away from zero") {
  CHECK(round_half_away(0.5f) == 1.0f);
  CHECK(round_half_away(-0.5f) == -1.0f);
  CHECK(round_half_away(2.5f) == 3.0f);
  CHECK(round_half_away(-2.5f) == -3.0f);
  CHECK(round_half_away(0.49f) == 0.0f);
  CHECK(round_half_away(-1.49f) == -1.0f);
}

TEST_CASE("rng determinism") {
  Rng a(42), b(42), c(43);
  bool same = true, diff = false;
  for (int i = 0; i < 100; ++i) {
    uint64_t x = a.next_u64(), y = b.next_u64(), z = c.next_u64();
    same = same && (x == y);
    diff = diff || (x != z);
  }
  CHECK(same);
  CHECK(diff);
}

TEST_CASE("rng moments") {
  Rng r(7);
  double s = 0, s2 = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double v = r.normal();
    s += v;
    s2 += v * v;
  }
  CHECK(std::abs(s / n) < 0.03);
  CHECK(std::abs(s2 / n - 1.0) < 0.05);
}

TEST_CASE("pairwise sum matches double accumulation closely") {
  Rng r(1);
  std::vector<float> v(10000);
  double ref = 0;
  for (auto& x : v) {
    x = r.uniform_f(-1.0f, 1.0f);
    ref += x;
  }
  float s = pairwise_sum(v.data(), static_cast<int64_t>(v.size()));
  CHECK(std::abs(s - ref) < 1e-3);
}
