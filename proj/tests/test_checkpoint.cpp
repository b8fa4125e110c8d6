#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdint>
#include <cstdio>
#include <set>
#include <vector>

#include "doctest.h"
#include "utvc/checkpoint.hpp"
#include "utvc/model.hpp"

using namespace utvc;

namespace {
NamedTensors sample_records(uint64_t seed) {
  Rng rng(seed);
  NamedTensors r;
  r.emplace_back("vec", Tensor::uniform({5}, -3.0f, 3.0f, rng));
  r.emplace_back("mat", Tensor::uniform({3, 4}, -1.0f, 1.0f, rng));
  r.emplace_back("map", Tensor::uniform({2, 3, 5}, -8.0f, 8.0f, rng));
  r.emplace_back("conv", Tensor::uniform({4, 2, 3, 3}, -0.5f, 0.5f, rng));
  return r;
}

ModelConfig tiny_model_cfg() {
  ModelConfig c;
  c.transform.kind = TransformKind::TinyConv;
  c.transform.latent_c = 8;
  c.transform.hidden_c = 6;
  c.qcmoe = {8, 3, 2};
  c.align.latent_c = 8;
  c.align.offsets = 4;
  c.entropy.latent_c = 8;
  c.entropy.hyper_c = 6;
  c.entropy.z_c = 4;
  c.entropy.hyper_f = 6;
  c.entropy.tcm_c = 4;
  c.entropy.fuse_hidden = 8;
  return c;
}

bool models_bit_equal(Model& a, Model& b) {
  auto na = named_tensors(a), nb = named_tensors(b);
  if (na.size() != nb.size()) return false;
  for (size_t i = 0; i < na.size(); ++i)
    if (na[i].first != nb[i].first || !bit_equal(*na[i].second, *nb[i].second)) return false;
  return true;
}
}  // namespace

TEST_CASE("a single record serializes to the documented byte layout") {
  NamedTensors r;
  r.emplace_back("a", Tensor({2}, {1.0f, -2.0f}));
  const std::vector<uint8_t> got = serialize_checkpoint(r);
  const std::vector<uint8_t> want = {
      'U',  'T',  'V',  'C',         // magic
      0x01, 0x00,                    // version
      0x01, 0x00, 0x00, 0x00,        // record count
      0x01, 0x00,                    // name length
      'a',                           // name
      0x01,                          // rank
      0x02, 0x00, 0x00, 0x00,        // extent
      0x00, 0x00, 0x80, 0x3f,        // 1.0f
      0x00, 0x00, 0x00, 0xc0};       // -2.0f
  CHECK(got == want);
}

TEST_CASE("serialize then parse reproduces every record bit-exactly") {
  const NamedTensors r = sample_records(11);
  const std::vector<uint8_t> bytes = serialize_checkpoint(r);
  const NamedTensors back = parse_checkpoint(bytes.data(), bytes.size());
  REQUIRE(back.size() == r.size());
  for (size_t i = 0; i < r.size(); ++i) {
    CHECK(back[i].first == r[i].first);
    CHECK(back[i].second.shape() == r[i].second.shape());
    CHECK(bit_equal(back[i].second, r[i].second));
  }
}

TEST_CASE("every strict prefix of a container fails to parse") {
  const std::vector<uint8_t> bytes = serialize_checkpoint(sample_records(3));
  for (size_t cut = 0; cut < bytes.size(); ++cut)
    CHECK_THROWS_AS(parse_checkpoint(bytes.data(), cut), std::runtime_error);
}

TEST_CASE("corrupt magic, alien version, and trailing bytes are refused") {
  std::vector<uint8_t> bytes = serialize_checkpoint(sample_records(4));
  auto run = [&](const std::vector<uint8_t>& b) { return parse_checkpoint(b.data(), b.size()); };
  CHECK_NOTHROW(run(bytes));
  std::vector<uint8_t> bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_WITH_AS(run(bad), doctest::Contains("magic"), std::runtime_error);
  bad = bytes;
  bad[4] = 0x7f;
  CHECK_THROWS_WITH_AS(run(bad), doctest::Contains("version"), std::runtime_error);
  bad = bytes;
  bad.push_back(0);
  CHECK_THROWS_WITH_AS(run(bad), doctest::Contains("trailing"), std::runtime_error);
}

TEST_CASE("duplicate record names are rejected on both sides") {
  NamedTensors dup;
  dup.emplace_back("w", Tensor({1}, {0.0f}));
  dup.emplace_back("w", Tensor({1}, {1.0f}));
  CHECK_THROWS_AS(serialize_checkpoint(dup), std::invalid_argument);

  NamedTensors one;
  one.emplace_back("w", Tensor({1}, {0.0f}));
  std::vector<uint8_t> bytes = serialize_checkpoint(one);
  // double the record by hand: bump the count and append the record bytes
  std::vector<uint8_t> two(bytes.begin(), bytes.end());
  two[6] = 2;
  two.insert(two.end(), bytes.begin() + 10, bytes.end());
  CHECK_THROWS_WITH_AS(parse_checkpoint(two.data(), two.size()), doctest::Contains("duplicate"),
                       std::runtime_error);
}

TEST_CASE("fnv1a64 matches the reference test vectors") {
  CHECK(fnv1a64(nullptr, 0) == 0xcbf29ce484222325ull);
  const uint8_t a[] = {'a'};
  CHECK(fnv1a64(a, 1) == 0xaf63dc4c8601ec8cull);
  const uint8_t foobar[] = {'f', 'o', 'o', 'b', 'a', 'r'};
  CHECK(fnv1a64(foobar, 6) == 0x85944171f73967e8ull);
}

TEST_CASE("the container hash pins every parameter bit") {
  NamedTensors r = sample_records(5);
  const uint64_t h0 = checkpoint_hash(r);
  CHECK(checkpoint_hash(sample_records(5)) == h0);
  r[2].second[7] = std::nextafter(r[2].second[7], 1e9f);
  CHECK(checkpoint_hash(r) != h0);
}

TEST_CASE("checkpoint files round-trip through disk") {
  const char* path = "ckpt_roundtrip.utvc";
  const NamedTensors r = sample_records(6);
  save_checkpoint(path, r);
  const NamedTensors back = load_checkpoint(path);
  REQUIRE(back.size() == r.size());
  for (size_t i = 0; i < r.size(); ++i) CHECK(bit_equal(back[i].second, r[i].second));
  std::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
}

TEST_CASE("model init is deterministic in the seed") {
  Model a = init_model(tiny_model_cfg(), 7);
  Model b = init_model(tiny_model_cfg(), 7);
  Model c = init_model(tiny_model_cfg(), 8);
  CHECK(models_bit_equal(a, b));
  CHECK(!models_bit_equal(a, c));
}

TEST_CASE("named tensors enumerate each block once under unique names") {
  Model dct = init_model(ModelConfig{}, 1);
  Model conv = init_model(tiny_model_cfg(), 1);
  auto nd = named_tensors(dct);
  auto nc = named_tensors(conv);
  // per side the mixture holds 4 router + 4 per expert tensors
  const size_t qc_dct = 4 + 4 * 6, qc_conv = 4 + 4 * 3;
  CHECK(nd.size() == 2 * qc_dct + 11 + 26 + 1);
  CHECK(nc.size() == 8 + 2 * qc_conv + 11 + 26 + 1);
  std::set<std::string> names;
  for (auto& [n, t] : nc) names.insert(n);
  CHECK(names.size() == nc.size());
}

TEST_CASE("a model survives the save/load cycle with its hash intact") {
  for (bool conv : {false, true}) {
    Model m = init_model(conv ? tiny_model_cfg() : ModelConfig{}, 42);
    const char* path = "model_roundtrip.utvc";
    save_model(path, m);
    Model back = load_model(path);
    std::remove(path);
    CHECK(models_bit_equal(m, back));
    CHECK(model_hash(back) == model_hash(m));
    CHECK(back.cfg.transform.kind == m.cfg.transform.kind);
    CHECK(back.cfg.qcmoe.experts == m.cfg.qcmoe.experts);
    CHECK(back.cfg.align.offsets == m.cfg.align.offsets);
  }
}

TEST_CASE("model loading refuses mangled record sets") {
  Model m = init_model(tiny_model_cfg(), 9);
  NamedTensors good = model_records(m);
  CHECK_NOTHROW(model_from_records(good));

  NamedTensors renamed = good;
  renamed[3].first += "_stray";
  CHECK_THROWS_WITH_AS(model_from_records(renamed), doctest::Contains("unknown"),
                       std::runtime_error);

  NamedTensors missing = good;
  missing.pop_back();
  CHECK_THROWS_WITH_AS(model_from_records(missing), doctest::Contains("missing"),
                       std::runtime_error);

  NamedTensors reshaped = good;
  reshaped[5].second = Tensor({1}, {0.0f});
  CHECK_THROWS_WITH_AS(model_from_records(reshaped), doctest::Contains("shape"),
                       std::runtime_error);

  NamedTensors headless(good.begin() + 1, good.end());
  CHECK_THROWS_AS(model_from_records(headless), std::runtime_error);
}

TEST_CASE("mismatched channel widths across blocks are rejected") {
  ModelConfig c;
  c.qcmoe.channels = 16;  // BlockDct p=4 emits 48
  CHECK_THROWS_AS(init_model(c, 1), std::invalid_argument);
}

TEST_CASE("quality anchors open at half, one, two, and four") {
  Model m = init_model(ModelConfig{}, 3);
  const float want[4] = {0.5f, 1.0f, 2.0f, 4.0f};
  for (int i = 1; i <= 4; ++i) {
    Tensor lq = quality_logq(m, {i, i, 1.0f});
    REQUIRE(lq.numel() == 48);
    for (int64_t c = 0; c < lq.numel(); ++c)
      CHECK(std::exp(lq[c]) == doctest::Approx(want[i - 1]).epsilon(1e-6));
  }
}

TEST_CASE("quality interpolation blends anchors in the log domain") {
  Model m = init_model(ModelConfig{}, 3);
  Tensor q1 = quality_logq(m, {1, 1, 1.0f});
  Tensor q4 = quality_logq(m, {4, 4, 1.0f});
  Tensor mid = quality_logq(m, {1, 4, 0.5f});
  for (int64_t c = 0; c < mid.numel(); ++c)
    CHECK(mid[c] == doctest::Approx(0.5f * q1[c] + 0.5f * q4[c]).epsilon(1e-7));
  // l = 1 is all first anchor, l = 0 all second
  CHECK(bit_equal(quality_logq(m, {1, 4, 1.0f}), q1));
  CHECK(bit_equal(quality_logq(m, {1, 4, 0.0f}), q4));
  CHECK_THROWS_AS(quality_logq(m, {0, 4, 0.5f}), std::invalid_argument);
  CHECK_THROWS_AS(quality_logq(m, {1, 5, 0.5f}), std::invalid_argument);
  CHECK_THROWS_AS(quality_logq(m, {1, 4, 1.5f}), std::invalid_argument);
}
