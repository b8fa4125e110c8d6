#include "utvc/motion.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "utvc/kernels.hpp"

namespace utvc {

namespace {

struct Plane {
  std::vector<float> v;
  int h = 0, w = 0;
  float at(int x, int y) const {
    x = std::clamp(x, 0, w - 1);
    y = std::clamp(y, 0, h - 1);
    return v[static_cast<size_t>(y) * w + x];
  }
};

Plane intensity(const Tensor& f) {
  Plane p;
  p.h = f.dim(1), p.w = f.dim(2);
  const int64_t n = static_cast<int64_t>(p.h) * p.w;
  p.v.assign(static_cast<size_t>(n), 0.0f);
  for (int ch = 0; ch < f.dim(0); ++ch)
    for (int64_t i = 0; i < n; ++i) p.v[static_cast<size_t>(i)] += f[ch * n + i];
  const float inv = 1.0f / static_cast<float>(f.dim(0));
  for (auto& x : p.v) x *= inv;
  return p;
}

Plane down2(const Plane& s) {
  Plane d;
  d.h = (s.h + 1) / 2;
  d.w = (s.w + 1) / 2;
  d.v.resize(static_cast<size_t>(d.h) * d.w);
  for (int y = 0; y < d.h; ++y)
    for (int x = 0; x < d.w; ++x)
      d.v[static_cast<size_t>(y) * d.w + x] =
          0.25f * (s.at(2 * x, 2 * y) + s.at(2 * x + 1, 2 * y) + s.at(2 * x, 2 * y + 1) +
                   s.at(2 * x + 1, 2 * y + 1));
  return d;
}

struct Cand {
  double cost;
  float dx, dy;
};

// near-flat regions make the raw SAD landscape a lottery; a small
// displacement cost anchors those blocks to the smallest motion
constexpr double kFlowLambda = 0.01;

double disp_cost(float dx, float dy) {
  return kFlowLambda * (std::abs(static_cast<double>(dx)) + std::abs(static_cast<double>(dy)));
}

// candidates may read a little past the frame (the warp clamps the same
// way), but a block sampled far outside is a constant patch that
// mean-removed costs love; reject those outright
constexpr int kFlowMargin = 4;

bool within_margin(int x0, int y0, int bw, int bh, float dx, float dy, int w, int h) {
  const int xlo = static_cast<int>(std::floor(static_cast<double>(x0) + dx));
  const int ylo = static_cast<int>(std::floor(static_cast<double>(y0) + dy));
  const int xhi = static_cast<int>(std::floor(static_cast<double>(x0 + bw - 1) + dx)) + 1;
  const int yhi = static_cast<int>(std::floor(static_cast<double>(y0 + bh - 1) + dy)) + 1;
  return xlo >= -kFlowMargin && ylo >= -kFlowMargin && xhi <= w - 1 + kFlowMargin &&
         yhi <= h - 1 + kFlowMargin;
}

// smaller displacement first, then smaller dx, then larger dy
bool better(const Cand& a, const Cand& b) {
  if (a.cost != b.cost) return a.cost < b.cost;
  const float la = std::abs(a.dx) + std::abs(a.dy);
  const float lb = std::abs(b.dx) + std::abs(b.dy);
  if (la != lb) return la < lb;
  if (a.dx != b.dx) return a.dx < b.dx;
  return a.dy > b.dy;
}

// mean-removed SAD: a global brightness change must not look like motion,
// and without the removal a clamped out-of-frame constant near the current
// block's mean scores better than the true displacement
double block_sad(const Plane& cur, const Plane& ref, int x0, int y0, int bw, int bh, float dx,
                 float dy) {
  float r[kFlowBlock * kFlowBlock];
  double sc = 0.0, sr = 0.0;
  int i = 0;
  if (dx == std::floor(dx) && dy == std::floor(dy)) {
    const int ix = static_cast<int>(dx), iy = static_cast<int>(dy);
    for (int y = y0; y < y0 + bh; ++y)
      for (int x = x0; x < x0 + bw; ++x) r[i++] = ref.at(x + ix, y + iy);
  } else {
    for (int y = y0; y < y0 + bh; ++y)
      for (int x = x0; x < x0 + bw; ++x)
        r[i++] = kernels::sample4(ref.v.data(), ref.h, ref.w, static_cast<float>(x) + dx,
                                  static_cast<float>(y) + dy);
  }
  i = 0;
  for (int y = y0; y < y0 + bh; ++y)
    for (int x = x0; x < x0 + bw; ++x) {
      sc += cur.v[static_cast<size_t>(y) * cur.w + x];
      sr += r[i++];
    }
  const double shift = (sc - sr) / (static_cast<double>(bw) * bh);
  double s = 0.0;
  i = 0;
  for (int y = y0; y < y0 + bh; ++y)
    for (int x = x0; x < x0 + bw; ++x)
      s += std::abs(cur.v[static_cast<size_t>(y) * cur.w + x] - r[i++] - shift);
  return s;
}

int blocks_across(int extent) { return (extent + kFlowBlock - 1) / kFlowBlock; }

// one integer search level; seeds come from the coarser level, doubled
void search_blocks(const Plane& cur, const Plane& ref, const std::vector<float>* seedx,
                   const std::vector<float>* seedy, int seed_nbx, int range,
                   std::vector<float>& outx, std::vector<float>& outy) {
  const int nbx = blocks_across(cur.w), nby = blocks_across(cur.h);
  outx.assign(static_cast<size_t>(nbx) * nby, 0.0f);
  outy.assign(static_cast<size_t>(nbx) * nby, 0.0f);
#pragma omp parallel for schedule(static)
  for (int b = 0; b < nbx * nby; ++b) {
    const int bi = b / nbx, bj = b % nbx;
    const int x0 = bj * kFlowBlock, y0 = bi * kFlowBlock;
    const int bw = std::min(kFlowBlock, cur.w - x0), bh = std::min(kFlowBlock, cur.h - y0);
    float sx = 0.0f, sy = 0.0f;
    if (seedx) {
      // the halved grid never has fewer than ceil(n/2) blocks, so this index
      // stays in range
      const size_t pb = static_cast<size_t>(bi / 2) * seed_nbx + bj / 2;
      sx = 2.0f * (*seedx)[pb];
      sy = 2.0f * (*seedy)[pb];
    }
    Cand best{0.0, 0.0f, 0.0f};
    bool first = true;
    auto scan = [&](float cx, float cy) {
      for (int ddy = -range; ddy <= range; ++ddy)
        for (int ddx = -range; ddx <= range; ++ddx) {
          const float dx = cx + static_cast<float>(ddx), dy = cy + static_cast<float>(ddy);
          if (!within_margin(x0, y0, bw, bh, dx, dy, cur.w, cur.h)) continue;
          const Cand c{block_sad(cur, ref, x0, y0, bw, bh, dx, dy) + disp_cost(dx, dy), dx, dy};
          if (first || better(c, best)) best = c, first = false;
        }
    };
    scan(sx, sy);
    // a bad seed from a near-flat coarser level must not strand the block,
    // so every level also scans a window anchored at zero; the zero window
    // always keeps (0,0) itself, so some candidate always survives
    if (sx != 0.0f || sy != 0.0f) scan(0.0f, 0.0f);
    outx[static_cast<size_t>(b)] = best.dx;
    outy[static_cast<size_t>(b)] = best.dy;
  }
}

void quarter_pel_refine(const Plane& cur, const Plane& ref, std::vector<float>& fx,
                        std::vector<float>& fy) {
  const int nbx = blocks_across(cur.w), nby = blocks_across(cur.h);
#pragma omp parallel for schedule(static)
  for (int b = 0; b < nbx * nby; ++b) {
    const int bi = b / nbx, bj = b % nbx;
    const int x0 = bj * kFlowBlock, y0 = bi * kFlowBlock;
    const int bw = std::min(kFlowBlock, cur.w - x0), bh = std::min(kFlowBlock, cur.h - y0);
    Cand best{0.0, 0.0f, 0.0f};
    bool first = true;
    for (int ddy = -3; ddy <= 3; ++ddy)
      for (int ddx = -3; ddx <= 3; ++ddx) {
        const float dx = fx[static_cast<size_t>(b)] + 0.25f * static_cast<float>(ddx);
        const float dy = fy[static_cast<size_t>(b)] + 0.25f * static_cast<float>(ddy);
        // the incoming integer candidate stays eligible even at the margin
        if ((ddx || ddy) && !within_margin(x0, y0, bw, bh, dx, dy, cur.w, cur.h)) continue;
        const Cand c{block_sad(cur, ref, x0, y0, bw, bh, dx, dy) + disp_cost(dx, dy), dx, dy};
        if (first || better(c, best)) best = c, first = false;
      }
    fx[static_cast<size_t>(b)] = best.dx;
    fy[static_cast<size_t>(b)] = best.dy;
  }
}

Tensor expand_blocks(const std::vector<float>& fx, const std::vector<float>& fy, int h, int w) {
  const int nbx = blocks_across(w);
  Tensor out(std::vector<int>{2, h, w});
  const int64_t n = static_cast<int64_t>(h) * w;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const size_t b = static_cast<size_t>(y / kFlowBlock) * nbx + x / kFlowBlock;
      out[static_cast<int64_t>(y) * w + x] = fx[b];
      out[n + static_cast<int64_t>(y) * w + x] = fy[b];
    }
  return out;
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

uint32_t get_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 |
         static_cast<uint32_t>(p[2]) << 16 | static_cast<uint32_t>(p[3]) << 24;
}

}  // namespace

FlowField estimate_flow(const Tensor& cur, const Tensor& ref) {
  if (cur.rank() != 3 || ref.rank() != 3 || cur.dim(0) != ref.dim(0) ||
      cur.dim(1) != ref.dim(1) || cur.dim(2) != ref.dim(2))
    throw std::invalid_argument("estimate_flow: extent mismatch");
  const Plane c0 = intensity(cur), r0 = intensity(ref);
  const Plane c1 = down2(c0), r1 = down2(r0);
  const Plane c2 = down2(c1), r2 = down2(r1);
  std::vector<float> x2, y2, x1, y1, x0, y0;
  search_blocks(c2, r2, nullptr, nullptr, 0, 8, x2, y2);
  search_blocks(c1, r1, &x2, &y2, blocks_across(c2.w), 2, x1, y1);
  search_blocks(c0, r0, &x1, &y1, blocks_across(c1.w), 2, x0, y0);
  quarter_pel_refine(c0, r0, x0, y0);
  return {expand_blocks(x0, y0, c0.h, c0.w), FlowField::Grid::pixel};
}

std::pair<Bitchunk, FlowField> code_flow(const FlowField& v) {
  if (v.grid != FlowField::Grid::pixel)
    throw std::invalid_argument("code_flow: pixel-grid flow required");
  const int h = v.data.dim(1), w = v.data.dim(2);
  const int nbx = blocks_across(w), nby = blocks_across(h);
  const int64_t n = static_cast<int64_t>(h) * w;
  // quarter-pel block means, both components
  std::vector<std::vector<int32_t>> k(2, std::vector<int32_t>(static_cast<size_t>(nbx) * nby));
  for (int comp = 0; comp < 2; ++comp)
    for (int bi = 0; bi < nby; ++bi)
      for (int bj = 0; bj < nbx; ++bj) {
        const int x0 = bj * kFlowBlock, y0 = bi * kFlowBlock;
        const int bw = std::min(kFlowBlock, w - x0), bh = std::min(kFlowBlock, h - y0);
        double mean = 0.0;
        for (int y = y0; y < y0 + bh; ++y)
          for (int x = x0; x < x0 + bw; ++x)
            mean += v.data[comp * n + static_cast<int64_t>(y) * w + x];
        mean /= static_cast<double>(bw) * bh;
        k[static_cast<size_t>(comp)][static_cast<size_t>(bi) * nbx + bj] =
            static_cast<int32_t>(std::llround(mean * 4.0));
      }
  uint32_t qcdf[kNumSymbols + 1];
  build_symbol_table(0.0, kFlowSigma, qcdf);
  RangeEncoder rc;
  for (int comp = 0; comp < 2; ++comp)
    for (int bi = 0; bi < nby; ++bi)
      for (int bj = 0; bj < nbx; ++bj) {
        const int32_t cur = k[static_cast<size_t>(comp)][static_cast<size_t>(bi) * nbx + bj];
        const int32_t pred =
            bj ? k[static_cast<size_t>(comp)][static_cast<size_t>(bi) * nbx + bj - 1] : 0;
        encode_symbol(rc, cur - pred, qcdf);
      }
  std::vector<float> fx(k[0].size()), fy(k[1].size());
  for (size_t i = 0; i < fx.size(); ++i) {
    fx[i] = static_cast<float>(k[0][i]) * 0.25f;
    fy[i] = static_cast<float>(k[1][i]) * 0.25f;
  }
  return {rc.finish(), FlowField{expand_blocks(fx, fy, h, w), FlowField::Grid::pixel}};
}

FlowField decode_flow(const uint8_t* bytes, size_t n, int h, int w) {
  const int nbx = blocks_across(w), nby = blocks_across(h);
  uint32_t qcdf[kNumSymbols + 1];
  build_symbol_table(0.0, kFlowSigma, qcdf);
  RangeDecoder rd(bytes, n);
  std::vector<std::vector<int32_t>> k(2, std::vector<int32_t>(static_cast<size_t>(nbx) * nby));
  for (int comp = 0; comp < 2; ++comp)
    for (int bi = 0; bi < nby; ++bi)
      for (int bj = 0; bj < nbx; ++bj) {
        const int32_t pred =
            bj ? k[static_cast<size_t>(comp)][static_cast<size_t>(bi) * nbx + bj - 1] : 0;
        k[static_cast<size_t>(comp)][static_cast<size_t>(bi) * nbx + bj] =
            pred + decode_symbol(rd, qcdf);
      }
  if (rd.overrun() > 4) throw std::runtime_error("flow chunk truncated");
  std::vector<float> fx(k[0].size()), fy(k[1].size());
  for (size_t i = 0; i < fx.size(); ++i) {
    fx[i] = static_cast<float>(k[0][i]) * 0.25f;
    fy[i] = static_cast<float>(k[1][i]) * 0.25f;
  }
  return {expand_blocks(fx, fy, h, w), FlowField::Grid::pixel};
}

Tensor warp(const Tensor& ref, const FlowField& vhat) {
  if (vhat.data.dim(1) != ref.dim(1) || vhat.data.dim(2) != ref.dim(2))
    throw std::invalid_argument("warp: extent mismatch");
  Tensor out(ref.shape());
  kernels::warp_bilinear(ref.data(), ref.dim(0), ref.dim(1), ref.dim(2), vhat.data.data(),
                         out.data());
  return out;
}

FlowField downsample_flow(const FlowField& vhat, int p) {
  if (vhat.grid != FlowField::Grid::pixel)
    throw std::invalid_argument("downsample_flow: pixel-grid flow required");
  const int h = vhat.data.dim(1), w = vhat.data.dim(2);
  if (p < 1 || h % p || w % p)
    throw std::invalid_argument("downsample_flow: extents must divide the stride");
  Tensor out(std::vector<int>{2, h / p, w / p});
  kernels::avgpool(vhat.data.data(), 2, h, w, p, out.data());
  const float inv = 1.0f / static_cast<float>(p);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= inv;
  return {std::move(out), FlowField::Grid::latent};
}

void write_flo2(const std::string& path, const FlowField& f) {
  std::vector<uint8_t> buf;
  buf.insert(buf.end(), {'F', 'L', 'O', '2'});
  const int h = f.data.dim(1), w = f.data.dim(2);
  put_u32(buf, static_cast<uint32_t>(w));
  put_u32(buf, static_cast<uint32_t>(h));
  const int64_t n = static_cast<int64_t>(h) * w;
  for (int64_t i = 0; i < n; ++i) {
    put_u32(buf, std::bit_cast<uint32_t>(f.data[i]));
    put_u32(buf, std::bit_cast<uint32_t>(f.data[n + i]));
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("flo2: cannot open " + path);
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!os) throw std::runtime_error("flo2: write failed " + path);
}

FlowField read_flo2(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("flo2: cannot open " + path);
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "FLO2", 4) != 0)
    throw std::runtime_error("flo2: bad header in " + path);
  const uint32_t w = get_u32(buf.data() + 4), h = get_u32(buf.data() + 8);
  const uint64_t need = 12ull + 8ull * w * h;
  if (w == 0 || h == 0 || w > 1u << 16 || h > 1u << 16 || buf.size() != need)
    throw std::runtime_error("flo2: truncated or oversized " + path);
  Tensor d(std::vector<int>{2, static_cast<int>(h), static_cast<int>(w)});
  const int64_t n = static_cast<int64_t>(h) * w;
  for (int64_t i = 0; i < n; ++i) {
    d[i] = std::bit_cast<float>(get_u32(buf.data() + 12 + 8 * i));
    d[n + i] = std::bit_cast<float>(get_u32(buf.data() + 16 + 8 * i));
  }
  return {std::move(d), FlowField::Grid::pixel};
}

}  // namespace utvc
