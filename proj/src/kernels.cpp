#include "utvc/kernels.hpp"

#include <cmath>
#include <cstring>

namespace utvc::kernels {

namespace {

constexpr int64_t kOmpThreshold = 1 << 12;

inline bool use_omp(int64_t work) {
#ifdef _OPENMP
  return work >= kOmpThreshold;
#else
  (void)work;
  return false;
#endif
}

inline float conv_out_elem(const float* x, const float* w, const float* b, const Conv2dSpec& s,
                           int oc, int oy, int ox) {
  const int cpg = s.in_c / s.groups;
  const int g = oc / (s.out_c / s.groups);
  const int pt = s.pad_top(), pl = s.pad_left();
  float acc = b ? b[oc] : 0.0f;
  const float* wk = w + static_cast<int64_t>(oc) * cpg * s.kh * s.kw;
  for (int c = 0; c < cpg; ++c) {
    const float* xp = x + static_cast<int64_t>(g * cpg + c) * s.in_h * s.in_w;
    for (int ky = 0; ky < s.kh; ++ky) {
      const int iy = oy * s.stride - pt + ky;
      if (iy < 0 || iy >= s.in_h) continue;
      for (int kx = 0; kx < s.kw; ++kx) {
        const int ix = ox * s.stride - pl + kx;
        if (ix < 0 || ix >= s.in_w) continue;
        acc += xp[iy * s.in_w + ix] * wk[(c * s.kh + ky) * s.kw + kx];
      }
    }
  }
  return acc;
}

inline float conv_dx_elem(const float* dy, const float* w, const Conv2dSpec& s, int ci, int iy,
                          int ix) {
  const int cpg = s.in_c / s.groups;
  const int ocpg = s.out_c / s.groups;
  const int g = ci / cpg;
  const int c = ci - g * cpg;
  const int pt = s.pad_top(), pl = s.pad_left();
  const int oh = s.out_h(), ow = s.out_w();
  float acc = 0.0f;
  for (int oo = 0; oo < ocpg; ++oo) {
    const int oc = g * ocpg + oo;
    const float* dyp = dy + static_cast<int64_t>(oc) * oh * ow;
    const float* wk = w + static_cast<int64_t>(oc) * cpg * s.kh * s.kw;
    for (int ky = 0; ky < s.kh; ++ky) {
      const int t = iy + pt - ky;
      if (t < 0 || t % s.stride) continue;
      const int oy = t / s.stride;
      if (oy >= oh) continue;
      for (int kx = 0; kx < s.kw; ++kx) {
        const int u = ix + pl - kx;
        if (u < 0 || u % s.stride) continue;
        const int ox = u / s.stride;
        if (ox >= ow) continue;
        acc += dyp[oy * ow + ox] * wk[(c * s.kh + ky) * s.kw + kx];
      }
    }
  }
  return acc;
}

inline float conv_dw_elem(const float* x, const float* dy, const Conv2dSpec& s, int oc, int c,
                          int ky, int kx) {
  const int cpg = s.in_c / s.groups;
  const int g = oc / (s.out_c / s.groups);
  const int pt = s.pad_top(), pl = s.pad_left();
  const int oh = s.out_h(), ow = s.out_w();
  const float* dyp = dy + static_cast<int64_t>(oc) * oh * ow;
  const float* xp = x + static_cast<int64_t>(g * cpg + c) * s.in_h * s.in_w;
  float acc = 0.0f;
  for (int oy = 0; oy < oh; ++oy) {
    const int iy = oy * s.stride - pt + ky;
    if (iy < 0 || iy >= s.in_h) continue;
    for (int ox = 0; ox < ow; ++ox) {
      const int ix = ox * s.stride - pl + kx;
      if (ix < 0 || ix >= s.in_w) continue;
      acc += dyp[oy * ow + ox] * xp[iy * s.in_w + ix];
    }
  }
  return acc;
}

}  // namespace

void conv2d_serial(const float* x, const float* w, const float* b, float* y, const Conv2dSpec& s) {
  const int oh = s.out_h(), ow = s.out_w();
  for (int oc = 0; oc < s.out_c; ++oc)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox)
        y[(static_cast<int64_t>(oc) * oh + oy) * ow + ox] = conv_out_elem(x, w, b, s, oc, oy, ox);
}

void conv2d_omp(const float* x, const float* w, const float* b, float* y, const Conv2dSpec& s) {
  const int oh = s.out_h(), ow = s.out_w();
  const int64_t total = static_cast<int64_t>(s.out_c) * oh * ow;
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < total; ++i) {
    const int oc = static_cast<int>(i / (static_cast<int64_t>(oh) * ow));
    const int r = static_cast<int>(i % (static_cast<int64_t>(oh) * ow));
    y[i] = conv_out_elem(x, w, b, s, oc, r / ow, r % ow);
  }
}

void conv2d(const float* x, const float* w, const float* b, float* y, const Conv2dSpec& s) {
  const int64_t work = static_cast<int64_t>(s.out_c) * s.out_h() * s.out_w() * s.kh * s.kw *
                       (s.in_c / s.groups);
  use_omp(work) ? conv2d_omp(x, w, b, y, s) : conv2d_serial(x, w, b, y, s);
}

void conv2d_bwd_data_serial(const float* dy, const float* w, float* dx, const Conv2dSpec& s) {
  for (int ci = 0; ci < s.in_c; ++ci)
    for (int iy = 0; iy < s.in_h; ++iy)
      for (int ix = 0; ix < s.in_w; ++ix)
        dx[(static_cast<int64_t>(ci) * s.in_h + iy) * s.in_w + ix] +=
            conv_dx_elem(dy, w, s, ci, iy, ix);
}

void conv2d_bwd_data_omp(const float* dy, const float* w, float* dx, const Conv2dSpec& s) {
  const int64_t total = static_cast<int64_t>(s.in_c) * s.in_h * s.in_w;
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < total; ++i) {
    const int ci = static_cast<int>(i / (static_cast<int64_t>(s.in_h) * s.in_w));
    const int r = static_cast<int>(i % (static_cast<int64_t>(s.in_h) * s.in_w));
    dx[i] += conv_dx_elem(dy, w, s, ci, r / s.in_w, r % s.in_w);
  }
}

void conv2d_bwd_data(const float* dy, const float* w, float* dx, const Conv2dSpec& s) {
  const int64_t work = static_cast<int64_t>(s.in_c) * s.in_h * s.in_w * s.kh * s.kw;
  use_omp(work) ? conv2d_bwd_data_omp(dy, w, dx, s) : conv2d_bwd_data_serial(dy, w, dx, s);
}

void conv2d_bwd_weights_serial(const float* x, const float* dy, float* dw, float* db,
                               const Conv2dSpec& s) {
  const int cpg = s.in_c / s.groups;
  if (dw)
    for (int oc = 0; oc < s.out_c; ++oc)
      for (int c = 0; c < cpg; ++c)
        for (int ky = 0; ky < s.kh; ++ky)
          for (int kx = 0; kx < s.kw; ++kx)
            dw[((static_cast<int64_t>(oc) * cpg + c) * s.kh + ky) * s.kw + kx] +=
                conv_dw_elem(x, dy, s, oc, c, ky, kx);
  if (db) {
    const int oh = s.out_h(), ow = s.out_w();
    for (int oc = 0; oc < s.out_c; ++oc) {
      float acc = 0.0f;
      const float* dyp = dy + static_cast<int64_t>(oc) * oh * ow;
      for (int i = 0; i < oh * ow; ++i) acc += dyp[i];
      db[oc] += acc;
    }
  }
}

void conv2d_bwd_weights_omp(const float* x, const float* dy, float* dw, float* db,
                            const Conv2dSpec& s) {
  const int cpg = s.in_c / s.groups;
  const int64_t total = static_cast<int64_t>(s.out_c) * cpg * s.kh * s.kw;
  if (dw) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < total; ++i) {
      const int kx = static_cast<int>(i % s.kw);
      const int ky = static_cast<int>((i / s.kw) % s.kh);
      const int c = static_cast<int>((i / (s.kw * s.kh)) % cpg);
      const int oc = static_cast<int>(i / (static_cast<int64_t>(s.kw) * s.kh * cpg));
      dw[i] += conv_dw_elem(x, dy, s, oc, c, ky, kx);
    }
  }
  if (db) {
    const int oh = s.out_h(), ow = s.out_w();
#pragma omp parallel for schedule(static)
    for (int oc = 0; oc < s.out_c; ++oc) {
      float acc = 0.0f;
      const float* dyp = dy + static_cast<int64_t>(oc) * oh * ow;
      for (int i = 0; i < oh * ow; ++i) acc += dyp[i];
      db[oc] += acc;
    }
  }
}

void conv2d_bwd_weights(const float* x, const float* dy, float* dw, float* db,
                        const Conv2dSpec& s) {
  const int64_t work =
      static_cast<int64_t>(s.out_c) * (s.in_c / s.groups) * s.kh * s.kw * s.out_h() * s.out_w();
  use_omp(work) ? conv2d_bwd_weights_omp(x, dy, dw, db, s)
                : conv2d_bwd_weights_serial(x, dy, dw, db, s);
}

void matmul_serial(const float* a, const float* b, float* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      float acc = 0.0f;
      for (int t = 0; t < k; ++t) acc += a[static_cast<int64_t>(i) * k + t] * b[static_cast<int64_t>(t) * n + j];
      c[static_cast<int64_t>(i) * n + j] = acc;
    }
}

void matmul_omp(const float* a, const float* b, float* c, int m, int k, int n) {
#pragma omp parallel for schedule(static)
  for (int64_t ij = 0; ij < static_cast<int64_t>(m) * n; ++ij) {
    const int i = static_cast<int>(ij / n), j = static_cast<int>(ij % n);
    float acc = 0.0f;
    for (int t = 0; t < k; ++t) acc += a[static_cast<int64_t>(i) * k + t] * b[static_cast<int64_t>(t) * n + j];
    c[ij] = acc;
  }
}

void matmul(const float* a, const float* b, float* c, int m, int k, int n) {
  use_omp(static_cast<int64_t>(m) * n * k) ? matmul_omp(a, b, c, m, k, n)
                                           : matmul_serial(a, b, c, m, k, n);
}

void matmul_nt(const float* a, const float* b, float* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      float acc = 0.0f;
      for (int t = 0; t < k; ++t) acc += a[static_cast<int64_t>(i) * k + t] * b[static_cast<int64_t>(j) * k + t];
      c[static_cast<int64_t>(i) * n + j] = acc;
    }
}

void matmul_tn(const float* a, const float* b, float* c, int m, int k, int n) {
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < n; ++j) {
      float acc = 0.0f;
      for (int t = 0; t < m; ++t) acc += a[static_cast<int64_t>(t) * k + i] * b[static_cast<int64_t>(t) * n + j];
      c[static_cast<int64_t>(i) * n + j] = acc;
    }
}

namespace {
inline void softmax_row(const float* x, float* y, int cols) {
  float m = x[0];
  for (int i = 1; i < cols; ++i) m = x[i] > m ? x[i] : m;
  float s = 0.0f;
  for (int i = 0; i < cols; ++i) {
    y[i] = std::exp(x[i] - m);
    s += y[i];
  }
  const float inv = 1.0f / s;
  for (int i = 0; i < cols; ++i) y[i] *= inv;
}
}  // namespace

void softmax_rows_serial(const float* x, float* y, int64_t rows, int cols) {
  for (int64_t r = 0; r < rows; ++r) softmax_row(x + r * cols, y + r * cols, cols);
}

void softmax_rows_omp(const float* x, float* y, int64_t rows, int cols) {
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < rows; ++r) softmax_row(x + r * cols, y + r * cols, cols);
}

void softmax_rows(const float* x, float* y, int64_t rows, int cols) {
  use_omp(rows * cols) ? softmax_rows_omp(x, y, rows, cols) : softmax_rows_serial(x, y, rows, cols);
}

namespace {
inline void bil_row(const float* feat, int c, int h, int w, const float* loc, int64_t p, float* out,
                    int64_t i) {
  const Bil b = bil_setup(loc[2 * i], loc[2 * i + 1], w, h);
  const float w00 = (1.0f - b.fy) * (1.0f - b.fx), w01 = (1.0f - b.fy) * b.fx;
  const float w10 = b.fy * (1.0f - b.fx), w11 = b.fy * b.fx;
  (void)p;
  for (int ch = 0; ch < c; ++ch) {
    const float* pl = feat + static_cast<int64_t>(ch) * h * w;
    out[i * c + ch] = w00 * pl[b.y0 * w + b.x0] + w01 * pl[b.y0 * w + b.x1] +
                      w10 * pl[b.y1 * w + b.x0] + w11 * pl[b.y1 * w + b.x1];
  }
}
}  // namespace

void bilinear_gather_serial(const float* feat, int c, int h, int w, const float* loc, int64_t p,
                            float* out) {
  for (int64_t i = 0; i < p; ++i) bil_row(feat, c, h, w, loc, p, out, i);
}

void bilinear_gather_omp(const float* feat, int c, int h, int w, const float* loc, int64_t p,
                         float* out) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < p; ++i) bil_row(feat, c, h, w, loc, p, out, i);
}

void bilinear_gather(const float* feat, int c, int h, int w, const float* loc, int64_t p,
                     float* out) {
  use_omp(p * c) ? bilinear_gather_omp(feat, c, h, w, loc, p, out)
                 : bilinear_gather_serial(feat, c, h, w, loc, p, out);
}

void bilinear_gather_bwd(const float* feat, int c, int h, int w, const float* loc, int64_t p,
                         const float* dout, float* dfeat, float* dloc) {
  if (dfeat) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int ch = 0; ch < c; ++ch) {
      float* dpl = dfeat + static_cast<int64_t>(ch) * h * w;
      for (int64_t i = 0; i < p; ++i) {
        const Bil b = bil_setup(loc[2 * i], loc[2 * i + 1], w, h);
        const float g = dout[i * c + ch];
        dpl[b.y0 * w + b.x0] += (1.0f - b.fy) * (1.0f - b.fx) * g;
        dpl[b.y0 * w + b.x1] += (1.0f - b.fy) * b.fx * g;
        dpl[b.y1 * w + b.x0] += b.fy * (1.0f - b.fx) * g;
        dpl[b.y1 * w + b.x1] += b.fy * b.fx * g;
      }
    }
  }
  if (dloc) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int64_t i = 0; i < p; ++i) {
      const Bil b = bil_setup(loc[2 * i], loc[2 * i + 1], w, h);
      float gx = 0.0f, gy = 0.0f;
      for (int ch = 0; ch < c; ++ch) {
        const float* pl = feat + static_cast<int64_t>(ch) * h * w;
        const float v00 = pl[b.y0 * w + b.x0], v01 = pl[b.y0 * w + b.x1];
        const float v10 = pl[b.y1 * w + b.x0], v11 = pl[b.y1 * w + b.x1];
        const float g = dout[i * c + ch];
        gx += g * ((1.0f - b.fy) * (v01 - v00) + b.fy * (v11 - v10));
        gy += g * ((1.0f - b.fx) * (v10 - v00) + b.fx * (v11 - v01));
      }
      dloc[2 * i] += gx;
      dloc[2 * i + 1] += gy;
    }
  }
}

namespace {
inline void warp_px(const float* img, int c, int h, int w, const float* flow, float* out, int64_t i) {
  const int y = static_cast<int>(i / w), x = static_cast<int>(i % w);
  const float sx = x + flow[i];
  const float sy = y + flow[static_cast<int64_t>(h) * w + i];
  for (int ch = 0; ch < c; ++ch)
    out[static_cast<int64_t>(ch) * h * w + i] =
        sample4(img + static_cast<int64_t>(ch) * h * w, h, w, sx, sy);
}
}  // namespace

void warp_bilinear_serial(const float* img, int c, int h, int w, const float* flow, float* out) {
  for (int64_t i = 0; i < static_cast<int64_t>(h) * w; ++i) warp_px(img, c, h, w, flow, out, i);
}

void warp_bilinear_omp(const float* img, int c, int h, int w, const float* flow, float* out) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < static_cast<int64_t>(h) * w; ++i) warp_px(img, c, h, w, flow, out, i);
}

void warp_bilinear(const float* img, int c, int h, int w, const float* flow, float* out) {
  use_omp(static_cast<int64_t>(c) * h * w) ? warp_bilinear_omp(img, c, h, w, flow, out)
                                           : warp_bilinear_serial(img, c, h, w, flow, out);
}

namespace {
inline void pool_elem(const float* img, int h, int w, int p, float* out, int oh, int ow,
                      int64_t i) {
  const int ch = static_cast<int>(i / (static_cast<int64_t>(oh) * ow));
  const int r = static_cast<int>(i % (static_cast<int64_t>(oh) * ow));
  const int oy = r / ow, ox = r % ow;
  const float* pl = img + static_cast<int64_t>(ch) * h * w;
  float acc = 0.0f;
  for (int dy = 0; dy < p; ++dy)
    for (int dx = 0; dx < p; ++dx) acc += pl[(oy * p + dy) * w + ox * p + dx];
  out[i] = acc / static_cast<float>(p * p);
}
}  // namespace

void avgpool_serial(const float* img, int c, int h, int w, int p, float* out) {
  const int oh = h / p, ow = w / p;
  for (int64_t i = 0; i < static_cast<int64_t>(c) * oh * ow; ++i)
    pool_elem(img, h, w, p, out, oh, ow, i);
}

void avgpool_omp(const float* img, int c, int h, int w, int p, float* out) {
  const int oh = h / p, ow = w / p;
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < static_cast<int64_t>(c) * oh * ow; ++i)
    pool_elem(img, h, w, p, out, oh, ow, i);
}

void avgpool(const float* img, int c, int h, int w, int p, float* out) {
  use_omp(static_cast<int64_t>(c) * h * w) ? avgpool_omp(img, c, h, w, p, out)
                                           : avgpool_serial(img, c, h, w, p, out);
}

namespace {
inline void resize_px(const float* img, int c, int h, int w, int oh, int ow, float* out,
                      int64_t i) {
  const int y = static_cast<int>(i / ow), x = static_cast<int>(i % ow);
  const float sx = (x + 0.5f) * (static_cast<float>(w) / ow) - 0.5f;
  const float sy = (y + 0.5f) * (static_cast<float>(h) / oh) - 0.5f;
  for (int ch = 0; ch < c; ++ch)
    out[static_cast<int64_t>(ch) * oh * ow + i] =
        sample4(img + static_cast<int64_t>(ch) * h * w, h, w, sx, sy);
}
}  // namespace

void resize_bilinear_serial(const float* img, int c, int h, int w, int oh, int ow, float* out) {
  for (int64_t i = 0; i < static_cast<int64_t>(oh) * ow; ++i)
    resize_px(img, c, h, w, oh, ow, out, i);
}

void resize_bilinear_omp(const float* img, int c, int h, int w, int oh, int ow, float* out) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < static_cast<int64_t>(oh) * ow; ++i)
    resize_px(img, c, h, w, oh, ow, out, i);
}

void resize_bilinear(const float* img, int c, int h, int w, int oh, int ow, float* out) {
  use_omp(static_cast<int64_t>(c) * oh * ow) ? resize_bilinear_omp(img, c, h, w, oh, ow, out)
                                             : resize_bilinear_serial(img, c, h, w, oh, ow, out);
}

void resize_bilinear_bwd(const float* g, int c, int h, int w, int oh, int ow, float* dsrc) {
  // scatter per channel; channels are independent so the omp split stays
  // bit-identical to a serial pass
#pragma omp parallel for schedule(static) if (use_omp(static_cast<int64_t>(c) * oh * ow))
  for (int ch = 0; ch < c; ++ch) {
    const float* gp = g + static_cast<int64_t>(ch) * oh * ow;
    float* dp = dsrc + static_cast<int64_t>(ch) * h * w;
    for (int y = 0; y < oh; ++y) {
      const float sy = (y + 0.5f) * (static_cast<float>(h) / oh) - 0.5f;
      for (int x = 0; x < ow; ++x) {
        const float sx = (x + 0.5f) * (static_cast<float>(w) / ow) - 0.5f;
        const Bil b = bil_setup(sx, sy, w, h);
        const float gv = gp[static_cast<int64_t>(y) * ow + x];
        dp[static_cast<int64_t>(b.y0) * w + b.x0] += (1.0f - b.fy) * (1.0f - b.fx) * gv;
        dp[static_cast<int64_t>(b.y0) * w + b.x1] += (1.0f - b.fy) * b.fx * gv;
        dp[static_cast<int64_t>(b.y1) * w + b.x0] += b.fy * (1.0f - b.fx) * gv;
        dp[static_cast<int64_t>(b.y1) * w + b.x1] += b.fy * b.fx * gv;
      }
    }
  }
}

void dct_matrix(int p, float* d) {
  const double pi = 3.14159265358979323846;
  for (int k = 0; k < p; ++k) {
    const double a = k == 0 ? std::sqrt(1.0 / p) : std::sqrt(2.0 / p);
    for (int n = 0; n < p; ++n)
      d[k * p + n] = static_cast<float>(a * std::cos(pi * (2 * n + 1) * k / (2.0 * p)));
  }
}

namespace {
// coeff[v*p+u] of one block: C = D * B * D^T
inline void dct_block(const float* plane, int w, int p, const float* dmat, float* coeff,
                      int64_t nblk, int by, int bx, bool inverse) {
  float tmp[64];  // p <= 8
  const float* src = plane + (static_cast<int64_t>(by) * p) * w + bx * p;
  // tmp = M * B (or M^T * B for inverse), M = dmat
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) {
      float acc = 0.0f;
      for (int t = 0; t < p; ++t) {
        const float m = inverse ? dmat[t * p + i] : dmat[i * p + t];
        acc += m * src[t * w + j];
      }
      tmp[i * p + j] = acc;
    }
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) {
      float acc = 0.0f;
      for (int t = 0; t < p; ++t) {
        const float m = inverse ? dmat[t * p + j] : dmat[j * p + t];
        acc += tmp[i * p + t] * m;
      }
      coeff[(static_cast<int64_t>(i) * p + j) * nblk] = acc;
    }
}

inline void idct_block(const float* coeff, int64_t nblk, int p, const float* dmat, float* plane,
                       int w, int by, int bx) {
  float blk[64], tmp[64];
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) blk[i * p + j] = coeff[(static_cast<int64_t>(i) * p + j) * nblk];
  // B = D^T * C * D
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) {
      float acc = 0.0f;
      for (int t = 0; t < p; ++t) acc += dmat[t * p + i] * blk[t * p + j];
      tmp[i * p + j] = acc;
    }
  float* dst = plane + (static_cast<int64_t>(by) * p) * w + bx * p;
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) {
      float acc = 0.0f;
      for (int t = 0; t < p; ++t) acc += tmp[i * p + t] * dmat[t * p + j];
      dst[i * w + j] = acc;
    }
}
}  // namespace

void dct2_blocks_serial(const float* plane, int h, int w, int p, const float* dmat, float* out) {
  const int bh = h / p, bw = w / p;
  const int64_t nblk = static_cast<int64_t>(bh) * bw;
  for (int by = 0; by < bh; ++by)
    for (int bx = 0; bx < bw; ++bx)
      dct_block(plane, w, p, dmat, out + static_cast<int64_t>(by) * bw + bx, nblk, by, bx, false);
}

void dct2_blocks_omp(const float* plane, int h, int w, int p, const float* dmat, float* out) {
  const int bh = h / p, bw = w / p;
  const int64_t nblk = static_cast<int64_t>(bh) * bw;
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < nblk; ++i)
    dct_block(plane, w, p, dmat, out + i, nblk, static_cast<int>(i / bw), static_cast<int>(i % bw),
              false);
}

void dct2_blocks(const float* plane, int h, int w, int p, const float* dmat, float* out) {
  use_omp(static_cast<int64_t>(h) * w * p) ? dct2_blocks_omp(plane, h, w, p, dmat, out)
                                           : dct2_blocks_serial(plane, h, w, p, dmat, out);
}

void idct2_blocks_serial(const float* coeff, int bh, int bw, int p, const float* dmat,
                         float* plane) {
  const int64_t nblk = static_cast<int64_t>(bh) * bw;
  for (int by = 0; by < bh; ++by)
    for (int bx = 0; bx < bw; ++bx)
      idct_block(coeff + static_cast<int64_t>(by) * bw + bx, nblk, p, dmat, plane, bw * p, by, bx);
}

void idct2_blocks_omp(const float* coeff, int bh, int bw, int p, const float* dmat, float* plane) {
  const int64_t nblk = static_cast<int64_t>(bh) * bw;
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < nblk; ++i)
    idct_block(coeff + i, nblk, p, dmat, plane, bw * p, static_cast<int>(i / bw),
               static_cast<int>(i % bw));
}

void idct2_blocks(const float* coeff, int bh, int bw, int p, const float* dmat, float* plane) {
  use_omp(static_cast<int64_t>(bh) * bw * p * p * p) ? idct2_blocks_omp(coeff, bh, bw, p, dmat, plane)
                                                     : idct2_blocks_serial(coeff, bh, bw, p, dmat, plane);
}

}  // namespace utvc::kernels
