#pragma once
#include <cstdint>

namespace utvc::kernels {

// Low-level float kernels. Every kernel comes as a _serial reference and an
// _omp variant that distributes independent output elements across threads;
// per-element accumulation order is shared, so the two are bit-identical.
// The unsuffixed name dispatches by work size.

struct Conv2dSpec {
  int in_c = 0, in_h = 0, in_w = 0;
  int out_c = 0, kh = 0, kw = 0;
  int stride = 1;
  int groups = 1;
  bool same_pad = true;  // zero padding; false = valid

  int out_h() const { return same_pad ? (in_h + stride - 1) / stride : (in_h - kh) / stride + 1; }
  int out_w() const { return same_pad ? (in_w + stride - 1) / stride : (in_w - kw) / stride + 1; }
  int pad_top() const {
    if (!same_pad) return 0;
    int t = (out_h() - 1) * stride + kh - in_h;
    return t > 0 ? t / 2 : 0;
  }
  int pad_left() const {
    if (!same_pad) return 0;
    int t = (out_w() - 1) * stride + kw - in_w;
    return t > 0 ? t / 2 : 0;
  }
};

void conv2d_serial(const float* x, const float* w, const float* b, float* y, const Conv2dSpec& s);
void conv2d_omp(const float* x, const float* w, const float* b, float* y, const Conv2dSpec& s);
void conv2d(const float* x, const float* w, const float* b, float* y, const Conv2dSpec& s);

void conv2d_bwd_data_serial(const float* dy, const float* w, float* dx, const Conv2dSpec& s);
void conv2d_bwd_data_omp(const float* dy, const float* w, float* dx, const Conv2dSpec& s);
void conv2d_bwd_data(const float* dy, const float* w, float* dx, const Conv2dSpec& s);

// dw accumulation order over output positions is fixed per weight element
void conv2d_bwd_weights_serial(const float* x, const float* dy, float* dw, float* db,
                               const Conv2dSpec& s);
void conv2d_bwd_weights_omp(const float* x, const float* dy, float* dw, float* db,
                            const Conv2dSpec& s);
void conv2d_bwd_weights(const float* x, const float* dy, float* dw, float* db,
                        const Conv2dSpec& s);

// c[m][n] = sum_k a[m][k] * b[k][n]
void matmul_serial(const float* a, const float* b, float* c, int m, int k, int n);
void matmul_omp(const float* a, const float* b, float* c, int m, int k, int n);
void matmul(const float* a, const float* b, float* c, int m, int k, int n);
// c[m][n] = sum_k a[m][k] * b[n][k]   (a times b-transposed)
void matmul_nt(const float* a, const float* b, float* c, int m, int k, int n);
// c[k1][n] = sum_m a[m][k1] * b[m][n] (a-transposed times b)
void matmul_tn(const float* a, const float* b, float* c, int m, int k, int n);

// rows independent; within a row the sum order is fixed
void softmax_rows_serial(const float* x, float* y, int64_t rows, int cols);
void softmax_rows_omp(const float* x, float* y, int64_t rows, int cols);
void softmax_rows(const float* x, float* y, int64_t rows, int cols);

// feat: C x H x W, loc: P rows of (x, y), out: P x C. Edge clamp; at lattice
// points the location derivative is the right-sided one.
void bilinear_gather_serial(const float* feat, int c, int h, int w, const float* loc, int64_t p,
                            float* out);
void bilinear_gather_omp(const float* feat, int c, int h, int w, const float* loc, int64_t p,
                         float* out);
void bilinear_gather(const float* feat, int c, int h, int w, const float* loc, int64_t p,
                     float* out);

// dfeat is scattered per channel serially (parallel across channels);
// dloc is gathered per row
void bilinear_gather_bwd(const float* feat, int c, int h, int w, const float* loc, int64_t p,
                         const float* dout, float* dfeat, float* dloc);

// out[c][y][x] = feat[c](x + flow_x, y + flow_y), bilinear, edge clamp
void warp_bilinear_serial(const float* img, int c, int h, int w, const float* flow, float* out);
void warp_bilinear_omp(const float* img, int c, int h, int w, const float* flow, float* out);
void warp_bilinear(const float* img, int c, int h, int w, const float* flow, float* out);

// p x p mean pooling, extents must divide
void avgpool_serial(const float* img, int c, int h, int w, int p, float* out);
void avgpool_omp(const float* img, int c, int h, int w, int p, float* out);
void avgpool(const float* img, int c, int h, int w, int p, float* out);

// bilinear resize with half-pixel-center mapping, edge clamp
void resize_bilinear_serial(const float* img, int c, int h, int w, int oh, int ow, float* out);
void resize_bilinear_omp(const float* img, int c, int h, int w, int oh, int ow, float* out);
void resize_bilinear(const float* img, int c, int h, int w, int oh, int ow, float* out);

// adjoint of resize_bilinear: scatter grad (c x oh x ow) back to (c x h x w),
// accumulating into dsrc
void resize_bilinear_bwd(const float* g, int c, int h, int w, int oh, int ow, float* dsrc);

// orthonormal p x p DCT-II basis matrix, row-major p*p, computed in double
void dct_matrix(int p, float* d);

// plane H x W -> coeff (p*p) x (H/p) x (W/p); coeff channel = v*p + u
void dct2_blocks_serial(const float* plane, int h, int w, int p, const float* dmat, float* out);
void dct2_blocks_omp(const float* plane, int h, int w, int p, const float* dmat, float* out);
void dct2_blocks(const float* plane, int h, int w, int p, const float* dmat, float* out);

void idct2_blocks_serial(const float* coeff, int bh, int bw, int p, const float* dmat,
                         float* plane);
void idct2_blocks_omp(const float* coeff, int bh, int bw, int p, const float* dmat, float* plane);
void idct2_blocks(const float* coeff, int bh, int bw, int p, const float* dmat, float* plane);

// Shared four-corner setup, the single bilinear convention of the codec.
// floor cell with edge clamp; coordinates are pre-clamped to a huge finite
// box so the int conversion cannot overflow.
struct Bil {
  int x0, x1, y0, y1;
  float fx, fy;
};

inline Bil bil_setup(float x, float y, int w, int h) {
  x = x < -1e6f ? -1e6f : (x > 1e6f ? 1e6f : x);
  y = y < -1e6f ? -1e6f : (y > 1e6f ? 1e6f : y);
  float xf = __builtin_floorf(x);
  float yf = __builtin_floorf(y);
  Bil b;
  b.fx = x - xf;
  b.fy = y - yf;
  int xi = static_cast<int>(xf), yi = static_cast<int>(yf);
  auto cl = [](int v, int hi) { return v < 0 ? 0 : (v > hi ? hi : v); };
  b.x0 = cl(xi, w - 1);
  b.x1 = cl(xi + 1, w - 1);
  b.y0 = cl(yi, h - 1);
  b.y1 = cl(yi + 1, h - 1);
  return b;
}

inline float sample4(const float* plane, int h, int w, float x, float y) {
  Bil b = bil_setup(x, y, w, h);
  (void)h;
  const float v00 = plane[b.y0 * w + b.x0];
  const float v01 = plane[b.y0 * w + b.x1];
  const float v10 = plane[b.y1 * w + b.x0];
  const float v11 = plane[b.y1 * w + b.x1];
  return (1.0f - b.fy) * ((1.0f - b.fx) * v00 + b.fx * v01) +
         b.fy * ((1.0f - b.fx) * v10 + b.fx * v11);
}

}  // namespace utvc::kernels
