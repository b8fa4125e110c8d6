#include "utvc/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "utvc/kernels.hpp"

namespace utvc {

namespace {

void pad4(const std::vector<int>& s, int64_t d[4]) {
  const int r = static_cast<int>(s.size());
  for (int i = 0; i < 4; ++i) d[i] = 1;
  for (int i = 0; i < r; ++i) d[4 - r + i] = s[static_cast<size_t>(i)];
}

void strides4(const int64_t d[4], int64_t st[4]) {
  st[3] = 1;
  for (int i = 2; i >= 0; --i) st[i] = st[i + 1] * d[i + 1];
}

std::vector<int> broadcast_shape(const Tensor& a, const Tensor& b) {
  if (a.rank() != b.rank())
    throw std::invalid_argument("broadcast: rank mismatch " + a.shape_str() + " vs " +
                                b.shape_str());
  std::vector<int> out(a.shape());
  for (int i = 0; i < a.rank(); ++i) {
    const int x = a.dim(i), y = b.dim(i);
    if (x != y && x != 1 && y != 1)
      throw std::invalid_argument("broadcast: incompatible " + a.shape_str() + " vs " +
                                  b.shape_str());
    out[static_cast<size_t>(i)] = std::max(x, y);
  }
  return out;
}

}  // namespace

Tensor& Tape::gbuf(int id) {
  if (grads_.size() < nodes_.size()) grads_.resize(nodes_.size());
  Tensor& g = grads_[static_cast<size_t>(id)];
  if (g.numel() == 0) g = Tensor::zeros(nodes_[static_cast<size_t>(id)].val.shape());
  return g;
}

Tensor Tape::grad(int id) const {
  if (has_g(id)) return grads_[static_cast<size_t>(id)];
  return Tensor::zeros(nodes_[static_cast<size_t>(id)].val.shape());
}

void Tape::backward(int loss) {
  if (val(loss).numel() != 1) throw std::invalid_argument("backward: loss must be scalar");
  grads_.assign(nodes_.size(), Tensor());
  gbuf(loss)[0] = 1.0f;
  for (int i = loss; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (!n.needs || !n.back || !has_g(i)) continue;
    n.back(*this, i);
  }
}

int Tape::add(int a, int b) {
  const Tensor &ta = val(a), &tb = val(b);
  Tensor out(broadcast_shape(ta, tb));
  int64_t od[4], os[4], ad[4], as[4], bd[4], bs[4];
  pad4(out.shape(), od);
  strides4(od, os);
  pad4(ta.shape(), ad);
  strides4(ad, as);
  pad4(tb.shape(), bd);
  strides4(bd, bs);
  for (int i = 0; i < 4; ++i) {
    if (ad[i] == 1) as[i] = 0;
    if (bd[i] == 1) bs[i] = 0;
  }
  const float *pa = ta.data(), *pb = tb.data();
  float* po = out.data();
  for (int64_t i0 = 0; i0 < od[0]; ++i0)
    for (int64_t i1 = 0; i1 < od[1]; ++i1)
      for (int64_t i2 = 0; i2 < od[2]; ++i2)
        for (int64_t i3 = 0; i3 < od[3]; ++i3)
          po[i0 * os[0] + i1 * os[1] + i2 * os[2] + i3 * os[3]] =
              pa[i0 * as[0] + i1 * as[1] + i2 * as[2] + i3 * as[3]] +
              pb[i0 * bs[0] + i1 * bs[1] + i2 * bs[2] + i3 * bs[3]];
  const bool ng = needs(a) || needs(b);
  return push(std::move(out), ng, [a, b](Tape& t, int self) {
    const Tensor& g = t.grads_[static_cast<size_t>(self)];
    for (int which = 0; which < 2; ++which) {
      const int in = which == 0 ? a : b;
      if (!t.needs(in)) continue;
      Tensor& gi = t.gbuf(in);
      int64_t od[4], os[4], id[4], is[4];
      pad4(g.shape(), od);
      strides4(od, os);
      pad4(gi.shape(), id);
      strides4(id, is);
      for (int i = 0; i < 4; ++i)
        if (id[i] == 1) is[i] = 0;
      const float* pg = g.data();
      float* pi = gi.data();
      for (int64_t i0 = 0; i0 < od[0]; ++i0)
        for (int64_t i1 = 0; i1 < od[1]; ++i1)
          for (int64_t i2 = 0; i2 < od[2]; ++i2)
            for (int64_t i3 = 0; i3 < od[3]; ++i3)
              pi[i0 * is[0] + i1 * is[1] + i2 * is[2] + i3 * is[3]] +=
                  pg[i0 * os[0] + i1 * os[1] + i2 * os[2] + i3 * os[3]];
    }
  });
}

int Tape::mul(int a, int b) {
  const Tensor &ta = val(a), &tb = val(b);
  Tensor out(broadcast_shape(ta, tb));
  int64_t od[4], os[4], ad[4], as[4], bd[4], bs[4];
  pad4(out.shape(), od);
  strides4(od, os);
  pad4(ta.shape(), ad);
  strides4(ad, as);
  pad4(tb.shape(), bd);
  strides4(bd, bs);
  for (int i = 0; i < 4; ++i) {
    if (ad[i] == 1) as[i] = 0;
    if (bd[i] == 1) bs[i] = 0;
  }
  const float *pa = ta.data(), *pb = tb.data();
  float* po = out.data();
  for (int64_t i0 = 0; i0 < od[0]; ++i0)
    for (int64_t i1 = 0; i1 < od[1]; ++i1)
      for (int64_t i2 = 0; i2 < od[2]; ++i2)
        for (int64_t i3 = 0; i3 < od[3]; ++i3)
          po[i0 * os[0] + i1 * os[1] + i2 * os[2] + i3 * os[3]] =
              pa[i0 * as[0] + i1 * as[1] + i2 * as[2] + i3 * as[3]] *
              pb[i0 * bs[0] + i1 * bs[1] + i2 * bs[2] + i3 * bs[3]];
  const bool ng = needs(a) || needs(b);
  return push(std::move(out), ng, [a, b](Tape& t, int self) {
    const Tensor& g = t.grads_[static_cast<size_t>(self)];
    for (int which = 0; which < 2; ++which) {
      const int in = which == 0 ? a : b;
      const int other = which == 0 ? b : a;
      if (!t.needs(in)) continue;
      Tensor& gi = t.gbuf(in);
      const Tensor& to = t.val(other);
      int64_t od[4], os[4], id[4], is[4], xd[4], xs[4];
      pad4(g.shape(), od);
      strides4(od, os);
      pad4(gi.shape(), id);
      strides4(id, is);
      pad4(to.shape(), xd);
      strides4(xd, xs);
      for (int i = 0; i < 4; ++i) {
        if (id[i] == 1) is[i] = 0;
        if (xd[i] == 1) xs[i] = 0;
      }
      const float *pg = g.data(), *px = to.data();
      float* pi = gi.data();
      for (int64_t i0 = 0; i0 < od[0]; ++i0)
        for (int64_t i1 = 0; i1 < od[1]; ++i1)
          for (int64_t i2 = 0; i2 < od[2]; ++i2)
            for (int64_t i3 = 0; i3 < od[3]; ++i3)
              pi[i0 * is[0] + i1 * is[1] + i2 * is[2] + i3 * is[3]] +=
                  pg[i0 * os[0] + i1 * os[1] + i2 * os[2] + i3 * os[3]] *
                  px[i0 * xs[0] + i1 * xs[1] + i2 * xs[2] + i3 * xs[3]];
    }
  });
}

int Tape::cadd(int a, float s) {
  Tensor out = val(a);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += s;
  return push(std::move(out), needs(a), [a](Tape& t, int self) {
    if (!t.needs(a)) return;
    const Tensor& g = t.grads_[static_cast<size_t>(self)];
    Tensor& gi = t.gbuf(a);
    for (int64_t i = 0; i < g.numel(); ++i) gi[i] += g[i];
  });
}

int Tape::cmul(int a, float s) {
  Tensor out = val(a);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= s;
  return push(std::move(out), needs(a), [a, s](Tape& t, int self) {
    if (!t.needs(a)) return;
    const Tensor& g = t.grads_[static_cast<size_t>(self)];
    Tensor& gi = t.gbuf(a);
    for (int64_t i = 0; i < g.numel(); ++i) gi[i] += g[i] * s;
  });
}

int Tape::exp_(int a) {
  Tensor out = val(a);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::exp(out[i]);
  return push(std::move(out), needs(a), [a](Tape& t, int self) {
    if (!t.needs(a)) return;
    const Tensor& g = t.grads_[static_cast<size_t>(self)];
    const Tensor& y = t.val(self);
    Tensor& gi = t.gbuf(a);
    for (int64_t i = 0; i < g.numel(); ++i) gi[i] += g[i] * y[i];
  });
}

int Tape::log_(int a) {
  Tensor out = val(a);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::log(out[i]);
  return push(std::move(out), needs(a), [a](Tape& t, int self) {
    if (!t.needs(a)) return;
    const Tensor& g = t.grads_[static_cast<size_t>(self)];
    const Tensor& x = t.val(a);
    Tensor& gi = t.gbuf(a);
    for (int64_t i = 0; i < g.numel(); ++i) gi[i] += g[i] / x[i];
  });
}

int Tape::clamp(int a, float lo, float hi) {
  Tensor out = val(a);
  for (int64_t i = 0; i < out.numel(); ++i)
    out[i] = out[i] < lo ? lo : (out[i] > hi ? hi : out[i]);
  return push(std::move(out), needs(a), [a, lo, hi](Tape& t, int self) {
    if (!t.needs(a)) return;
    const Tensor& g = t.grads_[static_cast<size_t>(self)];
    const Tensor& x = t.val(a);
    Tensor& gi = t.gbuf(a);
    for (int64_t i = 0; i < g.numel(); ++i)
      if (x[i] >= lo && x[i] <= hi) gi[i] += g[i];
  });
}

int Tape::round_ste(int a) {
  Tensor out = val(a);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = round_half_away(out[i]);
  // straight-through: gradient passes unchanged
  return push(std::move(out), needs(a), [a](Tape& t, int self) {
    if (!t.needs(a)) return;
    const Tensor& g = t.grads_[static_cast<size_t>(self)];
    Tensor& gi = t.gbuf(a);
    for (int64_t i = 0; i < g.numel(); ++i) gi[i] += g[i];
  });
}

namespace {
struct AxisLines {
  int64_t outer, inner, n;  // line element j at: o*inner*n + j*inner + q
};
AxisLines lines_of(const Tensor& t, int axis) {
  if (axis < 0 || axis >= t.rank()) throw std::invalid_argument("axis out of range");
  AxisLines l{1, 1, t.dim(axis)};
  for (int i = 0; i < axis; ++i) l.outer *= t.dim(i);
  for (int i = axis + 1; i < t.rank(); ++i) l.inner *= t.dim(i);
  return l;
}
}  // namespace

int Tape::softmax(int a, int axis) {
  const Tensor& x = val(a);
  const AxisLines L = lines_of(x, axis);
  Tensor out(x.shape());
  std::vector<float> line(static_cast<size_t>(L.n)), sline(static_cast<size_t>(L.n));
  for (int64_t o = 0; o < L.outer; ++o)
    for (int64_t q = 0; q < L.inner; ++q) {
      const int64_t base = o * L.inner * L.n + q;
      for (int64_t j = 0; j < L.n; ++j) line[static_cast<size_t>(j)] = x[base + j * L.inner];
      kernels::softmax_rows_serial(line.data(), sline.data(), 1, static_cast<int>(L.n));
      for (int64_t j = 0; j < L.n; ++j) out[base + j * L.inner] = sline[static_cast<size_t>(j)];
    }
  return push(std::move(out), needs(a), [a, axis](Tape& t, int self) {
    if (!t.needs(a)) return;
    const Tensor& g = t.grads_[static_cast<size_t>(self)];
    const Tensor& y = t.val(self);
    Tensor& gi = t.gbuf(a);
    const AxisLines L = lines_of(y, axis);
    for (int64_t o = 0; o < L.outer; ++o)
      for (int64_t q = 0; q < L.inner; ++q) {
        const int64_t base = o * L.inner * L.n + q;
        float dot = 0.0f;
        for (int64_t j = 0; j < L.n; ++j) dot += g[base + j * L.inner] * y[base + j * L.inner];
        for (int64_t j = 0; j < L.n; ++j)
          gi[base + j * L.inner] += y[base + j * L.inner] * (g[base + j * L.inner] - dot);
      }
  });
}

int Tape::sum_all(int a) {
  const Tensor& x = val(a);
  Tensor out({1});
  out[0] = pairwise_sum(x.data(), x.numel());
  return push(std::move(out), needs(a), [a](Tape& t, int self) {
    if (!t.needs(a)) return;
    const float g = t.grads_[static_cast<size_t>(self)][0];
    Tensor& gi = t.gbuf(a);
    for (int64_t i = 0; i < gi.numel(); ++i) gi[i] += g;
  });
}

int Tape::mean_all(int a) {
  const int64_t n = val(a).numel();
  return cmul(sum_all(a), 1.0f / static_cast<float>(n));
}

int Tape::sum_axis(int a, int axis) {
  const Tensor& x = val(a);
  const AxisLines L = lines_of(x, axis);
  std::vector<int> oshape = x.shape();
  oshape[static_cast<size_t>(axis)] = 1;
  Tensor out(oshape);
  std::vector<float> line(static_cast<size_t>(L.n));
  for (int64_t o = 0; o < L.outer; ++o)
    for (int64_t q = 0; q < L.inner; ++q) {
      const int64_t base = o * L.inner * L.n + q;
      for (int64_t j = 0; j < L.n; ++j) line[static_cast<size_t>(j)] = x[base + j * L.inner];
      out[o * L.inner + q] = pairwise_sum(line.data(), L.n);
    }
  return push(std::move(out), needs(a), [a, axis](Tape& t, int self) {
    if (!t.needs(a)) return;
    const Tensor& g = t.grads_[static_cast<size_t>(self)];
    Tensor& gi = t.gbuf(a);
    const AxisLines L = lines_of(gi, axis);
    for (int64_t o = 0; o < L.outer; ++o)
      for (int64_t q = 0; q < L.inner; ++q)
        for (int64_t j = 0; j < L.n; ++j)
          gi[o * L.inner * L.n + j * L.inner + q] += g[o * L.inner + q];
  });
}

int Tape::concat(const std::vector<int>& ids, int axis) {
  if (ids.empty()) throw std::invalid_argument("concat: no inputs");
  const Tensor& first = val(ids[0]);
  const int r = first.rank();
  if (axis < 0 || axis >= r) throw std::invalid_argument("concat: axis out of range");
  std::vector<int> oshape = first.shape();
  int total = 0;
  for (int id : ids) {
    const Tensor& ti = val(id);
    if (ti.rank() != r) throw std::invalid_argument("concat: rank mismatch");
    for (int d = 0; d < r; ++d)
      if (d != axis && ti.dim(d) != first.dim(d))
        throw std::invalid_argument("concat: shape mismatch");
    total += ti.dim(axis);
  }
  oshape[static_cast<size_t>(axis)] = total;
  Tensor out(oshape);
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= first.dim(i);
  for (int i = axis + 1; i < r; ++i) inner *= first.dim(i);
  int64_t off = 0;
  for (int id : ids) {
    const Tensor& ti = val(id);
    const int64_t na = ti.dim(axis);
    for (int64_t o = 0; o < outer; ++o)
      std::memcpy(out.data() + (o * total + off) * inner, ti.data() + o * na * inner,
                  sizeof(float) * static_cast<size_t>(na * inner));
    off += na;
  }
  bool ng = false;
  for (int id : ids) ng = ng || needs(id);
  std::vector<int> cap = ids;
  return push(std::move(out), ng, [cap, axis, outer, inner, total](Tape& t, int self) {
    const Tensor& g = t.grads_[static_cast<size_t>(self)];
    int64_t off = 0;
    for (int id : cap) {
      const int64_t na = t.val(id).dim(axis);
      if (t.needs(id)) {
        Tensor& gi = t.gbuf(id);
        for (int64_t o = 0; o < outer; ++o) {
          const float* src = g.data() + (o * total + off) * inner;
          float* dst = gi.data() + o * na * inner;
          for (int64_t i = 0; i < na * inner; ++i) dst[i] += src[i];
        }
      }
      off += na;
    }
  });
}

int Tape::slice(int a, int axis, int start, int len) {
  const Tensor& x = val(a);
  if (axis < 0 || axis >= x.rank()) throw std::invalid_argument("slice: axis out of range");
  if (start < 0 || len <= 0 || start + len > x.dim(axis))
    throw std::invalid_argument("slice: range out of bounds");
  std::vector<int> oshape = x.shape();
  oshape[static_cast<size_t>(axis)] = len;
  Tensor out(oshape);
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const int64_t na = x.dim(axis);
  for (int64_t o = 0; o < outer; ++o)
    std::memcpy(out.data() + o * len * inner, x.data() + (o * na + start) * inner,
                sizeof(float) * static_cast<size_t>(len) * static_cast<size_t>(inner));
  return push(std::move(out), needs(a), [a, axis, start, len, outer, inner, na](Tape& t, int self) {
    if (!t.needs(a)) return;
    const Tensor& g = t.grads_[static_cast<size_t>(self)];
    Tensor& gi = t.gbuf(a);
    (void)axis;
    for (int64_t o = 0; o < outer; ++o) {
      const float* src = g.data() + o * len * inner;
      float* dst = gi.data() + (o * na + start) * inner;
      for (int64_t i = 0; i < static_cast<int64_t>(len) * inner; ++i) dst[i] += src[i];
    }
  });
}

int Tape::reshape(int a, std::vector<int> shape) {
  const Tensor& x = val(a);
  Tensor out(shape);
  if (out.numel() != x.numel()) throw std::invalid_argument("reshape: element count mismatch");
  std::memcpy(out.data(), x.data(), sizeof(float) * static_cast<size_t>(x.numel()));
  return push(std::move(out), needs(a), [a](Tape& t, int self) {
    if (!t.needs(a)) return;
    const Tensor& g = t.grads_[static_cast<size_t>(self)];
    Tensor& gi = t.gbuf(a);
    for (int64_t i = 0; i < g.numel(); ++i) gi[i] += g[i];
  });
}

int Tape::matmul(int a, int b) {
  const Tensor &ta = val(a), &tb = val(b);
  if (ta.rank() != 2 || tb.rank() != 2 || ta.dim(1) != tb.dim(0))
    throw std::invalid_argument("matmul: need MxK and KxN, got " + ta.shape_str() + " " +
                                tb.shape_str());
  const int m = ta.dim(0), k = ta.dim(1), n = tb.dim(1);
  Tensor out({m, n});
  kernels::matmul(ta.data(), tb.data(), out.data(), m, k, n);
  const bool ng = needs(a) || needs(b);
  return push(std::move(out), ng, [a, b, m, k, n](Tape& t, int self) {
    const Tensor& g = t.grads_[static_cast<size_t>(self)];
    if (t.needs(a)) {
      Tensor tmp({m, k});
      kernels::matmul_nt(g.data(), t.val(b).data(), tmp.data(), m, n, k);
      Tensor& gi = t.gbuf(a);
      for (int64_t i = 0; i < tmp.numel(); ++i) gi[i] += tmp[i];
    }
    if (t.needs(b)) {
      Tensor tmp({k, n});
      kernels::matmul_tn(t.val(a).data(), g.data(), tmp.data(), m, k, n);
      Tensor& gi = t.gbuf(b);
      for (int64_t i = 0; i < tmp.numel(); ++i) gi[i] += tmp[i];
    }
  });
}

int Tape::conv2d(int x, int w, int b, int stride, int groups, bool same_pad) {
  const Tensor &tx = val(x), &tw = val(w);
  if (tx.rank() != 3 || tw.rank() != 4) throw std::invalid_argument("conv2d: need CxHxW and OxCxKxK");
  kernels::Conv2dSpec s;
  s.in_c = tx.dim(0);
  s.in_h = tx.dim(1);
  s.in_w = tx.dim(2);
  s.out_c = tw.dim(0);
  s.kh = tw.dim(2);
  s.kw = tw.dim(3);
  s.stride = stride;
  s.groups = groups;
  s.same_pad = same_pad;
  if (s.in_c % groups || s.out_c % groups || tw.dim(1) != s.in_c / groups)
    throw std::invalid_argument("conv2d: group/channel mismatch");
  if (!same_pad && (s.in_h < s.kh || s.in_w < s.kw))
    throw std::invalid_argument("conv2d: input smaller than kernel");
  const float* bias = b >= 0 ? val(b).data() : nullptr;
  if (b >= 0 && val(b).numel() != s.out_c) throw std::invalid_argument("conv2d: bias size");
  Tensor out({s.out_c, s.out_h(), s.out_w()});
  kernels::conv2d(tx.data(), tw.data(), bias, out.data(), s);
  const bool ng = needs(x) || needs(w) || (b >= 0 && needs(b));
  return push(std::move(out), ng, [x, w, b, s](Tape& t, int self) {
    const Tensor& g = t.grads_[static_cast<size_t>(self)];
    if (t.needs(x)) kernels::conv2d_bwd_data(g.data(), t.val(w).data(), t.gbuf(x).data(), s);
    const bool nw = t.needs(w);
    const bool nb = b >= 0 && t.needs(b);
    if (nw || nb)
      kernels::conv2d_bwd_weights(t.val(x).data(), g.data(), nw ? t.gbuf(w).data() : nullptr,
                                  nb ? t.gbuf(b).data() : nullptr, s);
  });
}

int Tape::bilinear(int feat, int loc) {
  const Tensor &tf = val(feat), &tl = val(loc);
  if (tf.rank() != 3 || tl.rank() != 2 || tl.dim(1) != 2)
    throw std::invalid_argument("bilinear: need CxHxW and Px2");
  const int c = tf.dim(0), h = tf.dim(1), w = tf.dim(2);
  const int64_t p = tl.dim(0);
  Tensor out({static_cast<int>(p), c});
  kernels::bilinear_gather(tf.data(), c, h, w, tl.data(), p, out.data());
  const bool ng = needs(feat) || needs(loc);
  return push(std::move(out), ng, [feat, loc, c, h, w, p](Tape& t, int self) {
    const Tensor& g = t.grads_[static_cast<size_t>(self)];
    float* df = t.needs(feat) ? t.gbuf(feat).data() : nullptr;
    float* dl = t.needs(loc) ? t.gbuf(loc).data() : nullptr;
    kernels::bilinear_gather_bwd(t.val(feat).data(), c, h, w, t.val(loc).data(), p, g.data(), df,
                                 dl);
  });
}

namespace {
const float* dct_mat(int p) {
  static thread_local std::map<int, std::vector<float>> cache;
  auto it = cache.find(p);
  if (it == cache.end()) {
    std::vector<float> d(static_cast<size_t>(p) * p);
    kernels::dct_matrix(p, d.data());
    it = cache.emplace(p, std::move(d)).first;
  }
  return it->second.data();
}
}  // namespace

int Tape::dct2(int plane, int p) {
  const Tensor& x = val(plane);
  if (x.rank() != 3 || x.dim(1) % p || x.dim(2) % p)
    throw std::invalid_argument("dct2: extents must divide by block size");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int bh = h / p, bw = w / p;
  Tensor out({c * p * p, bh, bw});
  const float* d = dct_mat(p);
  for (int ch = 0; ch < c; ++ch)
    kernels::dct2_blocks(x.data() + static_cast<int64_t>(ch) * h * w, h, w, p, d,
                         out.data() + static_cast<int64_t>(ch) * p * p * bh * bw);
  // orthonormal map: backward is the inverse transform of the gradient
  return push(std::move(out), needs(plane), [plane, p, c, h, w, bh, bw](Tape& t, int self) {
    if (!t.needs(plane)) return;
    const Tensor& g = t.grads_[static_cast<size_t>(self)];
    Tensor tmp({c, h, w});
    const float* d = dct_mat(p);
    for (int ch = 0; ch < c; ++ch)
      kernels::idct2_blocks(g.data() + static_cast<int64_t>(ch) * p * p * bh * bw, bh, bw, p, d,
                            tmp.data() + static_cast<int64_t>(ch) * h * w);
    Tensor& gi = t.gbuf(plane);
    for (int64_t i = 0; i < tmp.numel(); ++i) gi[i] += tmp[i];
  });
}

int Tape::idct2(int coeff, int p) {
  const Tensor& x = val(coeff);
  if (x.rank() != 3 || x.dim(0) % (p * p))
    throw std::invalid_argument("idct2: channel count must divide by p^2");
  const int c = x.dim(0) / (p * p), bh = x.dim(1), bw = x.dim(2);
  const int h = bh * p, w = bw * p;
  Tensor out({c, h, w});
  const float* d = dct_mat(p);
  for (int ch = 0; ch < c; ++ch)
    kernels::idct2_blocks(x.data() + static_cast<int64_t>(ch) * p * p * bh * bw, bh, bw, p, d,
                          out.data() + static_cast<int64_t>(ch) * h * w);
  return push(std::move(out), needs(coeff), [coeff, p, c, h, w, bh, bw](Tape& t, int self) {
    if (!t.needs(coeff)) return;
    const Tensor& g = t.grads_[static_cast<size_t>(self)];
    Tensor tmp({c * p * p, bh, bw});
    const float* d = dct_mat(p);
    for (int ch = 0; ch < c; ++ch)
      kernels::dct2_blocks(g.data() + static_cast<int64_t>(ch) * h * w, h, w, p, d,
                           tmp.data() + static_cast<int64_t>(ch) * p * p * bh * bw);
    Tensor& gi = t.gbuf(coeff);
    for (int64_t i = 0; i < tmp.numel(); ++i) gi[i] += tmp[i];
  });
}

int Tape::resize2x(int a) {
  const Tensor& x = val(a);
  if (x.rank() != 3) throw std::invalid_argument("resize2x: want CxHxW");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor out({c, 2 * h, 2 * w});
  kernels::resize_bilinear(x.data(), c, h, w, 2 * h, 2 * w, out.data());
  return push(std::move(out), needs(a), [a, c, h, w](Tape& t, int self) {
    if (!t.needs(a)) return;
    const Tensor& g = t.grads_[static_cast<size_t>(self)];
    kernels::resize_bilinear_bwd(g.data(), c, h, w, 2 * h, 2 * w, t.gbuf(a).data());
  });
}

int neg(Tape& t, int x) { return t.cmul(x, -1.0f); }
int sub(Tape& t, int a, int b) { return t.add(a, t.cmul(b, -1.0f)); }

namespace {
constexpr float kBig = 3.0e38f;
}

int relu(Tape& t, int x) { return t.clamp(x, 0.0f, kBig); }

int leaky_relu(Tape& t, int x, float slope) {
  return t.add(t.clamp(x, 0.0f, kBig), t.cmul(t.clamp(x, -kBig, 0.0f), slope));
}

int abs_(Tape& t, int x) {
  return t.add(t.clamp(x, 0.0f, kBig), t.cmul(t.clamp(x, -kBig, 0.0f), -1.0f));
}

int reciprocal(Tape& t, int x) { return t.exp_(t.cmul(t.log_(x), -1.0f)); }

int square(Tape& t, int x) { return t.mul(x, x); }

int mse(Tape& t, int a, int b) { return t.mean_all(square(t, sub(t, a, b))); }

int erf_t(Tape& t, int x) {
  // odd extension of the rational tail fit; the sign factor x/(|x|+eps)
  // keeps everything inside the op set
  const int ax = abs_(t, x);
  const int sign = t.mul(x, reciprocal(t, t.cadd(ax, 1e-8f)));
  const int tt = reciprocal(t, t.cadd(t.cmul(ax, 0.3275911f), 1.0f));
  int poly = t.cmul(tt, 1.061405429f);
  poly = t.mul(t.cadd(poly, -1.453152027f), tt);
  poly = t.mul(t.cadd(poly, 1.421413741f), tt);
  poly = t.mul(t.cadd(poly, -0.284496736f), tt);
  poly = t.mul(t.cadd(poly, 0.254829592f), tt);
  const int e = t.exp_(t.clamp(neg(t, t.mul(ax, ax)), -80.0f, 0.0f));
  const int erfa = t.cadd(neg(t, t.mul(poly, e)), 1.0f);
  return t.mul(sign, erfa);
}

int gaussian_bits_map(Tape& t, int y, int mu, int sigma) {
  const float inv_sqrt2 = 0.7071067811865476f;
  const int isig = reciprocal(t, sigma);
  const int d = sub(t, y, mu);
  const int hi = t.cmul(t.mul(t.cadd(d, 0.5f), isig), inv_sqrt2);
  const int lo = t.cmul(t.mul(t.cadd(d, -0.5f), isig), inv_sqrt2);
  const int p = t.cmul(sub(t, erf_t(t, hi), erf_t(t, lo)), 0.5f);
  const int pc = t.clamp(p, 1.0f / 65536.0f, 1.0f);
  const float inv_ln2 = 1.4426950408889634f;
  return t.cmul(t.log_(pc), -inv_ln2);
}

int gaussian_bits(Tape& t, int y, int mu, int sigma) {
  return t.sum_all(gaussian_bits_map(t, y, mu, sigma));
}

int transpose2d(Tape& t, int x) {
  const Tensor& v = t.val(x);
  if (v.rank() != 2) throw std::invalid_argument("transpose2d: rank-2 only");
  const int p = v.dim(0), c = v.dim(1);
  std::vector<int> cols;
  cols.reserve(static_cast<size_t>(c));
  for (int j = 0; j < c; ++j) cols.push_back(t.reshape(t.slice(x, 1, j, 1), {1, p}));
  return t.concat(cols, 0);
}

GradCheckResult grad_check(const std::function<int(Tape&, const std::vector<int>&)>& build,
                           const std::vector<Tensor*>& inputs, double h, int max_probes_per_tensor,
                           Rng& rng) {
  GradCheckResult res;
  // analytic pass; non-scalar build outputs are summed
  std::vector<Tensor> analytic;
  {
    Tape t;
    std::vector<int> ids;
    for (Tensor* in : inputs) ids.push_back(t.input(*in, true));
    const int out = build(t, ids);
    t.backward(t.val(out).numel() == 1 ? out : t.sum_all(out));
    for (int id : ids) analytic.push_back(t.grad(id));
  }
  // numeric side reduces in float64 so loss terms untouched by the probe
  // cancel exactly in the central difference
  auto eval = [&]() -> double {
    Tape t;
    std::vector<int> ids;
    for (Tensor* in : inputs) ids.push_back(t.input(*in, false));
    const Tensor& v = t.val(build(t, ids));
    double s = 0.0;
    for (int64_t i = 0; i < v.numel(); ++i) s += v[i];
    return s;
  };
  for (size_t k = 0; k < inputs.size(); ++k) {
    Tensor& x = *inputs[k];
    const int64_t n = x.numel();
    std::vector<int64_t> coords;
    if (n <= max_probes_per_tensor) {
      for (int64_t i = 0; i < n; ++i) coords.push_back(i);
    } else {
      for (int i = 0; i < max_probes_per_tensor; ++i)
        coords.push_back(static_cast<int64_t>(rng.uniform_int(0, n - 1)));
    }
    // floor the denominator at a fraction of this tensor's gradient scale,
    // otherwise near-zero coordinates measure float32 forward noise, not the op
    double gscale = 0.0;
    for (int64_t i = 0; i < n; ++i) gscale = std::max(gscale, std::abs(double(analytic[k][i])));
    for (int64_t i : coords) {
      const float v0 = x[i];
      x[i] = static_cast<float>(v0 + h);
      const double fp = eval();
      x[i] = static_cast<float>(v0 - h);
      const double fm = eval();
      x[i] = v0;
      const double num = (fp - fm) / (2.0 * h);
      const double a = analytic[k][i];
      const double denom = std::max({1e-8, std::abs(a) + std::abs(num), 0.1 * gscale});
      const double rel = std::abs(a - num) / denom;
      res.max_rel_err = std::max(res.max_rel_err, rel);
      res.sum_rel += rel;
      ++res.probes;
    }
  }
  return res;
}

}  // namespace utvc
