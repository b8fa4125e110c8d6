#include "utvc/evalkit.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "utvc/entropy.hpp"

namespace utvc {

namespace {

void check_pair(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != 3 || b.dim(0) != 3 ||
      a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2))
    throw std::invalid_argument("metric needs two (3,H,W) frames with equal extents");
}

// ---- MS-SSIM machinery, double precision throughout ----

constexpr double kMsExp[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::array<double, 11> ssim_window() {
  std::array<double, 11> w{};
  double sum = 0.0;
  for (int i = -5; i <= 5; ++i) {
    w[i + 5] = std::exp(-(double(i) * i) / (2.0 * 1.5 * 1.5));
    sum += w[i + 5];
  }
  for (double& v : w) v /= sum;
  return w;
}

std::vector<double> gfilter(const std::vector<double>& img, int h, int w) {
  static const std::array<double, 11> win = ssim_window();
  std::vector<double> mid(img.size()), out(img.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -5; i <= 5; ++i) acc += win[i + 5] * img[y * w + std::clamp(x + i, 0, w - 1)];
      mid[y * w + x] = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -5; i <= 5; ++i) acc += win[i + 5] * mid[std::clamp(y + i, 0, h - 1) * w + x];
      out[y * w + x] = acc;
    }
  return out;
}

std::vector<double> down2(const std::vector<double>& img, int h, int w, int& h2, int& w2) {
  h2 = h / 2;
  w2 = w / 2;
  std::vector<double> out(static_cast<size_t>(h2) * w2);
  for (int y = 0; y < h2; ++y)
    for (int x = 0; x < w2; ++x)
      out[y * w2 + x] = 0.25 * (img[(2 * y) * w + 2 * x] + img[(2 * y) * w + 2 * x + 1] +
                                img[(2 * y + 1) * w + 2 * x] + img[(2 * y + 1) * w + 2 * x + 1]);
  return out;
}

void ssim_means(const std::vector<double>& a, const std::vector<double>& b, int h, int w,
                double& mean_ssim, double& mean_cs) {
  std::vector<double> aa(a.size()), bb(b.size()), ab(a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const std::vector<double> mu_a = gfilter(a, h, w), mu_b = gfilter(b, h, w);
  const std::vector<double> m_aa = gfilter(aa, h, w), m_bb = gfilter(bb, h, w),
                            m_ab = gfilter(ab, h, w);
  double s_ssim = 0.0, s_cs = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double va = m_aa[i] - mu_a[i] * mu_a[i];
    const double vb = m_bb[i] - mu_b[i] * mu_b[i];
    const double cov = m_ab[i] - mu_a[i] * mu_b[i];
    const double cs = (2.0 * cov + kC2) / (va + vb + kC2);
    const double lum = (2.0 * mu_a[i] * mu_b[i] + kC1) / (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + kC1);
    s_cs += cs;
    s_ssim += lum * cs;
  }
  mean_ssim = s_ssim / double(a.size());
  mean_cs = s_cs / double(a.size());
}

// ---- PCHIP on (x ascending, y), Fritsch-Carlson derivatives ----

struct Pchip {
  std::vector<double> x, y, d;
};

Pchip fit_pchip(std::vector<std::pair<double, double>> pts) {
  std::sort(pts.begin(), pts.end());
  const int n = static_cast<int>(pts.size());
  for (int i = 0; i + 1 < n; ++i)
    if (pts[i].first == pts[i + 1].first)
      throw std::invalid_argument("rate-distortion curve has duplicate quality points");
  Pchip f;
  f.x.resize(n);
  f.y.resize(n);
  f.d.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    f.x[i] = pts[i].first;
    f.y[i] = pts[i].second;
  }
  std::vector<double> h(n - 1), s(n - 1);
  for (int i = 0; i + 1 < n; ++i) {
    h[i] = f.x[i + 1] - f.x[i];
    s[i] = (f.y[i + 1] - f.y[i]) / h[i];
  }
  const auto end_deriv = [](double h0, double h1, double s0, double s1) {
    double d0 = ((2.0 * h0 + h1) * s0 - h0 * s1) / (h0 + h1);
    if (d0 * s0 <= 0.0) return 0.0;
    if (s0 * s1 <= 0.0 && std::abs(d0) > 3.0 * std::abs(s0)) return 3.0 * s0;
    return d0;
  };
  f.d[0] = end_deriv(h[0], h[1], s[0], s[1]);
  f.d[n - 1] = end_deriv(h[n - 2], h[n - 3], s[n - 2], s[n - 3]);
  for (int i = 1; i + 1 < n; ++i) {
    if (s[i - 1] * s[i] <= 0.0) {
      f.d[i] = 0.0;
    } else {
      const double w1 = 2.0 * h[i] + h[i - 1], w2 = h[i] + 2.0 * h[i - 1];
      f.d[i] = (w1 + w2) / (w1 / s[i - 1] + w2 / s[i]);
    }
  }
  return f;
}

double pchip_integral(const Pchip& f, double a, double b) {
  double acc = 0.0;
  for (size_t k = 0; k + 1 < f.x.size(); ++k) {
    const double lo = std::max(a, f.x[k]), hi = std::min(b, f.x[k + 1]);
    if (hi <= lo) continue;
    const double h = f.x[k + 1] - f.x[k];
    const double sl = (f.y[k + 1] - f.y[k]) / h;
    const double a0 = f.y[k], a1 = f.d[k];
    const double a2 = (3.0 * sl - 2.0 * f.d[k] - f.d[k + 1]) / h;
    const double a3 = (f.d[k] + f.d[k + 1] - 2.0 * sl) / (h * h);
    const auto F = [&](double u) {
      return a0 * u + a1 * u * u / 2.0 + a2 * u * u * u / 3.0 + a3 * u * u * u * u / 4.0;
    };
    acc += F(hi - f.x[k]) - F(lo - f.x[k]);
  }
  return acc;
}

Pchip rate_curve(const std::vector<RdPoint>& pts) {
  if (pts.size() < 4)
    throw std::invalid_argument("bd_rate needs at least 4 rate-distortion points per curve");
  std::vector<std::pair<double, double>> xy;
  for (const RdPoint& p : pts) {
    if (!(p.bpp > 0.0)) throw std::invalid_argument("bd_rate needs positive rates");
    xy.emplace_back(p.psnr, std::log(p.bpp));
  }
  return fit_pchip(std::move(xy));
}

double lsq_slope(const std::vector<double>& y) {
  const int n = static_cast<int>(y.size());
  if (n < 2) return 0.0;
  const double xm = (n - 1) / 2.0;
  double ym = 0.0;
  for (double v : y) ym += v;
  ym /= n;
  double num = 0.0, den = 0.0;
  for (int i = 0; i < n; ++i) {
    num += (i - xm) * (y[i] - ym);
    den += (i - xm) * (i - xm);
  }
  return num / den;
}

double mean_bpp_of(const std::vector<uint64_t>& bits, int n, int pixels) {
  double total = 0.0;
  for (uint64_t b : bits) total += double(b);
  return total / (double(n) * pixels);
}

}  // namespace

double psnr(const Tensor& a, const Tensor& b) {
  check_pair(a, b);
  double sum = 0.0;
  for (size_t i = 0; i < a.vec().size(); ++i) {
    const double d = double(a.vec()[i]) - double(b.vec()[i]);
    sum += d * d;
  }
  const double mse = sum / double(a.vec().size());
  if (mse <= 0.0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

double ms_ssim(const Tensor& a, const Tensor& b) {
  check_pair(a, b);
  if (a.dim(1) < 160 || a.dim(2) < 160)
    throw std::invalid_argument("ms_ssim needs both extents >= 160 for five dyadic scales");
  double score = 0.0;
  for (int c = 0; c < 3; ++c) {
    int h = a.dim(1), w = a.dim(2);
    std::vector<double> pa(static_cast<size_t>(h) * w), pb(pa.size());
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        pa[y * w + x] = a.at(c, y, x);
        pb[y * w + x] = b.at(c, y, x);
      }
    double chan = 1.0;
    for (int scale = 0; scale < 5; ++scale) {
      double mean_ssim = 0.0, mean_cs = 0.0;
      ssim_means(pa, pb, h, w, mean_ssim, mean_cs);
      chan *= std::pow(std::max(scale == 4 ? mean_ssim : mean_cs, 0.0), kMsExp[scale]);
      if (scale < 4) {
        int h2 = 0, w2 = 0;
        pa = down2(pa, h, w, h2, w2);
        pb = down2(pb, h, w, h2, w2);
        h = h2;
        w = w2;
      }
    }
    score += chan;
  }
  return score / 3.0;
}

double bd_rate(const std::vector<RdPoint>& ref, const std::vector<RdPoint>& test) {
  const Pchip fr = rate_curve(ref), ft = rate_curve(test);
  const double lo = std::max(fr.x.front(), ft.x.front());
  const double hi = std::min(fr.x.back(), ft.x.back());
  if (!(lo < hi)) throw std::invalid_argument("bd_rate curves have no overlapping quality range");
  const double avg_ref = pchip_integral(fr, lo, hi) / (hi - lo);
  const double avg_test = pchip_integral(ft, lo, hi) / (hi - lo);
  return (std::exp(avg_test - avg_ref) - 1.0) * 100.0;
}

double fit_slope(const std::vector<double>& y) { return lsq_slope(y); }

BaselineResidualCodec::Result BaselineResidualCodec::run(const std::vector<Tensor>& frames) const {
  if (frames.empty()) throw std::invalid_argument("baseline codec needs at least one frame");
  if (!(step > 0.0)) throw std::invalid_argument("baseline codec needs a positive step");
  for (const Tensor& f : frames) check_pair(f, frames[0]);
  const int h = frames[0].dim(1), w = frames[0].dim(2);
  const Tensor gray = Tensor::full({3, h, w}, 0.5f);
  Result res;
  for (size_t t = 0; t < frames.size(); ++t) {
    const Tensor& prev_src = t == 0 ? gray : frames[t - 1];
    const Tensor& prev_rec = t == 0 ? gray : res.recon[t - 1];
    // quantized frame difference, coded against the original previous frame;
    // the reconstruction integrates the steps, so its error is never fed back
    std::vector<int32_t> q(frames[t].vec().size());
    double ssq = 0.0;
    for (size_t i = 0; i < q.size(); ++i) {
      const double r = double(frames[t].vec()[i]) - double(prev_src.vec()[i]);
      q[i] = static_cast<int32_t>(round_half_away(static_cast<float>(r / step)));
      ssq += double(q[i]) * q[i];
    }
    const float sigma =
        std::clamp(static_cast<float>(std::sqrt(ssq / double(q.size()))), kSigmaMin, kSigmaMax);
    uint32_t qcdf[kNumSymbols + 1];
    build_symbol_table(0.0, sigma, qcdf);
    RangeEncoder rc;
    for (int32_t v : q) encode_symbol(rc, v, qcdf);
    const Bitchunk chunk = rc.finish();
    res.bits.push_back(chunk.bits + 32);  // sigma rides along as one float
    Tensor rec = prev_rec;
    for (size_t i = 0; i < q.size(); ++i)
      rec.vec()[i] = static_cast<float>(double(rec.vec()[i]) + step * q[i]);
    res.recon.push_back(std::move(rec));
  }
  return res;
}

PropagationReport error_propagation_experiment(const std::vector<Tensor>& frames, const Model& m,
                                               const GopConfig& gc) {
  if (frames.size() < 2)
    throw std::invalid_argument("error propagation experiment needs at least two frames");
  const int pixels = frames[0].dim(1) * frames[0].dim(2);
  PropagationReport rep;

  const EncodeResult er = encode_sequence(frames, gc, m);
  double total = 0.0;
  for (size_t t = 0; t < frames.size(); ++t) {
    rep.unified.psnr.push_back(psnr(er.recon[t], frames[t]));
    total += er.rd[t].bits();
  }
  rep.unified.mean_bpp = total / (double(frames.size()) * pixels);
  rep.unified.slope = lsq_slope(rep.unified.psnr);

  // geometric bisection on the control's step: larger step, fewer bits
  double lo = 1e-4, hi = 1.0;
  BaselineResidualCodec ctl;
  BaselineResidualCodec::Result run;
  double bpp = 0.0;
  for (int it = 0; it < 48; ++it) {
    ctl.step = std::sqrt(lo * hi);
    run = ctl.run(frames);
    bpp = mean_bpp_of(run.bits, static_cast<int>(frames.size()), pixels);
    if (std::abs(bpp - rep.unified.mean_bpp) / rep.unified.mean_bpp <= 0.05) break;
    (bpp > rep.unified.mean_bpp ? lo : hi) = ctl.step;
  }
  rep.step = ctl.step;
  rep.bpp_mismatch = std::abs(bpp - rep.unified.mean_bpp) / rep.unified.mean_bpp;
  rep.residual.mean_bpp = bpp;
  for (size_t t = 0; t < frames.size(); ++t)
    rep.residual.psnr.push_back(psnr(run.recon[t], frames[t]));
  rep.residual.slope = lsq_slope(rep.residual.psnr);
  return rep;
}

std::vector<RdPoint> rd_sweep(const std::vector<Tensor>& frames, const Model& m, int gop,
                              const std::vector<QualitySpec>& specs) {
  if (frames.empty()) throw std::invalid_argument("rd_sweep needs frames");
  std::vector<RdPoint> pts;
  const int h = frames[0].dim(1), w = frames[0].dim(2);
  for (const QualitySpec& qs : specs) {
    GopConfig gc;
    gc.gop = gop;
    gc.quality = qs;
    const EncodeResult er = encode_sequence(frames, gc, m);
    RdPoint p;
    double bits = 0.0, ps = 0.0, ms = 0.0;
    for (size_t t = 0; t < frames.size(); ++t) {
      bits += er.rd[t].bits();
      ps += psnr(er.recon[t], frames[t]);
      if (h >= 160 && w >= 160) ms += ms_ssim(er.recon[t], frames[t]);
    }
    p.bpp = bits / (double(frames.size()) * h * w);
    p.psnr = ps / double(frames.size());
    p.msssim = (h >= 160 && w >= 160) ? ms / double(frames.size())
                                      : std::numeric_limits<double>::quiet_NaN();
    pts.push_back(p);
  }
  return pts;
}

std::string rd_csv(const std::vector<QualitySpec>& specs, const std::vector<RdPoint>& pts) {
  if (specs.size() != pts.size()) throw std::invalid_argument("rd_csv needs one spec per point");
  std::string out = "m,n,l,bpp,psnr,msssim\n";
  char buf[160];
  for (size_t i = 0; i < pts.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.6g,%.8g,%.8g,%.8g\n", specs[i].m, specs[i].n,
                  double(specs[i].l), pts[i].bpp, pts[i].psnr, pts[i].msssim);
    out += buf;
  }
  return out;
}

std::string propagation_csv(const PropagationReport& rep) {
  std::string out = "frame,unified_psnr,residual_psnr\n";
  char buf[96];
  for (size_t t = 0; t < rep.unified.psnr.size(); ++t) {
    std::snprintf(buf, sizeof buf, "%zu,%.8g,%.8g\n", t, rep.unified.psnr[t],
                  rep.residual.psnr[t]);
    out += buf;
  }
  return out;
}

std::string line_chart_svg(const std::string& xlabel, const std::string& ylabel,
                           const std::vector<ChartSeries>& series) {
  constexpr int kW = 640, kH = 420, kL = 72, kR = 24, kT = 24, kB = 52;
  double xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;
  bool first = true;
  for (const ChartSeries& s : series)
    for (size_t i = 0; i < s.x.size(); ++i) {
      if (first) {
        xmin = xmax = s.x[i];
        ymin = ymax = s.y[i];
        first = false;
      }
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  if (xmax - xmin < 1e-12) xmax = xmin + 1.0;
  if (ymax - ymin < 1e-12) ymax = ymin + 1.0;
  const double xpad = 0.04 * (xmax - xmin), ypad = 0.06 * (ymax - ymin);
  xmin -= xpad;
  xmax += xpad;
  ymin -= ypad;
  ymax += ypad;
  const auto px = [&](double x) { return kL + (x - xmin) / (xmax - xmin) * (kW - kL - kR); };
  const auto py = [&](double y) { return kH - kB - (y - ymin) / (ymax - ymin) * (kH - kT - kB); };

  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  char buf[256];
  std::string svg;
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" "
                "viewBox=\"0 0 %d %d\">\n",
                kW, kH, kW, kH);
  svg += buf;
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf,
                "<line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\" stroke=\"black\"/>\n"
                "<line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\" stroke=\"black\"/>\n",
                kL, kH - kB, kW - kR, kH - kB, kL, kT, kL, kH - kB);
  svg += buf;
  for (int i = 0; i <= 4; ++i) {
    const double xv = xmin + (xmax - xmin) * i / 4.0, yv = ymin + (ymax - ymin) * i / 4.0;
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.1f\" y1=\"%d\" x2=\"%.1f\" y2=\"%d\" stroke=\"black\"/>\n"
                  "<text x=\"%.1f\" y=\"%d\" font-size=\"12\" text-anchor=\"middle\">%.4g</text>\n",
                  px(xv), kH - kB, px(xv), kH - kB + 6, px(xv), kH - kB + 22, xv);
    svg += buf;
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%d\" y1=\"%.1f\" x2=\"%d\" y2=\"%.1f\" stroke=\"black\"/>\n"
                  "<text x=\"%d\" y=\"%.1f\" font-size=\"12\" text-anchor=\"end\">%.4g</text>\n",
                  kL - 6, py(yv), kL, py(yv), kL - 10, py(yv) + 4, yv);
    svg += buf;
  }
  std::snprintf(buf, sizeof buf,
                "<text x=\"%d\" y=\"%d\" font-size=\"13\" text-anchor=\"middle\">%s</text>\n",
                (kL + kW - kR) / 2, kH - 12, xlabel.c_str());
  svg += buf;
  std::snprintf(buf, sizeof buf,
                "<text x=\"16\" y=\"%d\" font-size=\"13\" text-anchor=\"middle\" "
                "transform=\"rotate(-90 16 %d)\">%s</text>\n",
                (kT + kH - kB) / 2, (kT + kH - kB) / 2, ylabel.c_str());
  svg += buf;
  for (size_t si = 0; si < series.size(); ++si) {
    const char* color = kColors[si % 5];
    std::string pl = "<polyline fill=\"none\" stroke=\"";
    pl += color;
    pl += "\" stroke-width=\"1.5\" points=\"";
    for (size_t i = 0; i < series[si].x.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.1f,%.1f ", px(series[si].x[i]), py(series[si].y[i]));
      pl += buf;
    }
    pl += "\"/>\n";
    svg += pl;
    for (size_t i = 0; i < series[si].x.size(); ++i) {
      std::snprintf(buf, sizeof buf, "<circle cx=\"%.1f\" cy=\"%.1f\" r=\"2.5\" fill=\"%s\"/>\n",
                    px(series[si].x[i]), py(series[si].y[i]), color);
      svg += buf;
    }
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%d\" y1=\"%zu\" x2=\"%d\" y2=\"%zu\" stroke=\"%s\" "
                  "stroke-width=\"2\"/>\n<text x=\"%d\" y=\"%zu\" font-size=\"12\">%s</text>\n",
                  kW - kR - 150, kT + 10 + 18 * si, kW - kR - 126, kT + 10 + 18 * si, color,
                  kW - kR - 120, kT + 14 + 18 * si, series[si].label.c_str());
    svg += buf;
  }
  svg += "</svg>\n";
  return svg;
}

std::string rd_svg(const std::vector<RdPoint>& pts) {
  ChartSeries s;
  s.label = "codec";
  std::vector<RdPoint> sorted = pts;
  std::sort(sorted.begin(), sorted.end(),
            [](const RdPoint& a, const RdPoint& b) { return a.bpp < b.bpp; });
  for (const RdPoint& p : sorted) {
    s.x.push_back(p.bpp);
    s.y.push_back(p.psnr);
  }
  return line_chart_svg("bits per pixel", "PSNR (dB)", {s});
}

std::string propagation_svg(const PropagationReport& rep) {
  ChartSeries u, r;
  u.label = "unified";
  r.label = "residual control";
  for (size_t t = 0; t < rep.unified.psnr.size(); ++t) {
    u.x.push_back(double(t));
    u.y.push_back(rep.unified.psnr[t]);
    r.x.push_back(double(t));
    r.y.push_back(rep.residual.psnr[t]);
  }
  return line_chart_svg("frame", "PSNR (dB)", {u, r});
}

}  // namespace utvc
