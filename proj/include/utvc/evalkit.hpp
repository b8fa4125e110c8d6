#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "utvc/model.hpp"
#include "utvc/pipeline.hpp"
#include "utvc/tensor.hpp"

namespace utvc {

// Metrics and experiment harnesses. Everything here treats frames as (3,H,W)
// tensors in [0,1] and reports rates in bits per pixel (bits / (H*W)).

// 10*log10(1/MSE), capped at 99 dB so identical frames stay finite
double psnr(const Tensor& a, const Tensor& b);

// five-scale MS-SSIM, 11-tap gaussian window (sigma 1.5), K1=0.01 K2=0.03,
// scale exponents (0.0448, 0.2856, 0.3001, 0.2363, 0.1333); channels are
// scored independently and averaged; needs both extents >= 160 so the
// coarsest scale keeps enough pixels
double ms_ssim(const Tensor& a, const Tensor& b);

struct RdPoint {
  double bpp = 0.0;
  double psnr = 0.0;
  double msssim = 0.0;  // NaN when the frames are too small for ms_ssim
};

// average log-rate gap of `test` against `ref` over their common PSNR range,
// in percent: +100 means test spends twice the rate for equal quality.
// Piecewise-cubic Hermite (Fritsch-Carlson) on (PSNR, log bpp), integrated in
// closed form. Curves need >= 4 points with distinct PSNR and overlapping
// ranges; point order does not matter.
double bd_rate(const std::vector<RdPoint>& ref, const std::vector<RdPoint>& test);

// least-squares slope of y against its index, for per-frame quality trends
double fit_slope(const std::vector<double>& y);

// Deliberately drifting control codec: frame differences are quantized to a
// fixed grid and range-coded against the originals (open loop), while the
// reconstruction accumulates the dequantized differences, so quantization
// error compounds frame over frame. A closed correction loop would hide the
// drift, which is exactly what this codec exists to show. Shares the codec's
// rounding convention and range coder; each frame also carries its coded
// sigma as a 32-bit header.
struct BaselineResidualCodec {
  double step = 1.0 / 64.0;  // quantizer bin in pixel units
  struct Result {
    std::vector<Tensor> recon;
    std::vector<uint64_t> bits;  // coded bits per frame, header included
  };
  Result run(const std::vector<Tensor>& frames) const;
};

struct PropagationCurve {
  std::vector<double> psnr;  // per frame
  double mean_bpp = 0.0;
  double slope = 0.0;  // dB per frame
};

// runs the unified codec and the residual control on the same frames, with
// the control's quantizer step searched so mean bpp matches within 5% (the
// leftover mismatch is reported, not hidden)
struct PropagationReport {
  PropagationCurve unified;
  PropagationCurve residual;
  double step = 0.0;          // control step after the bpp match
  double bpp_mismatch = 0.0;  // |residual - unified| / unified mean bpp
};
PropagationReport error_propagation_experiment(const std::vector<Tensor>& frames, const Model& m,
                                               const GopConfig& gc);

// one encode per quality spec; psnr/msssim are means over frames
std::vector<RdPoint> rd_sweep(const std::vector<Tensor>& frames, const Model& m, int gop,
                              const std::vector<QualitySpec>& specs);

// header "m,n,l,bpp,psnr,msssim", one row per point, stable formatting
std::string rd_csv(const std::vector<QualitySpec>& specs, const std::vector<RdPoint>& pts);

// per-frame PSNR table: header "frame,unified_psnr,residual_psnr"
std::string propagation_csv(const PropagationReport& rep);

// self-contained SVG line charts (no external assets)
struct ChartSeries {
  std::string label;
  std::vector<double> x, y;
};
std::string line_chart_svg(const std::string& xlabel, const std::string& ylabel,
                           const std::vector<ChartSeries>& series);
std::string rd_svg(const std::vector<RdPoint>& pts);
std::string propagation_svg(const PropagationReport& rep);

}  // namespace utvc
