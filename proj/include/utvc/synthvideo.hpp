#pragma once
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "utvc/motion.hpp"
#include "utvc/tensor.hpp"

namespace utvc {

// Synthetic clips for training and regression: procedural base images run
// through eight scripted per-frame transforms, plus quarter-pel translation
// clips with ground-truth flow. Generation is a pure function of (spec,
// seed), so regenerating a corpus yields byte-identical files. Denominators
// in the formulas are the nominal 32-frame schedule and stay fixed even when
// a clip is longer or shorter.

enum class PatternKind {
  Sharpening,  // unsharp mask: x + (x - gauss(x)), sigma = t/32 + 1
  Lightening,  // add t/32
  Zooming,     // pan right by 100*(t/32) px, shrink about the center by 0.98^t
  Fading,      // blend toward mid-gray with weight t/32
  Blurring,    // box filter of size 2*floor(5t/64) + 1
  Darkening,   // scale by 1 - t/32
  Pulsing,     // brightness alternates 1.0 / 0.9 with period 2
  Shaking,     // seeded integer shifts, at most 20 px on either axis
};

PatternKind pattern_from_name(const std::string& name);
const char* pattern_name(PatternKind kind);

struct PatternSpec {
  PatternKind kind = PatternKind::Lightening;
  Tensor base;        // (3,H,W) in [0,1]
  int frames = 32;
  uint64_t seed = 0;  // consumed by shaking only
};

// frame t is the base image transformed per the formula for its kind; frames
// never chain off each other, so there is no drift however long the clip.
// Blurs clamp at the edges; gaussian kernels run to a radius of 3 sigma.
std::vector<Tensor> gen_pattern(const PatternSpec& spec);

// the shift sequence used by shaking (dx then dy per frame, each uniform in
// [-20, 20]), exposed so tests and the manifest agree with the generator;
// frame t samples the base at (x + dx, y + dy) with edge clamp
std::vector<std::pair<int, int>> shake_offsets(uint64_t seed, int frames);

// formula parameters of frame t, e.g. "sigma=1.5" or "dx=-3 dy=7"
std::string pattern_params(const PatternSpec& spec, int t);

// procedural base images, deterministic in the seed
Tensor base_noise(int h, int w, uint64_t seed);     // smoothed multi-octave value noise
Tensor base_gradient(int h, int w, uint64_t seed);  // oriented two-color ramp
Tensor base_checker(int h, int w, uint64_t seed);   // colored checkerboard

struct TranslationClip {
  std::vector<Tensor> frames;    // frames[t](x) = base(x + v*t), one resample each
  std::vector<FlowField> flows;  // flows[t] maps frame t+1 back to frame t: constant v
};

// velocity components must be multiples of 1/4 so the motion stays exact on
// the quarter-pel grid the flow coder uses
TranslationClip gen_translation(const Tensor& base, float vx, float vy, int frames);

struct SynthConfig {
  int height = 64;
  int width = 64;
  int frames = 32;
  uint64_t seed = 1;
};

// writes <dir>/<clip>/frame_NNN.ppm for one clip per pattern plus three
// translation clips with flow_NNN.flo2 ground truth, and <dir>/manifest.txt
// listing every frame's parameters; returns clip names in manifest order
std::vector<std::string> write_synth_corpus(const std::string& dir, const SynthConfig& cfg);

}  // namespace utvc
