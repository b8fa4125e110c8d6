#pragma once
#include <string>
#include <utility>
#include <vector>

#include "utvc/align.hpp"
#include "utvc/checkpoint.hpp"
#include "utvc/entropy.hpp"
#include "utvc/scaling.hpp"
#include "utvc/transform.hpp"

namespace utvc {

// One parameter bundle drives the whole codec: the shared transform, the
// encoder- and decoder-side scaling mixtures, temporal alignment, the
// entropy nets, and the four anchor quality vectors. Everything is
// enumerable by name for checkpoint IO and optimizer loops.

constexpr int kQualityAnchors = 4;

struct ModelConfig {
  TransformConfig transform;
  QcmoeConfig qcmoe;
  AlignConfig align;
  EntropyConfig entropy;
};

struct Model {
  ModelConfig cfg;
  TransformParams transform;  // empty tensors when the transform is BlockDct
  QcmoeParams qc_enc, qc_dec;
  AlignParams align;
  EntropyParams entropy;
  Tensor logq;  // (4, C) anchor quality vectors in the log domain
};

// channel widths must agree across the four configs; anchors open at
// q = {0.5, 1, 2, 4} so index 4 is the finest quantization step
Model init_model(const ModelConfig& cfg, uint64_t seed);

// stable (name, tensor) enumeration; names are unique, order is fixed
std::vector<std::pair<std::string, Tensor*>> named_tensors(Model& m);

// container records = one config vector + every named tensor
void save_model(const std::string& path, const Model& m);
Model load_model(const std::string& path);
Model model_from_records(const NamedTensors& records);
NamedTensors model_records(const Model& m);
uint64_t model_hash(const Model& m);

// operating point: anchor index when m == n, otherwise geometric
// interpolation between anchors m and n with weight l on m
struct QualitySpec {
  int m = 4;
  int n = 4;
  float l = 1.0f;
};

// per-channel log-quality vector for a spec; indices in 1..4, l in [0,1]
Tensor quality_logq(const Model& model, const QualitySpec& qs);

}  // namespace utvc
