#include "utvc/model.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace utvc {

namespace {
constexpr int kConfigLen = 16;

Tensor config_tensor(const ModelConfig& c) {
  std::vector<float> v = {
      c.transform.kind == TransformKind::TinyConv ? 1.0f : 0.0f,
      static_cast<float>(c.transform.p),
      static_cast<float>(c.transform.latent_c),
      static_cast<float>(c.transform.hidden_c),
      static_cast<float>(c.qcmoe.channels),
      static_cast<float>(c.qcmoe.experts),
      static_cast<float>(c.qcmoe.active),
      static_cast<float>(c.align.latent_c),
      static_cast<float>(c.align.offsets),
      c.align.residual_coarse ? 1.0f : 0.0f,
      static_cast<float>(c.entropy.latent_c),
      static_cast<float>(c.entropy.hyper_c),
      static_cast<float>(c.entropy.z_c),
      static_cast<float>(c.entropy.hyper_f),
      static_cast<float>(c.entropy.tcm_c),
      static_cast<float>(c.entropy.fuse_hidden)};
  return Tensor({kConfigLen}, std::move(v));
}

ModelConfig config_from_tensor(const Tensor& v) {
  if (v.numel() != kConfigLen) throw std::runtime_error("model: config vector has wrong length");
  auto iv = [&](int i) { return static_cast<int>(v[i]); };
  ModelConfig c;
  c.transform.kind = iv(0) ? TransformKind::TinyConv : TransformKind::BlockDct;
  c.transform.p = iv(1);
  c.transform.latent_c = iv(2);
  c.transform.hidden_c = iv(3);
  c.qcmoe.channels = iv(4);
  c.qcmoe.experts = iv(5);
  c.qcmoe.active = iv(6);
  c.align.latent_c = iv(7);
  c.align.offsets = iv(8);
  c.align.residual_coarse = iv(9) != 0;
  c.entropy.latent_c = iv(10);
  c.entropy.hyper_c = iv(11);
  c.entropy.z_c = iv(12);
  c.entropy.hyper_f = iv(13);
  c.entropy.tcm_c = iv(14);
  c.entropy.fuse_hidden = iv(15);
  return c;
}

void check_widths(const ModelConfig& cfg) {
  const int C = cfg.transform.channels();
  if (cfg.qcmoe.channels != C || cfg.align.latent_c != C || cfg.entropy.latent_c != C)
    throw std::invalid_argument("model: latent channel widths disagree across blocks");
}
}  // namespace

Model init_model(const ModelConfig& cfg, uint64_t seed) {
  check_widths(cfg);
  Model m;
  m.cfg = cfg;
  Rng root(seed);
  Rng rt = root.fork(1), re = root.fork(2), rd = root.fork(3), ra = root.fork(4),
      rp = root.fork(5);
  if (cfg.transform.kind == TransformKind::TinyConv)
    m.transform = make_tiny_conv_params(cfg.transform, rt);
  m.qc_enc = make_qcmoe_params(cfg.qcmoe, re);
  m.qc_dec = make_qcmoe_params(cfg.qcmoe, rd);
  m.align = make_align_params(cfg.align, ra);
  m.entropy = make_entropy_params(cfg.entropy, rp);
  const int C = cfg.transform.channels();
  m.logq = Tensor({kQualityAnchors, C});
  const float anchors[kQualityAnchors] = {0.5f, 1.0f, 2.0f, 4.0f};
  for (int i = 0; i < kQualityAnchors; ++i)
    for (int c = 0; c < C; ++c) m.logq.at(i, c) = std::log(anchors[i]);
  return m;
}

std::vector<std::pair<std::string, Tensor*>> named_tensors(Model& m) {
  std::vector<std::pair<std::string, Tensor*>> out;
  auto add = [&](const std::string& n, Tensor& t) {
    if (t.numel() > 0) out.emplace_back(n, &t);
  };
  add("transform/enc_w1", m.transform.enc_w1);
  add("transform/enc_b1", m.transform.enc_b1);
  add("transform/enc_w2", m.transform.enc_w2);
  add("transform/enc_b2", m.transform.enc_b2);
  add("transform/dec_w1", m.transform.dec_w1);
  add("transform/dec_b1", m.transform.dec_b1);
  add("transform/dec_w2", m.transform.dec_w2);
  add("transform/dec_b2", m.transform.dec_b2);
  auto add_qc = [&](const std::string& p, QcmoeParams& q) {
    add(p + "/r_w1", q.r_w1);
    add(p + "/r_b1", q.r_b1);
    add(p + "/r_w2", q.r_w2);
    add(p + "/r_b2", q.r_b2);
    for (size_t k = 0; k < q.e_w1.size(); ++k) {
      const std::string e = p + "/e" + std::to_string(k);
      add(e + "_w1", q.e_w1[k]);
      add(e + "_b1", q.e_b1[k]);
      add(e + "_w2", q.e_w2[k]);
      add(e + "_b2", q.e_b2[k]);
    }
  };
  add_qc("qcmoe_enc", m.qc_enc);
  add_qc("qcmoe_dec", m.qc_dec);
  add("align/ltmr_w", m.align.ltmr_w);
  add("align/ltmr_b", m.align.ltmr_b);
  add("align/pq", m.align.pq);
  add("align/pk", m.align.pk);
  add("align/pv", m.align.pv);
  add("align/mlp_w1", m.align.mlp_w1);
  add("align/mlp_b1", m.align.mlp_b1);
  add("align/mlp_w2", m.align.mlp_w2);
  add("align/mlp_b2", m.align.mlp_b2);
  add("align/fuse_w", m.align.fuse_w);
  add("align/fuse_b", m.align.fuse_b);
  add("entropy/ha_w1", m.entropy.ha_w1);
  add("entropy/ha_b1", m.entropy.ha_b1);
  add("entropy/ha_w2", m.entropy.ha_w2);
  add("entropy/ha_b2", m.entropy.ha_b2);
  add("entropy/hs_w1", m.entropy.hs_w1);
  add("entropy/hs_b1", m.entropy.hs_b1);
  add("entropy/hs_w2", m.entropy.hs_w2);
  add("entropy/hs_b2", m.entropy.hs_b2);
  add("entropy/hs_w3", m.entropy.hs_w3);
  add("entropy/hs_b3", m.entropy.hs_b3);
  add("entropy/tcm_w1", m.entropy.tcm_w1);
  add("entropy/tcm_b1", m.entropy.tcm_b1);
  add("entropy/tcm_w2", m.entropy.tcm_w2);
  add("entropy/tcm_b2", m.entropy.tcm_b2);
  add("entropy/g1_w1", m.entropy.g1_w1);
  add("entropy/g1_b1", m.entropy.g1_b1);
  add("entropy/g1_wt", m.entropy.g1_wt);
  add("entropy/g1_w2", m.entropy.g1_w2);
  add("entropy/g1_b2", m.entropy.g1_b2);
  add("entropy/g2_w1", m.entropy.g2_w1);
  add("entropy/g2_b1", m.entropy.g2_b1);
  add("entropy/g2_wt", m.entropy.g2_wt);
  add("entropy/g2_w2", m.entropy.g2_w2);
  add("entropy/g2_b2", m.entropy.g2_b2);
  add("entropy/z_loc", m.entropy.z_loc);
  add("entropy/z_logscale", m.entropy.z_logscale);
  add("quality/logq", m.logq);
  return out;
}

NamedTensors model_records(const Model& m) {
  NamedTensors records;
  records.emplace_back("config/v", config_tensor(m.cfg));
  auto named = named_tensors(const_cast<Model&>(m));
  for (auto& [name, t] : named) records.emplace_back(name, *t);
  return records;
}

Model model_from_records(const NamedTensors& records) {
  if (records.empty() || records.front().first != "config/v")
    throw std::runtime_error("model: first record must be config/v");
  Model m = init_model(config_from_tensor(records.front().second), 0);
  auto named = named_tensors(m);
  std::map<std::string, Tensor*> by_name;
  for (auto& [name, t] : named) by_name[name] = t;
  for (size_t i = 1; i < records.size(); ++i) {
    const auto& [name, t] = records[i];
    auto it = by_name.find(name);
    if (it == by_name.end()) throw std::runtime_error("model: unknown record " + name);
    if (t.shape() != it->second->shape())
      throw std::runtime_error("model: record " + name + " has shape " + t.shape_str() +
                               ", expected " + it->second->shape_str());
    *it->second = t;
    by_name.erase(it);
  }
  if (!by_name.empty())
    throw std::runtime_error("model: checkpoint is missing " + by_name.begin()->first);
  return m;
}

void save_model(const std::string& path, const Model& m) {
  save_checkpoint(path, model_records(m));
}

Model load_model(const std::string& path) { return model_from_records(load_checkpoint(path)); }

uint64_t model_hash(const Model& m) { return checkpoint_hash(model_records(m)); }

Tensor quality_logq(const Model& model, const QualitySpec& qs) {
  if (qs.m < 1 || qs.m > kQualityAnchors || qs.n < 1 || qs.n > kQualityAnchors)
    throw std::invalid_argument("quality: anchor index must be in 1..4");
  if (!(qs.l >= 0.0f && qs.l <= 1.0f))
    throw std::invalid_argument("quality: interpolation weight must be in [0, 1]");
  const int C = model.logq.dim(1);
  auto row = [&](int i) {
    Tensor r({C});
    for (int c = 0; c < C; ++c) r[c] = model.logq.at(i - 1, c);
    return r;
  };
  if (qs.m == qs.n) return row(qs.m);
  return interpolate_quality(row(qs.m), row(qs.n), qs.l);
}

}  // namespace utvc
