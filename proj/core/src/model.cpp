#include "raincycle/model.hpp"

#include <cmath>

#include "raincycle/error.hpp"

namespace raincycle {

Tensor gaussian_init(const std::vector<int>& shape, int fan_in, double gain, Rng& rng) {
  Tensor t(shape);
  const double stddev = std::sqrt(gain / static_cast<double>(fan_in));
  for (double& v : t.data) v = rng.normal(0.0, stddev);
  return t;
}

Conv2dLayer::Conv2dLayer(const std::string& name, int oc, int ic, int k, int stride_,
                         int pad_, double gain, Rng& rng)
    : w(name + ".w", gaussian_init({oc, ic, k, k}, ic * k * k, gain, rng), true),
      b(name + ".b", Tensor({oc}), false),
      stride(stride_),
      pad(pad_) {}

Var Conv2dLayer::apply(Tape& t, Var x) {
  return t.conv2d(x, t.param(w), t.param(b), stride, pad);
}

void Conv2dLayer::collect(std::vector<Parameter*>& out) {
  out.push_back(&w);
  out.push_back(&b);
}

ConvLstmCell::ConvLstmCell(const std::string& name, int width_, bool candidate_tanh_, Rng& rng)
    : gates(name + ".gates", 4 * width_, 2 * width_, 3, 1, 1, 1.0, rng),
      width(width_),
      candidate_tanh(candidate_tanh_) {}

ConvLstmCell::Out ConvLstmCell::step(Tape& t, Var x, Var h_prev, Var c_prev) {
  require_same_shape(t.val(x), t.val(h_prev), "conv_lstm_step");
  require_same_shape(t.val(h_prev), t.val(c_prev), "conv_lstm_step");
  const Var xc = t.concat_ch({x, h_prev});
  const Var pre = gates.apply(t, xc);
  const Var i = t.sigmoid(t.slice_ch(pre, 0, width));
  const Var f = t.sigmoid(t.slice_ch(pre, width, 2 * width));
  const Var g_pre = t.slice_ch(pre, 2 * width, 3 * width);
  const Var g = candidate_tanh ? t.tanh_(g_pre) : t.sigmoid(g_pre);
  const Var o = t.sigmoid(t.slice_ch(pre, 3 * width, 4 * width));
  const Var c = t.add(t.mul(f, c_prev), t.mul(i, g));
  const Var h = t.mul(o, t.tanh_(c));
  return {h, c};
}

void ConvLstmCell::collect(std::vector<Parameter*>& out) { gates.collect(out); }

HybridBlock::HybridBlock(const std::string& name, int width, int res_layers,
                         int dense_layers, Rng& rng) {
  for (int i = 0; i < res_layers; ++i) {
    res.emplace_back(name + ".res" + std::to_string(i), width, width, 3, 1, 1, 2.0, rng);
  }
  for (int i = 0; i < dense_layers; ++i) {
    dense.emplace_back(name + ".dense" + std::to_string(i), width, width * (i + 1), 3, 1, 1,
                       2.0, rng);
  }
  proj = Conv2dLayer(name + ".proj", width, width * dense_layers, 1, 1, 0, 2.0, rng);
}

Var HybridBlock::apply(Tape& t, Var x) {
  Var r = x;
  for (size_t i = 0; i < res.size(); ++i) {
    r = res[i].apply(t, r);
    if (i + 1 < res.size()) r = t.relu(r);
  }
  std::vector<Var> feats;
  Var cur = x;
  for (size_t i = 0; i < dense.size(); ++i) {
    feats.push_back(t.relu(dense[i].apply(t, cur)));
    if (i + 1 < dense.size()) {
      std::vector<Var> cat{x};
      cat.insert(cat.end(), feats.begin(), feats.end());
      cur = t.concat_ch(cat);
    }
  }
  const Var d = proj.apply(t, feats.size() == 1 ? feats[0] : t.concat_ch(feats));
  return t.add(t.add(x, r), d);
}

void HybridBlock::collect(std::vector<Parameter*>& out) {
  for (Conv2dLayer& c : res) c.collect(out);
  for (Conv2dLayer& c : dense) c.collect(out);
  proj.collect(out);
}

void UarseStage::collect(std::vector<Parameter*>& out) {
  in_proj.collect(out);
  hybrid.collect(out);
  lstm.collect(out);
  out_conv.collect(out);
}

AttentionExtractor::AttentionExtractor(const std::string& name, const TrainingConfig& cfg,
                                       Rng& rng)
    : width(cfg.uarse_width) {
  const bool cand_tanh = cfg.lstm_candidate_activation == "tanh";
  for (int s = 0; s < cfg.stages; ++s) {
    const std::string sn = name + ".s" + std::to_string(s);
    UarseStage st;
    st.in_proj = Conv2dLayer(sn + ".in_proj", width, 4, 3, 1, 1, 2.0, rng);
    st.hybrid = HybridBlock(sn + ".hybrid", width, cfg.hybrid_res_layers,
                            cfg.hybrid_dense_layers, rng);
    st.lstm = ConvLstmCell(sn + ".lstm", width, cand_tanh, rng);
    st.out_conv = Conv2dLayer(sn + ".out", 1, width, 3, 1, 1, 1.0, rng);
    stages.push_back(std::move(st));
  }
}

UarseOutput AttentionExtractor::forward(Tape& t, Var img) {
  const Tensor& x = t.val(img);
  if (x.ndim() != 3 || x.dim(0) != 3) {
    throw DimensionError("uarse: input must be [3,H,W], got " + x.shape_str());
  }
  const int h = x.dim(1), w = x.dim(2);
  Var hv = t.leaf(Tensor({width, h, w}));
  Var cv = t.leaf(Tensor({width, h, w}));
  Var mask = t.leaf(Tensor({1, h, w}, 0.5));
  UarseOutput out;
  for (UarseStage& st : stages) {
    const Var x4 = t.concat_ch({img, mask});
    const Var p = t.relu(st.in_proj.apply(t, x4));
    const Var hb = st.hybrid.apply(t, p);
    const ConvLstmCell::Out s = st.lstm.step(t, hb, hv, cv);
    hv = s.h;
    cv = s.c;
    mask = t.sigmoid(st.out_conv.apply(t, hv));
    out.stage_masks.push_back(mask);
  }
  out.final_mask = mask;
  return out;
}

void AttentionExtractor::collect(std::vector<Parameter*>& out) {
  for (UarseStage& st : stages) st.collect(out);
}

UnetGenerator::UnetGenerator(const std::string& name, int w, Rng& rng) {
  auto conv = [&](const char* n, int oc, int ic, int stride) {
    return Conv2dLayer(name + "." + n, oc, ic, 3, stride, 1, 2.0, rng);
  };
  enc.push_back(conv("e0", w, 4, 1));
  enc.push_back(conv("e1", w, w, 1));
  enc.push_back(conv("e2", 2 * w, w, 2));
  enc.push_back(conv("e3", 2 * w, 2 * w, 1));
  enc.push_back(conv("e4", 4 * w, 2 * w, 2));
  enc.push_back(conv("e5", 4 * w, 4 * w, 1));
  enc.push_back(conv("e6", 8 * w, 4 * w, 2));
  enc.push_back(conv("e7", 8 * w, 8 * w, 1));
  dec.push_back(conv("d0", 8 * w, 8 * w, 1));
  dec.push_back(conv("d1", 4 * w, 12 * w, 1));  // after up + skip from e5
  dec.push_back(conv("d2", 4 * w, 4 * w, 1));
  dec.push_back(conv("d3", 2 * w, 6 * w, 1));  // after up + skip from e3
  dec.push_back(conv("d4", 2 * w, 2 * w, 1));
  dec.push_back(conv("d5", w, 3 * w, 1));  // after up + skip from e1
  dec.push_back(conv("d6", w, w, 1));
  dec.push_back(conv("d7", w, w, 1));
  head = Conv2dLayer(name + ".head", 3, w, 3, 1, 1, 1.0, rng);
}

Var UnetGenerator::forward(Tape& t, Var mask, Var img) {
  const Tensor& m = t.val(mask);
  const Tensor& x = t.val(img);
  if (x.ndim() != 3 || x.dim(0) != 3) {
    throw DimensionError("generator: image must be [3,H,W], got " + x.shape_str());
  }
  if (m.ndim() != 3 || m.dim(0) != 1 || m.dim(1) != x.dim(1) || m.dim(2) != x.dim(2)) {
    throw DimensionError("generator: mask " + m.shape_str() + " misaligned with image " +
                         x.shape_str());
  }
  if (x.dim(1) % 8 != 0 || x.dim(2) % 8 != 0) {
    throw DimensionError("generator: spatial dims must be multiples of 8, got " +
                         x.shape_str());
  }
  Var v = t.concat_ch({mask, img});
  std::vector<Var> skips;
  for (size_t i = 0; i < enc.size(); ++i) {
    v = t.relu(enc[i].apply(t, v));
    if (i == 1 || i == 3 || i == 5) skips.push_back(v);  // e1, e3, e5
  }
  v = t.relu(dec[0].apply(t, v));
  v = t.concat_ch({t.upsample_nearest2(v), skips[2]});
  v = t.relu(dec[1].apply(t, v));
  v = t.relu(dec[2].apply(t, v));
  v = t.concat_ch({t.upsample_nearest2(v), skips[1]});
  v = t.relu(dec[3].apply(t, v));
  v = t.relu(dec[4].apply(t, v));
  v = t.concat_ch({t.upsample_nearest2(v), skips[0]});
  v = t.relu(dec[5].apply(t, v));
  v = t.relu(dec[6].apply(t, v));
  v = t.relu(dec[7].apply(t, v));
  return t.tanh_(head.apply(t, v));
}

void UnetGenerator::collect(std::vector<Parameter*>& out) {
  for (Conv2dLayer& c : enc) c.collect(out);
  for (Conv2dLayer& c : dec) c.collect(out);
  head.collect(out);
}

MultiScaleDiscriminator::MultiScaleDiscriminator(const std::string& name, int w, Rng& rng) {
  for (int s = 0; s < 3; ++s) {
    const std::string sn = name + ".scale" + std::to_string(s);
    Scale sc;
    sc.c1 = Conv2dLayer(sn + ".c1", w, 3, 3, 2, 1, 2.0, rng);
    sc.c2 = Conv2dLayer(sn + ".c2", 2 * w, w, 3, 2, 1, 2.0, rng);
    sc.c3 = Conv2dLayer(sn + ".c3", 4 * w, 2 * w, 3, 2, 1, 2.0, rng);
    sc.head = Conv2dLayer(sn + ".head", 1, 4 * w, 1, 1, 0, 1.0, rng);
    scales.push_back(std::move(sc));
  }
}

std::vector<Var> MultiScaleDiscriminator::forward(Tape& t, Var img) {
  const Tensor& x = t.val(img);
  if (x.ndim() != 3 || x.dim(0) != 3) {
    throw DimensionError("discriminator: input must be [3,H,W], got " + x.shape_str());
  }
  if (x.dim(1) < 16 || x.dim(2) < 16) {
    throw DimensionError("discriminator: input " + x.shape_str() +
                         " too small for 3 downscales (needs >= 16x16)");
  }
  std::vector<Var> out;
  Var level = img;
  for (size_t s = 0; s < scales.size(); ++s) {
    if (s > 0) level = t.avg_pool2(level);
    Scale& sc = scales[s];
    Var v = t.leaky_relu(sc.c1.apply(t, level), 0.2);
    v = t.leaky_relu(sc.c2.apply(t, v), 0.2);
    v = t.leaky_relu(sc.c3.apply(t, v), 0.2);
    out.push_back(t.sigmoid(sc.head.apply(t, v)));
  }
  return out;
}

void MultiScaleDiscriminator::collect(std::vector<Parameter*>& out) {
  for (Scale& sc : scales) {
    sc.c1.collect(out);
    sc.c2.collect(out);
    sc.c3.collect(out);
    sc.head.collect(out);
  }
}

PerceptualExtractor PerceptualExtractor::fixed(int width, uint64_t seed) {
  Rng rng(Rng::derive(seed, 0x9e37, 0x7c15));
  PerceptualExtractor e;
  const int w = width;
  const int chans[5] = {3, w, w, 2 * w, 2 * w};
  const int strides[4] = {1, 2, 1, 2};
  for (int l = 0; l < 4; ++l) {
    const int ic = chans[l], oc = chans[l + 1];
    e.w.push_back(gaussian_init({oc, ic, 3, 3}, ic * 9, 2.0, rng));
    e.b.push_back(Tensor({oc}));
    e.stride.push_back(strides[l]);
  }
  return e;
}

PerceptualExtractor PerceptualExtractor::from_archive(const std::string& path) {
  const Archive a = load_archive(path);
  PerceptualExtractor e;
  const int strides[4] = {1, 2, 1, 2};
  int prev_oc = 3;
  for (int l = 0; l < 4; ++l) {
    const std::string base = "layer" + std::to_string(l);
    const Tensor& w = a.find(base + ".w");
    const Tensor& b = a.find(base + ".b");
    if (w.ndim() != 4 || w.dim(1) != prev_oc) {
      throw ConfigError("perceptual archive: layer " + std::to_string(l) +
                        " expects input channels " + std::to_string(prev_oc) + ", got " +
                        w.shape_str());
    }
    if (b.ndim() != 1 || b.dim(0) != w.dim(0)) {
      throw ConfigError("perceptual archive: bias shape mismatch at layer " +
                        std::to_string(l));
    }
    prev_oc = w.dim(0);
    e.w.push_back(w);
    e.b.push_back(b);
    e.stride.push_back(strides[l]);
  }
  return e;
}

Var PerceptualExtractor::features(Tape& t, Var img) const {
  const Tensor& x = t.val(img);
  if (x.ndim() != 3 || x.dim(0) != w[0].dim(1)) {
    throw DimensionError("perceptual: input channels " + x.shape_str() +
                         " do not match extractor");
  }
  Var v = img;
  for (size_t l = 0; l < w.size(); ++l) {
    v = t.relu(t.conv2d(v, t.leaf(w[l]), t.leaf(b[l]), stride[l], 1));
  }
  return v;
}

ModelBundle::ModelBundle(const TrainingConfig& cfg) {
  Rng rng(Rng::derive(cfg.seed, 0x1417, 0x0001));
  uarse = AttentionExtractor("uarse", cfg, rng);
  g_n = UnetGenerator("g_n", cfg.gen_width, rng);
  g_r = UnetGenerator("g_r", cfg.gen_width, rng);
  d_n = MultiScaleDiscriminator("d_n", cfg.disc_width, rng);
  d_r = MultiScaleDiscriminator("d_r", cfg.disc_width, rng);
}

std::vector<Parameter*> ModelBundle::generator_params() {
  std::vector<Parameter*> out;
  uarse.collect(out);
  g_n.collect(out);
  g_r.collect(out);
  return out;
}

std::vector<Parameter*> ModelBundle::discriminator_params() {
  std::vector<Parameter*> out;
  d_n.collect(out);
  d_r.collect(out);
  return out;
}

std::vector<Parameter*> ModelBundle::all_params() {
  std::vector<Parameter*> out = generator_params();
  std::vector<Parameter*> d = discriminator_params();
  out.insert(out.end(), d.begin(), d.end());
  return out;
}

Archive ModelBundle::to_archive(uint64_t cfg_hash) const {
  Archive a;
  a.config_hash = cfg_hash;
  for (Parameter* p : const_cast<ModelBundle*>(this)->all_params()) {
    a.tensors.push_back({p->name, p->value});
  }
  return a;
}

void ModelBundle::load_from(const Archive& a) {
  for (Parameter* p : all_params()) {
    const Tensor& t = a.find(p->name);
    if (t.shape != p->value.shape) {
      throw IoError("archive: tensor '" + p->name + "' has shape " + t.shape_str() +
                    ", model expects " + p->value.shape_str());
    }
    p->value = t;
  }
}

TranslateForward translate_forward(Tape& t, ModelBundle& bundle, Var r, Var n) {
  auto gn = [&bundle](Tape& tp, Var m, Var i) { return bundle.g_n.forward(tp, m, i); };
  auto gr = [&bundle](Tape& tp, Var m, Var i) { return bundle.g_r.forward(tp, m, i); };
  return translate_forward_with(t, bundle.uarse, gn, gr, r, n);
}

TranslateBackward translate_backward(Tape& t, ModelBundle& bundle, Var n_r, Var r_n) {
  auto gn = [&bundle](Tape& tp, Var m, Var i) { return bundle.g_n.forward(tp, m, i); };
  auto gr = [&bundle](Tape& tp, Var m, Var i) { return bundle.g_r.forward(tp, m, i); };
  return translate_backward_with(t, bundle.uarse, gn, gr, n_r, r_n);
}

void zero_parameters(const std::vector<Parameter*>& params) {
  for (Parameter* p : params) p->value.fill(0.0);
}

int64_t parameter_count(const std::vector<Parameter*>& params) {
  int64_t n = 0;
  for (Parameter* p : params) n += p->value.numel();
  return n;
}

}  // namespace raincycle
