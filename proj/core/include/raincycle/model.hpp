#pragma once

#include <string>
#include <vector>

#include "raincycle/config.hpp"
#include "raincycle/serialize.hpp"
#include "raincycle/tape.hpp"

namespace raincycle {

// gain 2 suits layers feeding ReLU, gain 1 the sigmoid/tanh heads
Tensor gaussian_init(const std::vector<int>& shape, int fan_in, double gain, Rng& rng);

struct Conv2dLayer {
  Parameter w, b;
  int stride = 1;
  int pad = 1;

  Conv2dLayer() = default;
  Conv2dLayer(const std::string& name, int oc, int ic, int k, int stride_, int pad_,
              double gain, Rng& rng);
  Var apply(Tape& t, Var x);
  void collect(std::vector<Parameter*>& out);
};

// Gates are 3x3 same-padding convolutions over concat(x, H_prev), fused into
// one conv with 4*width output channels (order i, f, g, o). The candidate
// gate activation is sigmoid by default, tanh optionally.
struct ConvLstmCell {
  Conv2dLayer gates;
  int width = 0;
  bool candidate_tanh = false;

  ConvLstmCell() = default;
  ConvLstmCell(const std::string& name, int width, bool candidate_tanh_, Rng& rng);
  struct Out {
    Var h, c;
  };
  // h/c start as zero leaves made by the caller
  Out step(Tape& t, Var x, Var h_prev, Var c_prev);
  void collect(std::vector<Parameter*>& out);
};

// Dual-path unit: identity + conv stack residual path, summed with a dense
// path whose concatenated features pass a 1x1 projection. Zero weights make
// it an identity map.
struct HybridBlock {
  std::vector<Conv2dLayer> res;
  std::vector<Conv2dLayer> dense;
  Conv2dLayer proj;

  HybridBlock() = default;
  HybridBlock(const std::string& name, int width, int res_layers, int dense_layers, Rng& rng);
  Var apply(Tape& t, Var x);
  void collect(std::vector<Parameter*>& out);
};

struct UarseStage {
  Conv2dLayer in_proj;  // image+mask channels down to the working width
  HybridBlock hybrid;
  ConvLstmCell lstm;
  Conv2dLayer out_conv;  // width -> 1, feeds the sigmoid

  void collect(std::vector<Parameter*>& out);
};

struct UarseOutput {
  Var final_mask;
  std::vector<Var> stage_masks;
};

// Recurrent streak extractor. All stages share the ConvLSTM state chain;
// mask_0 is 0.5 everywhere and H_0 = C_0 = 0.
struct AttentionExtractor {
  std::vector<UarseStage> stages;
  int width = 0;

  AttentionExtractor() = default;
  AttentionExtractor(const std::string& name, const TrainingConfig& cfg, Rng& rng);
  UarseOutput forward(Tape& t, Var img);
  void collect(std::vector<Parameter*>& out);
};

// 16 Conv-ReLU blocks: 8 encoder (3 of them stride 2), 8 decoder with
// nearest-neighbor upsampling and channel-concat skips, then a tanh head.
// Spatial dims must be divisible by 8.
struct UnetGenerator {
  std::vector<Conv2dLayer> enc;  // e1..e8
  std::vector<Conv2dLayer> dec;  // d1..d8
  Conv2dLayer head;

  UnetGenerator() = default;
  UnetGenerator(const std::string& name, int width, Rng& rng);
  Var forward(Tape& t, Var mask, Var img);
  void collect(std::vector<Parameter*>& out);
};

// Three scales over an average-pool pyramid; per scale three stride-2
// convolutions and a 1x1 sigmoid head. Input must be at least 16x16.
struct MultiScaleDiscriminator {
  struct Scale {
    Conv2dLayer c1, c2, c3, head;
  };
  std::vector<Scale> scales;

  MultiScaleDiscriminator() = default;
  MultiScaleDiscriminator(const std::string& name, int width, Rng& rng);
  std::vector<Var> forward(Tape& t, Var img);
  void collect(std::vector<Parameter*>& out);
};

// Fixed (never trained) 4-layer conv feature map used by the perceptual
// loss. Weights come from a seeded init or from a named-tensor archive.
struct PerceptualExtractor {
  std::vector<Tensor> w, b;  // 4 layers
  std::vector<int> stride;

  static PerceptualExtractor fixed(int width, uint64_t seed);
  static PerceptualExtractor from_archive(const std::string& path);
  Var features(Tape& t, Var img) const;
};

struct ModelBundle {
  AttentionExtractor uarse;  // one shared extractor serves both branches
  UnetGenerator g_n, g_r;
  MultiScaleDiscriminator d_n, d_r;

  ModelBundle() = default;
  explicit ModelBundle(const TrainingConfig& cfg);

  std::vector<Parameter*> generator_params();  // uarse + both generators
  std::vector<Parameter*> discriminator_params();
  std::vector<Parameter*> all_params();

  Archive to_archive(uint64_t cfg_hash) const;
  void load_from(const Archive& a);  // shapes must match the constructed bundle
};

struct TranslateForward {
  Var n_r, r_n, att_r, att_n;
};
struct TranslateBackward {
  Var r_tilde, n_tilde, att_n_r, att_r_n;
};

// n_r = G_N(Att(r), r), r_n = G_R(Att(n), n). The generator callables are
// template parameters so tests can swap in stand-ins (e.g. identity maps).
template <typename GN, typename GR>
TranslateForward translate_forward_with(Tape& t, AttentionExtractor& uarse, GN&& g_n,
                                        GR&& g_r, Var r, Var n) {
  TranslateForward out;
  out.att_r = uarse.forward(t, r).final_mask;
  out.att_n = uarse.forward(t, n).final_mask;
  out.n_r = g_n(t, out.att_r, r);
  out.r_n = g_r(t, out.att_n, n);
  return out;
}

template <typename GN, typename GR>
TranslateBackward translate_backward_with(Tape& t, AttentionExtractor& uarse, GN&& g_n,
                                          GR&& g_r, Var n_r, Var r_n) {
  TranslateBackward out;
  out.att_n_r = uarse.forward(t, n_r).final_mask;
  out.att_r_n = uarse.forward(t, r_n).final_mask;
  out.r_tilde = g_r(t, out.att_n_r, n_r);
  out.n_tilde = g_n(t, out.att_r_n, r_n);
  return out;
}

TranslateForward translate_forward(Tape& t, ModelBundle& bundle, Var r, Var n);
TranslateBackward translate_backward(Tape& t, ModelBundle& bundle, Var n_r, Var r_n);

void zero_parameters(const std::vector<Parameter*>& params);
int64_t parameter_count(const std::vector<Parameter*>& params);

}  // namespace raincycle
