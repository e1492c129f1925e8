#include "raincycle/losses.hpp"

#include "raincycle/error.hpp"

namespace raincycle {

LossWeights LossWeights::from_config(const TrainingConfig& cfg) {
  LossWeights w;
  w.adv = cfg.lambda_adv;
  w.att = cfg.lambda_att;
  w.cc = cfg.lambda_cc;
  w.p = cfg.lambda_p;
  w.gmm = cfg.lambda_gmm;
  w.r = cfg.lambda_r;
  w.id = cfg.lambda_id;
  w.en_adv = cfg.enable_adv;
  w.en_att = cfg.enable_att;
  w.en_cc = cfg.enable_cc;
  w.en_p = cfg.enable_p;
  w.en_gmm = cfg.enable_gmm;
  w.en_r = cfg.enable_r;
  w.en_id = cfg.enable_id;
  return w;
}

Tensor sample_attention_target(const std::vector<int>& shape, double stddev,
                               const std::string& mode, Rng& rng) {
  Tensor t(shape, 0.5);
  if (mode == "constant") return t;
  for (double& v : t.data) v = rng.truncated_normal(0.5, stddev, 0.0, 1.0);
  return t;
}

Var attention_loss(Tape& t, Var mask_r, Var mask_n, Var target_r) {
  const Var rainy = t.mse(mask_r, target_r);
  const Var clean = t.mean(t.square(mask_n));
  return t.add(rainy, clean);
}

AdvPair adversarial_losses(Tape& t, const std::vector<Var>& d_real,
                           const std::vector<Var>& d_fake) {
  if (d_real.empty() || d_real.size() != d_fake.size()) {
    throw DimensionError("adversarial_losses: real/fake scale counts differ");
  }
  for (const auto& group : {d_real, d_fake}) {
    for (Var v : group) {
      if (!t.val(v).all_finite()) {
        throw NumericError("adversarial_losses: non-finite discriminator score");
      }
    }
  }
  const double inv_scales = 1.0 / static_cast<double>(d_real.size());
  Var d_total = t.leaf(Tensor::scalar(0.0));
  Var g_total = t.leaf(Tensor::scalar(0.0));
  for (size_t s = 0; s < d_real.size(); ++s) {
    const Var real = t.clamp(d_real[s], kScoreClamp, 1.0 - kScoreClamp);
    const Var fake = t.clamp(d_fake[s], kScoreClamp, 1.0 - kScoreClamp);
    const Var d_term =
        t.sub(t.scale(t.mean(t.log_(real)), -1.0),
              t.mean(t.log_(t.add_const(t.scale(fake, -1.0), 1.0))));
    const Var g_term = t.scale(t.mean(t.log_(fake)), -1.0);
    d_total = t.add(d_total, t.scale(d_term, inv_scales));
    g_total = t.add(g_total, t.scale(g_term, inv_scales));
  }
  return {d_total, g_total};
}

Var adversarial_g_loss(Tape& t, const std::vector<Var>& d_fake) {
  if (d_fake.empty()) throw DimensionError("adversarial_g_loss: no score maps");
  for (Var v : d_fake) {
    if (!t.val(v).all_finite()) {
      throw NumericError("adversarial_g_loss: non-finite discriminator score");
    }
  }
  const double inv_scales = 1.0 / static_cast<double>(d_fake.size());
  Var total = t.leaf(Tensor::scalar(0.0));
  for (Var v : d_fake) {
    const Var fake = t.clamp(v, kScoreClamp, 1.0 - kScoreClamp);
    total = t.add(total, t.scale(t.mean(t.log_(fake)), -inv_scales));
  }
  return total;
}

Var cycle_loss(Tape& t, Var r, Var r_tilde, Var n, Var n_tilde) {
  return t.add(t.mae(r, r_tilde), t.mae(n, n_tilde));
}

Var perceptual_loss(Tape& t, Var n_r, Var r, const PerceptualExtractor& extractor) {
  return t.mse(extractor.features(t, n_r), extractor.features(t, r));
}

Var reconstructive_loss(Tape& t, Var mask_r, Var n_r, Var r) {
  const Tensor& m = t.val(mask_r);
  const Tensor& x = t.val(n_r);
  if (m.ndim() != 3 || m.dim(0) != 1 || m.dim(1) != x.dim(1) || m.dim(2) != x.dim(2)) {
    throw DimensionError("reconstructive_loss: mask " + m.shape_str() +
                         " misaligned with image " + x.shape_str());
  }
  require_same_shape(x, t.val(r), "reconstructive_loss");
  const Var streak = t.scale(t.repeat_ch(mask_r, x.dim(0)), 2.0);
  return t.mean(t.square(t.sub(t.add(streak, n_r), r)));
}

Var total_loss(Tape& t, const LossTerms& terms, const LossWeights& w) {
  for (double lam : {w.adv, w.att, w.cc, w.p, w.gmm, w.r, w.id}) {
    if (lam < 0.0) throw ConfigError("total_loss: weights must be >= 0");
  }
  Var total = t.leaf(Tensor::scalar(0.0));
  auto acc = [&](bool on, Var term, double lam) {
    if (!on) return;
    if (!term.valid()) throw ConfigError("total_loss: enabled term not computed");
    total = t.add(total, t.scale(term, lam));
  };
  acc(w.en_adv, terms.adv, w.adv);
  acc(w.en_att, terms.att, w.att);
  acc(w.en_cc, terms.cc, w.cc);
  acc(w.en_p, terms.p, w.p);
  acc(w.en_gmm, terms.gmm, w.gmm);
  acc(w.en_r, terms.r, w.r);
  acc(w.en_id, terms.id, w.id);
  return total;
}

}  // namespace raincycle
