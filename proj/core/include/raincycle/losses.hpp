#pragma once

#include <vector>

#include "raincycle/config.hpp"
#include "raincycle/gmm.hpp"
#include "raincycle/model.hpp"
#include "raincycle/tape.hpp"

namespace raincycle {

struct LossWeights {
  double adv = 1.0, att = 10.0, cc = 10.0, p = 0.01, gmm = 10.0, r = 10.0, id = 0.1;
  bool en_adv = true, en_att = true, en_cc = true, en_p = true, en_gmm = true, en_r = true,
       en_id = false;

  static LossWeights from_config(const TrainingConfig& cfg);
};

// Truncated-Gaussian target for rainy-branch masks (zeros serve the clean
// branch). mode "constant" pins the target at the 0.5 mean instead.
Tensor sample_attention_target(const std::vector<int>& shape, double stddev,
                               const std::string& mode, Rng& rng);

// mean((mask_r - target_r)^2) + mean(mask_n^2); target injected so tests can
// pin it
Var attention_loss(Tape& t, Var mask_r, Var mask_n, Var target_r);

struct AdvPair {
  Var d_loss, g_loss;
};
// One discriminator's real/fake score maps, averaged over scales. d_loss is
// the classic cross-entropy pair; g_loss the non-saturating -log D(fake).
AdvPair adversarial_losses(Tape& t, const std::vector<Var>& d_real,
                           const std::vector<Var>& d_fake);

// Just the non-saturating generator side, for update phases where real
// scores are not needed.
Var adversarial_g_loss(Tape& t, const std::vector<Var>& d_fake);

constexpr double kScoreClamp = 1e-7;

Var cycle_loss(Tape& t, Var r, Var r_tilde, Var n, Var n_tilde);

Var perceptual_loss(Tape& t, Var n_r, Var r, const PerceptualExtractor& extractor);

// mean((2*mask + n_r - r)^2); the factor 2 rescales the [0,1] mask onto the
// [-1,1] image residual range
Var reconstructive_loss(Tape& t, Var mask_r, Var n_r, Var r);

struct LossTerms {
  Var adv, att, cc, p, gmm, r, id;  // invalid Var when the term is disabled
};

Var total_loss(Tape& t, const LossTerms& terms, const LossWeights& w);

}  // namespace raincycle
