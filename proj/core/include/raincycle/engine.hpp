#pragma once

#include <string>
#include <vector>

#include "raincycle/data.hpp"
#include "raincycle/losses.hpp"
#include "raincycle/metrics.hpp"

namespace raincycle {

// Adam with decoupled weight decay on weight (not bias) parameters. Moments
// live on the parameters; this holds hyperparameters and the step counter.
struct Adam {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
  int64_t steps = 0;

  static Adam from_config(const TrainingConfig& cfg);
  static void zero_grad(const std::vector<Parameter*>& params);
  static void scale_grad(const std::vector<Parameter*>& params, double s);
  void step(const std::vector<Parameter*>& params, double lr);
};

// Constant until lr_decay_start, then strictly decreasing linear ramp that
// reaches 0 one epoch past the final one. 1-based epochs.
double lr_at_epoch(const TrainingConfig& cfg, int epoch);

struct LossBreakdown {
  double adv = 0.0;  // generator-side adversarial term (what enters total)
  double att = 0.0;
  double cc = 0.0;
  double p = 0.0;
  double gmm = 0.0;
  double r = 0.0;
  double id = 0.0;
  double total = 0.0;
  double d_loss = 0.0;  // discriminator objective, logged separately
};

struct Checkpoint {
  TrainingConfig cfg;  // parsed back from the embedded snapshot
  int epochs_done = 0;
  int64_t opt_g_steps = 0;
  int64_t opt_d_steps = 0;
  GmmModel gmm;
  Archive archive;
};

void save_checkpoint(const std::string& path, const TrainingConfig& cfg,
                     ModelBundle& bundle, const Adam& opt_g, const Adam& opt_d,
                     int epochs_done, const GmmModel& gmm);
Checkpoint load_checkpoint(const std::string& path);

struct Trainer {
  TrainingConfig cfg;
  ModelBundle bundle;
  Adam opt_g, opt_d;
  PerceptualExtractor perceptual;
  GmmModel gmm;
  int epochs_done = 0;
  std::string last_checkpoint;

  explicit Trainer(const TrainingConfig& cfg_);

  // One optimizer step over a batch: discriminators first on detached fakes,
  // then the joint extractor/generator update through the refreshed
  // discriminators. Appends r - n_r residuals to `pool` when given.
  LossBreakdown train_step(const std::vector<std::pair<Image, Image>>& batch, int epoch,
                           int step_in_epoch, std::vector<double>* pool);

  // Full run. Writes train-log.csv, em-trajectory.csv and periodic
  // checkpoints under out_dir. Returns the final checkpoint path.
  std::string train(const std::string& out_dir);

  // Restores parameters, moments, counters and the streak prior. The
  // checkpoint must carry the same effective config.
  void resume_from(const Checkpoint& ckpt);
};

struct DerainResult {
  Image derained;  // [-1,1]
  Image mask;      // 1 channel, raw [0,1] attention values
};

DerainResult derain_with(ModelBundle& bundle, const Image& rainy);
DerainResult derain(const Checkpoint& ckpt, const Image& rainy);
ModelBundle bundle_from_checkpoint(const Checkpoint& ckpt);

// For each clean PNG writes G_R(Att(n), n) under rain/ and the normalized
// clean image under norain/ with the same filename, plus manifest.json.
void rainmake(const Checkpoint& ckpt, const std::string& clean_dir,
              const std::string& out_root);

// Derains root/rain and scores against root/norain pairs.
MetricReport evaluate(const Checkpoint& ckpt, const std::string& pairs_root);

}  // namespace raincycle
