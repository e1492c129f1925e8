#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace raincycle {

// Every knob of the system in one flat struct. Parsed from line-oriented
// key = value text; unknown keys are rejected. Defaults are the
// paper-faithful training protocol.
struct TrainingConfig {
  // optimizer and schedule
  int epochs = 400;
  double lr = 1e-4;
  int lr_decay_start = 200;  // linear decay to 0 between here and `epochs`
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 1e-4;
  int batch_size = 1;

  // data and augmentation
  std::string data_root = "data";
  int crop = 216;
  double flip_probability = 0.5;

  // model shape
  int stages = 6;
  int uarse_width = 32;
  int gen_width = 32;
  int disc_width = 32;
  int hybrid_res_layers = 2;
  int hybrid_dense_layers = 2;
  std::string lstm_candidate_activation = "sigmoid";  // sigmoid | tanh

  // loss weights and ablation switches
  double lambda_adv = 1.0;
  double lambda_att = 10.0;
  double lambda_cc = 10.0;
  double lambda_p = 0.01;
  double lambda_gmm = 10.0;
  double lambda_r = 10.0;
  bool enable_adv = true;
  bool enable_att = true;
  bool enable_cc = true;
  bool enable_p = true;
  bool enable_gmm = true;
  bool enable_r = true;
  double lambda_id = 0.1;  // optional CycleGAN-style identity term
  bool enable_id = false;

  // attention prior
  double att_prior_std = 0.15;
  std::string att_prior_mode = "sample";  // sample | constant

  // streak prior
  int gmm_k = 3;
  int gmm_refit_interval = 1;  // epochs between EM refits
  int gmm_em_iters = 20;

  // perceptual extractor
  std::string perceptual_mode = "fixed";  // fixed | archive
  std::string perceptual_archive;
  int perceptual_width = 16;
  uint64_t perceptual_seed = 7;

  // bookkeeping
  uint64_t seed = 1;
  int checkpoint_interval = 50;  // epochs between checkpoint writes
  bool metric_luma = false;      // PSNR/SSIM on luma instead of RGB

  // synthetic dataset oracle
  int synth_images = 20;     // clean bases per training domain
  int synth_test_pairs = 10;
  int synth_size = 256;
  double rain_density = 3000.0;  // streaks per megapixel
  double rain_len_min = 8.0;
  double rain_len_max = 20.0;
  double rain_angle_min = 70.0;  // degrees from the x axis
  double rain_angle_max = 110.0;
  double rain_width = 1.5;
  double rain_intensity_min = 0.15;
  double rain_intensity_max = 0.5;
};

TrainingConfig parse_config_text(const std::string& text);
TrainingConfig load_config(const std::string& path);
void apply_override(TrainingConfig& cfg, const std::string& key, const std::string& value);
// "key=value" form used by the CLI's repeatable --set flag
void apply_override_kv(TrainingConfig& cfg, const std::string& kv);
void validate_config(const TrainingConfig& cfg);

// Canonical full-field snapshot; also the hash input.
std::string effective_config_text(const TrainingConfig& cfg);
uint64_t config_hash(const TrainingConfig& cfg);  // FNV-1a 64 of the snapshot

// Loss-subset presets: base, base+p, base+p+att, base+p+att+gmm, total.
void apply_loss_preset(TrainingConfig& cfg, const std::string& preset);
std::vector<std::string> loss_preset_names();

uint64_t fnv1a64(const void* data, size_t size);

}  // namespace raincycle
